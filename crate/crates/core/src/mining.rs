//! Discrete-round mining on an MEC server.
//!
//! Each interaction round, every active user draws `M_i` fresh distinct
//! nonces, the server merges them with the fair ordering and hashes them one
//! at a time. The first successful hash ends the block. Success is either a
//! Bernoulli draw with probability `2^-h` (analytic mode) or a real SHA-256
//! target check (real-hash mode).

use std::collections::HashSet;
use std::io::Write;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::difficulty::{min_rounds, run_difficulty_blocks, BlockContext, DifficultySchedule, TimingParams};
use crate::error::{invalid, Error, Result};
use crate::fair_ordering::{NonceSequence, OrderingState};
use crate::game::{SystemParams, UserProfile};
use crate::sizes::SizeSampler;

/// Bit width of a SHA-256 digest.
pub const DIGEST_BITS: u32 = 256;

/// Length of the random header payload drawn per block.
pub const PAYLOAD_BYTES: usize = 32;

/// Header bytes `X` plus the nonce being tried.
///
/// Serialized as `X ‖ nonce` with the nonce as 8 big-endian bytes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BlockHeader {
    pub payload: Vec<u8>,
    pub nonce: u64,
}

impl BlockHeader {
    pub fn serialize(&self) -> Vec<u8> {
        let mut bytes = Vec::with_capacity(self.payload.len() + 8);
        bytes.extend_from_slice(&self.payload);
        bytes.extend_from_slice(&self.nonce.to_be_bytes());
        bytes
    }

    pub fn digest(&self) -> [u8; 32] {
        header_digest(&self.payload, self.nonce)
    }
}

fn header_digest(payload: &[u8], nonce: u64) -> [u8; 32] {
    let mut hasher = Sha256::new();
    hasher.update(payload);
    hasher.update(nonce.to_be_bytes());
    hasher.finalize().into()
}

/// `digest ≤ 2^exponent`, reading the digest as a big-endian integer.
fn digest_at_most_pow2(digest: &[u8; 32], exponent: i64) -> bool {
    if exponent >= i64::from(DIGEST_BITS) {
        return true;
    }
    if exponent < 0 {
        return digest.iter().all(|&b| b == 0);
    }
    let mut leading_zeros = 0u32;
    for &byte in digest {
        if byte == 0 {
            leading_zeros += 8;
        } else {
            leading_zeros += byte.leading_zeros();
            break;
        }
    }
    let bits_above = DIGEST_BITS - exponent as u32;
    if leading_zeros >= bits_above {
        return true;
    }
    // equality: only bit `exponent` set
    if leading_zeros + 1 != bits_above {
        return false;
    }
    let first = (leading_zeros / 8) as usize;
    let mut rest = digest[first..].to_vec();
    rest[0] &= !(0x80u8 >> (leading_zeros % 8));
    rest.iter().all(|&b| b == 0)
}

/// `SHA-256(X ‖ nonce) ≤ 2^(L − h)`, with `h` rounded to the nearest integer.
pub fn hash_check(header: &BlockHeader, h: f64, nonce_space_bits: u32) -> bool {
    meets_target(&header.payload, header.nonce, h, nonce_space_bits)
}

fn meets_target(payload: &[u8], nonce: u64, h: f64, nonce_space_bits: u32) -> bool {
    let exponent = i64::from(nonce_space_bits) - h.round() as i64;
    digest_at_most_pow2(&header_digest(payload, nonce), exponent)
}

/// Succeeds with probability `2^-h`.
pub fn bernoulli_check<R: Rng + ?Sized>(h: f64, rng: &mut R) -> bool {
    rng.gen::<f64>() < (-h).exp2()
}

/// How a single hash attempt is judged.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum HashMode {
    Analytic,
    RealHash,
}

/// Outcome of mining one block.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MiningTrace {
    /// `user_id` of the winning profile.
    pub winner: Option<usize>,
    pub hashes_executed: u64,
    pub rounds_executed: u64,
    /// Reward per input profile; only the winner's entry is non-zero.
    pub rewards: Vec<f64>,
    /// `t0·hashes + β·rounds`.
    pub model_time_s: f64,
    pub h: f64,
    /// `Σ M_i`, the nonces served per full round.
    pub nonces_per_round: u64,
}

impl MiningTrace {
    pub fn total_reward(&self) -> f64 {
        self.rewards.iter().sum()
    }

    /// Hashes executed in units of full rounds.
    pub fn fractional_rounds(&self) -> f64 {
        self.hashes_executed as f64 / self.nonces_per_round as f64
    }
}

/// `count` distinct values from `[0, 2^bits)`, ascending.
fn draw_nonces<R: Rng + ?Sized>(rng: &mut R, count: usize, bits: u32) -> Vec<u64> {
    let mut nonces: Vec<u64> = if bits < 64 {
        rand::seq::index::sample(rng, 1usize << bits, count)
            .into_iter()
            .map(|n| n as u64)
            .collect()
    } else {
        let mut seen = HashSet::with_capacity(count);
        while seen.len() < count {
            seen.insert(rng.next_u64());
        }
        seen.into_iter().collect()
    };
    nonces.sort_unstable();
    nonces
}

/// Mines one block with the given active users and nonce lengths.
pub fn simulate_block(
    params: &SystemParams,
    profiles: &[UserProfile],
    timing: &TimingParams,
    mode: HashMode,
    seed: u64,
) -> Result<MiningTrace> {
    params.validate()?;
    if profiles.is_empty() {
        return Err(Error::NoMiners);
    }
    let space = f64::from(params.nonce_bits).exp2();
    if let Some(p) = profiles
        .iter()
        .find(|p| p.nonce_length == 0 || p.nonce_length as f64 > space - 1.0)
    {
        return Err(invalid(
            "M",
            format!("user {} nonce length {} outside [1, 2^L - 1]", p.user_id, p.nonce_length),
        ));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut base = [0u8; PAYLOAD_BYTES];
    rng.fill_bytes(&mut base);
    let payloads: Vec<Vec<u8>> = profiles
        .iter()
        .map(|p| {
            let mut x = base.to_vec();
            x.extend_from_slice(&(p.user_id as u64).to_be_bytes());
            x
        })
        .collect();

    let nonces_per_round: u64 = profiles.iter().map(|p| p.nonce_length).sum();
    let mut hashes = 0u64;
    let mut rounds = 0u64;
    let winner = loop {
        rounds += 1;
        let sequences = profiles
            .iter()
            .enumerate()
            .map(|(k, p)| {
                let nonces = draw_nonces(&mut rng, p.nonce_length as usize, params.nonce_bits);
                NonceSequence::new(k, nonces, params.nonce_bits)
            })
            .collect::<Result<Vec<_>>>()?;
        let mut ordering = OrderingState::new(sequences, rng.gen())?;
        let mut found = None;
        while let Some(entry) = ordering.advance() {
            hashes += 1;
            let success = match mode {
                HashMode::Analytic => bernoulli_check(params.difficulty, &mut rng),
                HashMode::RealHash => meets_target(&payloads[entry.user], entry.nonce, params.difficulty, DIGEST_BITS),
            };
            if success {
                found = Some(entry.user);
                break;
            }
        }
        if let Some(k) = found {
            break k;
        }
    };

    let mut rewards = vec![0.0; profiles.len()];
    rewards[winner] = params.reward(profiles[winner].block_size);
    Ok(MiningTrace {
        winner: Some(profiles[winner].user_id),
        hashes_executed: hashes,
        rounds_executed: rounds,
        rewards,
        model_time_s: timing.hash_time * hashes as f64 + timing.round_time * rounds as f64,
        h: params.difficulty,
        nonces_per_round,
    })
}

/// Which round count drives block time in a campaign.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BlockTimeModel {
    /// `β·R_min` of the block's active users.
    Expected,
    /// `β` times the rounds the simulated block actually took.
    Sampled,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Campaign {
    pub traces: Vec<MiningTrace>,
    pub schedule: DifficultySchedule,
}

/// Resamples sizes, solves the equilibrium, mines and updates the difficulty
/// every `G` blocks. Starts at `params.difficulty`.
#[allow(clippy::too_many_arguments)]
pub fn simulate_campaign(
    params: &SystemParams,
    timing: &TimingParams,
    num_blocks: usize,
    sampler: &SizeSampler,
    mode: HashMode,
    time_model: BlockTimeModel,
    seed: u64,
) -> Result<Campaign> {
    let mut traces = Vec::with_capacity(num_blocks);
    let mut model = |ctx: BlockContext<'_>| -> Result<f64> {
        let profiles: Vec<UserProfile> = ctx
            .solution
            .active
            .iter()
            .zip(&ctx.solution.m_star)
            .map(|(&j, &m)| UserProfile {
                user_id: j,
                block_size: ctx.sizes[j],
                nonce_length: m,
            })
            .collect();
        let trace = simulate_block(ctx.params, &profiles, timing, mode, ctx.rng.gen())?;
        let rounds = match time_model {
            BlockTimeModel::Expected => min_rounds(ctx.params, ctx.active_sizes)?,
            BlockTimeModel::Sampled => trace.rounds_executed as f64,
        };
        traces.push(trace);
        Ok(rounds)
    };
    let schedule = run_difficulty_blocks(params.difficulty, num_blocks, sampler, params, timing, &mut model, seed)?;
    Ok(Campaign { traces, schedule })
}

/// `block,winner,hashes,rounds,reward,model_time_s,h`.
pub fn write_traces_csv<W: Write>(writer: W, traces: &[MiningTrace]) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    wtr.write_record(["block", "winner", "hashes", "rounds", "reward", "model_time_s", "h"])?;
    for (block, t) in traces.iter().enumerate() {
        wtr.write_record([
            block.to_string(),
            t.winner.map_or_else(String::new, |w| w.to_string()),
            t.hashes_executed.to_string(),
            t.rounds_executed.to_string(),
            t.total_reward().to_string(),
            t.model_time_s.to_string(),
            t.h.to_string(),
        ])?;
    }
    wtr.flush()?;
    Ok(())
}

//! Fair merging of per-user nonce sequences.
//!
//! An MEC server receives one ascending nonce sequence per user and must pick
//! a single public service order. The greedy merge picks, at every position,
//! the user whose top nonce keeps the served-count distribution closest (in
//! KL divergence) to the length-proportional target `M_i / ΣM`. A weighted
//! round-robin schedule is provided as a baseline.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};

/// Relative tolerance under which two divergences count as a tie.
pub const TIE_EPSILON: f64 = 1e-12;

/// Tolerance on `Σ = 1` accepted by [`kl_divergence`].
const MASS_TOLERANCE: f64 = 1e-9;

/// One user's nonce demand, ordered from small to large.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NonceSequence {
    user_id: usize,
    nonces: Vec<u64>,
}

impl NonceSequence {
    /// Validates that `nonces` is non-empty, strictly increasing and fits in
    /// `nonce_bits` bits.
    pub fn new(user_id: usize, nonces: Vec<u64>, nonce_bits: u32) -> Result<Self> {
        if nonce_bits == 0 || nonce_bits > 64 {
            return Err(crate::error::invalid("L", format!("nonce bit-length {nonce_bits} not in 1..=64")));
        }
        if nonces.is_empty() {
            return Err(Error::InvalidSequence {
                user_id,
                reason: "sequence is empty".into(),
            });
        }
        if let Some(w) = nonces.windows(2).find(|w| w[0] >= w[1]) {
            return Err(Error::InvalidSequence {
                user_id,
                reason: format!("not strictly ascending at {} -> {}", w[0], w[1]),
            });
        }
        if nonce_bits < 64 {
            let limit = 1u64 << nonce_bits;
            if let Some(&n) = nonces.iter().find(|&&n| n >= limit) {
                return Err(Error::InvalidSequence {
                    user_id,
                    reason: format!("nonce {n} exceeds 2^{nonce_bits} - 1"),
                });
            }
        }
        Ok(Self { user_id, nonces })
    }

    pub fn user_id(&self) -> usize {
        self.user_id
    }

    pub fn nonces(&self) -> &[u64] {
        &self.nonces
    }

    pub fn len(&self) -> usize {
        self.nonces.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nonces.is_empty()
    }
}

/// Parses one sequence per line (whitespace-separated ascending integers).
///
/// Blank lines and lines starting with `#` are skipped; user ids are assigned
/// in order of the remaining lines.
pub fn parse_sequences(text: &str, nonce_bits: u32) -> Result<Vec<NonceSequence>> {
    let mut out = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let nonces = line
            .split_whitespace()
            .map(|tok| {
                tok.parse::<u64>().map_err(|e| Error::Parse {
                    line: lineno + 1,
                    reason: format!("`{tok}`: {e}"),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        out.push(NonceSequence::new(out.len(), nonces, nonce_bits)?);
    }
    if out.is_empty() {
        return Err(Error::EmptyInput);
    }
    Ok(out)
}

/// Length-proportional service shares `p_i = M_i / Σ_j M_j`.
#[derive(Debug, Clone, PartialEq)]
pub struct TargetMass(Vec<f64>);

impl TargetMass {
    pub fn from_lengths(lengths: &[usize]) -> Result<Self> {
        if lengths.is_empty() {
            return Err(Error::EmptyInput);
        }
        if let Some(i) = lengths.iter().position(|&m| m == 0) {
            return Err(Error::InvalidSequence {
                user_id: i,
                reason: "nonce length must be at least 1".into(),
            });
        }
        let total: usize = lengths.iter().sum();
        Ok(Self(
            lengths.iter().map(|&m| m as f64 / total as f64).collect(),
        ))
    }

    pub fn probabilities(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// `D(q‖p) = Σ q_i ln(q_i / p_i)` with `0·ln 0 = 0`.
pub fn kl_divergence(q: &[f64], p: &[f64]) -> Result<f64> {
    if q.len() != p.len() {
        return Err(Error::DimensionMismatch {
            expected: p.len(),
            actual: q.len(),
        });
    }
    for (name, dist) in [("q", q), ("p", p)] {
        if dist.iter().any(|&x| !(x >= 0.0)) {
            return Err(Error::InvalidDistribution(format!("{name} has a negative or NaN entry")));
        }
        let sum: f64 = dist.iter().sum();
        if (sum - 1.0).abs() > MASS_TOLERANCE {
            return Err(Error::InvalidDistribution(format!("{name} sums to {sum}")));
        }
    }
    let mut total = 0.0;
    for (index, (&qi, &pi)) in q.iter().zip(p).enumerate() {
        if qi == 0.0 {
            continue;
        }
        if pi == 0.0 {
            return Err(Error::UndefinedDivergence { index });
        }
        total += qi * (qi / pi).ln();
    }
    Ok(total)
}

/// `k·ln(k/M)`, zero at `k = 0`.
fn served_term(k: usize, m: usize) -> f64 {
    if k == 0 {
        0.0
    } else {
        let k = k as f64;
        k * (k / m as f64).ln()
    }
}

fn ties(a: f64, b: f64) -> bool {
    (a - b).abs() <= TIE_EPSILON * 1f64.max(a.abs()).max(b.abs())
}

/// A position in a merged service order. `user` indexes the input list.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct MergedEntry {
    pub user: usize,
    pub nonce: u64,
}

/// Live state of the greedy KL merge.
#[derive(Debug, Clone)]
pub struct OrderingState {
    sequences: Vec<NonceSequence>,
    target: TargetMass,
    served: Vec<usize>,
    remaining: Vec<usize>,
    merged: Vec<MergedEntry>,
    seed: u64,
    rng: ChaCha8Rng,
    // k_i ln(k_i / M_i), cached per user
    served_terms: Vec<f64>,
    total_len: usize,
}

impl OrderingState {
    pub fn new(sequences: Vec<NonceSequence>, seed: u64) -> Result<Self> {
        let served = vec![0; sequences.len()];
        Self::resume(sequences, &served, seed)
    }

    /// Rebuilds a state in which the first `served[i]` nonces of user `i` are
    /// already merged (in user-major order).
    pub fn resume(sequences: Vec<NonceSequence>, served: &[usize], seed: u64) -> Result<Self> {
        if sequences.is_empty() {
            return Err(Error::EmptyInput);
        }
        if served.len() != sequences.len() {
            return Err(Error::DimensionMismatch {
                expected: sequences.len(),
                actual: served.len(),
            });
        }
        let lengths: Vec<usize> = sequences.iter().map(NonceSequence::len).collect();
        let target = TargetMass::from_lengths(&lengths)?;
        let mut merged = Vec::new();
        for (user, (seq, &k)) in sequences.iter().zip(served).enumerate() {
            if k > seq.len() {
                return Err(Error::InvalidSequence {
                    user_id: seq.user_id(),
                    reason: format!("served count {k} exceeds length {}", seq.len()),
                });
            }
            merged.extend(seq.nonces()[..k].iter().map(|&nonce| MergedEntry { user, nonce }));
        }
        Ok(Self {
            remaining: lengths.iter().zip(served).map(|(m, k)| m - k).collect(),
            served_terms: lengths
                .iter()
                .zip(served)
                .map(|(&m, &k)| served_term(k, m))
                .collect(),
            served: served.to_vec(),
            total_len: lengths.iter().sum(),
            target,
            merged,
            seed,
            rng: ChaCha8Rng::seed_from_u64(seed),
            sequences,
        })
    }

    pub fn sequences(&self) -> &[NonceSequence] {
        &self.sequences
    }

    pub fn target(&self) -> &TargetMass {
        &self.target
    }

    /// Per-user served counts `k_i`.
    pub fn served(&self) -> &[usize] {
        &self.served
    }

    /// Per-user remaining counts `l_i`.
    pub fn remaining(&self) -> &[usize] {
        &self.remaining
    }

    pub fn merged(&self) -> &[MergedEntry] {
        &self.merged
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn is_complete(&self) -> bool {
        self.remaining.iter().all(|&l| l == 0)
    }

    pub fn into_merged(self) -> Vec<MergedEntry> {
        self.merged
    }

    /// `Q_i`: the served distribution if user `i`'s top nonce went next.
    pub fn candidate_mass(&self, i: usize) -> Result<Vec<f64>> {
        if i >= self.served.len() {
            return Err(Error::DimensionMismatch {
                expected: self.served.len(),
                actual: i + 1,
            });
        }
        if self.remaining[i] == 0 {
            return Err(Error::UserExhausted(i));
        }
        let denom = (self.served.iter().sum::<usize>() + 1) as f64;
        Ok(self
            .served
            .iter()
            .enumerate()
            .map(|(j, &k)| (k + usize::from(j == i)) as f64 / denom)
            .collect())
    }

    /// `KL(Q_i‖P)` for every user, `None` for exhausted users.
    ///
    /// Evaluated in O(1) per user from the cached `k ln(k/M)` terms:
    /// `KL(Q_i‖P) = (Σ_j k'_j ln(k'_j/M_j)) / (K+1) + ln(ΣM / (K+1))`.
    pub fn candidate_divergences(&self) -> Vec<Option<f64>> {
        let served_total: usize = self.served.iter().sum();
        let denom = (served_total + 1) as f64;
        let base: f64 = self.served_terms.iter().sum();
        let shift = (self.total_len as f64 / denom).ln();
        self.sequences
            .iter()
            .enumerate()
            .map(|(i, seq)| {
                (self.remaining[i] > 0).then(|| {
                    let bumped = served_term(self.served[i] + 1, seq.len());
                    (base - self.served_terms[i] + bumped) / denom + shift
                })
            })
            .collect()
    }

    /// Picks the next user by minimum divergence; ties are broken uniformly
    /// at random from the state's seeded generator.
    pub fn select_next(&mut self) -> Result<usize> {
        let divergences = self.candidate_divergences();
        let best = divergences
            .iter()
            .flatten()
            .copied()
            .fold(f64::INFINITY, f64::min);
        if best.is_infinite() {
            return Err(Error::MergeComplete);
        }
        let tied: Vec<usize> = divergences
            .iter()
            .enumerate()
            .filter_map(|(i, d)| d.filter(|&d| ties(d, best)).map(|_| i))
            .collect();
        Ok(match tied.as_slice() {
            [only] => *only,
            _ => tied[self.rng.gen_range(0..tied.len())],
        })
    }

    /// Moves the selected user's top nonce into the merged order.
    pub fn advance(&mut self) -> Option<MergedEntry> {
        let user = self.select_next().ok()?;
        let seq = &self.sequences[user];
        let entry = MergedEntry {
            user,
            nonce: seq.nonces()[self.served[user]],
        };
        self.served[user] += 1;
        self.remaining[user] -= 1;
        self.served_terms[user] = served_term(self.served[user], seq.len());
        self.merged.push(entry);
        Some(entry)
    }
}

/// Runs the greedy KL merge to completion.
pub fn merge(sequences: Vec<NonceSequence>, seed: u64) -> Result<OrderingState> {
    let mut state = OrderingState::new(sequences, seed)?;
    while state.advance().is_some() {}
    Ok(state)
}

/// Weighted round robin: each cycle serves up to `weights[i]` consecutive
/// nonces of user `i`, in user order, skipping exhausted users.
pub fn wrr_merge(sequences: &[NonceSequence], weights: &[usize]) -> Result<Vec<MergedEntry>> {
    if sequences.is_empty() {
        return Err(Error::EmptyInput);
    }
    if weights.len() != sequences.len() {
        return Err(Error::DimensionMismatch {
            expected: sequences.len(),
            actual: weights.len(),
        });
    }
    if weights.iter().any(|&w| w == 0) {
        return Err(crate::error::invalid("weights", "WRR weights must be positive"));
    }
    let total: usize = sequences.iter().map(NonceSequence::len).sum();
    let mut cursors = vec![0usize; sequences.len()];
    let mut merged = Vec::with_capacity(total);
    while merged.len() < total {
        for (user, (seq, &weight)) in sequences.iter().zip(weights).enumerate() {
            let take = weight.min(seq.len() - cursors[user]);
            merged.extend(
                seq.nonces()[cursors[user]..cursors[user] + take]
                    .iter()
                    .map(|&nonce| MergedEntry { user, nonce }),
            );
            cursors[user] += take;
        }
    }
    Ok(merged)
}

/// Empirical service shares over a prefix of a merged order.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PrefixFairness {
    pub prefix_len: usize,
    pub frequencies: Vec<f64>,
    pub total_variation: f64,
}

/// Frequencies over the first `⌈fraction·|merged|⌉` entries and their total
/// variation distance to `target`.
pub fn prefix_fairness(merged: &[MergedEntry], target: &TargetMass, fraction: f64) -> Result<PrefixFairness> {
    if merged.is_empty() {
        return Err(Error::EmptyInput);
    }
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(crate::error::invalid("fraction", format!("{fraction} not in (0, 1]")));
    }
    let prefix_len = ((fraction * merged.len() as f64).ceil() as usize).clamp(1, merged.len());
    let mut counts = vec![0usize; target.len()];
    for entry in &merged[..prefix_len] {
        let slot = counts.get_mut(entry.user).ok_or(Error::DimensionMismatch {
            expected: target.len(),
            actual: entry.user + 1,
        })?;
        *slot += 1;
    }
    let frequencies: Vec<f64> = counts
        .iter()
        .map(|&c| c as f64 / prefix_len as f64)
        .collect();
    let total_variation = crate::stats::total_variation(&frequencies, target.probabilities());
    Ok(PrefixFairness {
        prefix_len,
        frequencies,
        total_variation,
    })
}

/// Writes `position,user_id,nonce` rows with a header.
pub fn write_merged_csv<W: Write>(writer: W, merged: &[MergedEntry], sequences: &[NonceSequence]) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    wtr.write_record(["position", "user_id", "nonce"])?;
    for (position, entry) in merged.iter().enumerate() {
        let user_id = sequences.get(entry.user).map_or(entry.user, NonceSequence::user_id);
        wtr.write_record([
            position.to_string(),
            user_id.to_string(),
            entry.nonce.to_string(),
        ])?;
    }
    wtr.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn seqs(lengths: &[usize]) -> Vec<NonceSequence> {
        lengths
            .iter()
            .enumerate()
            .map(|(i, &m)| NonceSequence::new(i, (0..m as u64).map(|n| n * 7 + i as u64).collect(), 32).unwrap())
            .collect()
    }

    #[test]
    fn kl_of_identical_distributions_is_zero() {
        let p = [0.1, 0.3, 0.6];
        assert_eq!(kl_divergence(&p, &p).unwrap(), 0.0);
    }

    #[test]
    fn kl_point_mass_against_uniform() {
        let kl = kl_divergence(&[1.0, 0.0], &[0.5, 0.5]).unwrap();
        assert!((kl - std::f64::consts::LN_2).abs() < 1e-15);
    }

    #[test]
    fn kl_two_term_hand_value() {
        // 0.25 ln(1/3) + 0.75 ln 3 = 0.5 ln 3
        let kl = kl_divergence(&[0.25, 0.75], &[0.75, 0.25]).unwrap();
        assert!((kl - 0.549_306_144_334_054_8).abs() < 1e-15);
    }

    #[test]
    fn kl_errors() {
        assert!(matches!(
            kl_divergence(&[1.0], &[0.5, 0.5]),
            Err(Error::DimensionMismatch { .. })
        ));
        assert_eq!(
            kl_divergence(&[0.5, 0.5], &[1.0, 0.0]),
            Err(Error::UndefinedDivergence { index: 1 })
        );
        assert!(matches!(
            kl_divergence(&[0.5, 0.6], &[0.5, 0.5]),
            Err(Error::InvalidDistribution(_))
        ));
    }

    #[test]
    fn candidate_mass_examples() {
        let s = OrderingState::new(seqs(&[2, 2]), 0).unwrap();
        assert_eq!(s.candidate_mass(0).unwrap(), vec![1.0, 0.0]);

        let s = OrderingState::resume(seqs(&[3, 3]), &[1, 2], 0).unwrap();
        assert_eq!(s.candidate_mass(1).unwrap(), vec![0.25, 0.75]);

        let s = OrderingState::resume(seqs(&[5, 6, 8]), &[3, 5, 7], 0).unwrap();
        assert_eq!(s.candidate_mass(0).unwrap(), vec![4.0 / 16.0, 5.0 / 16.0, 7.0 / 16.0]);
    }

    #[test]
    fn candidate_mass_of_exhausted_user_fails() {
        let s = OrderingState::resume(seqs(&[1, 3]), &[1, 0], 0).unwrap();
        assert_eq!(s.candidate_mass(0), Err(Error::UserExhausted(0)));
    }

    #[test]
    fn select_prefers_longer_sequence_first() {
        // KL(Q_1‖P) = ln 4, KL(Q_2‖P) = ln(4/3)
        let mut s = OrderingState::new(seqs(&[1, 3]), 0).unwrap();
        let d = s.candidate_divergences();
        assert!((d[0].unwrap() - 4f64.ln()).abs() < 1e-12);
        assert!((d[1].unwrap() - (4.0f64 / 3.0).ln()).abs() < 1e-12);
        assert_eq!(s.select_next().unwrap(), 1);
    }

    #[test]
    fn symmetric_tie_depends_on_seed_only() {
        let picks: Vec<usize> = (0..64)
            .map(|seed| OrderingState::new(seqs(&[1, 1]), seed).unwrap().select_next().unwrap())
            .collect();
        assert!(picks.contains(&0) && picks.contains(&1));
        for seed in 0..8 {
            let a = OrderingState::new(seqs(&[1, 1]), seed).unwrap().select_next().unwrap();
            let b = OrderingState::new(seqs(&[1, 1]), seed).unwrap().select_next().unwrap();
            assert_eq!(a, b);
        }
    }

    #[test]
    fn three_user_select_matches_brute_force() {
        let mut s = OrderingState::resume(seqs(&[1, 3, 6]), &[0, 1, 2], 0).unwrap();
        let p = s.target().probabilities().to_vec();
        let brute: Vec<f64> = (0..3)
            .map(|i| kl_divergence(&s.candidate_mass(i).unwrap(), &p).unwrap())
            .collect();
        let argmin = (0..3).min_by(|&a, &b| brute[a].total_cmp(&brute[b])).unwrap();
        assert_eq!(argmin, 0);
        assert_eq!(s.select_next().unwrap(), argmin);
    }

    #[test]
    fn complete_state_signals_merge_complete() {
        let mut s = merge(seqs(&[2, 1]), 3).unwrap();
        assert!(s.is_complete());
        assert_eq!(s.select_next(), Err(Error::MergeComplete));
    }

    #[test]
    fn single_user_merge_is_identity() {
        let input = seqs(&[5]);
        let merged = merge(input.clone(), 0).unwrap().into_merged();
        let nonces: Vec<u64> = merged.iter().map(|e| e.nonce).collect();
        assert_eq!(nonces, input[0].nonces());
    }

    #[test]
    fn two_user_merge_conserves_counts() {
        let s = merge(seqs(&[1, 3]), 0).unwrap();
        assert_eq!(s.merged().len(), 4);
        assert_eq!(s.merged().iter().filter(|e| e.user == 0).count(), 1);
        assert_eq!(s.served(), &[1, 3]);
        assert_eq!(s.remaining(), &[0, 0]);
    }

    #[test]
    fn merge_rejects_empty_input() {
        assert_eq!(merge(Vec::new(), 0).unwrap_err(), Error::EmptyInput);
    }

    #[test]
    fn wrr_first_cycle_follows_weights() {
        let merged = wrr_merge(&seqs(&[10, 30, 60]), &[1, 3, 6]).unwrap();
        let users: Vec<usize> = merged[..10].iter().map(|e| e.user).collect();
        assert_eq!(users, vec![0, 1, 1, 1, 2, 2, 2, 2, 2, 2]);
    }

    #[test]
    fn wrr_single_user_and_bursts() {
        let one = seqs(&[4]);
        assert_eq!(wrr_merge(&one, &[3]).unwrap().len(), 4);
        let merged = wrr_merge(&seqs(&[2, 2]), &[2, 2]).unwrap();
        let users: Vec<usize> = merged.iter().map(|e| e.user).collect();
        assert_eq!(users, vec![0, 0, 1, 1]);
    }

    #[test]
    fn wrr_skips_exhausted_users() {
        let merged = wrr_merge(&seqs(&[1, 5]), &[2, 1]).unwrap();
        let users: Vec<usize> = merged.iter().map(|e| e.user).collect();
        assert_eq!(users, vec![0, 1, 1, 1, 1, 1]);
    }

    #[test]
    fn wrr_rejects_bad_weights() {
        assert!(wrr_merge(&seqs(&[1, 1]), &[1, 0]).is_err());
        assert!(wrr_merge(&seqs(&[1, 1]), &[1]).is_err());
        assert_eq!(wrr_merge(&[], &[]).unwrap_err(), Error::EmptyInput);
    }

    #[test]
    fn full_prefix_matches_target() {
        let s = merge(seqs(&[3, 5, 7]), 1).unwrap();
        let f = prefix_fairness(s.merged(), s.target(), 1.0).unwrap();
        assert_eq!(f.prefix_len, 15);
        assert!(f.total_variation < 1e-15);
    }

    #[test]
    fn half_prefix_with_lone_nonce() {
        let target = TargetMass::from_lengths(&[1, 9]).unwrap();
        for seed in 0..4 {
            let s = merge(seqs(&[1, 9]), seed).unwrap();
            let f = prefix_fairness(s.merged(), &target, 0.5).unwrap();
            assert_eq!(f.prefix_len, 5);
            assert!(f.frequencies[0] == 0.0 || f.frequencies[0] == 0.2);
        }
    }

    #[test]
    fn kl_merge_beats_wrr_off_cycle_boundary() {
        // 75 = 7.5 WRR cycles, so WRR overserves user 1 and 2.
        let input = seqs(&[15, 45, 90]);
        let target = TargetMass::from_lengths(&[15, 45, 90]).unwrap();
        let kl = merge(input.clone(), 0).unwrap();
        let wrr = wrr_merge(&input, &[1, 3, 6]).unwrap();
        let a = prefix_fairness(kl.merged(), &target, 0.5).unwrap();
        let b = prefix_fairness(&wrr, &target, 0.5).unwrap();
        assert!(a.total_variation < b.total_variation, "{a:?} vs {b:?}");
    }

    #[test]
    fn prefix_fraction_out_of_range() {
        let target = TargetMass::from_lengths(&[1]).unwrap();
        let merged = [MergedEntry { user: 0, nonce: 0 }];
        assert!(prefix_fairness(&merged, &target, 0.0).is_err());
        assert!(prefix_fairness(&merged, &target, 1.5).is_err());
        assert!(prefix_fairness(&[], &target, 0.5).is_err());
    }

    #[test]
    fn sequence_validation() {
        assert!(NonceSequence::new(0, vec![1, 1], 32).is_err());
        assert!(NonceSequence::new(0, vec![2, 1], 32).is_err());
        assert!(NonceSequence::new(0, vec![], 32).is_err());
        assert!(NonceSequence::new(0, vec![0, 255], 8).is_ok());
        assert!(NonceSequence::new(0, vec![0, 256], 8).is_err());
        assert!(NonceSequence::new(0, vec![u64::MAX], 64).is_ok());
    }

    #[test]
    fn parse_text_sequences() {
        let text = "# users\n1 5 9\n\n2 3\n";
        let parsed = parse_sequences(text, 32).unwrap();
        assert_eq!(parsed.len(), 2);
        assert_eq!(parsed[1].user_id(), 1);
        assert_eq!(parsed[1].nonces(), &[2, 3]);
        assert!(matches!(parse_sequences("1 x", 32), Err(Error::Parse { line: 1, .. })));
        assert_eq!(parse_sequences("\n", 32), Err(Error::EmptyInput));
    }

    #[test]
    fn csv_output_has_header_and_rows() {
        let input = seqs(&[1, 2]);
        let s = merge(input.clone(), 0).unwrap();
        let mut buf = Vec::new();
        write_merged_csv(&mut buf, s.merged(), &input).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "position,user_id,nonce");
        assert_eq!(lines.len(), 4);
    }
}

//! WebAssembly bindings for the browser demo in `www/`.
//!
//! Every export takes plain numbers and returns a JSON string, so the same
//! functions run natively in tests.

use mecpow::difficulty::{calibrated_initial_difficulty, run_difficulty_loop, TimingParams};
use mecpow::fair_ordering::{merge, wrr_merge, MergedEntry, NonceSequence, TargetMass};
use mecpow::game::{access_filter, best_response, Regime};
use mecpow::sizes::SizeSampler;
use mecpow::stats::total_variation;
use mecpow::SystemParams;
use serde::Serialize;
use wasm_bindgen::prelude::*;

fn to_js<T: Serialize>(result: Result<T, mecpow::Error>) -> Result<String, JsError> {
    let value = result.map_err(|e| JsError::new(&e.to_string()))?;
    serde_json::to_string(&value).map_err(|e| JsError::new(&e.to_string()))
}

#[derive(Debug, Serialize)]
pub struct FairnessCurves {
    pub lengths: Vec<usize>,
    pub target: Vec<f64>,
    /// Total variation to the target after every position.
    pub greedy_tv: Vec<f64>,
    pub wrr_tv: Vec<f64>,
    /// The first few positions of each order, as user indices.
    pub greedy_head: Vec<usize>,
    pub wrr_head: Vec<usize>,
}

fn prefix_tv(merged: &[MergedEntry], target: &[f64]) -> Vec<f64> {
    let mut counts = vec![0.0; target.len()];
    merged
        .iter()
        .enumerate()
        .map(|(k, e)| {
            counts[e.user] += 1.0;
            let freq: Vec<f64> = counts.iter().map(|c| c / (k + 1) as f64).collect();
            total_variation(&freq, target)
        })
        .collect()
}

const HEAD: usize = 60;

/// Greedy KL merge vs weighted round robin for the given sequence lengths;
/// WRR weights are the lengths themselves.
pub fn fairness_curves(lengths: &[usize], seed: u64) -> Result<FairnessCurves, mecpow::Error> {
    let sequences = lengths
        .iter()
        .enumerate()
        .map(|(i, &m)| NonceSequence::new(i, (0..m as u64).collect(), 32))
        .collect::<Result<Vec<_>, _>>()?;
    let target = TargetMass::from_lengths(lengths)?;
    let greedy = merge(sequences.clone(), seed)?.into_merged();
    let wrr = wrr_merge(&sequences, lengths)?;
    Ok(FairnessCurves {
        lengths: lengths.to_vec(),
        target: target.probabilities().to_vec(),
        greedy_tv: prefix_tv(&greedy, target.probabilities()),
        wrr_tv: prefix_tv(&wrr, target.probabilities()),
        greedy_head: greedy.iter().take(HEAD).map(|e| e.user).collect(),
        wrr_head: wrr.iter().take(HEAD).map(|e| e.user).collect(),
    })
}

/// Ordering demo. `lengths` is a comma/space separated list of nonce counts.
#[wasm_bindgen(js_name = fairnessCurves)]
pub fn fairness_curves_js(lengths: &str, seed: u64) -> Result<String, JsError> {
    let parsed = lengths
        .split(|c: char| c == ',' || c.is_whitespace())
        .filter(|t| !t.is_empty())
        .map(|t| t.parse::<usize>().map_err(|e| JsError::new(&format!("`{t}`: {e}"))))
        .collect::<Result<Vec<_>, _>>()?;
    to_js(fairness_curves(&parsed, seed))
}

#[derive(Debug, Serialize)]
pub struct Equilibrium {
    pub regime: Regime,
    pub active: Vec<usize>,
    pub m_real: Vec<f64>,
    pub m_star: Vec<u64>,
    pub utilities: Vec<f64>,
    /// `(opponent total, R_1, R_2)` samples for the first two users.
    pub curves: Vec<(f64, f64, f64)>,
}

pub fn equilibrium(params: SystemParams, sizes: &[f64]) -> Result<Equilibrium, mecpow::Error> {
    let solution = access_filter(&params, sizes)?;
    let mut curves = Vec::new();
    if sizes.len() >= 2 {
        let span = 3.0 * solution.m_real.iter().copied().fold(100.0, f64::max);
        for k in 1..=200 {
            let x = span * k as f64 / 200.0;
            curves.push((x, best_response(x, &params, sizes[0])?, best_response(x, &params, sizes[1])?));
        }
    }
    Ok(Equilibrium {
        regime: solution.regime,
        active: solution.active,
        m_real: solution.m_real,
        m_star: solution.m_star,
        utilities: solution.utilities,
        curves,
    })
}

/// Game demo: filtered equilibrium and the first two best-response curves.
#[wasm_bindgen(js_name = equilibrium)]
pub fn equilibrium_js(block_reward: f64, fee_rate: f64, hash_price: f64, difficulty: f64, sizes: Vec<f64>) -> Result<String, JsError> {
    let params = SystemParams {
        block_reward,
        fee_rate,
        hash_price,
        difficulty,
        nonce_bits: 32,
    };
    to_js(equilibrium(params, &sizes))
}

#[derive(Debug, Serialize)]
pub struct BlockTimes {
    pub target_s: f64,
    pub block_times: Vec<f64>,
    pub window_averages: Vec<f64>,
    pub h_history: Vec<f64>,
    pub fraction_within_60s: f64,
}

pub fn block_times(window: usize, num_windows: usize, users: usize, seed: u64) -> Result<BlockTimes, mecpow::Error> {
    let params = SystemParams::default();
    let timing = TimingParams {
        window,
        ..TimingParams::default()
    };
    let sampler = SizeSampler::default_uniform(users);
    let h0 = calibrated_initial_difficulty(&sampler, &params, &timing)?;
    let schedule = run_difficulty_loop(h0, num_windows, &sampler, &params, &timing, seed)?;
    Ok(BlockTimes {
        target_s: schedule.target_block_time_s,
        block_times: schedule.blocktime_history(),
        window_averages: schedule.window_average_times(),
        fraction_within_60s: schedule.fraction_within(60.0),
        h_history: schedule.h_history,
    })
}

/// Difficulty demo: block times under windowed difficulty control.
#[wasm_bindgen(js_name = blockTimes)]
pub fn block_times_js(window: usize, num_windows: usize, users: usize, seed: u64) -> Result<String, JsError> {
    to_js(block_times(window, num_windows, users, seed))
}

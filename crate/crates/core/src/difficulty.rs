//! Expected interaction rounds per block and the windowed difficulty update.
//!
//! With every user at its equilibrium length the MEC serves
//! `M = (N−1)/Σ a_j` nonces per interaction round, while a block needs `2^h`
//! hashes on average. The minimum number of rounds per block is therefore
//! `R_min = Σ_j c·4^h/(B + r·s_j) / (N−1)`, and block time is `β·R_min`.
//! Every `G` blocks the controller picks the `h` that would have put the
//! window's average rounds exactly on the target `R_th`.

use std::io::Write;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::game::{access_filter, GameSolution, SystemParams};
use crate::sizes::SizeSampler;

/// Timing constants of the MEC interaction protocol.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimingParams {
    /// Seconds per hash computation (`t0`).
    pub hash_time: f64,
    /// Seconds per MEC–user interaction round (`β`).
    pub round_time: f64,
    /// Target rounds per block (`R_th`).
    pub target_rounds: f64,
    /// Difficulty adjustment interval in blocks (`G`).
    pub window: usize,
}

impl Default for TimingParams {
    fn default() -> Self {
        Self {
            hash_time: 1e-6,
            round_time: 120.0,
            target_rounds: 5.0,
            window: 10,
        }
    }
}

impl TimingParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.hash_time > 0.0) {
            return Err(invalid("t0", format!("must be > 0, got {}", self.hash_time)));
        }
        if !(self.round_time > 0.0) {
            return Err(invalid("beta", format!("must be > 0, got {}", self.round_time)));
        }
        if !(self.target_rounds > 0.0) {
            return Err(invalid("R_th", format!("must be > 0, got {}", self.target_rounds)));
        }
        if self.window == 0 {
            return Err(invalid("G", "must be >= 1"));
        }
        Ok(())
    }

    /// Target block time `β·R_th`.
    pub fn target_block_time(&self) -> f64 {
        self.round_time * self.target_rounds
    }
}

fn check_block(params: &SystemParams, sizes: &[f64]) -> Result<()> {
    params.validate()?;
    if sizes.len() < 2 {
        return Err(invalid("N", format!("at least 2 users required, got {}", sizes.len())));
    }
    if let Some(s) = sizes.iter().find(|s| !(**s > 0.0)) {
        return Err(invalid("s", format!("block sizes must be positive, got {s}")));
    }
    Ok(())
}

/// `Σ_j c/(B + r·s_j) / (N−1)`: rounds per block divided by `4^h`.
fn rounds_per_unit_difficulty(params: &SystemParams, sizes: &[f64]) -> f64 {
    let sum: f64 = sizes
        .iter()
        .map(|&s| params.hash_price / params.reward(s))
        .sum();
    sum / (sizes.len() - 1) as f64
}

/// Total equilibrium demand `M = (N−1)/Σ_j c·2^h/(B + r·s_j)`.
pub fn total_nonce_demand(params: &SystemParams, sizes: &[f64]) -> Result<f64> {
    check_block(params, sizes)?;
    let ratios: f64 = sizes.iter().map(|&s| params.price_ratio(s)).sum();
    Ok((sizes.len() - 1) as f64 / ratios)
}

/// Mean number of i.i.d. hash trials until the first success, `2^h`.
pub fn expected_hashes_to_success(h: f64) -> f64 {
    h.exp2()
}

/// `R_min = Σ_j c·4^h/(B + r·s_j) / (N−1)`.
pub fn min_rounds(params: &SystemParams, sizes: &[f64]) -> Result<f64> {
    check_block(params, sizes)?;
    Ok((2.0 * params.difficulty).exp2() * rounds_per_unit_difficulty(params, sizes))
}

/// `⌈R_min⌉`, for simulators that run whole rounds.
pub fn min_rounds_ceil(params: &SystemParams, sizes: &[f64]) -> Result<u64> {
    Ok(min_rounds(params, sizes)?.ceil() as u64)
}

/// `β·R_min`, optionally with `R_min` rounded up.
pub fn block_time(params: &SystemParams, sizes: &[f64], timing: &TimingParams, ceiled: bool) -> Result<f64> {
    let rounds = if ceiled {
        min_rounds_ceil(params, sizes)? as f64
    } else {
        min_rounds(params, sizes)?
    };
    Ok(timing.round_time * rounds)
}

fn per_block_rounds(window: &[Vec<f64>], params: &SystemParams) -> Result<Vec<f64>> {
    if window.is_empty() {
        return Err(invalid("G", "window contains no blocks"));
    }
    window.iter().map(|sizes| min_rounds(params, sizes)).collect()
}

/// Mean of the per-block `R_min` over a window of block-size rows.
pub fn avg_rounds(window: &[Vec<f64>], params: &SystemParams) -> Result<f64> {
    let rounds = per_block_rounds(window, params)?;
    Ok(crate::stats::mean(&rounds))
}

/// Population variance (`1/G`) of the per-block `R_min` over a window.
pub fn var_rounds(window: &[Vec<f64>], params: &SystemParams) -> Result<f64> {
    let rounds = per_block_rounds(window, params)?;
    Ok(crate::stats::population_variance(&rounds))
}

/// The `h` at which the window's average rounds equal `R_th`:
/// `h* = ½·log2(G·R_th / Σ_g Σ_j c/(B + r·s_j(g)) / (N_g − 1))`.
///
/// With a constant user count this is `½·log2((N−1)·G·R_th / Σ_g Σ_j c/(B+r·s_j(g)))`.
pub fn update_difficulty(window: &[Vec<f64>], params: &SystemParams, timing: &TimingParams) -> Result<f64> {
    if window.is_empty() {
        return Err(invalid("G", "window contains no blocks"));
    }
    if !(timing.target_rounds > 0.0) {
        return Err(invalid("R_th", "must be > 0"));
    }
    let mut denom = 0.0;
    for sizes in window {
        check_block(params, sizes)?;
        denom += rounds_per_unit_difficulty(params, sizes);
    }
    let arg = window.len() as f64 * timing.target_rounds / denom;
    if !(arg > 0.0 && arg.is_finite()) {
        return Err(Error::Domain(format!("log2 of non-positive or non-finite {arg}")));
    }
    Ok(0.5 * arg.log2())
}

/// What the loop knows when it asks a [`RoundsModel`] for one block.
pub struct BlockContext<'a> {
    pub block: usize,
    pub window_index: usize,
    /// Parameters with the difficulty currently in force.
    pub params: &'a SystemParams,
    /// Sizes of all users sampled for this block.
    pub sizes: &'a [f64],
    /// Equilibrium after dropout filtering; never a crash.
    pub solution: &'a GameSolution,
    /// Sizes of the active users, aligned with `solution.active`.
    pub active_sizes: &'a [f64],
    pub rng: &'a mut ChaCha8Rng,
}

/// Produces the number of interaction rounds a block took.
pub trait RoundsModel {
    fn rounds(&mut self, ctx: BlockContext<'_>) -> Result<f64>;
}

/// Rounds taken as `R_min` of the block's active users (no sampling noise).
#[derive(Debug, Clone, Copy, Default)]
pub struct ExpectedRounds;

impl RoundsModel for ExpectedRounds {
    fn rounds(&mut self, ctx: BlockContext<'_>) -> Result<f64> {
        min_rounds(ctx.params, ctx.active_sizes)
    }
}

impl<F> RoundsModel for F
where
    F: FnMut(BlockContext<'_>) -> Result<f64>,
{
    fn rounds(&mut self, ctx: BlockContext<'_>) -> Result<f64> {
        self(ctx)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BlockRecord {
    pub block: usize,
    pub window_index: usize,
    pub h: f64,
    /// Block sizes of the users that mined this block.
    pub sizes: Vec<f64>,
    pub rounds: f64,
    pub block_time_s: f64,
}

/// Full history of a difficulty-controlled run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DifficultySchedule {
    pub window: usize,
    pub target_block_time_s: f64,
    /// Difficulty in force for each window, plus the one computed after the
    /// last completed window.
    pub h_history: Vec<f64>,
    pub blocks: Vec<BlockRecord>,
}

impl DifficultySchedule {
    pub fn rounds_history(&self) -> Vec<f64> {
        self.blocks.iter().map(|b| b.rounds).collect()
    }

    pub fn blocktime_history(&self) -> Vec<f64> {
        self.blocks.iter().map(|b| b.block_time_s).collect()
    }

    pub fn completed_windows(&self) -> usize {
        self.h_history.len() - 1
    }

    /// Average block time of each window (the last one may be partial).
    pub fn window_average_times(&self) -> Vec<f64> {
        self.blocks
            .chunks(self.window)
            .map(|w| w.iter().map(|b| b.block_time_s).sum::<f64>() / w.len() as f64)
            .collect()
    }

    /// Mean squared deviation of the window averages from the target time.
    pub fn window_average_variance(&self) -> f64 {
        let averages = self.window_average_times();
        averages
            .iter()
            .map(|a| (a - self.target_block_time_s).powi(2))
            .sum::<f64>()
            / averages.len() as f64
    }

    /// Population variance of the individual block times.
    pub fn block_time_variance(&self) -> f64 {
        crate::stats::population_variance(&self.blocktime_history())
    }

    /// Fraction of blocks whose time is within `tolerance_s` of the target.
    pub fn fraction_within(&self, tolerance_s: f64) -> f64 {
        let hits = self
            .blocks
            .iter()
            .filter(|b| (b.block_time_s - self.target_block_time_s).abs() <= tolerance_s)
            .count();
        hits as f64 / self.blocks.len() as f64
    }

    /// `block_index,window_index,h,rounds,block_time_s,avg_window_time_s`.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let averages = self.window_average_times();
        let mut wtr = csv::Writer::from_writer(writer);
        wtr.write_record(["block_index", "window_index", "h", "rounds", "block_time_s", "avg_window_time_s"])?;
        for b in &self.blocks {
            wtr.write_record([
                b.block.to_string(),
                b.window_index.to_string(),
                b.h.to_string(),
                b.rounds.to_string(),
                b.block_time_s.to_string(),
                averages[b.window_index].to_string(),
            ])?;
        }
        wtr.flush()?;
        Ok(())
    }
}

/// Starting difficulty that puts the expected rounds on target for the
/// sampler's mean block sizes.
pub fn calibrated_initial_difficulty(
    sampler: &SizeSampler,
    params: &SystemParams,
    timing: &TimingParams,
) -> Result<f64> {
    update_difficulty(&[sampler.mean_sizes()], params, timing)
}

/// Holds `h` for `G` blocks, records rounds and times, re-solves `h` from
/// the window's block sizes and repeats, for `num_windows` windows.
pub fn run_difficulty_loop(
    initial_h: f64,
    num_windows: usize,
    sampler: &SizeSampler,
    params: &SystemParams,
    timing: &TimingParams,
    seed: u64,
) -> Result<DifficultySchedule> {
    if num_windows == 0 {
        return Err(invalid("num_windows", "must be >= 1"));
    }
    run_difficulty_blocks(
        initial_h,
        num_windows * timing.window,
        sampler,
        params,
        timing,
        &mut ExpectedRounds,
        seed,
    )
}

/// Block-level driver behind [`run_difficulty_loop`]; `num_blocks` need not
/// be a multiple of `G`.
pub fn run_difficulty_blocks(
    initial_h: f64,
    num_blocks: usize,
    sampler: &SizeSampler,
    params: &SystemParams,
    timing: &TimingParams,
    model: &mut impl RoundsModel,
    seed: u64,
) -> Result<DifficultySchedule> {
    timing.validate()?;
    sampler.validate()?;
    if num_blocks == 0 {
        return Err(invalid("num_blocks", "must be >= 1"));
    }
    let mut current = params.with_difficulty(initial_h);
    current.validate()?;
    let max_h = f64::from(params.nonce_bits);

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut schedule = DifficultySchedule {
        window: timing.window,
        target_block_time_s: timing.target_block_time(),
        h_history: vec![initial_h],
        blocks: Vec::with_capacity(num_blocks),
    };
    let mut window_sizes: Vec<Vec<f64>> = Vec::with_capacity(timing.window);

    for block in 0..num_blocks {
        let window_index = block / timing.window;
        let sizes = sampler.sample(block, &mut rng);
        let solution = access_filter(&current, &sizes)?;
        if solution.is_crash() {
            return Err(Error::SystemCrash { block });
        }
        let active_sizes: Vec<f64> = solution.active.iter().map(|&j| sizes[j]).collect();
        let rounds = model.rounds(BlockContext {
            block,
            window_index,
            params: &current,
            sizes: &sizes,
            solution: &solution,
            active_sizes: &active_sizes,
            rng: &mut rng,
        })?;
        schedule.blocks.push(BlockRecord {
            block,
            window_index,
            h: current.difficulty,
            sizes: active_sizes.clone(),
            rounds,
            block_time_s: timing.round_time * rounds,
        });
        window_sizes.push(active_sizes);

        if window_sizes.len() == timing.window {
            let next = update_difficulty(&window_sizes, &current, timing)?.clamp(0.0, max_h);
            schedule.h_history.push(next);
            current.difficulty = next;
            window_sizes.clear();
        }
    }
    Ok(schedule)
}

#[cfg(test)]
mod tests {
    use super::*;

    const FIG3: [f64; 3] = [100.0, 200.0, 300.0];

    fn params() -> SystemParams {
        SystemParams::default()
    }

    #[test]
    fn total_demand_fig3() {
        let m = total_nonce_demand(&params(), &FIG3).unwrap();
        assert!((m - 1692.290_947_478_732_7).abs() < 1e-9);
        let ne: f64 = crate::game::closed_form_ne(&params(), &FIG3).unwrap().iter().sum();
        assert!((m - ne).abs() < 1e-9);
    }

    #[test]
    fn total_demand_equal_sizes_and_scaling() {
        let p = params();
        let m = total_nonce_demand(&p, &[400.0; 4]).unwrap();
        let expected = 3.0 * p.reward(400.0) / (4.0 * 0.001 * 4096.0);
        assert!((m - expected).abs() < 1e-9);
        let harder = total_nonce_demand(&p.with_difficulty(13.0), &[400.0; 4]).unwrap();
        assert_eq!(harder, m / 2.0);
    }

    #[test]
    fn expected_hashes() {
        assert_eq!(expected_hashes_to_success(0.0), 1.0);
        assert_eq!(expected_hashes_to_success(12.0), 4096.0);
    }

    #[test]
    fn min_rounds_fig3() {
        let r = min_rounds(&params(), &FIG3).unwrap();
        assert!((r - 2.420_387_585_304_078).abs() < 1e-12);
        assert_eq!(min_rounds_ceil(&params(), &FIG3).unwrap(), 3);
        let m = total_nonce_demand(&params(), &FIG3).unwrap();
        assert!((r * m - 4096.0).abs() < 1e-9);
        let r13 = min_rounds(&params().with_difficulty(13.0), &FIG3).unwrap();
        assert!((r13 / r - 4.0).abs() < 1e-12);
    }

    #[test]
    fn block_time_examples() {
        let timing = TimingParams::default();
        assert_eq!(block_time(&params(), &FIG3, &timing, true).unwrap(), 360.0);
        let zero = TimingParams { round_time: 0.0, ..timing };
        assert_eq!(block_time(&params(), &FIG3, &zero, false).unwrap(), 0.0);
        // β = 120 at R_min = 5 is a ten-minute block
        let h = update_difficulty(&[FIG3.to_vec()], &params(), &timing).unwrap();
        let t = block_time(&params().with_difficulty(h), &FIG3, &timing, false).unwrap();
        assert!((t - 600.0).abs() < 1e-9);
    }

    #[test]
    fn window_statistics() {
        let p = params();
        let single = vec![FIG3.to_vec()];
        assert_eq!(avg_rounds(&single, &p).unwrap(), min_rounds(&p, &FIG3).unwrap());
        assert_eq!(var_rounds(&single, &p).unwrap(), 0.0);
        let constant = vec![FIG3.to_vec(); 5];
        assert!((avg_rounds(&constant, &p).unwrap() - min_rounds(&p, &FIG3).unwrap()).abs() < 1e-12);
        assert!(var_rounds(&constant, &p).unwrap().abs() < 1e-20);
        assert!(avg_rounds(&[], &p).is_err());
        assert!(var_rounds(&[], &p).is_err());
    }

    #[test]
    fn window_average_over_sampled_blocks() {
        use rand::Rng;
        let p = params();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let window: Vec<Vec<f64>> = (0..10)
            .map(|_| (0..3).map(|_| rng.gen_range(1.0..1024.0)).collect())
            .collect();
        let mut hand = 0.0;
        for sizes in &window {
            let s: f64 = sizes.iter().map(|&x| 0.001 * 4f64.powi(12) / (1e4 + 2.0 * x)).sum();
            hand += s / 2.0;
        }
        assert!((avg_rounds(&window, &p).unwrap() - hand / 10.0).abs() < 1e-12);
    }

    #[test]
    fn update_difficulty_example() {
        let timing = TimingParams { window: 1, ..Default::default() };
        let h = update_difficulty(&[FIG3.to_vec()], &params(), &timing).unwrap();
        assert!((h - 12.523_345_002_490_649).abs() < 1e-9);
        let back = avg_rounds(&[FIG3.to_vec()], &params().with_difficulty(h)).unwrap();
        assert!((back - 5.0).abs() < 5e-9);
    }

    #[test]
    fn update_difficulty_fixed_point_and_scaling() {
        let p = params();
        let window = vec![FIG3.to_vec(); 3];
        let on_target = TimingParams {
            target_rounds: avg_rounds(&window, &p).unwrap(),
            window: 3,
            ..Default::default()
        };
        let h = update_difficulty(&window, &p, &on_target).unwrap();
        assert!((h - p.difficulty).abs() < 1e-12);
        let quadrupled = TimingParams { target_rounds: 4.0 * on_target.target_rounds, ..on_target };
        let h4 = update_difficulty(&window, &p, &quadrupled).unwrap();
        assert!((h4 - h - 1.0).abs() < 1e-12);
    }

    #[test]
    fn constant_sizes_on_target_keep_h_constant() {
        let p = params();
        let sampler = SizeSampler::Constant { sizes: FIG3.to_vec() };
        let timing = TimingParams {
            target_rounds: min_rounds(&p, &FIG3).unwrap(),
            window: 4,
            ..Default::default()
        };
        let schedule = run_difficulty_loop(12.0, 5, &sampler, &p, &timing, 1).unwrap();
        assert_eq!(schedule.h_history.len(), 6);
        for h in &schedule.h_history {
            assert!((h - 12.0).abs() < 1e-12);
        }
    }

    #[test]
    fn loop_is_seed_deterministic() {
        let p = params();
        let sampler = SizeSampler::default_uniform(3);
        let timing = TimingParams::default();
        let a = run_difficulty_loop(12.0, 3, &sampler, &p, &timing, 9).unwrap();
        let b = run_difficulty_loop(12.0, 3, &sampler, &p, &timing, 9).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.blocks.len(), 30);
        assert!(a.rounds_history().iter().all(|&r| r > 0.0));
    }

    #[test]
    fn loop_reports_crash() {
        let p = SystemParams { block_reward: 1.0, fee_rate: 0.0, ..params() };
        let sampler = SizeSampler::Constant { sizes: FIG3.to_vec() };
        let timing = TimingParams::default();
        let err = run_difficulty_loop(30.0, 1, &sampler, &p, &timing, 0).unwrap_err();
        assert_eq!(err, Error::SystemCrash { block: 0 });
    }

    #[test]
    fn schedule_csv_columns() {
        let sampler = SizeSampler::default_uniform(3);
        let s = run_difficulty_loop(12.0, 1, &sampler, &params(), &TimingParams::default(), 0).unwrap();
        let mut buf = Vec::new();
        s.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("block_index,window_index,h,rounds,block_time_s,avg_window_time_s\n"));
        assert_eq!(text.lines().count(), 11);
    }

    #[test]
    fn timing_validation() {
        assert!(TimingParams { window: 0, ..Default::default() }.validate().is_err());
        assert!(TimingParams { round_time: -1.0, ..Default::default() }.validate().is_err());
    }
}

//! Non-cooperative nonce-selection game between the users of one MEC server.
//!
//! User `i` buys `M_i` hash computations at price `c` each and wins the block
//! reward `B + r·s_i` with probability `2^-h · M_i / ΣM`, so
//!
//! ```text
//! u_i(M) = (B + r·s_i)·2^-h·M_i/ΣM − c·M_i
//! ```
//!
//! The equilibrium is solved over real `M_i` and rounded down afterwards.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// Global economic and protocol constants.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SystemParams {
    /// Fixed block reward `B`.
    pub block_reward: f64,
    /// Transaction fee rate `r` per size unit.
    pub fee_rate: f64,
    /// Price `c` of one hash computation.
    pub hash_price: f64,
    /// Difficulty factor `h`; a single hash succeeds with probability `2^-h`.
    pub difficulty: f64,
    /// Nonce bit-length `L`.
    pub nonce_bits: u32,
}

impl Default for SystemParams {
    fn default() -> Self {
        Self {
            block_reward: 1e4,
            fee_rate: 2.0,
            hash_price: 0.001,
            difficulty: 12.0,
            nonce_bits: 32,
        }
    }
}

impl SystemParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.block_reward >= 0.0 && self.block_reward.is_finite()) {
            return Err(invalid("B", format!("must be >= 0, got {}", self.block_reward)));
        }
        if !(self.fee_rate >= 0.0 && self.fee_rate.is_finite()) {
            return Err(invalid("r", format!("must be >= 0, got {}", self.fee_rate)));
        }
        if !(self.hash_price > 0.0 && self.hash_price.is_finite()) {
            return Err(invalid("c", format!("must be > 0, got {}", self.hash_price)));
        }
        if self.nonce_bits == 0 || self.nonce_bits > 64 {
            return Err(invalid("L", format!("must be in 1..=64, got {}", self.nonce_bits)));
        }
        if !(self.difficulty >= 0.0 && self.difficulty <= f64::from(self.nonce_bits)) {
            return Err(invalid(
                "h",
                format!("must satisfy 0 <= h <= L = {}, got {}", self.nonce_bits, self.difficulty),
            ));
        }
        Ok(())
    }

    pub fn with_difficulty(mut self, h: f64) -> Self {
        self.difficulty = h;
        self
    }

    /// `B + r·s`.
    pub fn reward(&self, block_size: f64) -> f64 {
        self.block_reward + self.fee_rate * block_size
    }

    /// `a = c·2^h / (B + r·s)`, the marginal cost-to-reward ratio.
    pub fn price_ratio(&self, block_size: f64) -> f64 {
        self.hash_price * self.difficulty.exp2() / self.reward(block_size)
    }

    /// Upper end of the strategy space, `2^L − 1`.
    pub fn max_nonce_length(&self) -> f64 {
        f64::from(self.nonce_bits).exp2() - 1.0
    }
}

/// One IoT user.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UserProfile {
    pub user_id: usize,
    pub block_size: f64,
    pub nonce_length: u64,
}

/// Participation regime after dropout filtering.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Regime {
    /// Every user keeps a positive allocation.
    FullParticipation,
    /// Some users quit; at least two remain.
    PartialDropout,
    /// Fewer than two users remain; nobody mines.
    Crash,
}

/// Equilibrium nonce lengths for the users that stay in the game.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GameSolution {
    /// Indices (into the input sizes) of the participating users.
    pub active: Vec<usize>,
    /// Real-valued equilibrium lengths, aligned with `active`.
    pub m_real: Vec<f64>,
    /// `⌊m_real⌋`, aligned with `active`.
    pub m_star: Vec<u64>,
    /// Stage utilities at `m_star`, aligned with `active`.
    pub utilities: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub regime: Regime,
}

impl GameSolution {
    pub fn is_crash(&self) -> bool {
        self.regime == Regime::Crash
    }

    pub fn total_nonces(&self) -> u64 {
        self.m_star.iter().sum()
    }

    fn from_real(params: &SystemParams, sizes: &[f64], active: Vec<usize>, m_real: Vec<f64>) -> Self {
        let m_star = round_down(&m_real);
        let m_int: Vec<f64> = m_star.iter().map(|&m| m as f64).collect();
        let active_sizes: Vec<f64> = active.iter().map(|&j| sizes[j]).collect();
        let utilities = (0..active.len())
            .map(|i| utility(i, &m_int, params, &active_sizes).unwrap_or(0.0))
            .collect();
        Self {
            active,
            m_real,
            m_star,
            utilities,
            iterations: 0,
            converged: true,
            regime: Regime::FullParticipation,
        }
    }
}

fn require_sizes(params: &SystemParams, sizes: &[f64], min_users: usize) -> Result<()> {
    params.validate()?;
    if sizes.len() < min_users {
        return Err(invalid(
            "N",
            format!("at least {min_users} users required, got {}", sizes.len()),
        ));
    }
    if let Some(s) = sizes.iter().find(|s| !(**s > 0.0 && s.is_finite())) {
        return Err(invalid("s", format!("block sizes must be positive, got {s}")));
    }
    Ok(())
}

/// Expected utility of user `i` under the strategy profile `m`.
pub fn utility(i: usize, m: &[f64], params: &SystemParams, sizes: &[f64]) -> Result<f64> {
    if m.len() != sizes.len() {
        return Err(Error::DimensionMismatch {
            expected: sizes.len(),
            actual: m.len(),
        });
    }
    if i >= m.len() {
        return Err(Error::DimensionMismatch {
            expected: m.len(),
            actual: i + 1,
        });
    }
    let total: f64 = m.iter().sum();
    if total <= 0.0 {
        return Err(Error::ZeroTotalDemand);
    }
    let win = (-params.difficulty).exp2() * m[i] / total;
    Ok(params.reward(sizes[i]) * win - params.hash_price * m[i])
}

/// Best response to the opponents' total demand,
/// `√(ΣM_−i·(B+r·s)/(c·2^h)) − ΣM_−i`, clamped at zero.
pub fn best_response(others_total: f64, params: &SystemParams, block_size: f64) -> Result<f64> {
    if !(others_total > 0.0) {
        return Err(Error::Domain(format!(
            "best response needs a positive opponent total, got {others_total}"
        )));
    }
    let raw = (others_total / params.price_ratio(block_size)).sqrt() - others_total;
    Ok(raw.max(0.0))
}

/// Analytical equilibrium `M_i* = T − T²·a_i` with `T = (N−1)/Σ a_j`.
///
/// Entries may be non-positive; [`access_filter`] removes those users.
pub fn closed_form_ne(params: &SystemParams, sizes: &[f64]) -> Result<Vec<f64>> {
    require_sizes(params, sizes, 2)?;
    let ratios: Vec<f64> = sizes.iter().map(|&s| params.price_ratio(s)).collect();
    let total = (sizes.len() - 1) as f64 / ratios.iter().sum::<f64>();
    Ok(ratios.iter().map(|a| total - total * total * a).collect())
}

/// Floors each entry; negative values become zero.
pub fn round_down(m: &[f64]) -> Vec<u64> {
    m.iter()
        .map(|&x| if x > 0.0 { x.floor() as u64 } else { 0 })
        .collect()
}

/// Stopping rule for [`solve_alternating`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    /// Relative per-user change below which a sweep counts as converged.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            tol: 1e-6,
            max_iter: 100,
        }
    }
}

/// Starting nonce length for every user when none is given.
pub const DEFAULT_INITIAL_LENGTH: f64 = 1000.0;

/// Alternating (Gauss–Seidel) best-response iteration.
pub fn solve_alternating(
    params: &SystemParams,
    sizes: &[f64],
    init: &[f64],
    options: SolverOptions,
) -> Result<GameSolution> {
    solve_alternating_with(params, sizes, init, options, |_, _| {})
}

/// [`solve_alternating`], reporting the profile after every sweep.
pub fn solve_alternating_with(
    params: &SystemParams,
    sizes: &[f64],
    init: &[f64],
    options: SolverOptions,
    mut on_sweep: impl FnMut(usize, &[f64]),
) -> Result<GameSolution> {
    require_sizes(params, sizes, 2)?;
    if init.len() != sizes.len() {
        return Err(Error::DimensionMismatch {
            expected: sizes.len(),
            actual: init.len(),
        });
    }
    let upper = params.max_nonce_length();
    if let Some(m) = init.iter().find(|m| !(**m >= 1.0 && **m <= upper)) {
        return Err(invalid("M_init", format!("{m} outside [1, 2^L - 1]")));
    }

    let mut m = init.to_vec();
    let mut total: f64 = m.iter().sum();
    let mut iterations = 0;
    let mut converged = false;
    while iterations < options.max_iter {
        iterations += 1;
        let mut change: f64 = 0.0;
        for i in 0..m.len() {
            let others = total - m[i];
            // Against an empty field any positive length wins outright, so
            // the smallest one is taken; the game is re-entered next sweep.
            let next = if others > 0.0 {
                best_response(others, params, sizes[i])?.min(upper)
            } else {
                1.0
            };
            change = change.max((next - m[i]).abs() / m[i].abs().max(1.0));
            total = others + next;
            m[i] = next;
        }
        // re-sum to keep the running total from drifting
        total = m.iter().sum();
        on_sweep(iterations, &m);
        if change < options.tol {
            converged = true;
            break;
        }
    }

    let mut solution = GameSolution::from_real(params, sizes, (0..sizes.len()).collect(), m);
    solution.iterations = iterations;
    solution.converged = converged;
    Ok(solution)
}

/// Repeatedly solves the closed form and removes users priced out of it.
///
/// A user is removed when its equilibrium length rounds down to zero. All
/// such users leave in the same round; the closed form is then recomputed for
/// the rest. Fewer than two survivors is reported as [`Regime::Crash`].
pub fn access_filter(params: &SystemParams, sizes: &[f64]) -> Result<GameSolution> {
    require_sizes(params, sizes, 1)?;
    let mut active: Vec<usize> = (0..sizes.len()).collect();
    let mut rounds = 0;
    loop {
        if active.len() < 2 {
            return Ok(GameSolution {
                active: Vec::new(),
                m_real: Vec::new(),
                m_star: Vec::new(),
                utilities: Vec::new(),
                iterations: rounds,
                converged: true,
                regime: Regime::Crash,
            });
        }
        rounds += 1;
        let active_sizes: Vec<f64> = active.iter().map(|&j| sizes[j]).collect();
        let ne = closed_form_ne(params, &active_sizes)?;
        let keep: Vec<usize> = (0..active.len()).filter(|&k| ne[k] >= 1.0).collect();
        if keep.len() == active.len() {
            let regime = if active.len() == sizes.len() {
                Regime::FullParticipation
            } else {
                Regime::PartialDropout
            };
            let mut solution = GameSolution::from_real(params, sizes, active, ne);
            solution.iterations = rounds;
            solution.regime = regime;
            return Ok(solution);
        }
        active = keep.into_iter().map(|k| active[k]).collect();
    }
}

/// Symmetric equilibrium when only the average block size `s̄` is known.
pub fn avg_size_ne(params: &SystemParams, users: usize, mean_size: f64) -> Result<u64> {
    params.validate()?;
    if users == 0 {
        return Err(invalid("N", "at least one user required"));
    }
    let share = (users - 1) as f64 / users as f64;
    let value = share / params.price_ratio(mean_size) * (1.0 - share);
    Ok(if value > 0.0 { value.floor() as u64 } else { 0 })
}

fn check_discount(delta: f64) -> Result<()> {
    if !(0.0..1.0).contains(&delta) {
        return Err(invalid("delta", format!("discount factor must be in [0, 1), got {delta}")));
    }
    Ok(())
}

/// Discounted sum `Σ_t δ^t·u[t]` over the given stages.
pub fn frg_utility(stage_payoffs: &[f64], delta: f64) -> Result<f64> {
    check_discount(delta)?;
    let mut weight = 1.0;
    let mut total = 0.0;
    for &u in stage_payoffs {
        total += weight * u;
        weight *= delta;
    }
    Ok(total)
}

/// Hard cap on the number of stages summed by [`irg_utility`].
const IRG_MAX_STAGES: usize = 1_000_000;

/// Normalized infinite-horizon utility `(1−δ)·Σ_t δ^t·u[t]`.
///
/// Summation stops once the remaining normalized weight `δ^t` drops below
/// `truncation_tol`.
pub fn irg_utility(mut stage_payoff: impl FnMut(usize) -> f64, delta: f64, truncation_tol: f64) -> Result<f64> {
    check_discount(delta)?;
    if !(truncation_tol > 0.0) {
        return Err(invalid("truncation_tol", "must be positive"));
    }
    let mut weight = 1.0;
    let mut total = 0.0;
    for t in 0..IRG_MAX_STAGES {
        if weight < truncation_tol {
            break;
        }
        total += weight * stage_payoff(t);
        weight *= delta;
    }
    Ok((1.0 - delta) * total)
}

/// Length of a repeated game.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Horizon {
    /// Stages `t = 0..=T`.
    Finite(usize),
    Infinite,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RepeatedGameParams {
    pub delta: f64,
    pub horizon: Horizon,
}

impl RepeatedGameParams {
    /// Repeated-game utility of a stage payoff stream.
    pub fn utility(&self, mut stage_payoff: impl FnMut(usize) -> f64) -> Result<f64> {
        match self.horizon {
            Horizon::Finite(last) => {
                let payoffs: Vec<f64> = (0..=last).map(&mut stage_payoff).collect();
                frg_utility(&payoffs, self.delta)
            }
            Horizon::Infinite => irg_utility(stage_payoff, self.delta, 1e-15),
        }
    }
}

/// Best profile found by the cooperative maximizer. Approximate: the
/// total-utility program is non-convex.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CooperativeSolution {
    pub m: Vec<f64>,
    pub utilities: Vec<f64>,
    pub total: f64,
}

fn total_utility(params: &SystemParams, sizes: &[f64], m: &[f64]) -> f64 {
    let sum: f64 = m.iter().sum();
    let discount = (-params.difficulty).exp2();
    sizes
        .iter()
        .zip(m)
        .map(|(&s, &mi)| params.reward(s) * discount * mi / sum - params.hash_price * mi)
        .sum()
}

/// Golden-section maximization of a unimodal `f` on `[lo, hi]`.
fn golden_max(mut f: impl FnMut(f64) -> f64, lo: f64, hi: f64) -> (f64, f64) {
    const INV_PHI: f64 = 0.618_033_988_749_894_9;
    let (mut a, mut b) = (lo, hi);
    let mut c = b - INV_PHI * (b - a);
    let mut d = a + INV_PHI * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    for _ in 0..90 {
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - INV_PHI * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + INV_PHI * (b - a);
            fd = f(d);
        }
    }
    let mut best = if fc >= fd { (c, fc) } else { (d, fd) };
    for x in [lo, hi] {
        let fx = f(x);
        if fx > best.1 {
            best = (x, fx);
        }
    }
    best
}

/// Multi-start coordinate ascent on `Σ_i u_i` subject to `M_i ≥ 1`.
///
/// Each coordinate is line-searched in `ln M_i` over `[0, ln(2^L − 1)]`; on
/// that axis the objective is unimodal.
pub fn cooperative_benchmark(
    params: &SystemParams,
    sizes: &[f64],
    restarts: usize,
    seed: u64,
) -> Result<CooperativeSolution> {
    require_sizes(params, sizes, 2)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let hi = params.max_nonce_length().ln();
    let mut best: Option<(Vec<f64>, f64)> = None;

    for _ in 0..restarts.max(1) {
        let mut m: Vec<f64> = (0..sizes.len()).map(|_| rng.gen_range(0.0..hi).exp()).collect();
        let mut value = total_utility(params, sizes, &m);
        for _sweep in 0..1000 {
            let before = value;
            for i in 0..m.len() {
                let (x, fx) = golden_max(
                    |x| {
                        let saved = m[i];
                        m[i] = x.exp();
                        let v = total_utility(params, sizes, &m);
                        m[i] = saved;
                        v
                    },
                    0.0,
                    hi,
                );
                if fx > value {
                    m[i] = x.exp();
                    value = fx;
                }
            }
            if value - before <= 1e-13 * value.abs().max(1.0) {
                break;
            }
        }
        if best.as_ref().map_or(true, |(_, v)| value > *v) {
            best = Some((m, value));
        }
    }

    let (m, total) = best.expect("at least one restart");
    let utilities = (0..m.len())
        .map(|i| utility(i, &m, params, sizes))
        .collect::<Result<Vec<_>>>()?;
    Ok(CooperativeSolution { m, utilities, total })
}

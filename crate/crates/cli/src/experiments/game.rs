use mecpow::game::{
    access_filter, best_response, closed_form_ne, cooperative_benchmark, solve_alternating_with, utility,
    RepeatedGameParams, Horizon, SolverOptions, SystemParams, DEFAULT_INITIAL_LENGTH,
};
use mecpow::stats::{mean, summarize};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::config::{ExperimentConfig, Sweep};
use crate::error::{CliError, Context};
use crate::report::ExperimentReport;

fn require_sizes(config: &ExperimentConfig, experiment: &str) -> Result<(), CliError> {
    if config.s.is_empty() {
        return Err(CliError::Config(crate::config::ConfigError {
            key: Some("s".to_string()),
            message: format!("{experiment} needs an explicit list of block sizes"),
        }));
    }
    Ok(())
}

/// Multipliers applied to the configured `B` and `h` for the access curves.
const REWARD_SCALES: [f64; 3] = [1.0, 0.5, 0.25];
const DIFFICULTY_SCALES: [f64; 3] = [1.0, 1.3, 1.6];

pub fn access_probability(config: &ExperimentConfig, report: &mut ExperimentReport) -> Result<(), CliError> {
    let base = config.params();
    let users: Vec<usize> = config
        .sweep_or("N", Sweep::new("N", 2.0, 60.0, 58))
        .points()
        .iter()
        .map(|n| n.round() as usize)
        .collect();
    if users.iter().any(|&n| n < 2) {
        return Err(CliError::Config(crate::config::ConfigError {
            key: Some("sweep".to_string()),
            message: "N sweep must start at 2 or more".to_string(),
        }));
    }
    let replications = config.replications_or(1000);
    let sampler_low = config.s_distribution.low;
    let sampler_high = config.s_distribution.high;

    let mut variants: Vec<(String, SystemParams)> = REWARD_SCALES
        .iter()
        .map(|k| (format!("B x{k}"), SystemParams { block_reward: k * base.block_reward, ..base }))
        .collect();
    for k in &DIFFICULTY_SCALES[1..] {
        variants.push((format!("h x{k}"), base.with_difficulty(k * base.difficulty)));
    }
    for (name, p) in &variants {
        p.validate().context(|| format!("fig2 variant {name}"))?;
    }

    let points: Vec<(usize, usize)> = (0..variants.len())
        .flat_map(|v| (0..users.len()).map(move |k| (v, k)))
        .collect();
    let results: Vec<(f64, f64)> = points
        .par_iter()
        .enumerate()
        .map(|(index, &(v, k))| {
            let params = &variants[v].1;
            let n = users[k];
            let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
            rng.set_stream(index as u64);
            let mut access = 0usize;
            let mut crashes = 0usize;
            for _ in 0..replications {
                let sizes: Vec<f64> = (0..n)
                    .map(|_| sampler_low + (sampler_high - sampler_low) * (1.0 - rng.gen::<f64>()))
                    .collect();
                let probe = rng.gen_range(0..n);
                let solution = access_filter(params, &sizes)?;
                if solution.is_crash() {
                    crashes += 1;
                } else if solution.active.contains(&probe) {
                    access += 1;
                }
            }
            Ok((access as f64 / replications as f64, crashes as f64 / replications as f64))
        })
        .collect::<mecpow::Result<_>>()
        .context(|| "fig2 access filter".to_string())?;

    let mut wtr = report.csv("fig2_access_probability.csv")?;
    wtr.write_record(["variant", "B", "h", "N", "access_probability", "crash_rate"])?;
    for (&(v, k), (p, crash)) in points.iter().zip(&results) {
        let (name, params) = &variants[v];
        wtr.write_record([
            name.clone(),
            params.block_reward.to_string(),
            params.difficulty.to_string(),
            users[k].to_string(),
            p.to_string(),
            crash.to_string(),
        ])?;
    }
    wtr.flush().map_err(|e| CliError::io(&report.out_dir, e))?;

    let curve = |v: usize| -> Vec<f64> { (0..users.len()).map(|k| results[v * users.len() + k].0).collect() };
    let curves: Vec<Vec<f64>> = (0..variants.len()).collect::<Vec<_>>().iter().map(|&v| curve(v)).collect();
    for (v, (name, _)) in variants.iter().enumerate() {
        report.aggregate(name.clone(), "access_probability_over_N", summarize(&curves[v]));
    }
    let declines = curves.iter().all(|c| c.first() >= c.last());
    report.check(
        "access probability does not grow from the smallest to the largest N",
        declines,
        format!("first/last per variant: {:?}", curves.iter().map(|c| (c[0], c[c.len() - 1])).collect::<Vec<_>>()),
    );
    let avg: Vec<f64> = curves.iter().map(|c| mean(c)).collect();
    let reward_order = avg[0] >= avg[1] && avg[1] >= avg[2] && avg[0] > avg[2];
    report.check(
        "lower B lowers access probability",
        reward_order,
        format!("mean over N for B x1, x0.5, x0.25: {:.4}, {:.4}, {:.4}", avg[0], avg[1], avg[2]),
    );
    let difficulty_order = avg[0] >= avg[3] && avg[3] >= avg[4] && avg[0] > avg[4];
    report.check(
        "higher h lowers access probability",
        difficulty_order,
        format!("mean over N for h x1, x1.3, x1.6: {:.4}, {:.4}, {:.4}", avg[0], avg[3], avg[4]),
    );
    let large: Vec<f64> = users
        .iter()
        .zip(&curves[4])
        .filter(|(n, _)| **n > 40)
        .map(|(_, p)| *p)
        .collect();
    if !large.is_empty() {
        report.aggregate("h x1.6, N > 40", "access_probability", summarize(&large));
    }
    Ok(())
}

pub fn cooperation(config: &ExperimentConfig, report: &mut ExperimentReport) -> Result<(), CliError> {
    require_sizes(config, "fig3")?;
    let params = config.params();
    let sizes = &config.s;
    let ne = closed_form_ne(&params, sizes).context(|| "fig3 equilibrium".to_string())?;
    if ne.iter().any(|&m| m <= 0.0) {
        return Err(CliError::Core {
            context: "fig3".to_string(),
            source: mecpow::Error::Domain(format!("some users drop out at these parameters: {ne:?}")),
        });
    }
    let ne_u: Vec<f64> = (0..sizes.len())
        .map(|i| utility(i, &ne, &params, sizes))
        .collect::<mecpow::Result<_>>()
        .context(|| "fig3 utilities".to_string())?;
    let coop = cooperative_benchmark(&params, sizes, config.restarts, config.seed).context(|| "fig3 cooperative benchmark".to_string())?;
    let finite = RepeatedGameParams {
        delta: config.delta,
        horizon: Horizon::Finite(config.horizon),
    };
    let infinite = RepeatedGameParams {
        delta: config.delta,
        horizon: Horizon::Infinite,
    };
    let repeated = |u: f64| -> Result<(f64, f64), CliError> {
        Ok((
            finite.utility(|_| u).context(|| "finite repeated game".to_string())?,
            infinite.utility(|_| u).context(|| "infinite repeated game".to_string())?,
        ))
    };

    let mut wtr = report.csv("fig3_revenues.csv")?;
    wtr.write_record([
        "user", "s", "ne_M", "ne_utility", "coop_M", "coop_utility", "ne_frg", "coop_frg", "ne_irg", "coop_irg",
    ])?;
    let mut totals = [0.0; 4];
    for i in 0..sizes.len() {
        let (ne_frg, ne_irg) = repeated(ne_u[i])?;
        let (co_frg, co_irg) = repeated(coop.utilities[i])?;
        totals[0] += ne_frg;
        totals[1] += co_frg;
        totals[2] += ne_irg;
        totals[3] += co_irg;
        wtr.write_record([
            (i + 1).to_string(),
            sizes[i].to_string(),
            ne[i].to_string(),
            ne_u[i].to_string(),
            coop.m[i].to_string(),
            coop.utilities[i].to_string(),
            ne_frg.to_string(),
            co_frg.to_string(),
            ne_irg.to_string(),
            co_irg.to_string(),
        ])?;
    }
    let ne_total: f64 = ne_u.iter().sum();
    wtr.write_record([
        "total".to_string(),
        String::new(),
        ne.iter().sum::<f64>().to_string(),
        ne_total.to_string(),
        coop.m.iter().sum::<f64>().to_string(),
        coop.total.to_string(),
        totals[0].to_string(),
        totals[1].to_string(),
        totals[2].to_string(),
        totals[3].to_string(),
    ])?;
    wtr.flush().map_err(|e| CliError::io(&report.out_dir, e))?;

    report.check(
        "cooperative total utility exceeds the equilibrium total",
        coop.total > ne_total,
        format!("{:.6} vs {:.6}", coop.total, ne_total),
    );
    let worse: Vec<usize> = (0..sizes.len()).filter(|&i| coop.utilities[i] < ne_u[i]).map(|i| i + 1).collect();
    report.check(
        "some user earns less under cooperation",
        !worse.is_empty(),
        format!("users worse off: {worse:?}"),
    );
    Ok(())
}

pub fn best_response_curves(config: &ExperimentConfig, report: &mut ExperimentReport) -> Result<(), CliError> {
    require_sizes(config, "fig4")?;
    let params = config.params();
    // Two players: the first two configured sizes.
    let sizes = config.s[..2].to_vec();
    let ne = closed_form_ne(&params, &sizes).context(|| "fig4 equilibrium".to_string())?;
    let span = 3.0 * ne.iter().copied().fold(1.0, f64::max);
    let sweep = config.sweep_or("M", Sweep::new("M", 1.0, span, 300));

    let mut wtr = report.csv("fig4_best_response.csv")?;
    wtr.write_record(["opponent_M", "R1", "R2"])?;
    for x in sweep.points() {
        let r1 = best_response(x, &params, sizes[0]).context(|| format!("fig4 R1({x})"))?;
        let r2 = best_response(x, &params, sizes[1]).context(|| format!("fig4 R2({x})"))?;
        wtr.write_record([x.to_string(), r1.to_string(), r2.to_string()])?;
    }
    wtr.flush().map_err(|e| CliError::io(&report.out_dir, e))?;

    let options = SolverOptions { tol: 1e-12, max_iter: 200 };
    let solution = solve_alternating_with(&params, &sizes, &vec![DEFAULT_INITIAL_LENGTH; sizes.len()], options, |_, _| {})
        .context(|| "fig4 solver".to_string())?;
    let (m1, m2) = (solution.m_real[0], solution.m_real[1]);
    let e1 = (best_response(m2, &params, sizes[0]).context(|| "R1".to_string())? - m1).abs() / m1;
    let e2 = (best_response(m1, &params, sizes[1]).context(|| "R2".to_string())? - m2).abs() / m2;
    let mut eq = report.csv("fig4_equilibrium.csv")?;
    eq.write_record(["user", "s", "M_star_real", "closed_form"])?;
    for i in 0..2 {
        eq.write_record([(i + 1).to_string(), sizes[i].to_string(), solution.m_real[i].to_string(), ne[i].to_string()])?;
    }
    eq.flush().map_err(|e| CliError::io(&report.out_dir, e))?;
    report.check(
        "intersection is a mutual best response",
        e1 <= 1e-6 && e2 <= 1e-6,
        format!("M* = ({m1:.6}, {m2:.6}); relative residuals {e1:.2e}, {e2:.2e}"),
    );
    Ok(())
}

pub fn convergence(config: &ExperimentConfig, report: &mut ExperimentReport) -> Result<(), CliError> {
    require_sizes(config, "fig6")?;
    let params = config.params();
    let sizes = &config.s;
    let ne = closed_form_ne(&params, sizes).context(|| "fig6 closed form".to_string())?;
    let mut history: Vec<Vec<f64>> = vec![vec![DEFAULT_INITIAL_LENGTH; sizes.len()]];
    let solution = solve_alternating_with(
        &params,
        sizes,
        &vec![DEFAULT_INITIAL_LENGTH; sizes.len()],
        SolverOptions::default(),
        |_, m| history.push(m.to_vec()),
    )
    .context(|| "fig6 solver".to_string())?;

    let mut wtr = report.csv("fig6_convergence.csv")?;
    wtr.write_record(["iteration", "user", "M", "closed_form"])?;
    for (iteration, m) in history.iter().enumerate() {
        for (i, value) in m.iter().enumerate() {
            wtr.write_record([iteration.to_string(), (i + 1).to_string(), value.to_string(), ne[i].to_string()])?;
        }
    }
    wtr.flush().map_err(|e| CliError::io(&report.out_dir, e))?;

    let worst = solution
        .m_real
        .iter()
        .zip(&ne)
        .map(|(a, b)| (a - b).abs() / b.abs())
        .fold(0.0, f64::max);
    report.check(
        "alternating solver reaches the closed form within 20 sweeps",
        solution.converged && solution.iterations <= 20 && worst <= 1e-3,
        format!("{} sweeps, converged {}, worst relative gap {worst:.2e}", solution.iterations, solution.converged),
    );
    Ok(())
}

/// Solves the filtered equilibrium at every sweep point and writes one row
/// per user and point. Returns per-point real lengths (0 for dropped users).
fn length_sweep(
    config: &ExperimentConfig,
    report: &mut ExperimentReport,
    file: &str,
    sweep: &Sweep,
    apply: impl Fn(f64) -> SystemParams + Sync,
) -> Result<Vec<Vec<f64>>, CliError> {
    let sizes = &config.s;
    let points = sweep.points();
    let solutions = points
        .par_iter()
        .map(|&x| access_filter(&apply(x), sizes))
        .collect::<mecpow::Result<Vec<_>>>()
        .context(|| format!("{file} sweep over {}", sweep.parameter))?;

    let mut wtr = report.csv(file)?;
    wtr.write_record([sweep.parameter.as_str(), "user", "s", "M_star_real", "M_star_int", "active"])?;
    let mut lengths = Vec::with_capacity(points.len());
    for (x, solution) in points.iter().zip(&solutions) {
        let mut row = vec![0.0; sizes.len()];
        for (i, &s) in sizes.iter().enumerate() {
            let slot = solution.active.iter().position(|&j| j == i);
            let (real, int) = slot.map_or((0.0, 0), |k| (solution.m_real[k], solution.m_star[k]));
            row[i] = real;
            wtr.write_record([
                x.to_string(),
                (i + 1).to_string(),
                s.to_string(),
                real.to_string(),
                int.to_string(),
                slot.is_some().to_string(),
            ])?;
        }
        lengths.push(row);
    }
    wtr.flush().map_err(|e| CliError::io(&report.out_dir, e))?;
    Ok(lengths)
}

fn strictly(lengths: &[Vec<f64>], user: usize, increasing: bool) -> bool {
    lengths.windows(2).all(|w| if increasing { w[1][user] > w[0][user] } else { w[1][user] < w[0][user] })
}

pub fn lengths_vs_reward(config: &ExperimentConfig, report: &mut ExperimentReport) -> Result<(), CliError> {
    require_sizes(config, "fig7")?;
    let base = config.params();
    let sweep = config.sweep_or("B", Sweep::new("B", 2e3, 2e4, 18));
    let lengths = length_sweep(config, report, "fig7_lengths_vs_B.csv", &sweep, |b| SystemParams { block_reward: b, ..base })?;
    let all_up = (0..config.s.len()).all(|i| strictly(&lengths, i, true));
    report.check(
        "every user's M* strictly increases with B",
        all_up,
        format!("first {:?}, last {:?}", lengths[0], lengths[lengths.len() - 1]),
    );
    Ok(())
}

pub fn lengths_vs_fee_rate(config: &ExperimentConfig, report: &mut ExperimentReport) -> Result<(), CliError> {
    require_sizes(config, "fig8")?;
    let base = config.params();
    let sweep = config.sweep_or("r", Sweep::new("r", 0.0, 10.0, 20));
    let lengths = length_sweep(config, report, "fig8_lengths_vs_r.csv", &sweep, |r| SystemParams { fee_rate: r, ..base })?;
    // The smallest block's user is priced down, everyone else up.
    let smallest = (0..config.s.len())
        .min_by(|&a, &b| config.s[a].total_cmp(&config.s[b]))
        .unwrap_or(0);
    let pattern = (0..config.s.len()).all(|i| strictly(&lengths, i, i != smallest));
    report.check(
        "smallest-block user's M* decreases with r while the others increase",
        pattern,
        format!("first {:?}, last {:?}", lengths[0], lengths[lengths.len() - 1]),
    );
    Ok(())
}

use mecpow::fair_ordering::{merge, prefix_fairness, wrr_merge, MergedEntry, NonceSequence, TargetMass};
use mecpow::stats::{summarize, total_variation};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::replication_seed;
use crate::config::{ExperimentConfig, Sweep};
use crate::error::{CliError, Context};
use crate::report::ExperimentReport;

const PREFIXES: [f64; 2] = [0.2, 0.5];

/// Splits `total` into integer lengths proportional to `ratio`
/// (largest-remainder rounding, ties to the earlier user).
pub(crate) fn split_by_ratio(total: usize, ratio: &[usize]) -> Vec<usize> {
    let weight: usize = ratio.iter().sum();
    let mut lengths: Vec<usize> = ratio.iter().map(|r| total * r / weight).collect();
    let mut order: Vec<usize> = (0..ratio.len()).collect();
    order.sort_by_key(|&i| std::cmp::Reverse(total * ratio[i] % weight));
    let short = total - lengths.iter().sum::<usize>();
    for &i in order.iter().take(short) {
        lengths[i] += 1;
    }
    lengths
}

fn random_sequences(lengths: &[usize], bits: u32, seed: u64) -> mecpow::Result<Vec<NonceSequence>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let space = if bits >= 63 { usize::MAX } else { 1usize << bits };
    lengths
        .iter()
        .enumerate()
        .map(|(i, &m)| {
            let mut nonces: Vec<u64> = rand::seq::index::sample(&mut rng, space, m)
                .into_iter()
                .map(|n| n as u64)
                .collect();
            nonces.sort_unstable();
            NonceSequence::new(i, nonces, bits)
        })
        .collect()
}

/// Mean total variation to the target over every prefix of `merged`.
fn mean_prefix_tv(merged: &[MergedEntry], target: &[f64]) -> f64 {
    let mut counts = vec![0.0; target.len()];
    let mut acc = 0.0;
    for (k, e) in merged.iter().enumerate() {
        counts[e.user] += 1.0;
        let freq: Vec<f64> = counts.iter().map(|c| c / (k + 1) as f64).collect();
        acc += total_variation(&freq, target);
    }
    acc / merged.len() as f64
}

struct Replication {
    /// `[prefix][user]` frequencies for the greedy merge and for WRR.
    greedy: Vec<Vec<f64>>,
    wrr: Vec<Vec<f64>>,
    greedy_tv: Vec<f64>,
    wrr_tv: Vec<f64>,
    greedy_all: f64,
    wrr_all: f64,
}

fn replicate(lengths: &[usize], ratio: &[usize], bits: u32, seed: u64) -> mecpow::Result<Replication> {
    let sequences = random_sequences(lengths, bits, seed)?;
    let target = TargetMass::from_lengths(lengths)?;
    let greedy = merge(sequences.clone(), seed)?.into_merged();
    let baseline = wrr_merge(&sequences, ratio)?;
    let mut rep = Replication {
        greedy: Vec::new(),
        wrr: Vec::new(),
        greedy_tv: Vec::new(),
        wrr_tv: Vec::new(),
        greedy_all: mean_prefix_tv(&greedy, target.probabilities()),
        wrr_all: mean_prefix_tv(&baseline, target.probabilities()),
    };
    for fraction in PREFIXES {
        let g = prefix_fairness(&greedy, &target, fraction)?;
        let w = prefix_fairness(&baseline, &target, fraction)?;
        rep.greedy_tv.push(g.total_variation);
        rep.wrr_tv.push(w.total_variation);
        rep.greedy.push(g.frequencies);
        rep.wrr.push(w.frequencies);
    }
    Ok(rep)
}

pub fn fairness(config: &ExperimentConfig, report: &mut ExperimentReport) -> Result<(), CliError> {
    let ratio = &config.ratio;
    let weight: usize = ratio.iter().sum();
    let totals: Vec<usize> = config
        .sweep_or("M", Sweep::new("M", 10.0, 1000.0, 99))
        .points()
        .iter()
        .map(|m| m.round() as usize)
        .collect();
    if totals.iter().any(|&m| m < ratio.len()) {
        return Err(CliError::Config(crate::config::ConfigError {
            key: Some("sweep".to_string()),
            message: format!("every M must give each of the {} users at least one nonce", ratio.len()),
        }));
    }
    let seeds = config.replications_or(100);
    let jobs: Vec<(usize, usize)> = (0..totals.len()).flat_map(|p| (0..seeds).map(move |k| (p, k))).collect();
    let reps: Vec<Replication> = jobs
        .par_iter()
        .map(|&(p, k)| {
            let lengths = split_by_ratio(totals[p], ratio);
            replicate(&lengths, ratio, config.l, replication_seed(config.seed, k))
        })
        .collect::<mecpow::Result<_>>()
        .context(|| "fig5 merge".to_string())?;

    let mut per_point: Vec<&[Replication]> = Vec::new();
    for p in 0..totals.len() {
        per_point.push(&reps[p * seeds..(p + 1) * seeds]);
    }

    for (file, pick) in [
        ("fig5_algorithm1.csv", (|r: &Replication| &r.greedy) as fn(&Replication) -> &Vec<Vec<f64>>),
        ("fig5_wrr.csv", |r: &Replication| &r.wrr),
    ] {
        let mut wtr = report.csv(file)?;
        wtr.write_record(["M", "prefix_fraction", "user", "target", "frequency"])?;
        for (p, &m) in totals.iter().enumerate() {
            let lengths = split_by_ratio(m, ratio);
            for (f, fraction) in PREFIXES.iter().enumerate() {
                for (user, &len) in lengths.iter().enumerate() {
                    let freq: f64 = per_point[p].iter().map(|r| pick(r)[f][user]).sum::<f64>() / seeds as f64;
                    wtr.write_record([
                        m.to_string(),
                        fraction.to_string(),
                        (user + 1).to_string(),
                        (len as f64 / m as f64).to_string(),
                        freq.to_string(),
                    ])?;
                }
            }
        }
        wtr.flush().map_err(|e| CliError::io(&report.out_dir, e))?;
    }

    for (p, &m) in totals.iter().enumerate() {
        for (f, fraction) in PREFIXES.iter().enumerate() {
            let g: Vec<f64> = per_point[p].iter().map(|r| r.greedy_tv[f]).collect();
            let w: Vec<f64> = per_point[p].iter().map(|r| r.wrr_tv[f]).collect();
            report.aggregate(format!("M={m} prefix={fraction}"), "tv_algorithm1", summarize(&g));
            report.aggregate(format!("M={m} prefix={fraction}"), "tv_wrr", summarize(&w));
        }
        let g: Vec<f64> = per_point[p].iter().map(|r| r.greedy_all).collect();
        let w: Vec<f64> = per_point[p].iter().map(|r| r.wrr_all).collect();
        report.aggregate(format!("M={m} all prefixes"), "mean_tv_algorithm1", summarize(&g));
        report.aggregate(format!("M={m} all prefixes"), "mean_tv_wrr", summarize(&w));
    }

    // Thresholds are evaluated at M = 1000 when swept, else at the largest M.
    let p = totals.iter().position(|&m| m == 1000).unwrap_or(totals.len() - 1);
    let m = totals[p];
    let avg = |values: Vec<f64>| values.iter().sum::<f64>() / values.len() as f64;
    let g_tv: Vec<f64> = (0..PREFIXES.len()).map(|f| avg(per_point[p].iter().map(|r| r.greedy_tv[f]).collect())).collect();
    let w_tv: Vec<f64> = (0..PREFIXES.len()).map(|f| avg(per_point[p].iter().map(|r| r.wrr_tv[f]).collect())).collect();
    report.check(
        &format!("M={m}: greedy merge within TV 0.02 of target at 0.5M"),
        g_tv[1] <= 0.02,
        format!("mean TV {:.6} over {seeds} seeds", g_tv[1]),
    );
    for (f, fraction) in PREFIXES.iter().enumerate() {
        let aligned = ((fraction * m as f64).ceil() as usize) % weight == 0;
        report.check(
            &format!("M={m}: greedy merge strictly closer than WRR at {fraction}M"),
            g_tv[f] < w_tv[f],
            format!(
                "mean TV {:.6} vs {:.6}{}",
                g_tv[f],
                w_tv[f],
                if aligned { " (prefix ends on a WRR cycle boundary, where WRR is exact)" } else { "" }
            ),
        );
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ratio_split_is_exact_for_multiples() {
        assert_eq!(split_by_ratio(1000, &[1, 3, 6]), vec![100, 300, 600]);
        assert_eq!(split_by_ratio(15, &[1, 3, 6]), vec![2, 4, 9]);
        assert_eq!(split_by_ratio(7, &[1, 1]).iter().sum::<usize>(), 7);
    }
}

use mecpow::difficulty::{
    calibrated_initial_difficulty, run_difficulty_blocks, DifficultySchedule, ExpectedRounds, TimingParams,
};
use mecpow::mining::{simulate_campaign, write_traces_csv, BlockTimeModel};
use mecpow::stats::{mean, summarize};
use mecpow::SystemParams;
use rayon::prelude::*;

use super::replication_seed;
use crate::config::ExperimentConfig;
use crate::error::{CliError, Context};
use crate::report::ExperimentReport;

/// Tolerance around the target block time used by the checks.
const TOLERANCE_S: f64 = 60.0;

fn initial_h(config: &ExperimentConfig, params: &SystemParams, timing: &TimingParams) -> mecpow::Result<f64> {
    match config.initial_h {
        Some(h) => Ok(h),
        None => Ok(calibrated_initial_difficulty(&config.sampler(), params, timing)?.clamp(0.0, f64::from(params.nonce_bits))),
    }
}

fn blocks_for(config: &ExperimentConfig, window: usize) -> usize {
    config.num_windows.map_or(config.num_blocks, |w| w * window)
}

fn run_one(config: &ExperimentConfig, timing: &TimingParams, seed: u64) -> mecpow::Result<DifficultySchedule> {
    let params = config.params();
    let blocks = blocks_for(config, timing.window);
    let h0 = initial_h(config, &params, timing)?;
    match config.block_time_model {
        BlockTimeModel::Expected => {
            run_difficulty_blocks(h0, blocks, &config.sampler(), &params, timing, &mut ExpectedRounds, seed)
        }
        BlockTimeModel::Sampled => {
            let campaign = simulate_campaign(
                &params.with_difficulty(h0),
                timing,
                blocks,
                &config.sampler(),
                config.hash_mode,
                BlockTimeModel::Sampled,
                seed,
            )?;
            Ok(campaign.schedule)
        }
    }
}

pub fn block_times(config: &ExperimentConfig, report: &mut ExperimentReport) -> Result<(), CliError> {
    let replications = config.replications_or(1);
    let jobs: Vec<(usize, usize)> = (0..config.windows.len())
        .flat_map(|w| (0..replications).map(move |k| (w, k)))
        .collect();
    let runs: Vec<DifficultySchedule> = jobs
        .par_iter()
        .map(|&(w, k)| {
            let timing = TimingParams {
                window: config.windows[w],
                ..config.timing()
            };
            run_one(config, &timing, replication_seed(config.seed, k))
        })
        .collect::<mecpow::Result<_>>()
        .context(|| "fig9 difficulty loop".to_string())?;

    let mut stats = report.csv("fig9_windows.csv")?;
    stats.write_record([
        "G",
        "replication",
        "blocks",
        "fraction_within_60s",
        "mean_window_average_s",
        "window_average_variance",
        "block_time_variance",
    ])?;
    for (&(w, k), schedule) in jobs.iter().zip(&runs) {
        stats.write_record([
            config.windows[w].to_string(),
            k.to_string(),
            schedule.blocks.len().to_string(),
            schedule.fraction_within(TOLERANCE_S).to_string(),
            mean(&schedule.window_average_times()).to_string(),
            schedule.window_average_variance().to_string(),
            schedule.block_time_variance().to_string(),
        ])?;
    }
    stats.flush().map_err(|e| CliError::io(&report.out_dir, e))?;

    // The first replication's schedule per window is the plotted series.
    for (w, &window) in config.windows.iter().enumerate() {
        let schedule = &runs[w * replications];
        let mut buffer = Vec::new();
        schedule.write_csv(&mut buffer).context(|| format!("fig9 schedule G={window}"))?;
        let text = String::from_utf8(buffer).expect("csv is utf-8");
        report.text(&format!("fig9_blocktime_G{window}.csv"), &text)?;

        let slice = &runs[w * replications..(w + 1) * replications];
        let point = format!("G={window}");
        let within: Vec<f64> = slice.iter().map(|s| s.fraction_within(TOLERANCE_S)).collect();
        let window_var: Vec<f64> = slice.iter().map(DifficultySchedule::window_average_variance).collect();
        let block_var: Vec<f64> = slice.iter().map(DifficultySchedule::block_time_variance).collect();
        report.aggregate(point.clone(), "fraction_within_60s", summarize(&within));
        report.aggregate(point.clone(), "window_average_variance", summarize(&window_var));
        report.aggregate(point, "block_time_variance", summarize(&block_var));
    }

    let target = config.timing().target_block_time();
    let index_of = |g: usize| config.windows.iter().position(|&w| w == g);
    let reference = index_of(config.g).unwrap_or(0);
    let slice = &runs[reference * replications..(reference + 1) * replications];
    let within = mean(&slice.iter().map(|s| s.fraction_within(TOLERANCE_S)).collect::<Vec<_>>());
    report.check(
        &format!("G={}: at least 95% of block times within {target}±{TOLERANCE_S} s", config.windows[reference]),
        within >= 0.95,
        format!("{:.2}% of blocks", 100.0 * within),
    );
    let averages: Vec<f64> = slice.iter().flat_map(|s| s.window_average_times()).collect();
    let avg = mean(&averages);
    report.check(
        &format!("G={}: window averages fluctuate around {target} s", config.windows[reference]),
        (avg - target).abs() <= TOLERANCE_S && averages.iter().any(|&a| a > target) && averages.iter().any(|&a| a < target),
        format!("mean of window averages {avg:.2} s over {} windows", averages.len()),
    );

    if config.windows.len() >= 2 {
        let smallest = (0..config.windows.len()).min_by_key(|&w| config.windows[w]).unwrap_or(0);
        let largest = (0..config.windows.len()).max_by_key(|&w| config.windows[w]).unwrap_or(0);
        if config.windows[smallest] < config.windows[largest] {
            let metric = |w: usize, f: fn(&DifficultySchedule) -> f64| {
                mean(&runs[w * replications..(w + 1) * replications].iter().map(f).collect::<Vec<_>>())
            };
            let window_var = (
                metric(smallest, DifficultySchedule::window_average_variance),
                metric(largest, DifficultySchedule::window_average_variance),
            );
            let block_var = (
                metric(smallest, DifficultySchedule::block_time_variance),
                metric(largest, DifficultySchedule::block_time_variance),
            );
            report.check(
                &format!("G={} has larger block-time variance than G={}", config.windows[smallest], config.windows[largest]),
                window_var.0 > window_var.1 && block_var.0 > block_var.1,
                format!(
                    "window-average variance {:.2} vs {:.2}; block-time variance {:.2} vs {:.2}",
                    window_var.0, window_var.1, block_var.0, block_var.1
                ),
            );
        }
    }
    Ok(())
}

pub fn campaign(config: &ExperimentConfig, report: &mut ExperimentReport) -> Result<(), CliError> {
    let params = config.params();
    let timing = config.timing();
    let h0 = initial_h(config, &params, &timing).context(|| "initial difficulty calibration".to_string())?;
    let blocks = blocks_for(config, timing.window);
    let campaign = simulate_campaign(
        &params.with_difficulty(h0),
        &timing,
        blocks,
        &config.sampler(),
        config.hash_mode,
        config.block_time_model,
        config.seed,
    )
    .context(|| "campaign".to_string())?;

    let mut buffer = Vec::new();
    write_traces_csv(&mut buffer, &campaign.traces).context(|| "campaign traces".to_string())?;
    report.text("campaign_traces.csv", &String::from_utf8(buffer).expect("csv is utf-8"))?;
    let mut buffer = Vec::new();
    campaign.schedule.write_csv(&mut buffer).context(|| "campaign schedule".to_string())?;
    report.text("campaign_schedule.csv", &String::from_utf8(buffer).expect("csv is utf-8"))?;

    let rounds: Vec<f64> = campaign.traces.iter().map(|t| t.fractional_rounds()).collect();
    let expected: Vec<f64> = campaign.schedule.rounds_history();
    report.aggregate("campaign", "fractional_rounds", summarize(&rounds));
    report.aggregate("campaign", "schedule_rounds", summarize(&expected));
    report.aggregate(
        "campaign",
        "block_time_s",
        summarize(&campaign.schedule.blocktime_history()),
    );
    let paid_once = campaign
        .traces
        .iter()
        .all(|t| t.winner.is_some() && t.rewards.iter().filter(|&&r| r != 0.0).count() == 1);
    report.check(
        "every block pays exactly one winner",
        paid_once,
        format!("{} blocks", campaign.traces.len()),
    );
    Ok(())
}

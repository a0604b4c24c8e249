//! Named experiment runners. Each writes its CSVs into the report's output
//! directory and records threshold checks where the experiment has any.

use std::path::Path;

use crate::config::ExperimentConfig;
use crate::error::CliError;
use crate::report::ExperimentReport;

mod difficulty;
mod game;
mod ordering;

type Runner = fn(&ExperimentConfig, &mut ExperimentReport) -> Result<(), CliError>;

pub struct Experiment {
    pub name: &'static str,
    pub description: &'static str,
    run: Runner,
}

pub const EXPERIMENTS: &[Experiment] = &[
    Experiment {
        name: "fig2",
        description: "user access probability vs number of users, for several B and h",
        run: game::access_probability,
    },
    Experiment {
        name: "fig3",
        description: "cooperative vs non-cooperative revenues, one-shot and repeated",
        run: game::cooperation,
    },
    Experiment {
        name: "fig4",
        description: "two-player best-response curves and their intersection",
        run: game::best_response_curves,
    },
    Experiment {
        name: "fig5",
        description: "ordering fairness of the greedy KL merge vs weighted round robin",
        run: ordering::fairness,
    },
    Experiment {
        name: "fig6",
        description: "convergence of the alternating best-response solver",
        run: game::convergence,
    },
    Experiment {
        name: "fig7",
        description: "equilibrium nonce lengths vs fixed block reward B",
        run: game::lengths_vs_reward,
    },
    Experiment {
        name: "fig8",
        description: "equilibrium nonce lengths vs transaction fee rate r",
        run: game::lengths_vs_fee_rate,
    },
    Experiment {
        name: "fig9",
        description: "block time vs block number under difficulty control, per window G",
        run: difficulty::block_times,
    },
    Experiment {
        name: "campaign",
        description: "multi-block mining campaign with per-block traces and difficulty schedule",
        run: difficulty::campaign,
    },
];

pub fn find(name: &str) -> Option<&'static Experiment> {
    EXPERIMENTS.iter().find(|e| e.name == name)
}

/// Runs one experiment into `out_dir`. The effective configuration (with the
/// seed override applied) is echoed as `config.toml`.
pub fn run(name: &str, config: &ExperimentConfig, seed: Option<u64>, out_dir: &Path) -> Result<ExperimentReport, CliError> {
    let experiment = find(name).ok_or_else(|| CliError::UnknownExperiment(name.to_string()))?;
    let mut config = config.clone();
    if let Some(seed) = seed {
        config.seed = seed;
    }
    config.experiment = Some(name.to_string());
    let mut report = ExperimentReport::new(name, config.seed, out_dir)?;
    report.text("config.toml", &config.to_toml())?;
    (experiment.run)(&config, &mut report)?;
    report.finish()?;
    Ok(report)
}

/// Seed of replication `k` derived from the run's base seed.
pub(crate) fn replication_seed(base: u64, k: usize) -> u64 {
    base.wrapping_add(k as u64)
}

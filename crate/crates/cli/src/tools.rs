//! Single-shot tools over the documented file formats.

use std::io::Write;

use mecpow::fair_ordering::{merge, parse_sequences, wrr_merge, write_merged_csv};
use mecpow::game::access_filter;

use crate::config::ExperimentConfig;
use crate::error::{CliError, Context};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Ordering {
    /// Greedy minimum-KL merge.
    Kl,
    /// Weighted round robin with weights equal to the sequence lengths
    /// divided by their greatest common divisor.
    Wrr,
}

fn gcd(a: usize, b: usize) -> usize {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// Reads whitespace-separated nonce lines and writes the merged order CSV.
pub fn order(text: &str, nonce_bits: u32, algorithm: Ordering, seed: u64, out: impl Write) -> Result<(), CliError> {
    let sequences = parse_sequences(text, nonce_bits).context(|| "nonce file".to_string())?;
    let merged = match algorithm {
        Ordering::Kl => merge(sequences.clone(), seed).context(|| "merge".to_string())?.into_merged(),
        Ordering::Wrr => {
            let lengths: Vec<usize> = sequences.iter().map(|s| s.len()).collect();
            let divisor = lengths.iter().copied().fold(0, gcd).max(1);
            let weights: Vec<usize> = lengths.iter().map(|l| l / divisor).collect();
            wrr_merge(&sequences, &weights).context(|| "weighted round robin".to_string())?
        }
    };
    write_merged_csv(out, &merged, &sequences).context(|| "merged csv".to_string())
}

/// Solves the filtered equilibrium for the configured sizes and writes
/// `user_id,s,M_star_real,M_star_int,utility,active`.
pub fn solve(config: &ExperimentConfig, out: impl Write) -> Result<(), CliError> {
    if config.s.is_empty() {
        return Err(CliError::Config(crate::config::ConfigError {
            key: Some("s".to_string()),
            message: "solve needs an explicit list of block sizes".to_string(),
        }));
    }
    let solution = access_filter(&config.params(), &config.s).context(|| "equilibrium".to_string())?;
    let mut wtr = csv::Writer::from_writer(out);
    wtr.write_record(["user_id", "s", "M_star_real", "M_star_int", "utility", "active"])?;
    for (i, s) in config.s.iter().enumerate() {
        let row = match solution.active.iter().position(|&j| j == i) {
            Some(k) => [
                (i + 1).to_string(),
                s.to_string(),
                solution.m_real[k].to_string(),
                solution.m_star[k].to_string(),
                solution.utilities[k].to_string(),
                "true".to_string(),
            ],
            None => [
                (i + 1).to_string(),
                s.to_string(),
                "0".to_string(),
                "0".to_string(),
                "0".to_string(),
                "false".to_string(),
            ],
        };
        wtr.write_record(row)?;
    }
    wtr.flush().map_err(|e| CliError::io(std::path::Path::new("<output>"), e))?;
    Ok(())
}

//! Experiment outputs: CSV files, per-point aggregates and threshold checks.

use std::fmt::Write as _;
use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use mecpow::stats::Summary;

use crate::error::CliError;

/// One pass/fail threshold evaluated by an experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: String,
    pub pass: bool,
    pub detail: String,
}

/// Aggregate of one metric at one sweep point.
#[derive(Debug, Clone, PartialEq)]
pub struct Aggregate {
    pub point: String,
    pub metric: String,
    pub summary: Summary,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentReport {
    pub experiment: String,
    pub seed: u64,
    pub out_dir: PathBuf,
    /// Every file written, in creation order.
    pub files: Vec<PathBuf>,
    pub aggregates: Vec<Aggregate>,
    pub checks: Vec<Check>,
}

impl ExperimentReport {
    pub fn new(experiment: &str, seed: u64, out_dir: &Path) -> Result<Self, CliError> {
        fs::create_dir_all(out_dir).map_err(|e| CliError::io(out_dir, e))?;
        Ok(Self {
            experiment: experiment.to_string(),
            seed,
            out_dir: out_dir.to_path_buf(),
            files: Vec::new(),
            aggregates: Vec::new(),
            checks: Vec::new(),
        })
    }

    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    pub fn check(&mut self, name: &str, pass: bool, detail: impl Into<String>) {
        self.checks.push(Check {
            name: name.to_string(),
            pass,
            detail: detail.into(),
        });
    }

    pub fn aggregate(&mut self, point: impl Into<String>, metric: &str, summary: Summary) {
        self.aggregates.push(Aggregate {
            point: point.into(),
            metric: metric.to_string(),
            summary,
        });
    }

    /// Opens `name` in the output directory as a CSV writer and records it.
    pub fn csv(&mut self, name: &str) -> Result<csv::Writer<BufWriter<File>>, CliError> {
        let path = self.out_dir.join(name);
        let file = File::create(&path).map_err(|e| CliError::io(&path, e))?;
        self.files.push(path);
        Ok(csv::Writer::from_writer(BufWriter::new(file)))
    }

    /// Writes a plain-text file in the output directory and records it.
    pub fn text(&mut self, name: &str, contents: &str) -> Result<(), CliError> {
        let path = self.out_dir.join(name);
        fs::write(&path, contents).map_err(|e| CliError::io(&path, e))?;
        self.files.push(path);
        Ok(())
    }

    /// Writes `aggregates.csv`, `checks.csv` and `summary.txt`.
    pub fn finish(&mut self) -> Result<(), CliError> {
        if !self.aggregates.is_empty() {
            let rows = std::mem::take(&mut self.aggregates);
            let mut wtr = self.csv("aggregates.csv")?;
            wtr.write_record(["point", "metric", "n", "mean", "variance", "ci95"])?;
            for a in &rows {
                wtr.write_record([
                    a.point.clone(),
                    a.metric.clone(),
                    a.summary.n.to_string(),
                    a.summary.mean.to_string(),
                    a.summary.variance.to_string(),
                    a.summary.ci95.to_string(),
                ])?;
            }
            wtr.flush().map_err(|e| CliError::io(Path::new("aggregates.csv"), e))?;
            self.aggregates = rows;
        }
        if !self.checks.is_empty() {
            let rows = self.checks.clone();
            let mut wtr = self.csv("checks.csv")?;
            wtr.write_record(["check", "pass", "detail"])?;
            for c in &rows {
                wtr.write_record([c.name.as_str(), if c.pass { "true" } else { "false" }, c.detail.as_str()])?;
            }
            wtr.flush().map_err(|e| CliError::io(Path::new("checks.csv"), e))?;
        }
        let summary = self.render();
        self.text("summary.txt", &summary)
    }

    /// Human-readable summary; file names are relative to the output dir.
    pub fn render(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "experiment: {}", self.experiment);
        let _ = writeln!(out, "seed: {}", self.seed);
        let _ = writeln!(out, "files:");
        for f in &self.files {
            let name = f.file_name().map_or_else(|| f.display().to_string(), |n| n.to_string_lossy().into_owned());
            let _ = writeln!(out, "  {name}");
        }
        if !self.checks.is_empty() {
            let _ = writeln!(out, "checks:");
            for c in &self.checks {
                let _ = writeln!(out, "  [{}] {}: {}", if c.pass { "PASS" } else { "FAIL" }, c.name, c.detail);
            }
        }
        let _ = writeln!(out, "result: {}", if self.passed() { "pass" } else { "fail" });
        out
    }
}

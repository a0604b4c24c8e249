//! Experiment configuration: TOML in, validated defaults-filled struct out.

use std::fmt;
use std::path::{Path, PathBuf};

use mecpow::difficulty::TimingParams;
use mecpow::mining::{BlockTimeModel, HashMode};
use mecpow::sizes::SizeSampler;
use mecpow::SystemParams;
use serde::{Deserialize, Serialize};

/// Default block sizes `s = (100, 200, 300)`.
pub const DEFAULT_SIZES: [f64; 3] = [100.0, 200.0, 300.0];

#[derive(Debug)]
pub struct ConfigError {
    /// Offending key, if the problem is tied to one.
    pub key: Option<String>,
    pub message: String,
}

impl ConfigError {
    fn key(key: &str, message: impl Into<String>) -> Self {
        Self {
            key: Some(key.to_string()),
            message: message.into(),
        }
    }
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.key {
            Some(key) => write!(f, "invalid config key `{key}`: {}", self.message),
            None => write!(f, "invalid config: {}", self.message),
        }
    }
}

impl std::error::Error for ConfigError {}

impl From<mecpow::Error> for ConfigError {
    fn from(err: mecpow::Error) -> Self {
        match err {
            mecpow::Error::InvalidParameter { name, reason } => Self::key(name, reason),
            other => Self {
                key: None,
                message: other.to_string(),
            },
        }
    }
}

/// Block-size distribution as written in the config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SizeDistribution {
    #[serde(default = "uniform_kind")]
    pub kind: String,
    pub low: f64,
    pub high: f64,
}

fn uniform_kind() -> String {
    "uniform".to_string()
}

/// One parameter sweep: `steps` equal intervals from `from` to `to`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sweep {
    pub parameter: String,
    pub from: f64,
    pub to: f64,
    pub steps: usize,
}

impl Sweep {
    pub fn new(parameter: &str, from: f64, to: f64, steps: usize) -> Self {
        Self {
            parameter: parameter.to_string(),
            from,
            to,
            steps,
        }
    }

    pub fn points(&self) -> Vec<f64> {
        if self.steps == 0 {
            return vec![self.from];
        }
        (0..=self.steps)
            .map(|k| self.from + (self.to - self.from) * k as f64 / self.steps as f64)
            .collect()
    }
}

/// The file as written: every key optional.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    experiment: Option<String>,
    #[serde(rename = "B")]
    b: Option<f64>,
    r: Option<f64>,
    c: Option<f64>,
    h: Option<f64>,
    #[serde(rename = "L")]
    l: Option<u32>,
    #[serde(rename = "N")]
    n: Option<usize>,
    s: Option<Vec<f64>>,
    s_distribution: Option<SizeDistribution>,
    delta: Option<f64>,
    horizon: Option<usize>,
    seed: Option<u64>,
    replications: Option<usize>,
    t0: Option<f64>,
    beta: Option<f64>,
    #[serde(rename = "R_th")]
    r_th: Option<f64>,
    #[serde(rename = "G")]
    g: Option<usize>,
    windows: Option<Vec<usize>>,
    initial_h: Option<f64>,
    num_windows: Option<usize>,
    num_blocks: Option<usize>,
    hash_mode: Option<HashMode>,
    block_time_model: Option<BlockTimeModel>,
    ratio: Option<Vec<usize>>,
    restarts: Option<usize>,
    #[serde(default)]
    sweep: Vec<Sweep>,
    out_dir: Option<PathBuf>,
}

/// Validated configuration with every default filled in.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentConfig {
    pub experiment: Option<String>,
    #[serde(rename = "B")]
    pub b: f64,
    pub r: f64,
    pub c: f64,
    pub h: f64,
    #[serde(rename = "L")]
    pub l: u32,
    #[serde(rename = "N")]
    pub n: usize,
    /// Fixed block sizes; used by the single-block game experiments.
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub s: Vec<f64>,
    /// Per-block size distribution; used by the multi-block experiments.
    pub s_distribution: SizeDistribution,
    pub delta: f64,
    /// Finite-horizon length `T` for the repeated-game columns.
    pub horizon: usize,
    pub seed: u64,
    pub replications: Option<usize>,
    pub t0: f64,
    pub beta: f64,
    #[serde(rename = "R_th")]
    pub r_th: f64,
    #[serde(rename = "G")]
    pub g: usize,
    /// Window lengths compared by the block-time experiment.
    pub windows: Vec<usize>,
    pub initial_h: Option<f64>,
    pub num_windows: Option<usize>,
    pub num_blocks: usize,
    pub hash_mode: HashMode,
    pub block_time_model: BlockTimeModel,
    /// Nonce-length ratio for the ordering experiment.
    pub ratio: Vec<usize>,
    pub restarts: usize,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub sweep: Vec<Sweep>,
    pub out_dir: Option<PathBuf>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        normalize(RawConfig::default()).expect("defaults are valid")
    }
}

impl ExperimentConfig {
    pub fn params(&self) -> SystemParams {
        SystemParams {
            block_reward: self.b,
            fee_rate: self.r,
            hash_price: self.c,
            difficulty: self.h,
            nonce_bits: self.l,
        }
    }

    pub fn timing(&self) -> TimingParams {
        TimingParams {
            hash_time: self.t0,
            round_time: self.beta,
            target_rounds: self.r_th,
            window: self.g,
        }
    }

    pub fn sampler(&self) -> SizeSampler {
        SizeSampler::Uniform {
            users: self.n,
            low: self.s_distribution.low,
            high: self.s_distribution.high,
        }
    }

    /// The sweep over `parameter`, or `fallback` when none is configured.
    pub fn sweep_or(&self, parameter: &str, fallback: Sweep) -> Sweep {
        self.sweep
            .iter()
            .find(|s| s.parameter == parameter)
            .cloned()
            .unwrap_or(fallback)
    }

    pub fn replications_or(&self, fallback: usize) -> usize {
        self.replications.unwrap_or(fallback)
    }

    /// Effective configuration as TOML, written next to every run's outputs.
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }
}

pub fn parse(text: &str) -> Result<ExperimentConfig, ConfigError> {
    let raw: RawConfig = toml::from_str(text).map_err(|e| ConfigError {
        key: None,
        message: e.message().to_string(),
    })?;
    normalize(raw)
}

pub fn load(path: &Path) -> Result<ExperimentConfig, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|e| ConfigError {
        key: None,
        message: format!("cannot read {}: {e}", path.display()),
    })?;
    parse(&text)
}

const SWEEPABLE: [&str; 7] = ["B", "r", "c", "h", "N", "M", "G"];

fn normalize(raw: RawConfig) -> Result<ExperimentConfig, ConfigError> {
    let (n, s) = match (raw.n, raw.s) {
        (Some(n), Some(s)) if n != s.len() => {
            return Err(ConfigError::key("N", format!("N = {n} but s lists {} sizes", s.len())));
        }
        (_, Some(s)) => (s.len(), s),
        (Some(n), None) if n != DEFAULT_SIZES.len() => {
            if raw.s_distribution.is_none() {
                return Err(ConfigError::key(
                    "s",
                    format!("N = {n} needs an explicit s list or an s_distribution"),
                ));
            }
            (n, Vec::new())
        }
        _ => (DEFAULT_SIZES.len(), DEFAULT_SIZES.to_vec()),
    };
    let s_distribution = raw.s_distribution.unwrap_or(SizeDistribution {
        kind: uniform_kind(),
        low: 0.0,
        high: 1024.0,
    });
    if s_distribution.kind != "uniform" {
        return Err(ConfigError::key(
            "s_distribution",
            format!("unsupported kind `{}` (only `uniform`)", s_distribution.kind),
        ));
    }

    let defaults = SystemParams::default();
    let timing_defaults = TimingParams::default();
    let config = ExperimentConfig {
        experiment: raw.experiment,
        b: raw.b.unwrap_or(defaults.block_reward),
        r: raw.r.unwrap_or(defaults.fee_rate),
        c: raw.c.unwrap_or(defaults.hash_price),
        h: raw.h.unwrap_or(defaults.difficulty),
        l: raw.l.unwrap_or(defaults.nonce_bits),
        n,
        s,
        s_distribution,
        delta: raw.delta.unwrap_or(0.9),
        horizon: raw.horizon.unwrap_or(20),
        seed: raw.seed.unwrap_or(1),
        replications: raw.replications,
        t0: raw.t0.unwrap_or(timing_defaults.hash_time),
        beta: raw.beta.unwrap_or(timing_defaults.round_time),
        r_th: raw.r_th.unwrap_or(timing_defaults.target_rounds),
        g: raw.g.unwrap_or(timing_defaults.window),
        windows: raw.windows.unwrap_or_else(|| vec![10, 2]),
        initial_h: raw.initial_h,
        num_windows: raw.num_windows,
        num_blocks: raw.num_blocks.unwrap_or(200),
        hash_mode: raw.hash_mode.unwrap_or(HashMode::Analytic),
        block_time_model: raw.block_time_model.unwrap_or(BlockTimeModel::Expected),
        ratio: raw.ratio.unwrap_or_else(|| vec![1, 3, 6]),
        restarts: raw.restarts.unwrap_or(20),
        sweep: raw.sweep,
        out_dir: raw.out_dir,
    };
    validate(&config)?;
    Ok(config)
}

fn validate(config: &ExperimentConfig) -> Result<(), ConfigError> {
    config.params().validate()?;
    config.timing().validate()?;
    if config.n < 2 {
        return Err(ConfigError::key("N", format!("at least 2 users required, got {}", config.n)));
    }
    if let Some(s) = config.s.iter().find(|s| !(**s > 0.0 && s.is_finite())) {
        return Err(ConfigError::key("s", format!("block sizes must be positive, got {s}")));
    }
    config.sampler().validate().map_err(|e| match ConfigError::from(e) {
        ConfigError { key: Some(_), message } => ConfigError::key("s_distribution", message),
        other => other,
    })?;
    if !(0.0..1.0).contains(&config.delta) {
        return Err(ConfigError::key("delta", format!("must be in [0, 1), got {}", config.delta)));
    }
    if config.replications == Some(0) {
        return Err(ConfigError::key("replications", "must be >= 1"));
    }
    if config.windows.is_empty() || config.windows.contains(&0) {
        return Err(ConfigError::key("windows", "must be a non-empty list of positive window lengths"));
    }
    if let Some(h) = config.initial_h {
        if !(0.0..=f64::from(config.l)).contains(&h) {
            return Err(ConfigError::key("initial_h", format!("must satisfy 0 <= initial_h <= L, got {h}")));
        }
    }
    if config.num_windows == Some(0) {
        return Err(ConfigError::key("num_windows", "must be >= 1"));
    }
    if config.num_blocks == 0 {
        return Err(ConfigError::key("num_blocks", "must be >= 1"));
    }
    if config.ratio.len() < 2 || config.ratio.contains(&0) {
        return Err(ConfigError::key("ratio", "needs at least two positive entries"));
    }
    if config.restarts == 0 {
        return Err(ConfigError::key("restarts", "must be >= 1"));
    }
    for sweep in &config.sweep {
        if !SWEEPABLE.contains(&sweep.parameter.as_str()) {
            return Err(ConfigError::key(
                "sweep.parameter",
                format!("`{}` is not sweepable (one of {})", sweep.parameter, SWEEPABLE.join(", ")),
            ));
        }
        if !(sweep.from.is_finite() && sweep.to.is_finite() && sweep.from <= sweep.to) || (sweep.steps == 0 && sweep.from != sweep.to) {
            return Err(ConfigError::key(
                "sweep",
                format!("empty range for `{}`: from {} to {} in {} steps", sweep.parameter, sweep.from, sweep.to, sweep.steps),
            ));
        }
    }
    Ok(())
}

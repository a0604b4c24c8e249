//! Per-block transaction (block) size generation.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

/// Source of the per-user block sizes `s_j(g)` for each mined block.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SizeSampler {
    /// i.i.d. `Uniform(low, high]` per user and block.
    Uniform { users: usize, low: f64, high: f64 },
    /// The same sizes for every block.
    Constant { sizes: Vec<f64> },
    /// Row `g mod rows` is used for block `g`.
    Fixed { rows: Vec<Vec<f64>> },
}

impl SizeSampler {
    /// The setup used throughout the numerical study: `Uniform(0, 1024]`.
    pub fn default_uniform(users: usize) -> Self {
        Self::Uniform {
            users,
            low: 0.0,
            high: 1024.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |v: &[f64]| v.iter().all(|&s| s > 0.0 && s.is_finite());
        match self {
            Self::Uniform { users, low, high } => {
                if *users == 0 {
                    return Err(invalid("N", "at least one user required"));
                }
                if !(*low >= 0.0 && high > low && high.is_finite()) {
                    return Err(invalid("s", format!("bad uniform range ({low}, {high}]")));
                }
            }
            Self::Constant { sizes } => {
                if sizes.is_empty() || !positive(sizes) {
                    return Err(invalid("s", "sizes must be non-empty and positive"));
                }
            }
            Self::Fixed { rows } => {
                if rows.is_empty() || rows.iter().any(|r| r.is_empty() || !positive(r)) {
                    return Err(invalid("s", "fixed size rows must be non-empty and positive"));
                }
            }
        }
        Ok(())
    }

    pub fn users(&self) -> usize {
        match self {
            Self::Uniform { users, .. } => *users,
            Self::Constant { sizes } => sizes.len(),
            Self::Fixed { rows } => rows[0].len(),
        }
    }

    /// Expected size per user, used to calibrate a starting difficulty.
    pub fn mean_sizes(&self) -> Vec<f64> {
        match self {
            Self::Uniform { users, low, high } => vec![0.5 * (low + high); *users],
            Self::Constant { sizes } => sizes.clone(),
            Self::Fixed { rows } => {
                let n = rows[0].len();
                (0..n)
                    .map(|j| rows.iter().map(|r| r[j]).sum::<f64>() / rows.len() as f64)
                    .collect()
            }
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, block: usize, rng: &mut R) -> Vec<f64> {
        match self {
            // 1 - U lies in (0, 1], which keeps the lower end open.
            Self::Uniform { users, low, high } => (0..*users)
                .map(|_| low + (high - low) * (1.0 - rng.gen::<f64>()))
                .collect(),
            Self::Constant { sizes } => sizes.clone(),
            Self::Fixed { rows } => rows[block % rows.len()].clone(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn uniform_samples_stay_in_half_open_range() {
        let sampler = SizeSampler::default_uniform(3);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for g in 0..2000 {
            for s in sampler.sample(g, &mut rng) {
                assert!(s > 0.0 && s <= 1024.0);
            }
        }
    }

    #[test]
    fn fixed_rows_cycle() {
        let sampler = SizeSampler::Fixed {
            rows: vec![vec![1.0], vec![2.0]],
        };
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(sampler.sample(3, &mut rng), vec![2.0]);
        assert_eq!(sampler.mean_sizes(), vec![1.5]);
    }

    #[test]
    fn validation() {
        assert!(SizeSampler::Constant { sizes: vec![] }.validate().is_err());
        assert!(SizeSampler::Uniform { users: 2, low: 5.0, high: 1.0 }.validate().is_err());
        assert!(SizeSampler::default_uniform(3).validate().is_ok());
    }
}

//! Integer-minute random variates.

use rand::Rng;
use rand_distr::{Distribution as _, Exp, Normal};
use serde::{Deserialize, Serialize};

/// Rejection attempts before a truncated normal falls back to clamping.
const MAX_REJECTIONS: usize = 1000;

/// A distribution over whole minutes. Draws are rounded to the nearest
/// minute so every simulated time is an integer.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Distribution {
    Deterministic(f64),
    TruncNormal { mean: f64, sd: f64, min: f64, max: f64 },
    Exponential { mean: f64 },
    /// Integers in `[min, max]`, each equally likely.
    Uniform { min: i64, max: i64 },
}

impl Default for Distribution {
    fn default() -> Self {
        Distribution::Deterministic(0.0)
    }
}

impl Distribution {
    pub fn validate(&self) -> Result<(), String> {
        let finite = |x: f64, name: &str| {
            if x.is_finite() {
                Ok(())
            } else {
                Err(format!("{name} must be finite"))
            }
        };
        match *self {
            Distribution::Deterministic(m) => finite(m, "deterministic value"),
            Distribution::TruncNormal { mean, sd, min, max } => {
                finite(mean, "mean")?;
                finite(sd, "sd")?;
                finite(min, "min")?;
                finite(max, "max")?;
                if sd < 0.0 {
                    return Err("sd must be non-negative".into());
                }
                if min > max {
                    return Err("min must not exceed max".into());
                }
                Ok(())
            }
            Distribution::Exponential { mean } => {
                finite(mean, "mean")?;
                if mean <= 0.0 {
                    return Err("exponential mean must be positive".into());
                }
                Ok(())
            }
            Distribution::Uniform { min, max } => {
                if min > max {
                    return Err("min must not exceed max".into());
                }
                Ok(())
            }
        }
    }

    /// Smallest value a draw can take.
    pub fn lower_bound(&self) -> f64 {
        match *self {
            Distribution::Deterministic(m) => m.round(),
            Distribution::TruncNormal { min, .. } => min.round(),
            Distribution::Exponential { .. } => 0.0,
            Distribution::Uniform { min, .. } => min as f64,
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> i64 {
        match *self {
            Distribution::Deterministic(m) => m.round() as i64,
            Distribution::TruncNormal { mean, sd, min, max } => {
                if sd == 0.0 {
                    return mean.clamp(min, max).round() as i64;
                }
                let normal = Normal::new(mean, sd).expect("validated sd");
                for _ in 0..MAX_REJECTIONS {
                    let x = normal.sample(rng);
                    if (min..=max).contains(&x) {
                        return x.round() as i64;
                    }
                }
                mean.clamp(min, max).round() as i64
            }
            Distribution::Exponential { mean } => {
                let exp = Exp::new(1.0 / mean).expect("validated mean");
                exp.sample(rng).round() as i64
            }
            Distribution::Uniform { min, max } => rng.random_range(min..=max),
        }
    }
}

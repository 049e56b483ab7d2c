//! Closed-form and tabulated scalar profiles used for kernels `G_k` and the
//! forcing parts `g_k` of nonlinearities.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::DomainSpec;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ProfileError {
    #[error("tabulated profile has {got} samples, grid needs {expected}")]
    GridMismatch { expected: usize, got: usize },
    #[error("profile parameter `{0}` must be positive and finite")]
    BadParameter(&'static str),
}

/// A real function of one variable.
///
/// Families:
/// - `gaussian`: `A·exp(-(x-c)²/(2w²))`
/// - `odd-gaussian`: `A·x·exp(-x²/(2w²))`
/// - `cosine`: `A·cos(k·x + φ)`
/// - `linear`: `s·x + c`
/// - `tabulated`: samples on the problem grid (linear interpolation off-grid)
/// - `sum`: sum of other profiles
#[derive(Clone, Serialize, Deserialize)]
#[serde(tag = "family", content = "params", rename_all = "kebab-case")]
pub enum Profile {
    Zero,
    Gaussian {
        #[serde(default = "one")]
        amplitude: f64,
        #[serde(default = "one")]
        width: f64,
        #[serde(default)]
        center: f64,
    },
    OddGaussian {
        #[serde(default = "one")]
        amplitude: f64,
        #[serde(default = "one")]
        width: f64,
    },
    Cosine {
        #[serde(default = "one")]
        amplitude: f64,
        #[serde(default = "one")]
        frequency: f64,
        #[serde(default)]
        phase: f64,
    },
    Linear {
        slope: f64,
        #[serde(default)]
        intercept: f64,
    },
    Tabulated {
        samples: Vec<f64>,
    },
    Sum {
        terms: Vec<Profile>,
    },
    /// Arbitrary closure; API only.
    #[serde(skip)]
    Custom(Arc<dyn Fn(f64) -> f64 + Send + Sync>),
}

fn one() -> f64 {
    1.0
}

impl fmt::Debug for Profile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Profile::Zero => write!(f, "Zero"),
            Profile::Gaussian {
                amplitude,
                width,
                center,
            } => write!(f, "Gaussian({amplitude}, {width}, {center})"),
            Profile::OddGaussian { amplitude, width } => {
                write!(f, "OddGaussian({amplitude}, {width})")
            }
            Profile::Cosine {
                amplitude,
                frequency,
                phase,
            } => write!(f, "Cosine({amplitude}, {frequency}, {phase})"),
            Profile::Linear { slope, intercept } => write!(f, "Linear({slope}, {intercept})"),
            Profile::Tabulated { samples } => write!(f, "Tabulated(len={})", samples.len()),
            Profile::Sum { terms } => f.debug_list().entries(terms).finish(),
            Profile::Custom(_) => write!(f, "Custom(..)"),
        }
    }
}

impl Profile {
    pub fn gaussian() -> Self {
        Profile::Gaussian {
            amplitude: 1.0,
            width: 1.0,
            center: 0.0,
        }
    }

    pub fn odd_gaussian() -> Self {
        Profile::OddGaussian {
            amplitude: 1.0,
            width: 1.0,
        }
    }

    pub fn cosine(amplitude: f64, frequency: f64, phase: f64) -> Self {
        Profile::Cosine {
            amplitude,
            frequency,
            phase,
        }
    }

    pub fn custom<F: Fn(f64) -> f64 + Send + Sync + 'static>(f: F) -> Self {
        Profile::Custom(Arc::new(f))
    }

    pub fn scaled(self, factor: f64) -> Self {
        match self {
            Profile::Zero => Profile::Zero,
            Profile::Gaussian {
                amplitude,
                width,
                center,
            } => Profile::Gaussian {
                amplitude: amplitude * factor,
                width,
                center,
            },
            Profile::OddGaussian { amplitude, width } => Profile::OddGaussian {
                amplitude: amplitude * factor,
                width,
            },
            Profile::Cosine {
                amplitude,
                frequency,
                phase,
            } => Profile::Cosine {
                amplitude: amplitude * factor,
                frequency,
                phase,
            },
            Profile::Linear { slope, intercept } => Profile::Linear {
                slope: slope * factor,
                intercept: intercept * factor,
            },
            Profile::Tabulated { samples } => Profile::Tabulated {
                samples: samples.into_iter().map(|s| s * factor).collect(),
            },
            Profile::Sum { terms } => Profile::Sum {
                terms: terms.into_iter().map(|t| t.scaled(factor)).collect(),
            },
            Profile::Custom(f) => Profile::Custom(Arc::new(move |x| factor * f(x))),
        }
    }

    pub fn check(&self) -> Result<(), ProfileError> {
        match self {
            Profile::Gaussian { width, .. } | Profile::OddGaussian { width, .. } => {
                if !(width.is_finite() && *width > 0.0) {
                    return Err(ProfileError::BadParameter("width"));
                }
                Ok(())
            }
            Profile::Sum { terms } => terms.iter().try_for_each(Profile::check),
            _ => Ok(()),
        }
    }

    /// Value at an arbitrary point. Tabulated profiles need the grid they
    /// were sampled on.
    pub fn eval(&self, x: f64, domain: &DomainSpec) -> f64 {
        match self {
            Profile::Zero => 0.0,
            Profile::Gaussian {
                amplitude,
                width,
                center,
            } => {
                let z = (x - center) / width;
                amplitude * (-0.5 * z * z).exp()
            }
            Profile::OddGaussian { amplitude, width } => {
                let z = x / width;
                amplitude * x * (-0.5 * z * z).exp()
            }
            Profile::Cosine {
                amplitude,
                frequency,
                phase,
            } => amplitude * (frequency * x + phase).cos(),
            Profile::Linear { slope, intercept } => slope * x + intercept,
            Profile::Tabulated { samples } => interpolate(samples, x, domain),
            Profile::Sum { terms } => terms.iter().map(|t| t.eval(x, domain)).sum(),
            Profile::Custom(f) => f(x),
        }
    }

    /// Samples on the domain's physical grid.
    pub fn sample(&self, domain: &DomainSpec) -> Result<Vec<f64>, ProfileError> {
        self.check()?;
        if let Profile::Tabulated { samples } = self {
            if samples.len() != domain.sample_count() {
                return Err(ProfileError::GridMismatch {
                    expected: domain.sample_count(),
                    got: samples.len(),
                });
            }
            return Ok(samples.clone());
        }
        Ok(domain.nodes().into_iter().map(|x| self.eval(x, domain)).collect())
    }

    /// `|G(0) - G(2π)|`, the periodic continuity defect.
    pub fn periodic_defect(&self, domain: &DomainSpec) -> f64 {
        (self.eval(0.0, domain) - self.eval(2.0 * PI, domain)).abs()
    }
}

fn interpolate(samples: &[f64], x: f64, domain: &DomainSpec) -> f64 {
    let n = samples.len();
    if n == 0 {
        return 0.0;
    }
    let t = (x - domain.origin()) / domain.step();
    if domain.is_periodic() {
        let t = t.rem_euclid(n as f64);
        let i = t.floor() as usize % n;
        let frac = t - t.floor();
        samples[i] * (1.0 - frac) + samples[(i + 1) % n] * frac
    } else {
        if t <= 0.0 {
            return samples[0];
        }
        if t >= (n - 1) as f64 {
            return samples[n - 1];
        }
        let i = t.floor() as usize;
        let frac = t - i as f64;
        samples[i] * (1.0 - frac) + samples[i + 1] * frac
    }
}

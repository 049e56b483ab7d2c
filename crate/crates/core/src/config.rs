//! JSON run configuration.

use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::DomainSpec;
use crate::nonlinearity::{NonlinearityModel, Table1d};
use crate::problem::{EquationSpec, ProblemSpec};
use crate::profile::Profile;
use crate::solver::SolveOptions;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{path}: cannot read config: {source}")]
    Read {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("config parse error at line {line}, column {column}, field `{field}`: {message}")]
    Parse {
        field: String,
        line: usize,
        column: usize,
        message: String,
    },
    #[error("invalid config: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DomainKind {
    RealLine,
    Periodic,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EquationConfig {
    pub a: f64,
    #[serde(default)]
    pub b: Option<f64>,
    #[serde(default)]
    pub resonant_mode: Option<u32>,
    pub kernel: Profile,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "family", content = "params", rename_all = "kebab-case")]
pub enum NonlinearityConfig {
    Affine {
        matrix: Vec<Vec<f64>>,
        #[serde(default)]
        forcing: Option<Vec<Profile>>,
        #[serde(default)]
        declared_lipschitz: Option<f64>,
        #[serde(default)]
        declared_growth: Option<f64>,
    },
    Saturating {
        gains: Vec<f64>,
        couplings: Vec<Vec<f64>>,
        #[serde(default)]
        forcing: Option<Vec<Profile>>,
        #[serde(default)]
        declared_lipschitz: Option<f64>,
        #[serde(default)]
        declared_growth: Option<f64>,
    },
    Tabulated {
        couplings: Vec<Vec<f64>>,
        tables: Vec<Table1d>,
        #[serde(default)]
        forcing: Option<Vec<Profile>>,
        declared_lipschitz: f64,
        declared_growth: f64,
    },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemConfig {
    pub domain: DomainKind,
    pub equations: Vec<EquationConfig>,
    pub nonlinearity: NonlinearityConfig,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitialGuess {
    Zero,
    Random,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NumericsConfig {
    pub half_width: f64,
    pub grid_points: usize,
    pub mode_cutoff: usize,
    pub tol: f64,
    pub max_iter: usize,
    pub seed: u64,
    #[serde(alias = "strict_paper_mode")]
    pub strict_mode: bool,
    pub certified_mode: bool,
    pub allow_uncertified: bool,
    pub reference_mode: bool,
    pub initial: InitialGuess,
    pub audit_trials: usize,
}

impl Default for NumericsConfig {
    fn default() -> Self {
        NumericsConfig {
            half_width: 16.0,
            grid_points: 1024,
            mode_cutoff: 128,
            tol: 1e-10,
            max_iter: 500,
            seed: 0,
            strict_mode: false,
            certified_mode: true,
            allow_uncertified: false,
            reference_mode: false,
            initial: InitialGuess::Zero,
            audit_trials: 2000,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputConfig {
    pub directory: PathBuf,
    pub formats: Vec<Format>,
    pub residual_cadence: usize,
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig {
            directory: PathBuf::from("out"),
            formats: vec![Format::Csv, Format::Json],
            residual_cadence: 5,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub problem: ProblemConfig,
    #[serde(default)]
    pub numerics: NumericsConfig,
    #[serde(default)]
    pub outputs: OutputConfig,
}

fn matrix(rows: &[Vec<f64>], n: usize, what: &str) -> Result<DMatrix<f64>, ConfigError> {
    if rows.len() != n || rows.iter().any(|r| r.len() != n) {
        return Err(ConfigError::Invalid(format!("{what} must be {n}x{n}")));
    }
    Ok(DMatrix::from_fn(n, n, |i, j| rows[i][j]))
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let cfg: RunConfig = serde_path_to_error::deserialize(de).map_err(|e| {
            let field = e.path().to_string();
            let inner = e.into_inner();
            ConfigError::Parse {
                field,
                line: inner.line(),
                column: inner.column(),
                message: inner.to_string(),
            }
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
            path: path.display().to_string(),
            source,
        })?;
        Self::parse(&text)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let n = &self.numerics;
        if !(n.tol.is_finite() && n.tol > 0.0) {
            return Err(ConfigError::Invalid(format!("numerics.tol must be positive, got {}", n.tol)));
        }
        if n.max_iter == 0 {
            return Err(ConfigError::Invalid("numerics.max_iter must be at least 1".into()));
        }
        if self.outputs.formats.is_empty() {
            return Err(ConfigError::Invalid("outputs.formats must not be empty".into()));
        }
        if self.problem.equations.is_empty() {
            return Err(ConfigError::Invalid("problem.equations must not be empty".into()));
        }
        Ok(())
    }

    pub fn domain(&self) -> Result<DomainSpec, ConfigError> {
        let n = &self.numerics;
        let d = match self.problem.domain {
            DomainKind::RealLine => DomainSpec::real_line(n.half_width, n.grid_points),
            DomainKind::Periodic => DomainSpec::periodic(n.mode_cutoff),
        };
        d.map_err(|e| ConfigError::Invalid(e.to_string()))
    }

    pub fn problem_spec(&self) -> Result<ProblemSpec, ConfigError> {
        let domain = self.domain()?;
        let eqs = &self.problem.equations;
        let n = eqs.len();
        let forcing = |f: &Option<Vec<Profile>>| -> Result<Vec<Profile>, ConfigError> {
            match f {
                None => Ok(vec![Profile::Zero; n]),
                Some(v) if v.len() == n => Ok(v.clone()),
                Some(v) => Err(ConfigError::Invalid(format!("forcing has {} entries, expected {n}", v.len()))),
            }
        };
        let invalid = |e: crate::nonlinearity::NonlinearityError| ConfigError::Invalid(e.to_string());
        let nonlinearity = match &self.problem.nonlinearity {
            NonlinearityConfig::Affine {
                matrix: a,
                forcing: f,
                declared_lipschitz,
                declared_growth,
            } => {
                let mut m = NonlinearityModel::affine(matrix(a, n, "affine matrix")?, forcing(f)?).map_err(invalid)?;
                if let Some(l) = declared_lipschitz {
                    m = m.with_declared_lipschitz(*l);
                }
                if let Some(k) = declared_growth {
                    m = m.with_declared_growth(*k);
                }
                m
            }
            NonlinearityConfig::Saturating {
                gains,
                couplings,
                forcing: f,
                declared_lipschitz,
                declared_growth,
            } => {
                let mut m = NonlinearityModel::saturating(gains.clone(), matrix(couplings, n, "couplings")?, forcing(f)?)
                    .map_err(invalid)?;
                if let Some(l) = declared_lipschitz {
                    m = m.with_declared_lipschitz(*l);
                }
                if let Some(k) = declared_growth {
                    m = m.with_declared_growth(*k);
                }
                m
            }
            NonlinearityConfig::Tabulated {
                couplings,
                tables,
                forcing: f,
                declared_lipschitz,
                declared_growth,
            } => NonlinearityModel::tabulated(
                matrix(couplings, n, "couplings")?,
                tables.clone(),
                forcing(f)?,
                *declared_lipschitz,
                *declared_growth,
            )
            .map_err(invalid)?,
        };
        if !(nonlinearity.declared_lipschitz().is_finite() && nonlinearity.declared_lipschitz() >= 0.0) {
            return Err(ConfigError::Invalid("declared Lipschitz constant must be finite and nonnegative".into()));
        }
        Ok(ProblemSpec {
            domain,
            equations: eqs
                .iter()
                .map(|e| EquationSpec {
                    a: e.a,
                    b: e.b,
                    resonant_mode: e.resonant_mode,
                })
                .collect(),
            kernels: eqs.iter().map(|e| e.kernel.clone()).collect(),
            nonlinearity,
        })
    }

    pub fn solve_options(&self) -> SolveOptions {
        let n = &self.numerics;
        SolveOptions {
            tol: n.tol,
            max_iter: n.max_iter,
            allow_uncertified: n.allow_uncertified,
            certified_mode: n.certified_mode,
            residual_cadence: self.outputs.residual_cadence,
            reference_mode: n.reference_mode,
        }
    }
}

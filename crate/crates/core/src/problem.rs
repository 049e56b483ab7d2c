//! Problem description, case classification and constrained-subspace
//! bookkeeping.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::DomainSpec;
use crate::nonlinearity::NonlinearityModel;
use crate::profile::Profile;
use crate::RESONANCE_TOL;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ProblemError {
    #[error("equation {index}: {reason}")]
    InvalidEquation { index: usize, reason: String },
    #[error(
        "equation {index}: a = {a} is within {tol:e} of {mode}² but not equal; declare the resonant mode explicitly or move a away",
        tol = RESONANCE_TOL
    )]
    AmbiguousCase { index: usize, a: f64, mode: u64 },
}

/// Constants of one equation
/// `u'' + b u' + a u + ∫ G(x-y) F(u(y), y) dy = 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EquationSpec {
    pub a: f64,
    /// Drift coefficient; `None` for equations without a transport term.
    #[serde(default)]
    pub b: Option<f64>,
    /// Resonant Fourier mode `n_k` with `a = n_k²` (periodic only).
    #[serde(default)]
    pub resonant_mode: Option<u32>,
}

impl EquationSpec {
    pub fn drift(a: f64, b: f64) -> Self {
        EquationSpec {
            a,
            b: Some(b),
            resonant_mode: None,
        }
    }

    pub fn plain(a: f64) -> Self {
        EquationSpec {
            a,
            b: None,
            resonant_mode: None,
        }
    }

    pub fn resonant(mode: u32) -> Self {
        EquationSpec {
            a: f64::from(mode) * f64::from(mode),
            b: None,
            resonant_mode: Some(mode),
        }
    }

    pub fn has_drift(&self) -> bool {
        self.b.is_some()
    }

    /// Drift coefficient with absence read as zero.
    pub fn b_or_zero(&self) -> f64 {
        self.b.unwrap_or(0.0)
    }

    fn check(&self, index: usize) -> Result<(), ProblemError> {
        let bad = |reason: &str| ProblemError::InvalidEquation {
            index,
            reason: reason.to_string(),
        };
        if !(self.a.is_finite() && self.a >= 0.0) {
            return Err(bad("a must be finite and nonnegative"));
        }
        if let Some(b) = self.b {
            if !b.is_finite() || b == 0.0 {
                return Err(bad("drift coefficient b must be finite and nonzero"));
            }
        }
        if let Some(n) = self.resonant_mode {
            if n == 0 {
                return Err(bad("resonant mode must be a positive integer"));
            }
            if self.b.is_some() {
                return Err(bad("resonant mode requires an equation without drift"));
            }
            if self.a != f64::from(n) * f64::from(n) {
                return Err(bad("resonant mode n requires a = n² exactly"));
            }
        }
        Ok(())
    }
}

/// Case of one equation.
///
/// Real line: `Ra` (a>0, drift), `Rb` (a=0, drift), `Rc` (a>0, no drift),
/// `Rd` (a=0, no drift). Periodic: `Ia`, `Ib` as on the line, `Ic`
/// (a>0 with a ≠ n²), `Id` (a = n_k²), `Ie` (a=0, no drift).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum CaseTag {
    Ra,
    Rb,
    Rc,
    Rd,
    Ia,
    Ib,
    Ic,
    Id { mode: u32 },
    Ie,
}

impl CaseTag {
    /// Block position used by the strict ordering check.
    fn rank(&self) -> u8 {
        match self {
            CaseTag::Ra | CaseTag::Ia => 0,
            CaseTag::Rb | CaseTag::Ib => 1,
            CaseTag::Rc | CaseTag::Ic => 2,
            CaseTag::Rd | CaseTag::Id { .. } => 3,
            CaseTag::Ie => 4,
        }
    }

    pub fn is_drift(&self) -> bool {
        matches!(self, CaseTag::Ra | CaseTag::Rb | CaseTag::Ia | CaseTag::Ib)
    }

    pub fn label(&self) -> &'static str {
        match self {
            CaseTag::Ra => "R-a",
            CaseTag::Rb => "R-b",
            CaseTag::Rc => "R-c",
            CaseTag::Rd => "R-d",
            CaseTag::Ia => "I-a",
            CaseTag::Ib => "I-b",
            CaseTag::Ic => "I-c",
            CaseTag::Id { .. } => "I-d",
            CaseTag::Ie => "I-e",
        }
    }
}

impl fmt::Display for CaseTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CaseTag::Id { mode } => write!(f, "I-d(n={mode})"),
            t => f.write_str(t.label()),
        }
    }
}

/// `index` is 1-based and only used in diagnostics.
pub fn classify_indexed(eq: &EquationSpec, domain: &DomainSpec, index: usize) -> Result<CaseTag, ProblemError> {
    eq.check(index)?;
    let zero = eq.a == 0.0;
    match domain {
        DomainSpec::RealLine { .. } => {
            if eq.resonant_mode.is_some() {
                return Err(ProblemError::InvalidEquation {
                    index,
                    reason: "resonant modes only exist on the periodic interval".into(),
                });
            }
            Ok(match (eq.has_drift(), zero) {
                (true, false) => CaseTag::Ra,
                (true, true) => CaseTag::Rb,
                (false, false) => CaseTag::Rc,
                (false, true) => CaseTag::Rd,
            })
        }
        DomainSpec::Periodic { .. } => {
            if eq.has_drift() {
                return Ok(if zero { CaseTag::Ib } else { CaseTag::Ia });
            }
            if zero {
                return Ok(CaseTag::Ie);
            }
            if let Some(mode) = eq.resonant_mode {
                return Ok(CaseTag::Id { mode });
            }
            let n = eq.a.sqrt().round();
            let gap = (eq.a - n * n).abs();
            if gap == 0.0 {
                // exact square stated without a mode: the resonance is unambiguous
                return Ok(CaseTag::Id { mode: n as u32 });
            }
            if gap <= RESONANCE_TOL {
                return Err(ProblemError::AmbiguousCase {
                    index,
                    a: eq.a,
                    mode: n as u64,
                });
            }
            Ok(CaseTag::Ic)
        }
    }
}

pub fn classify_equation(eq: &EquationSpec, domain: &DomainSpec) -> Result<CaseTag, ProblemError> {
    classify_indexed(eq, domain, 1)
}

/// Full description of one system.
#[derive(Debug, Clone)]
pub struct ProblemSpec {
    pub domain: DomainSpec,
    pub equations: Vec<EquationSpec>,
    pub kernels: Vec<Profile>,
    pub nonlinearity: NonlinearityModel,
}

impl ProblemSpec {
    pub fn len(&self) -> usize {
        self.equations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.equations.is_empty()
    }

    /// Number of equations with a drift term.
    pub fn drift_count(&self) -> usize {
        self.equations.iter().filter(|e| e.has_drift()).count()
    }

    pub fn classify(&self) -> Result<Vec<CaseTag>, ProblemError> {
        self.equations
            .iter()
            .enumerate()
            .map(|(i, e)| classify_indexed(e, &self.domain, i + 1))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValidationReport {
    pub strict: bool,
    pub tags: Vec<Option<CaseTag>>,
    pub violations: Vec<String>,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Checks a problem. Violations are collected, never raised.
///
/// General mode only enforces what every per-equation argument needs. Strict
/// mode additionally demands the complete block layout: `N ≥ 4` (line) or `N ≥ 5` (interval), `K ≥ 2`, and every case
/// block present, in order.
pub fn validate_problem(spec: &ProblemSpec, strict: bool) -> ValidationReport {
    let mut violations = Vec::new();
    let n = spec.equations.len();

    if let Err(e) = spec.domain.validate() {
        violations.push(format!("domain: {e}"));
    }
    if n == 0 {
        violations.push("N≥1 violated: no equations".to_string());
    }
    if spec.kernels.len() != n {
        violations.push(format!("kernel count {} does not match N={n}", spec.kernels.len()));
    }
    if spec.nonlinearity.dimension() != n {
        violations.push(format!(
            "nonlinearity dimension {} does not match N={n}",
            spec.nonlinearity.dimension()
        ));
    }
    for (i, k) in spec.kernels.iter().enumerate() {
        if let Err(e) = k.sample(&spec.domain) {
            violations.push(format!("kernel {}: {e}", i + 1));
        } else if spec.domain.is_periodic() {
            let scale = spec
                .domain
                .nodes()
                .iter()
                .fold(0.0_f64, |m, &x| m.max(k.eval(x, &spec.domain).abs()));
            if k.periodic_defect(&spec.domain) > 1e-12 * scale.max(1.0) {
                violations.push(format!("kernel {}: G(0) ≠ G(2π)", i + 1));
            }
        }
    }

    let tags: Vec<Option<CaseTag>> = spec
        .equations
        .iter()
        .enumerate()
        .map(|(i, e)| match classify_indexed(e, &spec.domain, i + 1) {
            Ok(t) => Some(t),
            Err(err) => {
                violations.push(err.to_string());
                None
            }
        })
        .collect();

    if strict {
        let k = spec.drift_count();
        let (min_n, blocks) = if spec.domain.is_periodic() {
            (5, 5)
        } else {
            (4, 4)
        };
        if n < min_n {
            violations.push(format!("N≥{min_n} violated: N={n}"));
        }
        if k < 2 {
            violations.push(format!("K≥2 violated: K={k}"));
        }
        if n.saturating_sub(k) < blocks - 2 {
            violations.push(format!(
                "N-K≥{} violated: {} equations without drift",
                blocks - 2,
                n.saturating_sub(k)
            ));
        }
        if tags.iter().all(Option::is_some) {
            let ranks: Vec<u8> = tags.iter().flatten().map(CaseTag::rank).collect();
            if ranks.windows(2).any(|w| w[0] > w[1]) {
                violations.push("case blocks out of order (drift equations first, then cases in canonical order)".into());
            }
            for r in 0..blocks as u8 {
                if !ranks.contains(&r) {
                    let name = block_name(spec.domain.is_periodic(), r);
                    violations.push(format!("case {name} has no equation"));
                }
            }
        }
    }

    ValidationReport {
        strict,
        tags,
        violations,
    }
}

fn block_name(periodic: bool, rank: u8) -> &'static str {
    match (periodic, rank) {
        (false, 0) => "R-a",
        (false, 1) => "R-b",
        (false, 2) => "R-c",
        (false, _) => "R-d",
        (true, 0) => "I-a",
        (true, 1) => "I-b",
        (true, 2) => "I-c",
        (true, 3) => "I-d",
        (true, _) => "I-e",
    }
}

/// Fourier modes forced to zero, per equation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ConstraintSet {
    pub zero_modes: Vec<Vec<i64>>,
}

impl ConstraintSet {
    pub fn is_constrained(&self, k: usize, mode: i64) -> bool {
        self.zero_modes[k].contains(&mode)
    }

    pub fn modes(&self, k: usize) -> &[i64] {
        &self.zero_modes[k]
    }
}

pub fn constraint_modes(tag: CaseTag) -> Vec<i64> {
    match tag {
        CaseTag::Ib | CaseTag::Ie => vec![0],
        CaseTag::Id { mode } => vec![i64::from(mode), -i64::from(mode)],
        _ => Vec::new(),
    }
}

pub fn build_constraints(spec: &ProblemSpec) -> Result<ConstraintSet, ProblemError> {
    let tags = spec.classify()?;
    Ok(ConstraintSet {
        zero_modes: tags.into_iter().map(constraint_modes).collect(),
    })
}

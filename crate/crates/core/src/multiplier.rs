//! Solution multipliers `m_k(p) = Ĝ_k(p) / λ_k(p)` and the bound quantities
//! behind the contraction certificate.
//!
//! Where `λ_k` vanishes on the real line the orthogonality conditions make
//! the quotient removable. Inside a window around each zero the certified
//! near-zero values of `Ĝ` are subtracted from the numerator. Very close to
//! the zero the quotient is replaced by the Taylor expansion of the
//! numerator, built from derivatives obtained by quadrature.

use std::f64::consts::PI;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::domain::DomainSpec;
use crate::kernel::{check_orthogonality, symbol, KernelError, KernelSpectrum, OrthogonalityReport};
use crate::problem::{CaseTag, ConstraintSet, EquationSpec};
use crate::CERTIFIED_FACTOR;

/// Below this distance to a singular frequency the Taylor form is used.
pub const TAYLOR_RADIUS: f64 = 1e-2;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MultiplierError {
    #[error("equation {equation} ({tag}): condition {condition} fails (|raw| = {raw:e}, allowed {allowed:e})")]
    SolvabilityViolation {
        equation: usize,
        tag: CaseTag,
        condition: &'static str,
        raw: f64,
        allowed: f64,
    },
    #[error("multiplier of equation {equation} is not finite at p = {p}")]
    NonFinite { equation: usize, p: f64 },
    #[error("expected {expected} kernel spectra, got {got}")]
    Count { expected: usize, got: usize },
    #[error(transparent)]
    Kernel(#[from] KernelError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SingularWindow {
    pub center: f64,
    pub half_width: f64,
}

/// Windows where subtraction formulas replace the direct quotient.
pub fn singular_windows(tag: CaseTag, eq: &EquationSpec) -> Vec<SingularWindow> {
    match tag {
        CaseTag::Rb | CaseTag::Rd => vec![SingularWindow {
            center: 0.0,
            half_width: 1.0,
        }],
        CaseTag::Rc => {
            let s = eq.a.sqrt();
            let half_width = (s / 2.0).min(1.0);
            vec![
                SingularWindow { center: s, half_width },
                SingularWindow { center: -s, half_width },
            ]
        }
        _ => Vec::new(),
    }
}

fn require_pass(report: &OrthogonalityReport, equation: usize) -> Result<(), MultiplierError> {
    if let Some(c) = report.failures().next() {
        return Err(MultiplierError::SolvabilityViolation {
            equation,
            tag: report.tag,
            condition: c.name,
            raw: c.raw.norm(),
            allowed: crate::ORTHOGONALITY_TOL * c.scale,
        });
    }
    Ok(())
}

/// `Σ_{k ≥ from} d_k t^{k-from} / k!`
fn taylor_tail(derivs: &[Complex64], from: usize, t: f64) -> Complex64 {
    let mut sum = Complex64::new(0.0, 0.0);
    let mut fact = (1..=from).map(|i| i as f64).product::<f64>();
    let mut pow = 1.0;
    for (k, d) in derivs.iter().enumerate().skip(from) {
        if k > from {
            fact *= k as f64;
        }
        sum += d * (pow / fact);
        pow *= t;
    }
    sum
}

/// Multiplier at `p` given `Ĝ(p)`, assuming orthogonality already holds.
fn multiplier_with(eq: &EquationSpec, tag: CaseTag, ks: &KernelSpectrum, p: f64, g_p: Complex64) -> Result<Complex64, KernelError> {
    let lam = symbol(eq, p);
    match tag {
        CaseTag::Rb => {
            if p.abs() >= 1.0 {
                return Ok(g_p / lam);
            }
            let b = eq.b_or_zero();
            let drift = Complex64::new(p, -b);
            if p.abs() < TAYLOR_RADIUS {
                let d = &ks.special_value(0.0).ok_or(KernelError::MissingSpecialValue { point: 0.0 })?.derivs;
                return Ok(taylor_tail(d, 1, p) / drift);
            }
            let g0 = ks.derivative_at(0.0, 0)?;
            Ok((g_p - g0) / (p * drift))
        }
        CaseTag::Rd => {
            if p.abs() >= 1.0 {
                return Ok(g_p / lam);
            }
            if p.abs() < TAYLOR_RADIUS {
                let d = &ks.special_value(0.0).ok_or(KernelError::MissingSpecialValue { point: 0.0 })?.derivs;
                return Ok(taylor_tail(d, 2, p));
            }
            let g0 = ks.derivative_at(0.0, 0)?;
            let g1 = ks.derivative_at(0.0, 1)?;
            Ok((g_p - g0 - g1 * p) / (p * p))
        }
        CaseTag::Rc => {
            let root = eq.a.sqrt();
            let delta = (root / 2.0).min(1.0);
            for s in [root, -root] {
                let t = p - s;
                if t.abs() >= delta {
                    continue;
                }
                if t.abs() < TAYLOR_RADIUS {
                    let d = &ks.special_value(s).ok_or(KernelError::MissingSpecialValue { point: s })?.derivs;
                    return Ok(taylor_tail(d, 1, t) / (p + s));
                }
                let gs = ks.derivative_at(s, 0)?;
                return Ok((g_p - gs) / lam);
            }
            Ok(g_p / lam)
        }
        _ => Ok(g_p / lam),
    }
}

/// `Ĝ(p)/λ(p)` at an arbitrary frequency, checking solvability first.
pub fn eval_multiplier(eq: &EquationSpec, tag: CaseTag, ks: &KernelSpectrum, p: f64) -> Result<Complex64, MultiplierError> {
    let report = check_orthogonality(ks, tag, eq)?;
    require_pass(&report, 1)?;
    let g_p = ks.transform_at(p);
    let m = multiplier_with(eq, tag, ks, p, g_p)?;
    if !(m.re.is_finite() && m.im.is_finite()) {
        return Err(MultiplierError::NonFinite { equation: 1, p });
    }
    Ok(m)
}

/// Multipliers of every equation on the frequency grid. Constrained modes
/// hold exact zeros.
#[derive(Debug, Clone, Serialize)]
pub struct MultiplierTable {
    #[serde(skip)]
    pub domain: DomainSpec,
    pub tags: Vec<CaseTag>,
    pub values: Vec<Vec<Complex64>>,
    pub windows: Vec<Vec<SingularWindow>>,
}

impl MultiplierTable {
    pub fn build(
        equations: &[EquationSpec],
        tags: &[CaseTag],
        spectra: &[KernelSpectrum],
        constraints: &ConstraintSet,
    ) -> Result<Self, MultiplierError> {
        if spectra.len() != equations.len() || tags.len() != equations.len() {
            return Err(MultiplierError::Count {
                expected: equations.len(),
                got: spectra.len().min(tags.len()),
            });
        }
        let domain = *spectra
            .first()
            .map(|s| s.domain())
            .ok_or(MultiplierError::Count { expected: 1, got: 0 })?;
        let values = (0..equations.len())
            .into_par_iter()
            .map(|k| {
                let eq = &equations[k];
                let ks = &spectra[k];
                require_pass(&check_orthogonality(ks, tags[k], eq)?, k + 1)?;
                let spec = ks.base.spectrum();
                (0..domain.spectrum_len())
                    .map(|i| {
                        if constraints.is_constrained(k, domain.mode_of(i)) {
                            return Ok(Complex64::new(0.0, 0.0));
                        }
                        let p = domain.frequency(i);
                        let m = multiplier_with(eq, tags[k], ks, p, spec[i])?;
                        if !(m.re.is_finite() && m.im.is_finite()) {
                            return Err(MultiplierError::NonFinite { equation: k + 1, p });
                        }
                        Ok(m)
                    })
                    .collect::<Result<Vec<_>, MultiplierError>>()
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(MultiplierTable {
            domain,
            tags: tags.to_vec(),
            windows: tags.iter().zip(equations).map(|(t, e)| singular_windows(*t, e)).collect(),
            values,
        })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Per-equation bound `max_p max(|m(p)|, |p² m(p)|)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EquationBound {
    pub value: f64,
    pub at: f64,
    pub drift: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ContractionCertificate {
    pub per_equation: Vec<EquationBound>,
    /// Maximum over equations with drift (0 when there are none).
    pub drift_max: f64,
    /// Maximum over equations without drift (0 when there are none).
    pub plain_max: f64,
    pub q: f64,
    pub lipschitz: f64,
    pub factor: f64,
    pub pass: bool,
    /// `factor ≤ 0.95`.
    pub certified: bool,
    /// Frequency step and largest |p| of the grid the maxima were taken on.
    pub resolution: (f64, f64),
}

impl ContractionCertificate {
    pub fn status(&self) -> &'static str {
        if self.certified {
            "certified"
        } else if self.pass {
            "uncertified-convergent"
        } else {
            "failed"
        }
    }
}

pub fn compute_bounds(table: &MultiplierTable) -> ContractionCertificate {
    let d = &table.domain;
    let per_equation: Vec<EquationBound> = table
        .values
        .iter()
        .zip(&table.tags)
        .map(|(vals, tag)| {
            let mut best = EquationBound {
                value: 0.0,
                at: 0.0,
                drift: tag.is_drift(),
            };
            for (i, m) in vals.iter().enumerate() {
                let p = d.frequency(i);
                let v = m.norm().max(p * p * m.norm());
                if v > best.value {
                    best.value = v;
                    best.at = p;
                }
            }
            best
        })
        .collect();
    let group = |drift: bool| {
        per_equation
            .iter()
            .filter(|b| b.drift == drift)
            .fold(0.0_f64, |m, b| m.max(b.value))
    };
    let drift_max = group(true);
    let plain_max = group(false);
    ContractionCertificate {
        q: drift_max.max(plain_max),
        drift_max,
        plain_max,
        per_equation,
        lipschitz: 0.0,
        factor: 0.0,
        pass: true,
        certified: true,
        resolution: d.resolution(),
    }
}

/// Fills in `factor = 2√π·Q·L` and the verdicts.
pub fn contraction_certificate(mut bounds: ContractionCertificate, lipschitz: f64) -> ContractionCertificate {
    bounds.lipschitz = lipschitz;
    bounds.factor = 2.0 * PI.sqrt() * bounds.q * lipschitz;
    bounds.pass = bounds.factor < 1.0;
    bounds.certified = bounds.factor <= CERTIFIED_FACTOR;
    bounds
}

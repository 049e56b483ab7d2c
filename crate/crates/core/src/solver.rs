//! Spectral application of the auxiliary map and its Picard iteration.

use std::f64::consts::PI;
use std::time::Instant;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::domain::DomainSpec;
use crate::fourier::{h2_norm, FourierError, SpectralField, VectorField};
use crate::kernel::{check_orthogonality, essential_spectrum, required_special_points, EssentialSpectrum, KernelError, KernelSpectrum, OrthogonalityReport};
use crate::multiplier::{compute_bounds, contraction_certificate, ContractionCertificate, MultiplierError, MultiplierTable};
use crate::nonlinearity::{eval_f, NonlinearityError};
use crate::oracle::{residual_physical, OracleError, ResidualReport};
use crate::problem::{build_constraints, validate_problem, CaseTag, ConstraintSet, ProblemError, ProblemSpec, ValidationReport};
use crate::{ORTHOGONALITY_TOL, SUPPORT_TOL};

#[derive(Debug, Error)]
pub enum SolverError {
    #[error("invalid problem: {}", .0.join("; "))]
    Invalid(Vec<String>),
    #[error(transparent)]
    Problem(#[from] ProblemError),
    #[error(transparent)]
    Kernel(#[from] KernelError),
    #[error(transparent)]
    Multiplier(#[from] MultiplierError),
    #[error(transparent)]
    Fourier(#[from] FourierError),
    #[error(transparent)]
    Nonlinearity(#[from] NonlinearityError),
    #[error(transparent)]
    Oracle(#[from] OracleError),
    #[error("equation {equation}: forcing coefficient {value:e} at constrained mode {mode} exceeds {allowed:e}")]
    ConstraintInconsistency {
        equation: usize,
        mode: i64,
        value: f64,
        allowed: f64,
    },
    #[error("contraction certificate refused: factor {factor} ({status})")]
    CertificateFailed { factor: f64, status: &'static str },
    #[error("no convergence after {iterations} steps: last increment {increment:e}")]
    NoConvergence {
        iterations: usize,
        increment: f64,
        trace: Box<IterationTrace>,
    },
    #[error("observed contraction ratio {ratio} exceeds bound {bound} (pair {pair})")]
    ContractionViolation { ratio: f64, bound: f64, pair: usize },
    #[error("thread pool: {0}")]
    ThreadPool(String),
}

/// Everything known about a problem before iterating.
#[derive(Debug, Clone)]
pub struct Analysis {
    pub validation: ValidationReport,
    pub tags: Vec<CaseTag>,
    pub constraints: ConstraintSet,
    pub spectra: Vec<KernelSpectrum>,
    pub orthogonality: Vec<OrthogonalityReport>,
    pub essential: Vec<EssentialSpectrum>,
    /// `Err` when some orthogonality condition fails.
    pub table: Result<MultiplierTable, MultiplierError>,
    pub certificate: Option<ContractionCertificate>,
}

impl Analysis {
    pub fn solvable(&self) -> bool {
        self.table.is_ok()
    }

    pub fn table(&self) -> Result<&MultiplierTable, SolverError> {
        self.table.as_ref().map_err(|e| SolverError::Multiplier(e.clone()))
    }

    pub fn certificate(&self) -> Result<&ContractionCertificate, SolverError> {
        self.table()?;
        Ok(self.certificate.as_ref().expect("certificate accompanies the table"))
    }
}

/// Classifies, analyzes kernels, builds multipliers and the certificate.
///
/// Layout problems (and, with `strict`, the full block layout) are hard
/// errors. Failing orthogonality is recorded in the result instead.
pub fn analyze(problem: &ProblemSpec, strict: bool) -> Result<Analysis, SolverError> {
    let validation = validate_problem(problem, strict);
    if !validation.passed() {
        return Err(SolverError::Invalid(validation.violations));
    }
    let d = &problem.domain;
    let tags = problem.classify()?;
    let constraints = build_constraints(problem)?;
    let spectra = problem
        .kernels
        .par_iter()
        .zip(&problem.equations)
        .zip(&tags)
        .map(|((g, eq), tag)| KernelSpectrum::from_profile(g, d, &required_special_points(*tag, eq)))
        .collect::<Result<Vec<_>, _>>()?;
    let orthogonality = spectra
        .iter()
        .zip(&tags)
        .zip(&problem.equations)
        .map(|((ks, tag), eq)| check_orthogonality(ks, *tag, eq))
        .collect::<Result<Vec<_>, _>>()?;
    let essential = problem.equations.iter().map(|eq| essential_spectrum(eq, d, &[])).collect();
    let table = MultiplierTable::build(&problem.equations, &tags, &spectra, &constraints);
    let certificate = table
        .as_ref()
        .ok()
        .map(|t| contraction_certificate(compute_bounds(t), problem.nonlinearity.declared_lipschitz()));
    Ok(Analysis {
        validation,
        tags,
        constraints,
        spectra,
        orthogonality,
        essential,
        table,
        certificate,
    })
}

/// One application of the auxiliary map:
/// `û_k = √(2π)·m_k(p)·F̂_k(v)(p)`, constrained modes and the real-line
/// Nyquist bin set to zero.
pub fn apply_map(v: &VectorField, problem: &ProblemSpec, analysis: &Analysis) -> Result<VectorField, SolverError> {
    let table = analysis.table()?;
    let f = eval_f(&problem.nonlinearity, v)?;
    let d = *v.domain();
    let root = (2.0 * PI).sqrt();
    let comps = (0..problem.len())
        .into_par_iter()
        .map(|k| {
            let fk = f.component(k).spectrum();
            let gk = analysis.spectra[k].base.spectrum();
            let f_scale = fk.iter().fold(0.0_f64, |m, c| m.max(c.norm()));
            let allowed = ORTHOGONALITY_TOL * root * analysis.spectra[k].scale() * f_scale;
            for &mode in analysis.constraints.modes(k) {
                if let Some(i) = d.index_of(mode) {
                    let value = (root * gk[i] * fk[i]).norm();
                    if value > allowed {
                        return Err(SolverError::ConstraintInconsistency {
                            equation: k + 1,
                            mode,
                            value,
                            allowed,
                        });
                    }
                }
            }
            let mut u: Vec<Complex64> = table.values[k].iter().zip(fk).map(|(m, f)| root * m * f).collect();
            if let Some(i) = d.unpaired_index() {
                u[i] = Complex64::new(0.0, 0.0);
            }
            Ok(SpectralField::from_spectrum(d, u)?)
        })
        .collect::<Result<Vec<_>, SolverError>>()?;
    Ok(VectorField::new(comps)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TraceRow {
    pub step: usize,
    pub increment_h2: f64,
    pub ratio: Option<f64>,
    pub residual_l2: Option<f64>,
    pub wall_ms: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct IterationTrace {
    pub rows: Vec<TraceRow>,
}

impl IterationTrace {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn max_ratio_from(&self, step: usize) -> Option<f64> {
        self.rows.iter().filter(|r| r.step >= step).filter_map(|r| r.ratio).reduce(f64::max)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveOptions {
    pub tol: f64,
    pub max_iter: usize,
    /// Iterate even when the certificate does not allow it.
    pub allow_uncertified: bool,
    /// Demand `factor ≤ 0.95`; otherwise `factor < 1` suffices.
    pub certified_mode: bool,
    /// Residual audit every this many steps; 0 disables it.
    pub residual_cadence: usize,
    /// Single thread and zero wall times, for byte-stable traces.
    pub reference_mode: bool,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions {
            tol: 1e-10,
            max_iter: 500,
            allow_uncertified: false,
            certified_mode: true,
            residual_cadence: 5,
            reference_mode: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum SolveStatus {
    Certified,
    UncertifiedConvergent,
    Override,
}

#[derive(Debug, Clone)]
pub struct Solution {
    pub fixed_point: VectorField,
    pub trace: IterationTrace,
    pub certificate: ContractionCertificate,
    pub status: SolveStatus,
    /// `δ_1·factor^m / (1 - factor)` when `factor < 1`.
    pub a_priori_bound: Option<f64>,
    /// `factor·δ_m / (1 - factor)` when `factor < 1`.
    pub a_posteriori_bound: Option<f64>,
    pub residual: ResidualReport,
    pub nontrivial: Nontriviality,
}

/// Runs `f` on one thread when `single` is set.
pub fn with_threads<T: Send, F: FnOnce() -> T + Send>(single: bool, f: F) -> Result<T, SolverError> {
    if !single {
        return Ok(f());
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(1)
        .build()
        .map_err(|e| SolverError::ThreadPool(e.to_string()))?;
    Ok(pool.install(f))
}

/// Iterates `v ← T(v)` from `v0`.
///
/// Stops once the increment is below `tol`, or, for a certified factor,
/// once the a-posteriori distance bound `factor·δ/(1-factor)` is.
pub fn picard_solve(problem: &ProblemSpec, analysis: &Analysis, v0: &VectorField, opts: &SolveOptions) -> Result<Solution, SolverError> {
    let cert = analysis.certificate()?.clone();
    let status = if cert.certified {
        SolveStatus::Certified
    } else if cert.pass && !opts.certified_mode {
        SolveStatus::UncertifiedConvergent
    } else if opts.allow_uncertified {
        SolveStatus::Override
    } else {
        return Err(SolverError::CertificateFailed {
            factor: cert.factor,
            status: cert.status(),
        });
    };
    with_threads(opts.reference_mode, || iterate(problem, analysis, v0, opts, cert, status))?
}

fn iterate(
    problem: &ProblemSpec,
    analysis: &Analysis,
    v0: &VectorField,
    opts: &SolveOptions,
    cert: ContractionCertificate,
    status: SolveStatus,
) -> Result<Solution, SolverError> {
    let factor = cert.factor;
    let use_bound = cert.certified;
    let mut trace = IterationTrace::default();
    let mut v = v0.clone();
    let mut prev: Option<f64> = None;
    let mut first = None;
    for step in 1..=opts.max_iter {
        let start = Instant::now();
        let next = apply_map(&v, problem, analysis)?;
        let delta = h2_norm(&next.sub(&v)?);
        let residual_l2 = if opts.residual_cadence > 0 && step % opts.residual_cadence == 0 {
            Some(residual_physical(&next, problem)?.l2)
        } else {
            None
        };
        let wall_ms = if opts.reference_mode {
            0.0
        } else {
            start.elapsed().as_secs_f64() * 1e3
        };
        trace.rows.push(TraceRow {
            step,
            increment_h2: delta,
            ratio: prev.filter(|p| *p > 0.0).map(|p| delta / p),
            residual_l2,
            wall_ms,
        });
        first.get_or_insert(delta);
        prev = Some(delta);
        v = next;
        let posterior = factor * delta / (1.0 - factor);
        if delta <= opts.tol || (use_bound && posterior <= opts.tol) {
            let bounded = factor < 1.0;
            return Ok(Solution {
                residual: residual_physical(&v, problem)?,
                nontrivial: nontriviality_check(problem, analysis)?,
                fixed_point: v,
                trace,
                a_priori_bound: bounded.then(|| first.unwrap_or(0.0) * factor.powi(step as i32) / (1.0 - factor)),
                a_posteriori_bound: bounded.then_some(posterior),
                certificate: cert,
                status,
            });
        }
    }
    Err(SolverError::NoConvergence {
        iterations: opts.max_iter,
        increment: prev.unwrap_or(f64::NAN),
        trace: Box::new(trace),
    })
}

/// Smooth random field with rapidly decaying spectrum and tails.
pub fn random_field(domain: &DomainSpec, n: usize, rng: &mut ChaCha8Rng) -> Result<VectorField, SolverError> {
    let nodes = domain.nodes();
    let comps = (0..n)
        .map(|_| {
            let mut s = vec![0.0; nodes.len()];
            match *domain {
                DomainSpec::Periodic { .. } => {
                    let c0: f64 = rng.random_range(-1.0..1.0);
                    s.iter_mut().for_each(|v| *v = c0);
                    for m in 1..=8 {
                        let (a, b): (f64, f64) = (rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
                        let w = 1.0 / (m * m) as f64;
                        for (v, x) in s.iter_mut().zip(&nodes) {
                            *v += w * (a * (m as f64 * x).cos() + b * (m as f64 * x).sin());
                        }
                    }
                }
                DomainSpec::RealLine { half_width, .. } => {
                    let scale = (half_width / 16.0).min(1.0);
                    for _ in 0..4 {
                        let amp: f64 = rng.random_range(-1.0..1.0);
                        let center = rng.random_range(-half_width / 8.0..half_width / 8.0);
                        let width = scale * rng.random_range(0.5..1.5);
                        let freq: f64 = rng.random_range(0.0..2.0);
                        let phase: f64 = rng.random_range(0.0..2.0 * PI);
                        for (v, x) in s.iter_mut().zip(&nodes) {
                            let z = (x - center) / width;
                            *v += amp * (-0.5 * z * z).exp() * (freq * x + phase).cos();
                        }
                    }
                }
            }
            s
        })
        .collect();
    Ok(VectorField::from_physical(*domain, comps)?)
}

/// `‖T v¹ - T v²‖ / ‖v¹ - v²‖` in H², or `None` for coincident inputs.
pub fn contraction_ratio(v1: &VectorField, v2: &VectorField, problem: &ProblemSpec, analysis: &Analysis) -> Result<Option<f64>, SolverError> {
    let den = h2_norm(&v1.sub(v2)?);
    if den == 0.0 {
        return Ok(None);
    }
    let t1 = apply_map(v1, problem, analysis)?;
    let t2 = apply_map(v2, problem, analysis)?;
    Ok(Some(h2_norm(&t1.sub(&t2)?) / den))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ContractionProbe {
    pub max_ratio: f64,
    pub pairs: usize,
    pub skipped: usize,
    pub factor: f64,
}

/// Largest observed ratio over seeded random pairs, checked against the
/// certificate factor.
pub fn empirical_contraction(problem: &ProblemSpec, analysis: &Analysis, pairs: usize, seed: u64) -> Result<ContractionProbe, SolverError> {
    let factor = analysis.certificate()?.factor;
    let bound = factor * (1.0 + 1e-6) + 1e-10;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut max_ratio = 0.0_f64;
    let mut skipped = 0;
    for pair in 0..pairs {
        let v1 = random_field(&problem.domain, problem.len(), &mut rng)?;
        let v2 = random_field(&problem.domain, problem.len(), &mut rng)?;
        match contraction_ratio(&v1, &v2, problem, analysis)? {
            None => skipped += 1,
            Some(r) => {
                if r > bound {
                    return Err(SolverError::ContractionViolation { ratio: r, bound, pair });
                }
                max_ratio = max_ratio.max(r);
            }
        }
    }
    Ok(ContractionProbe {
        max_ratio,
        pairs,
        skipped,
        factor,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SupportEvidence {
    /// `Δp`-weighted count on the line, mode count on the interval.
    pub measure: f64,
    /// Up to five `(frequency, |Ĝ|·|F̂|)` pairs, largest first.
    pub top: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Nontriviality {
    pub nontrivial: bool,
    pub per_equation: Vec<SupportEvidence>,
}

/// Overlap of the supports of `Ĝ_k` and `F̂_k(0, ·)` away from constrained
/// modes. Without overlap the map sends everything near zero to zero.
pub fn nontriviality_check(problem: &ProblemSpec, analysis: &Analysis) -> Result<Nontriviality, SolverError> {
    let d = problem.domain;
    let f0 = eval_f(&problem.nonlinearity, &VectorField::zeros(d, problem.len()))?;
    let weight = if d.is_periodic() { 1.0 } else { d.frequency_step() };
    let per_equation: Vec<SupportEvidence> = (0..problem.len())
        .map(|k| {
            let g = analysis.spectra[k].base.spectrum();
            let f = f0.component(k).spectrum();
            let gmax = g.iter().fold(0.0_f64, |m, c| m.max(c.norm()));
            let fmax = f.iter().fold(0.0_f64, |m, c| m.max(c.norm()));
            let threshold = SUPPORT_TOL * gmax * fmax;
            let mut hits: Vec<(f64, f64)> = (0..d.spectrum_len())
                .filter(|&i| !analysis.constraints.is_constrained(k, d.mode_of(i)) && Some(i) != d.unpaired_index())
                .map(|i| (d.frequency(i), g[i].norm() * f[i].norm()))
                .filter(|&(_, v)| v > threshold)
                .collect();
            let measure = hits.len() as f64 * weight;
            hits.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.total_cmp(&b.0)));
            hits.truncate(5);
            SupportEvidence { measure, top: hits }
        })
        .collect();
    Ok(Nontriviality {
        nontrivial: per_equation.iter().any(|e| e.measure > 0.0),
        per_equation,
    })
}

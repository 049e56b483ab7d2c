//! Physical-space checks that share no code with the spectral pipeline:
//! finite-difference residuals, direct quadrature convolution, Riemann sums
//! for Fourier coefficients, and fixtures with known answers.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::domain::DomainSpec;
use crate::fourier::{TruncationWarning, VectorField};
use crate::nonlinearity::{NonlinearityError, NonlinearityModel};
use crate::problem::{EquationSpec, ProblemSpec};
use crate::profile::{Profile, ProfileError};
use crate::quadrature::wrapped_simpson_weights;

/// Smallest grid the five-point stencils accept.
pub const MIN_POINTS: usize = 9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OracleError {
    #[error("grid has {points} points; the fourth-order stencil needs at least {MIN_POINTS}")]
    GridTooCoarse { points: usize },
    #[error("sample count {got} does not match the grid ({expected})")]
    GridMismatch { expected: usize, got: usize },
    #[error("field has {got} components, problem has {expected} equations")]
    ComponentMismatch { expected: usize, got: usize },
    #[error("Fourier coefficients need the periodic interval")]
    NotPeriodic,
    #[error(transparent)]
    Nonlinearity(#[from] NonlinearityError),
    #[error(transparent)]
    Profile(#[from] ProfileError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EquationResidual {
    pub l2: f64,
    pub sup: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResidualReport {
    pub per_equation: Vec<EquationResidual>,
    /// `(Σ_k ‖r_k‖²)^{1/2}`.
    pub l2: f64,
    pub sup: f64,
    pub method: &'static str,
    /// Grid points where the residual was measured.
    pub points: usize,
    pub truncation: Vec<(usize, TruncationWarning)>,
}

/// `h·Σ_j w_j G(x_i - x_j) f_j` by composite Simpson.
///
/// On the interval indices wrap. On the line `G` vanishes outside the box
/// and the closing node at `X` reuses the sample at `-X`.
pub fn direct_convolution(g: &[f64], f: &[f64], domain: &DomainSpec) -> Result<Vec<f64>, OracleError> {
    let m = domain.sample_count();
    for len in [g.len(), f.len()] {
        if len != m {
            return Err(OracleError::GridMismatch { expected: m, got: len });
        }
    }
    let w = wrapped_simpson_weights(m, domain.step());
    let wf: Vec<f64> = w.iter().zip(f).map(|(a, b)| a * b).collect();
    let periodic = domain.is_periodic();
    let half = (m / 2) as isize;
    Ok((0..m)
        .into_par_iter()
        .map(|i| {
            let mut acc = 0.0;
            for (j, v) in wf.iter().enumerate() {
                if *v == 0.0 {
                    continue;
                }
                let d = i as isize - j as isize;
                let gk = if periodic {
                    g[d.rem_euclid(m as isize) as usize]
                } else {
                    let k = d + half;
                    if k == m as isize {
                        g[0]
                    } else if k < 0 || k > m as isize {
                        0.0
                    } else {
                        g[k as usize]
                    }
                };
                acc += gk * v;
            }
            acc
        })
        .collect())
}

/// `∫_0^{2π} G(x) e^{-inx} dx / √(2π)` for each requested `n`, by Simpson.
pub fn riemann_coefficients(g: &[f64], modes: &[i64], domain: &DomainSpec) -> Result<Vec<Complex64>, OracleError> {
    if !domain.is_periodic() {
        return Err(OracleError::NotPeriodic);
    }
    let m = domain.sample_count();
    if g.len() != m {
        return Err(OracleError::GridMismatch { expected: m, got: g.len() });
    }
    let w = wrapped_simpson_weights(m, domain.step());
    let nodes = domain.nodes();
    let norm = 1.0 / (2.0 * PI).sqrt();
    Ok(modes
        .iter()
        .map(|&n| {
            g.iter()
                .zip(&w)
                .zip(&nodes)
                .map(|((gj, wj), x)| Complex64::from_polar(gj * wj * norm, -(n as f64) * x))
                .sum()
        })
        .collect())
}

/// Fourth-order first and second differences at node `j`, or `None` when
/// the stencil leaves a non-periodic grid.
fn derivatives(u: &[f64], j: usize, h: f64, periodic: bool) -> Option<(f64, f64)> {
    let m = u.len() as isize;
    let at = |o: isize| -> Option<f64> {
        let i = j as isize + o;
        if periodic {
            Some(u[i.rem_euclid(m) as usize])
        } else if (0..m).contains(&i) {
            Some(u[i as usize])
        } else {
            None
        }
    };
    let (um2, um1, u0, up1, up2) = (at(-2)?, at(-1)?, at(0)?, at(1)?, at(2)?);
    let d1 = (-up2 + 8.0 * up1 - 8.0 * um1 + um2) / (12.0 * h);
    let d2 = (-up2 + 16.0 * up1 - 30.0 * u0 + 16.0 * um1 - um2) / (12.0 * h * h);
    Some((d1, d2))
}

/// `F(u(x_j), x_j)` sampled node by node.
fn pointwise_f(model: &NonlinearityModel, u: &[Vec<f64>], domain: &DomainSpec) -> Result<Vec<Vec<f64>>, OracleError> {
    let n = u.len();
    let nodes = domain.nodes();
    let mut out = vec![vec![0.0; nodes.len()]; n];
    let mut point = vec![0.0; n];
    let mut value = vec![0.0; n];
    for (j, &x) in nodes.iter().enumerate() {
        for k in 0..n {
            point[k] = u[k][j];
        }
        model.eval_point(&point, x, domain, &mut value);
        for k in 0..n {
            if !value[k].is_finite() {
                return Err(NonlinearityError::NonFiniteValue { component: k + 1, node: j }.into());
            }
            out[k][j] = value[k];
        }
    }
    Ok(out)
}

/// Residual of `u_k'' + b_k u_k' + a_k u_k + ∫ G_k(x-y) F_k(u(y), y) dy`.
///
/// The line skips two nodes at each end, where the stencil does not fit.
pub fn residual_samples(samples: &[Vec<f64>], problem: &ProblemSpec) -> Result<(Vec<Vec<f64>>, usize), OracleError> {
    let d = &problem.domain;
    let m = d.sample_count();
    if m < MIN_POINTS {
        return Err(OracleError::GridTooCoarse { points: m });
    }
    if samples.len() != problem.len() {
        return Err(OracleError::ComponentMismatch {
            expected: problem.len(),
            got: samples.len(),
        });
    }
    if let Some(s) = samples.iter().find(|s| s.len() != m) {
        return Err(OracleError::GridMismatch { expected: m, got: s.len() });
    }
    let periodic = d.is_periodic();
    let h = d.step();
    let f = pointwise_f(&problem.nonlinearity, samples, d)?;
    let range = if periodic { 0..m } else { 2..m - 2 };
    let mut out = Vec::with_capacity(problem.len());
    for (k, eq) in problem.equations.iter().enumerate() {
        let g = problem.kernels[k].sample(d)?;
        let conv = direct_convolution(&g, &f[k], d)?;
        let u = &samples[k];
        let b = eq.b_or_zero();
        let r: Vec<f64> = range
            .clone()
            .map(|j| {
                let (d1, d2) = derivatives(u, j, h, periodic).expect("stencil inside range");
                d2 + b * d1 + eq.a * u[j] + conv[j]
            })
            .collect();
        out.push(r);
    }
    Ok((out, range.len()))
}

pub fn residual_physical(u: &VectorField, problem: &ProblemSpec) -> Result<ResidualReport, OracleError> {
    let samples: Vec<Vec<f64>> = u.components().iter().map(|c| c.physical().to_vec()).collect();
    let mut report = residual_report(&samples, problem)?;
    report.truncation = u.truncation_warnings();
    Ok(report)
}

/// As [`residual_physical`] for raw samples, such as a solution file.
pub fn residual_report(samples: &[Vec<f64>], problem: &ProblemSpec) -> Result<ResidualReport, OracleError> {
    let (r, points) = residual_samples(samples, problem)?;
    let h = problem.domain.step();
    let per_equation: Vec<EquationResidual> = r
        .iter()
        .map(|rk| EquationResidual {
            l2: (h * rk.iter().map(|v| v * v).sum::<f64>()).sqrt(),
            sup: rk.iter().fold(0.0_f64, |m, v| m.max(v.abs())),
        })
        .collect();
    Ok(ResidualReport {
        l2: per_equation.iter().map(|e| e.l2 * e.l2).sum::<f64>().sqrt(),
        sup: per_equation.iter().fold(0.0_f64, |m, e| m.max(e.sup)),
        per_equation,
        method: "fourth-order centered differences, composite Simpson convolution",
        points,
        truncation: Vec::new(),
    })
}

/// Residual acceptance threshold for a solve stopped at `tol`.
pub fn residual_threshold(tol: f64) -> f64 {
    (50.0 * tol).max(1e-6)
}

fn fixture_forcing() -> Profile {
    // (cos y + sin y)/π
    let c = 1.0 / PI;
    Profile::Sum {
        terms: vec![Profile::cosine(c, 1.0, 0.0), Profile::cosine(c, 1.0, -PI / 2.0)],
    }
}

/// Modes kept by the periodic fixtures.
pub const FIXTURE_MODES: usize = 128;

/// One periodic equation `u'' + u' + ∫ cos(x-y) F(y) dy = 0` with
/// `F = (cos y + sin y)/π`, whose solution in the zero-mean subspace is
/// `cos x`. Returns the problem and that solution.
pub fn manufactured_case() -> (ProblemSpec, VectorField) {
    let domain = DomainSpec::periodic(FIXTURE_MODES).expect("fixture domain");
    let problem = ProblemSpec {
        domain,
        equations: vec![EquationSpec::drift(0.0, 1.0)],
        kernels: vec![Profile::cosine(1.0, 1.0, 0.0)],
        nonlinearity: NonlinearityModel::forcing_only(vec![fixture_forcing()]),
    };
    let expected = VectorField::from_physical(domain, vec![domain.nodes().iter().map(|x| x.cos()).collect()])
        .expect("fixture field");
    (problem, expected)
}

/// The manufactured problem with `F = l·u + (cos y + sin y)/π`.
pub fn affine_case(l: f64) -> ProblemSpec {
    let (mut problem, _) = manufactured_case();
    problem.nonlinearity = NonlinearityModel::affine(DMatrix::from_element(1, 1, l), vec![fixture_forcing()])
        .expect("1x1 affine model");
    problem
}

/// Real-line equation `u'' + u' + u + ∫ e^{-(x-y)²/2} F(u(y), y) dy = 0`
/// with `F = 0.2u + e^{-y²/2}`.
pub fn gaussian_drift_case() -> ProblemSpec {
    let domain = DomainSpec::real_line(16.0, 1024).expect("fixture domain");
    ProblemSpec {
        domain,
        equations: vec![EquationSpec::drift(1.0, 1.0)],
        kernels: vec![Profile::gaussian()],
        nonlinearity: NonlinearityModel::affine(DMatrix::from_element(1, 1, 0.2), vec![Profile::gaussian()])
            .expect("1x1 affine model"),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fourier::forward_transform;

    #[test]
    fn cosine_self_convolution() {
        let d = DomainSpec::periodic(16).unwrap();
        let c: Vec<f64> = d.nodes().iter().map(|x| x.cos()).collect();
        let conv = direct_convolution(&c, &c, &d).unwrap();
        for j in [0, 5, 17] {
            let x = d.nodes()[j];
            assert!((conv[j] - PI * x.cos()).abs() < 1e-12);
        }
        let zero = direct_convolution(&c, &vec![0.0; c.len()], &d).unwrap();
        assert!(zero.iter().all(|v| *v == 0.0));
        assert!(matches!(direct_convolution(&c, &[0.0; 3], &d), Err(OracleError::GridMismatch { .. })));
    }

    #[test]
    fn narrow_gaussian_mollifies() {
        let d = DomainSpec::real_line(16.0, 1024).unwrap();
        let eps = 0.1;
        let g: Vec<f64> = d.nodes().iter().map(|x| (-x * x / (2.0 * eps * eps)).exp()).collect();
        let f: Vec<f64> = d.nodes().iter().map(|x| (-x * x / 32.0).exp()).collect();
        let conv = direct_convolution(&g, &f, &d).unwrap();
        for j in (256..768).step_by(37) {
            let expect = (2.0 * PI).sqrt() * eps * f[j];
            assert!((conv[j] - expect).abs() <= 0.01 * expect, "j={j}");
        }
    }

    #[test]
    fn convolution_refines_at_fourth_order() {
        // a kink-free but non-analytic-in-the-box fixture: compact bump
        let bump = |x: f64| if x.abs() < 2.0 { (1.0 - (x / 2.0).powi(2)).powi(4) } else { 0.0 };
        let exact_at_zero = {
            // ∫ bump(-y) bump(y) dy, fine Simpson reference
            let n = 40_000;
            let h = 4.0 / n as f64;
            let v: Vec<f64> = (0..=n).map(|i| bump(-2.0 + i as f64 * h).powi(2)).collect();
            crate::quadrature::simpson(&v, h)
        };
        let err = |m: usize| {
            let d = DomainSpec::real_line(8.0, m).unwrap();
            let s: Vec<f64> = d.nodes().iter().map(|&x| bump(x)).collect();
            let c = direct_convolution(&s, &s, &d).unwrap();
            (c[m / 2] - exact_at_zero).abs()
        };
        let (e1, e2) = (err(64), err(128));
        assert!(e2 <= e1 / 8.0 || e2 < 1e-12, "{e1} {e2}");
    }

    #[test]
    fn riemann_examples() {
        let d = DomainSpec::periodic(16).unwrap();
        let c: Vec<f64> = d.nodes().iter().map(|x| x.cos()).collect();
        let r = riemann_coefficients(&c, &[1, 2], &d).unwrap();
        assert!((r[0] - (PI / 2.0).sqrt()).norm() < 1e-12);
        assert!(r[1].norm() < 1e-14);
        let one = vec![1.0; d.sample_count()];
        assert!((riemann_coefficients(&one, &[0], &d).unwrap()[0] - (2.0 * PI).sqrt()).norm() < 1e-12);
        let line = DomainSpec::real_line(4.0, 64).unwrap();
        assert_eq!(riemann_coefficients(&[0.0; 64], &[0], &line), Err(OracleError::NotPeriodic));
    }

    #[test]
    fn riemann_matches_fast_path() {
        let d = DomainSpec::periodic(32).unwrap();
        let g: Vec<f64> = d.nodes().iter().map(|x| 0.3 + (2.0 * x).sin() - 0.7 * (5.0 * x + 0.4).cos()).collect();
        let fast = forward_transform(&g, &d).unwrap();
        let modes: Vec<i64> = (-32..=32).collect();
        let slow = riemann_coefficients(&g, &modes, &d).unwrap();
        for (a, b) in fast.iter().zip(&slow) {
            assert!((a - b).norm() <= 1e-10);
        }
    }

    #[test]
    fn manufactured_solution_has_small_residual() {
        let (problem, expected) = manufactured_case();
        let r = residual_physical(&expected, &problem).unwrap();
        assert!(r.l2 <= 1e-8, "{}", r.l2);
    }

    #[test]
    fn zero_solution_of_zero_problem() {
        let (mut problem, _) = manufactured_case();
        problem.nonlinearity = NonlinearityModel::zero(1);
        let r = residual_physical(&VectorField::zeros(problem.domain, 1), &problem).unwrap();
        assert_eq!(r.l2, 0.0);
        assert_eq!(r.sup, 0.0);
    }

    #[test]
    fn coarse_grid_refused() {
        let (mut problem, _) = manufactured_case();
        problem.domain = DomainSpec::Periodic { mode_cutoff: 2 };
        let err = residual_report(&[vec![0.0; 8]], &problem).unwrap_err();
        assert_eq!(err, OracleError::GridTooCoarse { points: 8 });
    }
}

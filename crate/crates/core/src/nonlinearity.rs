//! Vector nonlinearities `F(u, x)` with declared growth and Lipschitz
//! constants, and sampling audits of those declarations.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::DomainSpec;
use crate::fourier::{FourierError, SpectralField, VectorField};
use crate::profile::{Profile, ProfileError};

/// Radius of the ball the audits draw `u` from.
pub const DEFAULT_AUDIT_RADIUS: f64 = 10.0;

/// Relative slack of the Lipschitz audit.
pub const LIPSCHITZ_SLACK: f64 = 1e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NonlinearityError {
    #[error("F_{component} is not finite at grid node {node}")]
    NonFiniteValue { component: usize, node: usize },
    #[error("Lipschitz constant {declared} violated: ratio {ratio} at x = {x}, u1 = {u1:?}, u2 = {u2:?}")]
    LipschitzViolation {
        declared: f64,
        ratio: f64,
        x: f64,
        u1: Vec<f64>,
        u2: Vec<f64>,
    },
    #[error("growth bound violated at x = {x}, u = {u:?}: |F| = {norm} > K|u| + h = {bound}")]
    GrowthViolation { x: f64, u: Vec<f64>, norm: f64, bound: f64 },
    #[error("F(u, 0) ≠ F(u, 2π) at u = {u:?}: defect {defect}")]
    PeriodicityViolation { u: Vec<f64>, defect: f64 },
    #[error("nonlinearity: {0}")]
    Shape(String),
    #[error(transparent)]
    Profile(#[from] ProfileError),
    #[error(transparent)]
    Fourier(#[from] FourierError),
}

/// Piecewise-linear table `z ↦ value`, held constant beyond the end knots.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Table1d {
    pub knots: Vec<f64>,
    pub values: Vec<f64>,
}

impl Table1d {
    fn check(&self) -> Result<(), NonlinearityError> {
        if self.knots.len() < 2 || self.knots.len() != self.values.len() {
            return Err(NonlinearityError::Shape(
                "table needs at least two knots and one value per knot".into(),
            ));
        }
        if self.knots.windows(2).any(|w| w[0].partial_cmp(&w[1]) != Some(std::cmp::Ordering::Less)) {
            return Err(NonlinearityError::Shape("table knots must be strictly increasing".into()));
        }
        Ok(())
    }

    pub fn eval(&self, z: f64) -> f64 {
        let k = &self.knots;
        let v = &self.values;
        if z <= k[0] {
            return v[0];
        }
        if z >= k[k.len() - 1] {
            return v[v.len() - 1];
        }
        let i = k.partition_point(|&t| t <= z) - 1;
        let t = (z - k[i]) / (k[i + 1] - k[i]);
        v[i] + t * (v[i + 1] - v[i])
    }

    pub fn max_slope(&self) -> f64 {
        self.knots
            .windows(2)
            .zip(self.values.windows(2))
            .map(|(k, v)| ((v[1] - v[0]) / (k[1] - k[0])).abs())
            .fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone)]
pub enum NonlinearityFamily {
    /// `F(u, x) = A u + g(x)`.
    Affine { matrix: DMatrix<f64> },
    /// `F_k(u, x) = σ_k tanh(⟨c_k, u⟩) + g_k(x)`; `c_k` are the rows of `couplings`.
    Saturating { gains: Vec<f64>, couplings: DMatrix<f64> },
    /// `F_k(u, x) = T_k(⟨c_k, u⟩) + g_k(x)` with user tables.
    Tabulated { couplings: DMatrix<f64>, tables: Vec<Table1d> },
}

/// The nonlinearity of a system together with its declared constants.
///
/// The solver trusts `declared_lipschitz` when certifying; the audits below
/// only sample it.
#[derive(Debug, Clone)]
pub struct NonlinearityModel {
    family: NonlinearityFamily,
    forcing: Vec<Profile>,
    declared_lipschitz: f64,
    declared_growth: f64,
}

fn spectral_norm(m: &DMatrix<f64>) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    m.clone().svd(false, false).singular_values.max()
}

impl NonlinearityModel {
    pub fn affine(matrix: DMatrix<f64>, forcing: Vec<Profile>) -> Result<Self, NonlinearityError> {
        let n = forcing.len();
        if matrix.nrows() != n || matrix.ncols() != n {
            return Err(NonlinearityError::Shape(format!(
                "affine matrix is {}x{}, forcing has {n} components",
                matrix.nrows(),
                matrix.ncols()
            )));
        }
        let l = spectral_norm(&matrix);
        Ok(NonlinearityModel {
            family: NonlinearityFamily::Affine { matrix },
            forcing,
            declared_lipschitz: l,
            declared_growth: l,
        })
    }

    /// `F = g(x)`, independent of `u`.
    pub fn forcing_only(forcing: Vec<Profile>) -> Self {
        let n = forcing.len();
        Self::affine(DMatrix::zeros(n, n), forcing).expect("square by construction")
    }

    pub fn zero(n: usize) -> Self {
        Self::forcing_only(vec![Profile::Zero; n])
    }

    pub fn saturating(
        gains: Vec<f64>,
        couplings: DMatrix<f64>,
        forcing: Vec<Profile>,
    ) -> Result<Self, NonlinearityError> {
        let n = forcing.len();
        if gains.len() != n || couplings.nrows() != n || couplings.ncols() != n {
            return Err(NonlinearityError::Shape(format!(
                "saturating model needs {n} gains and an {n}x{n} coupling matrix"
            )));
        }
        // ‖diag(σ) C‖ bounds the Jacobian diag(σ·tanh') C since 0 < tanh' ≤ 1
        let weighted = DMatrix::from_diagonal(&DVector::from_vec(gains.clone())) * &couplings;
        let l = spectral_norm(&weighted);
        Ok(NonlinearityModel {
            family: NonlinearityFamily::Saturating { gains, couplings },
            forcing,
            declared_lipschitz: l,
            declared_growth: l,
        })
    }

    /// Tabulated models carry user-declared constants.
    pub fn tabulated(
        couplings: DMatrix<f64>,
        tables: Vec<Table1d>,
        forcing: Vec<Profile>,
        declared_lipschitz: f64,
        declared_growth: f64,
    ) -> Result<Self, NonlinearityError> {
        let n = forcing.len();
        if tables.len() != n || couplings.nrows() != n || couplings.ncols() != n {
            return Err(NonlinearityError::Shape(format!(
                "tabulated model needs {n} tables and an {n}x{n} coupling matrix"
            )));
        }
        for t in &tables {
            t.check()?;
        }
        Ok(NonlinearityModel {
            family: NonlinearityFamily::Tabulated { couplings, tables },
            forcing,
            declared_lipschitz,
            declared_growth,
        })
    }

    pub fn with_declared_lipschitz(mut self, l: f64) -> Self {
        self.declared_lipschitz = l;
        self
    }

    pub fn with_declared_growth(mut self, k: f64) -> Self {
        self.declared_growth = k;
        self
    }

    pub fn dimension(&self) -> usize {
        self.forcing.len()
    }

    pub fn family(&self) -> &NonlinearityFamily {
        &self.family
    }

    pub fn forcing(&self) -> &[Profile] {
        &self.forcing
    }

    pub fn declared_lipschitz(&self) -> f64 {
        self.declared_lipschitz
    }

    pub fn declared_growth(&self) -> f64 {
        self.declared_growth
    }

    pub fn is_tabulated(&self) -> bool {
        matches!(self.family, NonlinearityFamily::Tabulated { .. })
    }

    /// The `u`-dependent part at a point, without forcing.
    fn eval_state(&self, u: &[f64], out: &mut [f64]) {
        match &self.family {
            NonlinearityFamily::Affine { matrix } => {
                for (k, o) in out.iter_mut().enumerate() {
                    *o = matrix.row(k).iter().zip(u).map(|(a, v)| a * v).sum();
                }
            }
            NonlinearityFamily::Saturating { gains, couplings } => {
                for (k, o) in out.iter_mut().enumerate() {
                    let z: f64 = couplings.row(k).iter().zip(u).map(|(c, v)| c * v).sum();
                    *o = gains[k] * z.tanh();
                }
            }
            NonlinearityFamily::Tabulated { couplings, tables } => {
                for (k, o) in out.iter_mut().enumerate() {
                    let z: f64 = couplings.row(k).iter().zip(u).map(|(c, v)| c * v).sum();
                    *o = tables[k].eval(z);
                }
            }
        }
    }

    /// `F(u, x)` at an arbitrary point.
    pub fn eval_point(&self, u: &[f64], x: f64, domain: &DomainSpec, out: &mut [f64]) {
        self.eval_state(u, out);
        for (o, g) in out.iter_mut().zip(&self.forcing) {
            *o += g.eval(x, domain);
        }
    }

    /// The growth profile `h(x)` of `|F(u,x)| ≤ K|u| + h(x)`.
    pub fn h_at(&self, x: f64, domain: &DomainSpec) -> f64 {
        let offsets: Vec<f64> = match &self.family {
            NonlinearityFamily::Tabulated { tables, .. } => tables.iter().map(|t| t.eval(0.0).abs()).collect(),
            _ => vec![0.0; self.dimension()],
        };
        self.forcing
            .iter()
            .zip(offsets)
            .map(|(g, off)| {
                let v = g.eval(x, domain).abs() + off;
                v * v
            })
            .sum::<f64>()
            .sqrt()
    }

    pub fn h_field(&self, domain: &DomainSpec) -> Result<SpectralField, NonlinearityError> {
        Ok(SpectralField::from_fn(*domain, |x| self.h_at(x, domain))?)
    }
}

/// Physical samples of `x ↦ F(v(x), x)` as a vector field.
pub fn eval_f(model: &NonlinearityModel, v: &VectorField) -> Result<VectorField, NonlinearityError> {
    let n = model.dimension();
    if v.len() != n {
        return Err(NonlinearityError::Shape(format!(
            "field has {} components, model has {n}",
            v.len()
        )));
    }
    let domain = *v.domain();
    let forcing = model
        .forcing
        .iter()
        .map(|g| g.sample(&domain))
        .collect::<Result<Vec<_>, _>>()?;
    let m = domain.sample_count();
    let mut out = vec![vec![0.0; m]; n];
    let mut point = vec![0.0; n];
    let mut value = vec![0.0; n];
    for j in 0..m {
        v.point(j, &mut point);
        model.eval_state(&point, &mut value);
        for k in 0..n {
            let f = value[k] + forcing[k][j];
            if !f.is_finite() {
                return Err(NonlinearityError::NonFiniteValue {
                    component: k + 1,
                    node: j,
                });
            }
            out[k][j] = f;
        }
    }
    Ok(VectorField::from_physical(domain, out)?)
}

fn sample_ball(rng: &mut ChaCha8Rng, n: usize, radius: f64) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..=1.0)).collect();
        let r2: f64 = v.iter().map(|x| x * x).sum();
        if r2 <= 1.0 {
            return v.into_iter().map(|x| x * radius).collect();
        }
    }
}

fn euclid(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LipschitzAudit {
    pub estimate: f64,
    pub declared: f64,
    pub trials: usize,
}

/// Seeded estimate `L̂ = max |F(u¹,x) - F(u²,x)| / |u¹ - u²|` over the
/// default ball; fails when `L̂ > L·(1 + 1e-6)`.
pub fn verify_lipschitz(
    model: &NonlinearityModel,
    domain: &DomainSpec,
    trials: usize,
    seed: u64,
) -> Result<LipschitzAudit, NonlinearityError> {
    verify_lipschitz_in_ball(model, domain, trials, seed, DEFAULT_AUDIT_RADIUS)
}

/// As [`verify_lipschitz`] with a chosen ball radius. Half of the pairs are
/// independent draws, the other half are local perturbations at random
/// scales so that steep spots are found.
pub fn verify_lipschitz_in_ball(
    model: &NonlinearityModel,
    domain: &DomainSpec,
    trials: usize,
    seed: u64,
    radius: f64,
) -> Result<LipschitzAudit, NonlinearityError> {
    let n = model.dimension();
    let nodes = domain.nodes();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let declared = model.declared_lipschitz();
    let mut best = 0.0_f64;
    let mut f1 = vec![0.0; n];
    let mut f2 = vec![0.0; n];
    for t in 0..trials.max(1) {
        let u1 = sample_ball(&mut rng, n, radius);
        let u2 = if t % 2 == 0 {
            sample_ball(&mut rng, n, radius)
        } else {
            let scale = radius * 10f64.powf(-rng.random_range(0.0..4.0));
            let d = sample_ball(&mut rng, n, scale);
            u1.iter().zip(&d).map(|(a, b)| a + b).collect()
        };
        let x = nodes[rng.random_range(0..nodes.len())];
        let du: Vec<f64> = u1.iter().zip(&u2).map(|(a, b)| a - b).collect();
        let dn = euclid(&du);
        if dn == 0.0 {
            continue;
        }
        model.eval_point(&u1, x, domain, &mut f1);
        model.eval_point(&u2, x, domain, &mut f2);
        let df: Vec<f64> = f1.iter().zip(&f2).map(|(a, b)| a - b).collect();
        let ratio = euclid(&df) / dn;
        if ratio > declared * (1.0 + LIPSCHITZ_SLACK) {
            return Err(NonlinearityError::LipschitzViolation {
                declared,
                ratio,
                x,
                u1,
                u2,
            });
        }
        best = best.max(ratio);
    }
    Ok(LipschitzAudit {
        estimate: best,
        declared,
        trials,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GrowthAudit {
    /// Smallest `K|u| + h(x) - |F(u,x)|` seen.
    pub min_margin: f64,
    pub declared: f64,
    pub trials: usize,
}

/// Samples `|F(u,x)| ≤ K|u| + h(x)` and, on the periodic interval,
/// `F(u, 0) = F(u, 2π)`.
pub fn verify_growth(
    model: &NonlinearityModel,
    domain: &DomainSpec,
    trials: usize,
    seed: u64,
) -> Result<GrowthAudit, NonlinearityError> {
    let n = model.dimension();
    let nodes = domain.nodes();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let k = model.declared_growth();
    let mut f = vec![0.0; n];
    let mut g = vec![0.0; n];
    let mut min_margin = f64::INFINITY;
    for t in 0..trials.max(1) {
        let u = sample_ball(&mut rng, n, DEFAULT_AUDIT_RADIUS);
        let x = nodes[rng.random_range(0..nodes.len())];
        model.eval_point(&u, x, domain, &mut f);
        let norm = euclid(&f);
        let bound = k * euclid(&u) + model.h_at(x, domain);
        if norm > bound * (1.0 + 1e-12) + 1e-12 {
            return Err(NonlinearityError::GrowthViolation { x, u, norm, bound });
        }
        min_margin = min_margin.min(bound - norm);

        if domain.is_periodic() && t < 256 {
            model.eval_point(&u, 0.0, domain, &mut f);
            model.eval_point(&u, 2.0 * PI, domain, &mut g);
            let defect = euclid(&f.iter().zip(&g).map(|(a, b)| a - b).collect::<Vec<_>>());
            if defect > 1e-12 * (1.0 + euclid(&f)) {
                return Err(NonlinearityError::PeriodicityViolation { u, defect });
            }
        }
    }
    Ok(GrowthAudit {
        min_margin: min_margin.max(0.0),
        declared: k,
        trials,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn circle() -> DomainSpec {
        DomainSpec::periodic(8).unwrap()
    }

    #[test]
    fn u_independent_forcing() {
        let d = circle();
        let m = NonlinearityModel::forcing_only(vec![Profile::cosine(1.0, 1.0, 0.0)]);
        let v = VectorField::from_physical(d, vec![d.nodes().iter().map(|x| 3.0 * x.sin()).collect()]).unwrap();
        let out = eval_f(&m, &v).unwrap();
        for (x, f) in d.nodes().iter().zip(out.component(0).physical()) {
            assert_eq!(*f, x.cos());
        }
    }

    #[test]
    fn identity_affine_returns_input() {
        let d = circle();
        let m = NonlinearityModel::affine(DMatrix::identity(2, 2), vec![Profile::Zero; 2]).unwrap();
        let v = VectorField::from_physical(
            d,
            vec![d.nodes().iter().map(|x| x.sin()).collect(), d.nodes().iter().map(|x| (2.0 * x).cos()).collect()],
        )
        .unwrap();
        let out = eval_f(&m, &v).unwrap();
        for k in 0..2 {
            assert_eq!(out.component(k).physical(), v.component(k).physical());
        }
    }

    #[test]
    fn saturation_limits() {
        let d = circle();
        let m = NonlinearityModel::saturating(vec![1.0], DMatrix::identity(1, 1), vec![Profile::Zero]).unwrap();
        let mut out = [0.0];
        m.eval_point(&[50.0], 0.0, &d, &mut out);
        assert!((out[0] - 1.0).abs() < 1e-12);
        m.eval_point(&[-50.0], 0.0, &d, &mut out);
        assert!((out[0] + 1.0).abs() < 1e-12);
    }

    #[test]
    fn non_finite_is_reported() {
        let d = circle();
        let m = NonlinearityModel::forcing_only(vec![Profile::custom(|x| if x > 1.0 { f64::NAN } else { 0.0 })]);
        let err = eval_f(&m, &VectorField::zeros(d, 1)).unwrap_err();
        assert!(matches!(err, NonlinearityError::NonFiniteValue { component: 1, .. }));
    }

    #[test]
    fn diagonal_affine_audit() {
        let d = circle();
        let a = DMatrix::from_diagonal(&DVector::from_vec(vec![0.3, 0.1]));
        let m = NonlinearityModel::affine(a, vec![Profile::Zero; 2]).unwrap();
        assert!((m.declared_lipschitz() - 0.3).abs() < 1e-14);
        let audit = verify_lipschitz(&m, &d, 10_000, 1).unwrap();
        assert!(audit.estimate <= 0.3 * (1.0 + 1e-12));
    }

    #[test]
    fn underdeclared_saturation_is_caught() {
        // steepest slope of 2·tanh is 2 at the origin
        let d = circle();
        let m = NonlinearityModel::saturating(vec![2.0], DMatrix::identity(1, 1), vec![Profile::Zero])
            .unwrap()
            .with_declared_lipschitz(1.0);
        match verify_lipschitz(&m, &d, 10_000, 3) {
            Err(NonlinearityError::LipschitzViolation { ratio, .. }) => assert!(ratio > 1.0 && ratio <= 2.0 + 1e-9),
            other => panic!("expected violation, got {other:?}"),
        }
        let honest = NonlinearityModel::saturating(vec![2.0], DMatrix::identity(1, 1), vec![Profile::Zero]).unwrap();
        assert!((honest.declared_lipschitz() - 2.0).abs() < 1e-14);
        let audit = verify_lipschitz(&honest, &d, 20_000, 3).unwrap();
        assert!(audit.estimate > 1.9, "{audit:?}");
    }

    #[test]
    fn constant_map_has_zero_lipschitz() {
        let d = circle();
        let m = NonlinearityModel::forcing_only(vec![Profile::cosine(2.0, 1.0, 0.0)]);
        assert_eq!(verify_lipschitz(&m, &d, 500, 9).unwrap().estimate, 0.0);
    }

    #[test]
    fn growth_audits() {
        let d = circle();
        let a = DMatrix::from_row_slice(2, 2, &[0.2, -0.1, 0.05, 0.3]);
        let m = NonlinearityModel::affine(a, vec![Profile::cosine(1.0, 1.0, 0.0), Profile::cosine(0.5, 2.0, 0.3)]).unwrap();
        assert!(verify_growth(&m, &d, 2000, 4).is_ok());

        let zero = NonlinearityModel::zero(3);
        assert_eq!(verify_growth(&zero, &d, 100, 4).unwrap().min_margin, 0.0);

        let ramp = NonlinearityModel::forcing_only(vec![Profile::Linear {
            slope: 1.0,
            intercept: 0.0,
        }]);
        assert!(matches!(
            verify_growth(&ramp, &d, 10, 4),
            Err(NonlinearityError::PeriodicityViolation { .. })
        ));

        let overstated = NonlinearityModel::saturating(vec![1.0], DMatrix::identity(1, 1), vec![Profile::Zero])
            .unwrap()
            .with_declared_growth(0.01);
        assert!(matches!(
            verify_growth(&overstated, &d, 200, 4),
            Err(NonlinearityError::GrowthViolation { .. })
        ));
    }

    #[test]
    fn tabulated_model() {
        let d = circle();
        let t = Table1d {
            knots: vec![-1.0, 0.0, 1.0],
            values: vec![-0.5, 0.1, 0.2],
        };
        assert!((t.eval(0.5) - 0.15).abs() < 1e-15);
        assert_eq!(t.eval(7.0), 0.2);
        assert!((t.max_slope() - 0.6).abs() < 1e-15);
        let m = NonlinearityModel::tabulated(DMatrix::identity(1, 1), vec![t], vec![Profile::Zero], 0.6, 0.6).unwrap();
        assert!(verify_lipschitz(&m, &d, 5000, 2).is_ok());
        assert!(verify_growth(&m, &d, 5000, 2).is_ok());
        let bad = Table1d {
            knots: vec![1.0, 0.0],
            values: vec![0.0, 0.0],
        };
        assert!(NonlinearityModel::tabulated(DMatrix::identity(1, 1), vec![bad], vec![Profile::Zero], 1.0, 1.0).is_err());
    }

    #[test]
    fn refinement_commutes_with_evaluation() {
        let coarse = DomainSpec::real_line(8.0, 64).unwrap();
        let fine = DomainSpec::real_line(8.0, 128).unwrap();
        let m = NonlinearityModel::saturating(
            vec![0.7],
            DMatrix::identity(1, 1),
            vec![Profile::Gaussian {
                amplitude: 1.0,
                width: 2.0,
                center: 0.5,
            }],
        )
        .unwrap();
        let v = |d: DomainSpec| VectorField::from_physical(d, vec![d.nodes().iter().map(|x| (-x * x / 4.0).exp()).collect()]).unwrap();
        let fc = eval_f(&m, &v(coarse)).unwrap();
        let ff = eval_f(&m, &v(fine)).unwrap();
        let sub: Vec<f64> = ff.component(0).physical().iter().step_by(2).copied().collect();
        assert_eq!(sub, fc.component(0).physical());
    }
}

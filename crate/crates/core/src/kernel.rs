//! Kernel analysis: moments, Fourier data at special frequencies,
//! orthogonality verdicts and the Fredholm classification of the linear part.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::Serialize;
use thiserror::Error;

use crate::domain::DomainSpec;
use crate::fourier::{FourierError, SpectralField};
use crate::problem::{CaseTag, EquationSpec};
use crate::profile::{Profile, ProfileError};
use crate::quadrature::wrapped_simpson_weights;
use crate::ORTHOGONALITY_TOL;

/// Highest derivative order of `Ĝ` stored at a special point on the line.
/// The multipliers expand the numerator to this order near singularities.
pub const MAX_DERIVATIVE: usize = 6;

const SPECIAL_MATCH_TOL: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum KernelError {
    #[error("kernel moments are defined on the real line only")]
    NotRealLine,
    #[error("special value at p = {point} was not computed")]
    MissingSpecialValue { point: f64 },
    #[error("sup |Ĝ| = {sup} exceeds the L¹ bound {bound}")]
    SupBound { sup: f64, bound: f64 },
    #[error("kernel has {got} samples, grid needs {expected}")]
    GridMismatch { expected: usize, got: usize },
    #[error(transparent)]
    Fourier(#[from] FourierError),
    #[error(transparent)]
    Profile(#[from] ProfileError),
}

/// `‖G‖_{L¹}`, `‖xG‖_{L¹}`, `‖x²G‖_{L¹}` over the box.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Moments {
    pub m0: f64,
    pub m1: f64,
    pub m2: f64,
}

/// `Ĝ^{(k)}(s)` for `k = 0..derivs.len()`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SpecialValue {
    pub point: f64,
    pub derivs: Vec<Complex64>,
}

#[derive(Debug, Clone)]
pub struct KernelSpectrum {
    pub base: SpectralField,
    /// Real line only.
    pub moments: Option<Moments>,
    /// `∫|G|` over the sampled interval.
    pub l1_norm: f64,
    /// `max |G|` on the grid.
    pub sup_norm: f64,
    pub special: Vec<SpecialValue>,
    /// `max |Ĝ|` on the frequency grid.
    pub sup_bound: f64,
}

fn check_len(samples: &[f64], domain: &DomainSpec) -> Result<(), KernelError> {
    if samples.len() != domain.sample_count() {
        return Err(KernelError::GridMismatch {
            expected: domain.sample_count(),
            got: samples.len(),
        });
    }
    Ok(())
}

/// Simpson quadrature of `w(x)·|G(x)|` over the sampled interval.
fn weighted_l1(samples: &[f64], domain: &DomainSpec, power: i32) -> f64 {
    let nodes = domain.nodes();
    let w = wrapped_simpson_weights(samples.len(), domain.step());
    samples
        .iter()
        .zip(&nodes)
        .zip(&w)
        .map(|((g, x), wj)| wj * (g * x.powi(power)).abs())
        .sum()
}

pub fn kernel_moments(samples: &[f64], domain: &DomainSpec) -> Result<Moments, KernelError> {
    if domain.is_periodic() {
        return Err(KernelError::NotRealLine);
    }
    check_len(samples, domain)?;
    Ok(Moments {
        m0: weighted_l1(samples, domain, 0),
        m1: weighted_l1(samples, domain, 1),
        m2: weighted_l1(samples, domain, 2),
    })
}

/// `Ĝ^{(k)}(s) = (2π)^{-1/2} ∫ (-ix)^k G(x) e^{-isx} dx` for `k = 0..=order`,
/// by Simpson quadrature on the sample grid.
pub fn transform_derivatives(samples: &[f64], domain: &DomainSpec, s: f64, order: usize) -> Vec<Complex64> {
    let nodes = domain.nodes();
    let w = wrapped_simpson_weights(samples.len(), domain.step());
    let norm = 1.0 / (2.0 * PI).sqrt();
    let mut out = vec![Complex64::new(0.0, 0.0); order + 1];
    for ((g, &x), wj) in samples.iter().zip(&nodes).zip(&w) {
        if *g == 0.0 {
            continue;
        }
        let mut term = Complex64::from_polar(wj * g * norm, -s * x);
        let step = Complex64::new(0.0, -x);
        for o in out.iter_mut() {
            *o += term;
            term *= step;
        }
    }
    out
}

/// Fourier data of one kernel.
///
/// `special_points` are frequencies where `Ĝ` and its derivatives are
/// computed by direct quadrature instead of read from the grid.
pub fn spectral_profile(samples: &[f64], domain: &DomainSpec, special_points: &[f64]) -> Result<KernelSpectrum, KernelError> {
    check_len(samples, domain)?;
    let base = SpectralField::from_physical(*domain, samples.to_vec())?;
    let order = if domain.is_periodic() { 0 } else { MAX_DERIVATIVE };
    let special = special_points
        .iter()
        .map(|&s| SpecialValue {
            point: s,
            derivs: transform_derivatives(samples, domain, s, order),
        })
        .collect();
    let moments = if domain.is_periodic() {
        None
    } else {
        Some(kernel_moments(samples, domain)?)
    };
    let l1_norm = weighted_l1(samples, domain, 0);
    let sup_norm = samples.iter().fold(0.0_f64, |m, g| m.max(g.abs()));
    let sup_bound = base.max_spectrum();
    let bound = l1_norm / (2.0 * PI).sqrt();
    if sup_bound > bound + 1e-10 * bound.max(1.0) {
        return Err(KernelError::SupBound { sup: sup_bound, bound });
    }
    Ok(KernelSpectrum {
        base,
        moments,
        l1_norm,
        sup_norm,
        special,
        sup_bound,
    })
}

impl KernelSpectrum {
    pub fn from_profile(kernel: &Profile, domain: &DomainSpec, special_points: &[f64]) -> Result<Self, KernelError> {
        spectral_profile(&kernel.sample(domain)?, domain, special_points)
    }

    pub fn domain(&self) -> &DomainSpec {
        self.base.domain()
    }

    pub fn special_value(&self, s: f64) -> Option<&SpecialValue> {
        self.special.iter().find(|v| (v.point - s).abs() <= SPECIAL_MATCH_TOL * s.abs().max(1.0))
    }

    /// Stored `Ĝ^{(order)}(s)`.
    pub fn derivative_at(&self, s: f64, order: usize) -> Result<Complex64, KernelError> {
        self.special_value(s)
            .and_then(|v| v.derivs.get(order).copied())
            .ok_or(KernelError::MissingSpecialValue { point: s })
    }

    /// `Ĝ(s)` at an arbitrary frequency, by quadrature.
    pub fn transform_at(&self, s: f64) -> Complex64 {
        transform_derivatives(self.base.physical(), self.domain(), s, 0)[0]
    }

    /// Natural magnitude of `Ĝ`: `m0/√(2π)` on the line, `max |G|` on `I`.
    pub fn scale(&self) -> f64 {
        match self.moments {
            Some(m) => m.m0 / (2.0 * PI).sqrt(),
            None => self.sup_norm,
        }
    }

    /// Bound on `|Ĝ''|` from the second moment.
    pub fn second_derivative_bound(&self) -> Option<f64> {
        self.moments.map(|m| m.m2 / (2.0 * PI).sqrt())
    }
}

/// Frequencies where the case of an equation needs exact kernel data.
pub fn required_special_points(tag: CaseTag, eq: &EquationSpec) -> Vec<f64> {
    match tag {
        CaseTag::Ra | CaseTag::Ia | CaseTag::Ic => Vec::new(),
        CaseTag::Rb | CaseTag::Rd | CaseTag::Ib | CaseTag::Ie => vec![0.0],
        CaseTag::Rc => {
            let s = eq.a.sqrt();
            vec![s, -s]
        }
        CaseTag::Id { mode } => {
            let n = f64::from(mode);
            vec![n, -n]
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OrthogonalityCondition {
    pub name: &'static str,
    pub raw: Complex64,
    pub scale: f64,
    pub pass: bool,
}

impl OrthogonalityCondition {
    fn new(name: &'static str, raw: Complex64, scale: f64) -> Self {
        OrthogonalityCondition {
            name,
            raw,
            scale,
            pass: raw.norm() <= ORTHOGONALITY_TOL * scale,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OrthogonalityReport {
    pub tag: CaseTag,
    pub conditions: Vec<OrthogonalityCondition>,
}

impl OrthogonalityReport {
    pub fn passed(&self) -> bool {
        self.conditions.iter().all(|c| c.pass)
    }

    pub fn failures(&self) -> impl Iterator<Item = &OrthogonalityCondition> {
        self.conditions.iter().filter(|c| !c.pass)
    }
}

/// Evaluates the vanishing conditions the case of `eq` requires of its kernel.
pub fn check_orthogonality(ks: &KernelSpectrum, tag: CaseTag, eq: &EquationSpec) -> Result<OrthogonalityReport, KernelError> {
    let sqrt2pi = (2.0 * PI).sqrt();
    let mass_scale = || ks.moments.map(|m| m.m0 / sqrt2pi).ok_or(KernelError::NotRealLine);
    let conditions = match tag {
        CaseTag::Ra | CaseTag::Ia | CaseTag::Ic => Vec::new(),
        CaseTag::Rb => vec![OrthogonalityCondition::new("or1", ks.derivative_at(0.0, 0)?, mass_scale()?)],
        CaseTag::Rc => {
            let s = eq.a.sqrt();
            let scale = mass_scale()?;
            vec![
                OrthogonalityCondition::new("or12+", ks.derivative_at(s, 0)?, scale),
                OrthogonalityCondition::new("or12-", ks.derivative_at(-s, 0)?, scale),
            ]
        }
        CaseTag::Rd => {
            let m = ks.moments.ok_or(KernelError::NotRealLine)?;
            vec![
                OrthogonalityCondition::new("or13-mass", ks.derivative_at(0.0, 0)?, m.m0 / sqrt2pi),
                OrthogonalityCondition::new("or13-dipole", ks.derivative_at(0.0, 1)?, m.m1 / sqrt2pi),
            ]
        }
        CaseTag::Ib | CaseTag::Ie => vec![OrthogonalityCondition::new("or2", ks.derivative_at(0.0, 0)?, ks.sup_norm)],
        CaseTag::Id { mode } => {
            let n = f64::from(mode);
            vec![
                OrthogonalityCondition::new("or21+", ks.derivative_at(n, 0)?, ks.sup_norm),
                OrthogonalityCondition::new("or21-", ks.derivative_at(-n, 0)?, ks.sup_norm),
            ]
        }
    };
    Ok(OrthogonalityReport { tag, conditions })
}

/// `λ(p) = p² - a - ibp`.
pub fn symbol(eq: &EquationSpec, p: f64) -> Complex64 {
    Complex64::new(p * p - eq.a, -eq.b_or_zero() * p)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EssentialSpectrum {
    /// `(p, λ(p))` on the requested samples.
    pub curve: Vec<(f64, Complex64)>,
    /// Distance from the origin to the whole curve.
    pub min_distance: f64,
    pub argmin: f64,
    pub fredholm: bool,
}

/// `min |λ|` over the continuum (line) or the integers (interval).
///
/// With `t = p²`, `|λ|² = (t - a)² + b²t` is minimized at `t* = a - b²/2`
/// when that is nonnegative, else at `t = 0`.
pub fn symbol_min(eq: &EquationSpec, periodic: bool) -> (f64, f64) {
    let a = eq.a;
    let b = eq.b_or_zero();
    let f = |t: f64| ((t - a) * (t - a) + b * b * t).max(0.0).sqrt();
    if periodic {
        let top = a.max(0.0).sqrt().ceil() as i64 + 2;
        (0..=top)
            .map(|n| (f((n * n) as f64), n as f64))
            .fold((f64::INFINITY, 0.0), |best, c| if c.0 < best.0 { c } else { best })
    } else {
        let t_star = a - b * b / 2.0;
        if t_star <= 0.0 {
            (a.abs(), 0.0)
        } else {
            let v = (a * b * b - b.powi(4) / 4.0).max(0.0).sqrt();
            (if b == 0.0 { 0.0 } else { v }, t_star.sqrt())
        }
    }
}

pub fn essential_spectrum(eq: &EquationSpec, domain: &DomainSpec, p_samples: &[f64]) -> EssentialSpectrum {
    let (min_distance, argmin) = symbol_min(eq, domain.is_periodic());
    EssentialSpectrum {
        curve: p_samples.iter().map(|&p| (p, symbol(eq, p))).collect(),
        min_distance,
        argmin,
        fredholm: min_distance > 0.0,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::classify_equation;
    use proptest::prelude::*;

    fn line() -> DomainSpec {
        DomainSpec::real_line(16.0, 1024).unwrap()
    }

    fn circle() -> DomainSpec {
        DomainSpec::periodic(16).unwrap()
    }

    #[test]
    fn gaussian_moments() {
        let d = line();
        let m = kernel_moments(&Profile::gaussian().sample(&d).unwrap(), &d).unwrap();
        let r = (2.0 * PI).sqrt();
        assert!((m.m0 - r).abs() < 1e-12);
        assert!((m.m1 - 2.0).abs() < 1e-4, "{}", m.m1);
        assert!((m.m2 - r).abs() < 1e-12);
        let z = kernel_moments(&vec![0.0; 1024], &d).unwrap();
        assert_eq!((z.m0, z.m1, z.m2), (0.0, 0.0, 0.0));
        assert_eq!(kernel_moments(&[0.0; 64], &circle()), Err(KernelError::NotRealLine));
    }

    #[test]
    fn odd_gaussian_mass() {
        let d = line();
        let m = kernel_moments(&Profile::odd_gaussian().sample(&d).unwrap(), &d).unwrap();
        assert!((m.m0 - 2.0).abs() < 1e-4, "{}", m.m0);
    }

    #[test]
    fn special_values() {
        let d = line();
        let g = KernelSpectrum::from_profile(&Profile::gaussian(), &d, &[0.0]).unwrap();
        assert!((g.derivative_at(0.0, 0).unwrap() - 1.0).norm() < 1e-13);
        assert!(g.derivative_at(0.0, 1).unwrap().norm() < 1e-13);
        // Ĝ'' (0) = -1 for e^{-p²/2}
        assert!((g.derivative_at(0.0, 2).unwrap() + 1.0).norm() < 1e-12);

        let o = KernelSpectrum::from_profile(&Profile::odd_gaussian(), &d, &[0.0]).unwrap();
        assert!(o.derivative_at(0.0, 0).unwrap().norm() < 1e-13);
        assert!((o.derivative_at(0.0, 1).unwrap() - Complex64::new(0.0, -1.0)).norm() < 1e-12);
        // Ĝ(p) = -ip e^{-p²/2}
        let p: f64 = 0.7;
        let expect = Complex64::new(0.0, -p * (-p * p / 2.0).exp());
        assert!((o.transform_at(p) - expect).norm() < 1e-13);
        assert!(matches!(o.derivative_at(1.0, 0), Err(KernelError::MissingSpecialValue { .. })));
    }

    #[test]
    fn cosine_coefficients() {
        let d = circle();
        let c = KernelSpectrum::from_profile(&Profile::cosine(1.0, 1.0, 0.0), &d, &[0.0, 1.0, -1.0]).unwrap();
        let half = (PI / 2.0).sqrt();
        assert!((c.base.mode(1) - half).norm() < 1e-12);
        assert!((c.derivative_at(1.0, 0).unwrap() - half).norm() < 1e-12);
        assert!(c.derivative_at(0.0, 0).unwrap().norm() < 1e-14);
        assert!((c.sup_norm - 1.0).abs() < 1e-15);
    }

    #[test]
    fn orthogonality_verdicts() {
        let d = line();
        let odd = Profile::odd_gaussian();
        let rb = EquationSpec::drift(0.0, 1.0);
        let rd = EquationSpec::plain(0.0);
        let ks = KernelSpectrum::from_profile(&odd, &d, &[0.0]).unwrap();
        let rep = check_orthogonality(&ks, CaseTag::Rb, &rb).unwrap();
        assert!(rep.passed());
        let rep = check_orthogonality(&ks, CaseTag::Rd, &rd).unwrap();
        assert_eq!(rep.conditions.len(), 2);
        assert!(rep.conditions[0].pass);
        assert!(!rep.conditions[1].pass);
        assert!((rep.conditions[1].raw.norm() - 1.0).abs() < 1e-12);

        let gs = KernelSpectrum::from_profile(&Profile::gaussian(), &d, &[0.0]).unwrap();
        let rep = check_orthogonality(&gs, CaseTag::Rb, &rb).unwrap();
        assert_eq!(rep.failures().next().unwrap().name, "or1");

        let ra = check_orthogonality(&gs, CaseTag::Ra, &EquationSpec::drift(1.0, 1.0)).unwrap();
        assert!(ra.conditions.is_empty() && ra.passed());

        let c = circle();
        let cos = Profile::cosine(1.0, 1.0, 0.0);
        let ie = EquationSpec::plain(0.0);
        let ks = KernelSpectrum::from_profile(&cos, &c, &[0.0]).unwrap();
        assert!(check_orthogonality(&ks, CaseTag::Ie, &ie).unwrap().passed());
        let id = EquationSpec::resonant(1);
        let tag = classify_equation(&id, &c).unwrap();
        let ks = KernelSpectrum::from_profile(&cos, &c, &required_special_points(tag, &id)).unwrap();
        let rep = check_orthogonality(&ks, tag, &id).unwrap();
        assert_eq!(rep.failures().count(), 2);
    }

    #[test]
    fn rc_needs_both_signs() {
        let d = line();
        let eq = EquationSpec::plain(4.0);
        let ks = KernelSpectrum::from_profile(&Profile::gaussian(), &d, &[2.0]).unwrap();
        assert!(matches!(
            check_orthogonality(&ks, CaseTag::Rc, &eq),
            Err(KernelError::MissingSpecialValue { .. })
        ));
    }

    #[test]
    fn essential_spectrum_examples() {
        let d = line();
        let e = essential_spectrum(&EquationSpec::drift(1.0, 1.0), &d, &[0.0, 1.0]);
        assert!(e.fredholm);
        assert!((e.min_distance - 3f64.sqrt() / 2.0).abs() < 1e-15);
        assert!((e.argmin - 0.5f64.sqrt()).abs() < 1e-15);
        assert_eq!(e.curve[1].1, Complex64::new(0.0, -1.0));
        assert!(!essential_spectrum(&EquationSpec::drift(0.0, 1.0), &d, &[]).fredholm);
        assert!(!essential_spectrum(&EquationSpec::plain(0.0), &d, &[]).fredholm);
        assert!(!essential_spectrum(&EquationSpec::plain(1.0), &d, &[]).fredholm);
        let c = circle();
        assert!(!essential_spectrum(&EquationSpec::plain(4.0), &c, &[]).fredholm);
        assert!(essential_spectrum(&EquationSpec::plain(2.0), &c, &[]).fredholm);
    }

    fn dense_min(eq: &EquationSpec, periodic: bool) -> f64 {
        if periodic {
            return (0..200).map(|n| symbol(eq, n as f64).norm()).fold(f64::INFINITY, f64::min);
        }
        // coarse scan, then golden refinement around the best node
        let top = 2.0 * (eq.a + eq.b_or_zero().powi(2) + 1.0).sqrt();
        let n = 20_000;
        let f = |p: f64| symbol(eq, p).norm();
        let (mut best, mut at) = (f64::INFINITY, 0.0);
        for i in 0..=n {
            let p = top * i as f64 / n as f64;
            if f(p) < best {
                best = f(p);
                at = p;
            }
        }
        let h = top / n as f64;
        let (mut lo, mut hi) = ((at - h).max(0.0), at + h);
        let g = (5f64.sqrt() - 1.0) / 2.0;
        for _ in 0..200 {
            let m1 = hi - g * (hi - lo);
            let m2 = lo + g * (hi - lo);
            if f(m1) < f(m2) {
                hi = m2;
            } else {
                lo = m1;
            }
        }
        best.min(f(0.5 * (lo + hi)))
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn symbol_min_matches_dense_search(a in 0.0f64..6.0, b in prop_oneof![Just(0.0), -3.0f64..3.0]) {
            let eq = if b == 0.0 { EquationSpec::plain(a) } else { EquationSpec::drift(a, b) };
            let (m, _) = symbol_min(&eq, false);
            prop_assert!((m - dense_min(&eq, false)).abs() < 1e-9);
            let (mp, _) = symbol_min(&eq, true);
            prop_assert!((mp - dense_min(&eq, true)).abs() < 1e-12);
        }

        #[test]
        fn fredholm_flag_rule(a in 0.0f64..6.0, b in -3.0f64..3.0) {
            let d = line();
            let eq = if b == 0.0 { EquationSpec::plain(a) } else { EquationSpec::drift(a, b) };
            let f = essential_spectrum(&eq, &d, &[]).fredholm;
            prop_assert_eq!(f, a > 0.0 && b != 0.0);
        }

        #[test]
        fn verdict_invariant_under_scaling(alpha in prop_oneof![-50.0f64..-0.01, 0.01f64..50.0], shift in -0.5f64..0.5) {
            let d = line();
            let g = Profile::Sum { terms: vec![Profile::odd_gaussian(), Profile::Gaussian { amplitude: shift, width: 1.0, center: 0.0 }] };
            let eq = EquationSpec::plain(0.0);
            let r1 = check_orthogonality(&KernelSpectrum::from_profile(&g, &d, &[0.0]).unwrap(), CaseTag::Rd, &eq).unwrap();
            let r2 = check_orthogonality(&KernelSpectrum::from_profile(&g.clone().scaled(alpha), &d, &[0.0]).unwrap(), CaseTag::Rd, &eq).unwrap();
            for (c1, c2) in r1.conditions.iter().zip(&r2.conditions) {
                prop_assert_eq!(c1.pass, c2.pass);
            }
        }

        #[test]
        fn parity_kills_raw_values(amp in 0.1f64..5.0, width in 0.5f64..2.0) {
            let d = line();
            let even = KernelSpectrum::from_profile(&Profile::Gaussian { amplitude: amp, width, center: 0.0 }, &d, &[0.0]).unwrap();
            prop_assert!(even.derivative_at(0.0, 1).unwrap().norm() < 1e-10);
            let odd = KernelSpectrum::from_profile(&Profile::OddGaussian { amplitude: amp, width }, &d, &[0.0]).unwrap();
            prop_assert!(odd.derivative_at(0.0, 0).unwrap().norm() < 1e-10);
            prop_assert!(even.sup_bound <= even.moments.unwrap().m0 / (2.0 * PI).sqrt() + 1e-10);
            prop_assert!(odd.sup_bound <= odd.moments.unwrap().m0 / (2.0 * PI).sqrt() + 1e-10);
        }
    }
}

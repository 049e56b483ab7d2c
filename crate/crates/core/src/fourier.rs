//! Discrete realizations of the unitary Fourier transform.
//!
//! Real line: `f̂(p) = (2π)^{-1/2} ∫ f(x) e^{-ipx} dx` on the box `[-X, X)`
//! by the rectangle rule, evaluated at `p_j = jπ/X`. The grid pairing makes
//! the discrete forward/inverse pair exactly unitary.
//!
//! Periodic interval: `f_n = ∫_0^{2π} f(x) e^{-inx} / √(2π) dx` for
//! `|n| ≤ N_max`, exact for fields band-limited below half the sample count.

use std::cell::RefCell;
use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::Serialize;
use thiserror::Error;

use crate::domain::DomainSpec;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FourierError {
    #[error("grid mismatch: expected {expected} values, got {got}")]
    GridMismatch { expected: usize, got: usize },
    #[error("fields live on different domains")]
    DomainMismatch,
    #[error("inverse transform is not real: imaginary residue {residue:.3e} exceeds {threshold:.3e}")]
    NonRealResult { residue: f64, threshold: f64 },
    #[error("vector field needs at least one component")]
    Empty,
}

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

fn plan(len: usize, inverse: bool) -> Arc<dyn Fft<f64>> {
    PLANNER.with(|p| {
        let mut p = p.borrow_mut();
        if inverse {
            p.plan_fft_inverse(len)
        } else {
            p.plan_fft_forward(len)
        }
    })
}

/// Relative imaginary residue allowed when returning to physical space.
pub const REAL_RESIDUE_TOL: f64 = 1e-10;

/// Physical samples to stored spectrum.
pub fn forward_transform(samples: &[f64], domain: &DomainSpec) -> Result<Vec<Complex64>, FourierError> {
    let m = domain.sample_count();
    if samples.len() != m {
        return Err(FourierError::GridMismatch {
            expected: m,
            got: samples.len(),
        });
    }
    let mut buf: Vec<Complex64> = samples.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    plan(m, false).process(&mut buf);

    let scale = domain.step() / (2.0 * PI).sqrt();
    let out = (0..domain.spectrum_len())
        .map(|idx| {
            let mode = domain.mode_of(idx);
            let k = mode.rem_euclid(m as i64) as usize;
            let v = buf[k] * scale;
            match domain {
                // e^{-i p_j (-X)} = (-1)^j
                DomainSpec::RealLine { .. } if mode % 2 != 0 => -v,
                _ => v,
            }
        })
        .collect();
    Ok(out)
}

/// Stored spectrum back to complex physical samples.
fn synthesize(spectrum: &[Complex64], domain: &DomainSpec) -> Result<Vec<Complex64>, FourierError> {
    if spectrum.len() != domain.spectrum_len() {
        return Err(FourierError::GridMismatch {
            expected: domain.spectrum_len(),
            got: spectrum.len(),
        });
    }
    let m = domain.sample_count();
    let mut buf = vec![Complex64::new(0.0, 0.0); m];
    for (idx, &c) in spectrum.iter().enumerate() {
        let mode = domain.mode_of(idx);
        let k = mode.rem_euclid(m as i64) as usize;
        buf[k] = match domain {
            DomainSpec::RealLine { .. } if mode % 2 != 0 => -c,
            _ => c,
        };
    }
    plan(m, true).process(&mut buf);
    let scale = domain.frequency_step() / (2.0 * PI).sqrt();
    for v in buf.iter_mut() {
        *v *= scale;
    }
    Ok(buf)
}

/// Stored spectrum back to real physical samples.
///
/// The imaginary residue must stay below `1e-10` of the largest output
/// modulus; anything larger means the spectrum was not conjugate symmetric.
pub fn inverse_transform(spectrum: &[Complex64], domain: &DomainSpec) -> Result<Vec<f64>, FourierError> {
    let buf = synthesize(spectrum, domain)?;
    let peak = buf.iter().map(|c| c.norm()).fold(0.0, f64::max);
    let residue = buf.iter().map(|c| c.im.abs()).fold(0.0, f64::max);
    let threshold = REAL_RESIDUE_TOL * peak;
    if residue > threshold {
        return Err(FourierError::NonRealResult { residue, threshold });
    }
    Ok(buf.into_iter().map(|c| c.re).collect())
}

/// Set when a real-line field has not decayed near the box edges.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TruncationWarning {
    /// `max |f|` on the outer 5% of the box divided by `max |f|`.
    pub edge_ratio: f64,
}

/// Edge mass threshold for [`TruncationWarning`].
pub const TRUNCATION_TOL: f64 = 1e-12;

/// One scalar function held both as physical samples and as spectral data.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralField {
    domain: DomainSpec,
    physical: Vec<f64>,
    spectrum: Vec<Complex64>,
}

impl SpectralField {
    pub fn from_physical(domain: DomainSpec, physical: Vec<f64>) -> Result<Self, FourierError> {
        let spectrum = forward_transform(&physical, &domain)?;
        Ok(SpectralField {
            domain,
            physical,
            spectrum,
        })
    }

    pub fn from_spectrum(domain: DomainSpec, spectrum: Vec<Complex64>) -> Result<Self, FourierError> {
        let physical = inverse_transform(&spectrum, &domain)?;
        Ok(SpectralField {
            domain,
            physical,
            spectrum,
        })
    }

    pub fn from_fn<F: Fn(f64) -> f64>(domain: DomainSpec, f: F) -> Result<Self, FourierError> {
        let samples = domain.nodes().into_iter().map(f).collect();
        Self::from_physical(domain, samples)
    }

    pub fn zeros(domain: DomainSpec) -> Self {
        SpectralField {
            domain,
            physical: vec![0.0; domain.sample_count()],
            spectrum: vec![Complex64::new(0.0, 0.0); domain.spectrum_len()],
        }
    }

    pub fn domain(&self) -> &DomainSpec {
        &self.domain
    }

    pub fn physical(&self) -> &[f64] {
        &self.physical
    }

    pub fn spectrum(&self) -> &[Complex64] {
        &self.spectrum
    }

    /// Spectral value at a signed mode, zero when the mode is not stored.
    pub fn mode(&self, mode: i64) -> Complex64 {
        self.domain
            .index_of(mode)
            .map(|i| self.spectrum[i])
            .unwrap_or_default()
    }

    pub fn max_abs(&self) -> f64 {
        self.physical.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn max_spectrum(&self) -> f64 {
        self.spectrum.iter().fold(0.0, |m, v| m.max(v.norm()))
    }

    /// Largest `|f̂(-p) - conj(f̂(p))|` over paired slots.
    pub fn conjugate_symmetry_defect(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for (idx, c) in self.spectrum.iter().enumerate() {
            let mode = self.domain.mode_of(idx);
            if let Some(j) = self.domain.index_of(-mode) {
                worst = worst.max((self.spectrum[j] - c.conj()).norm());
            }
        }
        worst
    }

    /// Largest deviation between the stored spectrum and a fresh forward
    /// transform of the stored samples, relative to the spectrum's size.
    pub fn consistency_defect(&self) -> f64 {
        let fresh = forward_transform(&self.physical, &self.domain).expect("lengths are invariant");
        let diff = fresh
            .iter()
            .zip(&self.spectrum)
            .fold(0.0_f64, |m, (a, b)| m.max((a - b).norm()));
        diff / self.max_spectrum().max(f64::MIN_POSITIVE)
    }

    pub fn truncation_warning(&self) -> Option<TruncationWarning> {
        if self.domain.is_periodic() {
            return None;
        }
        let peak = self.max_abs();
        if peak == 0.0 {
            return None;
        }
        let m = self.physical.len();
        let edge = (m as f64 * 0.025).ceil() as usize;
        let edge_peak = self.physical[..edge]
            .iter()
            .chain(&self.physical[m - edge..])
            .fold(0.0_f64, |a, v| a.max(v.abs()));
        let ratio = edge_peak / peak;
        (ratio > TRUNCATION_TOL).then_some(TruncationWarning { edge_ratio: ratio })
    }

    /// Physical-side `∫ |f|²`.
    pub fn l2_physical_sq(&self) -> f64 {
        self.domain.step() * self.physical.iter().map(|v| v * v).sum::<f64>()
    }

    /// Spectral-side `∫ |f̂|²` (or `Σ |f_n|²`).
    pub fn l2_spectral_sq(&self) -> f64 {
        self.domain.frequency_step() * self.spectrum.iter().map(|c| c.norm_sqr()).sum::<f64>()
    }

    /// `‖f‖² + ‖f''‖²`, computed as `Σ (1 + p⁴) |f̂(p)|² Δp`.
    pub fn h2_norm_sq(&self) -> f64 {
        let dp = self.domain.frequency_step();
        self.spectrum
            .iter()
            .enumerate()
            .map(|(i, c)| {
                let p = self.domain.frequency(i);
                (1.0 + p.powi(4)) * c.norm_sqr()
            })
            .sum::<f64>()
            * dp
    }

    pub fn scale(&self, alpha: f64) -> SpectralField {
        SpectralField {
            domain: self.domain,
            physical: self.physical.iter().map(|v| v * alpha).collect(),
            spectrum: self.spectrum.iter().map(|c| c * alpha).collect(),
        }
    }

    fn zip_with(&self, other: &SpectralField, sign: f64) -> Result<SpectralField, FourierError> {
        if self.domain != other.domain {
            return Err(FourierError::DomainMismatch);
        }
        Ok(SpectralField {
            domain: self.domain,
            physical: self
                .physical
                .iter()
                .zip(&other.physical)
                .map(|(a, b)| a + sign * b)
                .collect(),
            spectrum: self
                .spectrum
                .iter()
                .zip(&other.spectrum)
                .map(|(a, b)| a + b * sign)
                .collect(),
        })
    }

    pub fn add(&self, other: &SpectralField) -> Result<SpectralField, FourierError> {
        self.zip_with(other, 1.0)
    }

    pub fn sub(&self, other: &SpectralField) -> Result<SpectralField, FourierError> {
        self.zip_with(other, -1.0)
    }
}

/// `|‖f‖²_phys - ‖f̂‖²| / max(‖f‖², ε)`.
pub fn plancherel_gap(f: &SpectralField) -> f64 {
    let phys = f.l2_physical_sq();
    let spec = f.l2_spectral_sq();
    (phys - spec).abs() / phys.max(f64::MIN_POSITIVE)
}

/// `N` scalar fields on one shared grid.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorField {
    domain: DomainSpec,
    components: Vec<SpectralField>,
}

impl VectorField {
    pub fn new(components: Vec<SpectralField>) -> Result<Self, FourierError> {
        let first = components.first().ok_or(FourierError::Empty)?;
        let domain = *first.domain();
        if components.iter().any(|c| *c.domain() != domain) {
            return Err(FourierError::DomainMismatch);
        }
        Ok(VectorField { domain, components })
    }

    pub fn zeros(domain: DomainSpec, n: usize) -> Self {
        VectorField {
            domain,
            components: vec![SpectralField::zeros(domain); n],
        }
    }

    pub fn from_physical(domain: DomainSpec, samples: Vec<Vec<f64>>) -> Result<Self, FourierError> {
        let comps = samples
            .into_iter()
            .map(|s| SpectralField::from_physical(domain, s))
            .collect::<Result<Vec<_>, _>>()?;
        Self::new(comps)
    }

    pub fn domain(&self) -> &DomainSpec {
        &self.domain
    }

    pub fn len(&self) -> usize {
        self.components.len()
    }

    pub fn is_empty(&self) -> bool {
        self.components.is_empty()
    }

    pub fn components(&self) -> &[SpectralField] {
        &self.components
    }

    pub fn component(&self, k: usize) -> &SpectralField {
        &self.components[k]
    }

    /// Value of every component at physical node `j`.
    pub fn point(&self, j: usize, out: &mut [f64]) {
        for (o, c) in out.iter_mut().zip(&self.components) {
            *o = c.physical[j];
        }
    }

    pub fn sub(&self, other: &VectorField) -> Result<VectorField, FourierError> {
        if self.len() != other.len() {
            return Err(FourierError::GridMismatch {
                expected: self.len(),
                got: other.len(),
            });
        }
        let comps = self
            .components
            .iter()
            .zip(&other.components)
            .map(|(a, b)| a.sub(b))
            .collect::<Result<Vec<_>, _>>()?;
        VectorField::new(comps)
    }

    pub fn add(&self, other: &VectorField) -> Result<VectorField, FourierError> {
        if self.len() != other.len() {
            return Err(FourierError::GridMismatch {
                expected: self.len(),
                got: other.len(),
            });
        }
        let comps = self
            .components
            .iter()
            .zip(&other.components)
            .map(|(a, b)| a.add(b))
            .collect::<Result<Vec<_>, _>>()?;
        VectorField::new(comps)
    }

    pub fn scale(&self, alpha: f64) -> VectorField {
        VectorField {
            domain: self.domain,
            components: self.components.iter().map(|c| c.scale(alpha)).collect(),
        }
    }

    pub fn truncation_warnings(&self) -> Vec<(usize, TruncationWarning)> {
        self.components
            .iter()
            .enumerate()
            .filter_map(|(k, c)| c.truncation_warning().map(|w| (k, w)))
            .collect()
    }
}

/// `√(Σ_k Σ_p (1 + p⁴) |û_k(p)|² Δp)`, the system H² norm.
pub fn h2_norm(u: &VectorField) -> f64 {
    u.components.iter().map(SpectralField::h2_norm_sq).sum::<f64>().sqrt()
}

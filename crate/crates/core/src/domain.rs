//! Computational domains: a symmetric box standing in for the real line, or
//! the periodic interval `[0, 2π]`.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Oversampling of the physical grid relative to the retained periodic modes.
pub const PERIODIC_OVERSAMPLING: usize = 4;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DomainError {
    #[error("half width must be positive and finite, got {0}")]
    HalfWidth(f64),
    #[error("grid points must be a power of two and at least 16, got {0}")]
    GridPoints(usize),
    #[error("mode cutoff must be at least 8, got {0}")]
    ModeCutoff(usize),
}

/// Where the system lives.
///
/// `RealLine` truncates ℝ to `[-X, X)` sampled on `M` points. `Periodic`
/// always means `I = [0, 2π]` and keeps Fourier modes `|n| ≤ N_max`; its
/// physical grid has `4·N_max` points.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DomainSpec {
    RealLine { half_width: f64, grid_points: usize },
    Periodic { mode_cutoff: usize },
}

impl DomainSpec {
    pub fn real_line(half_width: f64, grid_points: usize) -> Result<Self, DomainError> {
        let d = DomainSpec::RealLine {
            half_width,
            grid_points,
        };
        d.validate()?;
        Ok(d)
    }

    pub fn periodic(mode_cutoff: usize) -> Result<Self, DomainError> {
        let d = DomainSpec::Periodic { mode_cutoff };
        d.validate()?;
        Ok(d)
    }

    pub fn validate(&self) -> Result<(), DomainError> {
        match *self {
            DomainSpec::RealLine {
                half_width,
                grid_points,
            } => {
                if !(half_width.is_finite() && half_width > 0.0) {
                    return Err(DomainError::HalfWidth(half_width));
                }
                if grid_points < 16 || !grid_points.is_power_of_two() {
                    return Err(DomainError::GridPoints(grid_points));
                }
                Ok(())
            }
            DomainSpec::Periodic { mode_cutoff } => {
                if mode_cutoff < 8 {
                    return Err(DomainError::ModeCutoff(mode_cutoff));
                }
                Ok(())
            }
        }
    }

    pub fn is_periodic(&self) -> bool {
        matches!(self, DomainSpec::Periodic { .. })
    }

    /// Number of physical samples.
    pub fn sample_count(&self) -> usize {
        match *self {
            DomainSpec::RealLine { grid_points, .. } => grid_points,
            DomainSpec::Periodic { mode_cutoff } => PERIODIC_OVERSAMPLING * mode_cutoff,
        }
    }

    /// Number of stored spectral values.
    pub fn spectrum_len(&self) -> usize {
        match *self {
            DomainSpec::RealLine { grid_points, .. } => grid_points,
            DomainSpec::Periodic { mode_cutoff } => 2 * mode_cutoff + 1,
        }
    }

    /// Physical grid spacing.
    pub fn step(&self) -> f64 {
        match *self {
            DomainSpec::RealLine {
                half_width,
                grid_points,
            } => 2.0 * half_width / grid_points as f64,
            DomainSpec::Periodic { .. } => 2.0 * PI / self.sample_count() as f64,
        }
    }

    /// Left end of the sampled interval.
    pub fn origin(&self) -> f64 {
        match *self {
            DomainSpec::RealLine { half_width, .. } => -half_width,
            DomainSpec::Periodic { .. } => 0.0,
        }
    }

    /// Length of the sampled interval (`2X` or `2π`).
    pub fn length(&self) -> f64 {
        self.step() * self.sample_count() as f64
    }

    pub fn nodes(&self) -> Vec<f64> {
        let h = self.step();
        let x0 = self.origin();
        (0..self.sample_count()).map(|j| x0 + j as f64 * h).collect()
    }

    /// Spacing of the frequency grid: `π/X` on the real line, 1 on `I`.
    pub fn frequency_step(&self) -> f64 {
        match *self {
            DomainSpec::RealLine { half_width, .. } => PI / half_width,
            DomainSpec::Periodic { .. } => 1.0,
        }
    }

    /// Signed integer label of spectrum slot `idx`.
    ///
    /// Slots are stored in ascending order: `-M/2 .. M/2-1` on the real
    /// line, `-N_max ..= N_max` on the periodic interval.
    pub fn mode_of(&self, idx: usize) -> i64 {
        match *self {
            DomainSpec::RealLine { grid_points, .. } => idx as i64 - (grid_points / 2) as i64,
            DomainSpec::Periodic { mode_cutoff } => idx as i64 - mode_cutoff as i64,
        }
    }

    /// Inverse of [`mode_of`](Self::mode_of); `None` when the mode is not stored.
    pub fn index_of(&self, mode: i64) -> Option<usize> {
        let idx = match *self {
            DomainSpec::RealLine { grid_points, .. } => mode + (grid_points / 2) as i64,
            DomainSpec::Periodic { mode_cutoff } => mode + mode_cutoff as i64,
        };
        if idx >= 0 && (idx as usize) < self.spectrum_len() {
            Some(idx as usize)
        } else {
            None
        }
    }

    /// Frequency of spectrum slot `idx`.
    pub fn frequency(&self, idx: usize) -> f64 {
        self.mode_of(idx) as f64 * self.frequency_step()
    }

    pub fn frequencies(&self) -> Vec<f64> {
        (0..self.spectrum_len()).map(|i| self.frequency(i)).collect()
    }

    /// Slot without a conjugate partner (the real-line Nyquist bin).
    pub fn unpaired_index(&self) -> Option<usize> {
        match self {
            DomainSpec::RealLine { .. } => Some(0),
            DomainSpec::Periodic { .. } => None,
        }
    }

    /// Grid resolution recorded in certificates: `Δp` and the largest |p|.
    pub fn resolution(&self) -> (f64, f64) {
        let dp = self.frequency_step();
        let top = self.frequency(0).abs().max(self.frequency(self.spectrum_len() - 1).abs());
        (dp, top)
    }
}

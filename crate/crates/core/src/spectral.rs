//! Spectral measures on the sphere and their characteristic exponents.
//!
//! A symmetric measure `mu` on `S^{d-1}` together with the stability index
//! `alpha` determines the generator of the driving noise through the symbol
//! `psi(lambda) = int |lambda . xi|^alpha mu(d xi)`. Isotropic measures are
//! normalised so that `psi(lambda) = total_mass * |lambda|^alpha`, which pins
//! the usual fractional-Laplacian convention; the choice is echoed in report
//! metadata.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_DEGENERACY_FLOOR: f64 = 1e-12;

/// Default sphere-search resolution: 4096 directions in d = 2, 2 in d = 1.
pub fn default_sphere_resolution(dim: usize) -> usize {
    if dim == 1 {
        2
    } else {
        4096
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum MeasureKind {
    /// Normalised Lebesgue measure scaled by `total_mass`:
    /// `psi(lambda) = total_mass * |lambda|^alpha`.
    Isotropic { total_mass: f64 },
    /// `sum_j c_j (delta_{e_j} + delta_{-e_j})`:
    /// `psi(lambda) = 2 sum_j c_j |lambda_j|^alpha`.
    Cylindrical { weights: Vec<f64> },
    /// Symmetric atoms `(xi_i, w_i)`; the stored list contains both `xi` and
    /// `-xi` with equal weights.
    Atomic { atoms: Vec<Atom> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Atom {
    pub direction: [f64; 2],
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectralMeasure {
    alpha: f64,
    dim: usize,
    kind: MeasureKind,
}

fn check_alpha_dim(alpha: f64, dim: usize) -> Result<()> {
    if !(alpha > 1.0 && alpha <= 2.0) {
        return Err(Error::InvalidMeasure(format!("alpha must lie in (1, 2], got {alpha}")));
    }
    if !(dim == 1 || dim == 2) {
        return Err(Error::InvalidMeasure(format!("dimension must be 1 or 2, got {dim}")));
    }
    Ok(())
}

impl SpectralMeasure {
    pub fn isotropic(alpha: f64, dim: usize, total_mass: f64) -> Result<Self> {
        check_alpha_dim(alpha, dim)?;
        if !(total_mass.is_finite() && total_mass > 0.0) {
            return Err(Error::InvalidMeasure(format!("total mass must be positive, got {total_mass}")));
        }
        Ok(Self { alpha, dim, kind: MeasureKind::Isotropic { total_mass } })
    }

    /// Standard isotropic normalisation `psi(lambda) = |lambda|^alpha`.
    pub fn standard_isotropic(alpha: f64, dim: usize) -> Result<Self> {
        Self::isotropic(alpha, dim, 1.0)
    }

    pub fn cylindrical(alpha: f64, weights: &[f64]) -> Result<Self> {
        let dim = weights.len();
        check_alpha_dim(alpha, dim)?;
        if !weights.iter().all(|w| w.is_finite() && *w > 0.0) {
            return Err(Error::InvalidMeasure("cylindrical weights must be positive".into()));
        }
        Ok(Self { alpha, dim, kind: MeasureKind::Cylindrical { weights: weights.to_vec() } })
    }

    /// Builds an atomic measure from direction/weight pairs; each pair is
    /// symmetrised into `{xi, -xi}` carrying weight `w` each, so a pair
    /// contributes `2 w |lambda . xi|^alpha`, matching the cylindrical
    /// convention.
    pub fn atomic(alpha: f64, dim: usize, pairs: &[([f64; 2], f64)]) -> Result<Self> {
        check_alpha_dim(alpha, dim)?;
        if pairs.is_empty() {
            return Err(Error::InvalidMeasure("atomic measure needs at least one pair".into()));
        }
        let mut atoms = Vec::with_capacity(2 * pairs.len());
        for &(dir, w) in pairs {
            if !(w.is_finite() && w > 0.0) {
                return Err(Error::InvalidMeasure("atom weights must be positive".into()));
            }
            let norm = (dir[0] * dir[0] + dir[1] * dir[1]).sqrt();
            if !(norm.is_finite() && norm > 0.0) {
                return Err(Error::InvalidMeasure("atom directions must be nonzero".into()));
            }
            if dim == 1 && dir[1] != 0.0 {
                return Err(Error::InvalidMeasure("1-d atoms must have zero second component".into()));
            }
            let unit = [dir[0] / norm, dir[1] / norm];
            atoms.push(Atom { direction: unit, weight: w });
            atoms.push(Atom { direction: [-unit[0], -unit[1]], weight: w });
        }
        Ok(Self { alpha, dim, kind: MeasureKind::Atomic { atoms } })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn kind(&self) -> &MeasureKind {
        &self.kind
    }

    pub fn is_isotropic(&self) -> bool {
        matches!(self.kind, MeasureKind::Isotropic { .. })
    }

    /// Characteristic exponent `psi(lambda)`; grid frequencies are always
    /// finite so this skips input validation (see [`Self::characteristic_exponent`]).
    pub fn psi(&self, lambda: &[f64]) -> f64 {
        let a = self.alpha;
        match &self.kind {
            MeasureKind::Isotropic { total_mass } => {
                let norm2: f64 = lambda.iter().map(|l| l * l).sum();
                total_mass * norm2.powf(a / 2.0)
            }
            MeasureKind::Cylindrical { weights } => {
                2.0 * weights
                    .iter()
                    .zip(lambda)
                    .map(|(c, l)| c * l.abs().powf(a))
                    .sum::<f64>()
            }
            MeasureKind::Atomic { atoms } => atoms
                .iter()
                .map(|at| {
                    let dot = at.direction[0] * lambda[0]
                        + at.direction[1] * lambda.get(1).copied().unwrap_or(0.0);
                    at.weight * dot.abs().powf(a)
                })
                .sum(),
        }
    }

    /// Checked evaluation of `psi`; rejects non-finite frequencies.
    pub fn characteristic_exponent(&self, lambda: &[f64]) -> Result<f64> {
        if lambda.len() != self.dim {
            return Err(Error::InvalidMeasure(format!(
                "frequency has {} components, measure lives in dimension {}",
                lambda.len(),
                self.dim
            )));
        }
        if !lambda.iter().all(|l| l.is_finite()) {
            return Err(Error::NonFinite("characteristic exponent argument"));
        }
        Ok(self.psi(lambda))
    }

    /// Unit directions used for the sphere search.
    fn sphere(&self, resolution: usize) -> Vec<[f64; 2]> {
        match self.dim {
            1 => vec![[1.0, 0.0], [-1.0, 0.0]],
            _ => (0..resolution)
                .map(|i| {
                    let th = 2.0 * std::f64::consts::PI * i as f64 / resolution as f64;
                    [th.cos(), th.sin()]
                })
                .collect(),
        }
    }

    pub fn nondegeneracy_constants(&self, resolution: usize) -> Result<NonDegeneracy> {
        self.nondegeneracy_constants_with_floor(resolution, DEFAULT_DEGENERACY_FLOOR)
    }

    /// Grid search of `psi` over the unit sphere. Returns
    /// `kappa = max(sup psi, sup 1/psi)` together with the extremising
    /// directions; errors out when `min psi` falls below `floor`.
    pub fn nondegeneracy_constants_with_floor(
        &self,
        resolution: usize,
        floor: f64,
    ) -> Result<NonDegeneracy> {
        if self.dim == 2 && resolution < 64 {
            return Err(Error::InvalidMeasure(format!(
                "sphere resolution must be at least 64, got {resolution}"
            )));
        }
        let mut min_psi = f64::INFINITY;
        let mut max_psi = f64::NEG_INFINITY;
        let mut argmin = [1.0, 0.0];
        let mut argmax = [1.0, 0.0];
        for dir in self.sphere(resolution.max(2)) {
            let v = self.psi(&dir[..self.dim]);
            if v < min_psi {
                min_psi = v;
                argmin = dir;
            }
            if v > max_psi {
                max_psi = v;
                argmax = dir;
            }
        }
        if min_psi < floor {
            return Err(Error::DegenerateMeasure { min_psi, floor });
        }
        let kappa = max_psi.max(1.0 / min_psi);
        Ok(NonDegeneracy { kappa, min_psi, max_psi, argmin_direction: argmin, argmax_direction: argmax })
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct NonDegeneracy {
    pub kappa: f64,
    pub min_psi: f64,
    pub max_psi: f64,
    pub argmin_direction: [f64; 2],
    pub argmax_direction: [f64; 2],
}

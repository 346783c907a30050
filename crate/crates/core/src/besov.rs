//! Thermic-characterisation Besov norms on the periodic grid.
//!
//! The norm of `f` in `B^theta_{l,m}` is computed as
//! `||phi(D) f||_{L^l} + ( int_0^1 dv/v [v^{n - theta/alpha} ||d_v^n
//! ptilde_alpha(v, .) * f||_{L^l}]^m )^{1/m}`,
//! with `ptilde_alpha` the isotropic stable kernel (regardless of the
//! driving measure), `phi` a smooth bump with `phi(0) = 1` supported in
//! `|lambda| <= 1`, and the two summands combined by a plain sum. The time
//! derivative acts as the multiplier `(-|lambda|^alpha)^n exp(-v |lambda|^alpha)`.

use rayon::prelude::*;
use rustfft::num_complex::Complex64;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::fit::{log_log_fit, LineFit};
use crate::grid::{same_grid, GridFunction, Spectrum};
use crate::kernel::{density_grid, derive_field, DerivTag};
use crate::spectral::SpectralMeasure;

/// Default smallest thermic time.
pub const DEFAULT_V_MIN: f64 = 1e-6;
/// Default geometric ratio of the v-grid (quarter octave).
pub const DEFAULT_V_RATIO: f64 = 0.8408964152537145; // 2^(-1/4)

/// Conjugate exponent, `1/x + 1/x' = 1` with `1 <-> inf`.
pub fn conjugate_exponent(x: f64) -> f64 {
    if x.is_infinite() {
        1.0
    } else if x <= 1.0 {
        f64::INFINITY
    } else {
        x / (x - 1.0)
    }
}

/// Index set of the thermic Besov norm.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct BesovIndex {
    /// Regularity `theta`.
    pub regularity: f64,
    /// Spatial integrability `l` in `[1, inf]`.
    pub integrability: f64,
    /// Summability `m` in `[1, inf]`.
    pub summability: f64,
    /// Semigroup index of the isotropic comparison kernel.
    pub alpha: f64,
    /// Thermic order `n`, minimal with `n > theta / alpha`.
    pub thermic_order: u32,
}

impl BesovIndex {
    pub fn new(regularity: f64, integrability: f64, summability: f64, alpha: f64) -> Result<Self> {
        if !(alpha > 1.0 && alpha <= 2.0) {
            return Err(Error::InvalidIndex(format!("alpha must lie in (1, 2], got {alpha}")));
        }
        if !(integrability >= 1.0) || !(summability >= 1.0) {
            return Err(Error::InvalidIndex(
                "integrability and summability exponents must be >= 1".into(),
            ));
        }
        if !regularity.is_finite() {
            return Err(Error::InvalidIndex("regularity must be finite".into()));
        }
        let thermic_order = if regularity < alpha { 1 } else { 2 };
        if f64::from(thermic_order) <= regularity / alpha {
            return Err(Error::InvalidIndex(format!(
                "regularity {regularity} out of range for thermic order {thermic_order}"
            )));
        }
        Ok(Self { regularity, integrability, summability, alpha, thermic_order })
    }
}

/// Geometric grid on `(v_min, 1]` for the thermic integral.
#[derive(Debug, Clone)]
pub struct VGrid {
    points: Vec<f64>,
}

impl VGrid {
    pub fn geometric(v_min: f64, ratio: f64) -> Self {
        assert!(v_min > 0.0 && v_min < 1.0 && ratio > 0.0 && ratio < 1.0);
        let mut points = vec![1.0];
        let mut v = 1.0;
        while v * ratio >= v_min {
            v *= ratio;
            points.push(v);
        }
        points.reverse();
        Self { points }
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn v_min(&self) -> f64 {
        self.points[0]
    }
}

impl Default for VGrid {
    fn default() -> Self {
        Self::geometric(DEFAULT_V_MIN, DEFAULT_V_RATIO)
    }
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct BesovNormBreakdown {
    /// `||phi(D) f||_{L^l}`.
    pub lowpass: f64,
    /// Thermic part aggregated over the v-grid.
    pub thermic: f64,
    /// `lowpass + thermic` (the sum convention).
    pub total: f64,
}

fn bump(r: f64) -> f64 {
    if r >= 1.0 {
        0.0
    } else {
        (1.0 - 1.0 / (1.0 - r * r)).exp()
    }
}

fn lowpass_field(spectrum: &Spectrum) -> GridFunction {
    let mut s = spectrum.clone();
    s.scale_by(|l| Complex64::new(bump((l[0] * l[0] + l[1] * l[1]).sqrt()), 0.0));
    s.synthesize()
}

/// `||d_v^n P_v f||_{L^l}` over the v-grid, via the multiplier
/// `(-|lambda|^alpha)^n exp(-v |lambda|^alpha)`.
pub fn thermic_profile(
    spectrum: &Spectrum,
    alpha: f64,
    n: u32,
    l: f64,
    vgrid: &VGrid,
) -> Vec<f64> {
    vgrid
        .points()
        .par_iter()
        .map(|&v| {
            let mut s = spectrum.clone();
            s.scale_by(|lam| {
                let w = (lam[0] * lam[0] + lam[1] * lam[1]).powf(alpha / 2.0);
                Complex64::new((-w).powi(n as i32) * (-v * w).exp(), 0.0)
            });
            s.synthesize().lp_norm(l)
        })
        .collect()
}

fn check_v_resolution(spectrum: &Spectrum, alpha: f64, v_min: f64) -> Result<()> {
    let lambda_max = spectrum.max_active_frequency(1e-12);
    if lambda_max == 0.0 {
        return Ok(());
    }
    let decay = (-v_min * lambda_max.powf(alpha)).exp();
    if decay <= 0.5 {
        return Err(Error::VGridTooCoarse { decay });
    }
    Ok(())
}

pub fn besov_norm(f: &GridFunction, idx: &BesovIndex) -> Result<BesovNormBreakdown> {
    besov_norm_with_vgrid(f, idx, &VGrid::default())
}

pub fn besov_norm_with_vgrid(
    f: &GridFunction,
    idx: &BesovIndex,
    vgrid: &VGrid,
) -> Result<BesovNormBreakdown> {
    let spectrum = f.to_spectrum();
    check_v_resolution(&spectrum, idx.alpha, vgrid.v_min())?;
    let lowpass = lowpass_field(&spectrum).lp_norm(idx.integrability);
    let norms = thermic_profile(&spectrum, idx.alpha, idx.thermic_order, idx.integrability, vgrid);
    let weight = f64::from(idx.thermic_order) - idx.regularity / idx.alpha;
    let weighted: Vec<f64> =
        vgrid.points().iter().zip(&norms).map(|(v, n)| v.powf(weight) * n).collect();
    let thermic = if idx.summability.is_infinite() {
        weighted.iter().fold(0.0f64, |a, &b| a.max(b))
    } else {
        // trapezoid in log v of the m-th power, in the measure dv/v
        let m = idx.summability;
        let vs = vgrid.points();
        let mut acc = 0.0;
        for i in 0..vs.len() - 1 {
            let dlog = (vs[i + 1] / vs[i]).ln();
            acc += 0.5 * (weighted[i].powf(m) + weighted[i + 1].powf(m)) * dlog;
        }
        acc.powf(1.0 / m)
    };
    Ok(BesovNormBreakdown { lowpass, thermic, total: lowpass + thermic })
}

/// Grid quadrature of `int f g`.
pub fn duality_pairing(f: &GridFunction, g: &GridFunction) -> Result<f64> {
    same_grid(f, g)?;
    Ok(f.mul(g)?.quadrature())
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct DualityReport {
    pub pairing: f64,
    pub norm_f: f64,
    pub norm_g: f64,
    pub bound: f64,
    pub ok: bool,
}

/// Checks `|int f g| <= ||f||_{theta, l, m} ||g||_{-theta, l', m'}` with
/// conjugate exponents on the `g` side.
pub fn duality_check(
    f: &GridFunction,
    g: &GridFunction,
    regularity: f64,
    l: f64,
    m: f64,
    alpha: f64,
) -> Result<DualityReport> {
    let pairing = duality_pairing(f, g)?;
    let idx_f = BesovIndex::new(regularity, l, m, alpha)?;
    let idx_g =
        BesovIndex::new(-regularity, conjugate_exponent(l), conjugate_exponent(m), alpha)?;
    let norm_f = besov_norm(f, &idx_f)?.total;
    let norm_g = besov_norm(g, &idx_g)?.total;
    let bound = norm_f * norm_g;
    Ok(DualityReport { pairing, norm_f, norm_g, bound, ok: pairing.abs() <= bound * (1.0 + 1e-12) })
}

/// Dyadic lag ladder for modulus-of-continuity fits.
#[derive(Debug, Clone, Copy)]
pub struct LagRange {
    pub axis: usize,
    /// Smallest lag in grid points.
    pub min_points: usize,
    /// Number of dyadic lags `min_points * 2^j`.
    pub count: usize,
}

impl LagRange {
    pub fn new(axis: usize, min_points: usize, count: usize) -> Result<Self> {
        if count < 6 {
            return Err(Error::NotEnoughLags { required: 6, got: count });
        }
        Ok(Self { axis, min_points: min_points.max(1), count })
    }
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct HolderFit {
    pub slope: f64,
    pub r2: f64,
    /// False when the modulus is too irregular for the slope to mean much.
    pub reliable: bool,
}

/// Least-squares slope of `log sup_x |f(x + delta) - f(x)|` against
/// `log delta` over dyadic lags.
pub fn holder_exponent(f: &GridFunction, lags: &LagRange) -> Result<HolderFit> {
    let grid = f.grid();
    let n = grid.points_per_axis();
    let mut deltas = Vec::with_capacity(lags.count);
    let mut moduli = Vec::with_capacity(lags.count);
    for j in 0..lags.count {
        let pts = lags.min_points << j;
        if pts >= n / 2 {
            break;
        }
        let shifted = f.shifted(lags.axis, pts);
        let modulus = shifted.sub(f)?.max_abs();
        if modulus > 0.0 {
            deltas.push(pts as f64 * grid.spacing());
            moduli.push(modulus);
        }
    }
    if deltas.len() < 6 {
        return Err(Error::NotEnoughLags { required: 6, got: deltas.len() });
    }
    let fit = log_log_fit(&deltas, &moduli);
    Ok(HolderFit { slope: fit.slope, r2: fit.r2, reliable: fit.r2 >= 0.9 })
}

#[derive(Debug, Clone, Serialize)]
pub struct ProductBoundReport {
    /// Fitted decay exponent of the product norm in the time gap.
    pub fitted: f64,
    /// `-[(1 - gamma)/alpha + d/(p alpha) + eta/alpha]`.
    pub predicted: f64,
    pub r2: f64,
    pub norms: Vec<(f64, f64)>,
    /// Fitted exponent not below the predicted decay (minus slack 0.1).
    pub pass: bool,
}

/// Measures `||Psi . D^eta p_alpha(u, . - x)||_{B^{1-gamma}_{p', q'}}` across
/// time gaps `u` and fits the decay exponent.
pub fn verify_product_bound(
    psi: &GridFunction,
    measure: &SpectralMeasure,
    eta: DerivTag,
    gamma: f64,
    p_prime: f64,
    q_prime: f64,
    gaps: &[f64],
) -> Result<ProductBoundReport> {
    if gaps.len() < 3 {
        return Err(Error::NotEnoughLags { required: 3, got: gaps.len() });
    }
    let alpha = measure.alpha();
    let d = measure.dim() as f64;
    let p = conjugate_exponent(p_prime);
    let eta_ord = eta.order(alpha);
    let predicted = -((1.0 - gamma) / alpha + d / (p * alpha) + eta_ord / alpha);
    let idx = BesovIndex::new(1.0 - gamma, p_prime, q_prime, alpha)?;
    let mut norms = Vec::with_capacity(gaps.len());
    for &u in gaps {
        let kernel = density_grid(measure, u, psi.grid())?;
        let deriv = derive_field(kernel.density(), alpha, eta);
        let product = psi.mul(&deriv)?;
        let norm = besov_norm(&product, &idx)?.total;
        norms.push((u, norm));
    }
    let us: Vec<f64> = norms.iter().map(|p| p.0).collect();
    let ns: Vec<f64> = norms.iter().map(|p| p.1).collect();
    let fit: LineFit = log_log_fit(&us, &ns);
    Ok(ProductBoundReport {
        fitted: fit.slope,
        predicted,
        r2: fit.r2,
        norms,
        pass: fit.slope >= predicted - 0.1,
    })
}

/// Norm-table CSV with columns `theta,l,m,lowpass,thermic,total`.
pub fn write_norm_table_csv<W: std::io::Write>(
    rows: &[(BesovIndex, BesovNormBreakdown)],
    w: &mut W,
) -> Result<()> {
    writeln!(w, "theta,l,m,lowpass,thermic,total")?;
    for (idx, b) in rows {
        writeln!(
            w,
            "{},{},{},{},{},{}",
            idx.regularity, idx.integrability, idx.summability, b.lowpass, b.thermic, b.total
        )?;
    }
    Ok(())
}

/// Closed-form thermic part of a plane wave `cos(k x)` under `(theta, inf, inf)`
/// with thermic order 1: `sup_v v^{1 - theta/alpha} k^alpha e^{-v k^alpha}`.
pub fn plane_wave_thermic(k: f64, regularity: f64, alpha: f64) -> f64 {
    let a = 1.0 - regularity / alpha;
    let ka = k.powf(alpha);
    let v_star = (a / ka).min(1.0);
    v_star.powf(a) * ka * (-v_star * ka).exp()
}

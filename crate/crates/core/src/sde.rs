//! Reconstructed dynamics: kernel-smoothed drift increments, Euler ensembles
//! and the moment / Riemann-sum / identification / uniqueness / occupation
//! experiments.
//!
//! The drift increment is
//! `Fscr(v, x, h) = int_v^{v+h} dr int F(r, y) p_alpha(r - v, y - x) dy`,
//! realised spectrally: each lacunary atom contributes
//! `a_j cos(k_j x.e + phi_j) * int_v^{v+h} sigma(r) e^{-(r - v) psi(k_j e)} dr`,
//! exact in space. The time integral is closed-form for a constant profile
//! and 16-point Gauss-Legendre in the exponentially warped variable
//! otherwise. Euler steps read `X_{i+1} = X_i + Fscr(t_i, X_i, h) + dW_i`
//! with exact stable increments.

use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::besov::{besov_norm, BesovIndex};
use crate::drift::DriftField;
use crate::error::{Error, Result};
use crate::fit::{log_log_fit, median};
use crate::grid::Grid;
use crate::kernel::sampling::sample_increment;
use crate::pde::RegularityParams;
use crate::spectral::SpectralMeasure;

/// 16-point Gauss-Legendre nodes and weights on [0, 1].
const GL16: [(f64, f64); 16] = [
    (0.005299532504175031, 0.013576229705877047),
    (0.0277124884633837, 0.031126761969323946),
    (0.06718439880608412, 0.04757925584124639),
    (0.1222977958224985, 0.06231448562776694),
    (0.19106187779867811, 0.07479799440828837),
    (0.27099161117138637, 0.08457825969750127),
    (0.35919822461037054, 0.09130170752246179),
    (0.4524937450811813, 0.09472530522753425),
    (0.5475062549188188, 0.09472530522753425),
    (0.6408017753896295, 0.09130170752246179),
    (0.7290083888286136, 0.08457825969750127),
    (0.8089381222013219, 0.07479799440828837),
    (0.8777022041775015, 0.06231448562776694),
    (0.9328156011939159, 0.04757925584124639),
    (0.9722875115366163, 0.031126761969323946),
    (0.994700467495825, 0.013576229705877047),
];

/// Kernel-smoothed drift increment `Fscr`, exact in space per spectral atom.
#[derive(Debug, Clone)]
pub struct DriftIncrementRule {
    drift: DriftField,
    measure: SpectralMeasure,
    /// `psi(k_j e_axis)` per atom.
    atom_psi: Vec<f64>,
}

impl DriftIncrementRule {
    pub fn new(drift: DriftField, measure: SpectralMeasure) -> Result<Self> {
        if drift.dim() != measure.dim() {
            return Err(Error::GridMismatch);
        }
        let atom_psi = drift
            .atoms
            .iter()
            .map(|a| {
                let mut l = [0.0f64, 0.0];
                l[a.axis] = a.freq;
                measure.psi(&l[..measure.dim()])
            })
            .collect();
        Ok(Self { drift, measure, atom_psi })
    }

    pub fn drift(&self) -> &DriftField {
        &self.drift
    }

    pub fn measure(&self) -> &SpectralMeasure {
        &self.measure
    }

    /// `int_v^{v+h} sigma(r) e^{-(r-v) w} dr`; closed form when `sigma == 1`,
    /// otherwise Gauss-Legendre in `s = (1 - e^{-w(r-v)})/w`, where the
    /// integrand reduces to the smooth profile `sigma(r(s))`.
    fn time_integral(&self, v: f64, h: f64, w: f64) -> f64 {
        let cap = if w * h < 1e-10 { h * (1.0 - 0.5 * w * h) } else { (1.0 - (-w * h).exp()) / w };
        if self.drift.spec.time_singularity == 0.0 {
            return cap;
        }
        let mut acc = 0.0;
        for (node, weight) in GL16 {
            let s = node * cap;
            let r = if w * h < 1e-10 { v + s } else { v - (1.0 - w * s).ln() / w };
            acc += weight * self.drift.sigma(r);
        }
        acc * cap
    }

    /// `Fscr(v, x, h)` as a d-vector.
    pub fn increment(&self, v: f64, x: &[f64], h: f64) -> [f64; 2] {
        debug_assert!(h > 0.0);
        let mut out = [0.0f64, 0.0];
        for (atom, &w) in self.drift.atoms.iter().zip(&self.atom_psi) {
            let amp = self.drift.effective_amplitude(atom);
            let spatial = (atom.freq * x[atom.axis] + atom.phase).cos();
            out[atom.component] += amp * spatial * self.time_integral(v, h, w);
        }
        out
    }

    /// Same increment with the kernel origin frozen at `(v0, x0)`; additive
    /// across sub-intervals by construction, used as a quadrature self-check.
    pub fn increment_frozen(&self, v0: f64, x0: &[f64], v: f64, h: f64) -> [f64; 2] {
        let mut out = [0.0f64, 0.0];
        for (atom, &w) in self.drift.atoms.iter().zip(&self.atom_psi) {
            let amp = self.drift.effective_amplitude(atom);
            let spatial = (atom.freq * x0[atom.axis] + atom.phase).cos();
            // integrate sigma(r) e^{-(r - v0) w} over [v, v+h]
            let damp = (-(v - v0) * w).exp();
            out[atom.component] += amp * spatial * damp * self.time_integral(v, h, w);
        }
        out
    }
}

/// Monte Carlo paths with their noise increments and the seed manifest.
#[derive(Debug, Clone)]
pub struct PathEnsemble {
    pub dim: usize,
    pub step: f64,
    pub horizon: f64,
    pub n_paths: usize,
    pub steps: usize,
    pub x0: [f64; 2],
    pub master_seed: u64,
    /// `xs[path][step * dim + comp]`, `step in 0..=steps`.
    pub xs: Vec<Vec<f64>>,
    /// `dws[path][step * dim + comp]`, `step in 0..steps`.
    pub dws: Vec<Vec<f64>>,
}

impl PathEnsemble {
    pub fn x(&self, path: usize, step: usize) -> &[f64] {
        &self.xs[path][step * self.dim..(step + 1) * self.dim]
    }

    pub fn time(&self, step: usize) -> f64 {
        step as f64 * self.step
    }

    /// Accumulated noise over `[step, step+lag]`.
    pub fn noise_sum(&self, path: usize, step: usize, lag: usize) -> [f64; 2] {
        let mut acc = [0.0f64, 0.0];
        for i in step..step + lag {
            for c in 0..self.dim {
                acc[c] += self.dws[path][i * self.dim + c];
            }
        }
        acc
    }
}

/// Euler scheme with exact stable increments; `rule = None` is pure noise.
pub fn euler_paths(
    x0: &[f64],
    rule: Option<&DriftIncrementRule>,
    measure: &SpectralMeasure,
    horizon: f64,
    steps: usize,
    n_paths: usize,
    master_seed: u64,
) -> Result<PathEnsemble> {
    let dim = measure.dim();
    if x0.len() != dim {
        return Err(Error::GridMismatch);
    }
    if steps == 0 || n_paths == 0 {
        return Err(Error::InvalidConfig("need at least one step and one path".into()));
    }
    let h = horizon / steps as f64;
    let results: Vec<(Vec<f64>, Vec<f64>)> = (0..n_paths)
        .into_par_iter()
        .map(|p| {
            let mut rng = ChaCha12Rng::seed_from_u64(master_seed);
            rng.set_stream(p as u64 + 1);
            let mut xs = Vec::with_capacity((steps + 1) * dim);
            let mut dws = Vec::with_capacity(steps * dim);
            let mut x = [0.0f64, 0.0];
            x[..dim].copy_from_slice(x0);
            xs.extend_from_slice(&x[..dim]);
            for i in 0..steps {
                let t = i as f64 * h;
                let drift = match rule {
                    Some(r) => r.increment(t, &x[..dim], h),
                    None => [0.0, 0.0],
                };
                let dw = sample_increment(measure, h, &mut rng);
                for c in 0..dim {
                    x[c] += drift[c] + dw[c];
                    dws.push(dw[c]);
                }
                xs.extend_from_slice(&x[..dim]);
            }
            (xs, dws)
        })
        .collect();
    let mut xs = Vec::with_capacity(n_paths);
    let mut dws = Vec::with_capacity(n_paths);
    for (a, b) in results {
        xs.push(a);
        dws.push(b);
    }
    let mut x0a = [0.0f64, 0.0];
    x0a[..dim].copy_from_slice(x0);
    Ok(PathEnsemble { dim, step: h, horizon, n_paths, steps, x0: x0a, master_seed, xs, dws })
}

fn norm_d(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

#[derive(Debug, Clone, Serialize)]
pub struct DriftBoundReport {
    pub slope: f64,
    pub r2: f64,
    /// `1/2 + chi - 0.05`.
    pub threshold: f64,
    pub sup_values: Vec<(f64, f64)>,
    pub pass: bool,
}

/// Fits `log sup_x |Fscr(v, x, h)|` against `log h` over a dyadic `h` ladder.
pub fn drift_bound_report(
    rule: &DriftIncrementRule,
    v: f64,
    h_list: &[f64],
    params: &RegularityParams,
    n_x: usize,
) -> Result<DriftBoundReport> {
    if h_list.len() < 3 {
        return Err(Error::NotEnoughLags { required: 3, got: h_list.len() });
    }
    let mut sups = Vec::with_capacity(h_list.len());
    for &h in h_list {
        let mut sup = 0.0f64;
        for i in 0..n_x {
            let x = [
                -std::f64::consts::PI + 2.0 * std::f64::consts::PI * i as f64 / n_x as f64,
                0.0,
            ];
            let f = rule.increment(v, &x[..rule.drift.dim()], h);
            sup = sup.max(norm_d(&f[..rule.drift.dim()]));
        }
        sups.push((h, sup));
    }
    let hs: Vec<f64> = sups.iter().map(|p| p.0).collect();
    let vs: Vec<f64> = sups.iter().map(|p| p.1).collect();
    let fit = log_log_fit(&hs, &vs);
    let threshold = 0.5 + params.chi() - 0.05;
    Ok(DriftBoundReport {
        slope: fit.slope,
        r2: fit.r2,
        threshold,
        sup_values: sups,
        pass: fit.slope >= threshold,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct MomentScalingReport {
    pub slope: f64,
    pub r2: f64,
    /// `1/alpha + (theta - 1)/alpha - 0.1`.
    pub threshold: f64,
    pub moments: Vec<(f64, f64)>,
    /// Largest Monte Carlo standard error relative to the fitted values.
    pub max_rel_se: f64,
    pub mc_reliable: bool,
    pub pass: bool,
}

/// Fits `log E[|X_{v+h} - X_v - (W_{v+h} - W_v)|^q]^{1/q}` against `log h`
/// over dyadic step lags.
pub fn moment_scaling(
    ensemble: &PathEnsemble,
    q_moment: f64,
    lag_exponents: &[u32],
    params: &RegularityParams,
) -> Result<MomentScalingReport> {
    if !(1.0 <= q_moment && q_moment < params.alpha) {
        return Err(Error::InvalidIndex(format!(
            "moment order must lie in [1, alpha), got {q_moment}"
        )));
    }
    if lag_exponents.len() < 3 {
        return Err(Error::NotEnoughLags { required: 3, got: lag_exponents.len() });
    }
    let d = ensemble.dim;
    let mut rows = Vec::new();
    let mut max_rel_se = 0.0f64;
    for &e in lag_exponents {
        let lag = 1usize << e;
        if lag >= ensemble.steps {
            continue;
        }
        let mut acc = 0.0;
        let mut acc2 = 0.0;
        let mut count = 0usize;
        for p in 0..ensemble.n_paths {
            // stride by lag to keep the samples roughly independent
            let mut v = 0usize;
            while v + lag <= ensemble.steps {
                let noise = ensemble.noise_sum(p, v, lag);
                let mut comp = [0.0f64, 0.0];
                for c in 0..d {
                    comp[c] = ensemble.xs[p][(v + lag) * d + c]
                        - ensemble.xs[p][v * d + c]
                        - noise[c];
                }
                let m = norm_d(&comp[..d]).powf(q_moment);
                acc += m;
                acc2 += m * m;
                count += 1;
                v += lag;
            }
        }
        let mean = acc / count as f64;
        let var = (acc2 / count as f64 - mean * mean).max(0.0);
        let se = (var / count as f64).sqrt();
        max_rel_se = max_rel_se.max(se / mean.max(1e-300));
        rows.push((lag as f64 * ensemble.step, mean.powf(1.0 / q_moment)));
    }
    if rows.len() < 3 {
        return Err(Error::NotEnoughLags { required: 3, got: rows.len() });
    }
    let hs: Vec<f64> = rows.iter().map(|r| r.0).collect();
    let ms: Vec<f64> = rows.iter().map(|r| r.1).collect();
    let fit = log_log_fit(&hs, &ms);
    let threshold = 1.0 / params.alpha + (params.theta() - 1.0) / params.alpha - 0.1;
    Ok(MomentScalingReport {
        slope: fit.slope,
        r2: fit.r2,
        threshold,
        moments: rows,
        max_rel_se,
        mc_reliable: max_rel_se < 0.5,
        pass: fit.slope >= threshold,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PsiProcess {
    One,
    /// `psi_t = sin(X^1_t)`.
    SinState,
}

impl PsiProcess {
    fn eval(&self, x: &[f64]) -> f64 {
        match self {
            PsiProcess::One => 1.0,
            PsiProcess::SinState => x[0].sin(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IncrementKind {
    /// `A(t, t+h) = X_{t+h} - X_t`.
    Path,
    /// `A(t, t+h) = W_{t+h} - W_t`.
    Noise,
    /// `A(t, t+h) = Fscr(t, X_t, h)`.
    DriftIncrement,
    /// Drift increment with kernel origin frozen at `(0, x0)`; exactly
    /// additive up to time-quadrature error.
    DriftFrozen,
}

#[derive(Debug, Clone, Serialize)]
pub struct YoungReport {
    /// `(mesh, ||S(coarse) - S(finest)||_{L^ell})` per coarsening level.
    pub gaps: Vec<(f64, f64)>,
    pub rate: f64,
    pub r2: f64,
}

/// Monte Carlo gap between nested Riemann sums
/// `S(Delta) = sum_i psi_{t_i} A(t_i, t_{i+1})` at dyadic coarsenings of the
/// simulation grid.
pub fn young_riemann(
    ensemble: &PathEnsemble,
    rule: Option<&DriftIncrementRule>,
    psi: PsiProcess,
    kind: IncrementKind,
    levels: u32,
    ell: f64,
) -> Result<YoungReport> {
    if matches!(kind, IncrementKind::DriftIncrement | IncrementKind::DriftFrozen) && rule.is_none()
    {
        return Err(Error::InvalidConfig("drift increments need a rule".into()));
    }
    if ensemble.steps % (1usize << levels) != 0 {
        return Err(Error::InvalidConfig(
            "the simulation grid must refine the coarsest partition".into(),
        ));
    }
    let d = ensemble.dim;
    let sum_for = |path: usize, level: u32| -> [f64; 2] {
        let stride = 1usize << level;
        let coarse_h = ensemble.step * stride as f64;
        let mut acc = [0.0f64, 0.0];
        let mut i = 0usize;
        while i < ensemble.steps {
            let t = ensemble.time(i);
            let x = ensemble.x(path, i);
            let w = psi.eval(x);
            let a: [f64; 2] = match kind {
                IncrementKind::Path => {
                    let mut out = [0.0, 0.0];
                    for c in 0..d {
                        out[c] =
                            ensemble.xs[path][(i + stride) * d + c] - ensemble.xs[path][i * d + c];
                    }
                    out
                }
                IncrementKind::Noise => ensemble.noise_sum(path, i, stride),
                IncrementKind::DriftIncrement => rule.unwrap().increment(t, x, coarse_h),
                IncrementKind::DriftFrozen => {
                    rule.unwrap().increment_frozen(0.0, &ensemble.x0[..d], t, coarse_h)
                }
            };
            for c in 0..d {
                acc[c] += w * a[c];
            }
            i += stride;
        }
        acc
    };
    let mut gaps = Vec::new();
    for level in 1..=levels {
        let mut acc = 0.0;
        for p in 0..ensemble.n_paths {
            let fine = sum_for(p, 0);
            let coarse = sum_for(p, level);
            let diff = [coarse[0] - fine[0], coarse[1] - fine[1]];
            acc += norm_d(&diff[..d]).powf(ell);
        }
        let gap = (acc / ensemble.n_paths as f64).powf(1.0 / ell);
        gaps.push((ensemble.step * (1usize << level) as f64, gap));
    }
    let meshes: Vec<f64> = gaps.iter().map(|g| g.0).collect();
    let vals: Vec<f64> = gaps.iter().map(|g| g.1.max(1e-300)).collect();
    let fit = log_log_fit(&meshes, &vals);
    Ok(YoungReport { gaps, rate: fit.slope, r2: fit.r2 })
}

#[derive(Debug, Clone, Serialize)]
pub struct IdentificationReport {
    /// `(m, ||sum psi [Fscr - F_m h]||_{L^ell})`.
    pub gaps: Vec<(u32, f64)>,
    pub strictly_decreasing: bool,
    pub final_ratio: f64,
    pub pass: bool,
}

/// Gap between the kernel-smoothed drift integral and the mollified drift
/// Riemann sum along the ensemble, per mollification level.
pub fn drift_identification(
    ensemble: &PathEnsemble,
    rule: &DriftIncrementRule,
    m_list: &[u32],
    psi: PsiProcess,
    ell: f64,
) -> Result<IdentificationReport> {
    if m_list.len() < 2 {
        return Err(Error::NotEnoughLags { required: 2, got: m_list.len() });
    }
    let d = ensemble.dim;
    let h = ensemble.step;
    let mut gaps = Vec::new();
    for &m in m_list {
        let fm = crate::drift::mollify(rule.drift(), m)?;
        let mut acc = 0.0;
        for p in 0..ensemble.n_paths {
            let mut diff = [0.0f64, 0.0];
            for i in 0..ensemble.steps {
                let t = ensemble.time(i);
                let x = ensemble.x(p, i);
                let w = psi.eval(x);
                let smoothed = rule.increment(t, x, h);
                let pointwise = fm.eval(t, x);
                for c in 0..d {
                    diff[c] += w * (smoothed[c] - pointwise[c] * h);
                }
            }
            acc += norm_d(&diff[..d]).powf(ell);
        }
        gaps.push((m, (acc / ensemble.n_paths as f64).powf(1.0 / ell)));
    }
    let strictly_decreasing = gaps.windows(2).all(|w| w[1].1 < w[0].1);
    let final_ratio = gaps.last().unwrap().1 / gaps.first().unwrap().1.max(1e-300);
    Ok(IdentificationReport {
        strictly_decreasing,
        final_ratio,
        pass: strictly_decreasing && final_ratio <= 0.1,
        gaps,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct PathwiseGapReport {
    pub m1: u32,
    pub m2: u32,
    /// `sup_t E |X^{m1}_t - X^{m2}_t|`.
    pub sup_mean_gap: f64,
    pub per_time: Vec<(f64, f64)>,
}

/// Simulates two Euler solutions with mollification levels `m1 < m2` driven
/// by the same noise (identical seed manifest) and returns the sup-in-time
/// mean gap. Scalar state only.
#[allow(clippy::too_many_arguments)]
pub fn pathwise_gap(
    field: &DriftField,
    m1: u32,
    m2: u32,
    measure: &SpectralMeasure,
    x0: f64,
    horizon: f64,
    steps: usize,
    n_paths: usize,
    master_seed: u64,
) -> Result<PathwiseGapReport> {
    if measure.dim() != 1 || field.dim() != 1 {
        return Err(Error::InvalidConfig("the pathwise gap experiment is scalar".into()));
    }
    let run = |m: u32| -> Result<PathEnsemble> {
        let rule = DriftIncrementRule::new(crate::drift::mollify(field, m)?, measure.clone())?;
        euler_paths(&[x0], Some(&rule), measure, horizon, steps, n_paths, master_seed)
    };
    let a = run(m1)?;
    let b = run(m2)?;
    let mut per_time = Vec::with_capacity(steps + 1);
    let mut sup = 0.0f64;
    for i in 0..=steps {
        let mut acc = 0.0;
        for p in 0..n_paths {
            acc += (a.xs[p][i] - b.xs[p][i]).abs();
        }
        let mean = acc / n_paths as f64;
        sup = sup.max(mean);
        per_time.push((a.time(i), mean));
    }
    Ok(PathwiseGapReport { m1, m2, sup_mean_gap: sup, per_time })
}

#[derive(Debug, Clone, Serialize)]
pub struct KrylovReport {
    /// `(k, |E int f_k(X_s) ds|, norm, ratio)`.
    pub rows: Vec<(f64, f64, f64, f64)>,
    pub max_ratio: f64,
    pub median_ratio: f64,
    pub max_over_median: f64,
    /// The integrability condition `r > alpha/(theta - d/p)`.
    pub precondition_ok: bool,
    pub pass: bool,
}

/// Occupation-measure boundedness: ratios
/// `|E int_0^T cos(k X_s) ds| / ||cos(k .)||_{L^r B^{theta-alpha}_{p,q}}`
/// over a frequency sweep; pass iff `max/median <= 5`.
pub fn krylov_check(
    ensemble: &PathEnsemble,
    k_list: &[f64],
    params: &RegularityParams,
    grid: Grid,
) -> Result<KrylovReport> {
    if ensemble.dim != 1 {
        return Err(Error::InvalidConfig("the occupation sweep is scalar".into()));
    }
    let theta = params.theta();
    let d_over_p = if params.p.is_infinite() { 0.0 } else { params.d as f64 / params.p };
    let precondition_ok = if params.r.is_infinite() {
        theta - d_over_p > 0.0
    } else {
        params.r > params.alpha / (theta - d_over_p)
    };
    let idx = BesovIndex::new(theta - params.alpha, params.p, params.q, params.alpha)?;
    let time_factor =
        if params.r.is_infinite() { 1.0 } else { ensemble.horizon.powf(1.0 / params.r) };
    let h = ensemble.step;
    let mut rows = Vec::with_capacity(k_list.len());
    for &k in k_list {
        let mut acc = 0.0;
        for p in 0..ensemble.n_paths {
            let mut path_int = 0.0;
            for i in 0..ensemble.steps {
                path_int += (k * ensemble.xs[p][i]).cos() * h;
            }
            acc += path_int;
        }
        let estimate = (acc / ensemble.n_paths as f64).abs();
        let f = crate::grid::GridFunction::from_fn(grid, |x| (k * x[0]).cos());
        let norm = besov_norm(&f, &idx)?.total * time_factor;
        rows.push((k, estimate, norm, estimate / norm));
    }
    let ratios: Vec<f64> = rows.iter().map(|r| r.3).collect();
    let max_ratio = ratios.iter().copied().fold(0.0, f64::max);
    let median_ratio = median(&ratios);
    let max_over_median = max_ratio / median_ratio.max(1e-300);
    Ok(KrylovReport {
        rows,
        max_ratio,
        median_ratio,
        max_over_median,
        precondition_ok,
        pass: max_over_median <= 5.0,
    })
}

/// Empirical 1-Wasserstein distance between two scalar samples of equal size.
pub fn wasserstein_1d(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    let mut xa = a.to_vec();
    let mut xb = b.to_vec();
    xa.sort_by(|x, y| x.partial_cmp(y).unwrap());
    xb.sort_by(|x, y| x.partial_cmp(y).unwrap());
    xa.iter().zip(&xb).map(|(x, y)| (x - y).abs()).sum::<f64>() / a.len() as f64
}

#[derive(Debug, Clone, Serialize)]
pub struct ConditionalMeanReport {
    /// `(h, max-bin |avg compensated increment - Fscr|)`.
    pub residuals: Vec<(f64, f64)>,
    pub slope: f64,
    pub r2: f64,
    /// `1 + eps' - 0.1`.
    pub threshold: f64,
    pub pass: bool,
}

/// Bin-averaged regression of the compensated increment on the state:
/// `E[X_{v+h} - X_v - (W_{v+h} - W_v) | X_v]` against `Fscr(v, ., h)`; the
/// residual is the chaining remainder and should scale like `h^{1 + eps'}`.
pub fn conditional_mean_report(
    ensemble: &PathEnsemble,
    rule: &DriftIncrementRule,
    v_step: usize,
    lag_exponents: &[u32],
    n_bins: usize,
    params: &RegularityParams,
) -> Result<ConditionalMeanReport> {
    if ensemble.dim != 1 {
        return Err(Error::InvalidConfig("the regression experiment is scalar".into()));
    }
    let mut order: Vec<usize> = (0..ensemble.n_paths).collect();
    order.sort_by(|&a, &b| ensemble.xs[a][v_step].partial_cmp(&ensemble.xs[b][v_step]).unwrap());
    let per_bin = ensemble.n_paths / n_bins;
    let v = ensemble.time(v_step);
    let mut residuals = Vec::new();
    for &e in lag_exponents {
        let lag = 1usize << e;
        if v_step + lag > ensemble.steps {
            continue;
        }
        let h = lag as f64 * ensemble.step;
        // trim the extreme quantile bins: the heavy stable tails make them
        // too wide for the bin mean to represent the state
        let mut acc_res = 0.0;
        let mut used = 0usize;
        for b in 1..n_bins - 1 {
            let members = &order[b * per_bin..(b + 1) * per_bin];
            let mut x_mean = 0.0;
            let mut incr_mean = 0.0;
            for &p in members {
                x_mean += ensemble.xs[p][v_step];
                let noise = ensemble.noise_sum(p, v_step, lag);
                incr_mean += ensemble.xs[p][v_step + lag] - ensemble.xs[p][v_step] - noise[0];
            }
            x_mean /= members.len() as f64;
            incr_mean /= members.len() as f64;
            let predicted = rule.increment(v, &[x_mean], h)[0];
            acc_res += (incr_mean - predicted).abs();
            used += 1;
        }
        residuals.push((h, acc_res / used as f64));
    }
    if residuals.len() < 3 {
        return Err(Error::NotEnoughLags { required: 3, got: residuals.len() });
    }
    let hs: Vec<f64> = residuals.iter().map(|r| r.0).collect();
    let rs: Vec<f64> = residuals.iter().map(|r| r.1.max(1e-300)).collect();
    let fit = log_log_fit(&hs, &rs);
    let threshold = 1.0 + params.eps_prime() - 0.1;
    Ok(ConditionalMeanReport {
        residuals,
        slope: fit.slope,
        r2: fit.r2,
        threshold,
        pass: fit.slope >= threshold,
    })
}

//! Synthetic drift fields of prescribed negative Besov regularity.
//!
//! Drifts are lacunary Fourier series `sigma(t) * sum_j a_j cos(2^j x.e + phi_j)`
//! per component, with `a_j = 2^{j(1 - gamma - offset)}` so the built field has
//! true spatial regularity `-1 + gamma + offset` while it is *declared* at
//! `-1 + gamma`; the small offset is what makes the heat-kernel mollification
//! converge to the raw drift in the declared norm. Mollification at level `m`
//! multiplies the amplitude of level `j` by `exp(-delta_m |k_j|^alpha)` with
//! `delta_m = 2^{-alpha m}`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::besov::{besov_norm, thermic_profile, BesovIndex, VGrid};
use crate::error::{Error, Result};
use crate::fit::log_log_fit;
use crate::grid::{Grid, GridFunction};
use crate::pde::{check_gate, GateReport, RegularityParams};

/// Gap between built and declared regularity.
pub const TRUE_REGULARITY_OFFSET: f64 = 0.05;
/// Time-singularity cap `t_floor = T * 1e-4`.
pub const T_FLOOR_FACTOR: f64 = 1e-4;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DriftSpec {
    pub alpha: f64,
    pub gamma: f64,
    #[serde(with = "crate::exponent::serde_f64_inf")]
    pub p: f64,
    #[serde(with = "crate::exponent::serde_f64_inf")]
    pub q: f64,
    #[serde(with = "crate::exponent::serde_f64_inf")]
    pub r: f64,
    /// Lacunary depth: levels `j = 1..=levels`.
    pub levels: u32,
    /// Overall amplitude multiplier.
    pub amplitude: f64,
    /// Relative amplitude jitter per level, in `[0, 1)`.
    pub jitter: f64,
    /// Time-singularity exponent `a` with `a r < 1`.
    pub time_singularity: f64,
    pub horizon: f64,
    pub dim: usize,
}

impl DriftSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return Err(Error::InvalidDrift(format!("gamma must lie in (0,1), got {}", self.gamma)));
        }
        if self.levels < 4 {
            return Err(Error::InvalidDrift(format!("need at least 4 levels, got {}", self.levels)));
        }
        if self.time_singularity < 0.0 {
            return Err(Error::InvalidDrift("time singularity must be >= 0".into()));
        }
        if self.r.is_finite() && self.time_singularity * self.r >= 1.0 {
            return Err(Error::InvalidDrift(format!(
                "a r = {} >= 1: time factor not in L^r",
                self.time_singularity * self.r
            )));
        }
        if !self.r.is_finite() && self.time_singularity > 0.0 {
            return Err(Error::InvalidDrift("r = inf requires a = 0".into()));
        }
        if !(self.horizon > 0.0) {
            return Err(Error::InvalidDrift("horizon must be positive".into()));
        }
        if !(self.dim == 1 || self.dim == 2) {
            return Err(Error::InvalidDrift("dimension must be 1 or 2".into()));
        }
        if !(self.jitter >= 0.0 && self.jitter < 1.0) {
            return Err(Error::InvalidDrift("jitter must lie in [0,1)".into()));
        }
        Ok(())
    }

    /// Regularity-gate parameters for this drift.
    pub fn params(&self) -> RegularityParams {
        RegularityParams::new(self.alpha, self.dim, self.p, self.q, self.r, self.gamma)
    }
}

/// One lacunary mode: `amplitude * cos(freq * x[axis] + phase)` feeding the
/// given drift component.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DriftAtom {
    pub level: u32,
    pub freq: f64,
    pub axis: usize,
    pub component: usize,
    pub amplitude: f64,
    pub phase: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DriftField {
    pub spec: DriftSpec,
    pub atoms: Vec<DriftAtom>,
    /// Mollification scale `delta`; 0 for the raw drift.
    pub delta: f64,
    /// Mollification level `m`, if any.
    pub mollification_level: Option<u32>,
    pub seed: u64,
}

impl DriftField {
    pub fn dim(&self) -> usize {
        self.spec.dim
    }

    pub fn horizon(&self) -> f64 {
        self.spec.horizon
    }

    pub fn t_floor(&self) -> f64 {
        self.spec.horizon * T_FLOOR_FACTOR
    }

    /// Time profile `sigma(t) = (max(t, t_floor)/T)^{-a}`.
    pub fn sigma(&self, t: f64) -> f64 {
        if self.spec.time_singularity == 0.0 {
            return 1.0;
        }
        (t.max(self.t_floor()) / self.spec.horizon).powf(-self.spec.time_singularity)
    }

    /// Mollified amplitude of an atom: `a_j exp(-delta |k_j|^alpha)`.
    pub fn effective_amplitude(&self, atom: &DriftAtom) -> f64 {
        atom.amplitude * (-self.delta * atom.freq.abs().powf(self.spec.alpha)).exp()
    }

    /// Pointwise evaluation of component `c` at `(t, x)`.
    pub fn eval_component(&self, c: usize, t: f64, x: &[f64]) -> f64 {
        let s = self.sigma(t);
        let mut acc = 0.0;
        for atom in self.atoms.iter().filter(|a| a.component == c) {
            acc += self.effective_amplitude(atom) * (atom.freq * x[atom.axis] + atom.phase).cos();
        }
        s * acc
    }

    /// All components at `(t, x)`.
    pub fn eval(&self, t: f64, x: &[f64]) -> [f64; 2] {
        let mut out = [0.0, 0.0];
        let s = self.sigma(t);
        for atom in &self.atoms {
            out[atom.component] +=
                self.effective_amplitude(atom) * (atom.freq * x[atom.axis] + atom.phase).cos();
        }
        out[0] *= s;
        out[1] *= s;
        out
    }

    /// Realises component `c` on a grid at time `t`.
    pub fn realize_component(&self, c: usize, t: f64, grid: Grid) -> GridFunction {
        GridFunction::from_fn(grid, |x| self.eval_component(c, t, &x))
    }

    pub fn realize(&self, t: f64, grid: Grid) -> Vec<GridFunction> {
        (0..self.dim()).map(|c| self.realize_component(c, t, grid)).collect()
    }

    /// Manifest JSON reproducing the field bit-exactly.
    pub fn manifest_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_manifest_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}

/// Builds the lacunary drift. Frequencies are `2^j` (integer lattice modes on
/// an `L = pi` torus); each component carries its own ladder with phases and
/// amplitude jitter drawn from `rng`.
pub fn build_drift(spec: &DriftSpec, rng: &mut impl Rng) -> Result<DriftField> {
    spec.validate()?;
    let s_true = -1.0 + spec.gamma + TRUE_REGULARITY_OFFSET;
    let mut atoms = Vec::new();
    let seed_echo = rng.random::<u64>();
    for c in 0..spec.dim {
        for j in 1..=spec.levels {
            let freq = 2f64.powi(j as i32);
            let base = spec.amplitude * freq.powf(-s_true);
            let jitter = if spec.jitter > 0.0 {
                1.0 + rng.random_range(-spec.jitter..spec.jitter)
            } else {
                1.0
            };
            let axis = if spec.dim == 1 { 0 } else { rng.random_range(0..spec.dim) };
            let phase = rng.random_range(0.0..std::f64::consts::TAU);
            atoms.push(DriftAtom {
                level: j,
                freq,
                axis,
                component: c,
                amplitude: base * jitter,
                phase,
            });
        }
    }
    Ok(DriftField { spec: spec.clone(), atoms, delta: 0.0, mollification_level: None, seed: seed_echo })
}

/// Heat-kernel mollification at level `m`: `delta_m = 2^{-alpha m}` applied
/// spectrally to the raw amplitudes. Always relative to the raw atoms.
pub fn mollify(field: &DriftField, m: u32) -> Result<DriftField> {
    if m < 1 {
        return Err(Error::InvalidDrift("mollification level must be >= 1".into()));
    }
    let mut out = field.clone();
    out.delta = 2f64.powf(-field.spec.alpha * f64::from(m));
    out.mollification_level = Some(m);
    Ok(out)
}

/// `L^r` quadrature over time of the spatial Besov norm at regularity
/// `-1 + gamma` (max over components). The time grid should be log-spaced
/// near 0 when the drift carries a time singularity.
pub fn drift_norm(
    field: &DriftField,
    gamma: f64,
    p: f64,
    q: f64,
    r: f64,
    grid: Grid,
    time_grid: &[f64],
) -> Result<f64> {
    if time_grid.len() < 2 {
        return Err(Error::InvalidDrift("time grid needs at least two nodes".into()));
    }
    let idx = BesovIndex::new(-1.0 + gamma, p, q, field.spec.alpha)?;
    // the spatial factor is time-constant: norm(t) = sigma(t) * spatial
    let spatial = (0..field.dim())
        .map(|c| {
            let f = field.realize_component(c, field.spec.horizon, grid);
            besov_norm(&f, &idx).map(|b| b.total / field.sigma(field.spec.horizon))
        })
        .collect::<Result<Vec<f64>>>()?
        .into_iter()
        .fold(0.0f64, f64::max);
    if r.is_infinite() {
        let sup = time_grid.iter().map(|&t| field.sigma(t)).fold(0.0f64, f64::max);
        return Ok(sup * spatial);
    }
    let mut acc = 0.0;
    for w in time_grid.windows(2) {
        let (t0, t1) = (w[0], w[1]);
        let f0 = field.sigma(t0).powf(r);
        let f1 = field.sigma(t1).powf(r);
        acc += 0.5 * (f0 + f1) * (t1 - t0);
    }
    Ok(acc.powf(1.0 / r) * spatial)
}

/// Log-spaced-near-zero time grid resolving the `t^{-a}` singularity.
pub fn singular_time_grid(horizon: f64, nodes: usize) -> Vec<f64> {
    let floor = horizon * T_FLOOR_FACTOR;
    let mut ts = vec![0.0];
    let ratio = (horizon / floor).powf(1.0 / (nodes as f64 - 1.0));
    let mut t = floor;
    for _ in 0..nodes {
        ts.push(t.min(horizon));
        t *= ratio;
    }
    ts.dedup_by(|a, b| (*a - *b).abs() < 1e-15);
    ts
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct RegularityFit {
    /// Measured spatial regularity index.
    pub index: f64,
    pub r2: f64,
}

/// Measures the spatial regularity of the drift from the decay of
/// `||d_v P_v f||_inf` across the lacunary window: the envelope scales like
/// `v^{-1 + s/alpha}`, so `s = alpha (1 + slope)`.
pub fn measured_regularity(field: &DriftField, grid: Grid) -> Result<RegularityFit> {
    let alpha = field.spec.alpha;
    let f = field.realize_component(0, field.spec.horizon, grid);
    let spectrum = f.to_spectrum();
    let k_min = 2f64;
    let k_max = 2f64.powi(field.spec.levels as i32);
    let vgrid = VGrid::default();
    let profile = thermic_profile(&spectrum, alpha, 1, f64::INFINITY, &vgrid);
    // fit within the window where the lacunary envelope is self-similar
    let (v_lo, v_hi) = (1.0 / k_max.powf(alpha), 1.0 / k_min.powf(alpha));
    let mut vs = Vec::new();
    let mut ms = Vec::new();
    for (v, m) in vgrid.points().iter().zip(&profile) {
        if *v >= v_lo && *v <= v_hi && *m > 0.0 {
            vs.push(*v);
            ms.push(*m);
        }
    }
    if vs.len() < 6 {
        return Err(Error::NotEnoughLags { required: 6, got: vs.len() });
    }
    let fit = log_log_fit(&vs, &ms);
    Ok(RegularityFit { index: alpha * (1.0 + fit.slope), r2: fit.r2 })
}

/// Gate report for the drift's `(alpha, d, p, q, r, gamma)`.
pub fn hypothesis_gate(field: &DriftField) -> GateReport {
    check_gate(&field.spec.params())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::besov::plane_wave_thermic;
    use rand::SeedableRng;
    use rand_chacha::ChaCha12Rng;

    fn grid() -> Grid {
        Grid::new(1, std::f64::consts::PI, 1024).unwrap()
    }

    fn spec(gamma: f64, levels: u32) -> DriftSpec {
        DriftSpec {
            alpha: 1.5,
            gamma,
            p: f64::INFINITY,
            q: f64::INFINITY,
            r: f64::INFINITY,
            levels,
            amplitude: 1.0,
            jitter: 0.0,
            time_singularity: 0.0,
            horizon: 1.0,
            dim: 1,
        }
    }

    #[test]
    fn single_mode_norm_follows_plane_wave_law() {
        // The per-mode thermic contribution at regularity -1 + gamma follows
        // the plane-wave closed form, and the built amplitudes follow the
        // lacunary law.
        let gamma = 0.7;
        let mut rng = ChaCha12Rng::seed_from_u64(1);
        let s = spec(gamma, 4);
        let field = build_drift(&s, &mut rng).unwrap();
        let k = 4.0;
        let single = GridFunction::from_fn(grid(), |x| (k * x[0]).cos());
        let idx = BesovIndex::new(-1.0 + gamma, f64::INFINITY, f64::INFINITY, 1.5).unwrap();
        let b = besov_norm(&single, &idx).unwrap();
        let expected = plane_wave_thermic(k, -1.0 + gamma, 1.5);
        assert!(((b.thermic - expected) / expected).abs() < 0.02);
        let atom = field.atoms.iter().find(|a| a.level == 2).unwrap();
        let want = k.powf(1.0 - gamma - TRUE_REGULARITY_OFFSET);
        assert!((atom.amplitude - want).abs() < 1e-12);
    }

    #[test]
    fn constant_time_profile_factorises_in_l_r() {
        let mut s = spec(0.9, 4);
        s.r = 4.0;
        let mut rng = ChaCha12Rng::seed_from_u64(2);
        let field = build_drift(&s, &mut rng).unwrap();
        let tg: Vec<f64> = (0..=64).map(|i| i as f64 / 64.0).collect();
        let full = drift_norm(&field, 0.9, f64::INFINITY, f64::INFINITY, 4.0, grid(), &tg).unwrap();
        let spatial =
            drift_norm(&field, 0.9, f64::INFINITY, f64::INFINITY, f64::INFINITY, grid(), &tg)
                .unwrap();
        // a = 0: ||F||_{L^r} = T^{1/r} * spatial norm (T = 1 here)
        assert!((full - spatial).abs() < 1e-9 * spatial);
    }

    #[test]
    fn zero_and_homogeneous_norms() {
        let mut rng = ChaCha12Rng::seed_from_u64(3);
        let s = spec(0.9, 5);
        let field = build_drift(&s, &mut rng).unwrap();
        let tg: Vec<f64> = (0..=32).map(|i| i as f64 / 32.0).collect();
        let base =
            drift_norm(&field, 0.9, f64::INFINITY, f64::INFINITY, f64::INFINITY, grid(), &tg)
                .unwrap();
        let mut doubled = field.clone();
        for a in &mut doubled.atoms {
            a.amplitude *= 2.0;
        }
        let two =
            drift_norm(&doubled, 0.9, f64::INFINITY, f64::INFINITY, f64::INFINITY, grid(), &tg)
                .unwrap();
        assert!((two - 2.0 * base).abs() < 1e-9 * base);
        let mut zero = field.clone();
        zero.atoms.clear();
        let z = drift_norm(&zero, 0.9, f64::INFINITY, f64::INFINITY, f64::INFINITY, grid(), &tg)
            .unwrap();
        assert_eq!(z, 0.0);
    }

    #[test]
    fn measured_regularity_close_to_declared() {
        let gamma = 0.9;
        let mut rng = ChaCha12Rng::seed_from_u64(4);
        let s = spec(gamma, 8);
        let field = build_drift(&s, &mut rng).unwrap();
        let fit = measured_regularity(&field, grid()).unwrap();
        // declared -0.1, built -0.05; estimator within 0.1 of the declared
        assert!(
            (fit.index - (-1.0 + gamma)).abs() <= 0.1,
            "measured index {} vs declared {}",
            fit.index,
            -1.0 + gamma
        );
    }

    #[test]
    fn mollified_amplitudes_converge_to_raw() {
        let mut rng = ChaCha12Rng::seed_from_u64(5);
        let field = build_drift(&spec(0.8, 5), &mut rng).unwrap();
        let mut prev_sup = f64::INFINITY;
        for m in [4u32, 6, 8] {
            let fm = mollify(&field, m).unwrap();
            let delta = 2f64.powf(-1.5 * f64::from(m));
            let mut sup_rel = 0.0f64;
            for (raw, moll) in field.atoms.iter().zip(&fm.atoms) {
                let rel = 1.0 - fm.effective_amplitude(moll) / raw.amplitude;
                // the damping is exactly the heat multiplier per level
                let exact = 1.0 - (-delta * moll.freq.powf(1.5)).exp();
                assert!((rel - exact).abs() < 1e-12);
                sup_rel = sup_rel.max(rel);
            }
            // lowest level: relative error below e^{-delta_m 2^alpha}
            let lowest = 1.0 - (-delta * 2f64.powf(1.5)).exp();
            assert!(lowest <= (-delta * 2f64.powf(1.5)).exp());
            // sup error vanishes as m grows
            assert!(sup_rel < prev_sup);
            prev_sup = sup_rel;
        }
        // at m = 8 the worst level is k = 32: 1 - e^{-2^-12 * 32^1.5} ~ 0.043
        assert!(prev_sup < 0.05);
    }

    #[test]
    fn single_mode_mollification_is_one_multiplier() {
        let mut rng = ChaCha12Rng::seed_from_u64(6);
        let field = build_drift(&spec(0.8, 4), &mut rng).unwrap();
        let fm = mollify(&field, 3).unwrap();
        let delta = 2f64.powf(-1.5 * 3.0);
        for atom in &fm.atoms {
            let expected = atom.amplitude * (-delta * atom.freq.powf(1.5)).exp();
            assert!((fm.effective_amplitude(atom) - expected).abs() < 1e-15);
        }
    }

    #[test]
    fn mollification_error_decreases_and_vanishes() {
        // ||F - F_m|| in the norm at gamma' < gamma: strictly decreasing over
        // m in {2,4,6,8} and the final value <= 1e-2 of the m = 1 value.
        // alpha = 2 makes delta_m = 4^-m fall fast enough for the 1% target.
        let gamma = 0.9;
        let mut s = spec(gamma, 4);
        s.alpha = 2.0;
        let mut rng = ChaCha12Rng::seed_from_u64(7);
        let field = build_drift(&s, &mut rng).unwrap();
        let idx = BesovIndex::new(-1.0 + gamma - 0.3, f64::INFINITY, f64::INFINITY, 2.0).unwrap();
        let g = grid();
        let diff_norm = |m: u32| {
            let fm = mollify(&field, m).unwrap();
            let raw = field.realize_component(0, 1.0, g);
            let smooth = fm.realize_component(0, 1.0, g);
            besov_norm(&raw.sub(&smooth).unwrap(), &idx).unwrap().total
        };
        let base = diff_norm(1);
        let mut prev = base;
        for m in [2u32, 4, 6, 8] {
            let d = diff_norm(m);
            assert!(d < prev, "m = {m}: {d} not below {prev}");
            prev = d;
        }
        assert!(prev <= 1e-2 * base, "final {prev} vs base {base}");
    }

    #[test]
    fn mollification_error_decreases_in_declared_minus_005() {
        let gamma = 0.8;
        let mut rng = ChaCha12Rng::seed_from_u64(8);
        let field = build_drift(&spec(gamma, 5), &mut rng).unwrap();
        let idx = BesovIndex::new(-1.0 + gamma - 0.05, f64::INFINITY, f64::INFINITY, 1.5).unwrap();
        let g = grid();
        let mut prev = f64::INFINITY;
        for m in 1..=8u32 {
            let fm = mollify(&field, m).unwrap();
            let raw = field.realize_component(0, 1.0, g);
            let smooth = fm.realize_component(0, 1.0, g);
            let d = besov_norm(&raw.sub(&smooth).unwrap(), &idx).unwrap().total;
            assert!(d < prev, "m = {m}");
            prev = d;
        }
    }

    #[test]
    fn manifest_roundtrip_reproduces_field() {
        let mut rng = ChaCha12Rng::seed_from_u64(9);
        let mut s = spec(0.85, 6);
        s.jitter = 0.1;
        let field = build_drift(&s, &mut rng).unwrap();
        let json = field.manifest_json().unwrap();
        let back = DriftField::from_manifest_json(&json).unwrap();
        let x = [0.37];
        assert_eq!(field.eval_component(0, 0.5, &x), back.eval_component(0, 0.5, &x));
    }

    #[test]
    fn time_singularity_requires_integrability() {
        let mut s = spec(0.9, 4);
        s.r = 4.0;
        s.time_singularity = 0.3; // a r = 1.2 >= 1
        assert!(s.validate().is_err());
        s.time_singularity = 0.2; // a r = 0.8 < 1
        assert!(s.validate().is_ok());
    }

    #[test]
    fn gate_report_is_attached() {
        let mut rng = ChaCha12Rng::seed_from_u64(10);
        let field = build_drift(&spec(0.9, 4), &mut rng).unwrap();
        let gate = hypothesis_gate(&field);
        assert!(gate.weak_ok && gate.dyn_ok);
        let field_low = build_drift(&spec(0.6, 4), &mut rng).unwrap();
        assert!(!hypothesis_gate(&field_low).weak_ok);
    }
}

//! The mild (Duhamel) Cauchy problem with mollified drift.
//!
//! `u(t) = P_{T-t} g + int_t^T P_{s-t} [f + F_m . Du](s) ds` is solved by
//! Picard iteration on a uniform time grid. The Green integral is evaluated
//! with an exponential integrator: on each sub-interval the integrand is
//! linear in time and the semigroup factor is integrated exactly per Fourier
//! mode, so constants and single modes are reproduced in closed form. A
//! linear-growth terminal `g(x) = x_c` is reduced to the bounded unknown
//! `w = u - x_c`, which turns the drift product into the extra source `F_c`.

use rustfft::num_complex::Complex64;
use serde::Serialize;

use crate::besov::{holder_exponent, HolderFit, LagRange};
use crate::drift::DriftField;
use crate::error::{Error, Result};
use crate::fit::log_log_fit;
use crate::grid::{Grid, GridFunction, Spectrum};
use crate::spectral::SpectralMeasure;

pub const DEFAULT_TOL: f64 = 1e-8;
pub const DEFAULT_MAX_ITER: usize = 200;
/// Default slack in the Schauder targets.
pub const DEFAULT_EPS: f64 = 0.02;

/// Index block `(alpha, d, p, q, r, gamma)` with the derived exponents.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct RegularityParams {
    pub alpha: f64,
    pub d: usize,
    pub p: f64,
    pub q: f64,
    pub r: f64,
    pub gamma: f64,
    /// Slack used in Schauder targets.
    pub eps: f64,
}

fn inv(x: f64) -> f64 {
    if x.is_infinite() {
        0.0
    } else {
        1.0 / x
    }
}

impl RegularityParams {
    pub fn new(alpha: f64, d: usize, p: f64, q: f64, r: f64, gamma: f64) -> Self {
        Self { alpha, d, p, q, r, gamma, eps: DEFAULT_EPS }
    }

    pub fn with_eps(mut self, eps: f64) -> Self {
        self.eps = eps;
        self
    }

    /// Gain exponent `theta = gamma - 1 + alpha - d/p - alpha/r`.
    pub fn theta(&self) -> f64 {
        self.gamma - 1.0 + self.alpha - self.d as f64 * inv(self.p) - self.alpha * inv(self.r)
    }

    /// Drift-increment exponent `chi = 1/2 - (1/r + d/(p alpha) + (1-gamma)/alpha)`.
    pub fn chi(&self) -> f64 {
        0.5 - (inv(self.r)
            + self.d as f64 * inv(self.p) / self.alpha
            + (1.0 - self.gamma) / self.alpha)
    }

    /// Remainder exponent `eps' = -1/r + ((gamma - 1 + theta - 1)/alpha - d/(p alpha))`.
    pub fn eps_prime(&self) -> f64 {
        -inv(self.r)
            + ((self.gamma - 1.0 + self.theta() - 1.0) / self.alpha
                - self.d as f64 * inv(self.p) / self.alpha)
    }

    /// Lower admissible stability index `(1 + d/p) / (1 - 1/r)`.
    pub fn alpha_threshold(&self) -> f64 {
        (1.0 + self.d as f64 * inv(self.p)) / (1.0 - inv(self.r))
    }

    /// Weak-gate threshold `(3 - alpha + d/p + alpha/r) / 2`.
    pub fn gamma_weak_threshold(&self) -> f64 {
        (3.0 - self.alpha + self.d as f64 * inv(self.p) + self.alpha * inv(self.r)) / 2.0
    }

    /// Dynamics threshold `(3 - alpha + 2d/p + 2 alpha/r) / 2`.
    pub fn gamma_dyn_threshold(&self) -> f64 {
        (3.0 - self.alpha + 2.0 * self.d as f64 * inv(self.p) + 2.0 * self.alpha * inv(self.r))
            / 2.0
    }

    /// Threshold for a pointwise Green-kernel gradient:
    /// `gamma > 2 - alpha (1 - 1/r) + d/p`.
    pub fn gamma_green_gradient_threshold(&self) -> f64 {
        2.0 - self.alpha * (1.0 - inv(self.r)) + self.d as f64 * inv(self.p)
    }
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct GateReport {
    pub weak_ok: bool,
    pub dyn_ok: bool,
    pub theta: f64,
    pub chi: f64,
    pub eps_prime: f64,
    pub alpha_threshold: f64,
    pub gamma_weak_threshold: f64,
    pub gamma_dyn_threshold: f64,
    /// Space-time integrability constraint `d/p + 2/r < 1`.
    pub krylov_rockner_ok: bool,
}

/// Evaluates the admissibility gates; a report, never an error.
pub fn check_gate(params: &RegularityParams) -> GateReport {
    let alpha_ok = params.alpha > params.alpha_threshold() && params.alpha <= 2.0;
    let weak_ok =
        alpha_ok && params.gamma > params.gamma_weak_threshold() && params.gamma < 1.0;
    let dyn_ok = weak_ok && params.gamma > params.gamma_dyn_threshold();
    GateReport {
        weak_ok,
        dyn_ok,
        theta: params.theta(),
        chi: params.chi(),
        eps_prime: params.eps_prime(),
        alpha_threshold: params.alpha_threshold(),
        gamma_weak_threshold: params.gamma_weak_threshold(),
        gamma_dyn_threshold: params.gamma_dyn_threshold(),
        krylov_rockner_ok: params.d as f64 * inv(params.p) + 2.0 * inv(params.r) < 1.0,
    }
}

/// `P_t f` as the multiplier `exp(-t psi)`; `t = 0` is the identity.
pub fn semigroup_apply(measure: &SpectralMeasure, t: f64, f: &GridFunction) -> GridFunction {
    if t == 0.0 {
        return f.clone();
    }
    let d = measure.dim();
    f.apply_multiplier(|l| Complex64::new((-t * measure.psi(&l[..d])).exp(), 0.0))
}

/// Exponential-integrator weights on one sub-interval of length `dt`:
/// `int_0^dt e^{-u w} [(1 - u/dt) a + (u/dt) b] du = c0(w) a + c1(w) b`.
fn interval_weights(w: f64, dt: f64) -> (f64, f64) {
    let z = w * dt;
    if z < 1e-5 {
        // series to O(z^3)
        let i0 = dt * (1.0 - z / 2.0 + z * z / 6.0);
        let c1 = dt * (0.5 - z / 3.0 + z * z / 8.0);
        (i0 - c1, c1)
    } else {
        let e = (-z).exp();
        let i0 = (1.0 - e) / w;
        let c1 = (1.0 - e * (1.0 + z)) / (dt * w * w);
        (i0 - c1, c1)
    }
}

/// Green integral `int_{t_0}^{t_M} P_{s - t_0} Phi(s) ds` for `Phi` given on
/// the uniform nodes `t_0, t_0 + dt, ..., t_M`; returns the field at `t_0`.
pub fn green_apply(measure: &SpectralMeasure, nodes: &[GridFunction], dt: f64) -> Result<GridFunction> {
    if nodes.len() < 2 {
        return Err(Error::InvalidGrid("green_apply needs at least two time nodes".into()));
    }
    let spectra: Vec<Spectrum> = nodes.iter().map(|f| f.to_spectrum()).collect();
    let grid = nodes[0].grid();
    let acc = green_recursion(measure, &spectra, dt, grid);
    Ok(acc[0].synthesize())
}

/// Backward recursion `I_i = E I_{i+1} + c0 Phi_i + c1 Phi_{i+1}` returning
/// the Green integral at every node.
fn green_recursion(
    measure: &SpectralMeasure,
    phi: &[Spectrum],
    dt: f64,
    grid: Grid,
) -> Vec<Spectrum> {
    let n = grid.len();
    let d = grid.dim();
    let m = phi.len();
    let mut psi = vec![0.0; n];
    let mut c0 = vec![0.0; n];
    let mut c1 = vec![0.0; n];
    let mut decay = vec![0.0; n];
    for k in 0..n {
        let l = grid.freq(k);
        let w = measure.psi(&l[..d]);
        psi[k] = w;
        let (a, b) = interval_weights(w, dt);
        c0[k] = a;
        c1[k] = b;
        decay[k] = (-dt * w).exp();
    }
    let mut out: Vec<Spectrum> = vec![Spectrum::zeros(grid); m];
    for i in (0..m - 1).rev() {
        let (head, tail) = out.split_at_mut(i + 1);
        let acc = &mut head[i];
        let next = &tail[0];
        let pi = phi[i].coeffs();
        let pj = phi[i + 1].coeffs();
        for k in 0..n {
            acc.coeffs_mut()[k] = next.coeffs()[k] * decay[k] + pi[k] * c0[k] + pj[k] * c1[k];
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub enum Source {
    Zero,
    Constant(f64),
    /// Time-constant source field.
    Field(GridFunction),
    /// `f = -F^c` per component (Zvonkin system).
    NegDriftComponent,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Terminal {
    Zero,
    /// `g(x) = x_c` per component; solved for `w = u - x_c`.
    Identity,
    /// Bounded periodic terminal field (scalar problems).
    Field(GridFunction),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum ProblemKind {
    Scalar,
    /// Terminal 0, source `-F^c`: the Zvonkin system, one equation per component.
    ZvonkinVector,
    /// Terminal `x_c`, source 0: the drift-reconstruction system.
    IdentityTerminal,
}

#[derive(Debug, Clone)]
pub struct PdeProblem {
    pub measure: SpectralMeasure,
    pub drift: DriftField,
    pub source: Source,
    pub terminal: Terminal,
    pub grid: Grid,
    pub horizon: f64,
    pub steps: usize,
    pub params: RegularityParams,
    pub gate_override: bool,
}

impl PdeProblem {
    pub fn kind(&self) -> Result<ProblemKind> {
        match (&self.source, &self.terminal) {
            (Source::NegDriftComponent, Terminal::Zero) => Ok(ProblemKind::ZvonkinVector),
            (Source::NegDriftComponent, _) => Err(Error::InvalidConfig(
                "the Zvonkin source requires a zero terminal".into(),
            )),
            (Source::Zero, Terminal::Identity) => Ok(ProblemKind::IdentityTerminal),
            (_, Terminal::Identity) => Err(Error::InvalidConfig(
                "the identity terminal requires a zero source".into(),
            )),
            _ => Ok(ProblemKind::Scalar),
        }
    }

    pub fn times(&self) -> Vec<f64> {
        let dt = self.horizon / self.steps as f64;
        (0..=self.steps).map(|i| i as f64 * dt).collect()
    }

    fn n_comp(&self) -> Result<usize> {
        Ok(match self.kind()? {
            ProblemKind::Scalar => 1,
            _ => self.grid.dim(),
        })
    }
}

#[derive(Debug, Clone)]
pub struct MildSolution {
    pub grid: Grid,
    pub times: Vec<f64>,
    pub kind: ProblemKind,
    /// Whether the stored `u` omits the linear part `x_c` (identity terminal).
    pub has_identity_part: bool,
    /// `u[node][comp]` (the bounded part for identity-terminal problems).
    pub u: Vec<Vec<GridFunction>>,
    /// `du[node][comp][axis]`, the spectral gradient of the stored `u`.
    pub du: Vec<Vec<Vec<GridFunction>>>,
    pub iterations: usize,
    /// Sup-norm change of the final extra Picard sweep.
    pub residual: f64,
    /// Ratios of successive Picard increments.
    pub contraction_factors: Vec<f64>,
}

impl MildSolution {
    pub fn sup_du(&self) -> f64 {
        self.du
            .iter()
            .flat_map(|n| n.iter().flat_map(|c| c.iter().map(|g| g.max_abs())))
            .fold(0.0, f64::max)
    }

    /// Largest observed contraction factor after the first sweep.
    pub fn contraction_factor(&self) -> f64 {
        self.contraction_factors.iter().skip(1).copied().fold(0.0, f64::max)
    }
}

struct SweepContext {
    grid: Grid,
    dt: f64,
    times: Vec<f64>,
    n_comp: usize,
    /// Drift components at unit time profile.
    drift_unit: Vec<GridFunction>,
    sigmas: Vec<f64>,
    source: Source,
    kind: ProblemKind,
    /// Spectrum of the bounded terminal (if any).
    terminal: Option<Spectrum>,
    psi: Vec<f64>,
}

impl SweepContext {
    fn new(problem: &PdeProblem) -> Result<Self> {
        let grid = problem.grid;
        let kind = problem.kind()?;
        let n_comp = problem.n_comp()?;
        let times = problem.times();
        let dt = problem.horizon / problem.steps as f64;
        let drift_unit = problem.drift.realize(problem.drift.horizon(), grid);
        let sigmas = times.iter().map(|&t| problem.drift.sigma(t)).collect();
        let terminal = match &problem.terminal {
            Terminal::Field(g) => Some(g.to_spectrum()),
            _ => None,
        };
        let d = grid.dim();
        let psi = (0..grid.len())
            .map(|k| {
                let l = grid.freq(k);
                problem.measure.psi(&l[..d])
            })
            .collect();
        Ok(Self { grid, dt, times, n_comp, drift_unit, sigmas, source: problem.source.clone(), kind, terminal, psi })
    }

    /// Terminal contribution `P_{T - t_i} g` per node (bounded part only).
    fn terminal_at(&self, node: usize) -> Option<Spectrum> {
        self.terminal.as_ref().map(|g| {
            let horizon = *self.times.last().unwrap();
            let gap = horizon - self.times[node];
            let mut s = g.clone();
            for (k, c) in s.coeffs_mut().iter_mut().enumerate() {
                *c *= (-gap * self.psi[k]).exp();
            }
            s
        })
    }

    /// Effective source `Phi_{node, comp} = f + F . D u` (with the identity
    /// extra `F_c` for identity-terminal problems) in physical space.
    fn effective_source(
        &self,
        node: usize,
        comp: usize,
        du: &[Vec<Vec<GridFunction>>],
    ) -> Result<GridFunction> {
        let sigma = self.sigmas[node];
        let mut phi = match (&self.source, self.kind) {
            (Source::Zero, _) => GridFunction::zeros(self.grid),
            (Source::Constant(c), _) => GridFunction::constant(self.grid, *c),
            (Source::Field(f), _) => f.clone(),
            (Source::NegDriftComponent, _) => self.drift_unit[comp].scaled(-sigma),
        };
        if self.kind == ProblemKind::IdentityTerminal {
            phi = phi.add(&self.drift_unit[comp].scaled(sigma))?;
        }
        for axis in 0..self.grid.dim() {
            let fa = self.drift_unit[axis].scaled(sigma);
            phi = phi.add(&fa.mul(&du[node][comp][axis])?)?;
        }
        Ok(phi)
    }

    /// One Picard sweep: returns the new `u` states per node/component.
    fn sweep(
        &self,
        measure: &SpectralMeasure,
        du: &[Vec<Vec<GridFunction>>],
    ) -> Result<Vec<Vec<GridFunction>>> {
        let m = self.times.len();
        let mut new_u = vec![Vec::with_capacity(self.n_comp); m];
        for comp in 0..self.n_comp {
            let phi: Vec<Spectrum> = (0..m)
                .map(|i| Ok(self.effective_source(i, comp, du)?.to_spectrum()))
                .collect::<Result<_>>()?;
            let green = green_recursion(measure, &phi, self.dt, self.grid);
            for (i, mut acc) in green.into_iter().enumerate() {
                if let Some(term) = self.terminal_at(i) {
                    for (a, b) in acc.coeffs_mut().iter_mut().zip(term.coeffs()) {
                        *a += b;
                    }
                }
                new_u[i].push(acc.synthesize());
            }
        }
        Ok(new_u)
    }
}

fn gradients(grid: Grid, u: &[Vec<GridFunction>]) -> Vec<Vec<Vec<GridFunction>>> {
    u.iter()
        .map(|comps| {
            comps
                .iter()
                .map(|f| (0..grid.dim()).map(|a| f.derivative(a)).collect())
                .collect()
        })
        .collect()
}

fn sup_change(a: &[Vec<GridFunction>], b: &[Vec<GridFunction>]) -> f64 {
    let mut out = 0.0f64;
    for (na, nb) in a.iter().zip(b) {
        for (fa, fb) in na.iter().zip(nb) {
            let d = fa
                .values()
                .iter()
                .zip(fb.values())
                .fold(0.0f64, |m, (x, y)| m.max((x - y).abs()));
            out = out.max(d);
        }
    }
    out
}

/// Picard iteration for the mild Cauchy problem.
pub fn solve_mild(problem: &PdeProblem, tol: f64, max_iter: usize) -> Result<MildSolution> {
    let gate = check_gate(&problem.params);
    if !gate.weak_ok && !problem.gate_override {
        return Err(Error::GateFailed(format!(
            "gamma = {} vs weak threshold {:.4}",
            problem.params.gamma,
            gate.gamma_weak_threshold
        )));
    }
    if problem.drift.delta == 0.0 && !problem.drift.atoms.is_empty() {
        return Err(Error::MollificationRequired);
    }
    let ctx = SweepContext::new(problem)?;
    let m = ctx.times.len();
    let mut u: Vec<Vec<GridFunction>> =
        vec![vec![GridFunction::zeros(ctx.grid); ctx.n_comp]; m];
    let mut du = gradients(ctx.grid, &u);
    let mut contraction = Vec::new();
    let mut prev_inc = f64::NAN;
    for iter in 0..max_iter {
        let new_u = ctx.sweep(&problem.measure, &du)?;
        let new_du = gradients(ctx.grid, &new_u);
        let inc = sup_change(&new_u, &u).max({
            let mut d = 0.0f64;
            for (na, nb) in new_du.iter().zip(&du) {
                for (ca, cb) in na.iter().zip(nb) {
                    d = d.max(sup_change(
                        std::slice::from_ref(ca),
                        std::slice::from_ref(cb),
                    ));
                }
            }
            d
        });
        if prev_inc.is_finite() && prev_inc > 0.0 {
            contraction.push(inc / prev_inc);
        }
        u = new_u;
        du = new_du;
        if inc <= tol {
            // one extra sweep measures the fixed-point residual
            let check = ctx.sweep(&problem.measure, &du)?;
            let residual = sup_change(&check, &u);
            return Ok(MildSolution {
                grid: ctx.grid,
                times: ctx.times.clone(),
                kind: ctx.kind,
                has_identity_part: ctx.kind == ProblemKind::IdentityTerminal,
                u,
                du,
                iterations: iter + 1,
                residual,
                contraction_factors: contraction,
            });
        }
        if contraction.len() >= 3 && contraction.iter().rev().take(3).all(|r| *r >= 1.0) {
            return Err(Error::NonContraction {
                factor: *contraction.last().unwrap(),
                iterations: iter + 1,
            });
        }
        prev_inc = inc;
    }
    Err(Error::NonContraction {
        factor: contraction.last().copied().unwrap_or(f64::INFINITY),
        iterations: max_iter,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct ZvonkinReport {
    /// `min over nodes and grid of det(I + Du)`.
    pub min_det: f64,
    pub sup_du: f64,
    /// Flagged when `min_det <= 0.5`.
    pub invertible: bool,
}

/// The transformed coordinates `Phi(t, x) = x + u(t, x)` with Jacobian
/// diagnostics; requires the Zvonkin system solution.
pub struct ZvonkinTransform {
    /// `phi[node][comp]`.
    pub phi: Vec<Vec<GridFunction>>,
    pub report: ZvonkinReport,
}

pub fn zvonkin_transform(sol: &MildSolution) -> Result<ZvonkinTransform> {
    if sol.kind != ProblemKind::ZvonkinVector {
        return Err(Error::InvalidConfig(
            "the Zvonkin map needs the zero-terminal, -F-source solution".into(),
        ));
    }
    let grid = sol.grid;
    let d = grid.dim();
    let mut min_det = f64::INFINITY;
    for node in &sol.du {
        for idx in 0..grid.len() {
            let det = match d {
                1 => 1.0 + node[0][0].values()[idx],
                _ => {
                    let a = 1.0 + node[0][0].values()[idx];
                    let b = node[0][1].values()[idx];
                    let c = node[1][0].values()[idx];
                    let e = 1.0 + node[1][1].values()[idx];
                    a * e - b * c
                }
            };
            min_det = min_det.min(det);
        }
    }
    let phi = sol
        .u
        .iter()
        .map(|comps| {
            comps
                .iter()
                .enumerate()
                .map(|(c, f)| {
                    let mut v = f.clone();
                    for (i, val) in v.values_mut().iter_mut().enumerate() {
                        *val += grid.point(i)[c];
                    }
                    v
                })
                .collect()
        })
        .collect();
    Ok(ZvonkinTransform {
        phi,
        report: ZvonkinReport { min_det, sup_du: sol.sup_du(), invertible: min_det > 0.5 },
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct SchauderReport {
    pub space_du: HolderFit,
    pub time_u: FitSummary,
    pub time_du: FitSummary,
    pub target_space_du: f64,
    pub target_time_u: f64,
    pub target_time_du: f64,
    pub pass_space: bool,
    pub pass_time_u: bool,
    pub pass_time_du: bool,
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct FitSummary {
    pub slope: f64,
    pub r2: f64,
}

/// Time modulus `max_i sup_x |f(t_{i+lag}) - f(t_i)|` over dyadic node lags.
fn time_modulus_fit(fields: &[Vec<GridFunction>], comp: usize, dt: f64) -> Result<FitSummary> {
    let m = fields.len();
    let mut lags = Vec::new();
    let mut mods = Vec::new();
    let mut lag = 1usize;
    while lag < m / 2 {
        let mut worst = 0.0f64;
        for i in 0..m - lag {
            let d = fields[i][comp]
                .values()
                .iter()
                .zip(fields[i + lag][comp].values())
                .fold(0.0f64, |mx, (a, b)| mx.max((a - b).abs()));
            worst = worst.max(d);
        }
        if worst > 0.0 {
            lags.push(lag as f64 * dt);
            mods.push(worst);
        }
        lag *= 2;
    }
    if lags.len() < 4 {
        return Err(Error::NotEnoughLags { required: 4, got: lags.len() });
    }
    let fit = log_log_fit(&lags, &mods);
    Ok(FitSummary { slope: fit.slope, r2: fit.r2 })
}

/// Fits the Schauder exponents of a solved problem: spatial Hölder index of
/// `Du`, time index of `u` and of `Du`, against `theta - 1 - eps`, `theta/alpha`
/// and `(theta - 1)/alpha` (each minus the 0.1 slack).
pub fn schauder_report(
    sol: &MildSolution,
    params: &RegularityParams,
    lags: &LagRange,
) -> Result<SchauderReport> {
    let theta = params.theta();
    let dt = sol.times[1] - sol.times[0];
    let space_du = holder_exponent(&sol.du[0][0][0], lags)?;
    let du_first: Vec<Vec<GridFunction>> = sol.du.iter().map(|n| vec![n[0][0].clone()]).collect();
    let time_u = time_modulus_fit(&sol.u, 0, dt)?;
    let time_du = time_modulus_fit(&du_first, 0, dt)?;
    let target_space_du = theta - 1.0 - params.eps - 0.1;
    let target_time_u = theta / params.alpha - 0.1;
    let target_time_du = (theta - 1.0) / params.alpha - 0.1;
    Ok(SchauderReport {
        pass_space: space_du.slope >= target_space_du,
        pass_time_u: time_u.slope >= target_time_u,
        pass_time_du: time_du.slope >= target_time_du,
        space_du,
        time_u,
        time_du,
        target_space_du,
        target_time_u,
        target_time_du,
    })
}

/// Writes `u` and `Du` per node as CSV (`t,x[,y],comp,u,du_x[,du_y]`).
pub fn write_solution_csv<W: std::io::Write>(sol: &MildSolution, w: &mut W) -> Result<()> {
    let grid = sol.grid;
    if grid.dim() == 1 {
        writeln!(w, "t,x,comp,u,du_x")?;
    } else {
        writeln!(w, "t,x1,x2,comp,u,du_x1,du_x2")?;
    }
    for (i, t) in sol.times.iter().enumerate() {
        for comp in 0..sol.u[i].len() {
            for idx in 0..grid.len() {
                let p = grid.point(idx);
                if grid.dim() == 1 {
                    writeln!(
                        w,
                        "{},{},{},{},{}",
                        t,
                        p[0],
                        comp,
                        sol.u[i][comp].values()[idx],
                        sol.du[i][comp][0].values()[idx]
                    )?;
                } else {
                    writeln!(
                        w,
                        "{},{},{},{},{},{},{}",
                        t,
                        p[0],
                        p[1],
                        comp,
                        sol.u[i][comp].values()[idx],
                        sol.du[i][comp][0].values()[idx],
                        sol.du[i][comp][1].values()[idx]
                    )?;
                }
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::drift::{build_drift, mollify, DriftSpec};
    use rand::SeedableRng;
    use rand_chacha::ChaCha12Rng;

    const INF: f64 = f64::INFINITY;

    fn grid() -> Grid {
        Grid::new(1, std::f64::consts::PI, 512).unwrap()
    }

    fn measure() -> SpectralMeasure {
        SpectralMeasure::standard_isotropic(1.5, 1).unwrap()
    }

    fn empty_drift(horizon: f64) -> DriftField {
        let spec = DriftSpec {
            alpha: 1.5,
            gamma: 0.9,
            p: INF,
            q: INF,
            r: INF,
            levels: 4,
            amplitude: 0.0,
            jitter: 0.0,
            time_singularity: 0.0,
            horizon,
            dim: 1,
        };
        let mut rng = ChaCha12Rng::seed_from_u64(0);
        let mut f = build_drift(&spec, &mut rng).unwrap();
        f.atoms.clear();
        f
    }

    fn lacunary_drift(horizon: f64, gamma: f64, amplitude: f64, m: u32) -> DriftField {
        let spec = DriftSpec {
            alpha: 1.5,
            gamma,
            p: INF,
            q: INF,
            r: INF,
            levels: 6,
            amplitude,
            jitter: 0.0,
            time_singularity: 0.0,
            horizon,
            dim: 1,
        };
        let mut rng = ChaCha12Rng::seed_from_u64(20);
        mollify(&build_drift(&spec, &mut rng).unwrap(), m).unwrap()
    }

    fn params(alpha: f64, gamma: f64) -> RegularityParams {
        RegularityParams::new(alpha, 1, INF, INF, INF, gamma)
    }

    #[test]
    fn gate_brownian_threshold_is_one_half() {
        let p = params(2.0, 0.6);
        let gate = check_gate(&p);
        assert!((gate.gamma_weak_threshold - 0.5).abs() < 1e-12);
        assert!(gate.weak_ok);
        assert!((gate.theta - (0.6 + 1.0)).abs() < 1e-12);
        assert!(!check_gate(&params(2.0, 0.4)).weak_ok);
    }

    #[test]
    fn gate_stable_threshold_and_theta() {
        let gate = check_gate(&params(1.5, 0.9));
        assert!((gate.gamma_weak_threshold - 0.75).abs() < 1e-12);
        assert!(gate.weak_ok && gate.dyn_ok);
        assert!((gate.theta - 1.4).abs() < 1e-12);
    }

    #[test]
    fn gate_with_finite_integrability() {
        // d=1, p=r=4, alpha=2, gamma=0.9: threshold 0.875, theta 1.15
        let p = RegularityParams::new(2.0, 1, 4.0, 4.0, 4.0, 0.9);
        let gate = check_gate(&p);
        assert!((gate.gamma_weak_threshold - 0.875).abs() < 1e-12);
        assert!(gate.weak_ok);
        assert!((gate.theta - 1.15).abs() < 1e-12);
        assert!(gate.krylov_rockner_ok); // 1/4 + 2/4 = 0.75 < 1
    }

    #[test]
    fn semigroup_identity_eigenfunction_and_mass() {
        let m = measure();
        let f = GridFunction::from_fn(grid(), |x| (3.0 * x[0]).cos() + 0.7);
        let id = semigroup_apply(&m, 0.0, &f);
        assert_eq!(id.values(), f.values());
        let t = 0.3;
        let out = semigroup_apply(&m, t, &f);
        let decay = (-t * 3f64.powf(1.5)).exp();
        let expected = GridFunction::from_fn(grid(), |x| decay * (3.0 * x[0]).cos() + 0.7);
        assert!(out.sub(&expected).unwrap().max_abs() < 1e-12);
        assert!((out.mean() - f.mean()).abs() < 1e-14);
    }

    #[test]
    fn green_constant_and_eigenfunction() {
        let m = measure();
        let g = grid();
        let steps = 32;
        let horizon = 0.5;
        let dt = horizon / steps as f64;
        // constant source c: G = c (T - t)
        let c = 1.7;
        let nodes: Vec<GridFunction> =
            (0..=steps).map(|_| GridFunction::constant(g, c)).collect();
        let out = green_apply(&m, &nodes, dt).unwrap();
        assert!((out.values()[0] - c * horizon).abs() < 1e-12);
        // cosine source: G = cos(kx) (1 - e^{-(T-t) psi}) / psi, exact here
        let k = 4.0;
        let nodes: Vec<GridFunction> =
            (0..=steps).map(|_| GridFunction::from_fn(g, |x| (k * x[0]).cos())).collect();
        let out = green_apply(&m, &nodes, dt).unwrap();
        let psi = k.powf(1.5);
        let expected = GridFunction::from_fn(g, |x| {
            (k * x[0]).cos() * (1.0 - (-horizon * psi).exp()) / psi
        });
        assert!(out.sub(&expected).unwrap().max_abs() < 1e-12);
        // zero source
        let nodes: Vec<GridFunction> = (0..=steps).map(|_| GridFunction::zeros(g)).collect();
        assert!(green_apply(&m, &nodes, dt).unwrap().max_abs() == 0.0);
    }

    #[test]
    fn duhamel_identity_terminal_without_drift() {
        // F = 0, f = 0, g(x) = x: u(t, x) = x exactly (w = 0)
        let problem = PdeProblem {
            measure: measure(),
            drift: empty_drift(0.25),
            source: Source::Zero,
            terminal: Terminal::Identity,
            grid: grid(),
            horizon: 0.25,
            steps: 32,
            params: params(1.5, 0.9),
            gate_override: false,
        };
        let sol = solve_mild(&problem, 1e-10, 50).unwrap();
        assert!(sol.has_identity_part);
        for node in &sol.u {
            assert!(node[0].max_abs() < 1e-10);
        }
        assert!(sol.residual < 2e-10);
    }

    #[test]
    fn duhamel_constant_drift_transport() {
        // F = b constant, f = 0, g(x) = x: u(t, x) = x + b (T - t)
        let b = 0.8;
        let horizon = 0.25;
        let mut drift = empty_drift(horizon);
        drift.atoms.push(crate::drift::DriftAtom {
            level: 1,
            freq: 0.0,
            axis: 0,
            component: 0,
            amplitude: b,
            phase: 0.0,
        });
        drift.delta = 1.0; // constants are unaffected by mollification
        drift.mollification_level = Some(1);
        let problem = PdeProblem {
            measure: measure(),
            drift,
            source: Source::Zero,
            terminal: Terminal::Identity,
            grid: grid(),
            horizon,
            steps: 32,
            params: params(1.5, 0.9),
            gate_override: false,
        };
        let sol = solve_mild(&problem, 1e-10, 50).unwrap();
        for (i, t) in sol.times.iter().enumerate() {
            let expected = b * (horizon - t);
            let err = sol.u[i][0]
                .values()
                .iter()
                .fold(0.0f64, |m, v| m.max((v - expected).abs()));
            assert!(err < 1e-8, "node {i}: err {err:.2e}");
        }
    }

    #[test]
    fn duhamel_constant_source() {
        // f = c, F = 0, g = 0: u(t, x) = c (T - t)
        let c = -1.3;
        let horizon = 0.5;
        let problem = PdeProblem {
            measure: measure(),
            drift: empty_drift(horizon),
            source: Source::Constant(c),
            terminal: Terminal::Zero,
            grid: grid(),
            horizon,
            steps: 32,
            params: params(1.5, 0.9),
            gate_override: false,
        };
        let sol = solve_mild(&problem, 1e-10, 50).unwrap();
        for (i, t) in sol.times.iter().enumerate() {
            let expected = c * (horizon - t);
            let err = sol.u[i][0]
                .values()
                .iter()
                .fold(0.0f64, |m, v| m.max((v - expected).abs()));
            assert!(err < 1e-8);
        }
    }

    #[test]
    fn gate_failure_blocks_and_override_unblocks() {
        let horizon = 0.05;
        let drift = lacunary_drift(horizon, 0.9, 0.2, 6);
        let mut problem = PdeProblem {
            measure: measure(),
            drift,
            source: Source::NegDriftComponent,
            terminal: Terminal::Zero,
            grid: grid(),
            horizon,
            steps: 32,
            params: params(1.5, 0.6), // below the 0.75 threshold
            gate_override: false,
        };
        assert!(matches!(solve_mild(&problem, 1e-8, 60), Err(Error::GateFailed(_))));
        problem.gate_override = true;
        assert!(solve_mild(&problem, 1e-8, 60).is_ok());
    }

    #[test]
    fn raw_drift_is_rejected_by_the_solver() {
        let horizon = 0.05;
        let spec = DriftSpec {
            alpha: 1.5,
            gamma: 0.9,
            p: INF,
            q: INF,
            r: INF,
            levels: 4,
            amplitude: 0.3,
            jitter: 0.0,
            time_singularity: 0.0,
            horizon,
            dim: 1,
        };
        let mut rng = ChaCha12Rng::seed_from_u64(2);
        let raw = build_drift(&spec, &mut rng).unwrap();
        let problem = PdeProblem {
            measure: measure(),
            drift: raw,
            source: Source::NegDriftComponent,
            terminal: Terminal::Zero,
            grid: grid(),
            horizon,
            steps: 16,
            params: params(1.5, 0.9),
            gate_override: false,
        };
        assert!(matches!(solve_mild(&problem, 1e-8, 20), Err(Error::MollificationRequired)));
    }

    #[test]
    fn zvonkin_small_horizon_gradient_and_determinant() {
        let horizon = 0.05;
        let drift = lacunary_drift(horizon, 0.9, 0.2, 7);
        let problem = PdeProblem {
            measure: measure(),
            drift,
            source: Source::NegDriftComponent,
            terminal: Terminal::Zero,
            grid: grid(),
            horizon,
            steps: 64,
            params: params(1.5, 0.9),
            gate_override: false,
        };
        let sol = solve_mild(&problem, 1e-8, 80).unwrap();
        // the paper-level contraction and invertibility diagnostics at T = 0.05
        assert!(sol.contraction_factor() <= 0.9, "factor {}", sol.contraction_factor());
        assert!(sol.sup_du() <= 0.25, "sup Du = {}", sol.sup_du());
        let z = zvonkin_transform(&sol).unwrap();
        assert!(z.report.min_det >= 0.5, "min det {}", z.report.min_det);
        assert!(z.report.invertible);
        // u = 0 edge: zero drift gives the identity map
        let triv_problem = PdeProblem {
            measure: measure(),
            drift: empty_drift(horizon),
            source: Source::Zero,
            terminal: Terminal::Zero,
            grid: grid(),
            horizon,
            steps: 16,
            params: params(1.5, 0.9),
            gate_override: false,
        };
        let triv = solve_mild(&triv_problem, 1e-10, 20).unwrap();
        assert!(triv.sup_du() == 0.0);
    }

    #[test]
    fn gradient_consistency_spectral_vs_finite_differences() {
        let horizon = 0.05;
        let drift = lacunary_drift(horizon, 0.9, 0.4, 6);
        let problem = PdeProblem {
            measure: measure(),
            drift,
            source: Source::NegDriftComponent,
            terminal: Terminal::Zero,
            grid: grid(),
            horizon,
            steps: 32,
            params: params(1.5, 0.9),
            gate_override: false,
        };
        let sol = solve_mild(&problem, 1e-9, 80).unwrap();
        let u = &sol.u[0][0];
        let du = &sol.du[0][0][0];
        let h = sol.grid.spacing();
        let fd_err = |stride: usize| {
            let fwd = u.shifted(0, stride);
            let n = sol.grid.len();
            let mut worst = 0.0f64;
            for i in 0..n {
                let back = u.values()[(i + n - stride) % n];
                let fd = (fwd.values()[i] - back) / (2.0 * stride as f64 * h);
                worst = worst.max((fd - du.values()[i]).abs());
            }
            worst
        };
        let e1 = fd_err(1);
        let e2 = fd_err(2);
        let slope = (e2 / e1).ln() / 2f64.ln();
        assert!((slope - 2.0).abs() <= 0.2, "refinement slope {slope}");
    }

    #[test]
    fn solution_stabilises_in_mollification_level() {
        let horizon = 0.05;
        let sup_gap = |m1: u32, m2: u32| {
            let run = |m: u32| {
                let problem = PdeProblem {
                    measure: measure(),
                    drift: lacunary_drift(horizon, 0.9, 0.4, m),
                    source: Source::NegDriftComponent,
                    terminal: Terminal::Zero,
                    grid: grid(),
                    horizon,
                    steps: 32,
                    params: params(1.5, 0.9),
                    gate_override: false,
                };
                solve_mild(&problem, 1e-9, 80).unwrap()
            };
            let a = run(m1);
            let b = run(m2);
            sup_change(&a.u, &b.u)
        };
        let g24 = sup_gap(2, 4);
        let g48 = sup_gap(4, 8);
        assert!(g48 < g24, "u_m gaps not decreasing: {g24} vs {g48}");
    }

    /// Pointwise existence of `D G^alpha Phi` for a lacunary source of
    /// regularity `-1 + gamma` with time factor `u^-a` (a standing in for
    /// `1/r`): the per-level contribution to `||D G^alpha Phi||_inf` scales
    /// like `k_j^{2 - gamma - alpha(1 - a)}`, so its fitted exponent in the
    /// level frequency is positive (divergent sum, no pointwise gradient)
    /// below `gamma* = 2 - alpha (1 - 1/r) + d/p` and negative (summable)
    /// above it.
    #[test]
    fn green_gradient_threshold_sign_flip() {
        let alpha = 1.5f64;
        let a = 0.2f64;
        let gamma_star = 2.0 - alpha * (1.0 - a);
        assert!((gamma_star - 0.8).abs() < 1e-12);
        let horizon = 0.5f64;
        // int_0^T u^-a e^{-u c} du by geometric panels with exact u^-a weights
        let time_integral = |c: f64| -> f64 {
            let mut integral = 0.0;
            let mut v0 = 1e-12f64 * horizon;
            let ratio = 1.03f64;
            while v0 < horizon {
                let v1 = (v0 * ratio).min(horizon);
                let vm = 0.5 * (v0 + v1);
                integral += (-c * vm).exp() * (v1.powf(1.0 - a) - v0.powf(1.0 - a)) / (1.0 - a);
                v0 = v1;
            }
            integral
        };
        let fitted = |gamma: f64| -> f64 {
            let ks: Vec<f64> = (4..=10).map(|j| 2f64.powi(j)).collect();
            let increments: Vec<f64> =
                ks.iter().map(|&k| k.powf(2.0 - gamma) * time_integral(k.powf(alpha))).collect();
            log_log_fit(&ks, &increments).slope
        };
        let below = fitted(0.65);
        let above = fitted(0.95);
        assert!(below > 0.05, "gamma below threshold should diverge, exponent {below}");
        assert!(above < -0.05, "gamma above threshold should be summable, exponent {above}");
        // and the exponents match 2 - gamma - alpha (1 - a) = -(gamma - gamma*)
        assert!((below - (gamma_star - 0.65)).abs() < 0.02, "{below}");
        assert!((above - (gamma_star - 0.95)).abs() < 0.02, "{above}");
    }
}

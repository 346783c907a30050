//! Periodic grids on the torus `[-L, L]^d` and FFT-backed field arithmetic.
//!
//! All spectral operations use the discrete Fourier lattice `pi/L * m`,
//! `m in {-N/2, ..., N/2 - 1}` per axis. Spectra are stored as true
//! Fourier-series coefficients `c_m` with `f(x) = sum_m c_m exp(i lambda_m x)`,
//! so plane-wave amplitudes and phases can be read off directly.

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};
use std::sync::{Arc, Mutex, OnceLock};

use crate::error::{Error, Result};

fn plan(n: usize, inverse: bool) -> Arc<dyn Fft<f64>> {
    static PLANNER: OnceLock<Mutex<FftPlanner<f64>>> = OnceLock::new();
    let mut planner = PLANNER
        .get_or_init(|| Mutex::new(FftPlanner::new()))
        .lock()
        .unwrap();
    if inverse {
        planner.plan_fft_inverse(n)
    } else {
        planner.plan_fft_forward(n)
    }
}

fn transpose_square(buf: &mut [Complex64], n: usize) {
    for i in 0..n {
        for j in (i + 1)..n {
            buf.swap(i * n + j, j * n + i);
        }
    }
}

fn fft_nd(buf: &mut [Complex64], n: usize, dim: usize, inverse: bool) {
    let fft = plan(n, inverse);
    match dim {
        1 => fft.process(buf),
        2 => {
            for row in buf.chunks_exact_mut(n) {
                fft.process(row);
            }
            transpose_square(buf, n);
            for row in buf.chunks_exact_mut(n) {
                fft.process(row);
            }
            transpose_square(buf, n);
        }
        _ => unreachable!("grid dimension is validated at construction"),
    }
}

/// Uniform periodic grid on `[-L, L]^d`, `d in {1, 2}`, `N` points per axis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    dim: usize,
    half_width: f64,
    points_per_axis: usize,
}

impl Grid {
    pub fn new(dim: usize, half_width: f64, points_per_axis: usize) -> Result<Self> {
        if !(dim == 1 || dim == 2) {
            return Err(Error::InvalidGrid(format!("dimension must be 1 or 2, got {dim}")));
        }
        if !(half_width.is_finite() && half_width > 0.0) {
            return Err(Error::InvalidGrid(format!("half-width must be positive, got {half_width}")));
        }
        if points_per_axis < 64 || !points_per_axis.is_power_of_two() {
            return Err(Error::InvalidGrid(format!(
                "points per axis must be a power of two >= 64, got {points_per_axis}"
            )));
        }
        Ok(Self { dim, half_width, points_per_axis })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn half_width(&self) -> f64 {
        self.half_width
    }

    pub fn points_per_axis(&self) -> usize {
        self.points_per_axis
    }

    /// Grid spacing `h = 2L/N`.
    pub fn spacing(&self) -> f64 {
        2.0 * self.half_width / self.points_per_axis as f64
    }

    /// Total number of grid points `N^d`.
    pub fn len(&self) -> usize {
        self.points_per_axis.pow(self.dim as u32)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn cell_volume(&self) -> f64 {
        self.spacing().powi(self.dim as i32)
    }

    /// Coordinate of index `i` along one axis: `-L + i h`.
    pub fn coord(&self, i: usize) -> f64 {
        -self.half_width + i as f64 * self.spacing()
    }

    /// Physical point of a flat index (second component 0 when `d = 1`).
    pub fn point(&self, flat: usize) -> [f64; 2] {
        match self.dim {
            1 => [self.coord(flat), 0.0],
            _ => {
                let n = self.points_per_axis;
                [self.coord(flat / n), self.coord(flat % n)]
            }
        }
    }

    /// Signed lattice index of DFT bin `k` along one axis.
    fn mode(&self, k: usize) -> i64 {
        let n = self.points_per_axis as i64;
        let k = k as i64;
        if k < n / 2 {
            k
        } else {
            k - n
        }
    }

    /// Frequency of DFT bin `k` along one axis: `pi m / L`.
    pub fn freq_component(&self, k: usize) -> f64 {
        std::f64::consts::PI * self.mode(k) as f64 / self.half_width
    }

    /// Frequency vector of a flat spectral index.
    pub fn freq(&self, flat: usize) -> [f64; 2] {
        match self.dim {
            1 => [self.freq_component(flat), 0.0],
            _ => {
                let n = self.points_per_axis;
                [self.freq_component(flat / n), self.freq_component(flat % n)]
            }
        }
    }

    /// Sign flip `(-1)^(m1 + m2)` relating DFT bins to series coefficients.
    fn flip(&self, flat: usize) -> f64 {
        let m = match self.dim {
            1 => self.mode(flat),
            _ => {
                let n = self.points_per_axis;
                self.mode(flat / n) + self.mode(flat % n)
            }
        };
        if m.rem_euclid(2) == 0 {
            1.0
        } else {
            -1.0
        }
    }

    /// Largest resolved frequency `pi N / (2 L)` per axis.
    pub fn nyquist(&self) -> f64 {
        std::f64::consts::PI * self.points_per_axis as f64 / (2.0 * self.half_width)
    }

    /// Flat index of axis indices `(i, j)` (`j` ignored for `d = 1`).
    pub fn index(&self, i: usize, j: usize) -> usize {
        match self.dim {
            1 => i,
            _ => i * self.points_per_axis + j,
        }
    }
}

/// Real scalar field sampled on a [`Grid`].
#[derive(Debug, Clone, PartialEq)]
pub struct GridFunction {
    grid: Grid,
    values: Vec<f64>,
}

impl GridFunction {
    pub fn new(grid: Grid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::InvalidGrid(format!(
                "value buffer has length {}, grid has {} points",
                values.len(),
                grid.len()
            )));
        }
        if !values.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite("grid function values"));
        }
        Ok(Self { grid, values })
    }

    pub fn zeros(grid: Grid) -> Self {
        Self { grid, values: vec![0.0; grid.len()] }
    }

    pub fn constant(grid: Grid, c: f64) -> Self {
        Self { grid, values: vec![c; grid.len()] }
    }

    pub fn from_fn<F: FnMut([f64; 2]) -> f64>(grid: Grid, mut f: F) -> Self {
        let values = (0..grid.len()).map(|i| f(grid.point(i))).collect();
        Self { grid, values }
    }

    pub fn grid(&self) -> Grid {
        self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    /// Rectangle-rule integral `h^d sum f`.
    pub fn quadrature(&self) -> f64 {
        self.grid.cell_volume() * self.values.iter().sum::<f64>()
    }

    /// Average over the fundamental domain.
    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    pub fn min(&self) -> f64 {
        self.values.iter().fold(f64::INFINITY, |m, &v| m.min(v))
    }

    pub fn max(&self) -> f64 {
        self.values.iter().fold(f64::NEG_INFINITY, |m, &v| m.max(v))
    }

    /// `L^l` norm by grid quadrature; `l = inf` is the grid max.
    pub fn lp_norm(&self, l: f64) -> f64 {
        if l.is_infinite() {
            self.max_abs()
        } else {
            let s: f64 = self.values.iter().map(|v| v.abs().powf(l)).sum();
            (self.grid.cell_volume() * s).powf(1.0 / l)
        }
    }

    /// Values shifted by `offset` grid points along `axis` (periodic).
    pub fn shifted(&self, axis: usize, offset: usize) -> GridFunction {
        let n = self.grid.points_per_axis;
        let mut out = vec![0.0; self.values.len()];
        match self.grid.dim {
            1 => {
                for i in 0..n {
                    out[i] = self.values[(i + offset) % n];
                }
            }
            _ => {
                for i in 0..n {
                    for j in 0..n {
                        let (si, sj) = if axis == 0 {
                            ((i + offset) % n, j)
                        } else {
                            (i, (j + offset) % n)
                        };
                        out[i * n + j] = self.values[si * n + sj];
                    }
                }
            }
        }
        GridFunction { grid: self.grid, values: out }
    }

    /// Applies a Fourier multiplier `lambda -> m(lambda)` and returns the
    /// real part of the result.
    pub fn apply_multiplier<M: Fn([f64; 2]) -> Complex64>(&self, m: M) -> GridFunction {
        let g = self.grid;
        let mut buf: Vec<Complex64> =
            self.values.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        fft_nd(&mut buf, g.points_per_axis, g.dim, false);
        let norm = 1.0 / g.len() as f64;
        for (k, c) in buf.iter_mut().enumerate() {
            *c *= m(g.freq(k)) * norm;
        }
        fft_nd(&mut buf, g.points_per_axis, g.dim, true);
        GridFunction { grid: g, values: buf.iter().map(|c| c.re).collect() }
    }

    /// Spatial partial derivative along `axis` (spectral, multiplier `i lambda`).
    pub fn derivative(&self, axis: usize) -> GridFunction {
        self.apply_multiplier(|l| Complex64::new(0.0, l[axis]))
    }

    pub fn to_spectrum(&self) -> Spectrum {
        let g = self.grid;
        let mut buf: Vec<Complex64> =
            self.values.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        fft_nd(&mut buf, g.points_per_axis, g.dim, false);
        let norm = 1.0 / g.len() as f64;
        for (k, c) in buf.iter_mut().enumerate() {
            *c *= g.flip(k) * norm;
        }
        Spectrum { grid: g, coeffs: buf }
    }

    pub fn scaled(&self, c: f64) -> GridFunction {
        GridFunction { grid: self.grid, values: self.values.iter().map(|v| c * v).collect() }
    }

    pub fn add(&self, other: &GridFunction) -> Result<GridFunction> {
        same_grid(self, other)?;
        let values = self.values.iter().zip(&other.values).map(|(a, b)| a + b).collect();
        Ok(GridFunction { grid: self.grid, values })
    }

    pub fn sub(&self, other: &GridFunction) -> Result<GridFunction> {
        same_grid(self, other)?;
        let values = self.values.iter().zip(&other.values).map(|(a, b)| a - b).collect();
        Ok(GridFunction { grid: self.grid, values })
    }

    pub fn mul(&self, other: &GridFunction) -> Result<GridFunction> {
        same_grid(self, other)?;
        let values = self.values.iter().zip(&other.values).map(|(a, b)| a * b).collect();
        Ok(GridFunction { grid: self.grid, values })
    }
}

pub fn same_grid(a: &GridFunction, b: &GridFunction) -> Result<()> {
    if a.grid != b.grid {
        return Err(Error::GridMismatch);
    }
    Ok(())
}

/// Fourier-series coefficients of a real field.
#[derive(Debug, Clone)]
pub struct Spectrum {
    grid: Grid,
    coeffs: Vec<Complex64>,
}

impl Spectrum {
    pub fn zeros(grid: Grid) -> Self {
        Self { grid, coeffs: vec![Complex64::new(0.0, 0.0); grid.len()] }
    }

    pub fn grid(&self) -> Grid {
        self.grid
    }

    pub fn coeffs(&self) -> &[Complex64] {
        &self.coeffs
    }

    pub fn coeffs_mut(&mut self) -> &mut [Complex64] {
        &mut self.coeffs
    }

    /// Coefficient of the lattice mode `(m1, m2)` (`m2` ignored for `d = 1`).
    pub fn coeff_of_mode(&self, m1: i64, m2: i64) -> Complex64 {
        let n = self.grid.points_per_axis as i64;
        let k1 = m1.rem_euclid(n) as usize;
        match self.grid.dim {
            1 => self.coeffs[k1],
            _ => {
                let k2 = m2.rem_euclid(n) as usize;
                self.coeffs[k1 * self.grid.points_per_axis + k2]
            }
        }
    }

    /// Largest `|lambda|` whose coefficient exceeds `rel_floor * max |coeff|`.
    pub fn max_active_frequency(&self, rel_floor: f64) -> f64 {
        let max_c = self.coeffs.iter().map(|c| c.norm()).fold(0.0f64, f64::max);
        if max_c == 0.0 {
            return 0.0;
        }
        let mut out = 0.0f64;
        for (k, c) in self.coeffs.iter().enumerate() {
            if c.norm() > rel_floor * max_c {
                let l = self.grid.freq(k);
                out = out.max((l[0] * l[0] + l[1] * l[1]).sqrt());
            }
        }
        out
    }

    pub fn scale_by<M: Fn([f64; 2]) -> Complex64>(&mut self, m: M) {
        for (k, c) in self.coeffs.iter_mut().enumerate() {
            *c *= m(self.grid.freq(k));
        }
    }

    pub fn synthesize(&self) -> GridFunction {
        let g = self.grid;
        let mut buf = self.coeffs.clone();
        for (k, c) in buf.iter_mut().enumerate() {
            *c *= g.flip(k);
        }
        fft_nd(&mut buf, g.points_per_axis, g.dim, true);
        GridFunction { grid: g, values: buf.iter().map(|c| c.re).collect() }
    }
}

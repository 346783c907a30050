//! Exact sampling of stable increments.
//!
//! One-dimensional symmetric draws use the Chambers-Mallows-Stuck formula;
//! positive (subordinator) draws use Kanter's representation. Cylindrical and
//! atomic measures sample one scalar stable per atom direction; the isotropic
//! measure in d = 2 goes through Brownian subordination by an (alpha/2)-stable
//! subordinator. The alpha = 2 endpoint is covered by the same formulas.

use rand::Rng;

use crate::spectral::{MeasureKind, SpectralMeasure};

const PI: f64 = std::f64::consts::PI;

fn uniform_open(rng: &mut impl Rng) -> f64 {
    // open (0, 1), clamped away from the endpoints
    rng.random_range(0.0f64..1.0).clamp(1e-16, 1.0 - 1e-16)
}

fn exp1(rng: &mut impl Rng) -> f64 {
    -uniform_open(rng).ln()
}

/// Standard symmetric alpha-stable draw with characteristic function
/// `exp(-|lambda|^alpha)` (Chambers-Mallows-Stuck, beta = 0).
///
/// At alpha = 2 this reduces to `2 sin(V) sqrt(E)`, a centred Gaussian of
/// variance 2, consistent with `exp(-lambda^2)`.
pub fn standard_symmetric_stable(alpha: f64, rng: &mut impl Rng) -> f64 {
    debug_assert!(alpha > 0.0 && alpha <= 2.0);
    let v = PI * (uniform_open(rng) - 0.5);
    let e = exp1(rng);
    let num = (alpha * v).sin();
    let den = v.cos().powf(1.0 / alpha);
    let tail = (((1.0 - alpha) * v).cos() / e).powf((1.0 - alpha) / alpha);
    num / den * tail
}

/// Positive strictly stable draw with Laplace transform `exp(-u^rho)`,
/// `rho in (0, 1)` (Kanter's representation).
pub fn standard_positive_stable(rho: f64, rng: &mut impl Rng) -> f64 {
    debug_assert!(rho > 0.0 && rho < 1.0);
    let u = PI * uniform_open(rng);
    let e = exp1(rng);
    let a = (rho * u).sin() / u.sin().powf(1.0 / rho);
    let b = ((1.0 - rho) * u).sin();
    a * (b / e).powf((1.0 - rho) / rho)
}

fn standard_normal(rng: &mut impl Rng) -> f64 {
    // Box-Muller; one draw per call keeps the stream layout simple.
    let u = uniform_open(rng);
    let v = uniform_open(rng);
    (-2.0 * u.ln()).sqrt() * (2.0 * PI * v).cos()
}

/// One exact draw of the increment `W_t` for the given measure.
///
/// The returned vector has `measure.dim()` components. Scales follow from
/// `E exp(i lambda . W_t) = exp(-t psi(lambda))` for each measure kind.
pub fn sample_increment(measure: &SpectralMeasure, t: f64, rng: &mut impl Rng) -> Vec<f64> {
    let alpha = measure.alpha();
    let d = measure.dim();
    match measure.kind() {
        MeasureKind::Isotropic { total_mass } => {
            let scale = (total_mass * t).powf(1.0 / alpha);
            if d == 1 {
                vec![scale * standard_symmetric_stable(alpha, rng)]
            } else if alpha == 2.0 {
                // exp(-m t |lambda|^2) = N(0, 2 m t I)
                let s = (2.0 * total_mass * t).sqrt();
                (0..d).map(|_| s * standard_normal(rng)).collect()
            } else {
                // W_t = sqrt(2) (m t)^{1/alpha} sqrt(S) Z with S the standard
                // (alpha/2)-subordinator and Z standard Gaussian:
                // E exp(i lambda . W_t) = E exp(-S (m t)^{2/alpha} |lambda|^2)
                //                       = exp(-m t |lambda|^alpha).
                let s = standard_positive_stable(alpha / 2.0, rng);
                let factor = std::f64::consts::SQRT_2 * scale * s.sqrt();
                (0..d).map(|_| factor * standard_normal(rng)).collect()
            }
        }
        MeasureKind::Cylindrical { weights } => weights
            .iter()
            .map(|c| (2.0 * c * t).powf(1.0 / alpha) * standard_symmetric_stable(alpha, rng))
            .collect(),
        MeasureKind::Atomic { atoms } => {
            let mut out = vec![0.0; d];
            for atom in atoms {
                let s = (atom.weight * t).powf(1.0 / alpha) * standard_symmetric_stable(alpha, rng);
                for (o, dir) in out.iter_mut().zip(atom.direction.iter()) {
                    *o += s * dir;
                }
            }
            out
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::SpectralMeasure;
    use rand::SeedableRng;
    use rand_chacha::ChaCha12Rng;

    fn rng(seed: u64) -> ChaCha12Rng {
        ChaCha12Rng::seed_from_u64(seed)
    }

    /// Empirical characteristic function with its Monte Carlo standard error.
    fn empirical_cf(draws: &[Vec<f64>], lambda: &[f64]) -> (f64, f64) {
        let n = draws.len() as f64;
        let mut mean = 0.0;
        let mut sq = 0.0;
        for x in draws {
            let dot: f64 = x.iter().zip(lambda).map(|(a, b)| a * b).sum();
            let c = dot.cos();
            mean += c;
            sq += c * c;
        }
        mean /= n;
        sq /= n;
        (mean, ((sq - mean * mean).max(0.0) / n).sqrt())
    }

    fn check_cf(measure: &SpectralMeasure, t: f64, lambdas: &[Vec<f64>], seed: u64) {
        let mut r = rng(seed);
        let draws: Vec<Vec<f64>> =
            (0..100_000).map(|_| sample_increment(measure, t, &mut r)).collect();
        for l in lambdas {
            let (emp, se) = empirical_cf(&draws, l);
            let expected = (-t * measure.psi(l)).exp();
            assert!(
                (emp - expected).abs() <= 3.0 * se.max(1e-6),
                "cf mismatch at lambda {l:?}: emp {emp}, expected {expected}, se {se}"
            );
        }
    }

    #[test]
    fn gaussian_variance_is_two_t() {
        let m = SpectralMeasure::standard_isotropic(2.0, 1).unwrap();
        let mut r = rng(7);
        let n = 100_000;
        let mut sum = 0.0;
        let mut sum2 = 0.0;
        for _ in 0..n {
            let x = sample_increment(&m, 1.0, &mut r)[0];
            sum += x;
            sum2 += x * x;
        }
        let var = sum2 / n as f64 - (sum / n as f64).powi(2);
        // se of the sample variance of a Gaussian: var * sqrt(2/n)
        let se = 2.0 * (2.0 / n as f64).sqrt();
        assert!((var - 2.0).abs() <= 3.0 * se, "var = {var}");
    }

    #[test]
    fn kanter_subordinator_laplace_transform() {
        let rho = 0.75;
        let mut r = rng(11);
        let n = 100_000;
        let draws: Vec<f64> = (0..n).map(|_| standard_positive_stable(rho, &mut r)).collect();
        for &u in &[0.25f64, 1.0, 3.0] {
            let vals: Vec<f64> = draws.iter().map(|s| (-u * s).exp()).collect();
            let mean = vals.iter().sum::<f64>() / n as f64;
            let var = vals.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
            let se = (var / n as f64).sqrt();
            let expected = (-u.powf(rho)).exp();
            assert!(
                (mean - expected).abs() <= 3.0 * se.max(1e-6),
                "u = {u}: mean {mean}, expected {expected}"
            );
            assert!(draws.iter().all(|s| *s > 0.0));
        }
    }

    #[test]
    fn isotropic_1d_char_fn() {
        let m = SpectralMeasure::standard_isotropic(1.5, 1).unwrap();
        check_cf(&m, 1.0, &[vec![0.5], vec![1.0], vec![2.0]], 3);
    }

    #[test]
    fn isotropic_2d_subordinated_char_fn() {
        let m = SpectralMeasure::standard_isotropic(1.5, 2).unwrap();
        check_cf(
            &m,
            0.7,
            &[vec![0.5, 0.0], vec![0.0, 1.0], vec![1.0, 1.0], vec![-0.3, 0.8]],
            4,
        );
    }

    #[test]
    fn cylindrical_char_fn_and_independence() {
        let m = SpectralMeasure::cylindrical(1.5, &[0.5, 0.5]).unwrap();
        check_cf(&m, 1.0, &[vec![1.0, 0.0], vec![1.0, 1.0], vec![0.5, 2.0]], 5);
        // coordinates are independent: sign indicators are uncorrelated
        let mut r = rng(6);
        let n = 100_000;
        let mut cross = 0.0;
        for _ in 0..n {
            let x = sample_increment(&m, 1.0, &mut r);
            cross += x[0].signum() * x[1].signum();
        }
        cross /= n as f64;
        let se = (1.0 / n as f64).sqrt();
        assert!(cross.abs() <= 3.0 * se, "sign correlation {cross}");
    }

    #[test]
    fn atomic_char_fn_off_axis() {
        let m = SpectralMeasure::atomic(1.7, 2, &[([1.0, 0.0], 0.5), ([1.0, 1.0], 0.3)]).unwrap();
        check_cf(&m, 0.5, &[vec![1.0, 0.0], vec![0.7, -0.4], vec![0.0, 1.5]], 8);
    }

    #[test]
    fn alpha_two_atomic_reduces_to_gaussian_cf() {
        let m = SpectralMeasure::atomic(2.0, 1, &[([1.0, 0.0], 0.5)]).unwrap();
        check_cf(&m, 1.0, &[vec![0.5], vec![1.0]], 9);
    }
}

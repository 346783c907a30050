use stable_besov::besov::*;
use stable_besov::fit::log_log_fit;
use stable_besov::grid::*;
use stable_besov::kernel::*;
use stable_besov::spectral::*;

fn run(alpha: f64, gamma: f64, n: usize, l: f64, imin: i32, imax: i32) {
    let m = SpectralMeasure::standard_isotropic(alpha, 1).unwrap();
    let g = Grid::new(1, l, n).unwrap();
    let psi = GridFunction::constant(g, 1.0);
    for (name, eta) in [("eta0", DerivTag::Identity), ("eta1", DerivTag::Axis(0)), ("etaA", DerivTag::FractionalAlpha)] {
        let mut us = vec![];
        let mut ns = vec![];
        for i in imin..=imax {
            let u = 2f64.powi(-i);
            let k = match density_grid(&m, u, g) { Ok(k) => k, Err(e) => { println!("{name} u=2^-{i}: {e}"); continue } };
            let d = derive_field(k.density(), alpha, eta);
            let prod = psi.mul(&d).unwrap();
            let idx = BesovIndex::new(1.0 - gamma, 1.0, 1.0, alpha).unwrap();
            match besov_norm(&prod, &idx) {
                Ok(b) => { us.push(u); ns.push(b.total); }
                Err(e) => println!("{name} u=2^-{i}: {e}"),
            }
        }
        let fit = log_log_fit(&us, &ns);
        let etao = eta.order(alpha);
        let pred = -((1.0 - gamma) / alpha + etao / alpha);
        println!("alpha={alpha} gamma={gamma} {name}: fitted {:.4} pred {:.4} (r2 {:.4}) over 2^-{imin}..2^-{imax}", fit.slope, pred, fit.r2);
        // local slopes
        for w in us.windows(2).zip(ns.windows(2)) {
            let s = (w.1[1]/w.1[0]).ln()/(w.0[1]/w.0[0]).ln();
            print!(" {s:.3}");
        }
        println!();
    }
}

fn main() {
    run(1.5, 0.9, 8192, 16.0, 5, 10);
    run(1.5, 0.9, 32768, 16.0, 8, 13);
    run(2.0, 0.8, 4096, 16.0, 7, 11);
}

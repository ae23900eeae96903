use tvic_core::grid::norm_l1;
use tvic_core::metrics::psnr;
use tvic_core::noise::{corrupt, NoiseSpec};
use tvic_core::phantom;
use tvic_core::solvers::{ssn_l1l2, ssn_l2kl, tv_kl, tv_l1, tv_l2, SolverConfig};

fn main() {
    let gt = phantom::piecewise(64);
    let spec = NoiseSpec { sp_density: 0.05, gauss_var: 0.005, seed: 7, ..NoiseSpec::default() };
    let f = corrupt(&gt, &spec).unwrap().noisy;
    for (l1, l2) in [(2.0, 20.0), (5.0, 40.0), (3.0, 30.0), (1.5, 40.0), (1e5, 40.0), (2.0, 1e5)] {
        let mut cfg = SolverConfig::with_weights(l1, l2);
        cfg.damping = true;
        cfg.max_iter = 80;
        let r = ssn_l1l2(&f, &cfg).unwrap();
        println!(
            "ssn_l1l2 l1={l1:>8} l2={l2:>8}: psnr={:6.2} it={:2} conv={} resid={:9.2e} |v|1={:8.3} qmax={:.4}",
            psnr(&r.u, &gt).unwrap(), r.iterations, r.converged,
            r.history.last().unwrap().residual_norm, norm_l1(&r.v), r.q.max_magnitude()
        );
    }
    for l1 in [1.0, 1.8, 2.6] {
        let mut cfg = SolverConfig::default();
        cfg.damping = true;
        cfg.max_iter = 80;
        let r = tv_l1(&f, l1, 1e5, &cfg).unwrap();
        println!("tv_l1 l1={l1}: psnr={:6.2} it={} conv={} resid={:9.2e}", psnr(&r.u, &gt).unwrap(), r.iterations, r.converged, r.history.last().unwrap().residual_norm);
    }
    for l2 in [20.0, 40.0, 80.0] {
        let mut cfg = SolverConfig::default();
        cfg.damping = true;
        cfg.max_iter = 80;
        let r = tv_l2(&f, l2, 1e5, &cfg).unwrap();
        println!("tv_l2 l2={l2}: psnr={:6.2} it={} conv={} resid={:9.2e}", psnr(&r.u, &gt).unwrap(), r.iterations, r.converged, r.history.last().unwrap().residual_norm);
    }

    let gtb = phantom::blobs(64);
    let spec = NoiseSpec { gauss_var: 0.005, poisson: true, poisson_peak: 100.0, seed: 11, ..NoiseSpec::default() };
    let fb = corrupt(&gtb, &spec).unwrap().noisy;
    println!("poisson noisy PSNR = {:.2}", psnr(&fb, &gtb).unwrap());
    for (l1, l2) in [(10.0, 8.0), (30.0, 25.0), (80.0, 60.0), (1e5, 25.0), (30.0, 1e5)] {
        let mut cfg = SolverConfig::with_weights(l1, l2);
        cfg.max_iter = 80;
        match ssn_l2kl(&fb, &cfg) {
            Ok(r) => println!(
                "ssn_l2kl l1={l1:>8} l2={l2:>8}: psnr={:6.2} it={:2} conv={} resid={:9.2e} urange=[{:.3},{:.3}]",
                psnr(&r.u, &gtb).unwrap(), r.iterations, r.converged,
                r.history.last().unwrap().residual_norm,
                r.u.data().iter().cloned().fold(f64::INFINITY, f64::min),
                r.u.data().iter().cloned().fold(f64::NEG_INFINITY, f64::max),
            ),
            Err(e) => println!("ssn_l2kl l1={l1} l2={l2}: ERROR {e}"),
        }
    }
    for l2 in [10.0, 25.0, 60.0] {
        let mut cfg = SolverConfig::default();
        cfg.max_iter = 80;
        match tv_kl(&fb, l2, 1e5, &cfg) {
            Ok(r) => println!("tv_kl l2={l2}: psnr={:6.2} it={} conv={} resid={:9.2e}", psnr(&r.u, &gtb).unwrap(), r.iterations, r.converged, r.history.last().unwrap().residual_norm),
            Err(e) => println!("tv_kl l2={l2}: ERROR {e}"),
        }
    }
}

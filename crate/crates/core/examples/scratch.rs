use tvic_core::metrics::psnr;
use tvic_core::noise::{corrupt, NoiseSpec};
use tvic_core::phantom;
use tvic_core::solvers::{ssn_l1l2, ssn_l2kl, tv_kl, tv_l1, tv_l2, SolverConfig};

fn main() {
    let gt = phantom::piecewise(64);
    let spec = NoiseSpec {
        sp_density: 0.05,
        gauss_var: 0.005,
        seed: 7,
        ..NoiseSpec::default()
    };
    let f = corrupt(&gt, &spec).unwrap().noisy;
    println!("noisy PSNR = {:.2}", psnr(&f, &gt).unwrap());

    for (l1, l2) in [
        (2.0, 20.0),
        (5.0, 40.0),
        (8.0, 60.0),
        (12.0, 80.0),
        (20.0, 120.0),
        (10.0, 100.0),
    ] {
        let cfg = SolverConfig::with_weights(l1, l2);
        let r = ssn_l1l2(&f, &cfg).unwrap();
        println!(
            "ssn_l1l2 l1={l1} l2={l2}: psnr={:.2} iters={} conv={} resid={:.2e} |v|1={:.2}",
            psnr(&r.u, &gt).unwrap(),
            r.iterations,
            r.converged,
            r.history.last().unwrap().residual_norm,
            tvic_core::grid::norm_l1(&r.v),
        );
    }

    for l1 in [0.8, 1.5, 2.5, 3.5] {
        let cfg = SolverConfig::default();
        let r = tv_l1(&f, l1, 1e5, &cfg).unwrap();
        println!(
            "tv_l1 l1={l1}: psnr={:.2} iters={} conv={} resid={:.2e}",
            psnr(&r.u, &gt).unwrap(),
            r.iterations,
            r.converged,
            r.history.last().unwrap().residual_norm,
        );
    }
    for l2 in [15.0, 30.0, 60.0, 120.0] {
        let cfg = SolverConfig::default();
        let r = tv_l2(&f, l2, 1e5, &cfg).unwrap();
        println!(
            "tv_l2 l2={l2}: psnr={:.2} iters={} conv={} resid={:.2e}",
            psnr(&r.u, &gt).unwrap(),
            r.iterations,
            r.converged,
            r.history.last().unwrap().residual_norm,
        );
    }

    // Poisson branch with iteration trace
    let gtb = phantom::blobs(64);
    let spec = NoiseSpec {
        gauss_var: 0.005,
        poisson: true,
        poisson_peak: 100.0,
        seed: 11,
        ..NoiseSpec::default()
    };
    let fb = corrupt(&gtb, &spec).unwrap().noisy;
    println!(
        "poisson noisy PSNR = {:.2}, f range [{:.3}, {:.3}]",
        psnr(&fb, &gtb).unwrap(),
        fb.data().iter().cloned().fold(f64::INFINITY, f64::min),
        fb.data().iter().cloned().fold(f64::NEG_INFINITY, f64::max)
    );
    for (l1, l2) in [(10.0, 8.0), (30.0, 25.0), (80.0, 60.0)] {
        let cfg = SolverConfig::with_weights(l1, l2);
        match ssn_l2kl(&fb, &cfg) {
            Ok(r) => {
                println!(
                    "ssn_l2kl l1={l1} l2={l2}: psnr={:.2} iters={} conv={} resid={:.2e} urange=[{:.3},{:.3}]",
                    psnr(&r.u, &gtb).unwrap(),
                    r.iterations,
                    r.converged,
                    r.history.last().unwrap().residual_norm,
                    r.u.data().iter().cloned().fold(f64::INFINITY, f64::min),
                    r.u.data().iter().cloned().fold(f64::NEG_INFINITY, f64::max),
                );
                for (i, h) in r.history.iter().enumerate() {
                    println!(
                        "   it{:2}: E={:12.4} step={:9.2e} resid={:9.2e} |Iu|={} |Iv|={}",
                        i + 1,
                        h.energy,
                        h.step_norm,
                        h.residual_norm,
                        h.active_a,
                        h.active_b
                    );
                }
            }
            Err(e) => println!("ssn_l2kl l1={l1} l2={l2}: ERROR {e}"),
        }
    }
    for l2 in [10.0, 40.0] {
        let cfg = SolverConfig::default();
        match tv_kl(&fb, l2, 1e5, &cfg) {
            Ok(r) => println!(
                "tv_kl l2={l2}: psnr={:.2} iters={} conv={} resid={:.2e}",
                psnr(&r.u, &gtb).unwrap(),
                r.iterations,
                r.converged,
                r.history.last().unwrap().residual_norm,
            ),
            Err(e) => println!("tv_kl l2={l2}: ERROR {e}"),
        }
    }
}

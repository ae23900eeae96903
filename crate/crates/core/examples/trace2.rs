use std::time::Instant;
use tvic_core::metrics::psnr;
use tvic_core::noise::{corrupt, NoiseSpec};
use tvic_core::phantom;
use tvic_core::solvers::{tv_gp, tv_l2, SolverConfig};

fn main() {
    let gtb = phantom::blobs(16);
    let spec = NoiseSpec { gauss_var: 0.005, poisson: true, poisson_peak: 100.0, seed: 11, ..NoiseSpec::default() };
    let fb = corrupt(&gtb, &spec).unwrap().noisy;
    let mut cfg = SolverConfig::default();
    cfg.damping = true;
    cfg.max_iter = 300;
    let sigma2 = 10.0;
    let t = Instant::now();
    let r_gp = tv_gp(&fb, sigma2, 1e5, &cfg, None).unwrap();
    let mean_u = r_gp.u.data().iter().sum::<f64>() / r_gp.u.len() as f64;
    let r_l2 = tv_l2(&fb, 1.0 / (sigma2 + mean_u), 1e5, &cfg).unwrap();
    let diff = r_gp.u.sub(&r_l2.u).unwrap().max_abs();
    println!("16x16 sigma2=10: linf={:.3e} gp(it={},conv={},resid={:.1e}) l2(it={},conv={},resid={:.1e}) took {:?}",
        diff, r_gp.iterations, r_gp.converged, r_gp.history.last().unwrap().residual_norm,
        r_l2.iterations, r_l2.converged, r_l2.history.last().unwrap().residual_norm, t.elapsed());

    // moderate count-unit run for sanity
    let gtb = phantom::blobs(32);
    let fb = corrupt(&gtb, &spec).unwrap().noisy;
    let peak = 100.0;
    let fbc = fb.map(|x| x * peak);
    let mut cfg2 = SolverConfig::default();
    cfg2.max_iter = 40;
    let t = Instant::now();
    let r = tv_gp(&fbc, 0.005 * peak * peak, 1e5, &cfg2, None).unwrap();
    let u_norm = r.u.map(|x| x / peak);
    println!("tv_gp counts 32x32: psnr={:.2} it={} conv={} took {:?}", psnr(&u_norm, &gtb).unwrap(), r.iterations, r.converged, t.elapsed());
}

//! Experiment harnesses: asymptotic single-noise recovery sweeps and
//! grid-search parameter learning.

use rayon::prelude::*;

use crate::grid::{norm_l1, norm_l2, norm_l2_sq, ImageGrid};
use crate::huber::huber_tv;
use crate::solvers::{ssn_l1l2, ssn_l2kl, tv_kl, tv_l1, tv_l1l2, tv_l2, SolveResult, SolverConfig};

/// Which infimal-convolution model a sweep runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IcModel {
    L1L2,
    L2Kl,
}

/// Which weight the sweep varies; the other stays fixed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepAxis {
    Lambda1,
    Lambda2,
}

/// One row of an asymptotics sweep.
#[derive(Debug, Clone)]
pub struct SweepPoint {
    pub lambda: f64,
    /// `||v||_1` of the noise channel.
    pub v_l1: f64,
    /// `||f - u - v||_2^2` of the second residual.
    pub resid_l2_sq: f64,
    /// `||u - u_single||_2` against the matching single-noise baseline.
    pub dist_to_single: f64,
    pub iterations: usize,
    pub converged: bool,
    pub error: Option<String>,
}

/// Runs the model along `lambdas` on the chosen axis and reports the noise
/// components plus the distance to the single-noise baseline solution the
/// model recovers in the limit. Failures are recorded per-row; the sweep
/// continues.
pub fn asymptotics_sweep(
    f: &ImageGrid,
    model: IcModel,
    axis: SweepAxis,
    fixed_lambda: f64,
    lambdas: &[f64],
    cfg: &SolverConfig,
) -> Vec<SweepPoint> {
    let single = single_noise_target(f, model, axis, fixed_lambda, cfg);

    lambdas
        .par_iter()
        .map(|&lambda| {
            let (l1, l2) = match axis {
                SweepAxis::Lambda1 => (lambda, fixed_lambda),
                SweepAxis::Lambda2 => (fixed_lambda, lambda),
            };
            let mut point_cfg = cfg.clone();
            point_cfg.weights.lambda1 = l1;
            point_cfg.weights.lambda2 = l2;
            let solve = match model {
                IcModel::L1L2 => ssn_l1l2(f, &point_cfg),
                IcModel::L2Kl => ssn_l2kl(f, &point_cfg),
            };
            match solve {
                Ok(result) => {
                    let resid = f
                        .sub(&result.u)
                        .and_then(|r| r.sub(&result.v))
                        .map(|r| norm_l2_sq(&r))
                        .unwrap_or(f64::NAN);
                    let dist = match &single {
                        Some(baseline) => result
                            .u
                            .sub(baseline)
                            .map(|d| norm_l2(&d))
                            .unwrap_or(f64::NAN),
                        None => f64::NAN,
                    };
                    SweepPoint {
                        lambda,
                        v_l1: norm_l1(&result.v),
                        resid_l2_sq: resid,
                        dist_to_single: dist,
                        iterations: result.iterations,
                        converged: result.converged,
                        error: None,
                    }
                }
                Err(e) => SweepPoint {
                    lambda,
                    v_l1: f64::NAN,
                    resid_l2_sq: f64::NAN,
                    dist_to_single: f64::NAN,
                    iterations: 0,
                    converged: false,
                    error: Some(e.to_string()),
                },
            }
        })
        .collect()
}

/// Baseline the sweep converges to: growing `lambda1` suppresses the first
/// noise channel, growing `lambda2` the second.
fn single_noise_target(
    f: &ImageGrid,
    model: IcModel,
    axis: SweepAxis,
    fixed_lambda: f64,
    cfg: &SolverConfig,
) -> Option<ImageGrid> {
    let result: Option<SolveResult> = match (model, axis) {
        (IcModel::L1L2, SweepAxis::Lambda1) => tv_l2(f, fixed_lambda, cfg.gamma, cfg).ok(),
        (IcModel::L1L2, SweepAxis::Lambda2) => tv_l1(f, fixed_lambda, cfg.gamma, cfg).ok(),
        (IcModel::L2Kl, SweepAxis::Lambda1) => tv_kl(f, fixed_lambda, cfg.gamma, cfg).ok(),
        // lambda2 -> inf forces v -> f - u, leaving the L2 term on f - u.
        (IcModel::L2Kl, SweepAxis::Lambda2) => tv_l2(f, fixed_lambda, cfg.gamma, cfg).ok(),
    };
    result.map(|r| r.u)
}

/// Model variants compared by the learning study.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LearnModel {
    TvIc,
    TvL1L2,
}

/// Cost functional assessed against the ground truth.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LearnCost {
    L2,
    HuberTv,
}

/// One cell of the grid search.
#[derive(Debug, Clone)]
pub struct GridCell {
    pub lambda1: f64,
    pub lambda2: f64,
    pub cost: f64,
    pub psnr: f64,
    pub iterations: usize,
    pub converged: bool,
    pub error: Option<String>,
}

/// Evaluates the cost surface over the cartesian product of the grids,
/// row-major in `(lambda1, lambda2)`. Cells run in parallel; the output order
/// is fixed by grid index.
pub fn learn_grid(
    f: &ImageGrid,
    ground_truth: &ImageGrid,
    model: LearnModel,
    cost: LearnCost,
    l1_grid: &[f64],
    l2_grid: &[f64],
    cfg: &SolverConfig,
) -> Vec<GridCell> {
    let cells: Vec<(f64, f64)> = l1_grid
        .iter()
        .flat_map(|&a| l2_grid.iter().map(move |&b| (a, b)))
        .collect();
    cells
        .par_iter()
        .map(|&(lambda1, lambda2)| {
            let solve = match model {
                LearnModel::TvIc => {
                    let mut c = cfg.clone();
                    c.weights.lambda1 = lambda1;
                    c.weights.lambda2 = lambda2;
                    ssn_l1l2(f, &c)
                }
                LearnModel::TvL1L2 => tv_l1l2(f, lambda1, lambda2, cfg.gamma, cfg),
            };
            match solve {
                Ok(result) => GridCell {
                    lambda1,
                    lambda2,
                    cost: evaluate_cost(&result.u, ground_truth, cost, cfg.gamma),
                    psnr: crate::metrics::psnr(&result.u, ground_truth).unwrap_or(f64::NAN),
                    iterations: result.iterations,
                    converged: result.converged,
                    error: None,
                },
                Err(e) => GridCell {
                    lambda1,
                    lambda2,
                    cost: f64::NAN,
                    psnr: f64::NAN,
                    iterations: 0,
                    converged: false,
                    error: Some(e.to_string()),
                },
            }
        })
        .collect()
}

pub fn evaluate_cost(u: &ImageGrid, ground_truth: &ImageGrid, cost: LearnCost, gamma: f64) -> f64 {
    match cost {
        LearnCost::L2 => u
            .sub(ground_truth)
            .map(|d| norm_l2_sq(&d))
            .unwrap_or(f64::NAN),
        LearnCost::HuberTv => u
            .sub(ground_truth)
            .map(|d| huber_tv(&d, gamma))
            .unwrap_or(f64::NAN),
    }
}

/// Minimiser over the successfully solved cells.
pub fn grid_argmin(cells: &[GridCell]) -> Option<&GridCell> {
    cells
        .iter()
        .filter(|c| c.error.is_none() && c.cost.is_finite())
        .min_by(|a, b| a.cost.partial_cmp(&b.cost).expect("finite costs"))
}

/// `count` logarithmically spaced values from `lo` to `hi` inclusive.
pub fn log_space(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    assert!(lo > 0.0 && hi > lo && count >= 1);
    if count == 1 {
        return vec![lo];
    }
    let (a, b) = (lo.ln(), hi.ln());
    (0..count)
        .map(|i| (a + (b - a) * i as f64 / (count - 1) as f64).exp())
        .collect()
}

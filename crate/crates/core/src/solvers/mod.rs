//! Semismooth Newton solvers for the mixed-noise models and the single/
//! additive-fidelity baselines.
//!
//! Every solver follows the same skeleton: linearise the primal-dual
//! optimality system, eliminate the dual increments, solve the reduced
//! symmetric positive-definite system in the primal increments by
//! preconditioned CG, update, and project the duals back onto their unit
//! balls. The Huberised terms carry the active-set modification that replaces
//! the dual by `q/max(1,|q|)` in the curvature.

mod banded;
mod gp;
mod l1l2;
mod l2kl;
mod pcg;
mod reduced;
mod tv_lin;

pub use gp::{gp_neg_log_likelihood, tv_gp};
pub use l1l2::{ssn_l1l2, tv_l1, tv_l1l2, tv_l2};
pub use l2kl::{ssn_l2kl, tv_kl, tv_l2kl};

use crate::error::{Error, Result};
use crate::fidelity::FidelityWeights;
use crate::grid::{DualField, ImageGrid};

/// Everything a solve needs besides the image: weights, smoothing, stopping
/// rules, penalty schedule and linear-solver settings.
#[derive(Debug, Clone)]
pub struct SolverConfig {
    pub weights: FidelityWeights,
    /// Huber smoothing parameter.
    pub gamma: f64,
    /// Relative l2 change of the stacked iterate below which the solve stops.
    pub tol: f64,
    pub max_iter: usize,
    /// Initial penalty weights (on `u < 0` and `v > f`) for the KL solvers.
    pub penalty_init: (f64, f64),
    /// Multiplier applied to the penalties every `penalty_every` iterations.
    pub penalty_growth: f64,
    pub penalty_every: usize,
    pub penalty_cap: f64,
    pub linsolve: LinSolveConfig,
    /// Armijo backtracking safeguard; the active-set modification alone
    /// usually suffices, so this defaults to off.
    pub damping: bool,
}

/// Inner linear solver selection. `Auto` takes the banded direct
/// factorisation up to 128x128 images and preconditioned CG beyond.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LinMethod {
    Auto,
    Direct,
    Pcg,
}

#[derive(Debug, Clone, Copy)]
pub struct LinSolveConfig {
    pub method: LinMethod,
    /// Relative residual target for the CG path.
    pub tol_rel: f64,
    pub max_iter: usize,
}

impl Default for LinSolveConfig {
    fn default() -> Self {
        Self {
            method: LinMethod::Auto,
            tol_rel: 1e-10,
            max_iter: 20_000,
        }
    }
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            weights: FidelityWeights {
                lambda1: 1.0,
                lambda2: 1.0,
            },
            gamma: 1e5,
            tol: 1e-6,
            max_iter: 35,
            penalty_init: (10.0, 100.0),
            penalty_growth: 10.0,
            penalty_every: 5,
            penalty_cap: 1e8,
            linsolve: LinSolveConfig::default(),
            damping: false,
        }
    }
}

impl SolverConfig {
    pub fn with_weights(lambda1: f64, lambda2: f64) -> Self {
        Self {
            weights: FidelityWeights { lambda1, lambda2 },
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0) {
            return Err(Error::InvalidParam("tol must be positive".into()));
        }
        if self.max_iter == 0 {
            return Err(Error::InvalidParam("max_iter must be at least 1".into()));
        }
        if !(self.gamma > 0.0) {
            return Err(Error::InvalidParam("gamma must be positive".into()));
        }
        if !(self.penalty_init.0 > 0.0) || !(self.penalty_init.1 > 0.0) {
            return Err(Error::InvalidParam(
                "penalty weights must be positive".into(),
            ));
        }
        if self.penalty_growth < 1.0 {
            return Err(Error::InvalidParam(
                "penalty growth must be at least 1".into(),
            ));
        }
        Ok(())
    }
}

/// Why a solve stopped.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Termination {
    Tolerance,
    MaxIter,
    LinSolveFailure,
}

impl std::fmt::Display for Termination {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Termination::Tolerance => write!(f, "tolerance"),
            Termination::MaxIter => write!(f, "max_iter"),
            Termination::LinSolveFailure => write!(f, "linsolve_failure"),
        }
    }
}

/// Per-iteration diagnostics.
#[derive(Debug, Clone, Copy)]
pub struct IterationRecord {
    pub energy: f64,
    pub step_norm: f64,
    /// l2 norm of the stacked nonlinear residual of the optimality system.
    pub residual_norm: f64,
    /// Active pixels of the TV Huber term for L1-L2-type solves, of the
    /// `u < 0` penalty set for KL-type solves.
    pub active_a: usize,
    /// Active pixels of the sparse Huber term (`V_gamma`) resp. of the
    /// `v > f` penalty set.
    pub active_b: usize,
}

/// Input irregularities encountered during a solve.
#[derive(Debug, Clone, Copy, Default)]
pub struct SolveFlags {
    /// Some pixel had `f <= 0` where the KL feasible set degenerates.
    pub degenerate_pixels: bool,
    /// Negative data values were clamped on input.
    pub clamped_input: bool,
    /// The series truncation of the Poisson-Gaussian likelihood left a tail
    /// term above 1e-15 of the sum.
    pub truncation_insufficient: bool,
}

#[derive(Debug, Clone)]
pub struct SolveResult {
    pub u: ImageGrid,
    /// Noise component; identically zero for the single-variable baselines.
    pub v: ImageGrid,
    /// TV dual, per-pixel magnitude at most 1 after projection.
    pub q: DualField,
    /// Sparse-term dual (L1-type fidelities only).
    pub p: Option<DualField>,
    pub iterations: usize,
    pub history: Vec<IterationRecord>,
    pub converged: bool,
    pub termination: Termination,
    pub flags: SolveFlags,
}

impl SolveResult {
    /// Ratios `|step_{k+1}| / |step_k|` of the final step norms, the local
    /// convergence-rate diagnostic.
    pub fn final_step_ratios(&self, count: usize) -> Vec<f64> {
        let steps: Vec<f64> = self
            .history
            .iter()
            .map(|r| r.step_norm)
            .filter(|s| *s > 0.0)
            .collect();
        let n = steps.len();
        if n < 2 {
            return Vec::new();
        }
        let take = count.min(n - 1);
        (n - take..n).map(|i| steps[i] / steps[i - 1]).collect()
    }
}

pub(crate) fn l2_norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

pub(crate) fn check_finite(x: &[f64], what: &'static str) -> Result<()> {
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite(what));
    }
    Ok(())
}

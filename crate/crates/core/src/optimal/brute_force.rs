//! Direct numerical optimal control: maximise the discretised work over
//! piecewise-constant protocols with a quasi-Newton method.
//!
//! This knows nothing about the Euler–Lagrange solution and serves as an
//! independent check of it.

use std::f64::consts::LN_2;

use argmin::core::{CostFunction, Executor, Gradient, State};
use argmin::solver::linesearch::MoreThuenteLineSearch;
use argmin::solver::quasinewton::LBFGS;
use serde::{Deserialize, Serialize};

use crate::engine::RateModel;
use crate::error::{Error, Result};
use crate::params::Branch;
use crate::protocol::{ControlSchedule, Protocol, Step};
use crate::stats::work_on_schedule;

/// Initial ramp heights above (empty branch) or below (occupied) ln 2.
const RESTART_HEIGHTS: [f64; 4] = [2.0, 3.0, 5.0, 8.0];
const FD_STEP: f64 = 1e-6;
const MAX_ITERS: u64 = 1000;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BruteForceResult {
    pub protocol: Protocol,
    pub work: f64,
    pub levels: Vec<f64>,
    /// Best work reached from each restart.
    pub restarts: Vec<f64>,
}

struct DiscreteWork {
    model: RateModel,
    dt: f64,
    p0: f64,
}

impl DiscreteWork {
    fn schedule(&self, levels: &[f64]) -> ControlSchedule {
        ControlSchedule {
            start_level: LN_2,
            steps: levels
                .iter()
                .map(|&level| Step {
                    level,
                    duration: self.dt,
                })
                .collect(),
            end_level: LN_2,
        }
    }

    fn work(&self, levels: &[f64]) -> f64 {
        work_on_schedule(&self.model, &self.schedule(levels), self.p0)
    }
}

impl CostFunction for DiscreteWork {
    type Param = Vec<f64>;
    type Output = f64;

    fn cost(&self, levels: &Self::Param) -> std::result::Result<f64, argmin::core::Error> {
        Ok(-self.work(levels))
    }
}

impl Gradient for DiscreteWork {
    type Param = Vec<f64>;
    type Gradient = Vec<f64>;

    fn gradient(&self, levels: &Self::Param) -> std::result::Result<Vec<f64>, argmin::core::Error> {
        let mut x = levels.clone();
        let mut g = Vec::with_capacity(x.len());
        for i in 0..x.len() {
            let orig = x[i];
            x[i] = orig + FD_STEP;
            let up = self.work(&x);
            x[i] = orig - FD_STEP;
            let down = self.work(&x);
            x[i] = orig;
            g.push(-(up - down) / (2.0 * FD_STEP));
        }
        Ok(g)
    }
}

/// Best piecewise-constant protocol with `n_steps` equal-length levels on the
/// empty branch.
pub fn brute_force_optimum(gamma_tau: f64, n_steps: usize) -> Result<BruteForceResult> {
    brute_force_optimum_for(gamma_tau, n_steps, Branch::Empty)
}

pub fn brute_force_optimum_for(gamma_tau: f64, n_steps: usize, branch: Branch) -> Result<BruteForceResult> {
    if !(gamma_tau.is_finite() && gamma_tau > 0.0) {
        return Err(Error::invalid("gamma_tau", format!("must be > 0, got {gamma_tau}")));
    }
    if !(8..=256).contains(&n_steps) {
        return Err(Error::invalid(
            "n_steps",
            format!("must lie in [8, 256], got {n_steps}"),
        ));
    }
    let problem = DiscreteWork {
        model: RateModel::default(),
        dt: gamma_tau / n_steps as f64,
        p0: branch.initial_probability(),
    };

    let mut best: Option<(f64, Vec<f64>)> = None;
    let mut restarts = Vec::with_capacity(RESTART_HEIGHTS.len());
    for height in RESTART_HEIGHTS {
        let top = LN_2 + branch.direction() * height;
        let init: Vec<f64> = (0..n_steps)
            .map(|i| top + (LN_2 - top) * (i as f64 + 0.5) / n_steps as f64)
            .collect();
        let (work, levels) = run_lbfgs(&problem, init)?;
        restarts.push(work);
        if best.as_ref().is_none_or(|(w, _)| work > *w) {
            best = Some((work, levels));
        }
    }
    let (work, levels) = best.expect("at least one restart");
    let dt = problem.dt;
    let pairs: Vec<(f64, f64)> = levels.iter().map(|&l| (l, dt)).collect();
    Ok(BruteForceResult {
        protocol: Protocol::from_levels(branch, LN_2, &pairs)?,
        work,
        levels,
        restarts,
    })
}

fn run_lbfgs(problem: &DiscreteWork, init: Vec<f64>) -> Result<(f64, Vec<f64>)> {
    let optimizer = |e: argmin::core::Error| Error::Optimizer(e.to_string());
    let solver = LBFGS::new(MoreThuenteLineSearch::new(), 10)
        .with_tolerance_grad(1e-9)
        .map_err(optimizer)?
        .with_tolerance_cost(1e-15)
        .map_err(optimizer)?;
    let fallback = init.clone();
    let result = Executor::new(
        DiscreteWork {
            model: problem.model,
            dt: problem.dt,
            p0: problem.p0,
        },
        solver,
    )
    .configure(|state| state.param(init).max_iters(MAX_ITERS))
    .run()
    .map_err(optimizer)?;
    let levels = result.state().get_best_param().cloned().unwrap_or(fallback);
    if levels.iter().any(|l| !l.is_finite()) {
        return Err(Error::Optimizer("non-finite level in optimum".into()));
    }
    Ok((problem.work(&levels), levels))
}

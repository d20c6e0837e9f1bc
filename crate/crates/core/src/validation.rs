//! Independent numerical checks of the whole pipeline.
//!
//! Each check compares a result against something computed a different way:
//! a fine-step Runge–Kutta integration of the rate equation, a direct
//! optimal-control search, Monte Carlo sampling, synthetic estimator data.
//! The CLI `validate` command and the acceptance tests both run these.

use std::fmt;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::analysis::{default_shifts, drift_sensitivity, log_grid, sweep, DriftOptions, SweepOptions};
use crate::engine::{fermi_unchecked, propagate_constant, RateModel, DEFAULT_GRID_POINTS};
use crate::error::Result;
use crate::optimal::{
    brute_force_optimum_for, build_optimal_protocol, first_integral, naive_ramp, optimize_kappa_for, KappaSearch,
};
use crate::params::{Branch, EnergyGap, OccupationProbability};
use crate::protocol::ShiftModel;
use crate::sim::CycleEngine;
use crate::stats::{variance_estimator, EnginePerformance, WorkStatistics};

#[derive(Debug, Clone, Serialize)]
pub struct CheckReport {
    pub id: u8,
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
    pub elapsed_ms: u128,
}

impl fmt::Display for CheckReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "[{}] {:>2} {}: {} ({} ms)",
            if self.passed { "PASS" } else { "FAIL" },
            self.id,
            self.name,
            self.detail,
            self.elapsed_ms
        )
    }
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct ValidationOptions {
    pub master_seed: u64,
    pub mc_cycles: u64,
    pub estimator_replicates: usize,
    pub grid_points: usize,
}

impl ValidationOptions {
    pub fn full(master_seed: u64) -> Self {
        ValidationOptions {
            master_seed,
            mc_cycles: 100_000,
            estimator_replicates: 10_000,
            grid_points: DEFAULT_GRID_POINTS,
        }
    }

    pub fn quick(master_seed: u64) -> Self {
        ValidationOptions {
            mc_cycles: 20_000,
            estimator_replicates: 2_000,
            ..Self::full(master_seed)
        }
    }
}

fn timed(
    id: u8,
    name: &'static str,
    budget: Option<Duration>,
    check: impl FnOnce() -> Result<(bool, String)>,
) -> CheckReport {
    let start = Instant::now();
    let outcome = check();
    let elapsed = start.elapsed();
    let (mut passed, mut detail) = match outcome {
        Ok(r) => r,
        Err(e) => (false, format!("error: {e}")),
    };
    if let Some(b) = budget {
        if elapsed > b {
            passed = false;
            detail += &format!("; exceeded time budget of {b:?}");
        }
    }
    CheckReport {
        id,
        name,
        passed,
        detail,
        elapsed_ms: elapsed.as_millis(),
    }
}

/// Classical RK4 on ṗ = r·f − (r·f + 1 − f)·p with frozen βε.
pub fn rk4_relax(model: &RateModel, p0: f64, beta_eps: f64, dt: f64, steps: usize) -> f64 {
    let f = fermi_unchecked(beta_eps);
    let rf = model.ratio * f;
    let rhs = |p: f64| rf - (rf + 1.0 - f) * p;
    let h = dt / steps as f64;
    let mut p = p0;
    for _ in 0..steps {
        let k1 = rhs(p);
        let k2 = rhs(p + 0.5 * h * k1);
        let k3 = rhs(p + 0.5 * h * k2);
        let k4 = rhs(p + h * k3);
        p += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    }
    p
}

/// Check 1: Closed-form propagation against fine-step RK4 on random cases.
pub fn propagator_oracle(seed: u64) -> CheckReport {
    timed(1, "propagator oracle", Some(Duration::from_secs(10)), || {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let model = RateModel::default();
        let mut worst = 0.0f64;
        for _ in 0..100 {
            let p0 = rng.random_range(0.0..=1.0);
            let eps = rng.random_range(-10.0..=10.0);
            let dt = rng.random_range(0.0..=20.0);
            let exact = propagate_constant(OccupationProbability::new(p0)?, EnergyGap::new(eps)?, dt)?.value();
            let steps = ((dt / 1e-3).ceil() as usize).max(1);
            worst = worst.max((exact - rk4_relax(&model, p0, eps, dt, steps)).abs());
        }
        Ok((
            worst < 1e-10,
            format!("max |closed form − RK4| = {worst:.2e} over 100 cases"),
        ))
    })
}

/// Check 2: the first integral along the emitted optimal protocols, with ṗ taken
/// from the rate equation at the emitted (p, βε) pairs.
pub fn euler_lagrange_conservation() -> CheckReport {
    timed(2, "Euler–Lagrange conservation", None, || {
        let model = RateModel::default();
        let mut worst = 0.0f64;
        let mut parts = Vec::new();
        for gt in [0.1, 1.0, 10.0] {
            for branch in Branch::BOTH {
                let (_, sol) = build_optimal_protocol(gt, 256, branch)?;
                let kappa = sol.kappa_tau.value();
                let mut dev = 0.0f64;
                for i in 1..sol.p_grid.len() - 1 {
                    let (p, eps) = (sol.p_grid[i], sol.eps_grid[i]);
                    let (h_in, h_out) = model.hazards(eps);
                    let pdot = h_in * (1.0 - p) - h_out * p;
                    dev = dev.max((first_integral(p, pdot) / kappa - 1.0).abs());
                }
                worst = worst.max(dev);
                parts.push(format!("γτ={gt} b{branch}: {dev:.1e}"));
            }
        }
        Ok((
            worst < 1e-4,
            format!("max relative deviation {worst:.2e} ({})", parts.join(", ")),
        ))
    })
}

/// Check 3: Closed-form optimum against the 64-level direct search at γτ = 1.
pub fn brute_force_agreement() -> CheckReport {
    timed(3, "closed form vs brute force", Some(Duration::from_secs(300)), || {
        let mut worst = 0.0f64;
        let mut parts = Vec::new();
        for branch in Branch::BOTH {
            let closed = optimize_kappa_for(1.0, branch, &KappaSearch::default())?.work;
            let direct = brute_force_optimum_for(1.0, 64, branch)?.work;
            let rel = (closed - direct).abs() / closed;
            worst = worst.max(rel);
            parts.push(format!("b{branch}: W={closed:.6} vs {direct:.6} ({rel:.1e})"));
        }
        Ok((worst < 5e-3, parts.join(", ")))
    })
}

/// Check 4: Optimal beats naive everywhere; η rises and power falls with γτ.
pub fn dominance_and_limits() -> CheckReport {
    timed(4, "dominance and limits", None, || {
        let mut grid = log_grid(0.1, 10.0, 16);
        grid.extend([0.2, 0.5, 1.0, 2.0, 5.0]);
        let rows = sweep(&grid, &SweepOptions::default())?;
        let mut problems = Vec::new();
        let mut cycle = Vec::new();
        for row in &rows {
            let (Some(opt), Some(naive)) = (row.optimal, row.naive) else {
                problems.push(format!(
                    "γτ={}: {}",
                    row.gamma_tau,
                    row.error.clone().unwrap_or_default()
                ));
                continue;
            };
            for branch in Branch::BOTH {
                if opt.branch(branch).work < naive.branch(branch).work {
                    problems.push(format!("γτ={} b{branch}: W_opt < W_naive", row.gamma_tau));
                }
            }
            cycle.push(opt.cycle);
        }
        for branch_perf in [
            cycle.clone(),
            rows.iter().filter_map(|r| r.optimal.map(|o| o.empty)).collect(),
            rows.iter().filter_map(|r| r.optimal.map(|o| o.occupied)).collect(),
        ] {
            if !branch_perf.windows(2).all(|w| w[1].efficiency > w[0].efficiency) {
                problems.push("η_opt not increasing".into());
            }
            if !branch_perf.windows(2).all(|w| w[1].power < w[0].power) {
                problems.push("P_opt not decreasing".into());
            }
        }
        let at = |g: f64| {
            cycle
                .iter()
                .find(|p| (p.gamma_tau - g).abs() < 1e-9)
                .map(|p| p.efficiency)
                .unwrap_or(f64::NAN)
        };
        let (e01, e1, e10) = (at(0.1), at(1.0), at(10.0));
        if !(e10 > e1 && e1 > e01) {
            problems.push("η(10) > η(1) > η(0.1) violated".into());
        }
        let detail = format!(
            "{} points; cycle η_opt(0.1, 1, 10) = ({e01:.4}, {e1:.4}, {e10:.4}){}",
            rows.len(),
            if problems.is_empty() {
                String::new()
            } else {
                format!("; {}", problems.join("; "))
            }
        );
        Ok((problems.is_empty(), detail))
    })
}

/// Check 5: η_opt/η_naive at γτ = 0.1 on the branch the naive ramp is defined for.
pub fn fast_efficiency_ratio() -> CheckReport {
    timed(5, "fast-regime efficiency ratio", None, || {
        let (opt, _) = build_optimal_protocol(0.1, 256, Branch::Empty)?;
        let w_opt = EnginePerformance::evaluate(&opt, DEFAULT_GRID_POINTS)?.work;
        let w_naive = EnginePerformance::evaluate(&naive_ramp(0.1, Branch::Empty)?, DEFAULT_GRID_POINTS)?.work;
        let ratio = w_opt / w_naive;
        Ok((
            (1.5..=2.1).contains(&ratio),
            format!("η_opt/η_naive = {ratio:.4} (W_opt = {w_opt:.6}, W_naive = {w_naive:.6})"),
        ))
    })
}

/// Check 6: FDR residual shrinks toward slow driving and is small at γτ = 50.
pub fn fluctuation_dissipation() -> CheckReport {
    timed(6, "fluctuation–dissipation", None, || {
        let gts = [5.0, 10.0, 20.0, 50.0];
        let mut series: [Vec<f64>; 3] = Default::default();
        for &gt in &gts {
            let mut perf = Vec::new();
            for branch in Branch::BOTH {
                let (p, _) = build_optimal_protocol(gt, 256, branch)?;
                perf.push(EnginePerformance::evaluate(&p, DEFAULT_GRID_POINTS)?);
            }
            let cycle = EnginePerformance::combine_branches(&perf[0], &perf[1]);
            series[0].push(perf[0].fdr_residual);
            series[1].push(perf[1].fdr_residual);
            series[2].push(cycle.fdr_residual);
        }
        let ok = series
            .iter()
            .all(|s| s.windows(2).all(|w| w[1].abs() < w[0].abs()) && s.last().unwrap().abs() < 0.15);
        let fmt = |s: &[f64]| s.iter().map(|v| format!("{v:+.4}")).collect::<Vec<_>>().join(" ");
        Ok((
            ok,
            format!(
                "residual at γτ = 5, 10, 20, 50: b0 [{}], b1 [{}], cycle [{}]",
                fmt(&series[0]),
                fmt(&series[1]),
                fmt(&series[2])
            ),
        ))
    })
}

/// Check 7: Monte Carlo mean and variance of βW against theory at γτ = 1.
pub fn montecarlo_consistency(options: &ValidationOptions) -> CheckReport {
    let budget = Duration::from_secs(120);
    timed(7, "Monte Carlo consistency", Some(budget), || {
        let gt = 1.0;
        let (p0, _) = build_optimal_protocol(gt, 256, Branch::Empty)?;
        let (p1, _) = build_optimal_protocol(gt, 256, Branch::Occupied)?;
        let engine = CycleEngine::new(&p0, &p1, options.grid_points)?;
        let theory = [
            EnginePerformance::evaluate(&p0, options.grid_points)?,
            EnginePerformance::evaluate(&p1, options.grid_points)?,
        ];
        let cycles = engine.run_batch(options.mc_cycles, options.master_seed)?;

        let all: Vec<f64> = cycles.iter().map(|c| c.work()).collect();
        let stats = WorkStatistics::from_samples(&all)?;
        let w_theory = 0.5 * (theory[0].work + theory[1].work);
        let z_mean = (stats.mean_work - w_theory) / stats.mean_std_error;
        let mut ok = z_mean.abs() < 3.0;
        let mut parts = vec![format!(
            "N={} mean {:.5} vs {:.5} (z={z_mean:+.2})",
            stats.n_samples, stats.mean_work, w_theory
        )];
        for branch in Branch::BOTH {
            let works: Vec<f64> = cycles
                .iter()
                .filter(|c| c.measured_bit == branch)
                .map(|c| c.work())
                .collect();
            let v = variance_estimator(&works)?;
            let dp_mc = v.variance / gt;
            let dp_theory = theory[branch.bit() as usize].fluctuation;
            let z = (dp_mc - dp_theory) / (v.std_error / gt);
            ok &= z.abs() < 3.0;
            parts.push(format!("b{branch} ΔP {dp_mc:.5} vs {dp_theory:.5} (z={z:+.2})"));
        }
        Ok((ok, parts.join("; ")))
    })
}

/// Check 8: Drift exponents of power and ΔP at γτ ∈ {0.1, 1, 10}.
pub fn drift_scaling() -> CheckReport {
    timed(8, "drift scaling", None, || {
        let opts = DriftOptions::default();
        let mut ok = true;
        let mut parts = Vec::new();
        for gt in [0.1, 1.0, 10.0] {
            let d = drift_sensitivity(gt, &default_shifts(), &opts)?;
            let e = d.fitted_exponents;
            ok &= (e.power - 2.0).abs() <= 0.2 && (e.fluctuation - 1.0).abs() <= 0.2;
            parts.push(format!("γτ={gt}: {:.3}/{:.3}", e.power, e.fluctuation));
        }
        let full = DriftOptions {
            model: ShiftModel::Full,
            ..opts
        };
        let f = drift_sensitivity(1.0, &default_shifts(), &full)?.fitted_exponents;
        Ok((
            ok,
            format!(
                "power/fluctuation exponents, interior shift: {}; endpoints also shifted (γτ=1): {:.3}/{:.3}",
                parts.join(", "),
                f.power,
                f.fluctuation
            ),
        ))
    })
}

/// Check 9: Var(V) formulas against the empirical spread of V on uniform data.
pub fn estimator_calibration(options: &ValidationOptions) -> CheckReport {
    timed(9, "estimator calibration", None, || {
        let reps = options.estimator_replicates;
        let n = 100;
        let mut rng = ChaCha8Rng::seed_from_u64(options.master_seed);
        let mut vs = Vec::with_capacity(reps);
        let (mut central, mut raw) = (0.0, 0.0);
        for _ in 0..reps {
            let xs: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
            let v = variance_estimator(&xs)?;
            vs.push(v.variance);
            central += v.var_of_v_central;
            raw += v.var_of_v_raw_moment;
        }
        central /= reps as f64;
        raw /= reps as f64;
        let mean_v = vs.iter().sum::<f64>() / reps as f64;
        let empirical = vs.iter().map(|v| (v - mean_v).powi(2)).sum::<f64>() / (reps - 1) as f64;
        let dev_central = central / empirical - 1.0;
        let dev_raw = raw / empirical - 1.0;
        Ok((
            dev_central.abs() < 0.1,
            format!(
                "empirical Var(V) = {empirical:.3e}; central-moment {central:.3e} ({:+.1}%); raw-moment form {raw:.3e} ({:+.1}%)",
                100.0 * dev_central,
                100.0 * dev_raw
            ),
        ))
    })
}

/// Checks 1–9. Determinism of the CLI outputs is checked by the CLI itself.
pub fn run_all(options: &ValidationOptions) -> Vec<CheckReport> {
    vec![
        propagator_oracle(options.master_seed),
        euler_lagrange_conservation(),
        brute_force_agreement(),
        dominance_and_limits(),
        fast_efficiency_ratio(),
        fluctuation_dissipation(),
        montecarlo_consistency(options),
        drift_scaling(),
        estimator_calibration(options),
    ]
}

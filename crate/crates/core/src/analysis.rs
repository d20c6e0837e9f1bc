//! Duration sweeps comparing optimal and naive driving, and sensitivity of the
//! optimal protocol to a constant calibration offset βδ.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::optimal::{build_optimal_protocol_with, naive_ramp, SolverSettings};
use crate::params::Branch;
use crate::protocol::{ControlSchedule, Protocol, ShiftModel};
use crate::sim::{CycleEngine, CycleResult};
use crate::stats::{EnginePerformance, WorkStatistics};
use crate::DEFAULT_GRID_POINTS;

/// Performance of a pair of branch protocols and their fair-coin average.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BranchPerformance {
    pub empty: EnginePerformance,
    pub occupied: EnginePerformance,
    pub cycle: EnginePerformance,
}

impl BranchPerformance {
    pub fn new(empty: EnginePerformance, occupied: EnginePerformance) -> Self {
        BranchPerformance {
            empty,
            occupied,
            cycle: EnginePerformance::combine_branches(&empty, &occupied),
        }
    }

    pub fn branch(&self, branch: Branch) -> &EnginePerformance {
        match branch {
            Branch::Empty => &self.empty,
            Branch::Occupied => &self.occupied,
        }
    }

    fn of_protocols(protocols: &[Protocol; 2], grid_points: usize) -> Result<Self> {
        Ok(Self::new(
            EnginePerformance::evaluate(&protocols[0], grid_points)?,
            EnginePerformance::evaluate(&protocols[1], grid_points)?,
        ))
    }
}

/// Monte Carlo statistics of one sweep point, split by measured bit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MonteCarloPerformance {
    pub empty: WorkStatistics,
    pub occupied: WorkStatistics,
    pub performance: BranchPerformance,
}

impl MonteCarloPerformance {
    pub fn from_cycles(cycles: &[CycleResult], gamma_tau: f64) -> Result<Self> {
        let works = |b: Branch| -> Vec<f64> {
            cycles
                .iter()
                .filter(|c| c.measured_bit == b)
                .map(CycleResult::work)
                .collect()
        };
        let empty = WorkStatistics::from_samples(&works(Branch::Empty))?;
        let occupied = WorkStatistics::from_samples(&works(Branch::Occupied))?;
        Ok(MonteCarloPerformance {
            empty,
            occupied,
            performance: BranchPerformance::new(empty.performance(gamma_tau), occupied.performance(gamma_tau)),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MonteCarloOptions {
    pub n_cycles: u64,
    pub master_seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepOptions {
    /// How each optimal protocol is solved and sampled.
    pub solver: SolverSettings,
    /// Step count used to evaluate protocols.
    pub grid_points: usize,
    pub montecarlo: Option<MonteCarloOptions>,
}

impl Default for SweepOptions {
    fn default() -> Self {
        SweepOptions {
            solver: SolverSettings::default(),
            grid_points: DEFAULT_GRID_POINTS,
            montecarlo: None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepRow {
    pub gamma_tau: f64,
    pub optimal: Option<BranchPerformance>,
    pub naive: Option<BranchPerformance>,
    pub montecarlo: Option<MonteCarloPerformance>,
    /// Set when any part of this point failed; the other fields hold what
    /// could be computed.
    pub error: Option<String>,
}

/// `n` logarithmically spaced values from `lo` to `hi` inclusive.
pub fn log_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => vec![],
        1 => vec![lo],
        _ => {
            let (a, b) = (lo.ln(), hi.ln());
            let mut g: Vec<f64> = (0..n)
                .map(|i| (a + (b - a) * i as f64 / (n - 1) as f64).exp())
                .collect();
            g[0] = lo;
            g[n - 1] = hi;
            g
        }
    }
}

/// Optimal protocols for both branches.
pub fn optimal_pair(gamma_tau: f64, solver: &SolverSettings) -> Result<[Protocol; 2]> {
    Ok([
        build_optimal_protocol_with(gamma_tau, Branch::Empty, solver)?.0,
        build_optimal_protocol_with(gamma_tau, Branch::Occupied, solver)?.0,
    ])
}

pub fn naive_pair(gamma_tau: f64) -> Result<[Protocol; 2]> {
    Ok([
        naive_ramp(gamma_tau, Branch::Empty)?,
        naive_ramp(gamma_tau, Branch::Occupied)?,
    ])
}

/// Theory (and optionally Monte Carlo) performance at each duration, sorted
/// by γτ. Failures are recorded per row.
pub fn sweep(gamma_taus: &[f64], options: &SweepOptions) -> Result<Vec<SweepRow>> {
    if gamma_taus.is_empty() {
        return Err(Error::invalid("gamma_tau_list", "must not be empty"));
    }
    if let Some(g) = gamma_taus.iter().find(|g| !(g.is_finite() && **g > 0.0)) {
        return Err(Error::invalid("gamma_tau_list", format!("values must be > 0, got {g}")));
    }
    if let Some(mc) = &options.montecarlo {
        if mc.n_cycles < 2 {
            return Err(Error::invalid("n_cycles", "must be >= 2"));
        }
    }
    let mut sorted = gamma_taus.to_vec();
    sorted.sort_by(f64::total_cmp);
    Ok(sorted
        .par_iter()
        .enumerate()
        .map(|(i, &g)| sweep_point(g, i as u64, options))
        .collect())
}

fn sweep_point(gamma_tau: f64, index: u64, options: &SweepOptions) -> SweepRow {
    let mut row = SweepRow {
        gamma_tau,
        optimal: None,
        naive: None,
        montecarlo: None,
        error: None,
    };
    let mut errors = Vec::new();

    match naive_pair(gamma_tau).and_then(|p| BranchPerformance::of_protocols(&p, options.grid_points)) {
        Ok(perf) => row.naive = Some(perf),
        Err(e) => errors.push(format!("naive: {e}")),
    }
    match optimal_pair(gamma_tau, &options.solver) {
        Ok(pair) => {
            match BranchPerformance::of_protocols(&pair, options.grid_points) {
                Ok(perf) => row.optimal = Some(perf),
                Err(e) => errors.push(format!("optimal: {e}")),
            }
            if let Some(mc) = &options.montecarlo {
                let seed = mc.master_seed.wrapping_add(index);
                let run = CycleEngine::new(&pair[0], &pair[1], options.grid_points)
                    .and_then(|engine| engine.run_batch(mc.n_cycles, seed))
                    .and_then(|cycles| MonteCarloPerformance::from_cycles(&cycles, gamma_tau));
                match run {
                    Ok(m) => row.montecarlo = Some(m),
                    Err(e) => errors.push(format!("montecarlo: {e}")),
                }
            }
        }
        Err(e) => errors.push(format!("optimal: {e}")),
    }
    if !errors.is_empty() {
        row.error = Some(errors.join("; "));
    }
    row
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DriftOptions {
    pub solver: SolverSettings,
    pub grid_points: usize,
    pub model: ShiftModel,
    pub branch: Branch,
    /// Fit window on |βδ|.
    pub fit_min: f64,
    pub fit_max: f64,
}

impl Default for DriftOptions {
    fn default() -> Self {
        DriftOptions {
            solver: SolverSettings::default(),
            grid_points: DEFAULT_GRID_POINTS,
            model: ShiftModel::Interior,
            branch: Branch::Empty,
            fit_min: 0.01,
            fit_max: 0.1,
        }
    }
}

/// 0 and ±{0.005, 0.01, 0.02, 0.03, 0.05, 0.07, 0.1, 0.2}, ascending.
pub fn default_shifts() -> Vec<f64> {
    let mags = [0.005, 0.01, 0.02, 0.03, 0.05, 0.07, 0.1, 0.2];
    let mut v: Vec<f64> = mags.iter().rev().map(|m| -m).collect();
    v.push(0.0);
    v.extend(mags);
    v
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FittedExponents {
    pub power: f64,
    pub fluctuation: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DriftResult {
    pub gamma_tau: f64,
    pub shift_values: Vec<f64>,
    pub rel_power_change: Vec<f64>,
    pub rel_fluct_change: Vec<f64>,
    pub fitted_exponents: FittedExponents,
}

/// Relative change of power and ΔP of the optimal protocol under constant
/// shifts βε → βε + βδ.
pub fn drift_sensitivity(gamma_tau: f64, shifts: &[f64], options: &DriftOptions) -> Result<DriftResult> {
    let (protocol, _) = build_optimal_protocol_with(gamma_tau, options.branch, &options.solver)?;
    let schedule = ControlSchedule::from_protocol(&protocol, options.grid_points)?;
    let mut result = drift_on_schedule(&schedule, options.branch, shifts, options)?;
    result.gamma_tau = gamma_tau;
    Ok(result)
}

pub fn drift_on_schedule(
    schedule: &ControlSchedule,
    branch: Branch,
    shifts: &[f64],
    options: &DriftOptions,
) -> Result<DriftResult> {
    if shifts.iter().any(|s| !s.is_finite()) {
        return Err(Error::invalid("shift_list", "shifts must be finite"));
    }
    let p0 = branch.initial_probability();
    let base = EnginePerformance::evaluate_schedule(schedule, p0)?;
    let mut rel_power_change = Vec::with_capacity(shifts.len());
    let mut rel_fluct_change = Vec::with_capacity(shifts.len());
    for &shift in shifts {
        let perf = EnginePerformance::evaluate_schedule(&schedule.shifted(shift, options.model), p0)?;
        rel_power_change.push(relative(perf.power, base.power));
        rel_fluct_change.push(relative(perf.fluctuation, base.fluctuation));
    }
    let fit = |changes: &[f64]| {
        let points: Vec<(f64, f64)> = shifts
            .iter()
            .zip(changes)
            .filter(|(s, c)| {
                let a = s.abs();
                a >= options.fit_min - 1e-15 && a <= options.fit_max + 1e-15 && **c != 0.0
            })
            .map(|(s, c)| (s.abs().ln(), c.abs().ln()))
            .collect();
        log_log_slope(&points)
    };
    Ok(DriftResult {
        gamma_tau: schedule.duration(),
        fitted_exponents: FittedExponents {
            power: fit(&rel_power_change),
            fluctuation: fit(&rel_fluct_change),
        },
        shift_values: shifts.to_vec(),
        rel_power_change,
        rel_fluct_change,
    })
}

fn relative(value: f64, base: f64) -> f64 {
    if base == 0.0 {
        value - base
    } else {
        (value - base) / base
    }
}

/// Least-squares slope; NaN when fewer than two distinct abscissae.
pub fn log_log_slope(points: &[(f64, f64)]) -> f64 {
    let n = points.len() as f64;
    if points.len() < 2 {
        return f64::NAN;
    }
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    if sxx == 0.0 {
        f64::NAN
    } else {
        sxy / sxx
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParetoProbe {
    /// Signed shift that was chosen.
    pub shift: f64,
    /// (P₀ − P)/P₀, positive when power is lost.
    pub power_loss: f64,
    /// (ΔP − ΔP₀)/ΔP₀, never positive.
    pub fluct_change: f64,
}

/// Trade of power against fluctuations for a shift of magnitude |βδ|, with
/// the sign that lowers ΔP.
pub fn pareto_probe(gamma_tau: f64, shift: f64, options: &DriftOptions) -> Result<ParetoProbe> {
    let mag = shift.abs();
    let d = drift_sensitivity(gamma_tau, &[-mag, mag], options)?;
    let pick = if d.rel_fluct_change[0] <= d.rel_fluct_change[1] {
        0
    } else {
        1
    };
    Ok(ParetoProbe {
        shift: d.shift_values[pick],
        power_loss: -d.rel_power_change[pick],
        fluct_change: d.rel_fluct_change[pick].min(0.0),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn log_grid_endpoints() {
        let g = log_grid(0.1, 10.0, 16);
        assert_eq!(g.len(), 16);
        assert_eq!((g[0], g[15]), (0.1, 10.0));
        assert!(g.windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn slope_of_power_law() {
        let pts: Vec<(f64, f64)> = [0.01f64, 0.03, 0.1]
            .iter()
            .map(|x| (x.ln(), (3.0 * x * x).ln()))
            .collect();
        assert!((log_log_slope(&pts) - 2.0).abs() < 1e-12);
        assert!(log_log_slope(&pts[..1]).is_nan());
    }

    #[test]
    fn default_shifts_are_symmetric() {
        let s = default_shifts();
        assert!(s.contains(&0.0));
        for x in &s {
            assert!(s.contains(&-x));
        }
    }

    #[test]
    fn zero_shift_is_zero_change() {
        let d = drift_sensitivity(1.0, &[0.0, 0.05], &DriftOptions::default()).unwrap();
        assert_eq!(d.rel_power_change[0], 0.0);
        assert_eq!(d.rel_fluct_change[0], 0.0);
    }

    #[test]
    fn sweep_rejects_bad_input() {
        assert!(sweep(&[], &SweepOptions::default()).is_err());
        assert!(sweep(&[1.0, -1.0], &SweepOptions::default()).is_err());
    }
}

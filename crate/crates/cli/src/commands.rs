//! The subcommands. Each returns its files as bytes; nothing here writes to
//! disk.

use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::Context;
use rayon::prelude::*;
use serde::Serialize;
use serde_json::json;
use szilard_core::analysis::{
    drift_sensitivity, sweep, DriftOptions, DriftResult, MonteCarloOptions, SweepOptions, SweepRow,
};
use szilard_core::io::{self, Family, Units};
use szilard_core::optimal::{build_optimal_protocol_with, require_supported_ratio};
use szilard_core::sim::run_protocol_batch;
use szilard_core::stats::WorkStatistics;
use szilard_core::validation::{self, CheckReport, ValidationOptions};
use szilard_core::{
    Branch, ControlSchedule, CycleEngine, CycleResult, EnginePerformance, PhysicalParams, Protocol, RateModel,
};

use crate::config::{Overrides, RunConfig};
use crate::{Command, Outcome, OutputFile, UsageError};

const UNITS_NOTE: &str = "energies in units of k_B T, times in units of 1/Gamma_out";
const CYCLE_NOTE: &str = "cycle-level values weight the two measurement outcomes 1/2 each";

/// Echo of everything that determined a run. Thread count is left out on
/// purpose: it never changes the output.
#[derive(Serialize)]
struct Metadata<'a> {
    program: &'static str,
    version: &'static str,
    command: &'static str,
    arguments: serde_json::Value,
    master_seed: u64,
    si_columns: bool,
    units: &'static str,
    config: &'a RunConfig,
}

impl<'a> Metadata<'a> {
    fn new(command: &'static str, arguments: serde_json::Value, config: &'a RunConfig, si: bool) -> Self {
        Metadata {
            program: "szilard",
            version: env!("CARGO_PKG_VERSION"),
            command,
            arguments,
            master_seed: config.master_seed,
            si_columns: si,
            units: UNITS_NOTE,
            config,
        }
    }
}

fn json_bytes<T: Serialize>(value: &T) -> anyhow::Result<Vec<u8>> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    Ok(text.into_bytes())
}

fn file(name: impl Into<String>, contents: Vec<u8>) -> OutputFile {
    OutputFile {
        name: name.into(),
        contents,
    }
}

fn units(params: &PhysicalParams, si: bool) -> Units<'_> {
    Units {
        si: si.then_some(params),
    }
}

fn optimal_params(config: &RunConfig) -> anyhow::Result<PhysicalParams> {
    let params = config.physical()?;
    require_supported_ratio(params.ratio())?;
    Ok(params)
}

pub fn dispatch(command: &Command, config: &RunConfig, overrides: &Overrides) -> anyhow::Result<Outcome> {
    let si = overrides.si;
    match command {
        Command::Protocol {
            gamma_tau,
            branch,
            stem,
        } => protocol(config, *gamma_tau, Branch::from_bit(*branch)?, stem, si),
        Command::Sweep { montecarlo } => sweep_cmd(config, *montecarlo, si),
        Command::Simulate { protocols, dump_jumps } => {
            let loaded = protocols
                .iter()
                .map(|p| load_protocol(p))
                .collect::<anyhow::Result<Vec<_>>>()?;
            simulate(config, &loaded, *dump_jumps, si)
        }
        Command::Drift { branch } => drift(config, Branch::from_bit(*branch)?),
        Command::Validate => validate(config, overrides.quick),
    }
}

// ---------------------------------------------------------------- protocol

pub fn protocol(config: &RunConfig, gamma_tau: f64, branch: Branch, stem: &str, si: bool) -> anyhow::Result<Outcome> {
    if !(gamma_tau.is_finite() && gamma_tau > 0.0) {
        return Err(UsageError(format!("--gamma-tau must be finite and > 0, got {gamma_tau}")).into());
    }
    if stem.is_empty() || stem.contains(['/', '\\']) {
        return Err(UsageError(format!("--stem must be a plain file name, got `{stem}`")).into());
    }
    let params = optimal_params(config)?;
    let (protocol, solution) = build_optimal_protocol_with(gamma_tau, branch, &config.solver())?;
    let perf = EnginePerformance::evaluate(&protocol, config.grid_points)?;

    let args = json!({ "gamma_tau": gamma_tau, "branch": branch, "stem": stem });
    let metadata = Metadata::new("protocol", args, config, si);

    #[derive(Serialize)]
    struct ProtocolFile<'a> {
        #[serde(flatten)]
        protocol: &'a Protocol,
        kappa_tau: f64,
        predicted_work: f64,
        saturated: bool,
        metadata: Metadata<'a>,
    }
    let json_file = ProtocolFile {
        protocol: &protocol,
        kappa_tau: solution.kappa_tau.value(),
        predicted_work: solution.predicted_work,
        saturated: solution.saturated,
        metadata,
    };

    let mut csv = Vec::new();
    io::write_protocol_csv(&mut csv, &solution, units(&params, si))?;

    let mut summary = json!({
        "gamma_tau": gamma_tau,
        "branch": branch,
        "kappa_tau": solution.kappa_tau.value(),
        "work_reduced": perf.work,
        "efficiency": perf.efficiency,
        "power_reduced": perf.power,
        "delta_p_reduced": perf.fluctuation,
        "fdr_residual": perf.fdr_residual,
    });
    if si {
        summary["work_joules"] = json!(params.joules(perf.work));
        summary["power_watts"] = json!(params.watts(perf.power));
    }

    Ok(Outcome {
        files: vec![
            file(format!("{stem}.json"), json_bytes(&json_file)?),
            file(format!("{stem}.csv"), csv),
        ],
        stdout: format!("{}\n", serde_json::to_string(&summary)?),
        failures: vec![],
    })
}

// ------------------------------------------------------------------- sweep

pub fn sweep_cmd(config: &RunConfig, montecarlo: bool, si: bool) -> anyhow::Result<Outcome> {
    if montecarlo && config.n_cycles < 2 {
        return Err(UsageError(format!("--montecarlo needs n_cycles >= 2, got {}", config.n_cycles)).into());
    }
    let params = optimal_params(config)?;
    let options = SweepOptions {
        solver: config.solver(),
        grid_points: config.grid_points,
        montecarlo: montecarlo.then_some(MonteCarloOptions {
            n_cycles: config.n_cycles,
            master_seed: config.master_seed,
        }),
    };
    let rows = sweep(&config.tau_list, &options)?;
    let u = units(&params, si);

    let table = |family| -> anyhow::Result<Vec<u8>> {
        let mut buf = Vec::new();
        io::write_sweep_csv(&mut buf, &rows, family, u)?;
        Ok(buf)
    };
    let mut files = vec![
        file("sweep.csv", table(Family::Optimal)?),
        file("sweep_naive.csv", table(Family::Naive)?),
    ];
    if montecarlo {
        files.push(file("sweep_montecarlo.csv", table(Family::MonteCarlo)?));
    }

    let cycle: Vec<_> = rows
        .iter()
        .map(|r| {
            json!({
                "gamma_tau": r.gamma_tau,
                "optimal": r.optimal.map(|p| p.cycle),
                "naive": r.naive.map(|p| p.cycle),
                "montecarlo": r.montecarlo.map(|m| m.performance.cycle),
            })
        })
        .collect();
    let failures: Vec<String> = rows
        .iter()
        .filter_map(|r| r.error.as_ref().map(|e| format!("gamma_tau = {}: {e}", r.gamma_tau)))
        .collect();
    let args = json!({ "montecarlo": montecarlo });
    let meta = json!({
        "metadata": Metadata::new("sweep", args, config, si),
        "row_seed": "Monte Carlo seed of point i (ascending gamma_tau) is master_seed + i",
        "cycle_convention": CYCLE_NOTE,
        "cycle": cycle,
        "errors": failures,
    });
    files.push(file("sweep_metadata.json", json_bytes(&meta)?));

    Ok(Outcome {
        files,
        stdout: sweep_table(&rows),
        failures,
    })
}

fn sweep_table(rows: &[SweepRow]) -> String {
    let mut s = format!(
        "{:>10} {:>10} {:>10} {:>10} {:>10}\n",
        "gamma_tau", "W_opt", "W_naive", "eta_opt", "P_opt"
    );
    for r in rows {
        let (w, e, p) = r
            .optimal
            .map(|o| (o.cycle.work, o.cycle.efficiency, o.cycle.power))
            .unwrap_or((f64::NAN, f64::NAN, f64::NAN));
        let wn = r.naive.map(|n| n.cycle.work).unwrap_or(f64::NAN);
        s += &format!("{:>10.4} {w:>10.6} {wn:>10.6} {e:>10.6} {p:>10.6}\n", r.gamma_tau);
    }
    s
}

// ---------------------------------------------------------------- simulate

pub fn load_protocol(path: &Path) -> anyhow::Result<(PathBuf, Protocol)> {
    let text = std::fs::read_to_string(path).map_err(|e| UsageError(format!("reading {}: {e}", path.display())))?;
    let protocol = Protocol::from_json(&text).with_context(|| format!("protocol file {}", path.display()))?;
    Ok((path.to_path_buf(), protocol))
}

#[derive(Serialize)]
struct BranchSummary {
    branch: Branch,
    n_samples: usize,
    statistics: Option<WorkStatistics>,
    theory: EnginePerformance,
    /// (mean − theory) / standard error.
    mean_z: Option<f64>,
}

#[derive(Serialize)]
struct ErrorBars {
    mean_std_error: f64,
    variance_std_error_central: f64,
    variance_std_error_raw_moment: f64,
}

impl ErrorBars {
    fn of(stats: &WorkStatistics) -> Self {
        ErrorBars {
            mean_std_error: stats.mean_std_error,
            variance_std_error_central: stats.var_work.std_error,
            variance_std_error_raw_moment: stats.var_work.std_error_raw_moment(),
        }
    }
}

/// Simulates `n_cycles` cycles. One protocol: every cycle uses it. Two
/// protocols (one per branch): a fair-coin measurement picks the branch.
pub fn simulate(
    config: &RunConfig,
    protocols: &[(PathBuf, Protocol)],
    dump_jumps: bool,
    si: bool,
) -> anyhow::Result<Outcome> {
    if config.n_cycles < 5 {
        return Err(UsageError(format!("simulate needs n_cycles >= 5, got {}", config.n_cycles)).into());
    }
    let params = config.physical()?;
    let model = RateModel::from_params(&params);
    let seed = config.master_seed;

    let (mode, cycles, gamma_tau) = match protocols {
        [(_, p)] => (
            "single_branch",
            run_protocol_batch(&model, p, config.grid_points, config.n_cycles, seed)?,
            p.gamma_tau,
        ),
        [(_, a), (_, b)] => {
            let (empty, occupied) = if a.branch == Branch::Empty { (a, b) } else { (b, a) };
            let engine = CycleEngine::new(empty, occupied, config.grid_points)?.with_model(model);
            ("cycle", engine.run_batch(config.n_cycles, seed)?, engine.gamma_tau())
        }
        _ => return Err(UsageError("simulate takes one or two --protocol files".into()).into()),
    };

    let works: Vec<f64> = cycles.iter().map(CycleResult::work).collect();
    let overall = WorkStatistics::from_samples(&works)?;

    let mut branches = Vec::new();
    for (_, p) in protocols {
        let schedule = ControlSchedule::from_protocol(p, config.grid_points)?;
        let theory = EnginePerformance::evaluate_schedule_with(&model, &schedule, p.branch.initial_probability())?;
        let w: Vec<f64> = cycles
            .iter()
            .filter(|c| c.measured_bit == p.branch)
            .map(CycleResult::work)
            .collect();
        let statistics = WorkStatistics::from_samples(&w).ok();
        branches.push(BranchSummary {
            branch: p.branch,
            n_samples: w.len(),
            mean_z: statistics.map(|s| (s.mean_work - theory.work) / s.mean_std_error),
            statistics,
            theory,
        });
    }
    branches.sort_by_key(|b| b.branch.bit());

    let files_arg: Vec<String> = protocols.iter().map(|(p, _)| p.display().to_string()).collect();
    let args = json!({ "protocols": files_arg, "dump_jumps": dump_jumps });
    let statistics = json!({
        "metadata": Metadata::new("simulate", args, config, si),
        "mode": mode,
        "gamma_tau": gamma_tau,
        "rate_ratio": model.ratio,
        "n_samples": overall.n_samples,
        "work": overall,
        "error_bars": ErrorBars::of(&overall),
        "branches": branches,
    });

    let mut samples = Vec::new();
    io::write_samples_csv(&mut samples, &cycles, units(&params, si))?;
    let mut files = vec![
        file("samples.csv", samples),
        file("statistics.json", json_bytes(&statistics)?),
    ];
    if dump_jumps {
        let mut lines = String::new();
        for c in &cycles {
            let line = json!({
                "cycle_index": c.cycle_index,
                "measured_bit": c.measured_bit,
                "initial_occupation": c.trajectory.initial_occupation,
                "jump_times": c.trajectory.jump_times,
                "work_reduced": c.trajectory.work,
            });
            lines += &serde_json::to_string(&line)?;
            lines.push('\n');
        }
        files.push(file("jumps.jsonl", lines.into_bytes()));
    }

    let mut stdout = format!(
        "{} cycles, gamma_tau = {gamma_tau}: mean work {:.6} +- {:.6}, variance {:.6} +- {:.6}\n",
        overall.n_samples,
        overall.mean_work,
        overall.mean_std_error,
        overall.var_work.variance,
        overall.var_work.std_error
    );
    for b in &branches {
        if let Some(s) = &b.statistics {
            stdout += &format!(
                "  branch {}: {} samples, mean {:.6} +- {:.6}, theory {:.6}\n",
                b.branch, b.n_samples, s.mean_work, s.mean_std_error, b.theory.work
            );
        }
    }
    Ok(Outcome {
        files,
        stdout,
        failures: vec![],
    })
}

// ------------------------------------------------------------------- drift

pub fn drift(config: &RunConfig, branch: Branch) -> anyhow::Result<Outcome> {
    optimal_params(config)?;
    let options = DriftOptions {
        solver: config.solver(),
        grid_points: config.grid_points,
        model: config.shift_model,
        branch,
        ..DriftOptions::default()
    };
    let results: Vec<DriftResult> = config
        .drift_tau_list
        .par_iter()
        .map(|&g| drift_sensitivity(g, &config.drift_shifts, &options))
        .collect::<Result<_, _>>()?;

    let mut csv = Vec::new();
    io::write_drift_csv(&mut csv, &results)?;
    let summary: Vec<_> = results
        .iter()
        .map(|r| {
            json!({
                "gamma_tau": r.gamma_tau,
                "power_exponent": r.fitted_exponents.power,
                "fluct_exponent": r.fitted_exponents.fluctuation,
            })
        })
        .collect();
    let args = json!({ "branch": branch });
    let doc = json!({
        "metadata": Metadata::new("drift", args, config, false),
        "branch": branch,
        "shift_model": config.shift_model,
        "fit_window": [options.fit_min, options.fit_max],
        "results": summary,
    });
    let mut stdout = String::new();
    for r in &results {
        stdout += &format!(
            "gamma_tau = {}: power exponent {:.3}, fluctuation exponent {:.3}\n",
            r.gamma_tau, r.fitted_exponents.power, r.fitted_exponents.fluctuation
        );
    }
    Ok(Outcome {
        files: vec![file("drift.csv", csv), file("drift_summary.json", json_bytes(&doc)?)],
        stdout,
        failures: vec![],
    })
}

// ---------------------------------------------------------------- validate

pub fn validate(config: &RunConfig, quick: bool) -> anyhow::Result<Outcome> {
    let options = if quick {
        ValidationOptions::quick(config.master_seed)
    } else {
        ValidationOptions::full(config.master_seed)
    };
    let mut reports = validation::run_all(&options);
    reports.push(determinism_check(config.master_seed));

    let mut stdout = String::new();
    for r in &reports {
        stdout += &format!("{r}\n");
    }
    let passed = reports.iter().filter(|r| r.passed).count();
    stdout += &format!("{passed}/{} checks passed\n", reports.len());
    let failures = reports
        .iter()
        .filter(|r| !r.passed)
        .map(|r| format!("check {} ({}) failed", r.id, r.name))
        .collect();
    Ok(Outcome {
        files: vec![],
        stdout,
        failures,
    })
}

/// Runs a small Monte Carlo sweep and a full-cycle simulation twice on one
/// worker and once on four, and compares every output byte.
pub fn determinism_check(master_seed: u64) -> CheckReport {
    let start = Instant::now();
    let outcome = (|| -> anyhow::Result<(bool, String)> {
        let config = RunConfig {
            master_seed,
            tau_list: vec![0.3, 3.0],
            n_cycles: 2_000,
            grid_points: 1024,
            samples: 64,
            ..RunConfig::default()
        };
        let pair = [
            build_optimal_protocol_with(1.0, Branch::Empty, &config.solver())?.0,
            build_optimal_protocol_with(1.0, Branch::Occupied, &config.solver())?.0,
        ];
        let named: Vec<(PathBuf, Protocol)> = pair
            .iter()
            .enumerate()
            .map(|(i, p)| (PathBuf::from(format!("protocol_b{i}.json")), p.clone()))
            .collect();
        let produce = |threads: usize| -> anyhow::Result<Vec<Vec<u8>>> {
            let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build()?;
            pool.install(|| {
                let mut all = sweep_cmd(&config, true, false)?.files;
                all.extend(simulate(&config, &named, true, false)?.files);
                Ok(all.into_iter().map(|f| f.contents).collect())
            })
        };
        let a = produce(1)?;
        let b = produce(1)?;
        let c = produce(4)?;
        let bytes: usize = a.iter().map(Vec::len).sum();
        let same = a == b && a == c;
        Ok((
            same,
            format!(
                "{} files ({bytes} bytes) {} across repeated runs and 1 vs 4 threads",
                a.len(),
                if same { "identical" } else { "differ" }
            ),
        ))
    })();
    let (passed, detail) = outcome.unwrap_or_else(|e| (false, format!("error: {e:#}")));
    CheckReport {
        id: 10,
        name: "determinism",
        passed,
        detail,
        elapsed_ms: start.elapsed().as_millis(),
    }
}

//! Tabular output formats. Every writer emits a fixed header; values use
//! Rust's shortest round-trip float formatting so files are reproducible
//! byte for byte.

use std::io::{self, Write};

use crate::analysis::{DriftResult, SweepRow};
use crate::optimal::OptimalSolution;
use crate::params::PhysicalParams;
use crate::sim::CycleResult;
use crate::stats::EnginePerformance;

pub const PROTOCOL_HEADER: &str = "t_reduced,beta_eps,p_theory";
pub const SAMPLES_HEADER: &str = "cycle_index,measured_bit,n_jumps,work_reduced";
pub const PERFORMANCE_HEADER: &str =
    "gamma_tau,branch,work_reduced,efficiency,power_reduced,delta_p_reduced,fdr_residual,source";
pub const DRIFT_HEADER: &str = "gamma_tau,beta_delta,rel_power_change,rel_fluct_change";

/// Where a performance row comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Source {
    Theory,
    MonteCarlo,
}

impl Source {
    pub fn as_str(self) -> &'static str {
        match self {
            Source::Theory => "theory",
            Source::MonteCarlo => "montecarlo",
        }
    }
}

/// Adds SI columns after the reduced ones when set.
#[derive(Debug, Clone, Copy, Default)]
pub struct Units<'a> {
    pub si: Option<&'a PhysicalParams>,
}

pub fn write_protocol_csv<W: Write>(out: &mut W, solution: &OptimalSolution, units: Units) -> io::Result<()> {
    match units.si {
        Some(_) => writeln!(out, "{PROTOCOL_HEADER},t_seconds,eps_joules")?,
        None => writeln!(out, "{PROTOCOL_HEADER}")?,
    }
    for ((t, e), p) in solution.t_grid.iter().zip(&solution.eps_grid).zip(&solution.p_grid) {
        write!(out, "{t},{e},{p}")?;
        if let Some(params) = units.si {
            write!(out, ",{},{}", params.seconds(*t), params.joules(*e))?;
        }
        writeln!(out)?;
    }
    Ok(())
}

pub fn write_samples_csv<W: Write>(out: &mut W, cycles: &[CycleResult], units: Units) -> io::Result<()> {
    match units.si {
        Some(_) => writeln!(out, "{SAMPLES_HEADER},work_joules")?,
        None => writeln!(out, "{SAMPLES_HEADER}")?,
    }
    for c in cycles {
        write!(
            out,
            "{},{},{},{}",
            c.cycle_index,
            c.measured_bit,
            c.trajectory.n_jumps(),
            c.trajectory.work
        )?;
        if let Some(params) = units.si {
            write!(out, ",{}", params.joules(c.trajectory.work))?;
        }
        writeln!(out)?;
    }
    Ok(())
}

pub fn write_performance_header<W: Write>(out: &mut W, units: Units) -> io::Result<()> {
    match units.si {
        Some(_) => writeln!(out, "{PERFORMANCE_HEADER},work_joules,power_watts"),
        None => writeln!(out, "{PERFORMANCE_HEADER}"),
    }
}

/// One performance row; `branch` is written as given ("0", "1", ...).
pub fn write_performance_row<W: Write>(
    out: &mut W,
    branch: &str,
    perf: &EnginePerformance,
    source: Source,
    units: Units,
) -> io::Result<()> {
    write!(
        out,
        "{},{},{},{},{},{},{},{}",
        perf.gamma_tau,
        branch,
        perf.work,
        perf.efficiency,
        perf.power,
        perf.fluctuation,
        perf.fdr_residual,
        source.as_str()
    )?;
    if let Some(params) = units.si {
        write!(out, ",{},{}", params.joules(perf.work), params.watts(perf.power))?;
    }
    writeln!(out)
}

/// Which protocol family of a sweep to tabulate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Family {
    /// Theory values of the optimal protocols.
    Optimal,
    /// Theory values of the naive ramps.
    Naive,
    /// Monte Carlo estimates for the optimal protocols.
    MonteCarlo,
}

/// Branch rows 0 and 1 for every sweep point of one family, ordered by γτ
/// then branch. Points where that family failed are skipped.
pub fn write_sweep_csv<W: Write>(out: &mut W, rows: &[SweepRow], family: Family, units: Units) -> io::Result<()> {
    write_performance_header(out, units)?;
    for row in rows {
        let (perf, source) = match family {
            Family::Optimal => (row.optimal, Source::Theory),
            Family::Naive => (row.naive, Source::Theory),
            Family::MonteCarlo => (row.montecarlo.map(|m| m.performance), Source::MonteCarlo),
        };
        if let Some(perf) = perf {
            write_performance_row(out, "0", &perf.empty, source, units)?;
            write_performance_row(out, "1", &perf.occupied, source, units)?;
        }
    }
    Ok(())
}

pub fn write_drift_csv<W: Write>(out: &mut W, results: &[DriftResult]) -> io::Result<()> {
    writeln!(out, "{DRIFT_HEADER}")?;
    for r in results {
        for ((d, p), f) in r.shift_values.iter().zip(&r.rel_power_change).zip(&r.rel_fluct_change) {
            writeln!(out, "{},{d},{p},{f}", r.gamma_tau)?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analysis::FittedExponents;

    #[test]
    fn drift_csv_layout() {
        let r = DriftResult {
            gamma_tau: 1.0,
            shift_values: vec![0.0, 0.1],
            rel_power_change: vec![0.0, -0.01],
            rel_fluct_change: vec![0.0, 0.2],
            fitted_exponents: FittedExponents {
                power: 2.0,
                fluctuation: 1.0,
            },
        };
        let mut buf = Vec::new();
        write_drift_csv(&mut buf, &[r]).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text, format!("{DRIFT_HEADER}\n1,0,0,0\n1,0.1,-0.01,0.2\n"));
    }

    #[test]
    fn performance_row_with_si() {
        let perf = EnginePerformance::from_parts(2.0, 0.5, 0.1);
        let params = PhysicalParams::reference_device();
        let mut buf = Vec::new();
        let units = Units { si: Some(&params) };
        write_performance_header(&mut buf, units).unwrap();
        write_performance_row(&mut buf, "0", &perf, Source::Theory, units).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert!(lines[0].starts_with(PERFORMANCE_HEADER));
        assert_eq!(lines[1].split(',').count(), 10);
        assert!(lines[1].contains(",theory,"));
    }
}

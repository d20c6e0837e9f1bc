//! Run configuration: built-in defaults, then an optional TOML file, then
//! command-line overrides.

use std::path::{Path, PathBuf};

use anyhow::Context;
use clap::Args;
use serde::{Deserialize, Serialize};
use szilard_core::analysis::{default_shifts, log_grid};
use szilard_core::optimal::{KappaSearch, NodeSpacing, SolverSettings};
use szilard_core::{PhysicalParams, ShiftModel, DEFAULT_GRID_POINTS};

use crate::UsageError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    #[serde(rename = "temperature_mK", alias = "temperature_mk")]
    pub temperature_mk: f64,
    pub gamma_in_hz: f64,
    pub gamma_out_hz: f64,
    /// Reduced durations γτ for `sweep`.
    pub tau_list: Vec<f64>,
    /// Reduced durations γτ for `drift`.
    pub drift_tau_list: Vec<f64>,
    pub n_cycles: u64,
    pub master_seed: u64,
    /// Piecewise-constant steps used to evaluate and simulate protocols.
    pub grid_points: usize,
    /// Ramp samples in emitted optimal protocols.
    pub samples: usize,
    pub quadrature_tol: f64,
    pub drift_shifts: Vec<f64>,
    pub shift_model: ShiftModel,
    pub output_dir: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            temperature_mk: 180.0,
            gamma_in_hz: 7.0,
            gamma_out_hz: 3.5,
            tau_list: log_grid(0.1, 10.0, 16),
            drift_tau_list: vec![0.1, 1.0, 10.0],
            n_cycles: 10_000,
            master_seed: 2024,
            grid_points: DEFAULT_GRID_POINTS,
            samples: 256,
            quadrature_tol: 1e-10,
            drift_shifts: default_shifts(),
            shift_model: ShiftModel::Interior,
            output_dir: PathBuf::from("out"),
        }
    }
}

/// Flags shared by all subcommands. Anything set here wins over the file.
#[derive(Debug, Clone, Default, Args)]
pub struct Overrides {
    /// TOML file with any subset of the configuration keys.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Worker threads (outputs do not depend on this).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Add SI columns next to the reduced ones.
    #[arg(long, global = true)]
    pub si: bool,
    /// Smaller grids and sample counts for a fast look.
    #[arg(long, global = true)]
    pub quick: bool,
    /// Directory for output files.
    #[arg(long, global = true, value_name = "DIR")]
    pub output_dir: Option<PathBuf>,
    /// Master seed of the random streams.
    #[arg(long = "seed", global = true)]
    pub master_seed: Option<u64>,
    /// Monte Carlo cycles per batch.
    #[arg(long, global = true)]
    pub n_cycles: Option<u64>,
    /// Time steps used to evaluate and simulate a protocol.
    #[arg(long, global = true)]
    pub grid_points: Option<usize>,
    /// Ramp samples in an emitted optimal protocol.
    #[arg(long, global = true)]
    pub samples: Option<usize>,
    /// Absolute tolerance of the extremal quadrature.
    #[arg(long, global = true)]
    pub quadrature_tol: Option<f64>,
    /// Comma-separated γτ values for `sweep`.
    #[arg(long, global = true, value_delimiter = ',', allow_negative_numbers = true)]
    pub tau_list: Option<Vec<f64>>,
    /// Comma-separated γτ values for `drift`.
    #[arg(long, global = true, value_delimiter = ',', allow_negative_numbers = true)]
    pub drift_tau_list: Option<Vec<f64>>,
    /// Comma-separated βδ offsets for `drift`.
    #[arg(long, global = true, value_delimiter = ',', allow_negative_numbers = true)]
    pub shifts: Option<Vec<f64>>,
    /// Drift offset model: interior (reset level fixed) or full.
    #[arg(long, global = true, value_parser = parse_shift_model)]
    pub shift_model: Option<ShiftModel>,
    /// Bath temperature in mK (SI columns only).
    #[arg(long = "temperature-mk", global = true, allow_negative_numbers = true)]
    pub temperature_mk: Option<f64>,
    /// Tunnelling-in rate Γ_in in Hz.
    #[arg(long, global = true, allow_negative_numbers = true)]
    pub gamma_in_hz: Option<f64>,
    /// Tunnelling-out rate Γ_out in Hz.
    #[arg(long, global = true, allow_negative_numbers = true)]
    pub gamma_out_hz: Option<f64>,
}

fn parse_shift_model(s: &str) -> Result<ShiftModel, String> {
    match s {
        "interior" => Ok(ShiftModel::Interior),
        "full" => Ok(ShiftModel::Full),
        _ => Err(format!("expected `interior` or `full`, got `{s}`")),
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> anyhow::Result<Self> {
        toml::from_str(text).map_err(|e| UsageError(format!("config: {}", e.message())).into())
    }

    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))
            .map_err(|e| UsageError(format!("{e:#}")))?;
        Self::from_toml(&text)
    }

    /// Defaults, then the file, then `--quick`, then explicit flags.
    pub fn resolve(o: &Overrides) -> anyhow::Result<Self> {
        let mut c = match &o.config {
            Some(path) => Self::load(path)?,
            None => Self::default(),
        };
        if o.quick {
            c.apply_quick();
        }
        macro_rules! set {
            ($($field:ident),*) => {$(
                if let Some(v) = &o.$field {
                    c.$field = v.clone();
                }
            )*};
        }
        set!(
            output_dir,
            master_seed,
            n_cycles,
            grid_points,
            samples,
            quadrature_tol,
            tau_list,
            drift_tau_list,
            shift_model,
            temperature_mk,
            gamma_in_hz,
            gamma_out_hz
        );
        if let Some(s) = &o.shifts {
            c.drift_shifts = s.clone();
        }
        c.validate()?;
        Ok(c)
    }

    fn apply_quick(&mut self) {
        if self.tau_list == RunConfig::default().tau_list {
            self.tau_list = log_grid(0.1, 10.0, 5);
        }
        self.n_cycles = self.n_cycles.min(2_000);
        self.grid_points = self.grid_points.min(1024);
        self.samples = self.samples.min(128);
    }

    pub fn validate(&self) -> anyhow::Result<()> {
        let positive = |name: &str, v: f64| -> anyhow::Result<()> {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(UsageError(format!("{name} must be finite and > 0, got {v}")).into())
            }
        };
        positive("temperature_mK", self.temperature_mk)?;
        positive("gamma_in_hz", self.gamma_in_hz)?;
        positive("gamma_out_hz", self.gamma_out_hz)?;
        positive("quadrature_tol", self.quadrature_tol)?;
        for (name, list) in [("tau_list", &self.tau_list), ("drift_tau_list", &self.drift_tau_list)] {
            if list.is_empty() {
                return Err(UsageError(format!("{name} must not be empty")).into());
            }
            for &g in list {
                positive(name, g)?;
            }
        }
        if self.drift_shifts.iter().any(|d| !d.is_finite()) {
            return Err(UsageError("drift_shifts must be finite".into()).into());
        }
        if self.grid_points < 16 {
            return Err(UsageError(format!("grid_points must be >= 16, got {}", self.grid_points)).into());
        }
        if self.samples < 16 {
            return Err(UsageError(format!("samples must be >= 16, got {}", self.samples)).into());
        }
        if self.quadrature_tol >= 1e-3 {
            return Err(UsageError(format!("quadrature_tol must be < 1e-3, got {}", self.quadrature_tol)).into());
        }
        Ok(())
    }

    pub fn physical(&self) -> anyhow::Result<PhysicalParams> {
        Ok(PhysicalParams::from_temperature(
            self.temperature_mk * 1e-3,
            self.gamma_in_hz,
            self.gamma_out_hz,
        )?)
    }

    pub fn solver(&self) -> SolverSettings {
        SolverSettings {
            samples: self.samples,
            spacing: NodeSpacing::Balanced,
            search: KappaSearch {
                quadrature_tol: self.quadrature_tol,
                ..KappaSearch::default()
            },
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_match_reference_device() {
        let c = RunConfig::default();
        assert_eq!(c.temperature_mk, 180.0);
        assert_eq!(c.gamma_in_hz, 7.0);
        assert_eq!(c.tau_list.len(), 16);
        assert!((c.tau_list[0] - 0.1).abs() < 1e-15 && (c.tau_list[15] - 10.0).abs() < 1e-12);
        assert_eq!(c.physical().unwrap().ratio(), 2.0);
    }

    #[test]
    fn file_then_flags() {
        let c = RunConfig::from_toml("master_seed = 7\nn_cycles = 50\ntemperature_mK = 100.0\n").unwrap();
        assert_eq!((c.master_seed, c.n_cycles, c.temperature_mk), (7, 50, 100.0));
        assert_eq!(c.gamma_in_hz, 7.0);

        let dir = std::env::temp_dir().join(format!("szilard-config-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("run.toml");
        std::fs::write(&path, "master_seed = 7\nn_cycles = 50\n").unwrap();
        let o = Overrides {
            config: Some(path),
            n_cycles: Some(99),
            ..Overrides::default()
        };
        let c = RunConfig::resolve(&o).unwrap();
        assert_eq!((c.master_seed, c.n_cycles), (7, 99));
        std::fs::remove_dir_all(dir).unwrap();
    }

    #[test]
    fn rejects_unknown_keys_and_bad_values() {
        assert!(RunConfig::from_toml("n_cycle = 3").is_err());
        let o = Overrides {
            tau_list: Some(vec![1.0, -2.0]),
            ..Overrides::default()
        };
        let err = RunConfig::resolve(&o).unwrap_err();
        assert!(err.downcast_ref::<UsageError>().is_some());
    }

    #[test]
    fn toml_round_trip() {
        let c = RunConfig::default();
        let text = toml::to_string(&c).unwrap();
        assert_eq!(RunConfig::from_toml(&text).unwrap(), c);
    }
}

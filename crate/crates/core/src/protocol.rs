//! Driving protocols for the energy gap and their stepwise-constant
//! discretisation.
//!
//! A [`Protocol`] is the exchange format: an ordered list of instantaneous
//! jumps and piecewise-linear ramps, serialised as
//!
//! ```json
//! {"branch": 0, "gamma_tau": 1.0,
//!  "segments": [{"kind": "jump", "from": 0.69, "to": 2.6},
//!               {"kind": "ramp", "duration": 1.0, "samples": [[0.0, 2.6], [1.0, 1.4]]},
//!               {"kind": "jump", "from": 1.4, "to": 0.69}]}
//! ```
//!
//! Every computation (deterministic propagation, work, fluctuations and the
//! stochastic sampler) runs on a [`ControlSchedule`], the stepwise-constant
//! control obtained by splitting each ramp into sub-intervals and freezing βε at
//! each sub-interval midpoint. Because all of them share one schedule, Monte
//! Carlo estimates and deterministic functionals agree exactly in expectation.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::params::{Branch, E0_REDUCED};

const CONTINUITY_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Segment {
    Jump {
        from: f64,
        to: f64,
    },
    Ramp {
        duration: f64,
        /// `(reduced time offset, βε)` pairs, first at 0 and last at `duration`.
        samples: Vec<[f64; 2]>,
    },
}

impl Segment {
    pub fn start_value(&self) -> Option<f64> {
        match self {
            Segment::Jump { from, .. } => Some(*from),
            Segment::Ramp { samples, .. } => samples.first().map(|s| s[1]),
        }
    }

    pub fn end_value(&self) -> Option<f64> {
        match self {
            Segment::Jump { to, .. } => Some(*to),
            Segment::Ramp { samples, .. } => samples.last().map(|s| s[1]),
        }
    }

    pub fn duration(&self) -> f64 {
        match self {
            Segment::Jump { .. } => 0.0,
            Segment::Ramp { duration, .. } => *duration,
        }
    }

    /// A constant-level ramp.
    pub fn hold(level: f64, duration: f64) -> Self {
        Segment::Ramp {
            duration,
            samples: vec![[0.0, level], [duration, level]],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Protocol {
    pub branch: Branch,
    pub gamma_tau: f64,
    pub segments: Vec<Segment>,
}

impl Protocol {
    /// Builds and validates the structure (not the ln 2 boundary values).
    pub fn new(branch: Branch, segments: Vec<Segment>) -> Result<Self> {
        let gamma_tau = segments.iter().map(Segment::duration).sum();
        let p = Protocol {
            branch,
            gamma_tau,
            segments,
        };
        p.validate()?;
        Ok(p)
    }

    /// Piecewise-constant protocol: start at `boundary`, hold each level for
    /// its duration, return to `boundary`.
    pub fn from_levels(branch: Branch, boundary: f64, levels: &[(f64, f64)]) -> Result<Self> {
        let mut segments = Vec::with_capacity(2 * levels.len() + 1);
        let mut current = boundary;
        for &(level, duration) in levels {
            if level != current {
                segments.push(Segment::Jump {
                    from: current,
                    to: level,
                });
            }
            segments.push(Segment::hold(level, duration));
            current = level;
        }
        if current != boundary {
            segments.push(Segment::Jump {
                from: current,
                to: boundary,
            });
        }
        Self::new(branch, segments)
    }

    pub fn start_value(&self) -> Option<f64> {
        self.segments.first().and_then(Segment::start_value)
    }

    pub fn end_value(&self) -> Option<f64> {
        self.segments.last().and_then(Segment::end_value)
    }

    /// Structural checks: finite values, non-negative durations, strictly
    /// increasing ramp samples spanning the ramp, continuity between segments
    /// and `gamma_tau` equal to the summed ramp durations.
    pub fn validate(&self) -> Result<()> {
        if !(self.gamma_tau.is_finite() && self.gamma_tau >= 0.0) {
            return Err(Error::malformed("gamma_tau", "must be finite and >= 0"));
        }
        if self.segments.is_empty() {
            return Err(Error::malformed("segments", "must not be empty"));
        }
        let mut current: Option<f64> = None;
        let mut total = 0.0;
        for (i, seg) in self.segments.iter().enumerate() {
            let field = |name: &str| format!("segments[{i}].{name}");
            match seg {
                Segment::Jump { from, to } => {
                    if !from.is_finite() {
                        return Err(Error::malformed(field("from"), "must be finite"));
                    }
                    if !to.is_finite() {
                        return Err(Error::malformed(field("to"), "must be finite"));
                    }
                }
                Segment::Ramp { duration, samples } => {
                    if !(duration.is_finite() && *duration >= 0.0) {
                        return Err(Error::malformed(field("duration"), "must be finite and >= 0"));
                    }
                    if samples.is_empty() {
                        return Err(Error::malformed(field("samples"), "must not be empty"));
                    }
                    if samples.iter().any(|s| !(s[0].is_finite() && s[1].is_finite())) {
                        return Err(Error::malformed(field("samples"), "must be finite"));
                    }
                    if samples[0][0] != 0.0 {
                        return Err(Error::malformed(field("samples"), "first sample time must be 0"));
                    }
                    if samples.windows(2).any(|w| w[1][0] <= w[0][0]) {
                        return Err(Error::malformed(
                            field("samples"),
                            "sample times must be strictly increasing",
                        ));
                    }
                    let last = samples[samples.len() - 1][0];
                    if (last - duration).abs() > CONTINUITY_TOL * duration.max(1.0) {
                        return Err(Error::malformed(
                            field("samples"),
                            format!("last sample time {last} differs from duration {duration}"),
                        ));
                    }
                    total += duration;
                }
            }
            let start = seg.start_value().unwrap();
            if let Some(c) = current {
                if (start - c).abs() > CONTINUITY_TOL * c.abs().max(1.0) {
                    return Err(Error::malformed(
                        field("start"),
                        format!("starts at {start} but previous segment ended at {c}"),
                    ));
                }
            }
            current = seg.end_value();
        }
        if (total - self.gamma_tau).abs() > CONTINUITY_TOL * total.max(1.0) {
            return Err(Error::malformed(
                "gamma_tau",
                format!("{} differs from summed ramp durations {total}", self.gamma_tau),
            ));
        }
        Ok(())
    }

    /// Checks the cyclic boundary condition βε(0⁻) = βε(τ⁺) = ln 2.
    pub fn validate_boundaries(&self) -> Result<()> {
        let check = |name: &str, v: Option<f64>| match v {
            Some(x) if (x - E0_REDUCED).abs() <= CONTINUITY_TOL => Ok(()),
            Some(x) => Err(Error::malformed(name, format!("must equal ln 2, got {x}"))),
            None => Err(Error::malformed(name, "missing")),
        };
        check("segments[0].start", self.start_value())?;
        check(
            &format!("segments[{}].end", self.segments.len().saturating_sub(1)),
            self.end_value(),
        )
    }

    /// Parses and fully validates a protocol file.
    pub fn from_json(text: &str) -> Result<Self> {
        let p: Protocol = serde_json::from_str(text).map_err(|e| Error::malformed("json", e.to_string()))?;
        p.validate()?;
        p.validate_boundaries()?;
        Ok(p)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("protocol serialises")
    }

    /// Piecewise-linear value of βε inside the ramps at reduced time `t`
    /// (right-continuous at jumps).
    pub fn value_at(&self, t: f64) -> f64 {
        let mut offset = 0.0;
        let mut last = self.start_value().unwrap_or(E0_REDUCED);
        for seg in &self.segments {
            match seg {
                Segment::Jump { to, .. } => last = *to,
                Segment::Ramp { duration, samples } => {
                    if t < offset + duration {
                        return interpolate(samples, t - offset);
                    }
                    offset += duration;
                    last = samples[samples.len() - 1][1];
                }
            }
        }
        last
    }
}

fn interpolate(samples: &[[f64; 2]], t: f64) -> f64 {
    let i = samples.partition_point(|s| s[0] <= t);
    if i == 0 {
        return samples[0][1];
    }
    if i == samples.len() {
        return samples[i - 1][1];
    }
    let [t0, e0] = samples[i - 1];
    let [t1, e1] = samples[i];
    e0 + (e1 - e0) * (t - t0) / (t1 - t0)
}

/// How a constant calibration offset βδ enters a protocol.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum ShiftModel {
    /// Shift the driven levels only; the reset level stays at ln 2 and the
    /// boundary jumps absorb the offset.
    #[default]
    Interior,
    /// Shift everything, including the reset level before and after the drive.
    Full,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Step {
    pub level: f64,
    pub duration: f64,
}

/// Stepwise-constant control: βε equals `start_level` before t = 0, then each
/// step's level for its duration, then `end_level` after the last step.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlSchedule {
    pub start_level: f64,
    pub steps: Vec<Step>,
    pub end_level: f64,
}

impl ControlSchedule {
    /// Discretises `protocol`. Each linear piece of a ramp of duration `d` is
    /// split into `max(1, ceil(grid_points · d / total))` equal sub-intervals;
    /// `grid_points = 0` keeps the ramp samples as they are.
    pub fn from_protocol(protocol: &Protocol, grid_points: usize) -> Result<Self> {
        protocol.validate()?;
        let total: f64 = protocol.gamma_tau;
        let start_level = protocol.start_value().unwrap();
        let mut steps = Vec::new();
        for seg in &protocol.segments {
            let Segment::Ramp { samples, .. } = seg else {
                continue;
            };
            for w in samples.windows(2) {
                let [t0, e0] = w[0];
                let [t1, e1] = w[1];
                let d = t1 - t0;
                let m = if grid_points == 0 || total == 0.0 {
                    1
                } else {
                    ((grid_points as f64 * d / total) - 1e-9).ceil().max(1.0) as usize
                };
                let h = d / m as f64;
                for j in 0..m {
                    let frac = (j as f64 + 0.5) / m as f64;
                    steps.push(Step {
                        level: e0 + (e1 - e0) * frac,
                        duration: h,
                    });
                }
            }
        }
        Ok(ControlSchedule {
            start_level,
            steps,
            end_level: protocol.end_value().unwrap(),
        })
    }

    pub fn duration(&self) -> f64 {
        self.steps.iter().map(|s| s.duration).sum()
    }

    /// Step boundary times `0 = t₀ < t₁ < … < t_n = γτ`.
    pub fn times(&self) -> Vec<f64> {
        let mut t = Vec::with_capacity(self.steps.len() + 1);
        let mut acc = 0.0;
        t.push(acc);
        for s in &self.steps {
            acc += s.duration;
            t.push(acc);
        }
        t
    }

    /// Control increments Δβε_k, one per step boundary `t_k` (k = 0..=n).
    pub fn increments(&self) -> Vec<f64> {
        let n = self.steps.len();
        if n == 0 {
            return vec![self.end_level - self.start_level];
        }
        let mut inc = Vec::with_capacity(n + 1);
        inc.push(self.steps[0].level - self.start_level);
        for w in self.steps.windows(2) {
            inc.push(w[1].level - w[0].level);
        }
        inc.push(self.end_level - self.steps[n - 1].level);
        inc
    }

    pub fn shifted(&self, shift: f64, model: ShiftModel) -> Self {
        let steps = self
            .steps
            .iter()
            .map(|s| Step {
                level: s.level + shift,
                duration: s.duration,
            })
            .collect();
        let boundary = match model {
            ShiftModel::Interior => 0.0,
            ShiftModel::Full => shift,
        };
        ControlSchedule {
            start_level: self.start_level + boundary,
            steps,
            end_level: self.end_level + boundary,
        }
    }

    /// Largest |βε| reached, including the boundary levels.
    pub fn max_abs_level(&self) -> f64 {
        self.steps
            .iter()
            .map(|s| s.level.abs())
            .fold(self.start_level.abs().max(self.end_level.abs()), f64::max)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::LN_2;

    fn ramp_protocol() -> Protocol {
        Protocol::new(
            Branch::Empty,
            vec![
                Segment::Jump {
                    from: LN_2,
                    to: LN_2 + 5.0,
                },
                Segment::Ramp {
                    duration: 2.0,
                    samples: vec![[0.0, LN_2 + 5.0], [2.0, LN_2]],
                },
            ],
        )
        .unwrap()
    }

    #[test]
    fn json_round_trip_and_format() {
        let p = ramp_protocol();
        let text = p.to_json();
        let v: serde_json::Value = serde_json::from_str(&text).unwrap();
        assert_eq!(v["branch"], 0);
        assert_eq!(v["segments"][0]["kind"], "jump");
        assert_eq!(v["segments"][1]["kind"], "ramp");
        assert_eq!(v["segments"][1]["samples"][1][0], 2.0);
        assert_eq!(Protocol::from_json(&text).unwrap(), p);
    }

    #[test]
    fn malformed_files_name_the_field() {
        let missing = r#"{"branch": 0, "gamma_tau": 1.0}"#;
        let err = Protocol::from_json(missing).unwrap_err().to_string();
        assert!(err.contains("segments"), "{err}");

        let bad_times = r#"{"branch": 0, "gamma_tau": 1.0, "segments": [
            {"kind": "ramp", "duration": 1.0, "samples": [[0.0, 0.6931471805599453], [0.7, 1.0], [0.5, 1.0], [1.0, 0.6931471805599453]]}]}"#;
        let err = Protocol::from_json(bad_times).unwrap_err().to_string();
        assert!(err.contains("segments[0].samples"), "{err}");

        let bad_tau = r#"{"branch": 0, "gamma_tau": 3.0, "segments": [
            {"kind": "ramp", "duration": 1.0, "samples": [[0.0, 0.6931471805599453], [1.0, 0.6931471805599453]]}]}"#;
        let err = Protocol::from_json(bad_tau).unwrap_err().to_string();
        assert!(err.contains("gamma_tau"), "{err}");

        let bad_boundary = r#"{"branch": 1, "gamma_tau": 1.0, "segments": [
            {"kind": "ramp", "duration": 1.0, "samples": [[0.0, 2.0], [1.0, 0.6931471805599453]]}]}"#;
        let err = Protocol::from_json(bad_boundary).unwrap_err().to_string();
        assert!(err.contains("segments[0].start"), "{err}");
    }

    #[test]
    fn discontinuity_rejected() {
        let r = Protocol::new(
            Branch::Empty,
            vec![Segment::Jump { from: LN_2, to: 3.0 }, Segment::hold(2.0, 1.0)],
        );
        assert!(r.is_err());
    }

    #[test]
    fn schedule_midpoints_and_increments() {
        let p = ramp_protocol();
        let s = ControlSchedule::from_protocol(&p, 4).unwrap();
        assert_eq!(s.steps.len(), 4);
        assert!((s.duration() - 2.0).abs() < 1e-15);
        // midpoint of first quarter: 5 · 7/8 above ln 2
        assert!((s.steps[0].level - (LN_2 + 5.0 * 7.0 / 8.0)).abs() < 1e-12);
        let inc = s.increments();
        assert_eq!(inc.len(), 5);
        assert!((inc.iter().sum::<f64>()).abs() < 1e-12);
        assert!((inc[0] - 5.0 * 7.0 / 8.0).abs() < 1e-12);
        assert!((inc[4] + 5.0 / 8.0).abs() < 1e-12);
    }

    #[test]
    fn jump_only_schedule() {
        let p = Protocol::new(
            Branch::Empty,
            vec![
                Segment::Jump { from: LN_2, to: 10.0 },
                Segment::Ramp {
                    duration: 0.0,
                    samples: vec![[0.0, 10.0]],
                },
            ],
        )
        .unwrap();
        let s = ControlSchedule::from_protocol(&p, 8).unwrap();
        assert!(s.steps.is_empty());
        assert_eq!(s.increments(), vec![10.0 - LN_2]);
    }

    #[test]
    fn from_levels_reproduces_levels() {
        let levels = [(3.0, 0.5), (2.0, 0.25), (1.0, 0.25)];
        let p = Protocol::from_levels(Branch::Empty, LN_2, &levels).unwrap();
        p.validate_boundaries().unwrap();
        let s = ControlSchedule::from_protocol(&p, 0).unwrap();
        let got: Vec<_> = s.steps.iter().map(|x| (x.level, x.duration)).collect();
        assert_eq!(got, levels.to_vec());
    }

    #[test]
    fn value_at_interpolates() {
        let p = ramp_protocol();
        assert!((p.value_at(1.0) - (LN_2 + 2.5)).abs() < 1e-12);
        assert!((p.value_at(5.0) - LN_2).abs() < 1e-12);
    }

    #[test]
    fn shift_models() {
        let s = ControlSchedule::from_protocol(&ramp_protocol(), 4).unwrap();
        let a = s.shifted(0.1, ShiftModel::Interior);
        let b = s.shifted(0.1, ShiftModel::Full);
        assert_eq!(a.start_level, s.start_level);
        assert!((b.end_level - s.end_level - 0.1).abs() < 1e-15);
        assert!((a.steps[2].level - s.steps[2].level - 0.1).abs() < 1e-15);
        // full shift leaves every increment unchanged
        for (x, y) in b.increments().iter().zip(s.increments()) {
            assert!((x - y).abs() < 1e-12);
        }
    }
}

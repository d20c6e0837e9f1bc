//! Exact stochastic unravelling of the rate model and full measurement-feedback
//! cycles.
//!
//! Within each step of a [`ControlSchedule`] the hazards are constant, so
//! waiting times are drawn exactly: every sojourn gets an Exp(1) clock that is
//! consumed at rate hazard(n, βε) until it runs out.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::engine::{RateModel, DEFAULT_GRID_POINTS};
use crate::error::{Error, Result};
use crate::params::Branch;
use crate::protocol::{ControlSchedule, Protocol};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectorySample {
    pub initial_occupation: u8,
    /// Reduced times of every tunnelling event, strictly increasing.
    pub jump_times: Vec<f64>,
    /// Extracted work βW of this realisation.
    pub work: f64,
}

impl TrajectorySample {
    /// Occupation n(t) right after time `t`.
    pub fn occupation_at(&self, t: f64) -> u8 {
        let flips = self.jump_times.partition_point(|&s| s <= t);
        self.initial_occupation ^ (flips % 2) as u8
    }

    pub fn n_jumps(&self) -> usize {
        self.jump_times.len()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CycleResult {
    pub cycle_index: u64,
    pub measured_bit: Branch,
    pub trajectory: TrajectorySample,
}

impl CycleResult {
    pub fn work(&self) -> f64 {
        self.trajectory.work
    }
}

/// Identifies the random substream of one cycle.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeededRun {
    pub master_seed: u64,
    pub cycle_index: u64,
}

impl SeededRun {
    pub fn new(master_seed: u64, cycle_index: u64) -> Self {
        SeededRun {
            master_seed,
            cycle_index,
        }
    }

    /// ChaCha8 keyed by the master seed, on stream `cycle_index`.
    pub fn rng(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.master_seed);
        rng.set_stream(self.cycle_index);
        rng
    }
}

fn exp1<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    -(1.0 - rng.random::<f64>()).ln()
}

/// Samples one trajectory over a stepwise control starting in state `n0`.
pub fn sample_schedule<R: Rng + ?Sized>(
    model: &RateModel,
    schedule: &ControlSchedule,
    n0: u8,
    rng: &mut R,
) -> TrajectorySample {
    let inc = schedule.increments();
    let mut n = n0;
    let mut work = 0.0;
    let mut jump_times = Vec::new();
    let mut clock = exp1(rng);
    let mut t = 0.0;

    for (k, step) in schedule.steps.iter().enumerate() {
        work -= f64::from(n) * inc[k];
        let (h_in, h_out) = model.hazards(step.level);
        let step_end = t + step.duration;
        let mut remaining = step.duration;
        loop {
            let h = if n == 0 { h_in } else { h_out };
            let budget = h * remaining;
            if budget < clock {
                clock -= budget;
                break;
            }
            let dt = clock / h;
            let at = t + dt;
            // round-off can push the event onto a boundary already recorded
            if jump_times.last().is_some_and(|&last| at <= last) || at > step_end {
                clock = 0.0;
                break;
            }
            jump_times.push(at);
            t = at;
            remaining -= dt;
            n ^= 1;
            clock = exp1(rng);
        }
        t = step_end;
    }
    work -= f64::from(n) * inc[inc.len() - 1];

    TrajectorySample {
        initial_occupation: n0,
        jump_times,
        work,
    }
}

/// Samples one trajectory of `protocol` at the default grid resolution.
pub fn sample_trajectory<R: Rng + ?Sized>(protocol: &Protocol, n0: u8, rng: &mut R) -> Result<TrajectorySample> {
    if n0 > 1 {
        return Err(Error::invalid("n0", format!("must be 0 or 1, got {n0}")));
    }
    let schedule = ControlSchedule::from_protocol(protocol, DEFAULT_GRID_POINTS)?;
    Ok(sample_schedule(&RateModel::default(), &schedule, n0, rng))
}

/// The two feedback protocols of an engine, discretised once and reused for
/// every cycle.
#[derive(Debug, Clone)]
pub struct CycleEngine {
    model: RateModel,
    schedules: [ControlSchedule; 2],
    gamma_tau: f64,
}

impl CycleEngine {
    pub fn new(empty: &Protocol, occupied: &Protocol, grid_points: usize) -> Result<Self> {
        if empty.branch != Branch::Empty || occupied.branch != Branch::Occupied {
            return Err(Error::invalid(
                "protocols",
                format!("need branches (0, 1), got ({}, {})", empty.branch, occupied.branch),
            ));
        }
        if (empty.gamma_tau - occupied.gamma_tau).abs() > 1e-9 * empty.gamma_tau.max(1.0) {
            return Err(Error::invalid(
                "gamma_tau",
                format!(
                    "branch protocols differ in duration: {} vs {}",
                    empty.gamma_tau, occupied.gamma_tau
                ),
            ));
        }
        Ok(CycleEngine {
            model: RateModel::default(),
            schedules: [
                ControlSchedule::from_protocol(empty, grid_points)?,
                ControlSchedule::from_protocol(occupied, grid_points)?,
            ],
            gamma_tau: empty.gamma_tau,
        })
    }

    /// Samples with a different degeneracy ratio than the default r = 2.
    pub fn with_model(mut self, model: RateModel) -> Self {
        self.model = model;
        self
    }

    pub fn model(&self) -> &RateModel {
        &self.model
    }

    pub fn gamma_tau(&self) -> f64 {
        self.gamma_tau
    }

    pub fn schedule(&self, branch: Branch) -> &ControlSchedule {
        &self.schedules[branch.bit() as usize]
    }

    /// Fair-coin measurement of the thermalised dot, then the matching drive.
    pub fn run_cycle(&self, seed: SeededRun) -> CycleResult {
        let mut rng = seed.rng();
        let measured_bit = if rng.random::<f64>() < 0.5 {
            Branch::Empty
        } else {
            Branch::Occupied
        };
        self.cycle_with(seed.cycle_index, measured_bit, &mut rng)
    }

    fn cycle_with(&self, cycle_index: u64, branch: Branch, rng: &mut ChaCha8Rng) -> CycleResult {
        let trajectory = sample_schedule(&self.model, self.schedule(branch), branch.bit(), rng);
        CycleResult {
            cycle_index,
            measured_bit: branch,
            trajectory,
        }
    }

    /// `n_cycles` cycles; cycle i draws from substream i, so the result does
    /// not depend on how the work is scheduled across threads.
    pub fn run_batch(&self, n_cycles: u64, master_seed: u64) -> Result<Vec<CycleResult>> {
        check_cycles(n_cycles)?;
        Ok((0..n_cycles)
            .into_par_iter()
            .map(|i| self.run_cycle(SeededRun::new(master_seed, i)))
            .collect())
    }

    /// Like [`run_batch`](Self::run_batch) with the measurement outcome forced.
    pub fn run_branch_batch(&self, branch: Branch, n_cycles: u64, master_seed: u64) -> Result<Vec<CycleResult>> {
        check_cycles(n_cycles)?;
        Ok((0..n_cycles)
            .into_par_iter()
            .map(|i| self.cycle_with(i, branch, &mut SeededRun::new(master_seed, i).rng()))
            .collect())
    }
}

fn check_cycles(n_cycles: u64) -> Result<()> {
    if n_cycles == 0 {
        Err(Error::invalid("n_cycles", "must be >= 1"))
    } else {
        Ok(())
    }
}

/// Cycles driven by a single branch protocol: the measurement is skipped and
/// every cycle starts in that branch's state.
pub fn run_protocol_batch(
    model: &RateModel,
    protocol: &Protocol,
    grid_points: usize,
    n_cycles: u64,
    master_seed: u64,
) -> Result<Vec<CycleResult>> {
    check_cycles(n_cycles)?;
    let schedule = ControlSchedule::from_protocol(protocol, grid_points)?;
    let branch = protocol.branch;
    Ok((0..n_cycles)
        .into_par_iter()
        .map(|i| CycleResult {
            cycle_index: i,
            measured_bit: branch,
            trajectory: sample_schedule(
                model,
                &schedule,
                branch.bit(),
                &mut SeededRun::new(master_seed, i).rng(),
            ),
        })
        .collect())
}

pub fn run_cycle(protocols: (&Protocol, &Protocol), seed: SeededRun) -> Result<CycleResult> {
    Ok(CycleEngine::new(protocols.0, protocols.1, DEFAULT_GRID_POINTS)?.run_cycle(seed))
}

pub fn run_batch(protocols: (&Protocol, &Protocol), n_cycles: u64, master_seed: u64) -> Result<Vec<CycleResult>> {
    CycleEngine::new(protocols.0, protocols.1, DEFAULT_GRID_POINTS)?.run_batch(n_cycles, master_seed)
}

/// Fraction of trajectories occupied at each of `times`.
pub fn empirical_occupation(samples: &[TrajectorySample], times: &[f64]) -> Vec<f64> {
    let n = samples.len() as f64;
    times
        .iter()
        .map(|&t| samples.iter().map(|s| f64::from(s.occupation_at(t))).sum::<f64>() / n)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::protocol::{Segment, Step};
    use std::f64::consts::LN_2;

    fn flat(duration: f64) -> ControlSchedule {
        ControlSchedule {
            start_level: LN_2,
            steps: vec![Step { level: LN_2, duration }],
            end_level: LN_2,
        }
    }

    fn flat_protocol(branch: Branch, duration: f64) -> Protocol {
        Protocol::new(
            branch,
            vec![Segment::Ramp {
                duration,
                samples: vec![[0.0, LN_2], [duration, LN_2]],
            }],
        )
        .unwrap()
    }

    #[test]
    fn flat_protocol_does_no_work() {
        let mut rng = SeededRun::new(1, 0).rng();
        for n0 in [0, 1] {
            let s = sample_schedule(&RateModel::default(), &flat(50.0), n0, &mut rng);
            assert_eq!(s.work, 0.0);
            assert!(s.n_jumps() > 0);
            assert!(s.jump_times.windows(2).all(|w| w[1] > w[0]));
        }
    }

    #[test]
    fn start_jump_from_empty_is_free() {
        let s = ControlSchedule {
            start_level: LN_2,
            steps: vec![Step {
                level: 40.0,
                duration: 1.0,
            }],
            end_level: 40.0,
        };
        let mut rng = SeededRun::new(2, 0).rng();
        let t = sample_schedule(&RateModel::default(), &s, 0, &mut rng);
        assert_eq!(t.work, 0.0);
        assert_eq!(t.n_jumps(), 0);
    }

    #[test]
    fn occupation_alternates() {
        let t = TrajectorySample {
            initial_occupation: 1,
            jump_times: vec![0.5, 1.0],
            work: 0.0,
        };
        assert_eq!(t.occupation_at(0.2), 1);
        assert_eq!(t.occupation_at(0.7), 0);
        assert_eq!(t.occupation_at(1.5), 1);
    }

    #[test]
    fn survival_matches_constant_hazard() {
        // hazard r·f = 2/3 at ln 2
        let duration = 0.2333 * 1.5;
        let model = RateModel::default();
        let n = 100_000;
        let survived = (0..n)
            .filter(|&i| {
                let mut rng = SeededRun::new(99, i).rng();
                sample_schedule(&model, &flat(duration), 0, &mut rng).n_jumps() == 0
            })
            .count() as f64
            / n as f64;
        let expected = (-2.0 / 3.0 * duration).exp();
        let sigma = (expected * (1.0 - expected) / n as f64).sqrt();
        assert!((survived - expected).abs() < 3.0 * sigma, "{survived} vs {expected}");
    }

    #[test]
    fn fair_coin_measurement() {
        let engine = CycleEngine::new(
            &flat_protocol(Branch::Empty, 1.0),
            &flat_protocol(Branch::Occupied, 1.0),
            16,
        )
        .unwrap();
        let batch = engine.run_batch(10_000, 5).unwrap();
        let zeros = batch.iter().filter(|c| c.measured_bit == Branch::Empty).count() as f64;
        assert!((zeros / 1e4 - 0.5).abs() < 3.0 * 0.005);
        assert!(batch
            .iter()
            .all(|c| c.trajectory.initial_occupation == c.measured_bit.bit()));
    }

    #[test]
    fn batch_is_deterministic_and_order_free() {
        let engine = CycleEngine::new(
            &flat_protocol(Branch::Empty, 2.0),
            &flat_protocol(Branch::Occupied, 2.0),
            16,
        )
        .unwrap();
        let a = engine.run_batch(200, 42).unwrap();
        let b = engine.run_batch(200, 42).unwrap();
        assert_eq!(a, b);
        let c = engine.run_cycle(SeededRun::new(42, 137));
        assert_eq!(c, a[137]);
        assert!(engine.run_batch(0, 42).is_err());
    }

    #[test]
    fn engine_rejects_mismatched_protocols() {
        let e = flat_protocol(Branch::Empty, 1.0);
        let o = flat_protocol(Branch::Occupied, 2.0);
        assert!(CycleEngine::new(&e, &o, 16).is_err());
        assert!(CycleEngine::new(&e, &e, 16).is_err());
    }
}

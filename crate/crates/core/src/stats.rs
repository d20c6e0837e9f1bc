//! Thermodynamic functionals of a protocol and the sample estimators used to
//! put error bars on Monte Carlo work statistics.
//!
//! Everything here uses the stepwise-constant control convention: the control
//! changes by Δβε_k at the step boundaries t_k and the dot pays
//! −n(t_k⁻)·Δβε_k for each change.

use std::f64::consts::LN_2;

use serde::{Deserialize, Serialize};

use crate::engine::{RateModel, DEFAULT_GRID_POINTS};
use crate::error::{Error, Result};
use crate::protocol::{ControlSchedule, Protocol};

/// Below this dissipated work the FDR residual is reported in absolute form.
pub const FDR_GUARD: f64 = 1e-12;

/// Mean extracted work −Σ p(t_k⁻)·Δβε_k.
pub fn work_on_schedule(model: &RateModel, schedule: &ControlSchedule, p0: f64) -> f64 {
    let p = model.occupations(schedule, p0);
    -schedule.increments().iter().zip(&p).map(|(d, p)| d * p).sum::<f64>()
}

/// Var(βW) for the stepwise control.
///
/// Cov(n_j, n_k) = p_j(1 − p_j)·∏_{l=j}^{k−1} e_l for j ≤ k, where e_l is the
/// relaxation factor of step l, so the double sum collapses to a backward
/// recursion S_j = e_j(Δ_{j+1} + S_{j+1}) and
/// Var = Σ_j Δ_j·p_j(1 − p_j)·(Δ_j + 2S_j).
pub fn work_variance_on_schedule(model: &RateModel, schedule: &ControlSchedule, p0: f64) -> f64 {
    let p = model.occupations(schedule, p0);
    let inc = schedule.increments();
    let decay: Vec<f64> = schedule
        .steps
        .iter()
        .map(|s| model.relaxation(s.level, s.duration).1)
        .collect();
    let mut tail = 0.0;
    let mut var = 0.0;
    for j in (0..inc.len()).rev() {
        if j < decay.len() {
            tail = decay[j] * (inc[j + 1] + tail);
        }
        var += inc[j] * p[j] * (1.0 - p[j]) * (inc[j] + 2.0 * tail);
    }
    var.max(0.0)
}

/// ΔP = Var(βW)/γτ of the stepwise control.
pub fn fluctuation_on_schedule(model: &RateModel, schedule: &ControlSchedule, p0: f64) -> f64 {
    let duration = schedule.duration();
    if duration <= 0.0 {
        return 0.0;
    }
    work_variance_on_schedule(model, schedule, p0) / duration
}

/// Mean extracted work of `protocol` starting from occupation `p0`.
pub fn work_deterministic(protocol: &Protocol, p0: f64) -> Result<f64> {
    check_probability(p0)?;
    let schedule = ControlSchedule::from_protocol(protocol, DEFAULT_GRID_POINTS)?;
    Ok(work_on_schedule(&RateModel::default(), &schedule, p0))
}

/// ΔP of `protocol`, started from its branch's post-measurement occupation.
pub fn fluctuation_integral(protocol: &Protocol) -> Result<f64> {
    let schedule = ControlSchedule::from_protocol(protocol, DEFAULT_GRID_POINTS)?;
    Ok(fluctuation_on_schedule(
        &RateModel::default(),
        &schedule,
        protocol.branch.initial_probability(),
    ))
}

fn check_probability(p0: f64) -> Result<()> {
    if (0.0..=1.0).contains(&p0) {
        Ok(())
    } else {
        Err(Error::invalid("p0", format!("must lie in [0, 1], got {p0}")))
    }
}

/// η = βW / ln 2.
pub fn efficiency(work: f64) -> f64 {
    work / LN_2
}

/// Reduced power βW/(γτ).
pub fn power(work: f64, gamma_tau: f64) -> f64 {
    work / gamma_tau
}

/// [(γτ/2)·ΔP − (ln 2 − βW)] / (ln 2 − βW).
///
/// When the dissipated work ln 2 − βW falls below [`FDR_GUARD`] the
/// unnormalised numerator is returned instead.
pub fn fdr_residual(work: f64, fluctuation: f64, gamma_tau: f64) -> f64 {
    let dissipated = LN_2 - work;
    let numerator = 0.5 * gamma_tau * fluctuation - dissipated;
    if dissipated.abs() < FDR_GUARD {
        numerator
    } else {
        numerator / dissipated
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnginePerformance {
    pub gamma_tau: f64,
    pub work: f64,
    pub efficiency: f64,
    pub power: f64,
    pub fluctuation: f64,
    pub fdr_residual: f64,
}

impl EnginePerformance {
    pub fn from_parts(gamma_tau: f64, work: f64, fluctuation: f64) -> Self {
        EnginePerformance {
            gamma_tau,
            work,
            efficiency: efficiency(work),
            power: power(work, gamma_tau),
            fluctuation,
            fdr_residual: fdr_residual(work, fluctuation, gamma_tau),
        }
    }

    /// Theory values for one branch protocol.
    pub fn evaluate(protocol: &Protocol, grid_points: usize) -> Result<Self> {
        let schedule = ControlSchedule::from_protocol(protocol, grid_points)?;
        let perf = Self::evaluate_schedule(&schedule, protocol.branch.initial_probability())?;
        // Report the nominal duration rather than the summed step lengths.
        Ok(Self::from_parts(protocol.gamma_tau, perf.work, perf.fluctuation))
    }

    pub fn evaluate_schedule(schedule: &ControlSchedule, p0: f64) -> Result<Self> {
        Self::evaluate_schedule_with(&RateModel::default(), schedule, p0)
    }

    pub fn evaluate_schedule_with(model: &RateModel, schedule: &ControlSchedule, p0: f64) -> Result<Self> {
        let gamma_tau = schedule.duration();
        if gamma_tau <= 0.0 {
            return Err(Error::invalid("gamma_tau", "protocol has zero duration"));
        }
        Ok(Self::from_parts(
            gamma_tau,
            work_on_schedule(model, schedule, p0),
            fluctuation_on_schedule(model, schedule, p0),
        ))
    }

    /// Cycle-level figures: both measurement outcomes weighted 1/2.
    pub fn combine_branches(empty: &Self, occupied: &Self) -> Self {
        Self::from_parts(
            empty.gamma_tau,
            0.5 * (empty.work + occupied.work),
            0.5 * (empty.fluctuation + occupied.fluctuation),
        )
    }
}

/// Sample mean and its standard error √(V/N).
pub fn mean_estimator(samples: &[f64]) -> Result<(f64, f64)> {
    if samples.len() < 2 {
        return Err(Error::invalid("samples", format!("need N >= 2, got {}", samples.len())));
    }
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / n;
    let var = unbiased_variance(samples, mean);
    Ok((mean, (var / n).sqrt()))
}

fn unbiased_variance(samples: &[f64], mean: f64) -> f64 {
    let n = samples.len() as f64;
    samples.iter().map(|w| (w - mean).powi(2)).sum::<f64>() / (n - 1.0)
}

/// Raw moments m_j = (1/N)·Σ W_i^j for j = 1..=4.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RawMoments {
    pub m1: f64,
    pub m2: f64,
    pub m3: f64,
    pub m4: f64,
}

impl RawMoments {
    pub fn of(samples: &[f64]) -> Self {
        let n = samples.len() as f64;
        let mut m = [0.0; 4];
        for &w in samples {
            let w2 = w * w;
            m[0] += w;
            m[1] += w2;
            m[2] += w2 * w;
            m[3] += w2 * w2;
        }
        RawMoments {
            m1: m[0] / n,
            m2: m[1] / n,
            m3: m[2] / n,
            m4: m[3] / n,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VarianceEstimate {
    pub n_samples: usize,
    /// Unbiased sample variance V.
    pub variance: f64,
    /// √Var(V) from the central-moment form (authoritative).
    pub std_error: f64,
    /// (1/N)(μ₄ − σ⁴(N − 3)/(N − 1)) with sample central moments.
    pub var_of_v_central: f64,
    /// m₄(N(N−4)+1)/(N(N−1)²) − 4m₃m₁/N − V²/(N−1) + 3m₂²/N.
    pub var_of_v_raw_moment: f64,
    /// True when either Var(V) form came out negative and was clamped to 0.
    pub clamped: bool,
    pub raw_moments: RawMoments,
}

impl VarianceEstimate {
    pub fn std_error_raw_moment(&self) -> f64 {
        self.var_of_v_raw_moment.sqrt()
    }
}

/// Unbiased variance with both Var(V) variants.
pub fn variance_estimator(samples: &[f64]) -> Result<VarianceEstimate> {
    let len = samples.len();
    if len < 5 {
        return Err(Error::invalid("samples", format!("need N >= 5, got {len}")));
    }
    let n = len as f64;
    let mean = samples.iter().sum::<f64>() / n;
    let variance = unbiased_variance(samples, mean);
    let mu2 = samples.iter().map(|w| (w - mean).powi(2)).sum::<f64>() / n;
    let mu4 = samples.iter().map(|w| (w - mean).powi(4)).sum::<f64>() / n;
    let central = (mu4 - mu2 * mu2 * (n - 3.0) / (n - 1.0)) / n;

    let m = RawMoments::of(samples);
    let raw = m.m4 * (n * (n - 4.0) + 1.0) / (n * (n - 1.0).powi(2))
        - 4.0 * m.m3 * m.m1 / n
        - variance * variance / (n - 1.0)
        + 3.0 * m.m2 * m.m2 / n;

    let clamped = central < 0.0 || raw < 0.0;
    let var_of_v_central = central.max(0.0);
    Ok(VarianceEstimate {
        n_samples: len,
        variance,
        std_error: var_of_v_central.sqrt(),
        var_of_v_central,
        var_of_v_raw_moment: raw.max(0.0),
        clamped,
        raw_moments: m,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WorkStatistics {
    pub n_samples: usize,
    pub mean_work: f64,
    pub mean_std_error: f64,
    pub var_work: VarianceEstimate,
}

impl WorkStatistics {
    pub fn from_samples(samples: &[f64]) -> Result<Self> {
        let (mean_work, mean_std_error) = mean_estimator(samples)?;
        Ok(WorkStatistics {
            n_samples: samples.len(),
            mean_work,
            mean_std_error,
            var_work: variance_estimator(samples)?,
        })
    }

    /// Monte Carlo analogue of [`EnginePerformance`]: ΔP estimated as V/γτ.
    pub fn performance(&self, gamma_tau: f64) -> EnginePerformance {
        EnginePerformance::from_parts(gamma_tau, self.mean_work, self.var_work.variance / gamma_tau)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::Branch;
    use crate::protocol::{Segment, Step};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn schedule(levels: &[(f64, f64)]) -> ControlSchedule {
        ControlSchedule {
            start_level: LN_2,
            steps: levels
                .iter()
                .map(|&(level, duration)| Step { level, duration })
                .collect(),
            end_level: LN_2,
        }
    }

    /// Direct double sum through the conditional propagator.
    fn variance_direct(model: &RateModel, s: &ControlSchedule, p0: f64) -> f64 {
        let p = model.occupations(s, p0);
        let t = s.times();
        let inc = s.increments();
        let mut var = 0.0;
        for j in 0..inc.len() {
            var += inc[j] * inc[j] * p[j] * (1.0 - p[j]);
            for k in j + 1..inc.len() {
                let q = model.conditional(s, t[j], t[k]).unwrap();
                var += 2.0 * inc[j] * inc[k] * p[j] * (q - p[k]);
            }
        }
        var
    }

    #[test]
    fn constant_protocol_has_no_work_or_fluctuation() {
        let p = Protocol::new(
            Branch::Empty,
            vec![Segment::Ramp {
                duration: 1.0,
                samples: vec![[0.0, LN_2], [1.0, LN_2]],
            }],
        )
        .unwrap();
        assert_eq!(work_deterministic(&p, 0.5).unwrap(), 0.0);
        assert_eq!(fluctuation_integral(&p).unwrap(), 0.0);
    }

    #[test]
    fn start_jump_from_empty_is_free() {
        let s = schedule(&[(5.0, 1e-300)]);
        let w = work_on_schedule(&RateModel::default(), &s, 0.0);
        assert_eq!(w, 0.0);
        assert_eq!(fluctuation_on_schedule(&RateModel::default(), &s, 0.0), 0.0);
    }

    #[test]
    fn single_jump_pair_work() {
        // jump up with p = 1/2, relax fully, jump down at equilibrium p*
        let model = RateModel::default();
        let s = schedule(&[(3.0, 200.0)]);
        let p_star = model.equilibrium(3.0);
        let expected = -(0.5 * (3.0 - LN_2) + p_star * (LN_2 - 3.0));
        assert!((work_on_schedule(&model, &s, 0.5) - expected).abs() < 1e-12);
    }

    #[test]
    fn recursion_matches_direct_double_sum() {
        let model = RateModel::default();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..20 {
            let levels: Vec<(f64, f64)> = (0..rng.random_range(1..30))
                .map(|_| (rng.random_range(-4.0..6.0), rng.random_range(0.0..0.5)))
                .collect();
            let s = schedule(&levels);
            let p0 = rng.random_range(0.0..1.0);
            let fast = work_variance_on_schedule(&model, &s, p0);
            let slow = variance_direct(&model, &s, p0);
            assert!((fast - slow).abs() < 1e-12 * slow.max(1.0), "{fast} vs {slow}");
        }
    }

    #[test]
    fn efficiency_and_power() {
        assert_eq!(efficiency(LN_2), 1.0);
        assert_eq!(efficiency(0.0), 0.0);
        assert!((efficiency(0.5 * LN_2) - 0.5).abs() < 1e-15);
        assert_eq!(power(3.0, 2.0), 1.5);
    }

    #[test]
    fn fdr_guard() {
        assert_eq!(fdr_residual(LN_2, 0.0, 1.0), 0.0);
        assert!((fdr_residual(LN_2 - 0.1, 0.2, 1.0) - 0.0).abs() < 1e-12);
        assert!((fdr_residual(LN_2 - 0.1, 0.4, 1.0) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn combine_is_half_weighted() {
        let a = EnginePerformance::from_parts(2.0, 0.2, 0.1);
        let b = EnginePerformance::from_parts(2.0, 0.4, 0.3);
        let c = EnginePerformance::combine_branches(&a, &b);
        assert!((c.work - 0.3).abs() < 1e-15);
        assert!((c.fluctuation - 0.2).abs() < 1e-15);
        assert_eq!(c.power, c.work / 2.0);
    }

    #[test]
    fn estimator_examples() {
        let (m, se) = mean_estimator(&[1.0, 2.0, 3.0]).unwrap();
        assert_eq!(m, 2.0);
        assert!((se - (1.0f64 / 3.0).sqrt()).abs() < 1e-15);
        assert_eq!(mean_estimator(&[4.0; 6]).unwrap(), (4.0, 0.0));
        assert!(mean_estimator(&[1.0]).is_err());
        let m = RawMoments::of(&[1.0, 2.0, 3.0]);
        assert!((m.m2 - 14.0 / 3.0).abs() < 1e-15);
        let v = variance_estimator(&[1.0, 2.0, 3.0, 2.0, 2.0]).unwrap();
        assert!((v.variance - 0.5).abs() < 1e-15);
        assert!(variance_estimator(&[1.0, 2.0, 3.0]).is_err());
    }

    #[test]
    fn standard_normal_mean() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let xs: Vec<f64> = (0..10_000)
            .map(|_| {
                let u: f64 = rng.random();
                let v: f64 = rng.random();
                (-2.0 * (1.0 - u).ln()).sqrt() * (std::f64::consts::TAU * v).cos()
            })
            .collect();
        let (m, se) = mean_estimator(&xs).unwrap();
        assert!(m.abs() < 4.0 / 100.0);
        assert!((se - 0.01).abs() < 1e-3);
    }

    #[test]
    fn variance_is_unbiased() {
        // Uniform(0, 1): variance 1/12.
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let reps = 10_000;
        let mean_v = (0..reps)
            .map(|_| {
                let xs: Vec<f64> = (0..50).map(|_| rng.random::<f64>()).collect();
                variance_estimator(&xs).unwrap().variance
            })
            .sum::<f64>()
            / reps as f64;
        assert!((mean_v * 12.0 - 1.0).abs() < 0.01, "{mean_v}");
    }
}

//! Work-optimal finite-time protocols from the Euler–Lagrange first integral.
//!
//! Writing βε in terms of the occupation and its rate,
//! βε = ln[(2 − p)/(p + ṗ) − 1], turns the extracted work into a
//! time-independent Lagrangian in (p, ṗ). Its first integral
//!
//! ```text
//! K = ṗ²(2 − p) / ((p + ṗ)(2 − 2p − ṗ))
//! ```
//!
//! is conserved along extremals, and the quadratic in ṗ it defines has roots
//! ṗ± = ½(K(2 − 3p) ± √Δ)/(2 − p + K) with Δ = K²(2 − p)² + 8Kp(1 − p)(2 − p).
//! The empty branch (p: 0 ↗) follows ṗ₊, the occupied branch (p: 1 ↘)
//! follows ṗ₋. For a fixed K the trajectory is the inverse of the time map
//! t(p) = ∫ dp/ṗ, and the extracted work is
//!
//! ```text
//! βW(K) = (p₀ − p(τ))·ln 2 + ∫_{p₀}^{p(τ)} βε(p) dp.
//! ```
//!
//! The optimal constant κ_τ maximises βW(K) at fixed γτ.
//!
//! The closed forms below are arranged so that no cancellation occurs near
//! p → 0 or p → 1; the textbook expressions are kept in
//! [`beta_eps_textbook`] for cross-checking.

pub mod brute_force;

use std::f64::consts::LN_2;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::{brent, brent_min, Quadrature, RootOptions};
use crate::params::Branch;
use crate::protocol::{Protocol, Segment};

pub use brute_force::{brute_force_optimum, brute_force_optimum_for, BruteForceResult};

/// Closest approach to the saturated limits p → 1 (empty branch) or p → 0
/// (occupied branch), both of which take infinite time.
pub const MAX_PROGRESS: f64 = 1.0 - 1e-12;

/// Default ramp samples when emitting a protocol.
pub const DEFAULT_SAMPLES: usize = 256;

/// Height of the naive ramp above (or below) the reset level, in k_B T.
pub const NAIVE_RAMP_HEIGHT: f64 = 5.0;

/// Euler–Lagrange constant K.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ElConstant(f64);

impl ElConstant {
    pub fn new(k: f64) -> Result<Self> {
        if k.is_finite() && k > 0.0 {
            Ok(ElConstant(k))
        } else {
            Err(Error::invalid("k", format!("must be finite and > 0, got {k}")))
        }
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

/// Δ(p, K) = K²(2 − p)² + 8Kp(1 − p)(2 − p).
pub fn discriminant(p: f64, k: ElConstant) -> f64 {
    discriminant_pq(p, 1.0 - p, k.0)
}

// The *_pq forms take q = 1 − p separately so that it keeps full relative
// precision when p is within rounding distance of 1.
fn discriminant_pq(p: f64, q: f64, k: f64) -> f64 {
    let two_p = 2.0 - p;
    k * k * two_p * two_p + 8.0 * k * p * q * two_p
}

/// Optimal ṗ on the empty branch, ṗ₊(p, K).
pub fn pdot_optimal(p: f64, k: ElConstant) -> f64 {
    pdot(p, k, Branch::Empty)
}

/// Root of the first-integral quadratic selected by `branch`.
pub fn pdot(p: f64, k: ElConstant, branch: Branch) -> f64 {
    pdot_pq(p, 1.0 - p, k.0, branch)
}

fn pdot_pq(p: f64, q: f64, k: f64, branch: Branch) -> f64 {
    let sd = discriminant_pq(p, q, k).sqrt();
    let c = k * (2.0 - 3.0 * p);
    let denom = 2.0 - p + k;
    // (c + √Δ)(√Δ − c) = 8Kp(1 − p)(2 − p + K)
    let product = 8.0 * k * p * q * denom;
    let numerator = match branch {
        Branch::Empty if c >= 0.0 => c + sd,
        Branch::Empty => product / (sd - c),
        Branch::Occupied if c <= 0.0 => c - sd,
        Branch::Occupied => -product / (c + sd),
    };
    0.5 * numerator / denom
}

/// βε₀ along the extremal, as a function of p.
pub fn beta_eps_optimal(p: f64, k: ElConstant, branch: Branch) -> f64 {
    beta_eps_pq(p, 1.0 - p, k.0, branch)
}

fn beta_eps_pq(p: f64, q: f64, k: f64, branch: Branch) -> f64 {
    let sd = discriminant_pq(p, q, k).sqrt();
    let two_p = 2.0 - p;
    match branch {
        Branch::Empty => {
            let x = two_p * (4.0 * q + k) + sd;
            let y = two_p * (k + 2.0 * p) + sd;
            (16.0 * two_p * q * q * (two_p + k) / (x * y)).ln()
        }
        Branch::Occupied => ((two_p * k + 4.0 * p * q + sd) / (2.0 * p * p)).ln(),
    }
}

/// The direct expression ln[2(2 − p)(2 − p + K)/((2 − p)(K + 2p) + √Δ) − 1]
/// for the empty branch.
pub fn beta_eps_textbook(p: f64, k: ElConstant) -> f64 {
    let kv = k.0;
    let q = 2.0 - p;
    let sd = discriminant(p, k).sqrt();
    (2.0 * q * (q + kv) / (q * (kv + 2.0 * p) + sd) - 1.0).ln()
}

/// βε needed to produce rate `pdot` at occupation `p` (r = 2 dynamics).
pub fn beta_eps_from_rate(p: f64, pdot: f64) -> f64 {
    ((2.0 - p) / (p + pdot) - 1.0).ln()
}

/// ṗ²(2 − p)/((p + ṗ)(2 − 2p − ṗ)), constant along extremals.
pub fn first_integral(p: f64, pdot: f64) -> f64 {
    pdot * pdot * (2.0 - p) / ((p + pdot) * (2.0 - 2.0 * p - pdot))
}

/// x = −ln(1 − s) for progress s.
pub fn log_distance(progress: f64) -> f64 {
    -(-progress).ln_1p()
}

/// s = 1 − e^{−x}.
pub fn progress_of(log_distance: f64) -> f64 {
    -(-log_distance).exp_m1()
}

/// Where a finite-time extremal ends.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Endpoint {
    /// Distance travelled in p, |p(τ) − p₀|.
    pub progress: f64,
    /// −ln(1 − progress), the coordinate the solver works in.
    pub log_distance: f64,
    pub p: f64,
    /// True when γτ exceeds the time needed to reach [`MAX_PROGRESS`].
    pub saturated: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WorkForK {
    pub work: f64,
    pub endpoint: Endpoint,
}

/// One member of the extremal family: fixed K, fixed branch.
///
/// Positions are given either as the progress s = |p − p₀| ∈ [0, 1) or as
/// the log-distance x = −ln(1 − s) ∈ [0, ∞). Both saturated limits take
/// logarithmically divergent time, so in x the integrands are smooth and
/// bounded; all quadratures run in x.
#[derive(Debug, Clone, Copy)]
pub struct Extremal {
    k: ElConstant,
    branch: Branch,
    quadrature: Quadrature,
}

impl Extremal {
    pub fn new(k: ElConstant, branch: Branch) -> Self {
        Self::with_quadrature(k, branch, Quadrature::default())
    }

    pub fn with_quadrature(k: ElConstant, branch: Branch, quadrature: Quadrature) -> Self {
        Extremal { k, branch, quadrature }
    }

    pub fn k(&self) -> ElConstant {
        self.k
    }

    pub fn branch(&self) -> Branch {
        self.branch
    }

    /// `(p, 1 − p)` at log-distance `x`, each to full relative precision.
    fn state(&self, x: f64) -> (f64, f64) {
        let remaining = (-x).exp();
        let travelled = progress_of(x);
        match self.branch {
            Branch::Empty => (travelled, remaining),
            Branch::Occupied => (remaining, travelled),
        }
    }

    pub fn p_at(&self, progress: f64) -> f64 {
        self.branch.initial_probability() + self.branch.direction() * progress
    }

    pub fn p_at_x(&self, x: f64) -> f64 {
        self.state(x).0
    }

    pub fn pdot_at_x(&self, x: f64) -> f64 {
        let (p, q) = self.state(x);
        pdot_pq(p, q, self.k.0, self.branch)
    }

    pub fn beta_eps_at_x(&self, x: f64) -> f64 {
        let (p, q) = self.state(x);
        beta_eps_pq(p, q, self.k.0, self.branch)
    }

    fn dt_dx(&self, x: f64) -> f64 {
        (-x).exp() / self.pdot_at_x(x).abs()
    }

    fn check_progress(progress: f64) -> Result<()> {
        if (0.0..1.0).contains(&progress) {
            Ok(())
        } else {
            Err(Error::invalid(
                "progress",
                format!("must lie in [0, 1), got {progress}"),
            ))
        }
    }

    /// Reduced time to travel between two log-distances.
    pub fn time_between_x(&self, from: f64, to: f64) -> Result<f64> {
        Ok(self.quadrature.integrate(|x| self.dt_dx(x), from, to)?.value)
    }

    /// Reduced time needed to travel from `from` to `to` (progress units).
    pub fn time_between(&self, from: f64, to: f64) -> Result<f64> {
        Self::check_progress(from)?;
        Self::check_progress(to)?;
        self.time_between_x(log_distance(from), log_distance(to))
    }

    /// The time map F_K(s) = ∫₀^s ds/|ṗ|.
    pub fn time_of(&self, progress: f64) -> Result<f64> {
        self.time_between(0.0, progress)
    }

    /// ∫₀^s βε₀ ds along the extremal.
    pub fn eps_integral(&self, progress: f64) -> Result<f64> {
        Self::check_progress(progress)?;
        self.eps_integral_x(log_distance(progress))
    }

    fn eps_integral_x(&self, x: f64) -> Result<f64> {
        Ok(self
            .quadrature
            .integrate(|x| self.beta_eps_at_x(x) * (-x).exp(), 0.0, x)?
            .value)
    }

    fn endpoint_at(&self, x: f64, saturated: bool) -> Endpoint {
        Endpoint {
            progress: progress_of(x),
            log_distance: x,
            p: self.p_at_x(x),
            saturated,
        }
    }

    /// Inverts the time map: the endpoint reached after reduced time `gamma_tau`.
    pub fn endpoint(&self, gamma_tau: f64) -> Result<Endpoint> {
        if !(gamma_tau.is_finite() && gamma_tau >= 0.0) {
            return Err(Error::invalid("gamma_tau", format!("must be >= 0, got {gamma_tau}")));
        }
        if gamma_tau == 0.0 {
            return Ok(self.endpoint_at(0.0, false));
        }
        let x_max = log_distance(MAX_PROGRESS);
        let t_max = self.time_between_x(0.0, x_max)?;
        if t_max <= gamma_tau {
            return Ok(self.endpoint_at(x_max, true));
        }
        let x = brent(
            |x| Ok(self.time_between_x(0.0, x)? - gamma_tau),
            0.0,
            x_max,
            RootOptions::default(),
        )?;
        Ok(self.endpoint_at(x, false))
    }

    /// βW = (p₀ − p(τ))·ln 2 + ∫ βε₀ dp for the extremal stopped at γτ.
    pub fn work(&self, gamma_tau: f64) -> Result<WorkForK> {
        let endpoint = self.endpoint(gamma_tau)?;
        Ok(WorkForK {
            work: self.work_at_x(endpoint.log_distance)?,
            endpoint,
        })
    }

    /// Work of the extremal stopped at the given progress.
    pub fn work_at(&self, progress: f64) -> Result<f64> {
        Self::check_progress(progress)?;
        self.work_at_x(log_distance(progress))
    }

    fn work_at_x(&self, x: f64) -> Result<f64> {
        let direction = self.branch.direction();
        Ok(-direction * progress_of(x) * LN_2 + direction * self.eps_integral_x(x)?)
    }
}

/// F_K(p) on the empty branch: reduced time to reach `p_target` from p = 0.
pub fn time_of_p(p_target: f64, k: ElConstant) -> Result<f64> {
    Extremal::new(k, Branch::Empty).time_of(p_target)
}

/// F_K⁻¹(γτ) on the empty branch.
pub fn invert_time(gamma_tau: f64, k: ElConstant) -> Result<Endpoint> {
    Extremal::new(k, Branch::Empty).endpoint(gamma_tau)
}

/// G_K(P) = ∫₀^P βε₀(p) dp on the empty branch.
pub fn g_function(p_target: f64, k: ElConstant) -> Result<f64> {
    Extremal::new(k, Branch::Empty).eps_integral(p_target)
}

/// Extracted work βW(γτ, K) on the empty branch.
pub fn work_for_k(gamma_tau: f64, k: ElConstant) -> Result<WorkForK> {
    Extremal::new(k, Branch::Empty).work(gamma_tau)
}

/// The closed-form extremals assume Γ_in/Γ_out = 2.
pub const SUPPORTED_RATIO: f64 = 2.0;

/// Rejects devices whose degeneracy ratio the closed forms do not cover.
pub fn require_supported_ratio(ratio: f64) -> Result<()> {
    if (ratio - SUPPORTED_RATIO).abs() <= 1e-9 * SUPPORTED_RATIO {
        Ok(())
    } else {
        Err(Error::UnsupportedRatio(ratio))
    }
}

/// Search grid for κ_τ: log₁₀ K scanned from `log10_min` to `log10_max` in
/// `step` increments, then refined by Brent's method.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KappaSearch {
    pub log10_min: f64,
    pub log10_max: f64,
    pub step: f64,
    pub rel_tol: f64,
    /// Absolute tolerance of the time and energy integrals along the extremal.
    pub quadrature_tol: f64,
}

impl Default for KappaSearch {
    fn default() -> Self {
        KappaSearch {
            log10_min: -6.0,
            log10_max: 3.0,
            step: 0.25,
            rel_tol: 1e-6,
            quadrature_tol: 1e-10,
        }
    }
}

impl KappaSearch {
    fn extremal(&self, k: ElConstant, branch: Branch) -> Extremal {
        Extremal::with_quadrature(k, branch, Quadrature::with_abs_tol(self.quadrature_tol))
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct KappaOptimum {
    pub kappa: ElConstant,
    pub work: f64,
    pub endpoint: Endpoint,
    /// `(log10 K, βW)` for each scan point.
    pub scan: Vec<(f64, f64)>,
}

/// κ_τ on the empty branch.
pub fn optimize_kappa(gamma_tau: f64) -> Result<ElConstant> {
    Ok(optimize_kappa_for(gamma_tau, Branch::Empty, &KappaSearch::default())?.kappa)
}

/// Maximises βW(γτ, K) over K > 0 for one branch.
pub fn optimize_kappa_for(gamma_tau: f64, branch: Branch, search: &KappaSearch) -> Result<KappaOptimum> {
    if !(gamma_tau.is_finite() && gamma_tau > 0.0) {
        return Err(Error::invalid("gamma_tau", format!("must be > 0, got {gamma_tau}")));
    }
    if !(search.quadrature_tol > 0.0 && search.quadrature_tol < 1e-3) {
        return Err(Error::invalid(
            "quadrature_tol",
            format!("must be in (0, 1e-3), got {}", search.quadrature_tol),
        ));
    }
    let work_at = |log10_k: f64| -> Result<f64> {
        let k = ElConstant::new(10f64.powf(log10_k))?;
        Ok(search.extremal(k, branch).work(gamma_tau)?.work)
    };

    let n = ((search.log10_max - search.log10_min) / search.step).round() as usize;
    let mut scan = Vec::with_capacity(n + 1);
    for i in 0..=n {
        let x = search.log10_min + i as f64 * search.step;
        scan.push((x, work_at(x)?));
    }
    let best = scan
        .iter()
        .enumerate()
        .max_by(|a, b| a.1 .1.total_cmp(&b.1 .1))
        .map(|(i, _)| i)
        .unwrap();
    if best == 0 || best == n {
        return Err(Error::KappaBracket {
            gamma_tau,
            best_log10_k: scan[best].0,
            scan_len: scan.len(),
        });
    }

    let abs_tol = search.rel_tol / std::f64::consts::LN_10;
    let min = brent_min(
        |x| Ok(-work_at(x)?),
        scan[best - 1].0,
        scan[best + 1].0,
        0.0,
        abs_tol,
        200,
    )?;
    let kappa = ElConstant::new(10f64.powf(min.x))?;
    let result = search.extremal(kappa, branch).work(gamma_tau)?;
    Ok(KappaOptimum {
        kappa,
        work: result.work,
        endpoint: result.endpoint,
        scan,
    })
}

/// How ramp samples are placed along the optimal trajectory.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum NodeSpacing {
    /// Equal steps in p, mapped to t through the time map.
    UniformP,
    /// Equal steps in ½(s/s_end + t/γτ): spacing is bounded by 2/n of the
    /// range in both p and t.
    #[default]
    Balanced,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OptimalSolution {
    pub kappa_tau: ElConstant,
    pub gamma_tau: f64,
    pub branch: Branch,
    pub p_grid: Vec<f64>,
    pub t_grid: Vec<f64>,
    pub eps_grid: Vec<f64>,
    /// βW of the extremal (closed form).
    pub predicted_work: f64,
    pub saturated: bool,
}

impl OptimalSolution {
    pub fn initial_jump(&self) -> f64 {
        self.eps_grid[0] - LN_2
    }

    pub fn final_jump(&self) -> f64 {
        self.eps_grid[self.eps_grid.len() - 1] - LN_2
    }
}

/// Everything that controls how an optimal protocol is computed and sampled.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverSettings {
    /// Ramp intervals of the emitted protocol (nodes = samples + 1).
    pub samples: usize,
    pub spacing: NodeSpacing,
    pub search: KappaSearch,
}

impl Default for SolverSettings {
    fn default() -> Self {
        SolverSettings {
            samples: DEFAULT_SAMPLES,
            spacing: NodeSpacing::default(),
            search: KappaSearch::default(),
        }
    }
}

impl SolverSettings {
    pub fn with_samples(samples: usize) -> Self {
        SolverSettings {
            samples,
            ..Self::default()
        }
    }
}

/// Optimal protocol with [`NodeSpacing::Balanced`] samples.
pub fn build_optimal_protocol(
    gamma_tau: f64,
    grid_points: usize,
    branch: Branch,
) -> Result<(Protocol, OptimalSolution)> {
    build_optimal_protocol_with(gamma_tau, branch, &SolverSettings::with_samples(grid_points))
}

pub fn build_optimal_protocol_with(
    gamma_tau: f64,
    branch: Branch,
    settings: &SolverSettings,
) -> Result<(Protocol, OptimalSolution)> {
    let n = settings.samples;
    if n < 16 {
        return Err(Error::invalid("grid_points", format!("must be >= 16, got {n}")));
    }
    let opt = optimize_kappa_for(gamma_tau, branch, &settings.search)?;
    let solution = solution_for(
        gamma_tau,
        opt.kappa,
        branch,
        n,
        settings.spacing,
        settings.search.quadrature_tol,
        opt.work,
        opt.endpoint,
    )?;
    Ok((protocol_from_solution(&solution)?, solution))
}

/// Samples the extremal with constant `kappa` at `grid_points + 1` nodes.
pub fn sample_extremal(
    gamma_tau: f64,
    kappa: ElConstant,
    branch: Branch,
    grid_points: usize,
    spacing: NodeSpacing,
) -> Result<OptimalSolution> {
    let tol = KappaSearch::default().quadrature_tol;
    let w = Extremal::new(kappa, branch).work(gamma_tau)?;
    solution_for(gamma_tau, kappa, branch, grid_points, spacing, tol, w.work, w.endpoint)
}

#[allow(clippy::too_many_arguments)]
fn solution_for(
    gamma_tau: f64,
    kappa: ElConstant,
    branch: Branch,
    n: usize,
    spacing: NodeSpacing,
    quadrature_tol: f64,
    work: f64,
    endpoint: Endpoint,
) -> Result<OptimalSolution> {
    let extremal = Extremal::new(kappa, branch);
    let s_end = endpoint.progress;
    let x_end = endpoint.log_distance;
    // Short panels: absolute tolerance scaled down so the summed node times
    // stay within the global tolerance.
    let local = Extremal::with_quadrature(kappa, branch, Quadrature::with_abs_tol(quadrature_tol * 1e-2));

    let mut x_grid = Vec::with_capacity(n + 1);
    let mut t_grid = Vec::with_capacity(n + 1);
    x_grid.push(0.0);
    t_grid.push(0.0);
    for i in 1..n {
        let (x_prev, t_prev) = (x_grid[i - 1], t_grid[i - 1]);
        let x = match spacing {
            NodeSpacing::UniformP => log_distance(s_end * i as f64 / n as f64),
            NodeSpacing::Balanced => {
                let target = i as f64 / n as f64;
                brent(
                    |x| {
                        let t = t_prev + local.time_between_x(x_prev, x)?;
                        Ok(0.5 * (progress_of(x) / s_end + t / gamma_tau) - target)
                    },
                    x_prev,
                    x_end,
                    RootOptions::default(),
                )?
            }
        };
        let t = t_prev + local.time_between_x(x_prev, x)?;
        x_grid.push(x);
        t_grid.push(t);
    }
    x_grid.push(x_end);
    t_grid.push(gamma_tau);

    for (i, w) in t_grid.windows(2).enumerate() {
        if w[1] <= w[0] {
            return Err(Error::Optimizer(format!(
                "time grid not increasing at node {i}: {} -> {}",
                w[0], w[1]
            )));
        }
    }

    Ok(OptimalSolution {
        kappa_tau: kappa,
        gamma_tau,
        branch,
        p_grid: x_grid.iter().map(|&x| extremal.p_at_x(x)).collect(),
        eps_grid: x_grid.iter().map(|&x| extremal.beta_eps_at_x(x)).collect(),
        t_grid,
        predicted_work: work,
        saturated: endpoint.saturated,
    })
}

/// Jump from ln 2 onto the extremal, ramp along it, jump back to ln 2.
pub fn protocol_from_solution(solution: &OptimalSolution) -> Result<Protocol> {
    let eps = &solution.eps_grid;
    let samples = solution.t_grid.iter().zip(eps).map(|(&t, &e)| [t, e]).collect();
    Protocol::new(
        solution.branch,
        vec![
            Segment::Jump { from: LN_2, to: eps[0] },
            Segment::Ramp {
                duration: solution.gamma_tau,
                samples,
            },
            Segment::Jump {
                from: eps[eps.len() - 1],
                to: LN_2,
            },
        ],
    )
}

/// Linear ramp from ln 2 ± 5 back to ln 2 over γτ, entered by a jump. The
/// occupied branch mirrors the empty one about ln 2.
pub fn naive_ramp(gamma_tau: f64, branch: Branch) -> Result<Protocol> {
    if !(gamma_tau.is_finite() && gamma_tau > 0.0) {
        return Err(Error::invalid("gamma_tau", format!("must be > 0, got {gamma_tau}")));
    }
    let top = LN_2 + branch.direction() * NAIVE_RAMP_HEIGHT;
    Protocol::new(
        branch,
        vec![
            Segment::Jump { from: LN_2, to: top },
            Segment::Ramp {
                duration: gamma_tau,
                samples: vec![[0.0, top], [gamma_tau, LN_2]],
            },
        ],
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn k(x: f64) -> ElConstant {
        ElConstant::new(x).unwrap()
    }

    #[test]
    fn ratio_guard() {
        assert!(require_supported_ratio(2.0).is_ok());
        assert!(matches!(require_supported_ratio(3.0), Err(Error::UnsupportedRatio(_))));
    }

    #[test]
    fn discriminant_examples() {
        for kv in [0.1, 1.0, 7.0] {
            assert!((discriminant(0.0, k(kv)) - 4.0 * kv * kv).abs() < 1e-12);
            assert!((discriminant(1.0, k(kv)) - kv * kv).abs() < 1e-12);
        }
        assert!((discriminant(0.5, k(1.0)) - 5.25).abs() < 1e-14);
    }

    #[test]
    fn pdot_examples() {
        assert!((pdot_optimal(0.0, k(2.0)) - 1.0).abs() < 1e-15);
        for kv in [1e-4, 0.3, 1.0, 50.0] {
            assert!(pdot_optimal(1.0, k(kv)).abs() < 1e-15);
            assert!((pdot_optimal(0.0, k(kv)) - 2.0 * kv / (2.0 + kv)).abs() < 1e-14);
            // occupied branch starts at −K/(1 + K) and stalls at p = 0
            assert!((pdot(1.0, k(kv), Branch::Occupied) + kv / (1.0 + kv)).abs() < 1e-14);
            assert!(pdot(0.0, k(kv), Branch::Occupied).abs() < 1e-15);
        }
    }

    #[test]
    fn stable_roots_match_direct_formula() {
        for kv in [1e-3, 0.2, 3.0] {
            for i in 1..100 {
                let p = i as f64 / 100.0;
                let sd = discriminant(p, k(kv)).sqrt();
                let denom = 2.0 - p + kv;
                let plus = 0.5 * (kv * (2.0 - 3.0 * p) + sd) / denom;
                let minus = 0.5 * (kv * (2.0 - 3.0 * p) - sd) / denom;
                assert!((pdot(p, k(kv), Branch::Empty) - plus).abs() < 1e-12);
                assert!((pdot(p, k(kv), Branch::Occupied) - minus).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn roots_satisfy_first_integral() {
        for kv in [1e-4, 0.05, 0.7, 4.0] {
            for i in 1..50 {
                let p = i as f64 / 50.0;
                for b in Branch::BOTH {
                    let v = pdot(p, k(kv), b);
                    let got = first_integral(p, v);
                    assert!((got - kv).abs() < 1e-9 * kv, "K={kv} p={p} {b}: {got}");
                }
            }
        }
    }

    #[test]
    fn beta_eps_forms_agree() {
        for kv in [1e-3, 0.2, 1.0, 9.0] {
            for i in 0..100 {
                let p = i as f64 / 100.0;
                let stable = beta_eps_optimal(p, k(kv), Branch::Empty);
                assert!((stable - beta_eps_textbook(p, k(kv))).abs() < 1e-8);
                let from_rate = beta_eps_from_rate(p, pdot_optimal(p, k(kv)));
                assert!((stable - from_rate).abs() < 1e-8, "K={kv} p={p}");
                if p > 0.0 {
                    let occ = beta_eps_optimal(p, k(kv), Branch::Occupied);
                    let from_rate = beta_eps_from_rate(p, pdot(p, k(kv), Branch::Occupied));
                    assert!((occ - from_rate).abs() < 1e-8, "occupied K={kv} p={p}");
                }
            }
        }
    }

    #[test]
    fn g_integrand_at_origin() {
        for kv in [0.05, 0.2, 1.0, 1.7] {
            let v = beta_eps_optimal(0.0, k(kv), Branch::Empty);
            assert!((v - (2.0 / kv).ln()).abs() < 1e-13);
        }
        assert!((beta_eps_optimal(0.0, k(0.2), Branch::Empty) - 10f64.ln()).abs() < 1e-13);
        assert!((beta_eps_optimal(1.0, k(0.3), Branch::Occupied) - 0.3f64.ln()).abs() < 1e-13);
    }

    #[test]
    fn time_integrand_at_origin_is_inverse_rate() {
        // dt/dp at p = 0 is 1/ṗ₊(0) = (2 + K)/(2K): 2.5 for K = 0.5.
        let e = Extremal::new(k(0.5), Branch::Empty);
        assert!((e.dt_dx(0.0) - 2.5).abs() < 1e-14);
        assert!((1.0 / pdot_optimal(0.0, k(0.5)) - 2.5).abs() < 1e-14);
    }

    #[test]
    fn time_map_basics() {
        assert_eq!(time_of_p(0.0, k(1.0)).unwrap(), 0.0);
        assert!(time_of_p(0.6, k(1.0)).unwrap() > time_of_p(0.3, k(1.0)).unwrap());
        assert!(time_of_p(1.0, k(1.0)).is_err());
        assert_eq!(g_function(0.0, k(1.0)).unwrap(), 0.0);
    }

    #[test]
    fn invert_round_trip() {
        for kv in [0.1, 1.0, 10.0] {
            let t = time_of_p(0.4, k(kv)).unwrap();
            let e = invert_time(t, k(kv)).unwrap();
            assert!(!e.saturated);
            assert!((e.p - 0.4).abs() < 1e-8, "K={kv}: {}", e.p);
        }
        assert_eq!(invert_time(0.0, k(1.0)).unwrap().p, 0.0);
    }

    #[test]
    fn invert_small_time_is_linear() {
        let dt = 1e-4;
        let p = invert_time(dt, k(1.0)).unwrap().p;
        let expected = dt * 2.0 / 3.0;
        assert!(((p - expected) / expected).abs() < 1e-3);
    }

    #[test]
    fn saturation_is_flagged() {
        let e = invert_time(1e4, k(10.0)).unwrap();
        assert!(e.saturated);
        assert_eq!(e.progress, MAX_PROGRESS);
    }

    #[test]
    fn work_bounds() {
        for kv in [1e-3, 0.1, 1.0] {
            assert_eq!(work_for_k(0.0, k(kv)).unwrap().work, 0.0);
            for gt in [0.1, 1.0, 10.0] {
                for b in Branch::BOTH {
                    let w = Extremal::new(k(kv), b).work(gt).unwrap().work;
                    assert!(w <= LN_2, "K={kv} γτ={gt} {b}: {w}");
                }
            }
        }
    }

    #[test]
    fn quasistatic_limit_reaches_landauer() {
        // With K → 0 the extremal tracks equilibrium; stopped at p = 1/2 the
        // extracted work approaches ln 2.
        let e = Extremal::new(k(1e-9), Branch::Empty);
        let w = e.work_at(0.5).unwrap();
        assert!((w - LN_2).abs() < 1e-3, "{w}");
        let e = Extremal::new(k(1e-9), Branch::Occupied);
        let w = e.work_at(0.5).unwrap();
        assert!((w - LN_2).abs() < 1e-3, "{w}");
    }

    #[test]
    fn kappa_maximises_work() {
        let gt = 1.0;
        let opt = optimize_kappa_for(gt, Branch::Empty, &KappaSearch::default()).unwrap();
        let kappa = opt.kappa.value();
        assert!(kappa < 1.0);
        for f in [0.5, 0.9, 1.1, 2.0] {
            let w = work_for_k(gt, k(kappa * f)).unwrap().work;
            assert!(opt.work >= w, "factor {f}: {w} > {}", opt.work);
        }
        // dense scan agrees with the refined maximum
        let dense = (0..400)
            .map(|i| kappa * 10f64.powf(-0.5 + i as f64 / 400.0))
            .map(|kk| work_for_k(gt, k(kk)).unwrap().work)
            .fold(f64::MIN, f64::max);
        assert!(opt.work >= dense - 1e-10);
    }

    #[test]
    fn kappa_decreases_with_duration() {
        let ks: Vec<f64> = [0.1, 1.0, 10.0, 100.0]
            .iter()
            .map(|&gt| optimize_kappa(gt).unwrap().value())
            .collect();
        assert!(ks.windows(2).all(|w| w[1] < w[0]), "{ks:?}");
        assert!(ks.iter().all(|&x| x < 1.0));
    }

    #[test]
    fn optimal_protocol_shape() {
        let (protocol, sol) = build_optimal_protocol(1.0, 64, Branch::Empty).unwrap();
        protocol.validate_boundaries().unwrap();
        assert!(matches!(protocol.segments[0], Segment::Jump { .. }));
        assert_eq!(sol.t_grid[0], 0.0);
        assert_eq!(*sol.t_grid.last().unwrap(), 1.0);
        assert!(sol.t_grid.windows(2).all(|w| w[1] > w[0]));
        assert!(sol.p_grid.windows(2).all(|w| w[1] > w[0]));
        assert_eq!(sol.p_grid[0], 0.0);
        assert!(sol.eps_grid[0] > LN_2);
        assert!((sol.eps_grid[0] - (2.0 / sol.kappa_tau.value()).ln()).abs() < 1e-12);

        let (protocol, sol) = build_optimal_protocol(1.0, 64, Branch::Occupied).unwrap();
        protocol.validate_boundaries().unwrap();
        assert_eq!(sol.p_grid[0], 1.0);
        assert!(sol.p_grid.windows(2).all(|w| w[1] < w[0]));
        assert!(sol.eps_grid[0] < LN_2);
        assert!(build_optimal_protocol(1.0, 8, Branch::Empty).is_err());
    }

    #[test]
    fn end_jump_shrinks_with_duration() {
        let (_, fast) = build_optimal_protocol(0.1, 32, Branch::Empty).unwrap();
        let (_, slow) = build_optimal_protocol(10.0, 32, Branch::Empty).unwrap();
        assert!(slow.final_jump() < fast.final_jump());
        assert!(slow.final_jump() > 0.0);
    }

    #[test]
    fn fast_protocol_is_jump_dominated() {
        let (protocol, sol) = build_optimal_protocol(0.1, 64, Branch::Empty).unwrap();
        let mid = protocol.value_at(0.05);
        let spread = sol.eps_grid.iter().map(|e| (e - mid).abs()).fold(0.0, f64::max);
        assert!(spread < 0.25 * sol.initial_jump(), "{spread} vs {}", sol.initial_jump());
    }

    #[test]
    fn naive_ramp_shape() {
        let p = naive_ramp(2.0, Branch::Empty).unwrap();
        p.validate_boundaries().unwrap();
        assert!((p.value_at(0.0) - (LN_2 + 5.0)).abs() < 1e-15);
        assert!((p.value_at(2.0) - LN_2).abs() < 1e-15);
        for t in [0.3, 0.9, 1.7] {
            assert!((p.value_at(t) - (LN_2 + 5.0 - 2.5 * t)).abs() < 1e-12);
        }
        let q = naive_ramp(2.0, Branch::Occupied).unwrap();
        assert!((q.value_at(0.0) - (LN_2 - 5.0)).abs() < 1e-15);
        assert!(naive_ramp(0.0, Branch::Empty).is_err());
    }
}

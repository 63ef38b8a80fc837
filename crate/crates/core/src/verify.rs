//! Monte Carlo certification of a computed closed-loop strategy.
//!
//! Every comparison runs both sides on the same [`NoisePlan`], so identities
//! that hold pathwise up to martingale terms cancel sharply.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use crate::error::Result;
use crate::feedforward::{AdjointSolution, ClosedLoopStrategy, Solution};
use crate::linalg::{self, Vector};
use crate::noise::{Channel, CounterRng, NoisePlan};
use crate::problem::{Coefficients, TimeGrid, ValidatedProblem};
use crate::riccati::RiccatiSolution;
use crate::sim::{check_strategy, Controller, OffsetStrategy, OpenLoopControls, Simulator, Trajectory};

/// Mean and standard error of a per-path quantity.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CostReport {
    pub mean: f64,
    pub std_error: f64,
    pub paths: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub per_path: Option<Vec<f64>>,
}

impl CostReport {
    /// Welford updates in path order: the result does not depend on
    /// scheduling, and identical samples give their value with zero error.
    pub fn from_samples(samples: &[f64], keep: bool) -> Self {
        let n = samples.len();
        let (mut mean, mut m2) = (0.0_f64, 0.0_f64);
        for (i, x) in samples.iter().enumerate() {
            let d = x - mean;
            mean += d / (i + 1) as f64;
            m2 += d * (x - mean);
        }
        let std_error = if n > 1 { (m2 / (n - 1) as f64 / n as f64).sqrt() } else { 0.0 };
        Self {
            mean,
            std_error,
            paths: n,
            per_path: keep.then(|| samples.to_vec()),
        }
    }
}

/// One named check. `pass` iff `|gap| <= tolerance`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IdentityReport {
    pub name: String,
    pub lhs: f64,
    pub rhs: f64,
    pub gap: f64,
    pub tolerance: f64,
    pub pass: bool,
}

impl IdentityReport {
    pub fn new(name: impl Into<String>, lhs: f64, rhs: f64, gap: f64, tolerance: f64) -> Self {
        Self {
            name: name.into(),
            lhs,
            rhs,
            gap,
            tolerance,
            pass: gap.abs() <= tolerance,
        }
    }
}

fn running_cost(c: &Coefficients, x: &Vector, u: &Vector) -> f64 {
    (&c.Q * x).dot(x) + 2.0 * (&c.S * x).dot(u) + (&c.R * u).dot(u) + 2.0 * c.q.dot(x) + 2.0 * c.rho.dot(u)
}

fn cost_with(nodes: &[Coefficients], prob: &ValidatedProblem, traj: &Trajectory) -> f64 {
    let h = prob.grid().h();
    let running: f64 = traj
        .u
        .iter()
        .enumerate()
        .map(|(k, u)| running_cost(&nodes[k], &traj.x[k], u))
        .sum();
    let xt = traj.terminal();
    running * h + (&prob.H * xt).dot(xt) + 2.0 * prob.g.dot(xt)
}

fn node_coeffs(prob: &ValidatedProblem) -> Vec<Coefficients> {
    (0..=prob.grid().steps).map(|k| prob.coeffs_at_node(k)).collect()
}

/// Realized cost of one trajectory: left-endpoint rectangle rule for the
/// running cost plus the terminal cost.
pub fn cost_along(traj: &Trajectory, prob: &ValidatedProblem) -> f64 {
    cost_with(&node_coeffs(prob), prob, traj)
}

/// Monte Carlo estimate of the cost of a control source.
pub fn mc_cost(prob: &ValidatedProblem, ctrl: &dyn Controller, plan: &NoisePlan) -> Result<CostReport> {
    mc_cost_from(prob, ctrl, plan, &prob.x0, false)
}

fn mc_cost_from(
    prob: &ValidatedProblem,
    ctrl: &dyn Controller,
    plan: &NoisePlan,
    x0: &Vector,
    keep: bool,
) -> Result<CostReport> {
    let nodes = node_coeffs(prob);
    let sim = Simulator::new(prob);
    let costs = sim.map_paths(ctrl, plan, x0, |tr| Ok(cost_with(&nodes, prob, &tr)))?;
    Ok(CostReport::from_samples(&costs, keep))
}

/// `1 + max_k ||P(t_k)||_2 (1 + |x0|^2)`.
pub fn problem_scale(prob: &ValidatedProblem, ride: &RiccatiSolution) -> Result<f64> {
    let mut pmax = 0.0_f64;
    for p in &ride.p {
        pmax = pmax.max(linalg::norm2(p)?);
    }
    Ok(1.0 + pmax * (1.0 + prob.x0.norm_squared()))
}

/// Allowance for Euler and quadrature bias: `10 h scale`.
pub fn discretization_allowance(grid: &TimeGrid, scale: f64) -> f64 {
    10.0 * grid.h() * scale
}

/// Closed-loop Monte Carlo cost against `V(t0, x0)`.
pub fn value_match_check(prob: &ValidatedProblem, sol: &Solution, plan: &NoisePlan) -> Result<IdentityReport> {
    let mc = mc_cost(prob, &sol.strategy, plan)?;
    let v = sol.value(prob, prob.grid().t0, &prob.x0)?.value;
    let scale = problem_scale(prob, &sol.ride)?;
    let tol = 3.0 * mc.std_error + discretization_allowance(prob.grid(), scale);
    Ok(IdentityReport::new("value_match", mc.mean, v, mc.mean - v, tol))
}

/// A control to compare against the closed-loop outcome.
#[derive(Debug, Clone, PartialEq)]
pub enum Probe {
    /// Deterministic open-loop control, one vector per step.
    OpenLoop(Vec<Vector>),
    /// The closed-loop outcome plus a deterministic offset per step.
    Perturbed(Vec<Vector>),
}

impl Probe {
    fn with_controller<T>(&self, strat: &ClosedLoopStrategy, f: impl FnOnce(&dyn Controller) -> T) -> T {
        match self {
            Probe::OpenLoop(u) => f(&OpenLoopControls::Shared(u.clone())),
            Probe::Perturbed(off) => f(&OffsetStrategy {
                base: strat,
                offset: off.clone(),
            }),
        }
    }
}

/// Per-probe outcome of the completion-of-squares check.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CompletionReport {
    /// `J(u) - J(closed loop)` against `E sum_k h <Rhat delta_k, delta_k>`.
    pub identity: IdentityReport,
    /// `J(u) - J(closed loop) >= -3 SE`.
    pub optimality: IdentityReport,
    pub excess_cost: CostReport,
    pub penalty: CostReport,
}

/// Checks `J(u) = J(Theta X + v) + E int <Rhat (u - Theta X - v), u - Theta X - v> ds`
/// for each probe under common random numbers.
pub fn completion_of_squares_check(
    prob: &ValidatedProblem,
    ride: &RiccatiSolution,
    strat: &ClosedLoopStrategy,
    probes: &[Probe],
    plan: &NoisePlan,
) -> Result<Vec<CompletionReport>> {
    check_strategy(prob, strat)?;
    let nodes = node_coeffs(prob);
    let sim = Simulator::new(prob);
    let h = prob.grid().h();
    let scale = problem_scale(prob, ride)?;
    let allowance = discretization_allowance(prob.grid(), scale);
    let closed = sim.map_paths(strat, plan, &prob.x0, |tr| Ok(cost_with(&nodes, prob, &tr)))?;

    let mut out = Vec::with_capacity(probes.len());
    for (i, probe) in probes.iter().enumerate() {
        let per_path: Vec<(f64, f64)> = probe.with_controller(strat, |ctrl| {
            sim.map_paths(ctrl, plan, &prob.x0, |tr| {
                let penalty: f64 = tr
                    .u
                    .iter()
                    .enumerate()
                    .map(|(k, u)| {
                        let delta = u - strat.control(k, &tr.x[k]);
                        (&ride.ops[k].rhat * &delta).dot(&delta)
                    })
                    .sum::<f64>()
                    * h;
                Ok((cost_with(&nodes, prob, &tr), penalty))
            })
        })?;
        let excess: Vec<f64> = per_path.iter().zip(&closed).map(|((j, _), jc)| j - jc).collect();
        let penalty: Vec<f64> = per_path.iter().map(|(_, p)| *p).collect();
        let diff: Vec<f64> = excess.iter().zip(&penalty).map(|(e, p)| e - p).collect();
        let excess = CostReport::from_samples(&excess, false);
        let penalty = CostReport::from_samples(&penalty, false);
        let combined = CostReport::from_samples(&diff, false);
        let identity = IdentityReport::new(
            format!("completion_of_squares[{i}]"),
            excess.mean,
            penalty.mean,
            excess.mean - penalty.mean,
            3.0 * combined.std_error + allowance,
        );
        let optimality = IdentityReport::new(
            format!("optimality[{i}]"),
            excess.mean,
            0.0,
            excess.mean.min(0.0),
            3.0 * excess.std_error,
        );
        out.push(CompletionReport {
            identity,
            optimality,
            excess_cost: excess,
            penalty,
        });
    }
    Ok(out)
}

/// Largest `|B'Y + D'Z + sum_i pi_i G_i'K_i + (S + R Theta) X + R v + rho|`
/// along closed-loop paths, with `Y = PX + eta`,
/// `Z = P(C + D Theta)X + PDv + P sigma`,
/// `K_i = P(F_i + G_i Theta)X + PG_i v + P f_i`.
pub fn stationarity_residual(
    prob: &ValidatedProblem,
    ride: &RiccatiSolution,
    adj: &AdjointSolution,
    strat: &ClosedLoopStrategy,
    plan: &NoisePlan,
) -> Result<f64> {
    check_strategy(prob, strat)?;
    let nodes = node_coeffs(prob);
    let sim = Simulator::new(prob);
    let per_path = sim.map_paths(strat, plan, &prob.x0, |tr| {
        let mut worst = 0.0_f64;
        for (k, x) in tr.x.iter().enumerate() {
            let c = &nodes[k];
            let p = &ride.p[k];
            let theta = &strat.theta[k];
            let v = &strat.v[k];
            let y = p * x + &adj.eta[k];
            let z = p * ((&c.C + &c.D * theta) * x) + p * (&c.D * v) + p * &c.sigma;
            let mut r = c.B.transpose() * &y + c.D.transpose() * &z + (&c.S + &c.R * theta) * x + &c.R * v + &c.rho;
            for i in 0..c.pi.len() {
                if c.pi[i] == 0.0 {
                    continue;
                }
                let ki = p * ((&c.F[i] + &c.G[i] * theta) * x) + p * (&c.G[i] * v) + p * &c.f[i];
                r += (c.G[i].transpose() * ki) * c.pi[i];
            }
            worst = worst.max(r.norm());
        }
        Ok(worst)
    })?;
    Ok(per_path.into_iter().fold(0.0, f64::max))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvexityReport {
    /// Smallest probe mean.
    pub min_value: f64,
    /// Standard error of the probe attaining the minimum.
    pub min_std_error: f64,
    pub values: Vec<CostReport>,
}

impl ConvexityReport {
    /// `min >= -3 SE`.
    pub fn consistent(&self) -> bool {
        self.min_value >= -3.0 * self.min_std_error
    }
}

/// Homogeneous cost from the zero initial state under each open-loop probe.
/// A negative mean beyond `3 SE` certifies non-convexity.
pub fn convexity_probe(prob: &ValidatedProblem, probes: &[Vec<Vector>], plan: &NoisePlan) -> Result<ConvexityReport> {
    let hom = prob.homogeneous();
    let zero = Vector::zeros(prob.n);
    let mut values = Vec::with_capacity(probes.len());
    for u in probes {
        let ctrl = OpenLoopControls::Shared(u.clone());
        crate::sim::check_controls(&hom, &ctrl, plan)?;
        values.push(mc_cost_from(&hom, &ctrl, plan, &zero, false)?);
    }
    let (min_value, min_std_error) = values
        .iter()
        .map(|r| (r.mean, r.std_error))
        .fold((f64::INFINITY, 0.0), |acc, v| if v.0 < acc.0 { v } else { acc });
    Ok(ConvexityReport {
        min_value,
        min_std_error,
        values,
    })
}

/// Replays the recorded closed-loop controls path by path as open-loop
/// controls under the same plan; passes iff every trajectory and the mean
/// cost are reproduced bit-exactly.
pub fn equivalence_check(prob: &ValidatedProblem, strat: &ClosedLoopStrategy, plan: &NoisePlan) -> Result<IdentityReport> {
    check_strategy(prob, strat)?;
    let nodes = node_coeffs(prob);
    let sim = Simulator::new(prob);
    let per_path = sim.map_paths(strat, plan, &prob.x0, |tr| {
        let replay_ctrl = OpenLoopControls::Shared(tr.u.clone());
        let replay = sim.path(&replay_ctrl, plan, tr.path, &prob.x0)?;
        Ok((cost_with(&nodes, prob, &tr), cost_with(&nodes, prob, &replay), replay == tr))
    })?;
    let closed: Vec<f64> = per_path.iter().map(|p| p.0).collect();
    let replay: Vec<f64> = per_path.iter().map(|p| p.1).collect();
    let identical = per_path.iter().all(|p| p.2);
    let lhs = CostReport::from_samples(&closed, false).mean;
    let rhs = CostReport::from_samples(&replay, false).mean;
    let gap = if identical { lhs - rhs } else { f64::INFINITY };
    Ok(IdentityReport::new("equivalence_replay", lhs, rhs, gap, 0.0))
}

/// Probe family: constant unit controls along each axis, then seeded
/// Gaussian piecewise-constant paths (four pieces) until `count` probes.
pub fn default_probes(m: usize, grid: &TimeGrid, count: usize, seed: u64) -> Vec<Vec<Vector>> {
    let steps = grid.steps;
    let mut probes = Vec::with_capacity(count);
    for axis in 0..m.min(count) {
        let mut e = Vector::zeros(m);
        e[axis] = 1.0;
        probes.push(vec![e; steps]);
    }
    let pieces = 4.min(steps);
    let mut j = 0u64;
    while probes.len() < count {
        // Keyed away from simulation paths so probes never share draws with them.
        let mut rng = CounterRng::new(seed, u64::MAX - j, 0, Channel::Brownian);
        let levels: Vec<Vector> = (0..pieces)
            .map(|_| Vector::from_iterator(m, (0..m).map(|_| rng.sample::<f64, _>(StandardNormal))))
            .collect();
        probes.push((0..steps).map(|k| levels[k * pieces / steps].clone()).collect());
        j += 1;
    }
    probes
}

/// Knobs of a full verification run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SuiteConfig {
    pub seed: u64,
    pub paths: usize,
    pub completion_probes: usize,
    pub convexity_probes: usize,
    /// Paths used for the stationarity residual (it does not depend on MC error).
    pub stationarity_paths: usize,
    pub stationarity_tol: f64,
}

impl Default for SuiteConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            paths: 10_000,
            completion_probes: 5,
            convexity_probes: 20,
            stationarity_paths: 200,
            stationarity_tol: 1e-8,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Environment {
    pub seed: u64,
    pub steps: usize,
    pub paths: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct VerificationReport {
    pub checks: Vec<IdentityReport>,
    pub environment: Environment,
}

impl VerificationReport {
    pub fn all_pass(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    pub fn failing(&self) -> impl Iterator<Item = &IdentityReport> {
        self.checks.iter().filter(|c| !c.pass)
    }
}

/// Value match, completion of squares with optimality, stationarity,
/// convexity and replay equivalence.
pub fn run_suite(prob: &ValidatedProblem, sol: &Solution, cfg: &SuiteConfig) -> Result<VerificationReport> {
    let plan = NoisePlan::new(cfg.seed, cfg.paths);
    let grid = prob.grid();
    let mut checks = vec![value_match_check(prob, sol, &plan)?];

    let probes: Vec<Probe> = default_probes(prob.m, grid, cfg.completion_probes, cfg.seed)
        .into_iter()
        .map(Probe::OpenLoop)
        .collect();
    for rep in completion_of_squares_check(prob, &sol.ride, &sol.strategy, &probes, &plan)? {
        checks.push(rep.identity);
        checks.push(rep.optimality);
    }

    let scale = problem_scale(prob, &sol.ride)?;
    let st_plan = NoisePlan::new(cfg.seed, cfg.stationarity_paths.min(cfg.paths).max(1));
    let resid = stationarity_residual(prob, &sol.ride, &sol.adjoint, &sol.strategy, &st_plan)?;
    checks.push(IdentityReport::new("stationarity_residual", resid, 0.0, resid, cfg.stationarity_tol * scale));

    let conv_probes = default_probes(prob.m, grid, cfg.convexity_probes, cfg.seed ^ 0xC0FFEE);
    let conv = convexity_probe(prob, &conv_probes, &plan)?;
    checks.push(IdentityReport::new(
        "convexity_min",
        conv.min_value,
        0.0,
        conv.min_value.min(0.0),
        3.0 * conv.min_std_error,
    ));

    checks.push(equivalence_check(prob, &sol.strategy, &plan)?);

    Ok(VerificationReport {
        checks,
        environment: Environment {
            seed: cfg.seed,
            steps: grid.steps,
            paths: cfg.paths,
        },
    })
}

//! Euler simulation of the controlled jump-diffusion
//!
//! ```text
//! X_{k+1} = X_k + (A X_k + B u_k + b) h + (C X_k + D u_k + sigma) dW
//!               + sum_i (F_i X_k + G_i u_k + f_i) (dN_i - pi_i h)
//! ```
//!
//! with coefficients at `t_k` and `u_k` computed from `X_k` (left endpoint),
//! which keeps controls predictable. Paths run in parallel; draws come from
//! [`NoisePlan`], so batches are bit-identical for any thread count.

use std::io::Write;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::feedforward::ClosedLoopStrategy;
use crate::linalg::Vector;
use crate::noise::NoisePlan;
use crate::problem::{Coefficients, TimeGrid, ValidatedProblem};

/// Anything that can pick `u_k` from `(path, k, X_k)`.
pub trait Controller: Sync {
    fn control(&self, path: usize, k: usize, x: &Vector) -> Vector;
}

impl Controller for ClosedLoopStrategy {
    fn control(&self, _path: usize, k: usize, x: &Vector) -> Vector {
        ClosedLoopStrategy::control(self, k, x)
    }
}

/// Exogenous controls, indexed by step.
#[derive(Debug, Clone, PartialEq)]
pub enum OpenLoopControls {
    /// One deterministic path shared by all Monte Carlo paths.
    Shared(Vec<Vector>),
    /// `controls[path][k]`.
    PerPath(Vec<Vec<Vector>>),
}

impl Controller for OpenLoopControls {
    fn control(&self, path: usize, k: usize, _x: &Vector) -> Vector {
        match self {
            OpenLoopControls::Shared(u) => u[k].clone(),
            OpenLoopControls::PerPath(u) => u[path][k].clone(),
        }
    }
}

/// Feedback `Theta X + v + offset_k`, used for perturbed-strategy probes.
#[derive(Debug, Clone)]
pub struct OffsetStrategy<'a> {
    pub base: &'a ClosedLoopStrategy,
    pub offset: Vec<Vector>,
}

impl Controller for OffsetStrategy<'_> {
    fn control(&self, _path: usize, k: usize, x: &Vector) -> Vector {
        self.base.control(k, x) + &self.offset[k]
    }
}

/// One simulated path. Controls and jump counts are per step; states per
/// grid point.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub path: usize,
    pub x: Vec<Vector>,
    pub u: Vec<Vector>,
    pub jump_counts: Vec<Vec<u64>>,
}

impl Trajectory {
    pub fn terminal(&self) -> &Vector {
        self.x.last().expect("at least one grid point")
    }
}

/// One Euler step with coefficients frozen at `t_k`.
pub fn step_with(c: &Coefficients, x: &Vector, u: &Vector, h: f64, dw: f64, dn: &[u64]) -> Vector {
    let mut next = x + (&c.A * x + &c.B * u + &c.b) * h;
    if dw != 0.0 {
        next += (&c.C * x + &c.D * u + &c.sigma) * dw;
    }
    for (i, pi) in c.pi.iter().enumerate() {
        let comp = dn[i] as f64 - pi * h;
        if comp != 0.0 {
            next += (&c.F[i] * x + &c.G[i] * u + &c.f[i]) * comp;
        }
    }
    next
}

/// One Euler step at `t_k` using the problem's coefficients.
pub fn step(x: &Vector, u: &Vector, t: f64, dw: f64, dn: &[u64], prob: &ValidatedProblem) -> Result<Vector> {
    if dn.len() != prob.marks() {
        return Err(Error::Dimension(format!(
            "{} jump counts for {} marks",
            dn.len(),
            prob.marks()
        )));
    }
    let c = prob.coeffs_at(t)?;
    let next = step_with(&c, x, u, prob.grid().h(), dw, dn);
    if next.iter().any(|v| !v.is_finite()) {
        return Err(Error::NumericalFailure(format!("non-finite state after step at t={t}")));
    }
    Ok(next)
}

/// Node coefficients precomputed for a batch.
pub struct Simulator<'a> {
    prob: &'a ValidatedProblem,
    nodes: Vec<Coefficients>,
}

impl<'a> Simulator<'a> {
    pub fn new(prob: &'a ValidatedProblem) -> Self {
        let nodes = (0..=prob.grid().steps).map(|k| prob.coeffs_at_node(k)).collect();
        Self { prob, nodes }
    }

    pub fn grid(&self) -> &TimeGrid {
        self.prob.grid()
    }

    /// Simulates path `path` of `plan` from `x0`.
    pub fn path(&self, ctrl: &dyn Controller, plan: &NoisePlan, path: usize, x0: &Vector) -> Result<Trajectory> {
        let grid = self.prob.grid();
        let h = grid.h();
        let kk = self.prob.marks();
        let mut x = Vec::with_capacity(grid.steps + 1);
        let mut u = Vec::with_capacity(grid.steps);
        let mut jumps = Vec::with_capacity(grid.steps);
        let mut cur = x0.clone();
        for k in 0..grid.steps {
            let c = &self.nodes[k];
            let uk = ctrl.control(path, k, &cur);
            let dw = plan.brownian(path, k, h);
            let dn: Vec<u64> = (0..kk).map(|i| plan.jumps(path, k, i, c.pi[i], h)).collect();
            let next = step_with(c, &cur, &uk, h, dw, &dn);
            if next.iter().any(|v| !v.is_finite()) {
                return Err(Error::StateBlowUp { path, step: k });
            }
            x.push(std::mem::replace(&mut cur, next));
            u.push(uk);
            jumps.push(dn);
        }
        x.push(cur);
        Ok(Trajectory {
            path,
            x,
            u,
            jump_counts: jumps,
        })
    }

    /// Maps every path of the plan through `f` in parallel without keeping
    /// trajectories. Results are in path order.
    pub fn map_paths<T, F>(&self, ctrl: &dyn Controller, plan: &NoisePlan, x0: &Vector, f: F) -> Result<Vec<T>>
    where
        T: Send,
        F: Fn(Trajectory) -> Result<T> + Sync,
    {
        (0..plan.paths)
            .into_par_iter()
            .map(|p| self.path(ctrl, plan, p, x0).and_then(&f))
            .collect()
    }

    pub fn batch(&self, ctrl: &dyn Controller, plan: &NoisePlan, x0: &Vector) -> Result<Vec<Trajectory>> {
        self.map_paths(ctrl, plan, x0, Ok)
    }
}

pub fn simulate_closed_loop(
    prob: &ValidatedProblem,
    strat: &ClosedLoopStrategy,
    plan: &NoisePlan,
) -> Result<Vec<Trajectory>> {
    check_strategy(prob, strat)?;
    Simulator::new(prob).batch(strat, plan, &prob.x0)
}

pub fn simulate_open_loop(
    prob: &ValidatedProblem,
    controls: &OpenLoopControls,
    plan: &NoisePlan,
) -> Result<Vec<Trajectory>> {
    check_controls(prob, controls, plan)?;
    Simulator::new(prob).batch(controls, plan, &prob.x0)
}

pub(crate) fn check_strategy(prob: &ValidatedProblem, strat: &ClosedLoopStrategy) -> Result<()> {
    let n_pts = prob.grid().steps + 1;
    if strat.grid != *prob.grid() || strat.theta.len() != n_pts || strat.v.len() != n_pts {
        return Err(Error::Dimension("strategy is not on the problem grid".into()));
    }
    if strat.theta.iter().any(|t| t.shape() != (prob.m, prob.n)) || strat.v.iter().any(|v| v.len() != prob.m) {
        return Err(Error::Dimension(format!(
            "strategy must be {}x{} gain and {}-vector feedforward",
            prob.m, prob.n, prob.m
        )));
    }
    Ok(())
}

pub(crate) fn check_controls(prob: &ValidatedProblem, controls: &OpenLoopControls, plan: &NoisePlan) -> Result<()> {
    let steps = prob.grid().steps;
    let ok_path = |u: &Vec<Vector>| u.len() >= steps && u.iter().all(|v| v.len() == prob.m);
    let ok = match controls {
        OpenLoopControls::Shared(u) => ok_path(u),
        OpenLoopControls::PerPath(u) => u.len() >= plan.paths && u.iter().all(ok_path),
    };
    if ok {
        Ok(())
    } else {
        Err(Error::Dimension(format!(
            "open-loop controls must give an {}-vector for each of {steps} steps",
            prob.m
        )))
    }
}

/// Writes `path,k,t,X_0..,u_0..,dN_1..` rows; `u` and `dN` are empty on the
/// terminal row.
pub fn write_trajectories_csv<W: Write>(mut out: W, grid: &TimeGrid, trajs: &[Trajectory]) -> Result<()> {
    let Some(first) = trajs.first() else {
        return Ok(());
    };
    let n = first.x[0].len();
    let m = first.u.first().map_or(0, Vector::len);
    let kk = first.jump_counts.first().map_or(0, Vec::len);
    let mut header = vec!["path".to_string(), "k".into(), "t".into()];
    header.extend((0..n).map(|i| format!("X_{i}")));
    header.extend((0..m).map(|i| format!("u_{i}")));
    header.extend((1..=kk).map(|i| format!("dN_{i}")));
    writeln!(out, "{}", header.join(","))?;
    let mut line = String::new();
    for tr in trajs {
        for (k, x) in tr.x.iter().enumerate() {
            use std::fmt::Write as _;
            line.clear();
            write!(line, "{},{},{}", tr.path, k, grid.t(k)).unwrap();
            for v in x.iter() {
                write!(line, ",{}", v + 0.0).unwrap();
            }
            if k < tr.u.len() {
                for v in tr.u[k].iter() {
                    write!(line, ",{}", v + 0.0).unwrap();
                }
                for d in &tr.jump_counts[k] {
                    write!(line, ",{d}").unwrap();
                }
            } else {
                for _ in 0..m + kk {
                    line.push(',');
                }
            }
            line.push('\n');
            out.write_all(line.as_bytes())?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::Matrix;
    use crate::problem::{CoefficientPath, ProblemSpec};

    fn scalar(v: f64) -> Matrix {
        Matrix::from_element(1, 1, v)
    }

    fn vec1(v: f64) -> Vector {
        Vector::from_element(1, v)
    }

    #[test]
    fn zero_coefficients_keep_state() {
        let p = ProblemSpec::zeros(2, 1, TimeGrid::new(0.0, 1.0, 10)).validate().unwrap();
        let x = Vector::from_vec(vec![1.5, -2.0]);
        let next = step(&x, &vec1(3.0), 0.3, 0.7, &[], &p).unwrap();
        assert_eq!(next, x);
    }

    #[test]
    fn deterministic_euler_step() {
        let mut s = ProblemSpec::zeros(1, 1, TimeGrid::new(0.0, 1.0, 100));
        s.A = CoefficientPath::Constant(scalar(1.0));
        let p = s.validate().unwrap();
        let next = step(&vec1(1.0), &vec1(0.0), 0.0, 0.0, &[], &p).unwrap();
        assert!((next[0] - 1.01).abs() < 1e-15);
    }

    #[test]
    fn compensated_jump_step() {
        let mut s = ProblemSpec::zeros(1, 1, TimeGrid::new(0.0, 1.0, 100));
        let i = s.push_mark("e1", 1.0);
        s.F[i] = CoefficientPath::Constant(scalar(1.0));
        let p = s.validate().unwrap();
        // 1 + 1 * (1 - 0.01)
        let next = step(&vec1(1.0), &vec1(0.0), 0.0, 0.0, &[1], &p).unwrap();
        assert!((next[0] - 1.99).abs() < 1e-15);
        assert!(matches!(step(&vec1(1.0), &vec1(0.0), 0.0, 0.0, &[], &p), Err(Error::Dimension(_))));
    }

    #[test]
    fn zero_strategy_zero_dynamics_paths_are_constant() {
        let mut s = ProblemSpec::zeros(1, 1, TimeGrid::new(0.0, 1.0, 20));
        s.x0 = vec1(0.7);
        s.sigma = CoefficientPath::Constant(vec1(0.0));
        let p = s.validate().unwrap();
        let strat = ClosedLoopStrategy::zero(*p.grid(), 1, 1);
        let batch = simulate_closed_loop(&p, &strat, &NoisePlan::new(1, 5)).unwrap();
        assert_eq!(batch.len(), 5);
        for tr in &batch {
            assert!(tr.x.iter().all(|x| x[0] == 0.7));
        }
    }

    #[test]
    fn open_loop_zero_matches_closed_loop_zero() {
        let mut s = ProblemSpec::zeros(1, 1, TimeGrid::new(0.0, 1.0, 50));
        s.A = CoefficientPath::Constant(scalar(0.3));
        s.C = CoefficientPath::Constant(scalar(0.4));
        s.sigma = CoefficientPath::Constant(vec1(0.2));
        let i = s.push_mark("e1", 2.0);
        s.F[i] = CoefficientPath::Constant(scalar(-0.5));
        s.x0 = vec1(1.0);
        let p = s.validate().unwrap();
        let plan = NoisePlan::new(11, 8);
        let cl = simulate_closed_loop(&p, &ClosedLoopStrategy::zero(*p.grid(), 1, 1), &plan).unwrap();
        let ol = simulate_open_loop(&p, &OpenLoopControls::Shared(vec![vec1(0.0); 50]), &plan).unwrap();
        assert_eq!(cl, ol);
    }

    #[test]
    fn csv_layout() {
        let mut s = ProblemSpec::zeros(1, 1, TimeGrid::new(0.0, 1.0, 2));
        s.push_mark("e1", 1.0);
        let p = s.validate().unwrap();
        let trajs = simulate_closed_loop(&p, &ClosedLoopStrategy::zero(*p.grid(), 1, 1), &NoisePlan::new(0, 1)).unwrap();
        let mut buf = Vec::new();
        write_trajectories_csv(&mut buf, p.grid(), &trajs).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<_> = text.lines().collect();
        assert_eq!(lines[0], "path,k,t,X_0,u_0,dN_1");
        assert_eq!(lines.len(), 4);
        assert!(lines[3].starts_with("0,2,1,0,"));
        assert!(lines[3].ends_with(",,"));
    }
}

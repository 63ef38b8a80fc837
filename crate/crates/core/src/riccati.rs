//! Riccati integral-differential equation with jump terms, solved backward
//! from `P(T) = H` by fixed-step RK4, plus the Lyapunov equation for a given
//! feedback gain.
//!
//! With a finite mark measure the jump integrals are sums:
//!
//! ```text
//! Rhat = R + D'PD + sum_i pi_i G_i' P G_i
//! Lcal = B'P + D'PC + sum_i pi_i G_i' P F_i + S
//! dP/dt = -[PA + A'P + C'PC + sum_i pi_i F_i' P F_i + Q - Lcal' Rhat^+ Lcal]
//! ```
//!
//! Regularity (`Rhat >= 0`, `range(Lcal) in range(Rhat)`) is gated at grid
//! points only; interior RK4 stages are not gated.

use crate::error::{Error, GateFailure, Result};
use crate::linalg::{self, symmetrize, Cutoff, Matrix};
use crate::problem::{Coefficients, TimeGrid, ValidatedProblem};

/// Gate tolerances, relative to operand scale.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerances {
    /// `lambda_min(Rhat) >= -psd * (1 + ||Rhat||_2)`
    pub psd: f64,
    /// `||(I - Rhat Rhat^+) Lcal||_F <= range * (1 + ||Lcal||_F)`
    pub range: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self { psd: 1e-10, range: 1e-9 }
    }
}

/// `Rhat` and `Lcal` at one `(P, t)`, plus the pseudo-inverse of `Rhat`.
#[derive(Debug, Clone, PartialEq)]
pub struct GainOperators {
    pub rhat: Matrix,
    pub lcal: Matrix,
    pub rhat_pinv: Matrix,
}

impl GainOperators {
    pub fn from_coeffs(p: &Matrix, c: &Coefficients) -> Result<Self> {
        let pd = p * &c.D;
        let mut rhat = &c.R + c.D.transpose() * &pd;
        let mut lcal = c.B.transpose() * p + pd.transpose() * &c.C + &c.S;
        for ((pi, f), g) in c.pi.iter().zip(&c.F).zip(&c.G) {
            if *pi == 0.0 {
                continue;
            }
            let gtp = g.transpose() * p;
            rhat += (&gtp * g) * *pi;
            lcal += (&gtp * f) * *pi;
        }
        let rhat = symmetrize(&rhat);
        let rhat_pinv = linalg::pinv(&rhat, Cutoff::Auto)?;
        Ok(Self { rhat, lcal, rhat_pinv })
    }

    /// `Theta = -Rhat^+ Lcal`.
    pub fn gain(&self) -> Matrix {
        -(&self.rhat_pinv * &self.lcal)
    }

    pub fn check(&self, tol: &Tolerances) -> Result<Certificate> {
        Ok(Certificate {
            psd_ok: linalg::is_psd(&self.rhat, tol.psd)?,
            range_ok: linalg::range_contains(&self.rhat, &self.lcal, tol.range)?,
        })
    }
}

pub fn assemble_gain_ops(p: &Matrix, t: f64, prob: &ValidatedProblem) -> Result<GainOperators> {
    GainOperators::from_coeffs(p, &prob.coeffs_at(t)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
pub struct Certificate {
    pub psd_ok: bool,
    pub range_ok: bool,
}

impl Certificate {
    pub fn passed(&self) -> bool {
        self.psd_ok && self.range_ok
    }

    fn failure(&self) -> Option<GateFailure> {
        if !self.psd_ok {
            Some(GateFailure::Psd)
        } else if !self.range_ok {
            Some(GateFailure::Range)
        } else {
            None
        }
    }
}

fn ride_rhs(p: &Matrix, c: &Coefficients, ops: &GainOperators) -> Matrix {
    let pa = p * &c.A;
    let mut acc = &pa + pa.transpose() + c.C.transpose() * p * &c.C + &c.Q;
    for (pi, f) in c.pi.iter().zip(&c.F) {
        if *pi != 0.0 {
            acc += (f.transpose() * p * f) * *pi;
        }
    }
    acc -= ops.lcal.transpose() * &ops.rhat_pinv * &ops.lcal;
    -symmetrize(&acc)
}

fn ride_rhs_unchecked(p: &Matrix, c: &Coefficients) -> Result<Matrix> {
    let ops = GainOperators::from_coeffs(p, c)?;
    Ok(ride_rhs(p, c, &ops))
}

/// `dP/dt` of the RIDE at `(P, t)`, failing if either regularity gate fails.
pub fn riccati_rhs(p: &Matrix, t: f64, prob: &ValidatedProblem, tol: &Tolerances) -> Result<Matrix> {
    let c = prob.coeffs_at(t)?;
    let ops = GainOperators::from_coeffs(p, &c)?;
    if let Some(which) = ops.check(tol)?.failure() {
        return Err(Error::RegularityViolation { time: t, which });
    }
    Ok(ride_rhs(p, &c, &ops))
}

#[derive(Debug, Clone)]
pub struct RiccatiSolution {
    pub grid: TimeGrid,
    pub p: Vec<Matrix>,
    /// `dP/dt` at each grid point, used for Hermite interpolation.
    pub p_dot: Vec<Matrix>,
    pub ops: Vec<GainOperators>,
    pub certificates: Vec<Certificate>,
    /// Discrete L2 norm of `Rhat^+ Lcal` over the horizon (trapezoid).
    pub theta_l2_norm: f64,
}

impl RiccatiSolution {
    /// Cubic Hermite value of `P` at `t_k + h/2`.
    pub fn p_mid(&self, k: usize) -> Matrix {
        let h = self.grid.h();
        let avg = (&self.p[k] + &self.p[k + 1]) * 0.5;
        symmetrize(&(avg + (&self.p_dot[k] - &self.p_dot[k + 1]) * (h / 8.0)))
    }

    pub fn p0(&self) -> &Matrix {
        &self.p[0]
    }
}

/// Backward RK4 from `terminal` at `t_N`. `accept` sees every grid value as
/// soon as it is produced, starting with `k = N`.
fn rk4_backward<F, A>(
    grid: &TimeGrid,
    terminal: Matrix,
    mut rhs: F,
    mut accept: A,
    what: &str,
) -> Result<(Vec<Matrix>, Vec<Matrix>)>
where
    F: FnMut(&Matrix, usize, Stage) -> Result<Matrix>,
    A: FnMut(usize, &Matrix) -> Result<()>,
{
    let n_steps = grid.steps;
    let h = grid.h();
    let mut p = vec![Matrix::zeros(0, 0); n_steps + 1];
    let mut p_dot = vec![Matrix::zeros(0, 0); n_steps + 1];
    accept(n_steps, &terminal)?;
    p[n_steps] = terminal;
    for k in (0..n_steps).rev() {
        let cur = &p[k + 1];
        let k1 = rhs(cur, k + 1, Stage::Node)?;
        let k2 = rhs(&(cur - &k1 * (h / 2.0)), k, Stage::Mid)?;
        let k3 = rhs(&(cur - &k2 * (h / 2.0)), k, Stage::Mid)?;
        let k4 = rhs(&(cur - &k3 * h), k, Stage::Node)?;
        let next = symmetrize(&(cur - (&k1 + &k2 * 2.0 + &k3 * 2.0 + &k4) * (h / 6.0)));
        if !linalg::is_finite(&next) {
            return Err(Error::NumericalFailure(format!(
                "{what} became non-finite at t={} (k={k})",
                grid.t(k)
            )));
        }
        accept(k, &next)?;
        p_dot[k + 1] = k1;
        p[k] = next;
    }
    p_dot[0] = rhs(&p[0], 0, Stage::Node)?;
    Ok((p, p_dot))
}

/// Where a right-hand side is evaluated: a grid node `t_k`, or `t_k + h/2`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Stage {
    Node,
    Mid,
}

/// Per-step coefficient cache: node values and midpoint values.
pub(crate) struct CoeffCache {
    nodes: Vec<Coefficients>,
    mids: Vec<Coefficients>,
}

impl CoeffCache {
    pub(crate) fn new(prob: &ValidatedProblem) -> Result<Self> {
        let g = prob.grid();
        let h = g.h();
        let nodes = (0..=g.steps).map(|k| prob.coeffs_at_node(k)).collect();
        let mids = (0..g.steps)
            .map(|k| prob.coeffs_at(g.t(k) + 0.5 * h))
            .collect::<Result<_>>()?;
        Ok(Self { nodes, mids })
    }

    pub(crate) fn node(&self, k: usize) -> &Coefficients {
        &self.nodes[k]
    }

    pub(crate) fn mid(&self, k: usize) -> &Coefficients {
        &self.mids[k]
    }
}

/// Integrates the RIDE backward from `P(T) = H` with gates at every grid point.
pub fn solve_ride(prob: &ValidatedProblem, tol: &Tolerances) -> Result<RiccatiSolution> {
    let grid = *prob.grid();
    let cache = CoeffCache::new(prob)?;
    let n_steps = grid.steps;
    let mut ops: Vec<Option<GainOperators>> = vec![None; n_steps + 1];
    let mut certificates = vec![Certificate { psd_ok: false, range_ok: false }; n_steps + 1];

    let (p, p_dot) = rk4_backward(
        &grid,
        prob.H.clone(),
        |p, k, stage| match stage {
            Stage::Node => ride_rhs_unchecked(p, cache.node(k)),
            Stage::Mid => ride_rhs_unchecked(p, cache.mid(k)),
        },
        |k, p| {
            let o = GainOperators::from_coeffs(p, cache.node(k))?;
            let cert = o.check(tol)?;
            if let Some(reason) = cert.failure() {
                return Err(Error::ClosedLoopUnsolvable {
                    time: grid.t(k),
                    reason,
                });
            }
            certificates[k] = cert;
            ops[k] = Some(o);
            Ok(())
        },
        "P",
    )?;
    let ops: Vec<GainOperators> = ops.into_iter().map(|o| o.expect("gated")).collect();

    let h = grid.h();
    let sq: Vec<f64> = ops.iter().map(|o| (&o.rhat_pinv * &o.lcal).norm_squared()).collect();
    let theta_l2 = trapezoid(&sq, h).sqrt();
    if !theta_l2.is_finite() {
        return Err(Error::NumericalFailure("theta L2 norm is not finite".into()));
    }

    Ok(RiccatiSolution {
        grid,
        p,
        p_dot,
        ops,
        certificates,
        theta_l2_norm: theta_l2,
    })
}

pub(crate) fn trapezoid(values: &[f64], h: f64) -> f64 {
    match values.len() {
        0 | 1 => 0.0,
        len => {
            let inner: f64 = values[1..len - 1].iter().sum();
            h * (0.5 * (values[0] + values[len - 1]) + inner)
        }
    }
}

/// `Theta(t_k) = -Rhat^+ Lcal` at every grid point (free parameter set to zero).
pub fn feedback_gain(sol: &RiccatiSolution) -> Vec<Matrix> {
    sol.ops.iter().map(GainOperators::gain).collect()
}

fn lyapunov_rhs(p: &Matrix, c: &Coefficients, theta: &Matrix) -> Matrix {
    let acl = &c.A + &c.B * theta;
    let ccl = &c.C + &c.D * theta;
    let pa = p * &acl;
    let st = c.S.transpose() * theta;
    let mut acc = &pa + pa.transpose() + ccl.transpose() * p * &ccl + &c.Q + &st + st.transpose()
        + theta.transpose() * &c.R * theta;
    for ((pi, f), g) in c.pi.iter().zip(&c.F).zip(&c.G) {
        if *pi != 0.0 {
            let fcl = f + g * theta;
            acc += (fcl.transpose() * p * &fcl) * *pi;
        }
    }
    -symmetrize(&acc)
}

/// Cost matrix `P_Theta` of a fixed feedback gain: the Lyapunov equation with
/// terminal value `H`. The gain is linearly interpolated between grid points.
pub fn solve_lyapunov(prob: &ValidatedProblem, theta: &[Matrix]) -> Result<Vec<Matrix>> {
    let grid = *prob.grid();
    if theta.len() != grid.steps + 1 {
        return Err(Error::Dimension(format!(
            "gain path has {} samples, grid needs {}",
            theta.len(),
            grid.steps + 1
        )));
    }
    if let Some(bad) = theta.iter().find(|t| t.shape() != (prob.m, prob.n)) {
        return Err(Error::Dimension(format!(
            "gain is {}x{}, expected {}x{}",
            bad.nrows(),
            bad.ncols(),
            prob.m,
            prob.n
        )));
    }
    let cache = CoeffCache::new(prob)?;
    let (p, _) = rk4_backward(
        &grid,
        prob.H.clone(),
        |p, k, stage| {
            Ok(match stage {
                Stage::Node => lyapunov_rhs(p, cache.node(k), &theta[k]),
                Stage::Mid => {
                    let th = (&theta[k] + &theta[k + 1]) * 0.5;
                    lyapunov_rhs(p, cache.mid(k), &th)
                }
            })
        },
        |_, _| Ok(()),
        "P_Theta",
    )?;
    Ok(p)
}

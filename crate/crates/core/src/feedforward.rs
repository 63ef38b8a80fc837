//! Adjoint equation for `eta`, the feedforward `v`, and the value function.
//!
//! Inhomogeneities are deterministic, so the martingale parts `zeta`, `psi`
//! of the backward equation vanish and `eta` solves a linear ODE:
//!
//! ```text
//! d eta/dt = -[(A+B Th)' eta + (C+D Th)' P sigma + sum_i pi_i (F_i+G_i Th)' P f_i
//!              + P b + q - Lcal' Rhat^+ rho],     eta(T) = g
//! w = B' eta + D' P sigma + sum_i pi_i G_i' P f_i + rho,   v = -Rhat^+ w
//! ```

use crate::error::{Error, GateFailure, Result};
use crate::linalg::{self, Matrix, Vector};
use crate::problem::{Coefficients, TimeGrid, ValidatedProblem};
use crate::riccati::{feedback_gain, trapezoid, CoeffCache, GainOperators, RiccatiSolution, Tolerances};

#[derive(Debug, Clone)]
pub struct AdjointSolution {
    pub grid: TimeGrid,
    pub eta: Vec<Vector>,
    /// Identically zero with deterministic data.
    pub zeta: Vec<Vector>,
    /// Identically zero with deterministic data; indexed `[k][mark]`.
    pub psi: Vec<Vec<Vector>>,
    /// `w(t_k)`, the vector whose range inclusion is gated.
    pub w: Vec<Vector>,
    pub range_ok: Vec<bool>,
}

/// Feedback gain and feedforward on the grid; the outcome is `u = Theta X + v`.
#[derive(Debug, Clone, PartialEq)]
pub struct ClosedLoopStrategy {
    pub grid: TimeGrid,
    pub theta: Vec<Matrix>,
    pub v: Vec<Vector>,
}

impl ClosedLoopStrategy {
    /// `Theta = 0`, `v = 0`.
    pub fn zero(grid: TimeGrid, n: usize, m: usize) -> Self {
        Self {
            grid,
            theta: vec![Matrix::zeros(m, n); grid.steps + 1],
            v: vec![Vector::zeros(m); grid.steps + 1],
        }
    }

    /// Control at grid point `k` for state `x`.
    pub fn control(&self, k: usize, x: &Vector) -> Vector {
        &self.theta[k] * x + &self.v[k]
    }

    /// Piecewise-linear feedforward at an arbitrary time in the horizon.
    pub fn v_at(&self, t: f64) -> Result<Vector> {
        crate::problem::CoefficientPath::Sampled(self.v.clone()).eval(&self.grid, t)
    }

    pub fn theta_at(&self, t: f64) -> Result<Matrix> {
        crate::problem::CoefficientPath::Sampled(self.theta.clone()).eval(&self.grid, t)
    }
}

fn w_vec(eta: &Vector, p: &Matrix, c: &Coefficients) -> Vector {
    let p_sigma = p * &c.sigma;
    let mut w = c.B.transpose() * eta + c.D.transpose() * &p_sigma + &c.rho;
    for ((pi, g), f) in c.pi.iter().zip(&c.G).zip(&c.f) {
        if *pi != 0.0 {
            w += (g.transpose() * (p * f)) * *pi;
        }
    }
    w
}

fn eta_drift(eta: &Vector, p: &Matrix, c: &Coefficients, ops: &GainOperators) -> Vector {
    let theta = ops.gain();
    let p_sigma = p * &c.sigma;
    let mut acc = (&c.A + &c.B * &theta).transpose() * eta
        + (&c.C + &c.D * &theta).transpose() * &p_sigma
        + p * &c.b
        + &c.q
        - ops.lcal.transpose() * (&ops.rhat_pinv * &c.rho);
    for (((pi, f_mat), g_mat), f_vec) in c.pi.iter().zip(&c.F).zip(&c.G).zip(&c.f) {
        if *pi != 0.0 {
            acc += ((f_mat + g_mat * &theta).transpose() * (p * f_vec)) * *pi;
        }
    }
    -acc
}

/// `d eta/dt` at `(eta, t)` given `P(t)`. Fails if a regularity gate fails.
pub fn eta_rhs(eta: &Vector, t: f64, p: &Matrix, prob: &ValidatedProblem, tol: &Tolerances) -> Result<Vector> {
    let c = prob.coeffs_at(t)?;
    let ops = GainOperators::from_coeffs(p, &c)?;
    let cert = ops.check(tol)?;
    if !cert.psd_ok {
        return Err(Error::RegularityViolation {
            time: t,
            which: GateFailure::Psd,
        });
    }
    if !cert.range_ok {
        return Err(Error::RegularityViolation {
            time: t,
            which: GateFailure::Range,
        });
    }
    Ok(eta_drift(eta, p, &c, &ops))
}

/// Backward RK4 for `eta` from `eta(T) = g`. `P` at half steps comes from
/// Hermite interpolation of the Riccati solution.
pub fn solve_eta(prob: &ValidatedProblem, ride: &RiccatiSolution, tol: &Tolerances) -> Result<AdjointSolution> {
    let grid = *prob.grid();
    if ride.grid != grid {
        return Err(Error::Dimension("Riccati solution is on a different grid".into()));
    }
    let cache = CoeffCache::new(prob)?;
    let n_steps = grid.steps;
    let h = grid.h();
    let mut eta = vec![Vector::zeros(0); n_steps + 1];
    let mut w = vec![Vector::zeros(0); n_steps + 1];
    let mut range_ok = vec![false; n_steps + 1];

    let mut gate = |k: usize, e: &Vector| -> Result<()> {
        let wk = w_vec(e, &ride.p[k], cache.node(k));
        let col = Matrix::from_column_slice(wk.len(), 1, wk.as_slice());
        if !linalg::range_contains(&ride.ops[k].rhat, &col, tol.range)? {
            return Err(Error::ClosedLoopUnsolvable {
                time: grid.t(k),
                reason: GateFailure::RangeFeedforward,
            });
        }
        range_ok[k] = true;
        w[k] = wk;
        Ok(())
    };

    gate(n_steps, &prob.g)?;
    eta[n_steps] = prob.g.clone();
    for k in (0..n_steps).rev() {
        let cn = cache.node(k + 1);
        let c0 = cache.node(k);
        let cm = cache.mid(k);
        let p_mid = ride.p_mid(k);
        let ops_mid = GainOperators::from_coeffs(&p_mid, cm)?;
        let cur = &eta[k + 1];
        let k1 = eta_drift(cur, &ride.p[k + 1], cn, &ride.ops[k + 1]);
        let k2 = eta_drift(&(cur - &k1 * (h / 2.0)), &p_mid, cm, &ops_mid);
        let k3 = eta_drift(&(cur - &k2 * (h / 2.0)), &p_mid, cm, &ops_mid);
        let k4 = eta_drift(&(cur - &k3 * h), &ride.p[k], c0, &ride.ops[k]);
        let next = cur - (&k1 + &k2 * 2.0 + &k3 * 2.0 + &k4) * (h / 6.0);
        if next.iter().any(|x| !x.is_finite()) {
            return Err(Error::NumericalFailure(format!(
                "eta became non-finite at t={} (k={k})",
                grid.t(k)
            )));
        }
        gate(k, &next)?;
        eta[k] = next;
    }

    let n = prob.n;
    Ok(AdjointSolution {
        grid,
        zeta: vec![Vector::zeros(n); n_steps + 1],
        psi: vec![vec![Vector::zeros(n); prob.marks()]; n_steps + 1],
        eta,
        w,
        range_ok,
    })
}

/// `v(t_k) = -Rhat^+ w(t_k)` (free parameter set to zero).
pub fn feedforward_v(adj: &AdjointSolution, ride: &RiccatiSolution) -> Vec<Vector> {
    adj.w
        .iter()
        .zip(&ride.ops)
        .map(|(w, ops)| -(&ops.rhat_pinv * w))
        .collect()
}

/// Terms of the value function at one `(t_k, x)`.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct ValueDecomposition {
    /// `<P(t_k) x, x>`
    pub quadratic: f64,
    /// `2 <eta(t_k), x>`
    pub linear: f64,
    /// Time integral from `t_k` to `T` (composite trapezoid).
    pub integral: f64,
    pub value: f64,
}

/// Integrand of the value-function time integral at every grid point.
pub fn value_integrand(ride: &RiccatiSolution, adj: &AdjointSolution, prob: &ValidatedProblem) -> Result<Vec<f64>> {
    (0..=prob.grid().steps)
        .map(|k| {
            let c = prob.coeffs_at_node(k);
            let p = &ride.p[k];
            let eta = &adj.eta[k];
            let mut val = 2.0 * eta.dot(&c.b) + (p * &c.sigma).dot(&c.sigma);
            for (pi, f) in c.pi.iter().zip(&c.f) {
                if *pi != 0.0 {
                    val += *pi * (p * f).dot(f);
                }
            }
            val -= linalg::psd_quadform_via_pinv(&ride.ops[k].rhat, &adj.w[k])?;
            Ok(val)
        })
        .collect()
}

/// `V(t_k, x)` with its decomposition. `t` must be a grid point.
pub fn value_function(
    ride: &RiccatiSolution,
    adj: &AdjointSolution,
    prob: &ValidatedProblem,
    t: f64,
    x: &Vector,
) -> Result<ValueDecomposition> {
    let grid = prob.grid();
    let k = grid.index_of(t).ok_or(Error::OutOfHorizon {
        t,
        t0: grid.t0,
        t_end: grid.t_end,
    })?;
    if x.len() != prob.n {
        return Err(Error::Dimension(format!("x has length {}, expected {}", x.len(), prob.n)));
    }
    let integrand = value_integrand(ride, adj, prob)?;
    let quadratic = (&ride.p[k] * x).dot(x);
    let linear = 2.0 * adj.eta[k].dot(x);
    let integral = trapezoid(&integrand[k..], grid.h());
    Ok(ValueDecomposition {
        quadratic,
        linear,
        integral,
        value: quadratic + linear + integral,
    })
}

/// Everything produced by one solve.
#[derive(Debug, Clone)]
pub struct Solution {
    pub ride: RiccatiSolution,
    pub adjoint: AdjointSolution,
    pub strategy: ClosedLoopStrategy,
}

impl Solution {
    pub fn value(&self, prob: &ValidatedProblem, t: f64, x: &Vector) -> Result<ValueDecomposition> {
        value_function(&self.ride, &self.adjoint, prob, t, x)
    }
}

/// Riccati solve, adjoint solve, and strategy assembly.
pub fn solve(prob: &ValidatedProblem, tol: &Tolerances) -> Result<Solution> {
    let ride = crate::riccati::solve_ride(prob, tol)?;
    let adjoint = solve_eta(prob, &ride, tol)?;
    let strategy = ClosedLoopStrategy {
        grid: *prob.grid(),
        theta: feedback_gain(&ride),
        v: feedforward_v(&adjoint, &ride),
    };
    Ok(Solution {
        ride,
        adjoint,
        strategy,
    })
}

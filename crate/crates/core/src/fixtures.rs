//! Small reference problems with known solutions, used by the tests, the
//! acceptance suite and the Python smoke script.
//!
//! All scalar problems run on `[0, 1]`.

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use rand_distr::StandardNormal;

use crate::linalg::{Matrix, Vector};
use crate::problem::{CoefficientPath, ProblemSpec, TimeGrid};

fn s(v: f64) -> CoefficientPath<Matrix> {
    CoefficientPath::Constant(Matrix::from_element(1, 1, v))
}

fn sv(v: f64) -> CoefficientPath<Vector> {
    CoefficientPath::Constant(Vector::from_element(1, v))
}

/// `B = R = H = 1`, everything else zero: `dP/dt = P^2`, `P(t) = 1 / (1 + T - t)`.
pub fn riccati_quadratic(steps: usize) -> ProblemSpec {
    let mut p = ProblemSpec::zeros(1, 1, TimeGrid::new(0.0, 1.0, steps));
    p.B = s(1.0);
    p.H = Matrix::from_element(1, 1, 1.0);
    p.x0 = Vector::from_element(1, 1.0);
    p
}

/// One mark with `F = pi = 1`, `H = R = 1`: `dP/dt = -P`, `P(t) = e^{T - t}`.
pub fn pure_jump(steps: usize) -> ProblemSpec {
    let mut p = ProblemSpec::zeros(1, 1, TimeGrid::new(0.0, 1.0, steps));
    let i = p.push_mark("e1", 1.0);
    p.F[i] = s(1.0);
    p.H = Matrix::from_element(1, 1, 1.0);
    p.x0 = Vector::from_element(1, 1.0);
    p
}

/// `B = G = pi = R = H = 1`: `dP/dt = P^2 / (1 + P)`, so
/// `-1/P + ln P = t - T - 1`.
pub fn jump_control(steps: usize) -> ProblemSpec {
    let mut p = ProblemSpec::zeros(1, 1, TimeGrid::new(0.0, 1.0, steps));
    p.B = s(1.0);
    let i = p.push_mark("e1", 1.0);
    p.G[i] = s(1.0);
    p.H = Matrix::from_element(1, 1, 1.0);
    p.x0 = Vector::from_element(1, 1.0);
    p
}

/// `riccati_quadratic` with drift and diffusion offsets `b = sigma = 1` and
/// small linear cost terms.
pub fn inhomogeneous_scalar(steps: usize) -> ProblemSpec {
    let mut p = riccati_quadratic(steps);
    p.b = sv(1.0);
    p.sigma = sv(1.0);
    p.q = sv(0.1);
    p.rho = sv(0.05);
    p
}

/// `R = -1`, everything else zero: no closed-loop optimal strategy.
pub fn negative_control_weight(steps: usize) -> ProblemSpec {
    let mut p = ProblemSpec::zeros(1, 1, TimeGrid::new(0.0, 1.0, steps));
    p.R = s(-1.0);
    p
}

/// Only `g` nonzero; dynamics are zero so `X` stays at `x0` and the cost is `2 g x0`.
pub fn terminal_linear(steps: usize, g0: f64, x0: f64) -> ProblemSpec {
    let mut p = ProblemSpec::zeros(1, 1, TimeGrid::new(0.0, 1.0, steps));
    p.g = Vector::from_element(1, g0);
    p.x0 = Vector::from_element(1, x0);
    p
}

fn gauss(rng: &mut StdRng, r: usize, c: usize, scale: f64) -> Matrix {
    Matrix::from_fn(r, c, |_, _| scale * rng.sample::<f64, _>(StandardNormal))
}

fn spd(rng: &mut StdRng, n: usize, floor: f64) -> Matrix {
    let m = gauss(rng, n, n, 0.5);
    let out = &m * m.transpose() + Matrix::identity(n, n) * floor;
    crate::linalg::symmetrize(&out)
}

/// Random problem with `Q, R > 0`, `H >= 0`, small cross term `S`, `marks`
/// jump types, and (when `inhomogeneous`) random `b, sigma, f, q, rho, g`.
pub fn random_problem(seed: u64, n: usize, m: usize, marks: usize, steps: usize, inhomogeneous: bool) -> ProblemSpec {
    let mut rng = StdRng::seed_from_u64(seed);
    let mut p = ProblemSpec::zeros(n, m, TimeGrid::new(0.0, 1.0, steps));
    let c = CoefficientPath::Constant;
    p.A = c(gauss(&mut rng, n, n, 0.5));
    p.B = c(gauss(&mut rng, n, m, 0.5));
    p.C = c(gauss(&mut rng, n, n, 0.2));
    p.D = c(gauss(&mut rng, n, m, 0.2));
    for i in 0..marks {
        let pi = rng.random_range(0.5..1.5);
        p.push_mark(format!("e{}", i + 1), pi);
        p.F[i] = c(gauss(&mut rng, n, n, 0.2));
        p.G[i] = c(gauss(&mut rng, n, m, 0.2));
    }
    p.Q = c(spd(&mut rng, n, 0.5));
    p.R = c(spd(&mut rng, m, 0.5));
    p.S = c(gauss(&mut rng, m, n, 0.05));
    p.H = spd(&mut rng, n, 0.1);
    p.x0 = Vector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal));
    if inhomogeneous {
        let v = |rng: &mut StdRng, len: usize, scale: f64| Vector::from_fn(len, |_, _| scale * rng.sample::<f64, _>(StandardNormal));
        p.b = CoefficientPath::Constant(v(&mut rng, n, 0.3));
        p.sigma = CoefficientPath::Constant(v(&mut rng, n, 0.3));
        for i in 0..marks {
            p.f[i] = CoefficientPath::Constant(v(&mut rng, n, 0.2));
        }
        p.q = CoefficientPath::Constant(v(&mut rng, n, 0.1));
        p.rho = CoefficientPath::Constant(v(&mut rng, m, 0.1));
        p.g = v(&mut rng, n, 0.2);
    }
    p
}

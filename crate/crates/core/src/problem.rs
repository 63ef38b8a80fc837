//! Problem data: state equation and cost coefficients on a uniform time grid,
//! with a finite jump-mark measure.

#![allow(non_snake_case)]

use std::ops::Deref;

use crate::error::{Error, Result, ValidationErrors, Violation};
use crate::linalg::{is_symmetric, Matrix, Vector};

/// Uniform grid `t_k = t0 + k h`, `h = (T - t0) / steps`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeGrid {
    pub t0: f64,
    pub t_end: f64,
    pub steps: usize,
}

impl TimeGrid {
    pub fn new(t0: f64, t_end: f64, steps: usize) -> Self {
        Self { t0, t_end, steps }
    }

    pub fn h(&self) -> f64 {
        (self.t_end - self.t0) / self.steps as f64
    }

    pub fn t(&self, k: usize) -> f64 {
        if k == self.steps {
            self.t_end
        } else {
            self.t0 + k as f64 * self.h()
        }
    }

    pub fn points(&self) -> impl Iterator<Item = f64> + '_ {
        (0..=self.steps).map(|k| self.t(k))
    }

    /// Grid index of `t` when `t` is a grid point (to within `1e-9 h`).
    pub fn index_of(&self, t: f64) -> Option<usize> {
        let s = (t - self.t0) / self.h();
        let k = s.round();
        if (s - k).abs() <= 1e-9 && k >= 0.0 && k <= self.steps as f64 {
            Some(k as usize)
        } else {
            None
        }
    }

    pub fn with_steps(&self, steps: usize) -> Self {
        Self { steps, ..*self }
    }

    fn check(&self, t: f64) -> Result<()> {
        let slack = 1e-12 * (1.0 + self.t_end.abs().max(self.t0.abs()));
        if !(t >= self.t0 - slack && t <= self.t_end + slack) {
            return Err(Error::OutOfHorizon {
                t,
                t0: self.t0,
                t_end: self.t_end,
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mark {
    pub id: String,
    /// Intensity of this mark (1/time).
    pub pi: f64,
}

/// Finite mark space: `int_E phi(e) pi(de)` becomes `sum_i pi_i phi(e_i)`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct JumpMeasure {
    pub marks: Vec<Mark>,
}

impl JumpMeasure {
    pub fn len(&self) -> usize {
        self.marks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.marks.is_empty()
    }

    pub fn intensities(&self) -> impl Iterator<Item = f64> + '_ {
        self.marks.iter().map(|m| m.pi)
    }
}

/// Values that can be linearly interpolated between grid samples.
pub trait Sample: Clone {
    fn lerp(a: &Self, b: &Self, w: f64) -> Self;
    fn dims(&self) -> (usize, usize);
    fn all_finite(&self) -> bool;
}

impl Sample for Matrix {
    fn lerp(a: &Self, b: &Self, w: f64) -> Self {
        a * (1.0 - w) + b * w
    }
    fn dims(&self) -> (usize, usize) {
        self.shape()
    }
    fn all_finite(&self) -> bool {
        self.iter().all(|x| x.is_finite())
    }
}

impl Sample for Vector {
    fn lerp(a: &Self, b: &Self, w: f64) -> Self {
        a * (1.0 - w) + b * w
    }
    fn dims(&self) -> (usize, usize) {
        (self.len(), 1)
    }
    fn all_finite(&self) -> bool {
        self.iter().all(|x| x.is_finite())
    }
}

/// A time-dependent coefficient: constant, or sampled at every grid point and
/// linearly interpolated in between.
#[derive(Debug, Clone, PartialEq)]
pub enum CoefficientPath<T> {
    Constant(T),
    Sampled(Vec<T>),
}

pub type MatrixPath = CoefficientPath<Matrix>;
pub type VectorPath = CoefficientPath<Vector>;

impl<T: Sample> CoefficientPath<T> {
    /// Value at time `t`; exact at grid points.
    pub fn eval(&self, grid: &TimeGrid, t: f64) -> Result<T> {
        grid.check(t)?;
        match self {
            CoefficientPath::Constant(v) => Ok(v.clone()),
            CoefficientPath::Sampled(samples) => {
                if let Some(k) = grid.index_of(t) {
                    return Ok(samples[k].clone());
                }
                let s = ((t - grid.t0) / grid.h()).clamp(0.0, grid.steps as f64);
                let k = (s.floor() as usize).min(grid.steps - 1);
                let w = s - k as f64;
                Ok(T::lerp(&samples[k], &samples[k + 1], w))
            }
        }
    }

    pub fn at_node(&self, k: usize) -> &T {
        match self {
            CoefficientPath::Constant(v) => v,
            CoefficientPath::Sampled(s) => &s[k],
        }
    }

    /// The same path on another grid over the same horizon; sampled paths
    /// are interpolated at the new grid points.
    pub fn resample(&self, from: &TimeGrid, to: &TimeGrid) -> Result<Self> {
        match self {
            CoefficientPath::Constant(_) => Ok(self.clone()),
            CoefficientPath::Sampled(_) => Ok(CoefficientPath::Sampled(
                to.points().map(|t| self.eval(from, t)).collect::<Result<_>>()?,
            )),
        }
    }

    pub fn is_constant(&self) -> bool {
        matches!(self, CoefficientPath::Constant(_))
    }

    fn samples(&self) -> Vec<(Option<usize>, &T)> {
        match self {
            CoefficientPath::Constant(v) => vec![(None, v)],
            CoefficientPath::Sampled(s) => s.iter().enumerate().map(|(k, v)| (Some(k), v)).collect(),
        }
    }
}

/// Full problem data. Field names follow the usual LQ notation.
#[derive(Debug, Clone, PartialEq)]
pub struct ProblemSpec {
    pub n: usize,
    pub m: usize,
    pub grid: TimeGrid,
    pub jumps: JumpMeasure,
    pub A: MatrixPath,
    pub B: MatrixPath,
    pub C: MatrixPath,
    pub D: MatrixPath,
    pub F: Vec<MatrixPath>,
    pub G: Vec<MatrixPath>,
    pub b: VectorPath,
    pub sigma: VectorPath,
    pub f: Vec<VectorPath>,
    pub Q: MatrixPath,
    pub S: MatrixPath,
    pub R: MatrixPath,
    pub q: VectorPath,
    pub rho: VectorPath,
    pub H: Matrix,
    pub g: Vector,
    pub x0: Vector,
}

/// Coefficients frozen at one time instant.
#[derive(Debug, Clone)]
pub struct Coefficients {
    pub A: Matrix,
    pub B: Matrix,
    pub C: Matrix,
    pub D: Matrix,
    pub F: Vec<Matrix>,
    pub G: Vec<Matrix>,
    pub b: Vector,
    pub sigma: Vector,
    pub f: Vec<Vector>,
    pub Q: Matrix,
    pub S: Matrix,
    pub R: Matrix,
    pub q: Vector,
    pub rho: Vector,
    pub pi: Vec<f64>,
}

impl ProblemSpec {
    /// All-zero problem of the given dimensions with `R = I`, `H = 0`, `x0 = 0`.
    pub fn zeros(n: usize, m: usize, grid: TimeGrid) -> Self {
        let mp = |r, c| CoefficientPath::Constant(Matrix::zeros(r, c));
        let vp = |r| CoefficientPath::Constant(Vector::zeros(r));
        Self {
            n,
            m,
            grid,
            jumps: JumpMeasure::default(),
            A: mp(n, n),
            B: mp(n, m),
            C: mp(n, n),
            D: mp(n, m),
            F: Vec::new(),
            G: Vec::new(),
            b: vp(n),
            sigma: vp(n),
            f: Vec::new(),
            Q: mp(n, n),
            S: mp(m, n),
            R: CoefficientPath::Constant(Matrix::identity(m, m)),
            q: vp(n),
            rho: vp(m),
            H: Matrix::zeros(n, n),
            g: Vector::zeros(n),
            x0: Vector::zeros(n),
        }
    }

    /// Appends a mark with zero jump coefficients.
    pub fn push_mark(&mut self, id: impl Into<String>, pi: f64) -> usize {
        self.jumps.marks.push(Mark { id: id.into(), pi });
        self.F.push(CoefficientPath::Constant(Matrix::zeros(self.n, self.n)));
        self.G.push(CoefficientPath::Constant(Matrix::zeros(self.n, self.m)));
        self.f.push(CoefficientPath::Constant(Vector::zeros(self.n)));
        self.jumps.marks.len() - 1
    }

    pub fn validate(self) -> std::result::Result<ValidatedProblem, ValidationErrors> {
        let errs = self.violations();
        if errs.is_empty() {
            Ok(ValidatedProblem(self))
        } else {
            Err(ValidationErrors(errs))
        }
    }

    /// Every violated constraint, in field order.
    pub fn violations(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        let mut push = |field: &str, k: Option<usize>, mark: Option<usize>, message: String| {
            out.push(Violation {
                field: field.to_string(),
                grid_index: k,
                mark_index: mark,
                message,
            })
        };
        let (n, m) = (self.n, self.m);
        if n == 0 {
            push("n", None, None, "n must be positive".into());
        }
        if m == 0 {
            push("m", None, None, "m must be positive".into());
        }
        let g = &self.grid;
        if !(g.t0.is_finite() && g.t_end.is_finite() && g.t0 < g.t_end) {
            push("grid", None, None, format!("grid requires t0 < T, got t0={} T={}", g.t0, g.t_end));
        }
        if g.steps == 0 {
            push("grid", None, None, "grid steps must be positive".into());
        }
        for (i, mk) in self.jumps.marks.iter().enumerate() {
            if !mk.pi.is_finite() {
                push("marks", None, Some(i), format!("non-finite jump intensity {}", mk.pi));
            } else if mk.pi < 0.0 {
                push("marks", None, Some(i), format!("negative jump intensity {}", mk.pi));
            }
        }
        let kk = self.jumps.len();
        for (name, len) in [("F", self.F.len()), ("G", self.G.len()), ("f", self.f.len())] {
            if len != kk {
                push(name, None, None, format!("{name} has {len} entries but there are {kk} marks"));
            }
        }

        let check_path = |name: &str, mark: Option<usize>, path: &dyn PathView, rows: usize, cols: usize, sym: bool, out: &mut Vec<Violation>| {
            let mut p = |k: Option<usize>, msg: String| {
                out.push(Violation {
                    field: name.to_string(),
                    grid_index: k,
                    mark_index: mark,
                    message: msg,
                })
            };
            if let Some(len) = path.sampled_len() {
                if len != g.steps + 1 {
                    p(None, format!("{name} has {len} samples, expected {}", g.steps + 1));
                }
            }
            for (k, (r, c), finite, symmetric) in path.sample_info() {
                let at = k.unwrap_or(0);
                if (r, c) != (rows, cols) {
                    p(k, format!("{name} is {r}x{c} at k={at}, expected {rows}x{cols}"));
                    continue;
                }
                if !finite {
                    p(k, format!("{name} has non-finite entries at k={at}"));
                    continue;
                }
                if sym && !symmetric {
                    p(k, format!("{name} not symmetric at k={at}"));
                }
            }
        };
        let mut extra = Vec::new();
        check_path("A", None, &self.A, n, n, false, &mut extra);
        check_path("B", None, &self.B, n, m, false, &mut extra);
        check_path("C", None, &self.C, n, n, false, &mut extra);
        check_path("D", None, &self.D, n, m, false, &mut extra);
        for (i, p) in self.F.iter().enumerate() {
            check_path("F", Some(i), p, n, n, false, &mut extra);
        }
        for (i, p) in self.G.iter().enumerate() {
            check_path("G", Some(i), p, n, m, false, &mut extra);
        }
        check_path("b", None, &self.b, n, 1, false, &mut extra);
        check_path("sigma", None, &self.sigma, n, 1, false, &mut extra);
        for (i, p) in self.f.iter().enumerate() {
            check_path("f", Some(i), p, n, 1, false, &mut extra);
        }
        check_path("Q", None, &self.Q, n, n, true, &mut extra);
        check_path("S", None, &self.S, m, n, false, &mut extra);
        check_path("R", None, &self.R, m, m, true, &mut extra);
        check_path("q", None, &self.q, n, 1, false, &mut extra);
        check_path("rho", None, &self.rho, m, 1, false, &mut extra);
        let h = CoefficientPath::Constant(self.H.clone());
        check_path("H", None, &h, n, n, true, &mut extra);
        let gv = CoefficientPath::Constant(self.g.clone());
        check_path("g", None, &gv, n, 1, false, &mut extra);
        let x0 = CoefficientPath::Constant(self.x0.clone());
        check_path("x0", None, &x0, n, 1, false, &mut extra);
        out.extend(extra);
        out
    }
}

/// Object-safe view used by the validator.
trait PathView {
    fn sampled_len(&self) -> Option<usize>;
    fn sample_info(&self) -> Vec<(Option<usize>, (usize, usize), bool, bool)>;
}

impl PathView for MatrixPath {
    fn sampled_len(&self) -> Option<usize> {
        match self {
            CoefficientPath::Sampled(s) => Some(s.len()),
            _ => None,
        }
    }
    fn sample_info(&self) -> Vec<(Option<usize>, (usize, usize), bool, bool)> {
        self.samples()
            .into_iter()
            .map(|(k, v)| (k, v.dims(), v.all_finite(), is_symmetric(v)))
            .collect()
    }
}

impl PathView for VectorPath {
    fn sampled_len(&self) -> Option<usize> {
        match self {
            CoefficientPath::Sampled(s) => Some(s.len()),
            _ => None,
        }
    }
    fn sample_info(&self) -> Vec<(Option<usize>, (usize, usize), bool, bool)> {
        self.samples()
            .into_iter()
            .map(|(k, v)| (k, v.dims(), v.all_finite(), true))
            .collect()
    }
}

/// A problem whose invariants have been checked. Immutable.
#[derive(Debug, Clone, PartialEq)]
pub struct ValidatedProblem(ProblemSpec);

impl Deref for ValidatedProblem {
    type Target = ProblemSpec;
    fn deref(&self) -> &ProblemSpec {
        &self.0
    }
}

impl ValidatedProblem {
    pub fn spec(&self) -> &ProblemSpec {
        &self.0
    }

    pub fn into_spec(self) -> ProblemSpec {
        self.0
    }

    pub fn marks(&self) -> usize {
        self.0.jumps.len()
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.0.grid
    }

    /// Same problem on a grid with a different number of steps. Fails if any
    /// coefficient is sampled on the old grid.
    /// Same problem on a uniform grid with `steps` steps.
    pub fn regrid(&self, steps: usize) -> Result<ValidatedProblem> {
        let mut s = self.0.clone();
        let (from, to) = (self.0.grid, self.0.grid.with_steps(steps));
        for p in [&mut s.A, &mut s.B, &mut s.C, &mut s.D, &mut s.Q, &mut s.S, &mut s.R]
            .into_iter()
            .chain(s.F.iter_mut())
            .chain(s.G.iter_mut())
        {
            *p = p.resample(&from, &to)?;
        }
        for p in [&mut s.b, &mut s.sigma, &mut s.q, &mut s.rho].into_iter().chain(s.f.iter_mut()) {
            *p = p.resample(&from, &to)?;
        }
        s.grid = to;
        s.validate().map_err(Error::Validation)
    }

    /// Problem with all inhomogeneous terms (`b, sigma, f, q, rho, g`) zeroed.
    pub fn homogeneous(&self) -> ValidatedProblem {
        let mut spec = self.0.clone();
        let (n, m) = (spec.n, spec.m);
        spec.b = CoefficientPath::Constant(Vector::zeros(n));
        spec.sigma = CoefficientPath::Constant(Vector::zeros(n));
        for f in spec.f.iter_mut() {
            *f = CoefficientPath::Constant(Vector::zeros(n));
        }
        spec.q = CoefficientPath::Constant(Vector::zeros(n));
        spec.rho = CoefficientPath::Constant(Vector::zeros(m));
        spec.g = Vector::zeros(n);
        ValidatedProblem(spec)
    }

    pub fn coeffs_at(&self, t: f64) -> Result<Coefficients> {
        let s = &self.0;
        let g = &s.grid;
        Ok(Coefficients {
            A: s.A.eval(g, t)?,
            B: s.B.eval(g, t)?,
            C: s.C.eval(g, t)?,
            D: s.D.eval(g, t)?,
            F: s.F.iter().map(|p| p.eval(g, t)).collect::<Result<_>>()?,
            G: s.G.iter().map(|p| p.eval(g, t)).collect::<Result<_>>()?,
            b: s.b.eval(g, t)?,
            sigma: s.sigma.eval(g, t)?,
            f: s.f.iter().map(|p| p.eval(g, t)).collect::<Result<_>>()?,
            Q: s.Q.eval(g, t)?,
            S: s.S.eval(g, t)?,
            R: s.R.eval(g, t)?,
            q: s.q.eval(g, t)?,
            rho: s.rho.eval(g, t)?,
            pi: s.jumps.intensities().collect(),
        })
    }

    /// Coefficients at grid point `k`, bit-identical to the stored samples.
    pub fn coeffs_at_node(&self, k: usize) -> Coefficients {
        let s = &self.0;
        Coefficients {
            A: s.A.at_node(k).clone(),
            B: s.B.at_node(k).clone(),
            C: s.C.at_node(k).clone(),
            D: s.D.at_node(k).clone(),
            F: s.F.iter().map(|p| p.at_node(k).clone()).collect(),
            G: s.G.iter().map(|p| p.at_node(k).clone()).collect(),
            b: s.b.at_node(k).clone(),
            sigma: s.sigma.at_node(k).clone(),
            f: s.f.iter().map(|p| p.at_node(k).clone()).collect(),
            Q: s.Q.at_node(k).clone(),
            S: s.S.at_node(k).clone(),
            R: s.R.at_node(k).clone(),
            q: s.q.at_node(k).clone(),
            rho: s.rho.at_node(k).clone(),
            pi: s.jumps.intensities().collect(),
        }
    }
}

/// Evaluates a coefficient path at `t` on the given grid.
pub fn eval_coeff<T: Sample>(path: &CoefficientPath<T>, grid: &TimeGrid, t: f64) -> Result<T> {
    path.eval(grid, t)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid() -> TimeGrid {
        TimeGrid::new(0.0, 1.0, 10)
    }

    #[test]
    fn zero_scalar_problem_is_valid() {
        let p = ProblemSpec::zeros(1, 1, grid());
        assert!(p.validate().is_ok());
    }

    #[test]
    fn asymmetric_r_is_reported() {
        let mut p = ProblemSpec::zeros(1, 2, grid());
        p.R = CoefficientPath::Constant(Matrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0]));
        let errs = p.validate().unwrap_err();
        assert_eq!(errs.0.len(), 1);
        assert_eq!(errs.0[0].field, "R");
        assert_eq!(errs.0[0].message, "R not symmetric at k=0");
    }

    #[test]
    fn asymmetric_sample_reports_grid_index() {
        let mut p = ProblemSpec::zeros(2, 1, grid());
        let mut samples = vec![Matrix::identity(2, 2); 11];
        samples[4][(0, 1)] = 3.0;
        p.Q = CoefficientPath::Sampled(samples);
        let errs = p.validate().unwrap_err();
        assert_eq!(errs.0[0].grid_index, Some(4));
        assert_eq!(errs.0[0].message, "Q not symmetric at k=4");
    }

    #[test]
    fn negative_intensity_is_reported() {
        let mut p = ProblemSpec::zeros(1, 1, grid());
        p.push_mark("e1", -1.0);
        let errs = p.validate().unwrap_err();
        assert_eq!(errs.0.len(), 1);
        assert!(errs.0[0].message.contains("negative jump intensity"));
        assert_eq!(errs.0[0].mark_index, Some(0));
    }

    #[test]
    fn collects_every_violation() {
        let mut p = ProblemSpec::zeros(2, 1, grid());
        p.A = CoefficientPath::Constant(Matrix::zeros(3, 3));
        p.x0 = Vector::from_vec(vec![f64::NAN, 0.0]);
        p.b = CoefficientPath::Sampled(vec![Vector::zeros(2); 3]);
        let errs = p.validate().unwrap_err();
        let fields: Vec<_> = errs.0.iter().map(|v| v.field.as_str()).collect();
        assert_eq!(fields, ["A", "b", "x0"]);
    }

    #[test]
    fn validate_is_idempotent() {
        let p = ProblemSpec::zeros(2, 2, grid());
        let v1 = p.clone().validate().unwrap();
        let v2 = v1.clone().into_spec().validate().unwrap();
        assert_eq!(v1, v2);
        assert_eq!(v1.spec(), &p);
    }

    #[test]
    fn eval_coeff_rules() {
        let g = grid();
        let c = CoefficientPath::Constant(Matrix::identity(2, 2));
        assert_eq!(eval_coeff(&c, &g, 0.37).unwrap(), Matrix::identity(2, 2));

        let samples: Vec<Matrix> = (0..=10).map(|k| Matrix::from_element(1, 1, k as f64 / 10.0)).collect();
        let s = CoefficientPath::Sampled(samples.clone());
        let mid = eval_coeff(&s, &g, 0.5).unwrap()[(0, 0)];
        assert!((mid - 0.5).abs() < 1e-15);
        let q = eval_coeff(&s, &g, 0.25).unwrap()[(0, 0)];
        assert!((q - 0.25).abs() < 1e-15);
        for k in 0..=10 {
            assert_eq!(eval_coeff(&s, &g, g.t(k)).unwrap(), samples[k]);
        }
        assert!(matches!(eval_coeff(&s, &g, 1.0 + g.h()), Err(Error::OutOfHorizon { .. })));
        assert!(matches!(eval_coeff(&c, &g, -0.5), Err(Error::OutOfHorizon { .. })));
    }

    #[test]
    fn endpoints_two_sample_scalar() {
        let g = TimeGrid::new(0.0, 2.0, 1);
        let s = CoefficientPath::Sampled(vec![Vector::from_vec(vec![0.0]), Vector::from_vec(vec![1.0])]);
        assert_eq!(s.eval(&g, 1.0).unwrap()[0], 0.5);
    }

    #[test]
    fn grid_indexing() {
        let g = TimeGrid::new(0.0, 1.0, 1000);
        assert_eq!(g.t(1000), 1.0);
        assert_eq!(g.index_of(g.t(417)), Some(417));
        assert_eq!(g.index_of(0.0005), None);
    }

    #[test]
    fn regrid_interpolates_sampled_paths() {
        let mut p = ProblemSpec::zeros(1, 1, grid());
        p.B = CoefficientPath::Sampled(grid().points().map(|t| Matrix::from_element(1, 1, 2.0 * t)).collect());
        let fine = p.validate().unwrap().regrid(40).unwrap();
        assert_eq!(fine.grid.steps, 40);
        let b = fine.coeffs_at_node(7).B[(0, 0)];
        assert!((b - 2.0 * 7.0 / 40.0).abs() < 1e-15);
    }
}

//! Acceptance run: one line per criterion, non-zero exit if any fails.

use std::path::Path;
use std::process::Command;
use std::time::Instant;

use jumplq::error::{Error, GateFailure};
use jumplq::feedforward::{solve, ClosedLoopStrategy, Solution};
use jumplq::fixtures;
use jumplq::io::save_spec;
use jumplq::linalg::{pinv, Cutoff};
use jumplq::noise::NoisePlan;
use jumplq::riccati::{feedback_gain, solve_lyapunov, solve_ride, Tolerances};
use jumplq::sim::Simulator;
use jumplq::verify::{
    completion_of_squares_check, convexity_probe, default_probes, problem_scale, stationarity_residual,
    value_match_check, CostReport, Probe,
};
use jumplq::{Matrix, ValidatedProblem, Vector};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

/// Every problem solved during the run, for the gain identity.
#[derive(Default)]
struct Solved(Vec<(String, Vec<Matrix>, Vec<Matrix>, Vec<Matrix>)>);

impl Solved {
    fn record(&mut self, name: &str, sol: &jumplq::riccati::RiccatiSolution) {
        self.0.push((
            name.into(),
            feedback_gain(sol),
            sol.ops.iter().map(|o| o.rhat.clone()).collect(),
            sol.ops.iter().map(|o| o.lcal.clone()).collect(),
        ));
    }
}

fn tol() -> Tolerances {
    Tolerances::default()
}

fn max_err(prob: &ValidatedProblem, p: &[Matrix], exact: impl Fn(f64) -> f64) -> f64 {
    prob.grid()
        .points()
        .zip(p)
        .map(|(t, pk)| (pk[(0, 0)] - exact(t)).abs())
        .fold(0.0, f64::max)
}

fn closed_form(
    solved: &mut Solved,
    name: &str,
    prob: ValidatedProblem,
    exact: impl Fn(f64) -> f64,
) -> jumplq::Result<Outcome> {
    let start = Instant::now();
    let sol = solve_ride(&prob, &tol())?;
    let secs = start.elapsed().as_secs_f64();
    let err = max_err(&prob, &sol.p, exact);
    solved.record(name, &sol);
    Ok(outcome(
        err <= 1e-8 && secs < 1.0,
        format!("max error {err:.2e} (tol 1e-8), {secs:.3} s (limit 1 s)"),
    ))
}

fn c1(s: &mut Solved) -> jumplq::Result<Outcome> {
    closed_form(s, "riccati_quadratic", fixtures::riccati_quadratic(1000).validate().unwrap(), |t| {
        1.0 / (2.0 - t)
    })
}

fn c2(s: &mut Solved) -> jumplq::Result<Outcome> {
    closed_form(s, "pure_jump", fixtures::pure_jump(1000).validate().unwrap(), |t| (1.0 - t).exp())
}

fn c3(s: &mut Solved) -> jumplq::Result<Outcome> {
    let start = Instant::now();
    let prob = fixtures::jump_control(1000).validate().unwrap();
    let sol = solve_ride(&prob, &tol())?;
    let p0 = sol.p[0][(0, 0)];
    let relation = (-1.0 / p0 + p0.ln() + 2.0).abs();
    // Euler steps backward from P(1) = 1 for dP/dt = P^2/(1+P).
    let n = 1_000_000;
    let h = 1.0 / n as f64;
    let mut p = 1.0_f64;
    for _ in 0..n {
        p -= h * p * p / (1.0 + p);
    }
    let secs = start.elapsed().as_secs_f64();
    let gap = (p0 - p).abs();
    s.record("jump_control", &sol);
    Ok(outcome(
        relation <= 1e-6 && gap <= 1e-6 && secs < 10.0,
        format!("P(t0) = {p0:.10}, implicit relation residual {relation:.2e}, fine-grid oracle gap {gap:.2e} (tol 1e-6), {secs:.2} s (limit 10 s)"),
    ))
}

fn c4(s: &mut Solved) -> jumplq::Result<Outcome> {
    let prob = fixtures::random_problem(2024, 3, 2, 2, 2000, false).validate().unwrap();
    let sol = solve_ride(&prob, &tol())?;
    let p_theta = solve_lyapunov(&prob, &feedback_gain(&sol))?;
    let gap = p_theta
        .iter()
        .zip(&sol.p)
        .map(|(a, b)| (a - b).amax())
        .fold(0.0, f64::max);
    s.record("random_3x2x2", &sol);
    Ok(outcome(gap <= 1e-6, format!("sup-norm gap {gap:.2e} (tol 1e-6)")))
}

fn c5() -> jumplq::Result<Outcome> {
    let mut rng = StdRng::seed_from_u64(5);
    let mut worst = 0.0_f64;
    let mut deficient = 0;
    for i in 0..100 {
        let r = rng.random_range(1..=8);
        let c = rng.random_range(1..=8);
        let m = if i % 2 == 0 {
            Matrix::from_fn(r, c, |_, _| rng.random_range(-1.0..1.0))
        } else {
            let k = rng.random_range(1..=r.min(c));
            deficient += usize::from(k < r.min(c));
            let a = Matrix::from_fn(r, k, |_, _| rng.random_range(-1.0..1.0));
            let b = Matrix::from_fn(k, c, |_, _| rng.random_range(-1.0..1.0));
            a * b
        };
        let x = pinv(&m, Cutoff::Auto)?;
        let res = [
            (&m * &x * &m - &m).norm(),
            (&x * &m * &x - &x).norm(),
            (&m * &x - (&m * &x).transpose()).norm(),
            (&x * &m - (&x * &m).transpose()).norm(),
        ];
        let rel = res.iter().fold(0.0_f64, |a, r| a.max(*r)) / (1.0 + m.norm());
        worst = worst.max(rel);
    }
    Ok(outcome(
        worst <= 1e-10,
        format!("worst residual / (1 + |M|_F) = {worst:.2e} over 100 matrices, {deficient} rank-deficient (tol 1e-10)"),
    ))
}

fn c6(s: &Solved) -> Outcome {
    let mut worst = 0.0_f64;
    let mut points = 0;
    for (_, theta, rhat, lcal) in &s.0 {
        for ((th, r), l) in theta.iter().zip(rhat).zip(lcal) {
            worst = worst.max((r * th + l).norm() / (1.0 + l.norm()));
            points += 1;
        }
    }
    outcome(
        worst <= 1e-8,
        format!("worst |Rhat Theta + Lcal|_F / (1 + |Lcal|_F) = {worst:.2e} over {} problems, {points} grid points (tol 1e-8)", s.0.len()),
    )
}

fn solve_recorded(s: &mut Solved, name: &str, prob: &ValidatedProblem) -> jumplq::Result<Solution> {
    let sol = solve(prob, &tol())?;
    s.record(name, &sol.ride);
    Ok(sol)
}

fn c7(s: &mut Solved) -> jumplq::Result<Outcome> {
    let start = Instant::now();
    let prob = fixtures::inhomogeneous_scalar(2000).validate().unwrap();
    let sol = solve_recorded(s, "inhomogeneous_scalar", &prob)?;
    let rep = value_match_check(&prob, &sol, &NoisePlan::new(7, 10_000))?;
    let secs = start.elapsed().as_secs_f64();
    Ok(outcome(
        rep.pass && secs < 60.0,
        format!(
            "MC {:.6} vs V(t0,x0) {:.6}: gap {:.2e} within {:.2e}, {secs:.1} s (limit 60 s)",
            rep.lhs, rep.rhs, rep.gap, rep.tolerance
        ),
    ))
}

fn c8(s: &mut Solved) -> jumplq::Result<Outcome> {
    let prob = fixtures::random_problem(8, 3, 2, 2, 500, true).validate().unwrap();
    let sol = solve_recorded(s, "random_inhomogeneous", &prob)?;
    let probes: Vec<Probe> = default_probes(prob.m, prob.grid(), 5, 8).into_iter().map(Probe::OpenLoop).collect();
    let reps = completion_of_squares_check(&prob, &sol.ride, &sol.strategy, &probes, &NoisePlan::new(8, 10_000))?;
    let pass = reps.iter().all(|r| r.identity.pass && r.optimality.pass);
    let worst = reps
        .iter()
        .map(|r| r.identity.gap.abs() / r.identity.tolerance)
        .fold(0.0, f64::max);
    let min_excess = reps.iter().map(|r| r.excess_cost.mean).fold(f64::INFINITY, f64::min);
    Ok(outcome(
        pass,
        format!("{} probes: worst identity gap / tolerance {worst:.2}, smallest excess cost {min_excess:.4}", reps.len()),
    ))
}

fn c9(s: &mut Solved) -> jumplq::Result<Outcome> {
    let prob = fixtures::random_problem(9, 3, 2, 2, 500, true).validate().unwrap();
    let sol = solve_recorded(s, "random_stationarity", &prob)?;
    let scale = problem_scale(&prob, &sol.ride)?;
    let r = stationarity_residual(&prob, &sol.ride, &sol.adjoint, &sol.strategy, &NoisePlan::new(9, 200))?;
    Ok(outcome(
        r <= 1e-8 * scale,
        format!("max residual {r:.2e} over 200 paths (tol {:.2e})", 1e-8 * scale),
    ))
}

fn c10() -> jumplq::Result<Outcome> {
    let prob = fixtures::pure_jump(1000).validate().unwrap();
    let zero = ClosedLoopStrategy::zero(*prob.grid(), 1, 1);
    let xt = Simulator::new(&prob).map_paths(&zero, &NoisePlan::new(10, 10_000), &prob.x0, |tr| {
        Ok(tr.terminal()[0])
    })?;
    let rep = CostReport::from_samples(&xt, false);
    let gap = (rep.mean - prob.x0[0]).abs();
    Ok(outcome(
        gap <= 3.0 * rep.std_error,
        format!("mean X(T) {:.5}, |mean - x0| {gap:.2e} vs 3 SE {:.2e}", rep.mean, 3.0 * rep.std_error),
    ))
}

fn c11() -> jumplq::Result<Outcome> {
    let prob = fixtures::negative_control_weight(1000).validate().unwrap();
    let refused = match solve_ride(&prob, &tol()) {
        Err(Error::ClosedLoopUnsolvable { reason, time }) => (reason == GateFailure::Psd).then_some(time),
        _ => None,
    };
    let probe = vec![Vector::from_element(1, 1.0); 1000];
    let conv = convexity_probe(&prob, &[probe], &NoisePlan::new(11, 100))?;
    Ok(outcome(
        refused.is_some() && conv.min_value < 0.0,
        format!(
            "solve refused: {}; convexity certificate for u = 1: {:.6}",
            refused.map_or("no".into(), |t| format!("PSD at t={t}")),
            conv.min_value
        ),
    ))
}

fn simulate(problem: &Path, out: &Path, threads: usize) -> Vec<u8> {
    let status = Command::new(env!("CARGO_BIN_EXE_jumplq"))
        .args(["simulate", "--problem"])
        .arg(problem)
        .args(["--seed", "12", "--paths", "2000", "--out"])
        .arg(out)
        .env("RAYON_NUM_THREADS", threads.to_string())
        .output()
        .expect("run jumplq");
    assert!(status.status.success(), "{}", String::from_utf8_lossy(&status.stderr));
    let mut bytes = std::fs::read(out.join("trajectories.csv")).unwrap();
    bytes.extend(std::fs::read(out.join("costs.csv")).unwrap());
    bytes
}

fn c12() -> jumplq::Result<Outcome> {
    let dir = tempfile::tempdir()?;
    let problem = dir.path().join("problem.json");
    std::fs::write(&problem, save_spec(&fixtures::random_problem(12, 3, 2, 2, 200, true))?)?;
    let runs = [(1, "a"), (1, "b"), (4, "c"), (16, "d")].map(|(t, d)| simulate(&problem, &dir.path().join(d), t));
    let same = runs.iter().all(|r| r == &runs[0]);
    Ok(outcome(
        same,
        format!("4 runs with 1, 1, 4, 16 threads: {} ({} bytes)", if same { "byte-identical" } else { "differ" }, runs[0].len()),
    ))
}

fn main() {
    let mut solved = Solved::default();
    let mut results: Vec<(u32, &str, jumplq::Result<Outcome>)> = vec![
        (1, "Riccati closed form, no jumps", c1(&mut solved)),
        (2, "Riccati closed form, pure jump", c2(&mut solved)),
        (3, "jump-and-control implicit relation", c3(&mut solved)),
        (4, "Lyapunov vs Riccati consistency", c4(&mut solved)),
        (5, "pseudo-inverse Penrose conditions", c5()),
    ];
    let rest: Vec<(u32, &str, jumplq::Result<Outcome>)> = vec![
        (7, "value match", c7(&mut solved)),
        (8, "completion of squares", c8(&mut solved)),
        (9, "stationarity residual", c9(&mut solved)),
        (10, "martingale check", c10()),
        (11, "negative control", c11()),
        (12, "determinism across thread counts", c12()),
    ];
    results.push((6, "gain identity", Ok(c6(&solved))));
    results.extend(rest);
    results.sort_by_key(|r| r.0);

    let mut failed = 0;
    for (id, name, res) in results {
        let (pass, detail) = match res {
            Ok(o) => (o.pass, o.detail),
            Err(e) => (false, format!("error: {e}")),
        };
        failed += usize::from(!pass);
        println!("criterion {id:>2} {}  {name}: {detail}", if pass { "PASS" } else { "FAIL" });
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
    println!("all 12 criteria passed");
}

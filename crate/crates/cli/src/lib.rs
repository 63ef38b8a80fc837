//! `jumplq` command line: validate, solve, simulate, verify and value.
//!
//! Exit codes: 0 ok, 1 usage or output I/O, 2 invalid problem, 3 parse
//! failure, 4 no closed-loop optimal strategy, 5 numerical failure,
//! 6 verification failure.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use jumplq::error::{Error, GateFailure};
use jumplq::feedforward::{solve, Solution};
use jumplq::io::load_spec;
use jumplq::noise::NoisePlan;
use jumplq::riccati::Tolerances;
use jumplq::sim::Simulator;
use jumplq::verify::{cost_along, run_suite, CostReport, SuiteConfig};
use jumplq::{ValidatedProblem, Vector};
use serde::Serialize;

pub mod output;

use output::{read_matrix_series, sig12, write_costs, write_json, write_matrix_series, write_vector_series};

#[derive(Debug, Parser)]
#[command(name = "jumplq", version, about = "Closed-loop LQ control with Poisson jumps")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Check a problem file and report every violated constraint.
    Validate(RunConfig),
    /// Solve for the optimal closed-loop strategy and write P, Theta, eta, v.
    Solve(RunConfig),
    /// Simulate the closed-loop system and write trajectories and costs.
    Simulate(RunConfig),
    /// Run the Monte Carlo verification suite.
    Verify(RunConfig),
    /// Print V(t0, x).
    Value(RunConfig),
}

#[derive(Debug, Clone, Args)]
pub struct RunConfig {
    /// Problem file (JSON).
    #[arg(long)]
    pub problem: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Monte Carlo paths.
    #[arg(long, default_value_t = 10_000, value_parser = clap::value_parser!(u64).range(1..))]
    pub paths: u64,
    /// Override the number of grid steps in the problem file.
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    pub steps: Option<u64>,
    /// Initial state as comma-separated floats (defaults to x0 from the file).
    #[arg(long, allow_hyphen_values = true)]
    pub x: Option<String>,
    /// Output directory.
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
    #[arg(long, default_value_t = Tolerances::default().psd)]
    pub tol_psd: f64,
    #[arg(long, default_value_t = Tolerances::default().range)]
    pub tol_range: f64,
    /// Feedback gain CSV (layout of Theta.csv) replacing the computed one.
    #[arg(long)]
    pub theta: Option<PathBuf>,
    /// Number of paths written to trajectories.csv.
    #[arg(long, default_value_t = 100)]
    pub trajectories: usize,
}

impl RunConfig {
    pub fn new(problem: impl Into<PathBuf>) -> Self {
        Self {
            problem: problem.into(),
            seed: 0,
            paths: 10_000,
            steps: None,
            x: None,
            out: ".".into(),
            tol_psd: Tolerances::default().psd,
            tol_range: Tolerances::default().range,
            theta: None,
            trajectories: 100,
        }
    }

    fn tolerances(&self) -> Tolerances {
        Tolerances {
            psd: self.tol_psd,
            range: self.tol_range,
        }
    }
}

#[derive(Debug)]
pub enum Failure {
    Usage(String),
    Output(String),
    Invalid(Vec<String>),
    Parse(String),
    Unsolvable { time: f64, reason: GateFailure },
    Numerical(String),
    Verification(Vec<String>),
}

impl Failure {
    pub fn code(&self) -> u8 {
        match self {
            Failure::Usage(_) | Failure::Output(_) => 1,
            Failure::Invalid(_) => 2,
            Failure::Parse(_) => 3,
            Failure::Unsolvable { .. } => 4,
            Failure::Numerical(_) => 5,
            Failure::Verification(_) => 6,
        }
    }

    fn output(path: &Path, e: std::io::Error) -> Self {
        Failure::Output(format!("{}: {e}", path.display()))
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Failure::Usage(m) | Failure::Output(m) | Failure::Parse(m) | Failure::Numerical(m) => f.write_str(m),
            Failure::Invalid(lines) => f.write_str(&lines.join("\n")),
            Failure::Unsolvable { time, reason } => write!(
                f,
                "{}",
                serde_json::json!({ "error": "closed_loop_unsolvable", "time": time, "reason": reason })
            ),
            Failure::Verification(names) => write!(f, "verification failed: {}", names.join(", ")),
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Validation(v) => Failure::Invalid(v.0.iter().map(ToString::to_string).collect()),
            Error::Dimension(_) | Error::OutOfHorizon { .. } => Failure::Invalid(vec![e.to_string()]),
            Error::Parse(_) | Error::Schema(_) | Error::Io(_) => Failure::Parse(e.to_string()),
            Error::ClosedLoopUnsolvable { time, reason } => Failure::Unsolvable { time, reason },
            Error::RegularityViolation { time, which } => Failure::Unsolvable { time, reason: which },
            Error::NumericalFailure(_) | Error::StateBlowUp { .. } => Failure::Numerical(e.to_string()),
        }
    }
}

pub fn run(cli: &Cli) -> Result<(), Failure> {
    match &cli.command {
        Command::Validate(c) => cmd_validate(c).map(|line| println!("{line}")),
        Command::Solve(c) => cmd_solve(c).map(|_| ()),
        Command::Simulate(c) => cmd_simulate(c).map(|s| println!("{s}")),
        Command::Verify(c) => cmd_verify(c).map(|_| ()),
        Command::Value(c) => cmd_value(c).map(|v| println!("{}", sig12(v.value))),
    }
}

/// Loads and validates the problem, applying `--steps`.
pub fn load_problem(cfg: &RunConfig) -> Result<ValidatedProblem, Failure> {
    let spec = load_spec(&cfg.problem)?;
    let prob = spec.validate().map_err(Error::Validation)?;
    match cfg.steps {
        Some(n) if n as usize != prob.grid().steps => Ok(prob.regrid(n as usize)?),
        _ => Ok(prob),
    }
}

fn out_dir(cfg: &RunConfig) -> Result<&Path, Failure> {
    fs::create_dir_all(&cfg.out).map_err(|e| Failure::output(&cfg.out, e))?;
    Ok(&cfg.out)
}

fn parse_x(cfg: &RunConfig, prob: &ValidatedProblem) -> Result<Vector, Failure> {
    let Some(text) = &cfg.x else {
        return Ok(prob.x0.clone());
    };
    let vals = text
        .split(',')
        .map(|s| s.trim().parse::<f64>().map_err(|_| Failure::Usage(format!("--x: bad number `{s}`"))))
        .collect::<Result<Vec<_>, _>>()?;
    if vals.len() != prob.n {
        return Err(Failure::Invalid(vec![format!("--x has {} entries, expected n={}", vals.len(), prob.n)]));
    }
    Ok(Vector::from_vec(vals))
}

/// `OK n=.. m=.. K=..` on success.
pub fn cmd_validate(cfg: &RunConfig) -> Result<String, Failure> {
    let prob = load_problem(cfg)?;
    Ok(format!("OK n={} m={} K={}", prob.n, prob.m, prob.marks()))
}

#[derive(Debug, Serialize)]
struct GridPointCertificate {
    k: usize,
    t: f64,
    psd_ok: bool,
    range_ok: bool,
    range_feedforward_ok: bool,
}

#[derive(Debug, Serialize)]
struct SolveSummary {
    n: usize,
    m: usize,
    marks: usize,
    t0: f64,
    #[serde(rename = "T")]
    t_end: f64,
    steps: usize,
    all_certificates_pass: bool,
    theta_l2_norm: f64,
    #[serde(rename = "P_t0")]
    p_t0: Vec<Vec<f64>>,
    certificates: Vec<GridPointCertificate>,
}

fn solve_problem(cfg: &RunConfig, prob: &ValidatedProblem) -> Result<Solution, Failure> {
    Ok(solve(prob, &cfg.tolerances())?)
}

/// Writes `P.csv`, `Theta.csv`, `eta.csv`, `v.csv` and `solve.json`.
pub fn cmd_solve(cfg: &RunConfig) -> Result<Solution, Failure> {
    let prob = load_problem(cfg)?;
    let sol = solve_problem(cfg, &prob)?;
    let dir = out_dir(cfg)?;
    let grid = prob.grid();
    write_matrix_series(&dir.join("P.csv"), "P", grid, &sol.ride.p)?;
    write_matrix_series(&dir.join("Theta.csv"), "Theta", grid, &sol.strategy.theta)?;
    write_vector_series(&dir.join("eta.csv"), "eta", grid, &sol.adjoint.eta)?;
    write_vector_series(&dir.join("v.csv"), "v", grid, &sol.strategy.v)?;
    let certificates: Vec<_> = sol
        .ride
        .certificates
        .iter()
        .zip(&sol.adjoint.range_ok)
        .enumerate()
        .map(|(k, (c, ff))| GridPointCertificate {
            k,
            t: grid.t(k),
            psd_ok: c.psd_ok,
            range_ok: c.range_ok,
            range_feedforward_ok: *ff,
        })
        .collect();
    let p0 = &sol.ride.p[0];
    let summary = SolveSummary {
        n: prob.n,
        m: prob.m,
        marks: prob.marks(),
        t0: grid.t0,
        t_end: grid.t_end,
        steps: grid.steps,
        all_certificates_pass: certificates.iter().all(|c| c.psd_ok && c.range_ok && c.range_feedforward_ok),
        theta_l2_norm: sol.ride.theta_l2_norm,
        p_t0: (0..p0.nrows()).map(|i| p0.row(i).iter().copied().collect()).collect(),
        certificates,
    };
    write_json(&dir.join("solve.json"), &summary)?;
    Ok(sol)
}

#[derive(Debug, Serialize)]
pub struct ValueReport {
    pub t: f64,
    pub x: Vec<f64>,
    pub value: f64,
    pub quadratic: f64,
    pub linear: f64,
    pub integral: f64,
}

/// `V(t0, x)`; also writes `value.json`.
pub fn cmd_value(cfg: &RunConfig) -> Result<ValueReport, Failure> {
    let prob = load_problem(cfg)?;
    let x = parse_x(cfg, &prob)?;
    let sol = solve_problem(cfg, &prob)?;
    let t = prob.grid().t0;
    let v = sol.value(&prob, t, &x)?;
    let rep = ValueReport {
        t,
        x: x.iter().copied().collect(),
        value: v.value,
        quadratic: v.quadratic,
        linear: v.linear,
        integral: v.integral,
    };
    write_json(&out_dir(cfg)?.join("value.json"), &rep)?;
    Ok(rep)
}

#[derive(Debug, Clone)]
pub struct SimulationSummary {
    pub cost: CostReport,
    pub x0: Vector,
    /// Mean and standard error of each component of `X(T)`.
    pub terminal_mean: Vec<(f64, f64)>,
}

impl fmt::Display for SimulationSummary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "cost mean {} ± {} (SE, {} paths)",
            sig12(self.cost.mean),
            sig12(self.cost.std_error),
            self.cost.paths
        )?;
        for (i, (m, se)) in self.terminal_mean.iter().enumerate() {
            let x0 = self.x0[i];
            let within = (m - x0).abs() <= 3.0 * se;
            write!(
                f,
                "\nX_{i}(T) mean {} ± {} (SE); x0_{i} = {}; within 3 SE of x0: {}",
                sig12(*m),
                sig12(*se),
                x0,
                if within { "yes" } else { "no" }
            )?;
        }
        Ok(())
    }
}

/// Closed-loop simulation from `x` (default `x0`). Writes the first
/// `--trajectories` paths to `trajectories.csv` and every path cost to
/// `costs.csv`.
pub fn cmd_simulate(cfg: &RunConfig) -> Result<SimulationSummary, Failure> {
    let prob = load_problem(cfg)?;
    let x = parse_x(cfg, &prob)?;
    let sol = solve_problem(cfg, &prob)?;
    let dir = out_dir(cfg)?;
    let plan = NoisePlan::new(cfg.seed, cfg.paths as usize);
    let sim = Simulator::new(&prob);
    let per_path = sim.map_paths(&sol.strategy, &plan, &x, |tr| Ok((cost_along(&tr, &prob), tr.terminal().clone())))?;

    let keep = cfg.trajectories.min(plan.paths);
    let trajs = (0..keep)
        .map(|p| sim.path(&sol.strategy, &plan, p, &x))
        .collect::<jumplq::Result<Vec<_>>>()?;
    let traj_path = dir.join("trajectories.csv");
    let file = fs::File::create(&traj_path).map_err(|e| Failure::output(&traj_path, e))?;
    let mut w = std::io::BufWriter::new(file);
    jumplq::sim::write_trajectories_csv(&mut w, prob.grid(), &trajs).map_err(|e| Failure::Output(e.to_string()))?;
    std::io::Write::flush(&mut w).map_err(|e| Failure::output(&traj_path, e))?;

    let costs: Vec<f64> = per_path.iter().map(|(c, _)| *c).collect();
    write_costs(&dir.join("costs.csv"), &costs)?;
    let terminal_mean = (0..prob.n)
        .map(|i| {
            let xs: Vec<f64> = per_path.iter().map(|(_, xt)| xt[i]).collect();
            let r = CostReport::from_samples(&xs, false);
            (r.mean, r.std_error)
        })
        .collect();
    Ok(SimulationSummary {
        cost: CostReport::from_samples(&costs, false),
        x0: x,
        terminal_mean,
    })
}

/// Full verification suite; writes `verify.json`, exit 6 on any failing check.
pub fn cmd_verify(cfg: &RunConfig) -> Result<jumplq::verify::VerificationReport, Failure> {
    let prob = load_problem(cfg)?;
    let mut sol = solve_problem(cfg, &prob)?;
    if let Some(path) = &cfg.theta {
        sol.strategy.theta = read_matrix_series(path, prob.m, prob.n, prob.grid())?;
    }
    let suite = SuiteConfig {
        seed: cfg.seed,
        paths: cfg.paths as usize,
        ..SuiteConfig::default()
    };
    let report = run_suite(&prob, &sol, &suite)?;
    write_json(&out_dir(cfg)?.join("verify.json"), &report)?;
    for c in &report.checks {
        println!(
            "{:<28} {}  gap {:e}  tol {:e}",
            c.name,
            if c.pass { "pass" } else { "FAIL" },
            c.gap,
            c.tolerance
        );
    }
    if report.all_pass() {
        Ok(report)
    } else {
        Err(Failure::Verification(report.failing().map(|c| c.name.clone()).collect()))
    }
}

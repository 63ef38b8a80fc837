//! Closed-loop solver and Monte Carlo verifier for finite-horizon stochastic
//! linear-quadratic control with Poisson jumps.
//!
//! The pipeline is: [`problem`] data, the Riccati equation in [`riccati`]
//! (gain `Theta`), the adjoint equation in [`feedforward`] (feedforward `v`
//! and the value function), Euler simulation in [`sim`] driven by the
//! counter-based noise in [`noise`], and the optimality checks in [`verify`].

pub mod error;
pub mod feedforward;
pub mod fixtures;
pub mod io;
pub mod linalg;
pub mod noise;
pub mod problem;
pub mod riccati;
pub mod sim;
pub mod verify;

pub use error::{Error, GateFailure, Result};
pub use feedforward::{solve, ClosedLoopStrategy, Solution};
pub use linalg::{Matrix, Vector};
pub use noise::NoisePlan;
pub use problem::{CoefficientPath, ProblemSpec, TimeGrid, ValidatedProblem};
pub use riccati::Tolerances;

//! Fault-tolerant control synthesis for control-affine stochastic plants whose
//! sensors may be under attack, with tasks written as temporal-logic formulas
//! over filter belief states.
//!
//! The crate is organised bottom-up:
//!
//! - [`sde`]: plant models, attack signals, the Euler–Maruyama integrator and
//!   trajectory logs.
//! - [`ekf`]: one extended Kalman filter per fault pattern plus pairwise
//!   leave-out filters.
//! - [`automata`]: formulas, propositions, Rabin automata, accepting runs,
//!   reach-avoid decomposition and trace checking.
//! - [`barrier`]: barrier functions, estimation-error margins, the per-pattern
//!   input constraints and the fault-isolating synthesis loop.
//! - [`qp`]: a dense dual active-set QP solver and a phase-1 LP.
//! - [`harness`]: scenario files, the closed-loop runner, Monte Carlo
//!   batches, reports and plot output.

pub mod automata;
pub mod barrier;
pub mod ekf;
pub mod harness;
pub mod linalg;
pub mod qp;
pub mod sde;

pub use ekf::BeliefState;

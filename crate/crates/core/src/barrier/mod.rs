//! Barrier functions on beliefs, their estimation-error margins, the input
//! constraints they induce and the fault-isolating synthesis loop.

mod constraints;
mod function;
mod margin;
mod synthesis;
mod transversality;

pub use constraints::{
    barrier_rows, gamma_constraint, omega_constraint, sfcbf_value, signed_abs, BeliefDynamics, ConstraintKind,
    LinearConstraint,
};
pub use function::{BarrierClass, BarrierEval, BarrierFn, CustomBarrier, PointMap, NONSMOOTH_GAP};
pub use margin::{eps_margin, EpsMargin};
pub use synthesis::{
    active_set, isolate_faults, residual_prune, synthesize_control, SynthesisOutcome, SynthesisParams,
};
pub use transversality::{transversality_check, Transversality, TRANSVERSALITY_MARGIN};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BarrierError {
    #[error("barrier `{0}` has no Lipschitz bound, its margin cannot be computed")]
    MissingBound(String),
    #[error("error radius must be finite and nonnegative, got {0}")]
    InvalidRadius(f64),
    #[error("invalid synthesis parameters: {0}")]
    InvalidParams(String),
}

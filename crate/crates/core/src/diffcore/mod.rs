//! Minimal reverse-mode differentiation, optimizers and checkpointing.

pub mod checkpoint;
mod gradcheck;
mod optim;
mod tape;
mod tensor;

pub use gradcheck::{analytic_grad, grad_check, rel_err, GradCheck, GradCheckReport, REL_ERR_FLOOR};
pub use optim::{adam_step, sgd_step, AdamConfig, AdamState};
pub use tape::{Axis, Bound, Tape, Var};
pub use tensor::{ParamSet, Tensor};

//! Smooth non-stationary bandits: Budgeted Exploration policies, Hölder reward
//! instances, the bowl/red lower-bound family, and regret experiments.

#![allow(clippy::neg_cmp_op_on_partial_ord)] // negated comparisons also reject NaN

pub mod adversary;
pub mod construction;
pub mod error;
pub mod experiment;
pub mod holder;
pub mod piecewise;
pub mod policy;
pub mod reward;
pub mod sign;
pub mod sim;

pub use error::{Error, Result};

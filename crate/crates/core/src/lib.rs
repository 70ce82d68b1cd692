//! Dynamic control allocation for a hybrid FES-exoskeleton elbow.
// negated comparisons reject NaN on purpose
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod allocator;
pub mod control;
pub mod error;
pub mod fes;
pub mod integrate;
pub mod plant;
pub mod sim;
pub mod spline;
pub mod types;
pub mod verify;

pub use error::{Error, Result};
pub use types::{
    decompose, reconstruct, sigma_for, AngleBound, AttainableSet, Decomposition, JointTorque, PlantState, Sigma,
    SIGMA_EXTENSION, SIGMA_FLEXION,
};

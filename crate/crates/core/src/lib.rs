//! Flight-dynamics simulation of a tail-less flapping-wing robot with
//! articulated (shoulder/elbow) wings, unsteady lifting-line aerodynamics and
//! an optional thruster guard.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod aero;
pub mod control;
pub mod dynamics;
pub mod error;
pub mod harness;
pub mod integrate;
pub mod kinematics;
pub mod model;
pub mod oracle;

pub use error::{Error, Result};

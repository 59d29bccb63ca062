//! Robust model predictive control for a disturbed differential-drive robot
//! tracking a unicycle reference: tube-MPC with ancillary feedback and
//! nominal robust MPC with state reset.

pub mod controllers;
pub mod error;
pub mod error_frame;
pub mod kinematics;
pub mod ocp;
pub mod sim;
pub mod verify;

pub use error::{Error, Result};

//! Finite-horizon optimal control problems for the nominal head-point model:
//! cost functional, terminal machinery, direct multiple shooting and the
//! constrained NLP solver behind them.

mod cost;
pub mod nlp;
mod solve;
mod terminal;
mod transcription;
mod warm_start;

pub use cost::{stage_cost, terminal_penalty, total_cost, CostSamples};
pub use terminal::{in_terminal_diamond, terminal_controller, TerminalGains};
pub use solve::solve;
pub use transcription::{transcribe, ConstraintSpec, OcpProblem, TerminalSet, FEASIBILITY_TOL};
pub use warm_start::shift_warm_start;

use crate::error::{Error, Result};
use crate::error_frame::TrackingError;
use crate::kinematics::{BodyInput, Pose, WheelSpeeds};
pub use nlp::{SolveStatus, SolverOptions};

/// Quadratic weights of the stage cost: `Q = diag(q1, q2)` on the position
/// error and `P = diag(p1, p2)` on the input error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Weights {
    pub q1: f64,
    pub q2: f64,
    pub p1: f64,
    pub p2: f64,
}

impl Weights {
    pub fn new(q1: f64, q2: f64, p1: f64, p2: f64) -> Result<Self> {
        for (name, v) in [("q1", q1), ("q2", q2), ("p1", p1), ("p2", p2)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidParameter(format!(
                    "weight {name} must be positive, got {v}"
                )));
            }
        }
        Ok(Weights { q1, q2, p1, p2 })
    }

    /// `p_i q_i < 1/4` for both channels. Reported by the certifier rather
    /// than enforced here so that violating configurations stay inspectable.
    pub fn admits_terminal_controller(&self) -> bool {
        self.p1 * self.q1 < 0.25 && self.p2 * self.q2 < 0.25
    }
}

/// Prediction horizon `T = N·delta` with `substeps` RK4 steps per interval.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HorizonConfig {
    horizon: f64,
    delta: f64,
    intervals: usize,
    substeps: usize,
}

impl HorizonConfig {
    /// Rejects horizons that are not an integer multiple (N ≥ 2) of `delta`.
    pub fn new(horizon: f64, delta: f64, substeps: usize) -> Result<Self> {
        if !(delta.is_finite() && delta > 0.0 && horizon.is_finite() && horizon > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "horizon and sampling period must be positive, got T = {horizon}, delta = {delta}"
            )));
        }
        let n = (horizon / delta).round();
        let intervals = n as usize;
        if (n * delta - horizon).abs() > 1e-9 * horizon.max(1.0) || intervals < 2 {
            return Err(Error::InconsistentHorizon {
                horizon,
                delta,
                intervals,
            });
        }
        if substeps == 0 {
            return Err(Error::InvalidParameter(
                "at least one RK4 substep per interval is required".into(),
            ));
        }
        Ok(HorizonConfig {
            horizon,
            delta,
            intervals,
            substeps,
        })
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn intervals(&self) -> usize {
        self.intervals
    }

    pub fn substeps(&self) -> usize {
        self.substeps
    }

    /// RK4 step length `delta / substeps`.
    pub fn substep(&self) -> f64 {
        self.delta / self.substeps as f64
    }

    /// Number of nodes on the substep grid, `N·m + 1`.
    pub fn grid_len(&self) -> usize {
        self.intervals * self.substeps + 1
    }

    pub fn with_substeps(&self, substeps: usize) -> Result<Self> {
        HorizonConfig::new(self.horizon, self.delta, substeps)
    }
}

/// Anything that can report the reference pose and input at time `t`.
pub trait ReferenceTrajectory {
    fn at(&self, t: f64) -> (Pose, BodyInput);
}

/// Reference sampled on a horizon's substep grid.
#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceWindow {
    pub t0: f64,
    pub step: f64,
    pub poses: Vec<Pose>,
    pub inputs: Vec<BodyInput>,
}

impl ReferenceWindow {
    /// Samples `reference` at `t0 + i·h` for every node of the horizon grid.
    pub fn sample(reference: &dyn ReferenceTrajectory, t0: f64, horizon: &HorizonConfig) -> Self {
        let step = horizon.substep();
        let m = horizon.substeps();
        let (poses, inputs) = (0..horizon.grid_len())
            .map(|i| {
                // interval start plus local offset keeps node times identical
                // across consecutive windows
                let t = t0 + (i / m) as f64 * horizon.delta() + (i % m) as f64 * step;
                reference.at(t)
            })
            .unzip();
        ReferenceWindow {
            t0,
            step,
            poses,
            inputs,
        }
    }

    pub fn len(&self) -> usize {
        self.poses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.poses.is_empty()
    }
}

/// Result of a finite-horizon solve (or an evaluated candidate).
#[derive(Debug, Clone, PartialEq)]
pub struct OcpSolution {
    /// Start time of the horizon.
    pub t0: f64,
    /// Piecewise-constant body inputs, one per interval.
    pub controls: Vec<BodyInput>,
    /// The same controls in wheel coordinates (the solver's variables).
    pub wheel_controls: Vec<WheelSpeeds>,
    /// Nominal head poses at the N + 1 shooting nodes.
    pub shooting_states: Vec<Pose>,
    /// Tracking errors at the N + 1 shooting nodes.
    pub predicted_errors: Vec<TrackingError>,
    pub cost: f64,
    pub kkt_residual: f64,
    pub constraint_violation: f64,
    pub iterations: usize,
    pub outer_iterations: usize,
    pub feasible: bool,
    pub status: SolveStatus,
    /// Wall-clock seconds spent in the solver.
    pub solve_time: f64,
}

impl OcpSolution {
    pub fn first_control(&self) -> BodyInput {
        self.controls[0]
    }

    pub fn intervals(&self) -> usize {
        self.controls.len()
    }
}

//! Closed-loop strategies: tube-MPC with an ancillary feedback law around a
//! nominal trajectory, and nominal robust MPC that resets the nominal state to
//! the measured one every period. Also the parameter certifier.

mod certify;

pub use certify::{
    certify_nrmpc, certify_tube, funnel_radius, lambda_r, sig6, CertifiedParams, Check, Relation,
};

use nalgebra::Vector2;

use crate::error::{Error, Result};
use crate::error_frame::{affine_input_matrix, affine_input_matrix_inverse, body_input_vector};
use crate::kinematics::{BodyInput, Pose, RobotParams};
use crate::ocp::{
    self, shift_warm_start, transcribe, ConstraintSpec, HorizonConfig, OcpSolution, ReferenceTrajectory,
    ReferenceWindow, SolveStatus, SolverOptions, TerminalGains, TerminalSet, Weights,
};

/// Ancillary feedback gain `K = diag(k_x, k_y)`, both negative.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FeedbackGain {
    pub k_x: f64,
    pub k_y: f64,
}

impl FeedbackGain {
    /// Rejects non-finite gains. Sign is left to the certifier so that
    /// unstable choices can still be reported.
    pub fn new(k_x: f64, k_y: f64) -> Result<Self> {
        if !(k_x.is_finite() && k_y.is_finite()) {
            return Err(Error::InvalidParameter(format!("feedback gain must be finite, got ({k_x}, {k_y})")));
        }
        Ok(FeedbackGain { k_x, k_y })
    }
}

/// `u_f = M(θ_f)⁻¹ [M(θ̃*) ũ* + K (p_fh − p̃*_fh)]`.
pub fn tube_feedback(actual_head: &Pose, nominal_head: &Pose, u_star: BodyInput, k: &FeedbackGain, rho: f64) -> BodyInput {
    let dev = Vector2::new(k.k_x * (actual_head.x - nominal_head.x), k.k_y * (actual_head.y - nominal_head.y));
    let head_velocity = affine_input_matrix(nominal_head.theta, rho) * body_input_vector(u_star) + dev;
    let u = affine_input_matrix_inverse(actual_head.theta, rho) * head_velocity;
    BodyInput::new(u[0], u[1])
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum FeedbackMode {
    /// Feedback re-evaluated at every integration stage.
    #[default]
    Continuous,
    /// Feedback evaluated once at the sampling instant and held.
    ZeroOrderHold,
}

/// What the plant applies over one sampling period.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ControlLaw {
    /// Constant body input.
    Hold(BodyInput),
    /// Ancillary feedback against the nominal head, which starts at
    /// `nominal_start` and is driven by the constant `nominal_input`.
    Tube {
        nominal_start: Pose,
        nominal_input: BodyInput,
        gain: FeedbackGain,
        mode: FeedbackMode,
    },
}

impl ControlLaw {
    /// Input at the current actual and nominal head poses. For `Hold` the
    /// poses are ignored.
    pub fn input(&self, actual: &Pose, nominal: &Pose, rho: f64) -> BodyInput {
        match self {
            ControlLaw::Hold(u) => *u,
            ControlLaw::Tube { nominal_input, gain, .. } => tube_feedback(actual, nominal, *nominal_input, gain, rho),
        }
    }
}

/// Result of one controller step.
#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub law: ControlLaw,
    pub solution: OcpSolution,
    /// Shifted candidate evaluated before any solver iteration; `None` on the
    /// first step.
    pub warm_start: Option<OcpSolution>,
    /// The solver's iterate was rejected for the warm start, or the returned
    /// solution is infeasible.
    pub fallback: bool,
}

fn fallback(sol: &OcpSolution) -> bool {
    sol.status == SolveStatus::NotSolved || !sol.feasible
}

#[allow(clippy::too_many_arguments)]
fn solve_from(
    start: Pose,
    previous: Option<&OcpSolution>,
    reference: &dyn ReferenceTrajectory,
    t_k: f64,
    spec: &ConstraintSpec,
    weights: &Weights,
    horizon: &HorizonConfig,
    params: &RobotParams,
    gains: &TerminalGains,
    solver: &SolverOptions,
) -> Result<(OcpSolution, Option<OcpSolution>)> {
    let window = ReferenceWindow::sample(reference, t_k, horizon);
    let problem = transcribe(start, &window, spec, weights, horizon, params)?;
    let warm = previous.map(|prev| shift_warm_start(prev, &problem, gains));
    let sol = ocp::solve(&problem, warm.as_ref(), solver)?;
    Ok((sol, warm))
}

#[derive(Debug, Clone, PartialEq)]
pub struct TubeState {
    /// Nominal head `ξ̃_fh`, advanced only by the first optimal control.
    pub nominal_head: Pose,
    pub last_solution: Option<OcpSolution>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TubeController {
    pub params: RobotParams,
    pub weights: Weights,
    pub horizon: HorizonConfig,
    pub gains: TerminalGains,
    pub feedback: FeedbackGain,
    pub spec: ConstraintSpec,
    pub mode: FeedbackMode,
    pub solver: SolverOptions,
}

impl TubeController {
    /// Builds the controller from certified constants (`λ_tube`, diamond
    /// level).
    pub fn new(
        params: RobotParams,
        weights: Weights,
        horizon: HorizonConfig,
        gains: TerminalGains,
        feedback: FeedbackGain,
        certified: &CertifiedParams,
        mode: FeedbackMode,
        solver: SolverOptions,
    ) -> Result<Self> {
        let (Some(lambda_tube), Some(level)) = (certified.lambda_tube, certified.diamond_level) else {
            return Err(Error::InvalidParameter("tube controller needs tube certification constants".into()));
        };
        let spec = ConstraintSpec {
            input_scale: lambda_tube,
            terminal: TerminalSet::Diamond { gains, level },
            funnel: None,
        };
        spec.validate()?;
        Ok(TubeController {
            params,
            weights,
            horizon,
            gains,
            feedback,
            spec,
            mode,
            solver,
        })
    }

    /// The nominal system starts at the actual state.
    pub fn initial_state(&self, actual_head: Pose) -> TubeState {
        TubeState {
            nominal_head: actual_head,
            last_solution: None,
        }
    }

    /// Solves from the nominal head at `t_k` and returns the feedback law for
    /// `[t_k, t_k + δ]` together with the advanced state.
    pub fn step(
        &self,
        state: &TubeState,
        reference: &dyn ReferenceTrajectory,
        t_k: f64,
    ) -> Result<(StepOutcome, TubeState)> {
        let (solution, warm_start) = solve_from(
            state.nominal_head,
            state.last_solution.as_ref(),
            reference,
            t_k,
            &self.spec,
            &self.weights,
            &self.horizon,
            &self.params,
            &self.gains,
            &self.solver,
        )?;
        let law = ControlLaw::Tube {
            nominal_start: state.nominal_head,
            nominal_input: solution.first_control(),
            gain: self.feedback,
            mode: self.mode,
        };
        let next = TubeState {
            nominal_head: solution.shooting_states[1],
            last_solution: Some(solution.clone()),
        };
        Ok((
            StepOutcome {
                law,
                fallback: fallback(&solution),
                solution,
                warm_start,
            },
            next,
        ))
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct NrmpcState {
    pub last_solution: Option<OcpSolution>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NrmpcController {
    pub params: RobotParams,
    pub weights: Weights,
    pub horizon: HorizonConfig,
    pub gains: TerminalGains,
    pub spec: ConstraintSpec,
    pub solver: SolverOptions,
}

impl NrmpcController {
    /// Builds the controller from certified constants (`r`, `ε`).
    pub fn new(
        params: RobotParams,
        weights: Weights,
        horizon: HorizonConfig,
        gains: TerminalGains,
        certified: &CertifiedParams,
        solver: SolverOptions,
    ) -> Result<Self> {
        let (Some(r), Some(epsilon)) = (certified.r, certified.epsilon) else {
            return Err(Error::InvalidParameter("NRMPC controller needs funnel certification constants".into()));
        };
        let spec = ConstraintSpec {
            input_scale: 1.0,
            terminal: TerminalSet::Ball { radius: epsilon },
            funnel: Some(r),
        };
        spec.validate()?;
        Ok(NrmpcController {
            params,
            weights,
            horizon,
            gains,
            spec,
            solver,
        })
    }

    /// Resets the nominal state to `actual_head`, solves, and holds the first
    /// control over `[t_k, t_k + δ]`.
    pub fn step(
        &self,
        state: &NrmpcState,
        actual_head: Pose,
        reference: &dyn ReferenceTrajectory,
        t_k: f64,
    ) -> Result<(StepOutcome, NrmpcState)> {
        let (solution, warm_start) = solve_from(
            actual_head,
            state.last_solution.as_ref(),
            reference,
            t_k,
            &self.spec,
            &self.weights,
            &self.horizon,
            &self.params,
            &self.gains,
            &self.solver,
        )?;
        let law = ControlLaw::Hold(solution.first_control());
        let next = NrmpcState {
            last_solution: Some(solution.clone()),
        };
        Ok((
            StepOutcome {
                law,
                fallback: fallback(&solution),
                solution,
                warm_start,
            },
            next,
        ))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    const RHO: f64 = 0.0267;

    #[test]
    fn feedback_identity_when_on_nominal() {
        let p = Pose::new(0.1, -0.3, 0.8);
        let u = BodyInput::new(0.04, -0.7);
        let out = tube_feedback(&p, &p, u, &FeedbackGain::new(-2.3, -2.3).unwrap(), RHO);
        assert_relative_eq!(out.v, u.v, epsilon = 1e-15);
        assert_relative_eq!(out.omega, u.omega, epsilon = 1e-13);
    }

    #[test]
    fn feedback_example() {
        let out = tube_feedback(
            &Pose::new(0.001, 0.0, 0.0),
            &Pose::new(0.0, 0.0, 0.0),
            BodyInput::new(0.05, 0.0),
            &FeedbackGain::new(-2.3, -2.3).unwrap(),
            RHO,
        );
        assert_relative_eq!(out.v, 0.0477, epsilon = 1e-15);
        assert_eq!(out.omega, 0.0);
    }
}

use super::transcription::OcpProblem;
use super::{terminal_controller, OcpSolution, TerminalGains};
use crate::error_frame::tracking_error;
use crate::kinematics::{body_to_wheels, Pose};

/// Shifted candidate for `problem` built from the previous solution: drop the
/// first control, append the terminal controller evaluated at the start of
/// the last interval (held constant over it), and re-propagate from the new
/// initial pose. The candidate is evaluated but not optimised.
pub fn shift_warm_start(prev: &OcpSolution, problem: &OcpProblem, gains: &TerminalGains) -> OcpSolution {
    let n = problem.horizon().intervals();
    let m = problem.horizon().substeps();
    assert_eq!(prev.wheel_controls.len(), n, "previous solution must span the horizon");
    let mut wheels = prev.wheel_controls[1..].to_vec();
    let tail = problem.rollout_nodes(&wheels)[n - 1];
    let k = (n - 1) * m;
    let e = tracking_error(&problem.window().poses[k], &Pose::new(tail[0], tail[1], tail[2]));
    let u = terminal_controller(&e, problem.window().inputs[k].v, gains, problem.params().rho());
    wheels.push(problem.clamp(body_to_wheels(u, problem.params())));
    problem.evaluate_candidate(&wheels)
}

use std::time::Instant;

use super::nlp::{self, SolverOptions};
use super::transcription::OcpProblem;
use super::OcpSolution;
use crate::error::Result;

fn better(a: &OcpSolution, b: &OcpSolution) -> bool {
    match (a.feasible, b.feasible) {
        (true, true) => a.cost < b.cost,
        (true, false) => true,
        (false, true) => false,
        (false, false) => a.constraint_violation < b.constraint_violation,
    }
}

/// Solves `problem` from `warm_start` (or the feed-forward controls when
/// absent) and returns the best rolled-out candidate among the solver's outer
/// iterates and the warm start itself. A result whose status is
/// [`nlp::SolveStatus::NotSolved`] means the warm start won.
pub fn solve(problem: &OcpProblem, warm_start: Option<&OcpSolution>, opts: &SolverOptions) -> Result<OcpSolution> {
    let clock = Instant::now();
    let start = match warm_start {
        Some(ws) if ws.wheel_controls.len() == problem.num_controls() => ws.wheel_controls.clone(),
        _ => problem.feedforward_controls(),
    };
    let x0 = problem.pack(&start);
    let result = nlp::solve(problem, &x0, opts)?;

    let mut best: Option<OcpSolution> = None;
    for x in result.outer_iterates.iter().rev() {
        let mut cand = problem.evaluate_candidate(&problem.unpack_controls(x));
        cand.status = result.status;
        cand.kkt_residual = result.kkt_residual;
        if best.as_ref().is_none_or(|b| better(&cand, b)) {
            best = Some(cand);
        }
    }
    let initial = problem.evaluate_candidate(&start);
    let mut best = match best {
        Some(b) if !better(&initial, &b) => b,
        _ => initial,
    };
    best.iterations = result.inner_iterations;
    best.outer_iterations = result.outer_iterations;
    best.solve_time = clock.elapsed().as_secs_f64();
    Ok(best)
}

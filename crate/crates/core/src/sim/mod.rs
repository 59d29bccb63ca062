//! Closed-loop simulation of the disturbed follower against a closed-form
//! unicycle reference.

mod disturbance;

pub use disturbance::{sample_disturbance, DisturbanceMode, DisturbanceModel};

use std::time::Instant;

use crate::controllers::{
    certify_nrmpc, certify_tube, tube_feedback, CertifiedParams, ControlLaw, FeedbackGain, FeedbackMode,
    NrmpcController, NrmpcState, TubeController, TubeState,
};
use crate::error::{Error, Result};
use crate::error_frame::{input_error, tracking_error, Disturbance, TrackingError};
use crate::kinematics::{f_head, input_index, BodyInput, Pose, RobotParams};
use crate::ocp::{HorizonConfig, OcpSolution, ReferenceTrajectory, SolverOptions, TerminalGains, Weights};

/// Unicycle reference with constant input, integrated in closed form.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReferenceSpec {
    pub v_r: f64,
    pub omega_r: f64,
    pub initial: Pose,
}

impl ReferenceSpec {
    /// Radius of the circle, infinite for straight motion.
    pub fn radius(&self) -> f64 {
        if self.omega_r == 0.0 {
            f64::INFINITY
        } else {
            (self.v_r / self.omega_r).abs()
        }
    }
}

pub fn reference_at(spec: &ReferenceSpec, t: f64) -> (Pose, BodyInput) {
    let Pose { x, y, theta } = spec.initial;
    let u = BodyInput::new(spec.v_r, spec.omega_r);
    if spec.omega_r == 0.0 {
        let (s, c) = theta.sin_cos();
        return (Pose::new(x + spec.v_r * t * c, y + spec.v_r * t * s, theta), u);
    }
    let th = theta + spec.omega_r * t;
    let k = spec.v_r / spec.omega_r;
    let pose = Pose::new(x + k * (th.sin() - theta.sin()), y - k * (th.cos() - theta.cos()), th);
    (pose, u)
}

impl ReferenceTrajectory for ReferenceSpec {
    fn at(&self, t: f64) -> (Pose, BodyInput) {
        reference_at(self, t)
    }
}

/// Substep states of one sampling period. Headings are wrapped.
#[derive(Debug, Clone, PartialEq)]
pub struct IntervalTrace {
    /// Actual head at the `m + 1` substep nodes.
    pub actual: Vec<Pose>,
    /// Nominal head driven by the law's nominal input, same nodes.
    pub nominal: Vec<Pose>,
    /// Applied input evaluated at each node.
    pub inputs: Vec<BodyInput>,
    /// Disturbance held over each of the `m` substeps.
    pub disturbances: Vec<Disturbance>,
}

type State6 = [f64; 6];

fn pose_of(z: &[f64]) -> Pose {
    Pose { x: z[0], y: z[1], theta: z[2] }
}

/// RK4 on the actual head `ξ̇ = f_head(ξ, u) + (d, 0)`, co-propagating the
/// nominal head under the law's nominal input. The disturbance is held over
/// each substep; `first_substep` indexes the first of them globally.
pub fn integrate_perturbed(
    head: Pose,
    law: &ControlLaw,
    model: &DisturbanceModel,
    first_substep: u64,
    dt: f64,
    substeps: usize,
    rho: f64,
) -> Result<IntervalTrace> {
    if substeps == 0 {
        return Err(Error::InvalidParameter("at least one substep is required".into()));
    }
    let (nominal_start, nominal_input) = match *law {
        ControlLaw::Hold(u) => (head, u),
        ControlLaw::Tube { nominal_start, nominal_input, .. } => (nominal_start, nominal_input),
    };
    let held = match *law {
        ControlLaw::Hold(u) => Some(u),
        ControlLaw::Tube { gain, mode: FeedbackMode::ZeroOrderHold, .. } => {
            Some(tube_feedback(&head, &nominal_start, nominal_input, &gain, rho))
        }
        ControlLaw::Tube { mode: FeedbackMode::Continuous, .. } => None,
    };
    let input_at = |z: &State6| -> BodyInput {
        held.unwrap_or_else(|| law.input(&pose_of(&z[0..3]), &pose_of(&z[3..6]), rho))
    };
    let rate = |z: &State6, d: Disturbance| -> State6 {
        let u = input_at(z);
        let fa = f_head(&pose_of(&z[0..3]), u, rho);
        let fn_ = f_head(&pose_of(&z[3..6]), nominal_input, rho);
        [fa.dx + d.d_x, fa.dy + d.d_y, fa.dtheta, fn_.dx, fn_.dy, fn_.dtheta]
    };
    let axpy = |z: &State6, k: &State6, s: f64| -> State6 { std::array::from_fn(|i| z[i] + s * k[i]) };

    let h = dt / substeps as f64;
    let mut z: State6 = [head.x, head.y, head.theta, nominal_start.x, nominal_start.y, nominal_start.theta];
    let mut trace = IntervalTrace {
        actual: Vec::with_capacity(substeps + 1),
        nominal: Vec::with_capacity(substeps + 1),
        inputs: Vec::with_capacity(substeps + 1),
        disturbances: Vec::with_capacity(substeps),
    };
    let record = |z: &State6, trace: &mut IntervalTrace| {
        trace.actual.push(Pose::new(z[0], z[1], z[2]));
        trace.nominal.push(Pose::new(z[3], z[4], z[5]));
        trace.inputs.push(input_at(z));
    };
    record(&z, &mut trace);
    for i in 0..substeps {
        let d = sample_disturbance(model, first_substep + i as u64);
        let k1 = rate(&z, d);
        let k2 = rate(&axpy(&z, &k1, 0.5 * h), d);
        let k3 = rate(&axpy(&z, &k2, 0.5 * h), d);
        let k4 = rate(&axpy(&z, &k3, h), d);
        z = std::array::from_fn(|j| z[j] + h / 6.0 * (k1[j] + 2.0 * k2[j] + 2.0 * k3[j] + k4[j]));
        if z.iter().any(|v| !v.is_finite()) {
            return Err(Error::NumericalBreakdown(format!(
                "non-finite follower state at substep {}",
                first_substep + i as u64
            )));
        }
        trace.disturbances.push(d);
        record(&z, &mut trace);
    }
    Ok(trace)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Strategy {
    Tube,
    Nrmpc,
}

impl Strategy {
    pub fn name(&self) -> &'static str {
        match self {
            Strategy::Tube => "tube",
            Strategy::Nrmpc => "nrmpc",
        }
    }
}

/// Everything a closed-loop run needs.
#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub params: RobotParams,
    pub weights: Weights,
    pub horizon: HorizonConfig,
    pub gains: TerminalGains,
    pub feedback: FeedbackGain,
    pub epsilon: f64,
    pub reference: ReferenceSpec,
    /// Initial follower head pose.
    pub initial_head: Pose,
    pub disturbance: DisturbanceModel,
    pub duration: f64,
    pub feedback_mode: FeedbackMode,
    pub solver: SolverOptions,
    /// Run even when the certifier reports failures.
    pub force: bool,
}

impl SimConfig {
    pub fn certify(&self, strategy: Strategy) -> CertifiedParams {
        let v_r_max = self.reference.v_r.abs();
        match strategy {
            Strategy::Tube => certify_tube(
                &self.params,
                &self.weights,
                &self.gains,
                &self.feedback,
                self.disturbance.eta,
                v_r_max,
            ),
            Strategy::Nrmpc => certify_nrmpc(
                &self.params,
                &self.weights,
                &self.gains,
                self.disturbance.eta,
                v_r_max,
                &self.horizon,
                self.epsilon,
            ),
        }
    }

    /// Number of sampling periods in the run.
    pub fn steps(&self) -> usize {
        (self.duration / self.horizon.delta()).round() as usize
    }
}

/// One row per substep node.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogRow {
    pub t: f64,
    pub follower: Pose,
    pub reference: Pose,
    pub error: TrackingError,
    pub input: BodyInput,
    pub input_index: f64,
    /// Actual minus nominal head position.
    pub pfe_x: f64,
    pub pfe_y: f64,
    pub j_opt: f64,
    pub stage_cost: f64,
    pub state_cost: f64,
    pub input_cost: f64,
    pub solver_iters: usize,
    pub solve_time: f64,
    pub feasible: bool,
    pub fallback: bool,
    /// Disturbance over the following substep (zero on the final row).
    pub disturbance: Disturbance,
}

/// One record per sampling instant.
#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    pub k: usize,
    pub t: f64,
    pub solution: OcpSolution,
    /// Constraint violation of the shifted candidate before any iteration.
    pub warm_start_violation: Option<f64>,
    pub fallback: bool,
    /// `‖p_fh(t_{k+1}) − p̃*_fh(t_{k+1}|t_k)‖`, head position only. Under tube
    /// feedback the heading is not confined and drifts from the prediction.
    pub prediction_deviation: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimLog {
    pub strategy: Strategy,
    pub seed: u64,
    pub eta: f64,
    pub forced: bool,
    pub certified: CertifiedParams,
    pub rows: Vec<LogRow>,
    pub steps: Vec<StepRecord>,
    /// Wall-clock seconds for the whole run.
    pub runtime: f64,
}

/// Aggregate metrics of a run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimSummary {
    pub max_abs_pfe_x: f64,
    pub max_abs_pfe_y: f64,
    /// Mean `‖p_rf‖` over rows with `t ≥ t_end − window`.
    pub terminal_window_mean_prf: f64,
    pub initial_prf: f64,
    pub min_input_index: f64,
    pub max_input_index: f64,
    pub feasibility_rate: f64,
    pub fallback_count: usize,
    pub max_warm_start_violation: f64,
    pub cumulative_stage_cost: f64,
    pub cumulative_state_cost: f64,
    pub cumulative_input_cost: f64,
    pub mean_solve_time: f64,
    pub max_prediction_deviation: f64,
    pub runtime: f64,
}

fn trapezoid(rows: &[LogRow], f: impl Fn(&LogRow) -> f64) -> f64 {
    rows.windows(2).map(|w| 0.5 * (w[1].t - w[0].t) * (f(&w[0]) + f(&w[1]))).sum()
}

impl SimLog {
    /// Time integral of the state cost over rows with `from <= t <= to`.
    pub fn state_cost_between(&self, from: f64, to: f64) -> f64 {
        let lo = self.rows.partition_point(|r| r.t < from - 1e-9);
        let hi = self.rows.partition_point(|r| r.t <= to + 1e-9);
        trapezoid(&self.rows[lo..hi.max(lo)], |r| r.state_cost)
    }

    pub fn summary(&self, terminal_window: f64) -> SimSummary {
        let t_end = self.rows.last().map_or(0.0, |r| r.t);
        let tail: Vec<f64> = self
            .rows
            .iter()
            .filter(|r| r.t >= t_end - terminal_window - 1e-9)
            .map(|r| r.error.x_rf.hypot(r.error.y_rf))
            .collect();
        let n_steps = self.steps.len().max(1) as f64;
        SimSummary {
            max_abs_pfe_x: self.rows.iter().map(|r| r.pfe_x.abs()).fold(0.0, f64::max),
            max_abs_pfe_y: self.rows.iter().map(|r| r.pfe_y.abs()).fold(0.0, f64::max),
            terminal_window_mean_prf: tail.iter().sum::<f64>() / tail.len().max(1) as f64,
            initial_prf: self.rows.first().map_or(0.0, |r| r.error.x_rf.hypot(r.error.y_rf)),
            min_input_index: self.rows.iter().map(|r| r.input_index).fold(f64::INFINITY, f64::min),
            max_input_index: self.rows.iter().map(|r| r.input_index).fold(0.0, f64::max),
            feasibility_rate: self.steps.iter().filter(|s| s.solution.feasible).count() as f64 / n_steps,
            fallback_count: self.steps.iter().filter(|s| s.fallback).count(),
            max_warm_start_violation: self
                .steps
                .iter()
                .filter_map(|s| s.warm_start_violation)
                .fold(0.0, f64::max),
            cumulative_stage_cost: trapezoid(&self.rows, |r| r.stage_cost),
            cumulative_state_cost: trapezoid(&self.rows, |r| r.state_cost),
            cumulative_input_cost: trapezoid(&self.rows, |r| r.input_cost),
            mean_solve_time: self.steps.iter().map(|s| s.solution.solve_time).sum::<f64>() / n_steps,
            max_prediction_deviation: self.steps.iter().map(|s| s.prediction_deviation).fold(0.0, f64::max),
            runtime: self.runtime,
        }
    }
}

enum Controller {
    Tube(TubeController, TubeState),
    Nrmpc(NrmpcController, NrmpcState),
}

/// Runs one strategy for the configured duration.
pub fn run_closed_loop(strategy: Strategy, cfg: &SimConfig) -> Result<SimLog> {
    let clock = Instant::now();
    let certified = cfg.certify(strategy);
    if !certified.all_passed() && !cfg.force {
        let failed: Vec<_> = certified.failures().map(|c| c.name.clone()).collect();
        return Err(Error::CertificationFailed(failed.join(", ")));
    }
    let mut controller = match strategy {
        Strategy::Tube => {
            let c = TubeController::new(
                cfg.params,
                cfg.weights,
                cfg.horizon,
                cfg.gains,
                cfg.feedback,
                &certified,
                cfg.feedback_mode,
                cfg.solver,
            )?;
            let s = c.initial_state(cfg.initial_head);
            Controller::Tube(c, s)
        }
        Strategy::Nrmpc => Controller::Nrmpc(
            NrmpcController::new(cfg.params, cfg.weights, cfg.horizon, cfg.gains, &certified, cfg.solver)?,
            NrmpcState::default(),
        ),
    };

    let delta = cfg.horizon.delta();
    let m = cfg.horizon.substeps();
    let h = cfg.horizon.substep();
    let rho = cfg.params.rho();
    let w = cfg.weights;
    let n_steps = cfg.steps();
    let mut head = cfg.initial_head;
    let mut rows = Vec::with_capacity(n_steps * m + 1);
    let mut steps = Vec::with_capacity(n_steps);

    for k in 0..n_steps {
        let t_k = k as f64 * delta;
        let outcome = match &mut controller {
            Controller::Tube(c, state) => {
                let (out, next) = c.step(state, &cfg.reference, t_k)?;
                *state = next;
                out
            }
            Controller::Nrmpc(c, state) => {
                let (out, next) = c.step(state, head, &cfg.reference, t_k)?;
                *state = next;
                out
            }
        };
        let trace = integrate_perturbed(head, &outcome.law, &cfg.disturbance, (k * m) as u64, delta, m, rho)?;
        let sol = &outcome.solution;
        let last = if k + 1 == n_steps { m } else { m - 1 };
        for i in 0..=last {
            let t = t_k + i as f64 * h;
            let (ref_pose, ref_input) = cfg.reference.at(t);
            let follower = trace.actual[i];
            let nominal = trace.nominal[i];
            let u = trace.inputs[i];
            let e = tracking_error(&ref_pose, &follower);
            let ue = input_error(u, ref_input.v, e.theta_rf, rho);
            let state_cost = w.q1 * e.x_rf * e.x_rf + w.q2 * e.y_rf * e.y_rf;
            let input_cost = w.p1 * ue.e_v * ue.e_v + w.p2 * ue.e_w * ue.e_w;
            rows.push(LogRow {
                t,
                follower,
                reference: ref_pose,
                error: e,
                input: u,
                input_index: input_index(u, &cfg.params),
                pfe_x: follower.x - nominal.x,
                pfe_y: follower.y - nominal.y,
                j_opt: sol.cost,
                stage_cost: state_cost + input_cost,
                state_cost,
                input_cost,
                solver_iters: sol.iterations,
                solve_time: sol.solve_time,
                feasible: sol.feasible,
                fallback: outcome.fallback,
                disturbance: trace.disturbances.get(i).copied().unwrap_or_default(),
            });
        }
        let end = trace.actual[m];
        let predicted = sol.shooting_states[1];
        let prediction_deviation = (end.x - predicted.x).hypot(end.y - predicted.y);
        steps.push(StepRecord {
            k,
            t: t_k,
            warm_start_violation: outcome.warm_start.as_ref().map(|c| c.constraint_violation),
            fallback: outcome.fallback,
            prediction_deviation,
            solution: outcome.solution,
        });
        head = end;
    }

    Ok(SimLog {
        strategy,
        seed: cfg.disturbance.seed,
        eta: cfg.disturbance.eta,
        forced: cfg.force && !certified.all_passed(),
        certified,
        rows,
        steps,
        runtime: clock.elapsed().as_secs_f64(),
    })
}

//! Direct multiple shooting of the nominal head-point model.
//!
//! Decision vector: `N` wheel-speed pairs `(v_L, v_R)` followed by `N − 1`
//! interior shooting poses `(x, y, θ)`. Headings are kept unwrapped inside the
//! transcription; only reported poses are wrapped.

use std::fmt;

use nalgebra::{DVector, SMatrix, SVector, Vector3};

use super::nlp::{projected_gradient_norm, Evaluation, NlpProblem, SolveStatus};
use super::{HorizonConfig, OcpSolution, ReferenceWindow, TerminalGains, Weights};
use crate::error::{Error, Result};
use crate::error_frame::tracking_error;
use crate::kinematics::{body_to_wheels, wheels_to_body, BodyInput, Pose, RobotParams, WheelSpeeds};

/// Constraint violation at or below which a candidate counts as feasible.
pub const FEASIBILITY_TOL: f64 = 1e-6;

/// `∂z/∂(z₀, v, ω)` of the head state along one interval.
type Sens = SMatrix<f64, 3, 5>;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TerminalSet {
    /// `k̃1|x_rf| + k̃2|y_rf| ≤ level`.
    Diamond { gains: TerminalGains, level: f64 },
    /// `‖p_rf‖ ≤ radius`.
    Ball { radius: f64 },
}

impl TerminalSet {
    fn count(&self) -> usize {
        match self {
            TerminalSet::Diamond { .. } => 4,
            TerminalSet::Ball { .. } => 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConstraintSpec {
    /// Scale `λ` of the input set; wheel speeds are boxed to `±λa`.
    pub input_scale: f64,
    pub terminal: TerminalSet,
    /// Funnel radius `r`: `‖p_rf(τ_j)‖ ≤ r·T/(τ_j − t_k)` at nodes `j ≥ 1`.
    pub funnel: Option<f64>,
}

impl ConstraintSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.input_scale > 0.0 && self.input_scale <= 1.0) {
            return Err(Error::InvalidParameter(format!(
                "input scale must lie in (0, 1], got {}",
                self.input_scale
            )));
        }
        match self.terminal {
            TerminalSet::Diamond { level, .. } if !(level > 0.0 && level.is_finite()) => {
                return Err(Error::InvalidParameter(format!(
                    "terminal diamond level must be positive, got {level}"
                )));
            }
            TerminalSet::Ball { radius } if !(radius > 0.0 && radius.is_finite()) => {
                return Err(Error::InvalidParameter(format!(
                    "terminal ball radius must be positive, got {radius}"
                )));
            }
            _ => {}
        }
        if let Some(r) = self.funnel {
            if !(r > 0.0 && r.is_finite()) {
                return Err(Error::InvalidParameter(format!("funnel radius must be positive, got {r}")));
            }
            if let TerminalSet::Ball { radius } = self.terminal {
                if radius >= r {
                    return Err(Error::InvalidParameter(format!(
                        "terminal radius {radius} must be smaller than the funnel radius {r}"
                    )));
                }
            }
        }
        Ok(())
    }
}

/// One finite-horizon problem instance, ready for the NLP solver.
#[derive(Debug, Clone)]
pub struct OcpProblem {
    initial: Pose,
    window: ReferenceWindow,
    spec: ConstraintSpec,
    weights: Weights,
    horizon: HorizonConfig,
    params: RobotParams,
}

/// Builds the multiple-shooting NLP for a horizon starting at `initial_head`.
pub fn transcribe(
    initial_head: Pose,
    window: &ReferenceWindow,
    spec: &ConstraintSpec,
    weights: &Weights,
    horizon: &HorizonConfig,
    params: &RobotParams,
) -> Result<OcpProblem> {
    spec.validate()?;
    if window.len() != horizon.grid_len() {
        return Err(Error::InvalidParameter(format!(
            "reference window has {} samples, the horizon grid needs {}",
            window.len(),
            horizon.grid_len()
        )));
    }
    if !initial_head.is_finite() {
        return Err(Error::NumericalBreakdown("non-finite initial pose".into()));
    }
    Ok(OcpProblem {
        initial: initial_head,
        window: window.clone(),
        spec: *spec,
        weights: *weights,
        horizon: *horizon,
        params: *params,
    })
}

fn rate_and_sens(z: &Vector3<f64>, s: &Sens, u: BodyInput, rho: f64) -> (Vector3<f64>, Sens) {
    let (sn, cs) = z[2].sin_cos();
    let f = Vector3::new(u.v * cs - rho * u.omega * sn, u.v * sn + rho * u.omega * cs, u.omega);
    // ∂f/∂z only has a heading column: (−f_y, f_x, 0)
    let a = Vector3::new(-f[1], f[0], 0.0);
    let mut ds = a * s.row(2);
    ds[(0, 3)] += cs;
    ds[(0, 4)] -= rho * sn;
    ds[(1, 3)] += sn;
    ds[(1, 4)] += rho * cs;
    ds[(2, 4)] += 1.0;
    (f, ds)
}

/// RK4 over one interval; returns the `m + 1` substep states with their
/// sensitivities.
fn propagate(z0: Vector3<f64>, u: BodyInput, rho: f64, h: f64, m: usize) -> Vec<(Vector3<f64>, Sens)> {
    let mut s = Sens::zeros();
    s.fixed_view_mut::<3, 3>(0, 0).fill_with_identity();
    let mut z = z0;
    let mut out = Vec::with_capacity(m + 1);
    out.push((z, s));
    for _ in 0..m {
        let (k1, d1) = rate_and_sens(&z, &s, u, rho);
        let (k2, d2) = rate_and_sens(&(z + k1 * (0.5 * h)), &(s + d1 * (0.5 * h)), u, rho);
        let (k3, d3) = rate_and_sens(&(z + k2 * (0.5 * h)), &(s + d2 * (0.5 * h)), u, rho);
        let (k4, d4) = rate_and_sens(&(z + k3 * h), &(s + d3 * h), u, rho);
        z += (k1 + (k2 + k3) * 2.0 + k4) * (h / 6.0);
        s += (d1 + (d2 + d3) * 2.0 + d4) * (h / 6.0);
        out.push((z, s));
    }
    out
}

fn to_pose(z: &Vector3<f64>) -> Pose {
    Pose::new(z[0], z[1], z[2])
}

impl OcpProblem {
    pub fn initial(&self) -> Pose {
        self.initial
    }

    pub fn window(&self) -> &ReferenceWindow {
        &self.window
    }

    pub fn spec(&self) -> &ConstraintSpec {
        &self.spec
    }

    pub fn weights(&self) -> &Weights {
        &self.weights
    }

    pub fn horizon(&self) -> &HorizonConfig {
        &self.horizon
    }

    pub fn params(&self) -> &RobotParams {
        &self.params
    }

    /// Wheel-speed bound `λa`.
    pub fn wheel_bound(&self) -> f64 {
        self.spec.input_scale * self.params.a()
    }

    pub fn num_controls(&self) -> usize {
        self.horizon.intervals()
    }

    pub fn num_interior_states(&self) -> usize {
        self.horizon.intervals() - 1
    }

    pub fn num_terminal_constraints(&self) -> usize {
        self.spec.terminal.count()
    }

    pub fn num_funnel_constraints(&self) -> usize {
        if self.spec.funnel.is_some() {
            self.horizon.intervals()
        } else {
            0
        }
    }

    /// Funnel bound `r·T/(j·δ)` at node `j ∈ 1..=N`; `None` without a funnel
    /// or at node 0.
    pub fn funnel_bound(&self, node: usize) -> Option<f64> {
        let r = self.spec.funnel?;
        if node == 0 {
            return None;
        }
        Some(r * self.horizon.horizon() / (node as f64 * self.horizon.delta()))
    }

    fn state_offset(&self) -> usize {
        2 * self.horizon.intervals()
    }

    fn control(&self, x: &DVector<f64>, j: usize) -> BodyInput {
        wheels_to_body(WheelSpeeds::new(x[2 * j], x[2 * j + 1]), &self.params)
    }

    fn node_state(&self, x: &DVector<f64>, j: usize) -> Vector3<f64> {
        if j == 0 {
            Vector3::new(self.initial.x, self.initial.y, self.initial.theta)
        } else {
            let o = self.state_offset() + 3 * (j - 1);
            Vector3::new(x[o], x[o + 1], x[o + 2])
        }
    }

    /// Column entries of a gradient row given with respect to
    /// `(z_j, v_j, ω_j)` of interval `j`.
    fn scatter(&self, j: usize, g: &SVector<f64, 5>, mut put: impl FnMut(usize, f64)) {
        let rho = self.params.rho();
        put(2 * j, 0.5 * g[3] - g[4] / (2.0 * rho));
        put(2 * j + 1, 0.5 * g[3] + g[4] / (2.0 * rho));
        if j > 0 {
            let o = self.state_offset() + 3 * (j - 1);
            for r in 0..3 {
                put(o + r, g[r]);
            }
        }
    }

    /// Stage cost at grid node `k` and its partials with respect to the head
    /// state and the body input.
    fn stage_partials(&self, k: usize, z: &Vector3<f64>, u: BodyInput) -> (f64, Vector3<f64>, [f64; 2]) {
        let w = &self.weights;
        let rho = self.params.rho();
        let r = &self.window.poses[k];
        let v_r = self.window.inputs[k].v;
        let (s, c) = z[2].sin_cos();
        let dx = r.x - z[0];
        let dy = r.y - z[1];
        let xe = c * dx + s * dy;
        let ye = -s * dx + c * dy;
        let (st, ct) = (r.theta - z[2]).sin_cos();
        let e1 = -u.v + v_r * ct;
        let e2 = -rho * u.omega + v_r * st;
        let l = w.q1 * xe * xe + w.q2 * ye * ye + w.p1 * e1 * e1 + w.p2 * e2 * e2;
        let dz = Vector3::new(-c, -s, ye) * (2.0 * w.q1 * xe)
            + Vector3::new(s, -c, -xe) * (2.0 * w.q2 * ye)
            + Vector3::new(0.0, 0.0, 2.0 * w.p1 * e1 * v_r * st - 2.0 * w.p2 * e2 * v_r * ct);
        (l, dz, [-2.0 * w.p1 * e1, -2.0 * w.p2 * e2 * rho])
    }

    /// Terminal-set constraint values at the last node and their state
    /// gradients.
    fn terminal_rows(&self, z: &Vector3<f64>) -> Vec<(f64, Vector3<f64>)> {
        let r = self.window.poses.last().expect("non-empty window");
        let dx = r.x - z[0];
        let dy = r.y - z[1];
        match self.spec.terminal {
            TerminalSet::Diamond { gains, level } => {
                let (s, c) = z[2].sin_cos();
                let xe = c * dx + s * dy;
                let ye = -s * dx + c * dy;
                let scale = 1.0 / gains.k1.max(gains.k2);
                let gx = Vector3::new(-c, -s, ye);
                let gy = Vector3::new(s, -c, -xe);
                [(1.0, 1.0), (1.0, -1.0), (-1.0, 1.0), (-1.0, -1.0)]
                    .iter()
                    .map(|&(sx, sy)| {
                        let val = (sx * gains.k1 * xe + sy * gains.k2 * ye - level) * scale;
                        let grad = (gx * (sx * gains.k1) + gy * (sy * gains.k2)) * scale;
                        (val, grad)
                    })
                    .collect()
            }
            TerminalSet::Ball { radius } => vec![ball_row(dx, dy, radius)],
        }
    }

    fn funnel_row(&self, node: usize, z: &Vector3<f64>) -> Option<(f64, Vector3<f64>)> {
        let bound = self.funnel_bound(node)?;
        let r = &self.window.poses[node * self.horizon.substeps()];
        Some(ball_row(r.x - z[0], r.y - z[1], bound))
    }

    /// Feed-forward wheel speeds of the reference input at each interval
    /// start, clamped to the box.
    pub fn feedforward_controls(&self) -> Vec<WheelSpeeds> {
        let m = self.horizon.substeps();
        (0..self.horizon.intervals())
            .map(|j| self.clamp(body_to_wheels(self.window.inputs[j * m], &self.params)))
            .collect()
    }

    pub fn clamp(&self, w: WheelSpeeds) -> WheelSpeeds {
        let b = self.wheel_bound();
        WheelSpeeds::new(w.v_left.clamp(-b, b), w.v_right.clamp(-b, b))
    }

    /// Single-shooting propagation of `wheels` (any length up to `N`) from
    /// the initial pose; returns `wheels.len() + 1` node states with
    /// unwrapped headings.
    pub fn rollout_nodes(&self, wheels: &[WheelSpeeds]) -> Vec<Vector3<f64>> {
        let h = self.horizon.substep();
        let m = self.horizon.substeps();
        let rho = self.params.rho();
        let mut z = Vector3::new(self.initial.x, self.initial.y, self.initial.theta);
        let mut nodes = vec![z];
        for w in wheels {
            let u = wheels_to_body(*w, &self.params);
            z = propagate(z, u, rho, h, m).last().expect("m ≥ 1").0;
            nodes.push(z);
        }
        nodes
    }

    /// Decision vector for `wheels` (clamped) with interior poses filled by
    /// forward propagation, so every defect is zero.
    pub fn pack(&self, wheels: &[WheelSpeeds]) -> DVector<f64> {
        let n = self.horizon.intervals();
        assert_eq!(wheels.len(), n, "one wheel pair per interval");
        let wheels: Vec<_> = wheels.iter().map(|w| self.clamp(*w)).collect();
        let nodes = self.rollout_nodes(&wheels);
        let mut x = DVector::zeros(self.num_variables());
        for (j, w) in wheels.iter().enumerate() {
            x[2 * j] = w.v_left;
            x[2 * j + 1] = w.v_right;
        }
        let o = self.state_offset();
        for j in 1..n {
            for r in 0..3 {
                x[o + 3 * (j - 1) + r] = nodes[j][r];
            }
        }
        x
    }

    pub fn unpack_controls(&self, x: &DVector<f64>) -> Vec<WheelSpeeds> {
        (0..self.horizon.intervals())
            .map(|j| WheelSpeeds::new(x[2 * j], x[2 * j + 1]))
            .collect()
    }

    /// Evaluates the control sequence `wheels` on its own rollout. The result
    /// is marked [`SolveStatus::NotSolved`]; the KKT field holds the projected
    /// gradient norm of the cost alone.
    pub fn evaluate_candidate(&self, wheels: &[WheelSpeeds]) -> OcpSolution {
        let x = self.pack(wheels);
        let mut e = Evaluation::zeros(self.num_variables(), self.num_equalities(), self.num_inequalities());
        self.evaluate(&x, &mut e);
        let wheel_controls = self.unpack_controls(&x);
        let controls = wheel_controls.iter().map(|w| wheels_to_body(*w, &self.params)).collect();
        let nodes = self.rollout_nodes(&wheel_controls);
        let m = self.horizon.substeps();
        let shooting_states: Vec<Pose> = nodes.iter().map(to_pose).collect();
        let predicted_errors = shooting_states
            .iter()
            .enumerate()
            .map(|(j, p)| tracking_error(&self.window.poses[j * m], p))
            .collect();
        let violation = e.violation();
        OcpSolution {
            t0: self.window.t0,
            controls,
            wheel_controls,
            shooting_states,
            predicted_errors,
            cost: e.f,
            kkt_residual: projected_gradient_norm(&x, &e.grad_f, &self.lower_bounds(), &self.upper_bounds()),
            constraint_violation: violation,
            iterations: 0,
            outer_iterations: 0,
            feasible: violation <= FEASIBILITY_TOL,
            status: SolveStatus::NotSolved,
            solve_time: 0.0,
        }
    }
}

/// `(‖d‖² − b²)/(2b)` with its gradient in the head state, where `d = p_r − p`.
fn ball_row(dx: f64, dy: f64, bound: f64) -> (f64, Vector3<f64>) {
    (
        (dx * dx + dy * dy - bound * bound) / (2.0 * bound),
        Vector3::new(-dx / bound, -dy / bound, 0.0),
    )
}

impl NlpProblem for OcpProblem {
    fn num_variables(&self) -> usize {
        2 * self.horizon.intervals() + 3 * self.num_interior_states()
    }

    fn num_equalities(&self) -> usize {
        3 * self.num_interior_states()
    }

    fn num_inequalities(&self) -> usize {
        self.num_terminal_constraints() + self.num_funnel_constraints()
    }

    fn lower_bounds(&self) -> DVector<f64> {
        let mut lo = DVector::from_element(self.num_variables(), f64::NEG_INFINITY);
        lo.rows_mut(0, self.state_offset()).fill(-self.wheel_bound());
        lo
    }

    fn upper_bounds(&self) -> DVector<f64> {
        let mut hi = DVector::from_element(self.num_variables(), f64::INFINITY);
        hi.rows_mut(0, self.state_offset()).fill(self.wheel_bound());
        hi
    }

    fn evaluate(&self, x: &DVector<f64>, out: &mut Evaluation) {
        let n = self.horizon.intervals();
        let m = self.horizon.substeps();
        let h = self.horizon.substep();
        let rho = self.params.rho();
        let n_term = self.num_terminal_constraints();

        out.f = 0.0;
        out.grad_f.fill(0.0);
        out.jac_eq.fill(0.0);
        out.jac_ineq.fill(0.0);

        for j in 0..n {
            let z0 = self.node_state(x, j);
            let u = self.control(x, j);
            let traj = propagate(z0, u, rho, h, m);
            for (i, (z, s)) in traj.iter().enumerate() {
                let wgt = if i == 0 || i == m { 0.5 * h } else { h };
                let (l, dz, du) = self.stage_partials(j * m + i, z, u);
                out.f += wgt * l;
                let mut g = s.transpose() * dz;
                g[3] += du[0];
                g[4] += du[1];
                g *= wgt;
                self.scatter(j, &g, |c, v| out.grad_f[c] += v);
            }

            let (z_end, s_end) = traj[m];
            if j + 1 < n {
                let o = self.state_offset() + 3 * j;
                let next = self.node_state(x, j + 1);
                for r in 0..3 {
                    let row = 3 * j + r;
                    out.eq[row] = z_end[r] - next[r];
                    let g: SVector<f64, 5> = s_end.row(r).transpose();
                    self.scatter(j, &g, |c, v| out.jac_eq[(row, c)] += v);
                    out.jac_eq[(row, o + r)] -= 1.0;
                }
                if let Some((val, grad)) = self.funnel_row(j + 1, &next) {
                    let row = n_term + j;
                    out.ineq[row] = val;
                    for r in 0..3 {
                        out.jac_ineq[(row, o + r)] = grad[r];
                    }
                }
            } else {
                let r = self.window.poses.last().expect("non-empty window");
                let dz = Vector3::new(-(r.x - z_end[0]), -(r.y - z_end[1]), 0.0);
                out.f += 0.5 * ((r.x - z_end[0]).powi(2) + (r.y - z_end[1]).powi(2));
                let g = s_end.transpose() * dz;
                self.scatter(j, &g, |c, v| out.grad_f[c] += v);

                let mut rows = self.terminal_rows(&z_end);
                if let Some(row) = self.funnel_row(n, &z_end) {
                    rows.push(row);
                }
                for (idx, (val, grad)) in rows.into_iter().enumerate() {
                    // terminal rows come first, the node-N funnel row is last
                    let row = if idx < n_term { idx } else { n_term + j };
                    out.ineq[row] = val;
                    let g = s_end.transpose() * grad;
                    self.scatter(j, &g, |c, v| out.jac_ineq[(row, c)] += v);
                }
            }
        }
    }
}

/// Human-readable dump of the instance (format unversioned).
impl fmt::Display for OcpProblem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let hz = &self.horizon;
        writeln!(f, "ocp instance t0={}", self.window.t0)?;
        writeln!(
            f,
            "  horizon T={} delta={} N={} m={}",
            hz.horizon(),
            hz.delta(),
            hz.intervals(),
            hz.substeps()
        )?;
        writeln!(
            f,
            "  robot a={} rho={}  weights q=({}, {}) p=({}, {})",
            self.params.a(),
            self.params.rho(),
            self.weights.q1,
            self.weights.q2,
            self.weights.p1,
            self.weights.p2
        )?;
        writeln!(
            f,
            "  initial head ({}, {}, {})",
            self.initial.x, self.initial.y, self.initial.theta
        )?;
        writeln!(
            f,
            "  variables {} ({} wheel pairs in [-{}, {}], {} interior poses)",
            self.num_variables(),
            self.num_controls(),
            self.wheel_bound(),
            self.wheel_bound(),
            self.num_interior_states()
        )?;
        writeln!(f, "  equalities {} (defects)", self.num_equalities())?;
        match self.spec.terminal {
            TerminalSet::Diamond { gains, level } => writeln!(
                f,
                "  terminal diamond {}|x| + {}|y| <= {}",
                gains.k1, gains.k2, level
            )?,
            TerminalSet::Ball { radius } => writeln!(f, "  terminal ball |p| <= {radius}")?,
        }
        if self.spec.funnel.is_some() {
            for j in 1..=hz.intervals() {
                writeln!(f, "  funnel node {j}: |p| <= {}", self.funnel_bound(j).unwrap_or(f64::INFINITY))?;
            }
        }
        for (k, (p, u)) in self.window.poses.iter().zip(&self.window.inputs).enumerate() {
            if k % hz.substeps() == 0 {
                writeln!(f, "  ref node {}: pose ({}, {}, {}) input ({}, {})", k / hz.substeps(), p.x, p.y, p.theta, u.v, u.omega)?;
            }
        }
        Ok(())
    }
}

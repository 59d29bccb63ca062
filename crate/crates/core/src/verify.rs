//! Sampling checks of the terminal ingredients and of the model's Lipschitz
//! constant.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error_frame::{input_error, nominal_error_dynamics, TrackingError};
use crate::kinematics::{f_head, input_index, BodyInput, Pose, RobotParams};
use crate::ocp::{stage_cost, terminal_controller, TerminalGains, Weights};

/// Position part of a terminal region in the error frame. The heading error
/// is unconstrained.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TerminalRegion {
    /// `k̃1|x| + k̃2|y| ≤ level`.
    Diamond { gains: TerminalGains, level: f64 },
    /// `‖(x, y)‖ ≤ radius`.
    Ball { radius: f64 },
}

impl TerminalRegion {
    /// Normalised size, `≤ 1` inside.
    pub fn index(&self, x: f64, y: f64) -> f64 {
        match *self {
            TerminalRegion::Diamond { gains, level } => (gains.k1 * x.abs() + gains.k2 * y.abs()) / level,
            TerminalRegion::Ball { radius } => x.hypot(y) / radius,
        }
    }

    /// Uniform sample of the region.
    pub fn sample(&self, rng: &mut impl Rng) -> (f64, f64) {
        match *self {
            TerminalRegion::Diamond { gains, level } => loop {
                let x = rng.random_range(-1.0..=1.0) * level / gains.k1;
                let y = rng.random_range(-1.0..=1.0) * level / gains.k2;
                if self.index(x, y) <= 1.0 {
                    return (x, y);
                }
            },
            TerminalRegion::Ball { radius } => {
                let r = radius * rng.random::<f64>().sqrt();
                let phi = rng.random_range(-std::f64::consts::PI..std::f64::consts::PI);
                (r * phi.cos(), r * phi.sin())
            }
        }
    }
}

/// Inputs to [`check_terminal_set`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TerminalSetCase {
    pub params: RobotParams,
    pub weights: Weights,
    pub gains: TerminalGains,
    pub region: TerminalRegion,
    /// Input-set scale the terminal controller must respect.
    pub lambda_f: f64,
    pub v_r: f64,
    pub omega_r: f64,
    /// Length of each closed-loop trajectory used for the invariance check.
    pub duration: f64,
    pub substeps: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct TerminalSetReport {
    pub samples: usize,
    /// Samples whose closed-loop trajectory left the region.
    pub invariance_violations: usize,
    /// Largest region index reached along any trajectory.
    pub max_index_reached: f64,
    pub admissibility_violations: usize,
    pub max_input_index: f64,
    /// Samples with `ġ + L > tol`.
    pub decrease_violations: usize,
    pub max_decrease_residual: f64,
}

impl TerminalSetReport {
    pub fn all_passed(&self) -> bool {
        self.invariance_violations == 0 && self.admissibility_violations == 0 && self.decrease_violations == 0
    }
}

fn closed_loop_rate(e: &TrackingError, case: &TerminalSetCase) -> [f64; 3] {
    let u = terminal_controller(e, case.v_r, &case.gains, case.params.rho());
    let r = nominal_error_dynamics(e, u, BodyInput::new(case.v_r, case.omega_r), case.params.rho());
    [r.dx_rf, r.dy_rf, r.dtheta_rf]
}

fn rk4_error_step(e: &TrackingError, h: f64, case: &TerminalSetCase) -> TrackingError {
    let at = |base: &TrackingError, k: [f64; 3], s: f64| {
        TrackingError::new(base.x_rf + s * k[0], base.y_rf + s * k[1], base.theta_rf + s * k[2])
    };
    let k1 = closed_loop_rate(e, case);
    let k2 = closed_loop_rate(&at(e, k1, h / 2.0), case);
    let k3 = closed_loop_rate(&at(e, k2, h / 2.0), case);
    let k4 = closed_loop_rate(&at(e, k3, h), case);
    let mut next = *e;
    next.x_rf += h / 6.0 * (k1[0] + 2.0 * k2[0] + 2.0 * k3[0] + k4[0]);
    next.y_rf += h / 6.0 * (k1[1] + 2.0 * k2[1] + 2.0 * k3[1] + k4[1]);
    next.theta_rf += h / 6.0 * (k1[2] + 2.0 * k2[2] + 2.0 * k3[2] + k4[2]);
    next
}

/// Samples `n` points of the region with uniform heading error and checks
/// invariance under the terminal controller, input admissibility at
/// `lambda_f` and `ġ + L ≤ tol`.
pub fn check_terminal_set(case: &TerminalSetCase, n: usize, seed: u64, tol: f64) -> TerminalSetReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rho = case.params.rho();
    let h = case.duration / case.substeps as f64;
    let mut rep = TerminalSetReport { samples: n, ..Default::default() };
    for _ in 0..n {
        let (x, y) = case.region.sample(&mut rng);
        let theta = rng.random_range(-std::f64::consts::PI..std::f64::consts::PI);
        let e = TrackingError::new(x, y, theta);

        let u = terminal_controller(&e, case.v_r, &case.gains, rho);
        let idx = input_index(u, &case.params);
        rep.max_input_index = rep.max_input_index.max(idx);
        if idx > case.lambda_f + tol {
            rep.admissibility_violations += 1;
        }

        // ġ = ∇g · ė with g = ½‖p‖²
        let rate = closed_loop_rate(&e, case);
        let g_dot = x * rate[0] + y * rate[1];
        let residual = g_dot + stage_cost(&e, &input_error(u, case.v_r, theta, rho), &case.weights);
        rep.max_decrease_residual = rep.max_decrease_residual.max(residual);
        if residual > tol {
            rep.decrease_violations += 1;
        }

        let mut cur = e;
        let mut left = false;
        for _ in 0..case.substeps {
            cur = rk4_error_step(&cur, h, case);
            let i = case.region.index(cur.x_rf, cur.y_rf);
            rep.max_index_reached = rep.max_index_reached.max(i);
            left |= i > 1.0 + tol;
        }
        if left {
            rep.invariance_violations += 1;
        }
    }
    rep
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LipschitzReport {
    pub pairs: usize,
    pub max_ratio: f64,
    pub violations: usize,
}

/// Ratio `‖f(ξ1, u) − f(ξ2, u)‖ / ‖ξ1 − ξ2‖` of the head-point model over
/// random pose pairs and admissible inputs.
pub fn lipschitz_monte_carlo(params: &RobotParams, pairs: usize, seed: u64) -> LipschitzReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let a = params.a();
    let mut rep = LipschitzReport { pairs, max_ratio: 0.0, violations: 0 };
    for _ in 0..pairs {
        // admissible input on or inside the diamond
        let s: f64 = rng.random_range(0.0..=1.0);
        let share: f64 = rng.random_range(-1.0..=1.0);
        let v = s * share * a;
        let omega = s * (1.0 - share.abs()) * params.b() * if rng.random::<bool>() { 1.0 } else { -1.0 };
        let u = BodyInput::new(v, omega);
        let mut pose = || {
            Pose::new(
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
                rng.random_range(-std::f64::consts::PI..std::f64::consts::PI),
            )
        };
        let p1 = pose();
        let mut p2 = pose();
        // half the pairs are close together to probe the local slope
        if rng.random::<bool>() {
            let scale = 10f64.powf(rng.random_range(-8.0..-1.0));
            p2 = Pose::new(p1.x + scale * (p2.x - p1.x), p1.y + scale * (p2.y - p1.y), p1.theta + scale * p2.theta);
        }
        let f1 = f_head(&p1, u, params.rho());
        let f2 = f_head(&p2, u, params.rho());
        let df = ((f1.dx - f2.dx).powi(2) + (f1.dy - f2.dy).powi(2) + (f1.dtheta - f2.dtheta).powi(2)).sqrt();
        let dxi = ((p1.x - p2.x).powi(2) + (p1.y - p2.y).powi(2) + (p1.theta - p2.theta).powi(2)).sqrt();
        if dxi == 0.0 {
            continue;
        }
        let ratio = df / dxi;
        rep.max_ratio = rep.max_ratio.max(ratio);
        if ratio > a {
            rep.violations += 1;
        }
    }
    rep
}

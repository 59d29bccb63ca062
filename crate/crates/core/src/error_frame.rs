//! Tracking error expressed in the follower's Frenet-Serret frame.
//!
//! The error is `p_rf = R(θ_f)ᵀ (p_r − p_fh)`, i.e. the reference position seen
//! from the follower head in follower body axes. This rotation sense is the one
//! whose time derivative has the skew term `[[0, ω_f], [−ω_f, 0]] p_rf` and the
//! input-error rows `(−v_f + v_r cos θ_rf, −ρω_f + v_r sin θ_rf)`; with it the
//! additive disturbance enters as `−R(θ_f)ᵀ d_p`.

use nalgebra::{Matrix2, Vector2};

use crate::kinematics::{wrap_angle, BodyInput, Pose};

/// Tracking error between a reference pose and the follower head.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct TrackingError {
    pub x_rf: f64,
    pub y_rf: f64,
    pub theta_rf: f64,
}

impl TrackingError {
    pub fn new(x_rf: f64, y_rf: f64, theta_rf: f64) -> Self {
        TrackingError {
            x_rf,
            y_rf,
            theta_rf: wrap_angle(theta_rf),
        }
    }

    pub fn position_norm(&self) -> f64 {
        self.x_rf.hypot(self.y_rf)
    }
}

/// Time derivative of a [`TrackingError`].
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct TrackingErrorRate {
    pub dx_rf: f64,
    pub dy_rf: f64,
    pub dtheta_rf: f64,
}

/// Input error `(−v_f + v_r cos θ_rf, −ρω_f + v_r sin θ_rf)`, both in m/s.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct InputError {
    pub e_v: f64,
    pub e_w: f64,
}

/// Additive disturbance on the head position channels (m/s).
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Disturbance {
    pub d_x: f64,
    pub d_y: f64,
}

impl Disturbance {
    pub fn new(d_x: f64, d_y: f64) -> Self {
        Disturbance { d_x, d_y }
    }

    pub fn norm(&self) -> f64 {
        self.d_x.hypot(self.d_y)
    }
}

pub fn rotation(theta: f64) -> Matrix2<f64> {
    let (s, c) = theta.sin_cos();
    Matrix2::new(c, -s, s, c)
}

pub fn tracking_error(reference: &Pose, follower_head: &Pose) -> TrackingError {
    let (s, c) = follower_head.theta.sin_cos();
    let dx = reference.x - follower_head.x;
    let dy = reference.y - follower_head.y;
    TrackingError {
        x_rf: c * dx + s * dy,
        y_rf: -s * dx + c * dy,
        theta_rf: wrap_angle(reference.theta - follower_head.theta),
    }
}

/// Perturbed tracking-error dynamics. `omega_r` drives the heading error.
pub fn error_dynamics(
    e: &TrackingError,
    u_f: BodyInput,
    u_r: BodyInput,
    d: Disturbance,
    theta_f: f64,
    rho: f64,
) -> TrackingErrorRate {
    let ue = input_error(u_f, u_r.v, e.theta_rf, rho);
    let (s, c) = theta_f.sin_cos();
    // −R(θ_f)ᵀ d_p
    let dist_x = -(c * d.d_x + s * d.d_y);
    let dist_y = -(-s * d.d_x + c * d.d_y);
    TrackingErrorRate {
        dx_rf: u_f.omega * e.y_rf + ue.e_v + dist_x,
        dy_rf: -u_f.omega * e.x_rf + ue.e_w + dist_y,
        dtheta_rf: u_r.omega - u_f.omega,
    }
}

/// Nominal (undisturbed) tracking-error dynamics.
pub fn nominal_error_dynamics(
    e: &TrackingError,
    u_f: BodyInput,
    u_r: BodyInput,
    rho: f64,
) -> TrackingErrorRate {
    error_dynamics(e, u_f, u_r, Disturbance::default(), 0.0, rho)
}

pub fn input_error(u_f: BodyInput, v_r: f64, theta_rf: f64, rho: f64) -> InputError {
    let (s, c) = theta_rf.sin_cos();
    InputError {
        e_v: -u_f.v + v_r * c,
        e_w: -rho * u_f.omega + v_r * s,
    }
}

/// `M(θ) = [[cos θ, −ρ sin θ], [sin θ, ρ cos θ]]`, mapping `(v, ω)` to the
/// head-point velocity.
pub fn affine_input_matrix(theta: f64, rho: f64) -> Matrix2<f64> {
    let (s, c) = theta.sin_cos();
    Matrix2::new(c, -rho * s, s, rho * c)
}

/// Closed-form inverse of [`affine_input_matrix`].
pub fn affine_input_matrix_inverse(theta: f64, rho: f64) -> Matrix2<f64> {
    let (s, c) = theta.sin_cos();
    Matrix2::new(c, s, -s / rho, c / rho)
}

pub fn body_input_vector(u: BodyInput) -> Vector2<f64> {
    Vector2::new(u.v, u.omega)
}

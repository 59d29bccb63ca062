//! Unicycle and head-point kinematics, wheel-speed algebra and the coupled
//! (diamond-shaped) input set.

use std::f64::consts::PI;

use crate::error::{Error, Result};

/// Slack applied to the left-hand side of the diamond membership test.
pub const INPUT_SET_SLACK: f64 = 1e-12;

/// Wrap an angle into `(-π, π]`.
pub fn wrap_angle(theta: f64) -> f64 {
    let mut w = theta.rem_euclid(2.0 * PI);
    if w > PI {
        w -= 2.0 * PI;
    }
    // rem_euclid can land exactly on 2π for tiny negative inputs
    if w <= -PI {
        w += 2.0 * PI;
    }
    w
}

/// Planar pose: position in meters, heading in radians.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Pose {
    pub x: f64,
    pub y: f64,
    pub theta: f64,
}

impl Pose {
    /// Builds a pose with the heading wrapped into `(-π, π]`.
    pub fn new(x: f64, y: f64, theta: f64) -> Self {
        Pose {
            x,
            y,
            theta: wrap_angle(theta),
        }
    }

    pub fn position(&self) -> [f64; 2] {
        [self.x, self.y]
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.theta.is_finite()
    }
}

/// Time derivative of a [`Pose`].
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PoseRate {
    pub dx: f64,
    pub dy: f64,
    pub dtheta: f64,
}

/// Body-frame input: linear velocity (m/s) and angular velocity (rad/s).
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct BodyInput {
    pub v: f64,
    pub omega: f64,
}

impl BodyInput {
    pub fn new(v: f64, omega: f64) -> Self {
        BodyInput { v, omega }
    }

    pub fn is_finite(&self) -> bool {
        self.v.is_finite() && self.omega.is_finite()
    }
}

/// Left and right wheel rim speeds in m/s.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct WheelSpeeds {
    pub v_left: f64,
    pub v_right: f64,
}

impl WheelSpeeds {
    pub fn new(v_left: f64, v_right: f64) -> Self {
        WheelSpeeds { v_left, v_right }
    }
}

/// Physical robot constants. `b = a / rho` is computed once at construction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RobotParams {
    a: f64,
    rho: f64,
    b: f64,
}

impl RobotParams {
    pub fn new(a: f64, rho: f64) -> Result<Self> {
        if !(a.is_finite() && a > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "max wheel speed a must be positive, got {a}"
            )));
        }
        if !(rho.is_finite() && rho > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "half wheelbase rho must be positive, got {rho}"
            )));
        }
        Ok(RobotParams { a, rho, b: a / rho })
    }

    /// Maximum wheel speed (m/s).
    pub fn a(&self) -> f64 {
        self.a
    }

    /// Half wheelbase (m).
    pub fn rho(&self) -> f64 {
        self.rho
    }

    /// Maximum angular velocity `a / rho` (rad/s).
    pub fn b(&self) -> f64 {
        self.b
    }
}

pub fn wheels_to_body(w: WheelSpeeds, params: &RobotParams) -> BodyInput {
    BodyInput {
        v: 0.5 * (w.v_left + w.v_right),
        omega: (w.v_right - w.v_left) / (2.0 * params.rho),
    }
}

pub fn body_to_wheels(u: BodyInput, params: &RobotParams) -> WheelSpeeds {
    let turn = params.rho * u.omega;
    WheelSpeeds {
        v_left: u.v - turn,
        v_right: u.v + turn,
    }
}

/// `|v|/a + |ω|/b`, the normalised size of `u` in the diamond input set.
pub fn input_index(u: BodyInput, params: &RobotParams) -> f64 {
    u.v.abs() / params.a + u.omega.abs() / params.b
}

/// Membership of `u` in the scaled diamond `λ𝕌`.
pub fn input_in_set(u: BodyInput, lambda: f64, params: &RobotParams) -> bool {
    input_index(u, params) <= lambda + INPUT_SET_SLACK
}

/// Head point a distance `rho` ahead of the axle midpoint.
pub fn head_pose(xi: Pose, rho: f64) -> Pose {
    let (s, c) = xi.theta.sin_cos();
    Pose {
        x: xi.x + rho * c,
        y: xi.y + rho * s,
        theta: wrap_angle(xi.theta),
    }
}

pub fn f_unicycle(xi: &Pose, u: BodyInput) -> PoseRate {
    let (s, c) = xi.theta.sin_cos();
    PoseRate {
        dx: u.v * c,
        dy: u.v * s,
        dtheta: u.omega,
    }
}

/// Head-point kinematics: `ṗ = M(θ) u`, `θ̇ = ω`.
pub fn f_head(xi_h: &Pose, u: BodyInput, rho: f64) -> PoseRate {
    let (s, c) = xi_h.theta.sin_cos();
    let turn = rho * u.omega;
    PoseRate {
        dx: u.v * c - turn * s,
        dy: u.v * s + turn * c,
        dtheta: u.omega,
    }
}

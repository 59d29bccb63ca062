use crate::error::{Error, Result};
use crate::error_frame::TrackingError;
use crate::kinematics::BodyInput;

/// Gains `(k̃1, k̃2)` of the local terminal controller, in 1/s.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TerminalGains {
    pub k1: f64,
    pub k2: f64,
}

impl TerminalGains {
    pub fn new(k1: f64, k2: f64) -> Result<Self> {
        if !(k1.is_finite() && k1 > 0.0 && k2.is_finite() && k2 > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "terminal gains must be positive, got ({k1}, {k2})"
            )));
        }
        Ok(TerminalGains { k1, k2 })
    }

    /// `min(k̃1, k̃2)`.
    pub fn min(&self) -> f64 {
        self.k1.min(self.k2)
    }

    /// `√(k̃1² + k̃2²)`.
    pub fn norm(&self) -> f64 {
        self.k1.hypot(self.k2)
    }

    /// Open interval of gains for which `ġ + L < 0` under the terminal
    /// controller, given input weight `p` and state weight `q` of one channel.
    /// `None` when `p·q ≥ 1/4`.
    pub fn admissible_interval(p: f64, q: f64) -> Option<(f64, f64)> {
        let disc = 1.0 - 4.0 * p * q;
        if disc <= 0.0 {
            return None;
        }
        let root = disc.sqrt();
        Some(((1.0 - root) / (2.0 * p), (1.0 + root) / (2.0 * p)))
    }
}

/// `v = k̃1 x_rf + v_r cos θ_rf`, `ω = (k̃2 y_rf + v_r sin θ_rf) / ρ`.
pub fn terminal_controller(e: &TrackingError, v_r: f64, gains: &TerminalGains, rho: f64) -> BodyInput {
    let (s, c) = e.theta_rf.sin_cos();
    BodyInput {
        v: gains.k1 * e.x_rf + v_r * c,
        omega: (gains.k2 * e.y_rf + v_r * s) / rho,
    }
}

/// `k̃1|x_rf| + k̃2|y_rf| ≤ level`.
pub fn in_terminal_diamond(e: &TrackingError, gains: &TerminalGains, level: f64) -> bool {
    gains.k1 * e.x_rf.abs() + gains.k2 * e.y_rf.abs() <= level
}

use std::f64::consts::SQRT_2;
use std::fmt;

use super::FeedbackGain;
use crate::kinematics::RobotParams;
use crate::ocp::{HorizonConfig, TerminalGains, Weights};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Relation {
    Lt,
    Le,
    Ge,
    Gt,
}

impl Relation {
    fn holds(self, lhs: f64, rhs: f64) -> bool {
        match self {
            Relation::Lt => lhs < rhs,
            Relation::Le => lhs <= rhs,
            Relation::Ge => lhs >= rhs,
            Relation::Gt => lhs > rhs,
        }
    }
}

impl fmt::Display for Relation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Relation::Lt => "<",
            Relation::Le => "<=",
            Relation::Ge => ">=",
            Relation::Gt => ">",
        })
    }
}

/// One sufficient condition with both sides evaluated.
#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: String,
    pub lhs: f64,
    pub relation: Relation,
    pub rhs: f64,
    pub passed: bool,
}

impl Check {
    fn new(name: impl Into<String>, lhs: f64, relation: Relation, rhs: f64) -> Self {
        Check {
            name: name.into(),
            lhs,
            relation,
            rhs,
            // NaN on either side fails every relation
            passed: relation.holds(lhs, rhs),
        }
    }
}

impl fmt::Display for Check {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}: {} ({}) {} → {}",
            self.name,
            sig6(self.lhs),
            self.relation,
            sig6(self.rhs),
            if self.passed { "PASS" } else { "FAIL" }
        )
    }
}

/// Six significant digits.
pub fn sig6(v: f64) -> String {
    if v == 0.0 || !v.is_finite() {
        return format!("{v}");
    }
    let exp = v.abs().log10().floor() as i32;
    if (-4..6).contains(&exp) {
        format!("{:.*}", (5 - exp).max(0) as usize, v)
    } else {
        format!("{v:.5e}")
    }
}

/// Derived constants and condition checks for one strategy. Quantities that
/// do not apply to the strategy are `None`.
#[derive(Debug, Clone, PartialEq)]
pub struct CertifiedParams {
    pub lambda_r: f64,
    pub lambda_tube: Option<f64>,
    pub diamond_level: Option<f64>,
    pub tube_halfwidth_x: Option<f64>,
    pub tube_halfwidth_y: Option<f64>,
    pub r: Option<f64>,
    pub epsilon: Option<f64>,
    pub k_tilde: f64,
    pub checks: Vec<Check>,
}

impl CertifiedParams {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn failures(&self) -> impl Iterator<Item = &Check> {
        self.checks.iter().filter(|c| !c.passed)
    }

    pub fn check(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }
}

/// `√2·max|v_r| / a`.
pub fn lambda_r(params: &RobotParams, v_r_max: f64) -> f64 {
    SQRT_2 * v_r_max.abs() / params.a()
}

fn weight_and_gain_checks(w: &Weights, gains: &TerminalGains) -> Vec<Check> {
    let mut checks = Vec::new();
    for (i, p, q, k) in [(1, w.p1, w.q1, gains.k1), (2, w.p2, w.q2, gains.k2)] {
        checks.push(Check::new(format!("p{i}*q{i} < 1/4"), p * q, Relation::Lt, 0.25));
        let (lo, hi) = TerminalGains::admissible_interval(p, q).unwrap_or((f64::NAN, f64::NAN));
        checks.push(Check::new(format!("k{i}_tilde > lower gain bound"), k, Relation::Gt, lo));
        checks.push(Check::new(format!("k{i}_tilde < upper gain bound"), k, Relation::Lt, hi));
    }
    checks
}

/// Conditions for tube-MPC: terminal region with `λ_f = λ_tube`, tightened
/// input set and the steady tube size.
pub fn certify_tube(
    params: &RobotParams,
    w: &Weights,
    gains: &TerminalGains,
    k: &FeedbackGain,
    eta: f64,
    v_r_max: f64,
) -> CertifiedParams {
    let a = params.a();
    let lam_r = lambda_r(params, v_r_max);
    let lam_tube = SQRT_2 / 2.0 - eta * SQRT_2 / a;
    let mut checks = weight_and_gain_checks(w, gains);
    checks.extend([
        Check::new("|v_r| < a*lambda_tube/sqrt(2)", v_r_max.abs(), Relation::Lt, a * lam_tube / SQRT_2),
        Check::new("lambda_tube > lambda_r", lam_tube, Relation::Gt, lam_r),
        Check::new("eta < a/2", eta, Relation::Lt, a / 2.0),
        Check::new("k_x < 0", k.k_x, Relation::Lt, 0.0),
        Check::new("k_y < 0", k.k_y, Relation::Lt, 0.0),
    ]);
    CertifiedParams {
        lambda_r: lam_r,
        lambda_tube: Some(lam_tube),
        diamond_level: Some(a * (lam_tube - lam_r)),
        tube_halfwidth_x: Some(eta / k.k_x.abs()),
        tube_halfwidth_y: Some(eta / k.k_y.abs()),
        r: None,
        epsilon: None,
        k_tilde: gains.min(),
        checks,
    }
}

/// Funnel radius `a(1 − λ_r)/√(k̃1² + k̃2²)`.
pub fn funnel_radius(params: &RobotParams, gains: &TerminalGains, v_r_max: f64) -> f64 {
    params.a() * (1.0 - lambda_r(params, v_r_max)) / gains.norm()
}

/// Conditions for NRMPC: terminal ball, funnel and the ISS inequality.
pub fn certify_nrmpc(
    params: &RobotParams,
    w: &Weights,
    gains: &TerminalGains,
    eta: f64,
    v_r_max: f64,
    h: &HorizonConfig,
    epsilon: f64,
) -> CertifiedParams {
    let a = params.a();
    let t = h.horizon();
    let delta = h.delta();
    let lam_r = lambda_r(params, v_r_max);
    let r = funnel_radius(params, gains, v_r_max);
    let k_tilde = gains.min();
    let q = w.q1.max(w.q2);
    let q_low = w.q1.min(w.q2);

    let exp_gap = (2.0 * a * t).exp() - (2.0 * a * delta).exp();
    let iss_rhs = 0.5 * eta * (a * t).exp() * (r + epsilon)
        + q * q * eta * eta * delta / (2.0 * a) * exp_gap
        + 2.0 * q * q * eta * r / (SQRT_2 * a) * (t * t / delta - t).sqrt() * exp_gap.sqrt();

    let mut checks = weight_and_gain_checks(w, gains);
    checks.extend([
        Check::new("lambda_r < 1", lam_r, Relation::Lt, 1.0),
        Check::new("epsilon < r", epsilon, Relation::Lt, r),
        Check::new("eta <= exp(-aT)(r - epsilon)/delta", eta, Relation::Le, (-a * t).exp() * (r - epsilon) / delta),
        Check::new("k_tilde*delta >= ln(r/epsilon)", k_tilde * delta, Relation::Ge, (r / epsilon).ln()),
        Check::new("epsilon >= r(T - delta)/T", epsilon, Relation::Ge, r * (t - delta) / t),
        Check::new("ISS: q_min*epsilon^2 > disturbance terms", q_low * epsilon * epsilon, Relation::Gt, iss_rhs),
    ]);
    CertifiedParams {
        lambda_r: lam_r,
        lambda_tube: None,
        diamond_level: None,
        tube_halfwidth_x: None,
        tube_halfwidth_y: None,
        r: Some(r),
        epsilon: Some(epsilon),
        k_tilde,
        checks,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn setup() -> (RobotParams, Weights, TerminalGains) {
        (
            RobotParams::new(0.13, 0.0267).unwrap(),
            Weights::new(0.2, 0.2, 0.4, 0.4).unwrap(),
            TerminalGains::new(1.2, 1.2).unwrap(),
        )
    }

    #[test]
    fn tube_values() {
        let (p, w, g) = setup();
        let c = certify_tube(&p, &w, &g, &FeedbackGain::new(-2.3, -2.3).unwrap(), 0.004, 0.015);
        assert!(c.all_passed(), "{:?}", c.failures().collect::<Vec<_>>());
        assert_relative_eq!(c.lambda_r, 0.163178, epsilon = 1e-6);
        assert_relative_eq!(c.lambda_tube.unwrap(), 0.6636, epsilon = 5e-5);
        assert_relative_eq!(c.diamond_level.unwrap() / 1.2, 0.0542, epsilon = 5e-5);
        assert_relative_eq!(c.tube_halfwidth_x.unwrap(), 0.0017, epsilon = 5e-5);
        assert_relative_eq!(c.tube_halfwidth_y.unwrap(), 0.0017, epsilon = 5e-5);
    }

    #[test]
    fn nrmpc_values() {
        let (p, w, g) = setup();
        let h = HorizonConfig::new(2.0, 0.2, 5).unwrap();
        let c = certify_nrmpc(&p, &w, &g, 0.004, 0.015, &h, 0.063);
        assert!(c.all_passed(), "{:?}", c.failures().collect::<Vec<_>>());
        assert_relative_eq!(c.r.unwrap(), 0.064103, epsilon = 1e-5);
        let eta_check = c.check("eta <= exp(-aT)(r - epsilon)/delta").unwrap();
        assert_relative_eq!(eta_check.rhs, 0.004252, epsilon = 5e-6);
        assert_relative_eq!(eta_check.rhs - eta_check.lhs, 0.000252, epsilon = 5e-6);
        let k = c.check("k_tilde*delta >= ln(r/epsilon)").unwrap();
        assert_relative_eq!(k.lhs, 0.24, epsilon = 1e-12);
        assert_relative_eq!(k.rhs, 0.01735, epsilon = 1e-4);
        let l5 = c.check("epsilon >= r(T - delta)/T").unwrap();
        assert_relative_eq!(l5.rhs, 0.057693, epsilon = 1e-5);
        let iss = c.check("ISS: q_min*epsilon^2 > disturbance terms").unwrap();
        assert_relative_eq!(iss.lhs, 7.938e-4, epsilon = 1e-7);
        assert_relative_eq!(iss.rhs, 7.05e-4, epsilon = 1e-6);
    }

    #[test]
    fn inflated_disturbance_fails_the_eta_bound() {
        let (p, w, g) = setup();
        let h = HorizonConfig::new(2.0, 0.2, 5).unwrap();
        let c = certify_nrmpc(&p, &w, &g, 0.01, 0.015, &h, 0.063);
        assert!(!c.all_passed());
        assert!(!c.check("eta <= exp(-aT)(r - epsilon)/delta").unwrap().passed);
    }

    #[test]
    fn bad_weights_fail_cleanly() {
        let (p, _, g) = setup();
        let w = Weights::new(1.0, 0.2, 0.4, 0.4).unwrap();
        let c = certify_tube(&p, &w, &g, &FeedbackGain::new(-2.3, -2.3).unwrap(), 0.004, 0.015);
        assert!(!c.check("p1*q1 < 1/4").unwrap().passed);
        assert!(!c.check("k1_tilde > lower gain bound").unwrap().passed);
        assert!(c.check("p2*q2 < 1/4").unwrap().passed);
    }

    #[test]
    fn check_formatting() {
        let c = Check::new("x", 0.004, Relation::Le, 0.0042516);
        assert_eq!(c.to_string(), "x: 0.00400000 (<=) 0.00425160 → PASS");
        assert_eq!(sig6(0.663593), "0.663593");
        assert_eq!(sig6(7.938e-4), "0.000793800");
        assert_eq!(sig6(1.5e-7), "1.50000e-7");
    }
}

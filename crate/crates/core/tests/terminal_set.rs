use proptest::prelude::*;

use rmpc::controllers::{certify_tube, funnel_radius, FeedbackGain};
use rmpc::error_frame::{input_error, TrackingError};
use rmpc::kinematics::{input_index, RobotParams};
use rmpc::ocp::{stage_cost, terminal_controller, terminal_penalty, TerminalGains, Weights};
use rmpc::verify::{check_terminal_set, TerminalRegion, TerminalSetCase};

const V_R: f64 = 0.015;
const OMEGA_R: f64 = 0.04;

fn setup() -> (RobotParams, Weights, TerminalGains) {
    (
        RobotParams::new(0.13, 0.0267).unwrap(),
        Weights::new(0.2, 0.2, 0.4, 0.4).unwrap(),
        TerminalGains::new(1.2, 1.2).unwrap(),
    )
}

fn ball_case() -> TerminalSetCase {
    let (params, weights, gains) = setup();
    TerminalSetCase {
        params,
        weights,
        gains,
        region: TerminalRegion::Ball { radius: funnel_radius(&params, &gains, V_R) },
        lambda_f: 1.0,
        v_r: V_R,
        omega_r: OMEGA_R,
        duration: 2.0,
        substeps: 200,
    }
}

fn diamond_case() -> TerminalSetCase {
    let (params, weights, gains) = setup();
    let c = certify_tube(&params, &weights, &gains, &FeedbackGain::new(-2.3, -2.3).unwrap(), 0.004, V_R);
    TerminalSetCase {
        region: TerminalRegion::Diamond { gains, level: c.diamond_level.unwrap() },
        lambda_f: c.lambda_tube.unwrap(),
        ..ball_case()
    }
}

#[test]
fn ball_is_invariant_admissible_and_decreasing() {
    let rep = check_terminal_set(&ball_case(), 1000, 3, 1e-9);
    assert!(rep.all_passed(), "{rep:?}");
    // the radius is sized so the input reaches the set boundary
    assert!(rep.max_input_index > 0.95 && rep.max_input_index <= 1.0, "{rep:?}");
}

#[test]
fn diamond_controller_is_admissible_and_decreasing() {
    let rep = check_terminal_set(&diamond_case(), 1000, 3, 1e-9);
    assert_eq!(rep.admissibility_violations, 0, "{rep:?}");
    assert_eq!(rep.decrease_violations, 0, "{rep:?}");
    assert!(rep.max_input_index <= diamond_case().lambda_f);
}

proptest! {
    #[test]
    fn penalty_decays_at_gain_rate(
        x in -0.06f64..0.06, y in -0.06f64..0.06, th in -3.1f64..3.1,
        k1 in 0.25f64..2.2, k2 in 0.25f64..2.2,
    ) {
        let (p, w, _) = setup();
        let gains = TerminalGains::new(k1, k2).unwrap();
        let e = TrackingError::new(x, y, th);
        let u = terminal_controller(&e, V_R, &gains, p.rho());
        let ue = input_error(u, V_R, th, p.rho());
        // the controller cancels the reference feed-forward exactly
        prop_assert!((ue.e_v + k1 * x).abs() < 1e-12);
        prop_assert!((ue.e_w + k2 * y).abs() < 1e-12);
        let g_dot = -(k1 * x * x + k2 * y * y);
        prop_assert!(g_dot <= -2.0 * gains.min() * terminal_penalty(&e) + 1e-15);
        // inside the admissible gain interval the decrease beats the stage cost
        prop_assert!(g_dot + stage_cost(&e, &ue, &w) <= 1e-12);
    }

    #[test]
    fn diamond_input_bound(x in -0.06f64..0.06, y in -0.06f64..0.06, th in -3.1f64..3.1) {
        let case = diamond_case();
        let TerminalRegion::Diamond { gains, level } = case.region else { unreachable!() };
        prop_assume!(gains.k1 * x.abs() + gains.k2 * y.abs() <= level);
        let u = terminal_controller(&TrackingError::new(x, y, th), V_R, &gains, case.params.rho());
        prop_assert!(input_index(u, &case.params) <= case.lambda_f + 1e-12);
    }
}

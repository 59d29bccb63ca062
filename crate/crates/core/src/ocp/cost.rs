use super::Weights;
use crate::error_frame::{InputError, TrackingError};

/// `‖p_rf‖²_Q + ‖ũ_rf‖²_P`. The heading error is not penalised.
pub fn stage_cost(e: &TrackingError, ue: &InputError, w: &Weights) -> f64 {
    w.q1 * e.x_rf * e.x_rf + w.q2 * e.y_rf * e.y_rf + w.p1 * ue.e_v * ue.e_v + w.p2 * ue.e_w * ue.e_w
}

/// `½‖p_rf‖²`.
pub fn terminal_penalty(e: &TrackingError) -> f64 {
    0.5 * (e.x_rf * e.x_rf + e.y_rf * e.y_rf)
}

/// Stage-cost samples of a trajectory on the substep grid.
///
/// Each interval holds `m + 1` samples taken with that interval's (constant)
/// control, so the boundary node between two intervals appears once per side.
#[derive(Debug, Clone, PartialEq)]
pub struct CostSamples {
    pub substep: f64,
    pub intervals: Vec<Vec<(TrackingError, InputError)>>,
    pub terminal: TrackingError,
}

/// Composite trapezoid of the stage cost, interval by interval, plus the
/// terminal penalty.
pub fn total_cost(samples: &CostSamples, w: &Weights) -> f64 {
    let running: f64 = samples
        .intervals
        .iter()
        .map(|interval| {
            let last = interval.len().saturating_sub(1);
            interval
                .iter()
                .enumerate()
                .map(|(i, (e, ue))| {
                    let weight = if i == 0 || i == last { 0.5 } else { 1.0 };
                    weight * stage_cost(e, ue, w)
                })
                .sum::<f64>()
                * samples.substep
        })
        .sum();
    running + terminal_penalty(&samples.terminal)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn w() -> Weights {
        Weights::new(0.2, 0.2, 0.4, 0.4).unwrap()
    }

    #[test]
    fn stage_cost_examples() {
        let z = TrackingError::default();
        assert_eq!(stage_cost(&z, &InputError::default(), &w()), 0.0);
        let e = TrackingError::new(1.0, 1.0, 0.3);
        assert_relative_eq!(stage_cost(&e, &InputError::default(), &w()), 0.4, epsilon = 1e-15);
        let ue = InputError { e_v: 1.0, e_w: 2.0 };
        assert_relative_eq!(stage_cost(&z, &ue, &w()), 2.0, epsilon = 1e-15);
    }

    #[test]
    fn terminal_penalty_examples() {
        assert_eq!(terminal_penalty(&TrackingError::default()), 0.0);
        assert_eq!(terminal_penalty(&TrackingError::new(1.0, 0.0, 2.0)), 0.5);
        assert_relative_eq!(
            terminal_penalty(&TrackingError::new(0.3, -0.4, 0.0)),
            0.125,
            epsilon = 1e-15
        );
    }

    #[test]
    fn zero_trajectory_costs_nothing() {
        let s = CostSamples {
            substep: 0.04,
            intervals: vec![vec![(TrackingError::default(), InputError::default()); 6]; 10],
            terminal: TrackingError::default(),
        };
        assert_eq!(total_cost(&s, &w()), 0.0);
    }

    #[test]
    fn constant_integrand_is_exact() {
        // stage cost 0.4 everywhere over T = 2 s, terminal ½·2
        let e = TrackingError::new(1.0, 1.0, 0.0);
        let s = CostSamples {
            substep: 0.04,
            intervals: vec![vec![(e, InputError::default()); 6]; 10],
            terminal: e,
        };
        assert_relative_eq!(total_cost(&s, &w()), 0.4 * 2.0 + 1.0, epsilon = 1e-12);
    }

    #[test]
    fn single_interval_linear_trajectory() {
        // x_rf(t) = 1 − t on [0, 1], everything else zero; one interval with
        // m substeps. ∫ q1 (1 − t)² dt = q1 / 3 and g(x(1)) = 0.
        let wt = w();
        let exact = wt.q1 / 3.0;
        for m in [1usize, 10, 40] {
            let h = 1.0 / m as f64;
            let samples: Vec<_> = (0..=m)
                .map(|i| {
                    let t = i as f64 * h;
                    (TrackingError::new(1.0 - t, 0.0, 0.0), InputError::default())
                })
                .collect();
            let s = CostSamples {
                substep: h,
                intervals: vec![samples],
                terminal: TrackingError::default(),
            };
            let got = total_cost(&s, &wt);
            // trapezoid error for a quadratic: q1·h²/6
            assert_relative_eq!(got - exact, wt.q1 * h * h / 6.0, epsilon = 1e-12);
            if m == 40 {
                assert!(((got - exact) / exact).abs() <= 1e-3);
            }
        }
    }
}

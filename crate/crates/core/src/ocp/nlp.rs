//! Small dense NLP solver: augmented Lagrangian outer loop over equality and
//! inequality constraints, projected BFGS inner loop over box-bounded
//! variables.
//!
//! Problem form:
//!
//! ```text
//! min f(x)  s.t.  c(x) = 0,  g(x) ≤ 0,  l ≤ x ≤ u
//! ```

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Values and first derivatives of an NLP at one point.
#[derive(Debug, Clone)]
pub struct Evaluation {
    pub f: f64,
    pub eq: DVector<f64>,
    pub ineq: DVector<f64>,
    pub grad_f: DVector<f64>,
    pub jac_eq: DMatrix<f64>,
    pub jac_ineq: DMatrix<f64>,
}

impl Evaluation {
    pub fn zeros(n: usize, n_eq: usize, n_ineq: usize) -> Self {
        Evaluation {
            f: 0.0,
            eq: DVector::zeros(n_eq),
            ineq: DVector::zeros(n_ineq),
            grad_f: DVector::zeros(n),
            jac_eq: DMatrix::zeros(n_eq, n),
            jac_ineq: DMatrix::zeros(n_ineq, n),
        }
    }

    /// `max(max|c|, max(g, 0))`.
    pub fn violation(&self) -> f64 {
        let eq = self.eq.amax();
        let ineq = self.ineq.iter().fold(0.0f64, |m, &g| m.max(g));
        eq.max(ineq)
    }

    fn is_finite(&self) -> bool {
        self.f.is_finite()
            && self.eq.iter().all(|v| v.is_finite())
            && self.ineq.iter().all(|v| v.is_finite())
            && self.grad_f.iter().all(|v| v.is_finite())
            && self.jac_eq.iter().all(|v| v.is_finite())
            && self.jac_ineq.iter().all(|v| v.is_finite())
    }
}

pub trait NlpProblem {
    fn num_variables(&self) -> usize;
    fn num_equalities(&self) -> usize;
    fn num_inequalities(&self) -> usize;
    fn lower_bounds(&self) -> DVector<f64>;
    fn upper_bounds(&self) -> DVector<f64>;
    /// Fills every field of `out` at `x`.
    fn evaluate(&self, x: &DVector<f64>, out: &mut Evaluation);
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    pub max_outer: usize,
    pub max_inner: usize,
    pub kkt_tol: f64,
    pub feas_tol: f64,
    pub initial_penalty: f64,
    pub penalty_growth: f64,
    pub max_penalty: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            max_outer: 30,
            max_inner: 200,
            kkt_tol: 1e-6,
            feas_tol: 1e-6,
            initial_penalty: 10.0,
            penalty_growth: 10.0,
            max_penalty: 1e9,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveStatus {
    Converged,
    /// Outer or inner iteration cap hit; the iterate is still returned.
    IterationCapReached,
    /// Not produced by the solver (e.g. an evaluated warm-start candidate).
    NotSolved,
}

#[derive(Debug, Clone)]
pub struct NlpResult {
    pub x: DVector<f64>,
    pub f: f64,
    pub kkt_residual: f64,
    pub constraint_violation: f64,
    pub inner_iterations: usize,
    pub outer_iterations: usize,
    pub status: SolveStatus,
    pub multipliers_eq: DVector<f64>,
    pub multipliers_ineq: DVector<f64>,
    /// Iterate at the end of every outer iteration.
    pub outer_iterates: Vec<DVector<f64>>,
}

fn project(x: &mut DVector<f64>, lo: &DVector<f64>, hi: &DVector<f64>) {
    for i in 0..x.len() {
        x[i] = x[i].clamp(lo[i], hi[i]);
    }
}

/// `‖x − P(x − g)‖∞`.
pub fn projected_gradient_norm(
    x: &DVector<f64>,
    g: &DVector<f64>,
    lo: &DVector<f64>,
    hi: &DVector<f64>,
) -> f64 {
    (0..x.len())
        .map(|i| (x[i] - (x[i] - g[i]).clamp(lo[i], hi[i])).abs())
        .fold(0.0, f64::max)
}

/// Augmented Lagrangian value and gradient built from a raw evaluation.
struct Merit {
    value: f64,
    grad: DVector<f64>,
}

struct Multipliers<'a> {
    eq: &'a DVector<f64>,
    ineq: &'a DVector<f64>,
    penalty: f64,
}

impl Multipliers<'_> {
    fn merit(&self, e: &Evaluation) -> Merit {
        let mu = self.penalty;
        let mut value = e.f;
        let mut grad = e.grad_f.clone();
        for i in 0..e.eq.len() {
            let c = e.eq[i];
            value += self.eq[i] * c + 0.5 * mu * c * c;
            let w = self.eq[i] + mu * c;
            if w != 0.0 {
                grad.axpy(w, &e.jac_eq.row(i).transpose(), 1.0);
            }
        }
        for j in 0..e.ineq.len() {
            let shifted = (self.ineq[j] + mu * e.ineq[j]).max(0.0);
            value += (shifted * shifted - self.ineq[j] * self.ineq[j]) / (2.0 * mu);
            if shifted != 0.0 {
                grad.axpy(shifted, &e.jac_ineq.row(j).transpose(), 1.0);
            }
        }
        Merit { value, grad }
    }
}

struct InnerOutcome {
    iterations: usize,
    pg_norm: f64,
}

/// Projected BFGS on the augmented Lagrangian with fixed multipliers.
#[allow(clippy::too_many_arguments)]
fn minimize_box<P: NlpProblem + ?Sized>(
    problem: &P,
    mult: &Multipliers,
    x: &mut DVector<f64>,
    eval: &mut Evaluation,
    lo: &DVector<f64>,
    hi: &DVector<f64>,
    tol: f64,
    max_iter: usize,
) -> Result<InnerOutcome> {
    let n = x.len();
    problem.evaluate(x, eval);
    if !eval.is_finite() {
        return Err(Error::NumericalBreakdown(
            "non-finite objective or constraint at the inner-loop start".into(),
        ));
    }
    let mut merit = mult.merit(eval);
    let gmax = merit.grad.amax();
    let initial_scale = if gmax > 0.0 { (0.1 / gmax).min(1.0) } else { 1.0 };
    let mut hinv = DMatrix::<f64>::identity(n, n) * initial_scale;
    let mut fresh = true;
    let mut trial_eval = Evaluation::zeros(n, eval.eq.len(), eval.ineq.len());

    let mut pg = projected_gradient_norm(x, &merit.grad, lo, hi);
    let mut iterations = 0;
    while iterations < max_iter && pg > tol {
        iterations += 1;
        let g = &merit.grad;
        // variables held at a bound by the gradient
        let eps = pg.min(1e-8);
        let active: Vec<bool> = (0..n)
            .map(|i| (x[i] <= lo[i] + eps && g[i] > 0.0) || (x[i] >= hi[i] - eps && g[i] < 0.0))
            .collect();

        let mut dir = DVector::zeros(n);
        for i in 0..n {
            if active[i] {
                dir[i] = -hinv[(i, i)] * g[i];
            } else {
                let mut acc = 0.0;
                for j in 0..n {
                    if !active[j] {
                        acc += hinv[(i, j)] * g[j];
                    }
                }
                dir[i] = -acc;
            }
        }
        if dir.dot(g) >= 0.0 {
            hinv = DMatrix::identity(n, n) * initial_scale;
            dir = -g.clone();
            fresh = true;
        }

        let mut step = 1.0;
        let mut accepted = None;
        for _ in 0..50 {
            let mut trial = &*x + &dir * step;
            project(&mut trial, lo, hi);
            let moved = &trial - &*x;
            if moved.amax() == 0.0 {
                break;
            }
            problem.evaluate(&trial, &mut trial_eval);
            if trial_eval.is_finite() {
                let trial_merit = mult.merit(&trial_eval);
                if trial_merit.value <= merit.value + 1e-4 * g.dot(&moved) {
                    accepted = Some((trial, trial_merit));
                    break;
                }
            }
            step *= 0.5;
        }

        let Some((trial, trial_merit)) = accepted else {
            if fresh {
                // steepest descent with a fresh metric made no progress
                break;
            }
            hinv = DMatrix::identity(n, n) * initial_scale;
            fresh = true;
            continue;
        };

        let s = &trial - &*x;
        let y = &trial_merit.grad - &merit.grad;
        let sy = s.dot(&y);
        if sy > 1e-12 * s.norm() * y.norm() && sy > 0.0 {
            if fresh {
                // Shanno-Phua rescaling before the first update
                hinv = DMatrix::identity(n, n) * (sy / y.dot(&y));
            }
            let rho = 1.0 / sy;
            let hy = &hinv * &y;
            let yhy = y.dot(&hy);
            // H ← H − ρ(H y sᵀ + s yᵀ H) + (ρ² yᵀHy + ρ) s sᵀ
            hinv.ger(-rho, &hy, &s, 1.0);
            hinv.ger(-rho, &s, &hy, 1.0);
            hinv.ger(rho * rho * yhy + rho, &s, &s, 1.0);
            fresh = false;
        }

        *x = trial;
        std::mem::swap(eval, &mut trial_eval);
        merit = trial_merit;
        pg = projected_gradient_norm(x, &merit.grad, lo, hi);
    }
    Ok(InnerOutcome {
        iterations,
        pg_norm: pg,
    })
}

/// Solves the NLP from `x0` (projected onto the bounds first).
pub fn solve<P: NlpProblem + ?Sized>(
    problem: &P,
    x0: &DVector<f64>,
    opts: &SolverOptions,
) -> Result<NlpResult> {
    let n = problem.num_variables();
    let n_eq = problem.num_equalities();
    let n_ineq = problem.num_inequalities();
    let lo = problem.lower_bounds();
    let hi = problem.upper_bounds();

    let mut x = x0.clone();
    project(&mut x, &lo, &hi);
    let mut eval = Evaluation::zeros(n, n_eq, n_ineq);
    problem.evaluate(&x, &mut eval);
    if !eval.is_finite() {
        return Err(Error::NumericalBreakdown("non-finite values at the initial point".into()));
    }

    let mut lam_eq = DVector::zeros(n_eq);
    let mut lam_ineq = DVector::zeros(n_ineq);
    let mut penalty = opts.initial_penalty;
    let mut violation = eval.violation();
    let mut inner_tol = (1e-3f64).max(opts.kkt_tol);
    let mut inner_total = 0;
    let mut outer_iterates = Vec::new();
    let mut status = SolveStatus::IterationCapReached;
    let mut kkt = f64::INFINITY;
    let mut outer = 0;

    while outer < opts.max_outer {
        outer += 1;
        let mult = Multipliers {
            eq: &lam_eq,
            ineq: &lam_ineq,
            penalty,
        };
        let inner = minimize_box(
            problem,
            &mult,
            &mut x,
            &mut eval,
            &lo,
            &hi,
            inner_tol,
            opts.max_inner,
        )?;
        inner_total += inner.iterations;
        kkt = inner.pg_norm;
        outer_iterates.push(x.clone());

        let new_violation = eval.violation();
        for i in 0..n_eq {
            lam_eq[i] += penalty * eval.eq[i];
        }
        for j in 0..n_ineq {
            lam_ineq[j] = (lam_ineq[j] + penalty * eval.ineq[j]).max(0.0);
        }

        if new_violation <= opts.feas_tol && kkt <= opts.kkt_tol {
            status = SolveStatus::Converged;
            violation = new_violation;
            break;
        }
        if new_violation > 0.25 * violation && new_violation > opts.feas_tol {
            penalty = (penalty * opts.penalty_growth).min(opts.max_penalty);
        }
        violation = new_violation;
        inner_tol = (inner_tol * 0.1).max(0.5 * opts.kkt_tol);
    }

    Ok(NlpResult {
        f: eval.f,
        x,
        kkt_residual: kkt,
        constraint_violation: violation,
        inner_iterations: inner_total,
        outer_iterations: outer,
        status,
        multipliers_eq: lam_eq,
        multipliers_ineq: lam_ineq,
        outer_iterates,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    /// min ½a(u − c)² over l ≤ u ≤ h, optionally with u ≥ floor as g ≤ 0.
    struct ScalarQp {
        a: f64,
        c: f64,
        lo: f64,
        hi: f64,
        floor: Option<f64>,
    }

    impl NlpProblem for ScalarQp {
        fn num_variables(&self) -> usize {
            1
        }
        fn num_equalities(&self) -> usize {
            0
        }
        fn num_inequalities(&self) -> usize {
            usize::from(self.floor.is_some())
        }
        fn lower_bounds(&self) -> DVector<f64> {
            DVector::from_element(1, self.lo)
        }
        fn upper_bounds(&self) -> DVector<f64> {
            DVector::from_element(1, self.hi)
        }
        fn evaluate(&self, x: &DVector<f64>, out: &mut Evaluation) {
            let u = x[0];
            out.f = 0.5 * self.a * (u - self.c).powi(2);
            out.grad_f[0] = self.a * (u - self.c);
            if let Some(fl) = self.floor {
                out.ineq[0] = fl - u;
                out.jac_ineq[(0, 0)] = -1.0;
            }
        }
    }

    #[test]
    fn scalar_unconstrained_interior() {
        let p = ScalarQp { a: 2.0, c: 0.3, lo: -1.0, hi: 1.0, floor: None };
        let r = solve(&p, &DVector::from_element(1, -0.9), &SolverOptions::default()).unwrap();
        assert_eq!(r.status, SolveStatus::Converged);
        assert_relative_eq!(r.x[0], 0.3, epsilon = 1e-6);
    }

    #[test]
    fn scalar_clipped_by_box() {
        let p = ScalarQp { a: 2.0, c: 3.0, lo: -1.0, hi: 1.0, floor: None };
        let r = solve(&p, &DVector::from_element(1, 0.0), &SolverOptions::default()).unwrap();
        assert_eq!(r.x[0], 1.0);
        assert_eq!(r.status, SolveStatus::Converged);
    }

    #[test]
    fn scalar_inequality_active() {
        let p = ScalarQp { a: 1.0, c: -0.5, lo: -1.0, hi: 1.0, floor: Some(0.25) };
        let r = solve(&p, &DVector::from_element(1, 0.9), &SolverOptions::default()).unwrap();
        assert_eq!(r.status, SolveStatus::Converged);
        assert_relative_eq!(r.x[0], 0.25, epsilon = 1e-6);
        // multiplier of the active constraint is a(u* − c) = 0.75
        assert_relative_eq!(r.multipliers_ineq[0], 0.75, epsilon = 1e-4);
    }

    /// Rosenbrock with an equality constraint x0 + x1 = 1 (solution (1, 0)
    /// is off the constraint; the constrained optimum is computed by brute
    /// force along the line; a second local minimum sits near a = −1.618).
    struct ConstrainedRosen;

    impl NlpProblem for ConstrainedRosen {
        fn num_variables(&self) -> usize {
            2
        }
        fn num_equalities(&self) -> usize {
            1
        }
        fn num_inequalities(&self) -> usize {
            0
        }
        fn lower_bounds(&self) -> DVector<f64> {
            DVector::from_element(2, -5.0)
        }
        fn upper_bounds(&self) -> DVector<f64> {
            DVector::from_element(2, 5.0)
        }
        fn evaluate(&self, x: &DVector<f64>, out: &mut Evaluation) {
            let (a, b) = (x[0], x[1]);
            out.f = (1.0 - a).powi(2) + 100.0 * (b - a * a).powi(2);
            out.grad_f[0] = -2.0 * (1.0 - a) - 400.0 * a * (b - a * a);
            out.grad_f[1] = 200.0 * (b - a * a);
            out.eq[0] = a + b - 1.0;
            out.jac_eq[(0, 0)] = 1.0;
            out.jac_eq[(0, 1)] = 1.0;
        }
    }

    #[test]
    fn equality_constrained_rosenbrock() {
        // brute-force the 1-D restriction a ↦ f(a, 1 − a)
        let f = |a: f64| (1.0 - a).powi(2) + 100.0 * (1.0 - a - a * a).powi(2);
        let mut best = (f64::INFINITY, 0.0);
        let mut a = 0.0;
        while a <= 1.0 {
            let v = f(a);
            if v < best.0 {
                best = (v, a);
            }
            a += 1e-6;
        }
        let r = solve(&ConstrainedRosen, &DVector::from_vec(vec![0.2, 0.3]), &SolverOptions::default())
            .unwrap();
        assert!(r.constraint_violation <= 1e-6);
        assert_relative_eq!(r.x[0], best.1, epsilon = 1e-4);
    }
}

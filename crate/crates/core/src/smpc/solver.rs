//! Primal log-barrier method for least-squares objectives with smooth
//! inequality constraints `g(x) < 0` and box bounds.
//!
//! Each barrier stage takes damped Newton steps: the objective Hessian is
//! `2 JᵀJ` from a central-difference residual Jacobian, each barrier term
//! adds its outer-product curvature, and the multiplier-weighted constraint
//! curvature is tracked by symmetric rank-one updates. Iterates stay strictly
//! inside the box and the constraints.

use nalgebra::{DMatrix, DVector};

/// Nonlinear least-squares program over a box.
pub trait Problem {
    fn lower(&self) -> &[f64];
    fn upper(&self) -> &[f64];
    /// Residuals `r(x)`; the objective is `Σ r²`.
    fn residuals(&mut self, x: &[f64]) -> Vec<f64>;
    /// Constraint values `g(x)`; feasible means every entry `< 0`.
    fn constraints(&mut self, x: &[f64]) -> Vec<f64>;
    /// Constraint values and their gradients.
    fn constraint_jacobian(&mut self, x: &[f64]) -> (Vec<f64>, Vec<Vec<f64>>);

    fn objective(&mut self, x: &[f64]) -> f64 {
        self.residuals(x).iter().map(|r| r * r).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BarrierOptions {
    pub mu_start: f64,
    pub mu_end: f64,
    pub mu_factor: f64,
    pub inner_iterations: usize,
    pub max_iterations: usize,
    /// Relative Newton-decrement threshold ending a barrier stage.
    pub tolerance: f64,
    /// Central-difference step for the residual Jacobian.
    pub fd_step: f64,
    /// Margin by which the feasibility phase undershoots the constraints.
    pub feasibility_margin: f64,
}

impl Default for BarrierOptions {
    fn default() -> Self {
        Self {
            mu_start: 1.0,
            mu_end: 1e-4,
            mu_factor: 0.1,
            inner_iterations: 30,
            max_iterations: 200,
            tolerance: 1e-7,
            fd_step: 1e-4,
            feasibility_margin: 1e-3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    /// The last barrier stage reached the tolerance.
    Converged,
    /// Feasible, but the budget ran out or the line search stalled.
    Unfinished,
    /// No strictly feasible point was found.
    Infeasible,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Solution {
    pub x: Vec<f64>,
    pub outcome: Outcome,
    pub iterations: usize,
}

#[derive(Debug, Clone, Copy)]
enum Stage {
    /// `Σ r² - μ Σ log(-g)` plus the box barrier.
    Barrier { mu: f64 },
    /// `Σ max(0, g + margin)²` plus a weak box barrier.
    Feasibility { margin: f64, mu_box: f64 },
}

impl Stage {
    fn mu_box(self) -> f64 {
        match self {
            Stage::Barrier { mu } => mu,
            Stage::Feasibility { mu_box, .. } => mu_box,
        }
    }
}

fn box_barrier(x: &[f64], lo: &[f64], hi: &[f64]) -> Option<f64> {
    let mut sum = 0.0;
    for ((&x, &l), &h) in x.iter().zip(lo).zip(hi) {
        if !(x > l && x < h) {
            return None;
        }
        sum -= (x - l).ln() + (h - x).ln();
    }
    Some(sum)
}

fn strictly_feasible(g: &[f64]) -> bool {
    g.iter().all(|&v| v < 0.0)
}

struct Solver<'p, P: ?Sized> {
    p: &'p mut P,
    lo: Vec<f64>,
    hi: Vec<f64>,
    fd_step: f64,
    /// Estimate of `Σ λ_i ∇²g_i`.
    curvature: DMatrix<f64>,
    /// Point and constraint gradients of the previous barrier model.
    previous: Option<(DVector<f64>, Vec<Vec<f64>>)>,
}

impl<P: Problem + ?Sized> Solver<'_, P> {
    /// Merit value, or `None` outside the domain of the stage.
    fn merit(&mut self, x: &[f64], stage: Stage) -> Option<f64> {
        let b = box_barrier(x, &self.lo, &self.hi)? * stage.mu_box();
        let g = self.p.constraints(x);
        match stage {
            Stage::Barrier { mu } => {
                if !strictly_feasible(&g) {
                    return None;
                }
                let log_sum: f64 = g.iter().map(|v| (-v).ln()).sum();
                Some(self.p.objective(x) - mu * log_sum + b)
            }
            Stage::Feasibility { margin, .. } => Some(g.iter().map(|&v| (v + margin).max(0.0).powi(2)).sum::<f64>() + b),
        }
    }

    fn residual_jacobian(&mut self, x: &[f64]) -> (DVector<f64>, DMatrix<f64>) {
        let r = DVector::from_vec(self.p.residuals(x));
        let mut jac = DMatrix::zeros(r.len(), x.len());
        let mut probe = x.to_vec();
        for j in 0..x.len() {
            probe[j] = x[j] + self.fd_step;
            let up = self.p.residuals(&probe);
            probe[j] = x[j] - self.fd_step;
            let dn = self.p.residuals(&probe);
            probe[j] = x[j];
            for (i, (u, d)) in up.iter().zip(&dn).enumerate() {
                jac[(i, j)] = (u - d) / (2.0 * self.fd_step);
            }
        }
        (r, jac)
    }

    /// Merit, gradient and Gauss-Newton Hessian at `x`.
    fn model(&mut self, x: &[f64], stage: Stage) -> (f64, DVector<f64>, DMatrix<f64>) {
        let n = x.len();
        let mut value = 0.0;
        let mut grad = DVector::zeros(n);
        let mut hess = DMatrix::zeros(n, n);
        let (g, gjac) = self.p.constraint_jacobian(x);
        match stage {
            Stage::Barrier { mu } => {
                self.update_curvature(x, &g, &gjac, mu);
                hess += &self.curvature;
                let (r, jac) = self.residual_jacobian(x);
                value += r.norm_squared();
                grad += 2.0 * jac.tr_mul(&r);
                hess += 2.0 * jac.tr_mul(&jac);
                for (v, row) in g.iter().zip(&gjac) {
                    let d = DVector::from_column_slice(row);
                    value -= mu * (-v).ln();
                    grad.axpy(-mu / v, &d, 1.0);
                    hess.ger(mu / (v * v), &d, &d, 1.0);
                }
            }
            Stage::Feasibility { margin, .. } => {
                for (v, row) in g.iter().zip(&gjac) {
                    let w = (v + margin).max(0.0);
                    if w > 0.0 {
                        let d = DVector::from_column_slice(row);
                        value += w * w;
                        grad.axpy(2.0 * w, &d, 1.0);
                        hess.ger(2.0, &d, &d, 1.0);
                    }
                }
            }
        }
        let mu_box = stage.mu_box();
        for i in 0..n {
            let (a, b) = (x[i] - self.lo[i], self.hi[i] - x[i]);
            value -= mu_box * (a.ln() + b.ln());
            grad[i] += mu_box * (1.0 / b - 1.0 / a);
            hess[(i, i)] += mu_box * (1.0 / (a * a) + 1.0 / (b * b));
        }
        (value, grad, hess)
    }

    /// Rank-one update from the change in `Σ λ_i ∇g_i` with the multipliers
    /// `λ_i = μ / -g_i` of the current point.
    fn update_curvature(&mut self, x: &[f64], g: &[f64], gjac: &[Vec<f64>], mu: f64) {
        let xv = DVector::from_column_slice(x);
        if let Some((xp, jp)) = self.previous.replace((xv.clone(), gjac.to_vec())) {
            let step = &xv - xp;
            let mut y = DVector::zeros(x.len());
            for ((v, new), old) in g.iter().zip(gjac).zip(&jp) {
                let lambda = mu / -v;
                for (k, (a, b)) in new.iter().zip(old).enumerate() {
                    y[k] += lambda * (a - b);
                }
            }
            let w = y - &self.curvature * &step;
            let denom = w.dot(&step);
            if denom.abs() > 1e-8 * w.norm() * step.norm() && denom.abs() > f64::MIN_POSITIVE {
                self.curvature.ger(1.0 / denom, &w, &w, 1.0);
            }
        }
    }

    /// `-(H + δI)⁻¹ ∇` with the smallest damping that factorizes.
    fn direction(grad: &DVector<f64>, hess: &DMatrix<f64>) -> Option<DVector<f64>> {
        if !(grad.iter().all(|v| v.is_finite()) && hess.iter().all(|v| v.is_finite())) {
            return None;
        }
        let scale = hess.diagonal().amax().max(1.0);
        let mut damping = 1e-12 * scale;
        while damping < 1e12 * scale {
            let mut h = hess.clone();
            for i in 0..h.nrows() {
                h[(i, i)] += damping;
            }
            if let Some(ch) = h.cholesky() {
                return Some(-ch.solve(grad));
            }
            damping *= 100.0;
        }
        None
    }

    /// Newton steps on one stage. Returns the iterations used and whether
    /// the stage finished, by the decrement test or by `done` after an
    /// accepted step.
    fn run_stage(
        &mut self,
        x: &mut Vec<f64>,
        stage: Stage,
        budget: usize,
        tol: f64,
        mut done: impl FnMut(&mut P, &[f64]) -> bool,
    ) -> (usize, bool) {
        for it in 0..budget {
            let (f, grad, hess) = self.model(x, stage);
            // a noisy backend can re-evaluate an accepted point as infeasible
            let Some(d) = Self::direction(&grad, &hess).filter(|_| f.is_finite()) else {
                return (it, false);
            };
            let slope = grad.dot(&d);
            if -slope <= tol * (1.0 + f.abs()) {
                return (it, true);
            }
            // fraction to the box boundary
            let mut alpha: f64 = 1.0;
            for (i, &di) in d.iter().enumerate() {
                if di < 0.0 {
                    alpha = alpha.min(0.995 * (self.lo[i] - x[i]) / di);
                } else if di > 0.0 {
                    alpha = alpha.min(0.995 * (self.hi[i] - x[i]) / di);
                }
            }
            let mut accepted = None;
            while alpha > 1e-12 {
                let trial: Vec<f64> = x.iter().zip(d.iter()).map(|(x, d)| x + alpha * d).collect();
                if self.merit(&trial, stage).is_some_and(|ft| ft <= f + 1e-4 * alpha * slope) {
                    accepted = Some(trial);
                    break;
                }
                alpha *= 0.5;
            }
            let Some(trial) = accepted else {
                return (it + 1, false);
            };
            *x = trial;
            if done(self.p, x) {
                return (it + 1, true);
            }
        }
        (budget, false)
    }
}

/// Moves `x` strictly inside the box.
fn interior(x: &[f64], lo: &[f64], hi: &[f64]) -> Vec<f64> {
    x.iter()
        .zip(lo.iter().zip(hi))
        .map(|(&x, (&l, &h))| {
            let pad = 1e-3 * (h - l);
            x.clamp(l + pad, h - pad)
        })
        .collect()
}

/// Barrier loop from `x0`, preceded by a feasibility phase when `x0` is not
/// strictly feasible. Every bound must satisfy `lower < upper`.
pub fn minimize<P: Problem + ?Sized>(p: &mut P, x0: &[f64], opts: &BarrierOptions) -> Solution {
    let (lo, hi) = (p.lower().to_vec(), p.upper().to_vec());
    assert!(lo.iter().zip(&hi).all(|(l, h)| l < h), "box must have a non-empty interior");
    let mut x = interior(x0, &lo, &hi);
    let n = x.len();
    let mut solver = Solver { p, lo, hi, fd_step: opts.fd_step, curvature: DMatrix::zeros(n, n), previous: None };
    let mut iterations = 0;
    if !strictly_feasible(&solver.p.constraints(&x)) {
        let stage = Stage::Feasibility { margin: opts.feasibility_margin, mu_box: opts.mu_end };
        let budget = opts.max_iterations.min(2 * opts.inner_iterations);
        let (used, _) = solver.run_stage(&mut x, stage, budget, 0.0, |p, x| strictly_feasible(&p.constraints(x)));
        iterations += used;
        if !strictly_feasible(&solver.p.constraints(&x)) {
            return Solution { x, outcome: Outcome::Infeasible, iterations };
        }
    }
    let mut mu = opts.mu_start;
    let converged = loop {
        let budget = opts.inner_iterations.min(opts.max_iterations.saturating_sub(iterations));
        if budget == 0 {
            break false;
        }
        let (used, finished) = solver.run_stage(&mut x, Stage::Barrier { mu }, budget, opts.tolerance, |_, _| false);
        iterations += used;
        if mu <= opts.mu_end * (1.0 + 1e-9) {
            break finished;
        }
        mu = (mu * opts.mu_factor).max(opts.mu_end);
    };
    let outcome = if converged { Outcome::Converged } else { Outcome::Unfinished };
    Solution { x, outcome, iterations }
}

//! Path-following stochastic MPC with a collision-probability chance
//! constraint, and the receding-horizon loop around it.

pub mod path;
pub mod solver;

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{wrap_to_pi, Configuration, RectangleFootprint};
use crate::mcs::{mcs_poc, SeededSampler};
use crate::poc::{AdaptivePocEstimator, GaussianBelief, HeadingTruncation};
use crate::scenarios::horizon_sigma;

pub use path::{advance_progress, localize_on_path, path_error, stage_cost, ReferencePath};
use solver::{BarrierOptions, Outcome, Problem};

/// Certification slack on the chance constraint.
pub const CERTIFICATION_SLACK: f64 = 1e-6;

/// Central-difference step on inputs and on belief means.
pub const FD_STEP: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ControlInput {
    pub v: f64,
    pub omega: f64,
}

/// Forward-Euler unicycle.
pub fn unicycle_step(z: &Configuration, u: &ControlInput, sample_time: f64) -> Configuration {
    let (s, c) = z.theta.sin_cos();
    Configuration::new(z.x + sample_time * u.v * c, z.y + sample_time * u.v * s, z.theta + sample_time * u.omega)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InputBounds {
    pub v: [f64; 2],
    pub omega: [f64; 2],
}

impl Default for InputBounds {
    fn default() -> Self {
        Self { v: [0.0, 10.0], omega: [-1.0, 1.0] }
    }
}

impl InputBounds {
    pub fn clamp(&self, u: ControlInput) -> ControlInput {
        ControlInput { v: u.v.clamp(self.v[0], self.v[1]), omega: u.omega.clamp(self.omega[0], self.omega[1]) }
    }

    pub fn contains(&self, u: &ControlInput) -> bool {
        (self.v[0]..=self.v[1]).contains(&u.v) && (self.omega[0]..=self.omega[1]).contains(&u.omega)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SmpcConfig {
    /// Prediction horizon `N_P`; a plan has `N_P + 1` stages.
    pub horizon: usize,
    pub sample_time: f64,
    /// Diagonal of `W` for the `(x, y, theta, v)` errors.
    pub weights: [f64; 4],
    /// POC tolerance; `>= 1` disables the chance constraint.
    pub poc_tolerance: f64,
    pub bounds: InputBounds,
    /// Object standard deviations at the current step.
    pub sigma0: [f64; 3],
    /// Per-step additive growth of the standard deviations.
    pub growth: [f64; 3],
    pub truncation: HeadingTruncation,
    /// Iteration budget of one barrier solve.
    pub max_iterations: usize,
}

impl SmpcConfig {
    pub fn validate(&self) -> Result<()> {
        if self.horizon == 0 {
            return Err(Error::param("horizon", "must be at least 1"));
        }
        if !(self.sample_time.is_finite() && self.sample_time > 0.0) {
            return Err(Error::param("sample_time", format!("must be finite and > 0, got {}", self.sample_time)));
        }
        if self.weights.iter().any(|w| !(w.is_finite() && *w > 0.0)) {
            return Err(Error::param("weights", "entries must be finite and > 0"));
        }
        if !(self.poc_tolerance > 0.0 && self.poc_tolerance <= 1.0) {
            return Err(Error::param("poc_tolerance", format!("must lie in (0, 1], got {}", self.poc_tolerance)));
        }
        let b = &self.bounds;
        if !(b.v[0] < b.v[1] && b.omega[0] < b.omega[1]) || b.v.iter().chain(&b.omega).any(|v| !v.is_finite()) {
            return Err(Error::param("bounds", "must be finite with lower < upper"));
        }
        if self.sigma0.iter().any(|s| !(s.is_finite() && *s > 0.0)) {
            return Err(Error::param("sigma0", "entries must be finite and > 0"));
        }
        if self.growth.iter().any(|q| !(q.is_finite() && *q >= 0.0)) {
            return Err(Error::param("growth", "entries must be finite and >= 0"));
        }
        if self.max_iterations == 0 {
            return Err(Error::param("max_iterations", "must be at least 1"));
        }
        Ok(())
    }

    fn constrained(&self) -> bool {
        self.poc_tolerance < 1.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolverStatus {
    Optimal,
    FeasibleSuboptimal,
    Infeasible,
}

impl fmt::Display for SolverStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Optimal => "optimal",
            Self::FeasibleSuboptimal => "feasible_suboptimal",
            Self::Infeasible => "infeasible",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanResult {
    /// `u_0 .. u_{N_P}`.
    pub inputs: Vec<ControlInput>,
    /// `z_0 .. z_{N_P}`.
    pub states: Vec<Configuration>,
    pub lambdas: Vec<f64>,
    /// Certified collision probability per stage.
    pub poc: Vec<f64>,
    pub status: SolverStatus,
    pub cost: f64,
    pub iterations: usize,
}

impl PlanResult {
    pub fn max_poc(&self) -> f64 {
        self.poc.iter().copied().fold(0.0, f64::max)
    }
}

/// Collision-probability backend for the chance constraint. Beliefs are in
/// the ego frame.
pub trait PocModel {
    fn poc(&mut self, belief: &GaussianBelief) -> f64;

    /// Value and derivative with respect to `belief.mu`; central differences
    /// unless the backend knows better.
    fn poc_with_gradient(&mut self, belief: &GaussianBelief) -> (f64, [f64; 3]) {
        let p = self.poc(belief);
        let mut g = [0.0; 3];
        for (i, gi) in g.iter_mut().enumerate() {
            let (mut up, mut dn) = (*belief, *belief);
            up.mu[i] += FD_STEP;
            dn.mu[i] -= FD_STEP;
            *gi = (self.poc(&up) - self.poc(&dn)) / (2.0 * FD_STEP);
        }
        (p, g)
    }
}

/// Multi-circle estimator backend with exact gradients.
#[derive(Debug, Clone, Copy)]
pub struct AnalyticPoc<'a> {
    pub estimator: &'a AdaptivePocEstimator,
    pub truncation: HeadingTruncation,
}

impl PocModel for AnalyticPoc<'_> {
    fn poc(&mut self, belief: &GaussianBelief) -> f64 {
        self.estimator.estimate(belief, self.truncation)
    }

    fn poc_with_gradient(&mut self, belief: &GaussianBelief) -> (f64, [f64; 3]) {
        self.estimator.estimate_with_gradient(belief, self.truncation)
    }
}

/// Rectangle sampling backend; every evaluation draws a fresh stream.
///
/// The estimate is piecewise constant in the mean, so gradients use central
/// differences of width `gradient_step` on one shared stream.
#[derive(Debug, Clone)]
pub struct McsPoc {
    pub ego_footprint: RectangleFootprint,
    pub obj_footprint: RectangleFootprint,
    pub samples: u64,
    pub sampler: SeededSampler,
    pub gradient_step: f64,
}

impl McsPoc {
    pub const DEFAULT_GRADIENT_STEP: f64 = 0.1;

    pub fn new(ego_footprint: RectangleFootprint, obj_footprint: RectangleFootprint, samples: u64, seed: u64) -> Self {
        Self { ego_footprint, obj_footprint, samples, sampler: SeededSampler::new(seed), gradient_step: Self::DEFAULT_GRADIENT_STEP }
    }
}

impl PocModel for McsPoc {
    fn poc(&mut self, belief: &GaussianBelief) -> f64 {
        mcs_poc(&self.ego_footprint, &self.obj_footprint, belief, self.samples, &mut self.sampler).estimate
    }

    fn poc_with_gradient(&mut self, belief: &GaussianBelief) -> (f64, [f64; 3]) {
        let shared = self.sampler.clone();
        let p = self.poc(belief);
        let h = self.gradient_step;
        let mut g = [0.0; 3];
        for (i, gi) in g.iter_mut().enumerate() {
            let (mut up, mut dn) = (*belief, *belief);
            up.mu[i] += h;
            dn.mu[i] -= h;
            let at = |b: &GaussianBelief| mcs_poc(&self.ego_footprint, &self.obj_footprint, b, self.samples, &mut shared.clone()).estimate;
            *gi = (at(&up) - at(&dn)) / (2.0 * h);
        }
        (p, g)
    }
}

/// World-frame object belief seen from `ego`: relative mean rotated into the
/// ego frame, heading relative to the ego heading. Standard deviations are
/// kept as they are.
pub fn relative_belief(ego: &Configuration, object: &GaussianBelief) -> GaussianBelief {
    let rel = ego.relative(&Configuration::new(object.mu[0], object.mu[1], object.mu[2]));
    GaussianBelief { mu: [rel.x, rel.y, rel.theta], sigma: object.sigma }
}

struct Rollout {
    states: Vec<Configuration>,
    lambdas: Vec<f64>,
    /// `sqrt(W) e_n` for every stage, concatenated.
    residuals: Vec<f64>,
}

impl Rollout {
    fn cost(&self) -> f64 {
        self.residuals.iter().map(|r| r * r).sum()
    }
}

struct SmpcProblem<'a> {
    z0: Configuration,
    lambda0: f64,
    beliefs: &'a [GaussianBelief],
    path: &'a ReferencePath,
    model: &'a mut dyn PocModel,
    cfg: &'a SmpcConfig,
    lower: Vec<f64>,
    upper: Vec<f64>,
    /// The stage-0 probability does not depend on the inputs.
    poc0: f64,
}

fn inputs_of(x: &[f64]) -> impl Iterator<Item = ControlInput> + '_ {
    x.chunks_exact(2).map(|c| ControlInput { v: c[0], omega: c[1] })
}

impl SmpcProblem<'_> {
    fn rollout(&self, x: &[f64]) -> Rollout {
        let ts = self.cfg.sample_time;
        let (l0, lg) = (self.path.lambda0, self.path.lambda_end());
        let mut z = self.z0;
        let mut lambda = self.lambda0;
        let mut states = Vec::with_capacity(x.len() / 2);
        let mut lambdas = Vec::with_capacity(x.len() / 2);
        let mut residuals = Vec::with_capacity(2 * x.len());
        for u in inputs_of(x) {
            let e = path_error(&z, u.v, self.path, lambda);
            residuals.extend(e.iter().zip(&self.cfg.weights).map(|(e, w)| w.sqrt() * e));
            states.push(z);
            lambdas.push(lambda);
            lambda = advance_progress(lambda, u.v, z.theta, self.path.at(lambda).theta, l0, lg);
            z = unicycle_step(&z, &u, ts);
        }
        Rollout { states, lambdas, residuals }
    }

    fn stage_belief(&self, n: usize, z: &Configuration) -> GaussianBelief {
        relative_belief(z, &self.beliefs[n])
    }
}

impl Problem for SmpcProblem<'_> {
    fn lower(&self) -> &[f64] {
        &self.lower
    }

    fn upper(&self) -> &[f64] {
        &self.upper
    }

    fn residuals(&mut self, x: &[f64]) -> Vec<f64> {
        self.rollout(x).residuals
    }

    fn constraints(&mut self, x: &[f64]) -> Vec<f64> {
        if !self.cfg.constrained() {
            return Vec::new();
        }
        let eps = self.cfg.poc_tolerance;
        let states = self.rollout(x).states;
        let mut g = vec![self.poc0 - eps];
        for (n, z) in states.iter().enumerate().skip(1) {
            let b = self.stage_belief(n, z);
            g.push(self.model.poc(&b) - eps);
        }
        g
    }

    fn constraint_jacobian(&mut self, x: &[f64]) -> (Vec<f64>, Vec<Vec<f64>>) {
        if !self.cfg.constrained() {
            return (Vec::new(), Vec::new());
        }
        let eps = self.cfg.poc_tolerance;
        let ts = self.cfg.sample_time;
        let dim = x.len();
        let inputs: Vec<_> = inputs_of(x).collect();
        let states = self.rollout(x).states;
        // sensitivity of (x, y, theta) of the current stage to every input
        let mut sens = vec![[0.0; 3]; dim];
        let mut g = vec![self.poc0 - eps];
        let mut jac = vec![vec![0.0; dim]];
        for n in 1..states.len() {
            let (z, u) = (states[n - 1], inputs[n - 1]);
            let (s, c) = z.theta.sin_cos();
            for col in sens.iter_mut() {
                col[0] -= ts * u.v * s * col[2];
                col[1] += ts * u.v * c * col[2];
            }
            sens[2 * (n - 1)][0] += ts * c;
            sens[2 * (n - 1)][1] += ts * s;
            sens[2 * (n - 1) + 1][2] += ts;

            let zn = states[n];
            let b = self.stage_belief(n, &zn);
            let (p, gm) = self.model.poc_with_gradient(&b);
            g.push(p - eps);
            let (s, c) = zn.theta.sin_cos();
            let [rx, ry, _] = b.mu;
            let pose = [-c * gm[0] + s * gm[1], -s * gm[0] - c * gm[1], ry * gm[0] - rx * gm[1] - gm[2]];
            jac.push(sens.iter().map(|col| pose[0] * col[0] + pose[1] * col[1] + pose[2] * col[2]).collect());
        }
        (g, jac)
    }
}

/// Initial guesses tried when the warm start ends on an active constraint:
/// swerves to either side and braking.
fn alternative_starts(cfg: &SmpcConfig, v_ref: f64) -> Vec<Vec<ControlInput>> {
    let stages = cfg.horizon + 1;
    let b = &cfg.bounds;
    let v = v_ref.clamp(b.v[0], b.v[1]);
    let swerve = |sign: f64| {
        (0..stages)
            .map(|n| {
                let turn = if 3 * n < stages {
                    0.5 * b.omega[1]
                } else if 3 * n < 2 * stages {
                    0.5 * b.omega[0]
                } else {
                    0.0
                };
                b.clamp(ControlInput { v, omega: sign * turn })
            })
            .collect()
    };
    vec![swerve(1.0), swerve(-1.0), vec![b.clamp(ControlInput { v: b.v[0], omega: 0.0 }); stages]]
}

fn flatten(inputs: &[ControlInput]) -> Vec<f64> {
    inputs.iter().flat_map(|u| [u.v, u.omega]).collect()
}

/// Solves one planning problem from ego state `z` at path progress `lambda`.
/// `beliefs` are world-frame object beliefs for stages `0..=N_P`.
/// `warm_start`, if given, must hold `N_P + 1` inputs.
pub fn solve_smpc(
    z: &Configuration,
    lambda: f64,
    beliefs: &[GaussianBelief],
    path: &ReferencePath,
    model: &mut dyn PocModel,
    cfg: &SmpcConfig,
    warm_start: Option<&[ControlInput]>,
) -> Result<PlanResult> {
    cfg.validate()?;
    let stages = cfg.horizon + 1;
    if beliefs.len() != stages {
        return Err(Error::param("beliefs", format!("expected {stages}, got {}", beliefs.len())));
    }
    beliefs.iter().try_for_each(GaussianBelief::validate)?;
    if !z.is_finite() || !lambda.is_finite() {
        return Err(Error::param("state", "must be finite"));
    }
    let default_start = vec![cfg.bounds.clamp(ControlInput { v: path.v_ref, omega: 0.0 }); stages];
    let first = match warm_start {
        Some(w) if w.len() == stages => w.to_vec(),
        Some(w) => return Err(Error::param("warm_start", format!("expected {stages} inputs, got {}", w.len()))),
        None => default_start.clone(),
    };

    let b = &cfg.bounds;
    let lower = (0..stages).flat_map(|_| [b.v[0], b.omega[0]]).collect();
    let upper = (0..stages).flat_map(|_| [b.v[1], b.omega[1]]).collect();
    let poc0 = if cfg.constrained() { model.poc(&relative_belief(z, &beliefs[0])) } else { 0.0 };
    let mut problem = SmpcProblem { z0: *z, lambda0: lambda, beliefs, path, model, cfg, lower, upper, poc0 };
    let opts = BarrierOptions { max_iterations: cfg.max_iterations, fd_step: FD_STEP, ..BarrierOptions::default() };

    let mut best = solver::minimize(&mut problem, &flatten(&first), &opts);
    let mut iterations = best.iterations;
    if cfg.constrained() {
        let active = |p: &mut SmpcProblem, x: &[f64]| p.constraints(x).iter().any(|g| *g >= -0.5 * cfg.poc_tolerance);
        if best.outcome == Outcome::Infeasible || active(&mut problem, &best.x) {
            let mut starts = alternative_starts(cfg, path.v_ref);
            if warm_start.is_some() {
                starts.insert(0, default_start);
            }
            for start in starts {
                let sol = solver::minimize(&mut problem, &flatten(&start), &opts);
                iterations += sol.iterations;
                let better = match (best.outcome == Outcome::Infeasible, sol.outcome == Outcome::Infeasible) {
                    (true, false) => true,
                    (false, false) => problem.objective(&sol.x) < problem.objective(&best.x),
                    _ => false,
                };
                if better {
                    best = sol;
                }
            }
        }
    }

    let rollout = problem.rollout(&best.x);
    let cost = rollout.cost();
    let poc: Vec<f64> = if cfg.constrained() {
        std::iter::once(problem.poc0)
            .chain(rollout.states.iter().enumerate().skip(1).map(|(n, z)| {
                let b = problem.stage_belief(n, z);
                problem.model.poc(&b)
            }))
            .collect()
    } else {
        rollout.states.iter().enumerate().map(|(n, z)| problem.model.poc(&relative_belief(z, &beliefs[n]))).collect()
    };
    let certified = !cfg.constrained() || poc.iter().all(|&p| p <= cfg.poc_tolerance + CERTIFICATION_SLACK);
    let status = match best.outcome {
        _ if !certified => SolverStatus::Infeasible,
        Outcome::Infeasible => SolverStatus::Infeasible,
        Outcome::Converged => SolverStatus::Optimal,
        Outcome::Unfinished => SolverStatus::FeasibleSuboptimal,
    };
    Ok(PlanResult { inputs: inputs_of(&best.x).collect(), states: rollout.states, lambdas: rollout.lambdas, poc, status, cost, iterations })
}

/// Vehicle driving with constant speed and turn rate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConstantMotion {
    pub initial: Configuration,
    pub v: f64,
    pub omega: f64,
}

impl ConstantMotion {
    pub fn input(&self) -> ControlInput {
        ControlInput { v: self.v, omega: self.omega }
    }

    /// Exact configuration after `t` seconds: a straight line for zero turn
    /// rate, a circular arc otherwise.
    pub fn at(&self, t: f64) -> Configuration {
        let z = self.initial;
        if self.omega == 0.0 {
            let (s, c) = z.theta.sin_cos();
            return Configuration::new(z.x + self.v * t * c, z.y + self.v * t * s, z.theta);
        }
        let theta = z.theta + self.omega * t;
        let k = self.v / self.omega;
        Configuration::new(z.x + k * (theta.sin() - z.theta.sin()), z.y - k * (theta.cos() - z.theta.cos()), theta)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.initial.is_finite() && self.v.is_finite() && self.omega.is_finite()) {
            return Err(Error::param("motion", "initial configuration and inputs must be finite"));
        }
        Ok(())
    }
}

/// World-frame object beliefs for stages `0..=N_P`, predicted from the
/// current object configuration with the object's own inputs.
pub fn horizon_beliefs(object: &Configuration, motion: &ConstantMotion, cfg: &SmpcConfig) -> Vec<GaussianBelief> {
    let mut o = *object;
    (0..=cfg.horizon)
        .map(|n| {
            let b = GaussianBelief { mu: [o.x, o.y, o.theta], sigma: horizon_sigma(cfg.sigma0, cfg.growth, n) };
            o = unicycle_step(&o, &motion.input(), cfg.sample_time);
            b
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: usize,
    pub time: f64,
    pub ego: Configuration,
    /// Input applied at this step.
    pub input: ControlInput,
    pub lambda: f64,
    /// Collision probability at the current configuration.
    pub poc: f64,
    /// Largest certified probability over the plan.
    pub max_poc: f64,
    pub cost: f64,
    pub status: SolverStatus,
    pub object: Configuration,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunLog {
    pub records: Vec<StepRecord>,
}

impl RunLog {
    pub const CSV_HEADER: &'static str = "t,x_e,y_e,theta_e,v_e,omega_e,lambda,poc,cost,status,x_o,y_o,theta_o";

    pub fn infeasible_steps(&self) -> usize {
        self.records.iter().filter(|r| r.status == SolverStatus::Infeasible).count()
    }

    /// Smallest ego-object center distance over the run.
    pub fn min_distance(&self) -> f64 {
        self.records.iter().map(|r| r.ego.distance(&r.object)).fold(f64::INFINITY, f64::min)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from(Self::CSV_HEADER);
        out.push('\n');
        for r in &self.records {
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{},{},{},{},{},{}\n",
                r.time,
                r.ego.x,
                r.ego.y,
                r.ego.theta,
                r.input.v,
                r.input.omega,
                r.lambda,
                r.poc,
                r.cost,
                r.status,
                r.object.x,
                r.object.y,
                r.object.theta
            ));
        }
        out
    }
}

/// Receding-horizon loop: solve, apply the first input, move the object,
/// re-localize on the path. Infeasible steps are logged and the first input
/// of the least-violating plan is applied.
pub fn receding_horizon_run(
    initial: &Configuration,
    path: &ReferencePath,
    object: &ConstantMotion,
    model: &mut dyn PocModel,
    cfg: &SmpcConfig,
    steps: usize,
) -> Result<RunLog> {
    cfg.validate()?;
    let mut z = *initial;
    let mut obj = object.initial;
    let mut lambda = localize_on_path(path, &z);
    let mut warm: Option<Vec<ControlInput>> = None;
    let mut records = Vec::with_capacity(steps);
    for k in 0..steps {
        let beliefs = horizon_beliefs(&obj, object, cfg);
        let plan = solve_smpc(&z, lambda, &beliefs, path, model, cfg, warm.as_deref())?;
        let u = plan.inputs[0];
        records.push(StepRecord {
            step: k,
            time: k as f64 * cfg.sample_time,
            ego: z,
            input: u,
            lambda,
            poc: plan.poc[0],
            max_poc: plan.max_poc(),
            cost: plan.cost,
            status: plan.status,
            object: obj,
        });
        let mut next = plan.inputs[1..].to_vec();
        next.push(*plan.inputs.last().unwrap());
        warm = Some(next);
        z = unicycle_step(&z, &u, cfg.sample_time);
        z.theta = wrap_to_pi(z.theta);
        obj = unicycle_step(&obj, &object.input(), cfg.sample_time);
        lambda = localize_on_path(path, &z);
    }
    Ok(RunLog { records })
}

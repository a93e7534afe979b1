//! Collision probability for Gaussian object beliefs.
//!
//! The heading integral is solved in closed form with the error function; the
//! remaining polar position integral is a trapezoidal sum over the
//! precomputed grid. Initialization ([`PocEstimator::new`]) does all the
//! geometry once; [`PocEstimator::estimate`] is a tight loop over the grid.

use std::f64::consts::{FRAC_1_SQRT_2, PI, TAU};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{cover_rectangle, max_collision_distance, wrap_to_tau, AngleInterval, CircleCover, RectangleFootprint};
use crate::interval::{build_grid, disjoint_intervals, DisjointIntervalSet, IntegrationGrid};

/// Default integration samples per axis.
pub const DEFAULT_GRID_SAMPLES: usize = 20;

/// Grid points whose position-density exponent falls below this are skipped;
/// each skipped point contributes less than `exp(-40)` times the density
/// prefactor.
const NEGLIGIBLE_EXPONENT: f64 = -40.0;

/// `erf` is exactly `±1.0` in double precision beyond this magnitude.
const ERF_SATURATION: f64 = 6.0;

/// Independent Gaussian belief over the object configuration, in the ego frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaussianBelief {
    /// `[x, y, theta]` means.
    pub mu: [f64; 3],
    /// `[x, y, theta]` standard deviations, all strictly positive.
    pub sigma: [f64; 3],
}

impl GaussianBelief {
    pub fn new(mu: [f64; 3], sigma: [f64; 3]) -> Result<Self> {
        const NAMES: [&str; 3] = ["sigma.x", "sigma.y", "sigma.theta"];
        const MU_NAMES: [&str; 3] = ["mu.x", "mu.y", "mu.theta"];
        for i in 0..3 {
            if !mu[i].is_finite() {
                return Err(Error::param(MU_NAMES[i], "must be finite"));
            }
            if !(sigma[i].is_finite() && sigma[i] > 0.0) {
                return Err(Error::param(NAMES[i], format!("must be finite and > 0, got {}", sigma[i])));
            }
        }
        Ok(Self { mu, sigma })
    }

    pub fn validate(&self) -> Result<()> {
        Self::new(self.mu, self.sigma).map(|_| ())
    }
}

/// Number of `2π` copies kept on each side when folding the heading Gaussian.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct HeadingTruncation {
    pub n_beta: u32,
}

impl HeadingTruncation {
    pub fn new(n_beta: u32) -> Result<Self> {
        if n_beta < 3 {
            return Err(Error::param("n_beta", format!("must be at least 3, got {n_beta}")));
        }
        Ok(Self { n_beta })
    }
}

impl Default for HeadingTruncation {
    fn default() -> Self {
        Self { n_beta: 3 }
    }
}

/// Truncated wrapped-Gaussian density of the heading.
pub fn wrapped_gaussian_pdf(theta: f64, mu: f64, sigma: f64, trunc: HeadingTruncation) -> f64 {
    let n = trunc.n_beta as i64;
    let norm = 1.0 / ((TAU).sqrt() * sigma);
    let mut sum = 0.0;
    for beta in -n..=n {
        let z = (theta + TAU * beta as f64 - mu) / sigma;
        sum += (-0.5 * z * z).exp();
    }
    norm * sum
}

#[inline]
fn erf(x: f64) -> f64 {
    if x >= ERF_SATURATION {
        1.0
    } else if x <= -ERF_SATURATION {
        -1.0
    } else {
        libm::erf(x)
    }
}

/// Wrapped heading CDF kernel for one belief: `cdf(b) - cdf(a)` is the
/// probability of `[a, b]` for `0 <= a <= b <= 2π`.
#[derive(Debug, Clone)]
struct HeadingKernel {
    inv_scale: f64,
    /// `(2πβ - mu) * inv_scale`, ascending in β.
    offsets: Vec<f64>,
    at_zero: f64,
    at_tau: f64,
}

impl HeadingKernel {
    fn new(mu_theta: f64, sigma_theta: f64, trunc: HeadingTruncation) -> Self {
        let mu = wrap_to_tau(mu_theta);
        let inv_scale = FRAC_1_SQRT_2 / sigma_theta;
        let n = trunc.n_beta as i64;
        let offsets = (-n..=n).map(|beta| (TAU * beta as f64 - mu) * inv_scale).collect();
        let mut k = Self { inv_scale, offsets, at_zero: 0.0, at_tau: 0.0 };
        k.at_zero = k.cdf(0.0);
        k.at_tau = k.cdf(TAU);
        k
    }

    /// Half the summed error functions at `theta`, in ascending β order.
    #[inline]
    fn cdf(&self, theta: f64) -> f64 {
        let t = theta * self.inv_scale;
        let mut sum = 0.0;
        for &off in &self.offsets {
            sum += erf(t + off);
        }
        0.5 * sum
    }

    /// Truncated wrapped density at `theta`, times `sqrt(π) / inv_scale`.
    #[inline]
    fn scaled_pdf(&self, theta: f64) -> f64 {
        let t = theta * self.inv_scale;
        let mut sum = 0.0;
        for &off in &self.offsets {
            let x = t + off;
            if x.abs() < ERF_SATURATION {
                sum += (-x * x).exp();
            }
        }
        sum
    }

    /// Derivative of [`probability`](Self::probability) with respect to the
    /// heading mean.
    #[inline]
    fn probability_dmu(&self, iv: &AngleInterval) -> f64 {
        let g = |a: f64, b: f64| self.scaled_pdf(a) - self.scaled_pdf(b);
        let d = match *iv {
            AngleInterval::Empty => 0.0,
            AngleInterval::Full => g(0.0, TAU),
            AngleInterval::Arc { start, width } => {
                let end = start + width;
                if end > TAU {
                    g(start, TAU) + g(0.0, end - TAU)
                } else {
                    g(start, end)
                }
            }
        };
        d * self.inv_scale / PI.sqrt()
    }

    #[inline]
    fn probability(&self, iv: &AngleInterval) -> f64 {
        match *iv {
            AngleInterval::Empty => 0.0,
            AngleInterval::Full => self.at_tau - self.at_zero,
            AngleInterval::Arc { start, width } => {
                let end = start + width;
                if end > TAU {
                    (self.at_tau - self.cdf(start)) + (self.cdf(end - TAU) - self.at_zero)
                } else {
                    self.cdf(end) - self.cdf(start)
                }
            }
        }
    }
}

/// Probability that the heading falls in a set of pairwise-disjoint arcs.
pub fn heading_interval_probability(set: &[AngleInterval], mu_theta: f64, sigma_theta: f64, trunc: HeadingTruncation) -> f64 {
    let k = HeadingKernel::new(mu_theta, sigma_theta, trunc);
    set.iter().map(|iv| k.probability(iv)).sum::<f64>().clamp(0.0, 1.0)
}

/// Density of the object position in polar coordinates, including the
/// Jacobian `rho`.
pub fn polar_position_density(phi: f64, rho: f64, belief: &GaussianBelief) -> f64 {
    let [mx, my, _] = belief.mu;
    let [sx, sy, _] = belief.sigma;
    let (s, c) = phi.sin_cos();
    let dx = rho * c - mx;
    let dy = rho * s - my;
    rho / (TAU * sx * sy) * (-(dx * dx) / (2.0 * sx * sx) - (dy * dy) / (2.0 * sy * sy)).exp()
}

/// Quadrature node of the frozen evaluation plan.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Node {
    x: f64,
    y: f64,
    /// `rho` times the trapezoid weight.
    rho_weight: f64,
    m: u32,
    first: u32,
    end: u32,
}

/// Frozen geometry for one (ego, object) footprint pair at one grid size.
#[derive(Debug, Clone, PartialEq)]
pub struct PocEstimator {
    pub ego_footprint: RectangleFootprint,
    pub obj_footprint: RectangleFootprint,
    pub ego_cover: CircleCover,
    pub obj_cover: CircleCover,
    pub rho_bar: f64,
    pub grid: IntegrationGrid,
    pub intervals: DisjointIntervalSet,
    nodes: Vec<Node>,
    /// `nodes[rows[j]..rows[j + 1]]` lie on azimuth row `j`, ascending in `m`.
    rows: Vec<u32>,
    arcs: Vec<AngleInterval>,
}

/// Nodes of one row with `m` in `lo..=hi`.
fn row_span(nodes: &[Node], lo: u32, hi: u32) -> &[Node] {
    let a = nodes.partition_point(|n| n.m < lo);
    let b = nodes.partition_point(|n| n.m <= hi);
    &nodes[a..b.max(a)]
}

impl PocEstimator {
    pub fn new(ego_fp: &RectangleFootprint, obj_fp: &RectangleFootprint, n_ego: usize, n_obj: usize, n_samples: usize) -> Result<Self> {
        let ego_cover = cover_rectangle(ego_fp, n_ego)?;
        let obj_cover = cover_rectangle(obj_fp, n_obj)?;
        let rho_bar = max_collision_distance(&ego_cover, &obj_cover);
        let grid = build_grid(rho_bar, n_samples)?;
        let intervals = disjoint_intervals(&ego_cover, &obj_cover, &grid);
        Ok(Self::assemble(*ego_fp, *obj_fp, ego_cover, obj_cover, grid, intervals))
    }

    fn assemble(
        ego_footprint: RectangleFootprint,
        obj_footprint: RectangleFootprint,
        ego_cover: CircleCover,
        obj_cover: CircleCover,
        grid: IntegrationGrid,
        intervals: DisjointIntervalSet,
    ) -> Self {
        let n = grid.n_samples;
        let mut nodes = Vec::with_capacity((n - 1) * (n - 1));
        let mut arcs = Vec::new();
        let mut rows = Vec::with_capacity(n);
        // phi = 2π duplicates phi = 0, so the two half-weighted edge rows are
        // folded into one full-weight row. rho = 0 has zero density.
        for j in 0..n - 1 {
            rows.push(nodes.len() as u32);
            let (s, c) = grid.phi(j).sin_cos();
            for m in 1..n {
                let point = intervals.at(grid.index(j, m));
                if point.is_empty() {
                    continue;
                }
                let rho = grid.rho(m);
                let w = if m + 1 == n { 0.5 } else { 1.0 };
                let first = arcs.len() as u32;
                arcs.extend_from_slice(point);
                nodes.push(Node { x: rho * c, y: rho * s, rho_weight: rho * w, m: m as u32, first, end: arcs.len() as u32 });
            }
        }
        rows.push(nodes.len() as u32);
        Self { ego_footprint, obj_footprint, ego_cover, obj_cover, rho_bar: grid.rho_bar, grid, intervals, nodes, rows, arcs }
    }

    /// Calls `f(node, exponent)` for every node whose position-density
    /// exponent is not negligible. Only the polar window around the mean that
    /// can hold such nodes is scanned.
    fn for_each_relevant(&self, belief: &GaussianBelief, mut f: impl FnMut(&Node, f64)) {
        let [mx, my, _] = belief.mu;
        let [sx, sy, _] = belief.sigma;
        let ax = -0.5 / (sx * sx);
        let ay = -0.5 / (sy * sy);
        let mut visit = |row: &[Node]| {
            for node in row {
                let dx = node.x - mx;
                let dy = node.y - my;
                let exponent = ax * dx * dx + ay * dy * dy;
                if exponent >= NEGLIGIBLE_EXPONENT {
                    f(node, exponent);
                }
            }
        };
        let n_rows = self.rows.len() - 1;
        let row = |j: usize| &self.nodes[self.rows[j] as usize..self.rows[j + 1] as usize];
        // no node farther than `reach` from the mean passes the cutoff
        let reach = (-2.0 * NEGLIGIBLE_EXPONENT).sqrt() * sx.max(sy);
        let r0 = mx.hypot(my);
        if r0 - reach > self.rho_bar {
            return;
        }
        let (d_phi, d_rho) = (self.grid.delta_phi, self.grid.delta_rho);
        let m_lo = ((r0 - reach) / d_rho).floor().max(1.0) as u32;
        let m_hi = ((r0 + reach) / d_rho).ceil().min(u32::MAX as f64) as u32;
        if r0 <= reach {
            (0..n_rows).for_each(|j| visit(row_span(row(j), m_lo, m_hi)));
            return;
        }
        let half = (reach / r0).asin();
        let phi0 = wrap_to_tau(my.atan2(mx));
        let j_lo = ((phi0 - half) / d_phi).floor() as i64 - 1;
        let j_hi = ((phi0 + half) / d_phi).ceil() as i64 + 1;
        if j_hi - j_lo + 1 >= n_rows as i64 {
            (0..n_rows).for_each(|j| visit(row_span(row(j), m_lo, m_hi)));
        } else {
            (j_lo..=j_hi).for_each(|j| visit(row_span(row(j.rem_euclid(n_rows as i64) as usize), m_lo, m_hi)));
        }
    }

    /// Over-approximate collision probability for `belief` (ego frame).
    pub fn estimate(&self, belief: &GaussianBelief, trunc: HeadingTruncation) -> f64 {
        let kernel = HeadingKernel::new(belief.mu[2], belief.sigma[2], trunc);
        let mut sum = 0.0;
        self.for_each_relevant(belief, |node, exponent| {
            let mut p_theta = 0.0;
            for iv in &self.arcs[node.first as usize..node.end as usize] {
                p_theta += kernel.probability(iv);
            }
            sum += node.rho_weight * exponent.exp() * p_theta;
        });
        (sum * self.scale(belief)).clamp(0.0, 1.0)
    }

    /// [`estimate`](Self::estimate) together with its exact derivative with
    /// respect to `belief.mu`. Where the estimate is clamped the derivative
    /// is zero.
    pub fn estimate_with_gradient(&self, belief: &GaussianBelief, trunc: HeadingTruncation) -> (f64, [f64; 3]) {
        let [mx, my, _] = belief.mu;
        let [sx, sy, _] = belief.sigma;
        let kernel = HeadingKernel::new(belief.mu[2], belief.sigma[2], trunc);
        let (bx, by) = (1.0 / (sx * sx), 1.0 / (sy * sy));
        let mut acc = [0.0; 4];
        self.for_each_relevant(belief, |node, exponent| {
            let mut p_theta = 0.0;
            let mut dp = 0.0;
            for iv in &self.arcs[node.first as usize..node.end as usize] {
                p_theta += kernel.probability(iv);
                dp += kernel.probability_dmu(iv);
            }
            let w = node.rho_weight * exponent.exp();
            acc[0] += w * p_theta;
            acc[1] += w * p_theta * (node.x - mx) * bx;
            acc[2] += w * p_theta * (node.y - my) * by;
            acc[3] += w * dp;
        });
        let scale = self.scale(belief);
        let value = acc[0] * scale;
        if !(0.0..=1.0).contains(&value) {
            return (value.clamp(0.0, 1.0), [0.0; 3]);
        }
        (value, [acc[1] * scale, acc[2] * scale, acc[3] * scale])
    }

    fn scale(&self, belief: &GaussianBelief) -> f64 {
        self.grid.delta_phi * self.grid.delta_rho / (TAU * belief.sigma[0] * belief.sigma[1])
    }

    /// Same quantity as [`estimate`](Self::estimate), evaluated directly from
    /// the grid definition with every point visited and every corner weighted
    /// separately. Slow; used to cross-check the frozen evaluation plan.
    pub fn estimate_reference(&self, belief: &GaussianBelief, trunc: HeadingTruncation) -> f64 {
        let n = self.grid.n_samples;
        let mut sum = 0.0;
        for j in 0..n {
            for m in 0..n {
                let (phi, rho) = (self.grid.phi(j), self.grid.rho(m));
                let p = heading_interval_probability(self.intervals.at(self.grid.index(j, m)), belief.mu[2], belief.sigma[2], trunc);
                let mut term = polar_position_density(phi, rho, belief) * p;
                if j == 0 || j + 1 == n {
                    term *= 0.5;
                }
                if m == 0 || m + 1 == n {
                    term *= 0.5;
                }
                sum += term;
            }
        }
        (sum * self.grid.delta_phi * self.grid.delta_rho).clamp(0.0, 1.0)
    }

    pub fn cache_key(&self) -> CacheKey {
        CacheKey {
            ego_length: self.ego_footprint.length,
            ego_width: self.ego_footprint.width,
            obj_length: self.obj_footprint.length,
            obj_width: self.obj_footprint.width,
            n_ego: self.ego_cover.n_circles,
            n_obj: self.obj_cover.n_circles,
            n_samples: self.grid.n_samples,
        }
    }

    pub fn to_cache(&self) -> IntervalCache {
        IntervalCache { schema_version: CACHE_SCHEMA_VERSION, key: self.cache_key(), intervals: self.intervals.clone() }
    }

    /// Rebuilds an estimator from a cached interval set without recomputing
    /// the intervals.
    pub fn from_cache(cache: IntervalCache) -> Result<Self> {
        if cache.schema_version != CACHE_SCHEMA_VERSION {
            return Err(Error::Serialization(format!("unsupported cache schema {}", cache.schema_version)));
        }
        let k = &cache.key;
        let ego_fp = RectangleFootprint::new(k.ego_length, k.ego_width)?;
        let obj_fp = RectangleFootprint::new(k.obj_length, k.obj_width)?;
        let ego_cover = cover_rectangle(&ego_fp, k.n_ego)?;
        let obj_cover = cover_rectangle(&obj_fp, k.n_obj)?;
        let grid = build_grid(max_collision_distance(&ego_cover, &obj_cover), k.n_samples)?;
        if cache.intervals.n_points() != grid.len() {
            return Err(Error::Serialization(format!("cache holds {} points, grid needs {}", cache.intervals.n_points(), grid.len())));
        }
        Ok(Self::assemble(ego_fp, obj_fp, ego_cover, obj_cover, grid, cache.intervals))
    }

    pub fn save_cache(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string(&self.to_cache())?;
        std::fs::write(path, text).map_err(|e| Error::Serialization(format!("{}: {e}", path.display())))
    }

    pub fn load_cache(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Serialization(format!("{}: {e}", path.display())))?;
        Self::from_cache(serde_json::from_str(&text)?)
    }
}

pub const CACHE_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CacheKey {
    pub ego_length: f64,
    pub ego_width: f64,
    pub obj_length: f64,
    pub obj_width: f64,
    pub n_ego: usize,
    pub n_obj: usize,
    pub n_samples: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntervalCache {
    pub schema_version: u32,
    pub key: CacheKey,
    pub intervals: DisjointIntervalSet,
}

/// Default ratio between the grid spacing and the smallest position standard
/// deviation that [`AdaptivePocEstimator`] aims for.
pub const ADAPTIVE_RESOLUTION: f64 = 0.5;

/// Panel-count ratio between consecutive adaptive levels.
const LEVEL_GROWTH: f64 = 1.25;

/// A ladder of estimators at increasing grid size. Each belief is evaluated
/// on the coarsest grid whose outer arc step is at most `resolution` times
/// its smallest position standard deviation, so concentrated beliefs are
/// resolved without slowing down wide ones.
#[derive(Debug, Clone, PartialEq)]
pub struct AdaptivePocEstimator {
    levels: Vec<PocEstimator>,
    resolution: f64,
}

impl AdaptivePocEstimator {
    /// Builds levels from [`DEFAULT_GRID_SAMPLES`] up to the grid that
    /// resolves `min_sigma` at [`ADAPTIVE_RESOLUTION`].
    pub fn new(ego_fp: &RectangleFootprint, obj_fp: &RectangleFootprint, n_ego: usize, n_obj: usize, min_sigma: f64) -> Result<Self> {
        Self::with_resolution(ego_fp, obj_fp, n_ego, n_obj, min_sigma, ADAPTIVE_RESOLUTION)
    }

    pub fn with_resolution(
        ego_fp: &RectangleFootprint,
        obj_fp: &RectangleFootprint,
        n_ego: usize,
        n_obj: usize,
        min_sigma: f64,
        resolution: f64,
    ) -> Result<Self> {
        if !(min_sigma.is_finite() && min_sigma > 0.0) {
            return Err(Error::param("min_sigma", format!("must be finite and > 0, got {min_sigma}")));
        }
        if !(resolution.is_finite() && resolution > 0.0) {
            return Err(Error::param("resolution", format!("must be finite and > 0, got {resolution}")));
        }
        let rho_bar = max_collision_distance(&cover_rectangle(ego_fp, n_ego)?, &cover_rectangle(obj_fp, n_obj)?);
        let finest = grid_samples_for_resolution(rho_bar, resolution * min_sigma);
        let mut sizes = vec![DEFAULT_GRID_SAMPLES];
        while *sizes.last().unwrap() < finest {
            let panels = (sizes.last().unwrap() - 1) as f64 * LEVEL_GROWTH;
            sizes.push((panels.ceil() as usize + 1).min(finest));
        }
        let levels = sizes.into_iter().map(|n| PocEstimator::new(ego_fp, obj_fp, n_ego, n_obj, n)).collect::<Result<_>>()?;
        Ok(Self { levels, resolution })
    }

    pub fn levels(&self) -> &[PocEstimator] {
        &self.levels
    }

    pub fn resolution(&self) -> f64 {
        self.resolution
    }

    pub fn coarsest(&self) -> &PocEstimator {
        &self.levels[0]
    }

    /// Level used for `belief`.
    pub fn level_for(&self, belief: &GaussianBelief) -> &PocEstimator {
        let target = self.resolution * belief.sigma[0].min(belief.sigma[1]);
        self.levels
            .iter()
            .find(|e| TAU * e.rho_bar / (e.grid.n_samples - 1) as f64 <= target)
            .unwrap_or_else(|| self.levels.last().unwrap())
    }

    pub fn estimate(&self, belief: &GaussianBelief, trunc: HeadingTruncation) -> f64 {
        self.level_for(belief).estimate(belief, trunc)
    }

    pub fn estimate_with_gradient(&self, belief: &GaussianBelief, trunc: HeadingTruncation) -> (f64, [f64; 3]) {
        self.level_for(belief).estimate_with_gradient(belief, trunc)
    }
}

pub fn init_estimator(
    ego_fp: &RectangleFootprint,
    obj_fp: &RectangleFootprint,
    n_ego: usize,
    n_obj: usize,
    n_samples: usize,
) -> Result<PocEstimator> {
    PocEstimator::new(ego_fp, obj_fp, n_ego, n_obj, n_samples)
}

pub fn estimate_poc(est: &PocEstimator, belief: &GaussianBelief, trunc: HeadingTruncation) -> f64 {
    est.estimate(belief, trunc)
}

/// Smallest grid size for which both the radial step and the outer arc step
/// are at most `resolution`.
pub fn grid_samples_for_resolution(rho_bar: f64, resolution: f64) -> usize {
    let panels = (rho_bar.max(PI.recip()) * TAU / resolution).ceil().max(1.0);
    DEFAULT_GRID_SAMPLES.max(panels as usize + 1)
}

//! Monte Carlo collision probability on the exact rectangles.
//!
//! This is the ground truth the analytic estimator is validated against, and
//! the sampling baseline the planner can be run with.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::geometry::{wrap_to_tau, CircleCover, Configuration, RectangleFootprint};
use crate::poc::GaussianBelief;

/// Seeded source of independent sample streams. Every call to
/// [`next_stream`](Self::next_stream) hands out a fresh ChaCha stream, so a
/// sequence of estimates is reproducible from the seed alone.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SeededSampler {
    seed: u64,
    next: u64,
}

impl SeededSampler {
    pub fn new(seed: u64) -> Self {
        Self { seed, next: 0 }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Generator for stream `index`, independent of the sampler's counter.
    pub fn stream(&self, index: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(index);
        rng
    }

    pub fn next_stream(&mut self) -> ChaCha8Rng {
        let rng = self.stream(self.next);
        self.next += 1;
        rng
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McsResult {
    pub estimate: f64,
    pub n_samples: u64,
    pub std_error: f64,
    pub seed: u64,
}

impl McsResult {
    fn from_count(hits: u64, n: u64, seed: u64) -> Self {
        let p = hits as f64 / n as f64;
        Self { estimate: p, n_samples: n, std_error: (p * (1.0 - p) / n as f64).sqrt(), seed }
    }
}

/// Separating-axis test between the ego rectangle at the origin (heading 0)
/// and the object rectangle at `obj_cfg`. Touching counts as intersecting.
pub fn rectangles_intersect(ego_fp: &RectangleFootprint, obj_fp: &RectangleFootprint, obj_cfg: &Configuration) -> bool {
    let (s, c) = obj_cfg.theta.sin_cos();
    let (x, y) = (obj_cfg.x, obj_cfg.y);
    let (el, ew) = (0.5 * ego_fp.length, 0.5 * ego_fp.width);
    let (ol, ow) = (0.5 * obj_fp.length, 0.5 * obj_fp.width);
    let (ac, as_) = (c.abs(), s.abs());
    // ego axes
    if x.abs() > el + ol * ac + ow * as_ {
        return false;
    }
    if y.abs() > ew + ol * as_ + ow * ac {
        return false;
    }
    // object axes
    if (x * c + y * s).abs() > ol + el * ac + ew * as_ {
        return false;
    }
    if (-x * s + y * c).abs() > ow + el * as_ + ew * ac {
        return false;
    }
    true
}

/// Whether any circle of `ego` (at the origin) touches any circle of `obj`
/// placed at `obj_cfg`.
pub fn circle_covers_intersect(ego: &CircleCover, obj: &CircleCover, obj_cfg: &Configuration) -> bool {
    let joint = ego.radius + obj.radius;
    let joint2 = joint * joint;
    let (s, c) = obj_cfg.theta.sin_cos();
    obj.offsets.iter().any(|&lo| {
        let ox = obj_cfg.x + lo * c;
        let oy = obj_cfg.y + lo * s;
        ego.offsets.iter().any(|&le| {
            let dx = ox - le;
            dx * dx + oy * oy <= joint2
        })
    })
}

fn draw(rng: &mut ChaCha8Rng, belief: &GaussianBelief) -> Configuration {
    let [mx, my, mt] = belief.mu;
    let [sx, sy, st] = belief.sigma;
    let zx: f64 = StandardNormal.sample(rng);
    let zy: f64 = StandardNormal.sample(rng);
    let zt: f64 = StandardNormal.sample(rng);
    Configuration { x: mx + sx * zx, y: my + sy * zy, theta: wrap_to_tau(mt + st * zt) }
}

fn count_hits(n: u64, rng: &mut ChaCha8Rng, belief: &GaussianBelief, mut hit: impl FnMut(&Configuration) -> bool) -> u64 {
    let mut hits = 0;
    for _ in 0..n {
        if hit(&draw(rng, belief)) {
            hits += 1;
        }
    }
    hits
}

/// Collision probability of the exact rectangles, from `n` samples of the
/// sampler's next stream.
pub fn mcs_poc(
    ego_fp: &RectangleFootprint,
    obj_fp: &RectangleFootprint,
    belief: &GaussianBelief,
    n: u64,
    sampler: &mut SeededSampler,
) -> McsResult {
    assert!(n >= 1, "sample count must be positive");
    let reach = ego_fp.half_diagonal() + obj_fp.half_diagonal();
    let reach2 = reach * reach;
    let mut rng = sampler.next_stream();
    let hits = count_hits(n, &mut rng, belief, |cfg| cfg.x * cfg.x + cfg.y * cfg.y <= reach2 && rectangles_intersect(ego_fp, obj_fp, cfg));
    McsResult::from_count(hits, n, sampler.seed())
}

/// Collision probability of the two circle covers, sampled the same way.
pub fn mcs_poc_circles(ego: &CircleCover, obj: &CircleCover, belief: &GaussianBelief, n: u64, sampler: &mut SeededSampler) -> McsResult {
    assert!(n >= 1, "sample count must be positive");
    let mut rng = sampler.next_stream();
    let hits = count_hits(n, &mut rng, belief, |cfg| circle_covers_intersect(ego, obj, cfg));
    McsResult::from_count(hits, n, sampler.seed())
}

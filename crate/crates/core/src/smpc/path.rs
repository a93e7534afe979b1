//! Reference path, progress and tracking error.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{wrap_to_pi, Configuration};

/// Sampled regular curve `y_P(λ)` at uniform spacing in `λ`.
///
/// The progress update adds `v cos(Δθ)` per planning step, so one unit of
/// `λ` is the distance covered in one step at unit speed: arc length is
/// `λ * sample_time`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferencePath {
    pub lambda0: f64,
    pub lambda_step: f64,
    /// Samples `(x, y, theta)`; `theta` is the tangent angle.
    pub points: Vec<Configuration>,
    pub v_ref: f64,
}

impl ReferencePath {
    /// Builds a path through `xy` (uniform spacing in `λ` assumed) with
    /// tangents from neighbouring samples.
    pub fn from_points(xy: &[[f64; 2]], lambda0: f64, lambda_step: f64, v_ref: f64) -> Result<Self> {
        if xy.len() < 2 {
            return Err(Error::param("path", "needs at least two points"));
        }
        if !(lambda_step.is_finite() && lambda_step > 0.0) {
            return Err(Error::param("path.lambda_step", format!("must be finite and > 0, got {lambda_step}")));
        }
        if !(v_ref.is_finite() && lambda0.is_finite()) {
            return Err(Error::param("path.v_ref", "must be finite"));
        }
        if xy.iter().flatten().any(|c| !c.is_finite()) {
            return Err(Error::param("path", "points must be finite"));
        }
        if xy.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::param("path", "repeated consecutive points"));
        }
        let last = xy.len() - 1;
        let points = (0..xy.len())
            .map(|i| {
                let (a, b) = (xy[i.saturating_sub(1)], xy[(i + 1).min(last)]);
                Configuration::new(xy[i][0], xy[i][1], (b[1] - a[1]).atan2(b[0] - a[0]))
            })
            .collect();
        Ok(Self { lambda0, lambda_step, points, v_ref })
    }

    /// Straight line from `start` along `heading`, `length` meters long,
    /// sampled every `spacing` meters, for planning steps of `sample_time`.
    pub fn straight(start: [f64; 2], heading: f64, length: f64, spacing: f64, sample_time: f64, v_ref: f64) -> Result<Self> {
        if !(length > 0.0 && spacing > 0.0 && sample_time > 0.0) {
            return Err(Error::param("path", "length, spacing and sample time must be > 0"));
        }
        let n = (length / spacing).ceil() as usize;
        let (s, c) = heading.sin_cos();
        let xy: Vec<_> = (0..=n).map(|i| [start[0] + c * spacing * i as f64, start[1] + s * spacing * i as f64]).collect();
        Self::from_points(&xy, 0.0, spacing / sample_time, v_ref)
    }

    pub fn lambda_end(&self) -> f64 {
        self.lambda0 + self.lambda_step * (self.points.len() - 1) as f64
    }

    /// Segment index and fraction for `lambda`, clamped to the domain.
    fn locate(&self, lambda: f64) -> (usize, f64) {
        let u = ((lambda - self.lambda0) / self.lambda_step).clamp(0.0, (self.points.len() - 1) as f64);
        let i = (u.floor() as usize).min(self.points.len() - 2);
        (i, u - i as f64)
    }

    /// `y_P(λ)`, linearly interpolated; the heading is interpolated along
    /// the shorter arc.
    pub fn at(&self, lambda: f64) -> Configuration {
        let (i, t) = self.locate(lambda);
        let (a, b) = (self.points[i], self.points[i + 1]);
        Configuration::new(a.x + t * (b.x - a.x), a.y + t * (b.y - a.y), a.theta + t * wrap_to_pi(b.theta - a.theta))
    }
}

/// Closest point on the sampled path to `cfg` by position; ties go to the
/// smaller `λ`.
pub fn localize_on_path(path: &ReferencePath, cfg: &Configuration) -> f64 {
    let mut best = (f64::INFINITY, path.lambda0);
    for (i, w) in path.points.windows(2).enumerate() {
        let (dx, dy) = (w[1].x - w[0].x, w[1].y - w[0].y);
        let t = (((cfg.x - w[0].x) * dx + (cfg.y - w[0].y) * dy) / (dx * dx + dy * dy)).clamp(0.0, 1.0);
        let d2 = (w[0].x + t * dx - cfg.x).powi(2) + (w[0].y + t * dy - cfg.y).powi(2);
        if d2 < best.0 {
            best = (d2, path.lambda0 + path.lambda_step * (i as f64 + t));
        }
    }
    best.1
}

/// One step of path progress, clipped to `[lambda0, lambda_g]`.
pub fn advance_progress(lambda: f64, v_e: f64, theta_e: f64, theta_p: f64, lambda0: f64, lambda_g: f64) -> f64 {
    (lambda + v_e * (theta_e - theta_p).cos()).clamp(lambda0, lambda_g)
}

/// `(x - x_P, y - y_P, wrap(θ - θ_P), v - v_ref)` at `lambda`.
pub fn path_error(cfg: &Configuration, v_e: f64, path: &ReferencePath, lambda: f64) -> [f64; 4] {
    let p = path.at(lambda);
    [cfg.x - p.x, cfg.y - p.y, wrap_to_pi(cfg.theta - p.theta), v_e - path.v_ref]
}

/// `eᵀ W e` for diagonal `W`.
pub fn stage_cost(e: &[f64; 4], w: &[f64; 4]) -> f64 {
    e.iter().zip(w).map(|(e, w)| w * e * e).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::{FRAC_PI_2, PI, TAU};

    fn line() -> ReferencePath {
        ReferencePath::straight([0.0, 0.0], 0.0, 20.0, 0.5, 0.2, 6.0).unwrap()
    }

    #[test]
    fn rejects_repeated_points() {
        assert!(ReferencePath::from_points(&[[0.0, 0.0], [0.0, 0.0], [1.0, 0.0]], 0.0, 1.0, 1.0).is_err());
        assert!(ReferencePath::from_points(&[[0.0, 0.0]], 0.0, 1.0, 1.0).is_err());
    }

    #[test]
    fn lambda_is_arc_length_over_sample_time() {
        let p = line();
        assert_eq!(p.lambda_step, 2.5);
        assert!((p.at(10.0).x - 2.0).abs() < 1e-12);
        assert_eq!(p.lambda_end(), 100.0);
    }

    #[test]
    fn localize_examples() {
        let p = line();
        assert_eq!(localize_on_path(&p, &Configuration::new(1.5, 0.0, 0.0)), 7.5);
        let lam = localize_on_path(&p, &Configuration::new(3.7, 1.0, 0.0));
        assert!((p.at(lam).x - 3.7).abs() < 1e-12);
        // equidistant from two legs of an L-shaped path
        let l = ReferencePath::from_points(&[[0.0, 0.0], [2.0, 0.0], [2.0, 2.0]], 0.0, 1.0, 1.0).unwrap();
        assert_eq!(localize_on_path(&l, &Configuration::new(1.0, 1.0, 0.0)), 0.5);
        // beyond the ends
        assert_eq!(localize_on_path(&p, &Configuration::new(-3.0, 2.0, 0.0)), 0.0);
        assert_eq!(localize_on_path(&p, &Configuration::new(50.0, 0.0, 0.0)), p.lambda_end());
    }

    #[test]
    fn progress_examples() {
        assert_eq!(advance_progress(3.0, 6.0, 0.4, 0.4, 0.0, 100.0), 9.0);
        assert!((advance_progress(3.0, 6.0, FRAC_PI_2, 0.0, 0.0, 100.0) - 3.0).abs() < 1e-15);
        assert!((advance_progress(0.0, 6.0, 0.1, 0.0, 0.0, 100.0) - 5.970_024_991_668_155).abs() < 1e-12);
        assert_eq!(advance_progress(98.0, 6.0, 0.0, 0.0, 0.0, 100.0), 100.0);
    }

    #[test]
    fn error_and_cost_examples() {
        let p = line();
        assert_eq!(path_error(&Configuration::new(2.0, 0.0, 0.0), 6.0, &p, 10.0), [0.0; 4]);
        assert_eq!(path_error(&Configuration::new(2.0, 1.0, 0.0), 6.0, &p, 10.0), [0.0, 1.0, 0.0, 0.0]);
        assert!(path_error(&Configuration::new(2.0, 0.0, TAU), 6.0, &p, 10.0)[2].abs() < 1e-15);
        assert_eq!(path_error(&Configuration::new(2.0, 0.0, PI), 6.0, &p, 10.0)[2], PI);
        let w = [1.0, 1.0, 10.0, 10.0];
        assert_eq!(stage_cost(&[0.0; 4], &w), 0.0);
        assert_eq!(stage_cost(&[1.0, 0.0, 0.0, 0.0], &w), 1.0);
        assert_eq!(stage_cost(&[0.0, 0.0, 0.0, 1.0], &w), 10.0);
    }

    #[test]
    fn curved_path_tangents() {
        let xy: Vec<_> = (0..=40)
            .map(|i| {
                let a = i as f64 * 0.05;
                [a.cos() * 10.0, a.sin() * 10.0]
            })
            .collect();
        let p = ReferencePath::from_points(&xy, 0.0, 1.0, 1.0).unwrap();
        let q = p.at(20.0);
        assert!((q.theta - (1.0 + FRAC_PI_2)).abs() < 1e-3);
    }
}

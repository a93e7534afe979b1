//! Footprints, multi-circle covers and the offset-circle intersection geometry.
//!
//! All positions are expressed in the ego frame: the ego's geometric center
//! sits at the origin with its longitudinal axis along `+x`.

use std::f64::consts::{PI, TAU};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Smallest enclosing rectangle of a vehicle, `length >= width > 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RectangleFootprint {
    pub length: f64,
    pub width: f64,
}

impl RectangleFootprint {
    pub fn new(length: f64, width: f64) -> Result<Self> {
        if !(length.is_finite() && width.is_finite() && width > 0.0 && length >= width) {
            return Err(Error::InvalidFootprint { length, width });
        }
        Ok(Self { length, width })
    }

    /// Footprint of a standard mid-sized car (4.5 m x 2 m).
    pub fn mid_size_car() -> Self {
        Self { length: 4.5, width: 2.0 }
    }

    pub fn half_diagonal(&self) -> f64 {
        0.5 * self.length.hypot(self.width)
    }

    /// Corners of the footprint placed at `cfg`, counter-clockwise.
    pub fn corners(&self, cfg: &Configuration) -> [[f64; 2]; 4] {
        let (s, c) = cfg.theta.sin_cos();
        let hl = 0.5 * self.length;
        let hw = 0.5 * self.width;
        let local = [[hl, hw], [-hl, hw], [-hl, -hw], [hl, -hw]];
        local.map(|[u, v]| [cfg.x + c * u - s * v, cfg.y + s * u + c * v])
    }
}

/// Planar position and heading. The heading is stored as given and
/// interpreted modulo 2π.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Configuration {
    pub x: f64,
    pub y: f64,
    pub theta: f64,
}

impl Configuration {
    pub const fn new(x: f64, y: f64, theta: f64) -> Self {
        Self { x, y, theta }
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.theta.is_finite()
    }

    /// Expresses `other` in the body frame of `self`.
    pub fn relative(&self, other: &Configuration) -> Configuration {
        let (s, c) = self.theta.sin_cos();
        let dx = other.x - self.x;
        let dy = other.y - self.y;
        Configuration { x: c * dx + s * dy, y: -s * dx + c * dy, theta: other.theta - self.theta }
    }

    pub fn distance(&self, other: &Configuration) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PolarConfiguration {
    /// Polar angle in `[0, 2π)`.
    pub phi: f64,
    pub rho: f64,
    pub theta: f64,
}

/// Maps an angle into `[0, 2π)`.
pub fn wrap_to_tau(angle: f64) -> f64 {
    let r = angle.rem_euclid(TAU);
    // rem_euclid rounds tiny negative inputs up to exactly TAU
    if r >= TAU {
        0.0
    } else {
        r
    }
}

/// Maps an angle into `(-π, π]`.
pub fn wrap_to_pi(angle: f64) -> f64 {
    let r = wrap_to_tau(angle);
    if r > PI {
        r - TAU
    } else {
        r
    }
}

/// `atan2` mapped into `[0, 2π)`, with the origin assigned angle 0.
fn polar_angle(y: f64, x: f64) -> f64 {
    if x == 0.0 && y == 0.0 {
        0.0
    } else {
        wrap_to_tau(y.atan2(x))
    }
}

pub fn to_polar(c: &Configuration) -> PolarConfiguration {
    PolarConfiguration { phi: polar_angle(c.y, c.x), rho: c.x.hypot(c.y), theta: c.theta }
}

pub fn from_polar(p: &PolarConfiguration) -> Configuration {
    let (s, c) = p.phi.sin_cos();
    Configuration { x: p.rho * c, y: p.rho * s, theta: p.theta }
}

/// Polar coordinates of the object center `(x_o, y_o)` seen from an ego
/// circle placed at `ego_offset` on the ego's longitudinal axis.
pub fn shift_polar(x_o: f64, y_o: f64, ego_offset: f64) -> (f64, f64) {
    let dx = x_o - ego_offset;
    (polar_angle(y_o, dx), dx.hypot(y_o))
}

/// Cover of a rectangle by `n_circles` equal circles centered on its
/// longitudinal axis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CircleCover {
    pub n_circles: usize,
    pub radius: f64,
    pub spacing: f64,
    /// Signed longitudinal offsets of the circle centers from the
    /// geometric center, ascending.
    pub offsets: Vec<f64>,
}

impl CircleCover {
    /// Non-negative offsets: one representative per mirrored pair, plus the
    /// center circle for odd counts. Ascending.
    pub fn representative_offsets(&self) -> impl Iterator<Item = f64> + '_ {
        self.offsets[self.n_circles / 2..].iter().copied()
    }

    /// Circle centers of this cover for a vehicle placed at `cfg`.
    pub fn centers(&self, cfg: &Configuration) -> impl Iterator<Item = [f64; 2]> + '_ {
        let (s, c) = cfg.theta.sin_cos();
        let (x, y) = (cfg.x, cfg.y);
        self.offsets.iter().map(move |&d| [x + d * c, y + d * s])
    }

    /// Largest center offset, `d_c (N_c - 1) / 2`.
    pub fn half_span(&self) -> f64 {
        0.5 * self.spacing * (self.n_circles as f64 - 1.0)
    }
}

pub fn cover_rectangle(footprint: &RectangleFootprint, n: usize) -> Result<CircleCover> {
    if n == 0 {
        return Err(Error::ZeroCircles);
    }
    let RectangleFootprint { length, width } = RectangleFootprint::new(footprint.length, footprint.width)?;
    let half_segment = length / (2.0 * n as f64);
    let quarter_w2 = 0.25 * width * width;
    let radius = (half_segment * half_segment + quarter_w2).sqrt();
    let spacing = 2.0 * (radius * radius - quarter_w2).max(0.0).sqrt();
    let mid = (n as f64 + 1.0) / 2.0;
    let offsets = (1..=n).map(|i| (i as f64 - mid) * spacing).collect();
    Ok(CircleCover { n_circles: n, radius, spacing, offsets })
}

/// Center distance beyond which no circle of `ego` can touch a circle of `obj`.
pub fn max_collision_distance(ego: &CircleCover, obj: &CircleCover) -> f64 {
    ego.radius + obj.radius + obj.half_span() + ego.half_span()
}

/// A closed set of headings, read modulo 2π.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum AngleInterval {
    Empty,
    Full,
    /// `[start, start + width]` with `start` in `[0, 2π)` and `width` in
    /// `[0, 2π)`. Wraps past 2π when `start + width > 2π`.
    Arc {
        start: f64,
        width: f64,
    },
}

impl AngleInterval {
    /// Builds `[lower, upper]` from raw (unnormalized) bounds.
    pub fn from_bounds(lower: f64, upper: f64) -> Self {
        let width = upper - lower;
        if width.is_nan() || width < 0.0 {
            AngleInterval::Empty
        } else if width >= TAU {
            AngleInterval::Full
        } else {
            AngleInterval::Arc { start: wrap_to_tau(lower), width }
        }
    }

    pub fn is_empty(&self) -> bool {
        matches!(self, AngleInterval::Empty)
    }

    pub fn is_full(&self) -> bool {
        matches!(self, AngleInterval::Full)
    }

    pub fn measure(&self) -> f64 {
        match *self {
            AngleInterval::Empty => 0.0,
            AngleInterval::Full => TAU,
            AngleInterval::Arc { width, .. } => width,
        }
    }

    pub fn wraps(&self) -> bool {
        matches!(*self, AngleInterval::Arc { start, width } if start + width > TAU)
    }

    pub fn contains(&self, theta: f64) -> bool {
        match *self {
            AngleInterval::Empty => false,
            AngleInterval::Full => true,
            AngleInterval::Arc { start, width } => wrap_to_tau(theta - start) <= width,
        }
    }

    /// Rotates the interval by `delta` radians.
    pub fn shifted(&self, delta: f64) -> Self {
        match *self {
            AngleInterval::Arc { start, width } => AngleInterval::Arc { start: wrap_to_tau(start + delta), width },
            other => other,
        }
    }

    /// Splits into at most two plain intervals `[a, b]` with `0 <= a <= b <= 2π`.
    pub fn split(&self) -> ([f64; 2], Option<[f64; 2]>) {
        match *self {
            AngleInterval::Empty => ([0.0, 0.0], None),
            AngleInterval::Full => ([0.0, TAU], None),
            AngleInterval::Arc { start, width } => {
                let end = start + width;
                if end > TAU {
                    ([start, TAU], Some([0.0, end - TAU]))
                } else {
                    ([start, end], None)
                }
            }
        }
    }
}

/// Headings of an object circle offset by `obj_offset >= 0` along the object
/// axis that bring it within `joint_radius` of an ego circle, when the object
/// center sits at polar `(phi_prime, rho_prime)` relative to that ego circle.
pub fn heading_bounds(phi_prime: f64, rho_prime: f64, obj_offset: f64, joint_radius: f64) -> AngleInterval {
    let (l, r, d) = (obj_offset, joint_radius, rho_prime);
    if l == 0.0 {
        return if d <= r { AngleInterval::Full } else { AngleInterval::Empty };
    }
    if d > r + l {
        return AngleInterval::Empty;
    }
    if l <= r {
        if d <= r - l {
            return AngleInterval::Full;
        }
    } else if d < l - r {
        return AngleInterval::Empty;
    }
    let cos_half = ((l * l + d * d - r * r) / (2.0 * l * d)).clamp(-1.0, 1.0);
    let half = cos_half.acos();
    let center = phi_prime + PI;
    AngleInterval::from_bounds(center - half, center + half)
}

//! Intersection-angle intervals over the polar integration grid.
//!
//! For every grid point `(phi, rho)` of possible object-center positions, the
//! set of object headings that make any ego circle touch any object circle is
//! a finite union of arcs. It depends only on the two covers and the grid, so
//! it is computed once and reused for every belief.

use std::cmp::Ordering;
use std::f64::consts::{PI, TAU};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{heading_bounds, shift_polar, AngleInterval, CircleCover};

/// Uniform `n_samples x n_samples` grid over `[0, 2π] x [0, rho_bar]`, both
/// endpoints included on each axis. Points are ordered row-major with `phi`
/// as the outer index.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntegrationGrid {
    pub n_samples: usize,
    pub delta_phi: f64,
    pub delta_rho: f64,
    pub rho_bar: f64,
}

impl IntegrationGrid {
    pub fn phi(&self, j: usize) -> f64 {
        if j + 1 == self.n_samples {
            TAU
        } else {
            j as f64 * self.delta_phi
        }
    }

    pub fn rho(&self, m: usize) -> f64 {
        if m + 1 == self.n_samples {
            self.rho_bar
        } else {
            m as f64 * self.delta_rho
        }
    }

    pub fn len(&self) -> usize {
        self.n_samples * self.n_samples
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Flat index of the pair `(phi_j, rho_m)`.
    pub fn index(&self, j: usize, m: usize) -> usize {
        m + self.n_samples * j
    }

    /// All `(phi, rho)` pairs in storage order.
    pub fn points(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        let n = self.n_samples;
        (0..n).flat_map(move |j| (0..n).map(move |m| (self.phi(j), self.rho(m))))
    }
}

pub fn build_grid(rho_bar: f64, n_samples: usize) -> Result<IntegrationGrid> {
    if n_samples < 2 {
        return Err(Error::GridTooSmall(n_samples));
    }
    if !(rho_bar.is_finite() && rho_bar >= 0.0) {
        return Err(Error::param("rho_bar", format!("must be finite and non-negative, got {rho_bar}")));
    }
    let panels = (n_samples - 1) as f64;
    Ok(IntegrationGrid { n_samples, delta_phi: TAU / panels, delta_rho: rho_bar / panels, rho_bar })
}

/// One interval per (ego circle, object circle) pair at every grid point.
#[derive(Debug, Clone, PartialEq)]
pub struct IntervalGridMatrix {
    pub pairs_per_point: usize,
    intervals: Vec<AngleInterval>,
}

impl IntervalGridMatrix {
    pub fn n_points(&self) -> usize {
        self.intervals.len() / self.pairs_per_point
    }

    pub fn at(&self, point: usize) -> &[AngleInterval] {
        let k = self.pairs_per_point;
        &self.intervals[point * k..(point + 1) * k]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[AngleInterval]> {
        self.intervals.chunks_exact(self.pairs_per_point)
    }
}

/// Appends the interval of every (ego circle, object circle) pair for an
/// object centered at `(x, y)`. Only non-negative object offsets are
/// evaluated; the circle at `-L_o` reuses the `+L_o` interval rotated by π.
fn push_point_intervals(ego: &CircleCover, obj_offsets: &[f64], joint_radius: f64, x: f64, y: f64, out: &mut Vec<AngleInterval>) {
    for &ego_offset in &ego.offsets {
        let (phi_p, rho_p) = shift_polar(x, y, ego_offset);
        for &l_o in obj_offsets {
            let iv = heading_bounds(phi_p, rho_p, l_o, joint_radius);
            out.push(iv);
            if l_o > 0.0 {
                out.push(iv.shifted(PI));
            }
        }
    }
}

fn for_each_point(ego: &CircleCover, obj: &CircleCover, grid: &IntegrationGrid, mut f: impl FnMut(&[AngleInterval])) {
    let joint_radius = ego.radius + obj.radius;
    let obj_offsets: Vec<f64> = obj.representative_offsets().collect();
    let mut buf = Vec::with_capacity(ego.n_circles * obj.n_circles);
    for (phi, rho) in grid.points() {
        let (s, c) = phi.sin_cos();
        buf.clear();
        push_point_intervals(ego, &obj_offsets, joint_radius, rho * c, rho * s, &mut buf);
        f(&buf);
    }
}

/// Intervals for every ego circle against every object circle at every grid
/// point.
pub fn intersection_intervals(ego: &CircleCover, obj: &CircleCover, grid: &IntegrationGrid) -> IntervalGridMatrix {
    let pairs = ego.n_circles * obj.n_circles;
    let mut intervals = Vec::with_capacity(grid.len() * pairs);
    for_each_point(ego, obj, grid, |row| intervals.extend_from_slice(row));
    IntervalGridMatrix { pairs_per_point: pairs, intervals }
}

/// Equivalent to `sort_disjoint(&intersection_intervals(..))` without
/// materializing the full matrix.
pub fn disjoint_intervals(ego: &CircleCover, obj: &CircleCover, grid: &IntegrationGrid) -> DisjointIntervalSet {
    let mut starts = Vec::with_capacity(grid.len() + 1);
    let mut intervals = Vec::new();
    starts.push(0);
    for_each_point(ego, obj, grid, |row| {
        intervals.extend(merge_intervals(row));
        starts.push(intervals.len());
    });
    DisjointIntervalSet { starts, intervals }
}

/// Per grid point, pairwise-disjoint arcs sorted by start angle. Empty arcs
/// are dropped, so the count varies from point to point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DisjointIntervalSet {
    starts: Vec<usize>,
    intervals: Vec<AngleInterval>,
}

impl DisjointIntervalSet {
    pub fn n_points(&self) -> usize {
        self.starts.len() - 1
    }

    pub fn at(&self, point: usize) -> &[AngleInterval] {
        &self.intervals[self.starts[point]..self.starts[point + 1]]
    }

    pub fn iter(&self) -> impl Iterator<Item = &[AngleInterval]> {
        self.starts.windows(2).map(|w| &self.intervals[w[0]..w[1]])
    }

    pub fn total_intervals(&self) -> usize {
        self.intervals.len()
    }

    pub fn max_per_point(&self) -> usize {
        self.starts.windows(2).map(|w| w[1] - w[0]).max().unwrap_or(0)
    }
}

fn by_bounds(a: &[f64; 2], b: &[f64; 2]) -> Ordering {
    a[0].total_cmp(&b[0]).then(a[1].total_cmp(&b[1]))
}

/// Union of arbitrary arcs as sorted, pairwise-disjoint arcs.
pub fn merge_intervals(source: &[AngleInterval]) -> Vec<AngleInterval> {
    if source.iter().any(AngleInterval::is_full) {
        return vec![AngleInterval::Full];
    }
    let mut segments: Vec<[f64; 2]> = Vec::with_capacity(source.len() + 2);
    for iv in source.iter().filter(|iv| !iv.is_empty()) {
        let (first, second) = iv.split();
        segments.push(first);
        segments.extend(second);
    }
    if segments.is_empty() {
        return Vec::new();
    }
    segments.sort_by(by_bounds);

    let mut merged: Vec<[f64; 2]> = Vec::with_capacity(segments.len());
    for seg in segments {
        match merged.last_mut() {
            Some(cur) if seg[0] <= cur[1] => cur[1] = cur[1].max(seg[1]),
            _ => merged.push(seg),
        }
    }

    let first = merged[0];
    let last = merged[merged.len() - 1];
    if merged.len() == 1 && first[0] <= 0.0 && first[1] >= TAU {
        return vec![AngleInterval::Full];
    }
    let joins_at_zero = merged.len() > 1 && first[0] <= 0.0 && last[1] >= TAU;
    let mut out: Vec<AngleInterval> = Vec::with_capacity(merged.len());
    let inner = if joins_at_zero { &merged[1..merged.len() - 1] } else { &merged[..] };
    out.extend(inner.iter().map(|s| AngleInterval::Arc { start: s[0], width: s[1] - s[0] }));
    if joins_at_zero {
        out.push(AngleInterval::Arc { start: last[0], width: (TAU - last[0]) + first[1] });
    }
    out
}

pub fn sort_disjoint(m: &IntervalGridMatrix) -> DisjointIntervalSet {
    let mut starts = Vec::with_capacity(m.n_points() + 1);
    let mut intervals = Vec::new();
    starts.push(0);
    for row in m.rows() {
        intervals.extend(merge_intervals(row));
        starts.push(intervals.len());
    }
    DisjointIntervalSet { starts, intervals }
}

/// Lebesgue measure on the circle of a union of arcs, computed independently
/// of [`merge_intervals`] by sweeping split segments.
pub fn union_measure(source: &[AngleInterval]) -> f64 {
    if source.iter().any(AngleInterval::is_full) {
        return TAU;
    }
    let mut segs: Vec<[f64; 2]> = Vec::new();
    for iv in source {
        if iv.is_empty() {
            continue;
        }
        let (a, b) = iv.split();
        segs.push(a);
        segs.extend(b);
    }
    segs.sort_by(by_bounds);
    let mut total = 0.0;
    let mut reach = f64::NEG_INFINITY;
    for [a, b] in segs {
        if b > reach {
            total += b - a.max(reach);
            reach = b;
        }
    }
    total
}

//! Conformal barrier metric `g = I / h²` on a uniform grid.
//!
//! Path cost is `∫ ‖ẋ‖ / h`, so the distance to any boundary point diverges.
//! Distance fields solve `|∇d| = 1/h` with first-order fast marching.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::geometry::{AnnulusDomain, Point};

/// Anything with a barrier function whose positive set is the domain.
pub trait Region: Send + Sync + std::fmt::Debug {
    fn barrier(&self, q: Point) -> f64;

    fn contains(&self, q: Point) -> bool {
        self.barrier(q) > 0.0
    }

    fn bounding_box(&self) -> (Point, Point);

    /// Narrowest feature the grid must resolve.
    fn min_feature(&self) -> f64;
}

impl Region for AnnulusDomain {
    fn barrier(&self, q: Point) -> f64 {
        AnnulusDomain::barrier(self, q)
    }

    fn contains(&self, q: Point) -> bool {
        AnnulusDomain::contains(self, q)
    }

    fn bounding_box(&self) -> (Point, Point) {
        AnnulusDomain::bounding_box(self)
    }

    fn min_feature(&self) -> f64 {
        self.min_gap()
    }
}

/// Axis-aligned rectangle with a constant barrier value inside; the flat
/// metric scaled by `1/h`.
#[derive(Debug, Clone, Copy)]
pub struct UniformRect {
    pub lo: Point,
    pub hi: Point,
    pub h: f64,
}

impl Region for UniformRect {
    fn barrier(&self, q: Point) -> f64 {
        if q.x > self.lo.x && q.x < self.hi.x && q.y > self.lo.y && q.y < self.hi.y {
            self.h
        } else {
            -self.h
        }
    }

    fn bounding_box(&self) -> (Point, Point) {
        (self.lo, self.hi)
    }

    fn min_feature(&self) -> f64 {
        (self.hi.x - self.lo.x).min(self.hi.y - self.lo.y)
    }
}

const MIN_INTERIOR_NODES: usize = 16;

/// Cell-centered grid covering a region. Node `(i, j)` sits at
/// `origin + (i Δ, j Δ)` and owns the cell of area `Δ²` around it.
#[derive(Debug, Clone)]
pub struct MetricGrid {
    region: Arc<dyn Region>,
    origin: Point,
    spacing: f64,
    nx: usize,
    ny: usize,
    inside: Vec<bool>,
    h: Vec<f64>,
    h_min: f64,
    max_h: f64,
}

impl MetricGrid {
    /// Classifies nodes and samples the barrier. Requires `Δ` below a quarter
    /// of the region's narrowest feature.
    pub fn build(region: Arc<dyn Region>, spacing: f64) -> Result<Self> {
        if !(spacing.is_finite() && spacing > 0.0) {
            return Err(Error::Resolution(format!(
                "grid spacing must be positive, got {spacing}"
            )));
        }
        let feature = region.min_feature();
        if spacing >= feature / 4.0 {
            return Err(Error::Resolution(format!(
                "grid spacing {spacing} does not resolve the narrowest gap {feature:.4} \
                 (need spacing < {:.4})",
                feature / 4.0
            )));
        }
        let (lo, hi) = region.bounding_box();
        let origin = Point::new(lo.x - 2.0 * spacing, lo.y - 2.0 * spacing);
        let nx = ((hi.x - origin.x) / spacing).ceil() as usize + 3;
        let ny = ((hi.y - origin.y) / spacing).ceil() as usize + 3;
        let mut inside = vec![false; nx * ny];
        let mut h = vec![0.0; nx * ny];
        for j in 0..ny {
            for i in 0..nx {
                let p = Point::new(origin.x + i as f64 * spacing, origin.y + j as f64 * spacing);
                let k = j * nx + i;
                h[k] = region.barrier(p);
                inside[k] = region.contains(p);
            }
        }
        // Nodes with no inside neighbour cannot be reached by any path on the grid.
        let isolated: Vec<usize> = (0..nx * ny)
            .filter(|&k| inside[k])
            .filter(|&k| {
                let (i, j) = (k % nx, k / nx);
                !neighbours8(i, j, nx, ny).any(|n| inside[n])
            })
            .collect();
        for k in isolated {
            inside[k] = false;
        }
        let count = inside.iter().filter(|&&b| b).count();
        if count < MIN_INTERIOR_NODES {
            return Err(Error::Resolution(format!(
                "only {count} interior nodes at spacing {spacing}; need at least {MIN_INTERIOR_NODES}"
            )));
        }
        let max_h = inside
            .iter()
            .zip(&h)
            .filter(|(&b, _)| b)
            .map(|(_, &v)| v)
            .fold(0.0, f64::max);
        Ok(MetricGrid {
            region,
            origin,
            spacing,
            nx,
            ny,
            inside,
            h,
            h_min: spacing / 10.0,
            max_h,
        })
    }

    pub fn region(&self) -> &Arc<dyn Region> {
        &self.region
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    pub fn cell_area(&self) -> f64 {
        self.spacing * self.spacing
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.nx, self.ny)
    }

    pub fn len(&self) -> usize {
        self.nx * self.ny
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn origin(&self) -> Point {
        self.origin
    }

    /// Nodes with `h` below this are impassable.
    pub fn h_min(&self) -> f64 {
        self.h_min
    }

    /// Largest barrier value over interior nodes.
    pub fn max_h(&self) -> f64 {
        self.max_h
    }

    pub fn index(&self, i: usize, j: usize) -> usize {
        j * self.nx + i
    }

    pub fn coords(&self, k: usize) -> (usize, usize) {
        (k % self.nx, k / self.nx)
    }

    pub fn node_point(&self, k: usize) -> Point {
        let (i, j) = self.coords(k);
        Point::new(
            self.origin.x + i as f64 * self.spacing,
            self.origin.y + j as f64 * self.spacing,
        )
    }

    /// Node whose cell contains `p`.
    pub fn node_of(&self, p: Point) -> Option<usize> {
        let fi = ((p.x - self.origin.x) / self.spacing).round();
        let fj = ((p.y - self.origin.y) / self.spacing).round();
        if fi < 0.0 || fj < 0.0 || fi >= self.nx as f64 || fj >= self.ny as f64 {
            return None;
        }
        Some(self.index(fi as usize, fj as usize))
    }

    /// Lower-left node of the bilinear stencil containing `p` and the
    /// fractional offsets inside it.
    fn stencil(&self, p: Point) -> Option<(usize, usize, f64, f64)> {
        let fx = (p.x - self.origin.x) / self.spacing;
        let fy = (p.y - self.origin.y) / self.spacing;
        if !(fx >= 0.0 && fy >= 0.0) {
            return None;
        }
        let i = fx.floor() as usize;
        let j = fy.floor() as usize;
        if i + 1 >= self.nx || j + 1 >= self.ny {
            return None;
        }
        Some((i, j, fx - i as f64, fy - j as f64))
    }

    pub fn is_inside(&self, k: usize) -> bool {
        self.inside[k]
    }

    pub fn passable(&self, k: usize) -> bool {
        self.inside[k] && self.h[k] >= self.h_min
    }

    /// Barrier value sampled at node `k`.
    pub fn h(&self, k: usize) -> f64 {
        self.h[k]
    }

    /// Exact barrier at an arbitrary point.
    pub fn barrier(&self, p: Point) -> f64 {
        self.region.barrier(p)
    }

    pub fn contains(&self, p: Point) -> bool {
        self.region.contains(p)
    }

    pub fn inside_nodes(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.len()).filter(move |&k| self.inside[k])
    }

    pub fn inside_count(&self) -> usize {
        self.inside.iter().filter(|&&b| b).count()
    }

    pub fn neighbours8(&self, k: usize) -> impl Iterator<Item = usize> {
        let (i, j) = self.coords(k);
        neighbours8(i, j, self.nx, self.ny)
    }

    pub fn neighbours4(&self, k: usize) -> impl Iterator<Item = usize> {
        let (i, j) = self.coords(k);
        let (nx, ny) = (self.nx, self.ny);
        [(-1i64, 0i64), (1, 0), (0, -1), (0, 1)]
            .into_iter()
            .filter_map(move |(di, dj)| {
                let a = i as i64 + di;
                let b = j as i64 + dj;
                (a >= 0 && b >= 0 && (a as usize) < nx && (b as usize) < ny)
                    .then(|| b as usize * nx + a as usize)
            })
    }

    /// Metric length of a polyline: segment length over `h` at the midpoint.
    pub fn path_length(&self, path: &[Point]) -> Result<f64> {
        if let Some(index) = path.iter().position(|&p| !self.region.contains(p)) {
            return Err(Error::InvalidPath { index });
        }
        Ok(path
            .windows(2)
            .map(|w| {
                let mid = (w[0] + w[1]) * 0.5;
                w[0].distance(w[1]) / self.region.barrier(mid)
            })
            .sum())
    }

    /// Geodesic distance from `a` to `b`, read off a field sourced at `a`.
    pub fn distance(&self, a: Point, b: Point, restriction: Restriction<'_>) -> Result<f64> {
        let field = distance_field(self, a, restriction)?;
        Ok(field.value_at(self, b))
    }
}

fn neighbours8(i: usize, j: usize, nx: usize, ny: usize) -> impl Iterator<Item = usize> {
    (-1i64..=1)
        .flat_map(|dj| (-1i64..=1).map(move |di| (di, dj)))
        .filter(|&(di, dj)| di != 0 || dj != 0)
        .filter_map(move |(di, dj)| {
            let a = i as i64 + di;
            let b = j as i64 + dj;
            (a >= 0 && b >= 0 && (a as usize) < nx && (b as usize) < ny).then(|| b as usize * nx + a as usize)
        })
}

/// Which passable nodes a distance field may use.
#[derive(Debug, Clone, Copy)]
pub enum Restriction<'a> {
    Whole,
    /// Only the listed node indices (typically one subregion).
    Cells(&'a [usize]),
}

/// Sampled solution of `|∇d| = 1/h` from a point source.
#[derive(Debug, Clone)]
pub struct GeodesicField {
    source: Point,
    h_source: f64,
    // window [i0, i0 + w) × [j0, j0 + hgt) in grid indices
    i0: usize,
    j0: usize,
    w: usize,
    hgt: usize,
    values: Vec<f64>,
    /// Caller-defined stamp (the simulator stores the decomposition epoch).
    pub epoch: u64,
}

#[derive(Clone, Copy, PartialEq)]
struct HeapItem {
    value: f64,
    node: usize,
}

impl Eq for HeapItem {}

impl Ord for HeapItem {
    fn cmp(&self, other: &Self) -> Ordering {
        // min-heap on value, ties by node for determinism
        other
            .value
            .total_cmp(&self.value)
            .then_with(|| other.node.cmp(&self.node))
    }
}

impl PartialOrd for HeapItem {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Radius (in grid spacings) around the source initialized from the local
/// straight-line metric length.
const SOURCE_INIT_RADIUS: f64 = 4.0;

/// First-order fast marching of `|∇d| = 1/h` over permitted nodes.
pub fn distance_field(
    grid: &MetricGrid,
    source: Point,
    restriction: Restriction<'_>,
) -> Result<GeodesicField> {
    let outside = || Error::SourceOutside {
        x: source.x,
        y: source.y,
    };
    if !grid.contains(source) {
        return Err(outside());
    }
    let (nx, ny) = grid.dims();
    let (i0, j0, w, hgt, allowed) = match restriction {
        Restriction::Whole => {
            let allowed: Vec<bool> = (0..grid.len()).map(|k| grid.passable(k)).collect();
            (0, 0, nx, ny, allowed)
        }
        Restriction::Cells(cells) => {
            let mut imin = usize::MAX;
            let mut jmin = usize::MAX;
            let mut imax = 0;
            let mut jmax = 0;
            for &k in cells {
                let (i, j) = grid.coords(k);
                imin = imin.min(i);
                jmin = jmin.min(j);
                imax = imax.max(i);
                jmax = jmax.max(j);
            }
            if cells.is_empty() {
                return Err(outside());
            }
            // one node of padding keeps stencils inside the window
            let i0 = imin.saturating_sub(1);
            let j0 = jmin.saturating_sub(1);
            let w = (imax + 2).min(nx) - i0;
            let hgt = (jmax + 2).min(ny) - j0;
            let mut allowed = vec![false; w * hgt];
            for &k in cells {
                if grid.passable(k) {
                    let (i, j) = grid.coords(k);
                    allowed[(j - j0) * w + (i - i0)] = true;
                }
            }
            (i0, j0, w, hgt, allowed)
        }
    };
    let to_global = |l: usize| grid.index(i0 + l % w, j0 + l / w);
    let to_local = |i: usize, j: usize| -> Option<usize> {
        (i >= i0 && j >= j0 && i < i0 + w && j < j0 + hgt).then(|| (j - j0) * w + (i - i0))
    };

    let h_source = grid.barrier(source);
    let spacing = grid.spacing();
    let mut values = vec![f64::INFINITY; w * hgt];
    let mut known = vec![false; w * hgt];
    let mut heap = BinaryHeap::new();

    // Seed nodes near the source with the straight-line metric length.
    let fi = (source.x - grid.origin().x) / spacing;
    let fj = (source.y - grid.origin().y) / spacing;
    let r = SOURCE_INIT_RADIUS.ceil() as i64 + 1;
    let ci = fi.round() as i64;
    let cj = fj.round() as i64;
    let mut seeded = 0;
    for dj in -r..=r {
        for di in -r..=r {
            let (i, j) = (ci + di, cj + dj);
            if i < 0 || j < 0 {
                continue;
            }
            let Some(l) = to_local(i as usize, j as usize) else {
                continue;
            };
            if !allowed[l] {
                continue;
            }
            let k = to_global(l);
            let p = grid.node_point(k);
            let dist = p.distance(source);
            if dist > SOURCE_INIT_RADIUS * spacing {
                continue;
            }
            values[l] = dist * mean_slowness(grid.h(k), h_source);
            known[l] = true;
            seeded += 1;
        }
    }
    if seeded == 0 {
        return Err(outside());
    }
    for l in 0..w * hgt {
        if known[l] {
            push_neighbours(
                l,
                w,
                hgt,
                &allowed,
                &known,
                &mut values,
                grid,
                &to_global,
                &mut heap,
            );
        }
    }

    while let Some(HeapItem { value, node }) = heap.pop() {
        if known[node] || value > values[node] {
            continue;
        }
        known[node] = true;
        push_neighbours(
            node,
            w,
            hgt,
            &allowed,
            &known,
            &mut values,
            grid,
            &to_global,
            &mut heap,
        );
    }

    Ok(GeodesicField {
        source,
        h_source,
        i0,
        j0,
        w,
        hgt,
        values,
        epoch: 0,
    })
}

#[allow(clippy::too_many_arguments)]
fn push_neighbours(
    l: usize,
    w: usize,
    hgt: usize,
    allowed: &[bool],
    known: &[bool],
    values: &mut [f64],
    grid: &MetricGrid,
    to_global: &impl Fn(usize) -> usize,
    heap: &mut BinaryHeap<HeapItem>,
) {
    let (li, lj) = (l % w, l / w);
    for dj in -1i64..=1 {
        for di in -1i64..=1 {
            if di == 0 && dj == 0 {
                continue;
            }
            let (ni, nj) = (li as i64 + di, lj as i64 + dj);
            if ni < 0 || nj < 0 || ni as usize >= w || nj as usize >= hgt {
                continue;
            }
            let n = nj as usize * w + ni as usize;
            if !allowed[n] || known[n] {
                continue;
            }
            let slow = |m: usize| 1.0 / grid.h(to_global(m));
            let v = update(n, w, hgt, known, values, grid.spacing(), &slow);
            if v < values[n] {
                values[n] = v;
                heap.push(HeapItem { value: v, node: n });
            }
        }
    }
}

/// Upwind solution at local node `n`: the smaller of the axis-aligned and
/// the 45°-rotated stencil solutions. The local cost of a stencil is the
/// step length times the mean slowness `1/h` of the node and the upwind
/// neighbours it uses.
fn update(
    n: usize,
    w: usize,
    hgt: usize,
    known: &[bool],
    values: &[f64],
    spacing: f64,
    slow: &impl Fn(usize) -> f64,
) -> f64 {
    let (i, j) = ((n % w) as i64, (n / w) as i64);
    let at = |di: i64, dj: i64| -> Option<(f64, usize)> {
        let (a, b) = (i + di, j + dj);
        if a < 0 || b < 0 || a as usize >= w || b as usize >= hgt {
            return None;
        }
        let m = b as usize * w + a as usize;
        known[m].then(|| (values[m], m))
    };
    let better = |p: Option<(f64, usize)>, q: Option<(f64, usize)>| match (p, q) {
        (Some(x), Some(y)) => Some(if y.0 < x.0 { y } else { x }),
        (x, None) => x,
        (None, y) => y,
    };
    let s_n = slow(n);
    let solve = |a: Option<(f64, usize)>, b: Option<(f64, usize)>, step: f64| -> f64 {
        let cost = |others: &[usize]| {
            let s_up = others.iter().map(|&m| slow(m)).sum::<f64>() / others.len() as f64;
            step * 0.5 * (s_n + s_up)
        };
        match (a, b) {
            (None, None) => f64::INFINITY,
            (Some((va, ma)), None) | (None, Some((va, ma))) => va + cost(&[ma]),
            (Some((va, ma)), Some((vb, mb))) => {
                let one = if va <= vb {
                    va + cost(&[ma])
                } else {
                    vb + cost(&[mb])
                };
                one.min(solve_pair(va, vb, cost(&[ma, mb])))
            }
        }
    };
    let axis = solve(better(at(-1, 0), at(1, 0)), better(at(0, -1), at(0, 1)), spacing);
    let diag = solve(
        better(at(-1, -1), at(1, 1)),
        better(at(1, -1), at(-1, 1)),
        std::f64::consts::SQRT_2 * spacing,
    );
    axis.min(diag)
}

/// `∫ 1/h` per unit length along a segment over which `h` varies linearly
/// from `a` to `b`.
fn mean_slowness(a: f64, b: f64) -> f64 {
    if (a - b).abs() <= 1e-9 * a.max(b) {
        2.0 / (a + b)
    } else {
        (a / b).ln() / (a - b)
    }
}

/// Two-direction upwind quadratic for orthogonal neighbours at cost `f`.
fn solve_pair(a: f64, b: f64, f: f64) -> f64 {
    let (lo, hi) = if a < b { (a, b) } else { (b, a) };
    if !lo.is_finite() {
        return f64::INFINITY;
    }
    if hi.is_finite() && hi - lo < f {
        let disc = 2.0 * f * f - (hi - lo) * (hi - lo);
        0.5 * (lo + hi + disc.sqrt())
    } else {
        lo + f
    }
}

impl GeodesicField {
    pub fn source(&self) -> Point {
        self.source
    }

    /// Field value at grid node `k`; infinite outside the permitted set.
    pub fn node_value(&self, grid: &MetricGrid, k: usize) -> f64 {
        let (i, j) = grid.coords(k);
        if i < self.i0 || j < self.j0 || i >= self.i0 + self.w || j >= self.j0 + self.hgt {
            return f64::INFINITY;
        }
        self.values[(j - self.j0) * self.w + (i - self.i0)]
    }

    /// Node indices with finite values.
    pub fn reached_nodes<'a>(&'a self, grid: &'a MetricGrid) -> impl Iterator<Item = usize> + 'a {
        (0..self.values.len())
            .filter(move |&l| self.values[l].is_finite())
            .map(move |l| grid.index(self.i0 + l % self.w, self.j0 + l / self.w))
    }

    fn cone(&self, grid: &MetricGrid, p: Point) -> f64 {
        let hp = grid.barrier(p).max(grid.h_min());
        p.distance(self.source) * mean_slowness(hp, self.h_source)
    }

    /// Interpolated distance at `p`: bilinear over the finite corners of the
    /// enclosing cell, blended into the local straight-line cone near the
    /// source so that the value vanishes exactly there.
    pub fn value_at(&self, grid: &MetricGrid, p: Point) -> f64 {
        let bilinear = self.bilinear(grid, p);
        let r = p.distance(self.source) / grid.spacing();
        if r >= 2.0 {
            return bilinear;
        }
        let cone = self.cone(grid, p);
        let near = cone.min(bilinear);
        if r <= 1.0 || !bilinear.is_finite() {
            return near;
        }
        // smoothstep blend over one spacing
        let t = r - 1.0;
        let s = t * t * (3.0 - 2.0 * t);
        s * bilinear + (1.0 - s) * near
    }

    /// Whether every corner of the grid cell enclosing `p` was reached, so
    /// that interpolation there does not extrapolate across a blocked node.
    pub fn covers(&self, grid: &MetricGrid, p: Point) -> bool {
        let Some((i, j, _, _)) = grid.stencil(p) else {
            return false;
        };
        [(i, j), (i + 1, j), (i, j + 1), (i + 1, j + 1)]
            .iter()
            .all(|&(a, b)| self.node_value(grid, grid.index(a, b)).is_finite())
    }

    fn bilinear(&self, grid: &MetricGrid, p: Point) -> f64 {
        let Some((i, j, fx, fy)) = grid.stencil(p) else {
            return f64::INFINITY;
        };
        let corners = [
            (grid.index(i, j), (1.0 - fx) * (1.0 - fy)),
            (grid.index(i + 1, j), fx * (1.0 - fy)),
            (grid.index(i, j + 1), (1.0 - fx) * fy),
            (grid.index(i + 1, j + 1), fx * fy),
        ];
        let vals = corners.map(|(k, wk)| (k, wk, self.node_value(grid, k)));
        if vals.iter().all(|c| c.2.is_finite()) {
            return vals.iter().map(|c| c.1 * c.2).sum();
        }
        // Some corner is blocked (boundary, bar or window edge): extend from
        // each reached corner along the straight segment instead.
        let hp = grid.barrier(p).max(grid.h_min());
        vals.iter()
            .filter(|c| c.2.is_finite())
            .map(|&(k, _, v)| v + p.distance(grid.node_point(k)) * mean_slowness(grid.h(k), hp))
            .fold(f64::INFINITY, f64::min)
    }

    /// Euclidean gradient of the interpolated field by central differences,
    /// one-sided where a neighbour sample is unreachable.
    pub fn gradient(&self, grid: &MetricGrid, p: Point) -> Option<Point> {
        let d0 = self.value_at(grid, p);
        if !d0.is_finite() {
            return None;
        }
        let near = p.distance(self.source);
        let step = if near < 2.0 * grid.spacing() {
            (0.25 * near).clamp(1e-9, 0.5 * grid.spacing())
        } else {
            0.5 * grid.spacing()
        };
        let axis = |e: Point| -> Option<f64> {
            let fp = self.value_at(grid, p + e * step);
            let fm = self.value_at(grid, p - e * step);
            match (fp.is_finite(), fm.is_finite()) {
                (true, true) => Some((fp - fm) / (2.0 * step)),
                (true, false) => Some((fp - d0) / step),
                (false, true) => Some((d0 - fm) / step),
                (false, false) => None,
            }
        };
        Some(Point::new(
            axis(Point::new(1.0, 0.0))?,
            axis(Point::new(0.0, 1.0))?,
        ))
    }

    /// Unit vector of steepest geodesic descent toward the source; the zero
    /// vector when `p` is within one cell (metric `Δ/h`) of the source.
    pub fn descent_direction(&self, grid: &MetricGrid, p: Point) -> Point {
        let d = self.value_at(grid, p);
        let hp = grid.barrier(p);
        if !(hp > 0.0) || d < grid.spacing() / hp {
            return Point::ZERO;
        }
        self.gradient(grid, p).map_or(Point::ZERO, |g| (-g).normalized())
    }
}

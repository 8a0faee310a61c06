//! Virtual partition bars, subregion decomposition and workload balancing.
//!
//! Bar `i` sits at arc length `l_i` on the inner boundary (counter-clockwise
//! from θ = 0) and extends along the outward normal to the outer boundary.
//! Subregion `i` spans the arc `[l_i, l_{i+1}]`, so it lies on the
//! counter-clockwise side of bar `i` and its workload grows along the
//! clockwise tangent `ν_i`. The partition law moves each bar by
//! `dl_i/dt = κ_s (m_i - m_{i-1})`, which only needs the two workloads the
//! bar separates.

use std::collections::{HashMap, VecDeque};
use std::f64::consts::TAU;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{AnnulusDomain, FrenetFrame, Point};
use crate::metric::MetricGrid;

/// Workload density over the domain, evaluated in polar coordinates about
/// the domain center.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum DensityField {
    Uniform(f64),
    /// `exp(sin²θ + cos θ) + 0.01 r`.
    CaseStudy,
    /// `base + slope · r`.
    RadialLinear {
        base: f64,
        slope: f64,
    },
    /// Bilinear lookup on an `(r, θ)` lattice; `values[i][j]` is the sample at
    /// `r_i = r_min + i (r_max - r_min)/(n_r - 1)` and `θ_j = 2π j / n_θ`.
    /// Radii outside the table are clamped.
    Tabulated {
        r_min: f64,
        r_max: f64,
        values: Vec<Vec<f64>>,
    },
    Scaled(Box<DensityField>, f64),
}

impl DensityField {
    pub fn eval_polar(&self, r: f64, theta: f64) -> f64 {
        match self {
            DensityField::Uniform(c) => *c,
            DensityField::CaseStudy => {
                let (s, c) = theta.sin_cos();
                (s * s + c).exp() + 0.01 * r
            }
            DensityField::RadialLinear { base, slope } => base + slope * r,
            DensityField::Tabulated { r_min, r_max, values } => {
                let nr = values.len();
                let nt = values[0].len();
                let fr = if nr > 1 {
                    ((r - r_min) / (r_max - r_min)).clamp(0.0, 1.0) * (nr - 1) as f64
                } else {
                    0.0
                };
                let i = (fr.floor() as usize).min(nr.saturating_sub(2));
                let a = if nr > 1 { fr - i as f64 } else { 0.0 };
                let ft = crate::geometry::wrap_angle(theta) / TAU * nt as f64;
                let j = (ft.floor() as usize) % nt;
                let b = ft - ft.floor();
                let j1 = (j + 1) % nt;
                let i1 = (i + 1).min(nr - 1);
                (1.0 - a) * ((1.0 - b) * values[i][j] + b * values[i][j1])
                    + a * ((1.0 - b) * values[i1][j] + b * values[i1][j1])
            }
            DensityField::Scaled(inner, k) => k * inner.eval_polar(r, theta),
        }
    }

    pub fn eval(&self, domain: &AnnulusDomain, q: Point) -> f64 {
        let (r, theta) = domain.to_polar(q);
        self.eval_polar(r, theta)
    }

    pub fn scaled(&self, factor: f64) -> DensityField {
        DensityField::Scaled(Box::new(self.clone()), factor)
    }

    /// Sampled `(ρ_low, ρ_high)` over the domain.
    pub fn bounds(&self, domain: &AnnulusDomain) -> (f64, f64) {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for k in 0..720 {
            let theta = TAU * k as f64 / 720.0;
            let ri = domain.inner().radius(theta);
            let ro = domain.outer().radius(theta);
            for s in 0..=32 {
                let r = ri + (ro - ri) * s as f64 / 32.0;
                let v = self.eval_polar(r, theta);
                lo = lo.min(v);
                hi = hi.max(v);
            }
        }
        (lo, hi)
    }

    pub fn validate(&self, domain: &AnnulusDomain) -> Result<()> {
        if let DensityField::Tabulated { r_min, r_max, values } = self {
            let ok = !values.is_empty()
                && !values[0].is_empty()
                && values.iter().all(|row| row.len() == values[0].len())
                && (values.len() == 1 || r_max > r_min);
            if !ok {
                return Err(Error::Config("tabulated density table is malformed".into()));
            }
        }
        let (lo, hi) = self.bounds(domain);
        if !(lo > 0.0 && hi.is_finite()) {
            return Err(Error::Config(format!(
                "density must be positive and bounded on the domain (sampled range [{lo}, {hi}])"
            )));
        }
        Ok(())
    }
}

/// A partition bar: the straight piece of the normal line at `frame.footpoint`
/// between the inner boundary and its first exit through the outer boundary.
#[derive(Debug, Clone, PartialEq)]
pub struct PartitionBar {
    pub owner: usize,
    pub frame: FrenetFrame,
    pub start: Point,
    pub end: Point,
}

impl PartitionBar {
    pub fn arc_length(&self) -> f64 {
        self.frame.arc_length
    }

    pub fn length(&self) -> f64 {
        self.start.distance(self.end)
    }

    /// Signed offset of `q` along `ν`: positive on the side of the previous
    /// subregion.
    pub fn side(&self, q: Point) -> f64 {
        (q - self.start).dot(self.frame.tangent)
    }
}

/// Builds the bar at arc length `l`, marching along the outward normal at
/// `spacing` and refining the outer crossing by bisection to 1e-8 m.
pub fn bar_segment(domain: &AnnulusDomain, l: f64, spacing: f64) -> Result<PartitionBar> {
    let frame = domain.frame_at_arclength(l);
    let s = frame.footpoint;
    let n = frame.normal;
    let outer_gap = |t: f64| {
        let (r, theta) = domain.to_polar(s + n * t);
        domain.outer().radius(theta) - r
    };
    let inner_gap = |t: f64| {
        let (r, theta) = domain.to_polar(s + n * t);
        r - domain.inner().radius(theta)
    };
    let degenerate = |reason: String| Error::DegenerateBar {
        arc_length: frame.arc_length,
        reason,
    };
    let t_max = 2.0 * domain.diameter();
    let mut prev = 0.0;
    let mut t = spacing;
    let exit = loop {
        if t > t_max {
            return Err(degenerate("normal ray never leaves the outer curve".into()));
        }
        if outer_gap(t) <= 0.0 {
            let (mut a, mut b) = (prev, t);
            while b - a > 1e-8 {
                let mid = 0.5 * (a + b);
                if outer_gap(mid) > 0.0 {
                    a = mid;
                } else {
                    b = mid;
                }
            }
            break 0.5 * (a + b);
        }
        if inner_gap(t) <= 0.0 {
            return Err(degenerate("normal ray re-enters the inner hole".into()));
        }
        prev = t;
        t += spacing;
    };
    if exit < spacing {
        return Err(degenerate(format!(
            "segment length {exit:.3e} is below the grid spacing {spacing}"
        )));
    }
    Ok(PartitionBar {
        owner: 0,
        frame,
        start: s,
        end: s + n * exit,
    })
}

/// The bar line shifted by `offset` along `ν` without rotating it, clipped
/// to Ω: from its inner-boundary crossing to its first outer exit. Used to
/// separate the translational and rotational parts of bar motion.
pub fn translated_bar(
    domain: &AnnulusDomain,
    bar: &PartitionBar,
    offset: f64,
    spacing: f64,
) -> Result<PartitionBar> {
    let n = (bar.end - bar.start).normalized();
    let c = bar.start + bar.frame.tangent * offset;
    let inner_gap = |t: f64| {
        let (r, theta) = domain.to_polar(c + n * t);
        r - domain.inner().radius(theta)
    };
    let outer_gap = |t: f64| {
        let (r, theta) = domain.to_polar(c + n * t);
        domain.outer().radius(theta) - r
    };
    let degenerate = |reason: &str| Error::DegenerateBar {
        arc_length: bar.arc_length(),
        reason: reason.into(),
    };
    let bisect = |f: &dyn Fn(f64) -> f64, mut a: f64, mut b: f64| {
        // f(a) and f(b) have opposite signs
        let fa = f(a) > 0.0;
        while (b - a).abs() > 1e-10 {
            let mid = 0.5 * (a + b);
            if (f(mid) > 0.0) == fa {
                a = mid;
            } else {
                b = mid;
            }
        }
        0.5 * (a + b)
    };
    let step = 0.25 * spacing;
    // walk from well inside the hole out to the inner crossing
    let mut lo = -(offset.abs() + spacing);
    while inner_gap(lo) > 0.0 {
        lo -= step;
        if lo < -domain.diameter() {
            return Err(degenerate("translated bar never meets the inner curve"));
        }
    }
    let mut t = lo;
    while inner_gap(t + step) <= 0.0 {
        t += step;
        if t > domain.diameter() {
            return Err(degenerate("translated bar stays inside the hole"));
        }
    }
    let t_in = bisect(&inner_gap, t, t + step);
    let mut t = t_in;
    while outer_gap(t + step) > 0.0 {
        t += step;
        if t > 2.0 * domain.diameter() {
            return Err(degenerate("translated bar never leaves the outer curve"));
        }
    }
    let t_out = bisect(&outer_gap, t, t + step);
    Ok(PartitionBar {
        owner: bar.owner,
        frame: bar.frame,
        start: c + n * t_in,
        end: c + n * t_out,
    })
}

/// Minimum admissible arc-length gap between neighbouring bars.
pub fn min_bar_gap(perimeter: f64, n: usize, spacing: f64) -> f64 {
    (2.0 * spacing).max(perimeter / (20.0 * n as f64))
}

/// Cyclically ordered bars.
#[derive(Debug, Clone)]
pub struct PartitionState {
    bars: Vec<PartitionBar>,
    perimeter: f64,
    spacing: f64,
}

impl PartitionState {
    /// Builds bars at the given arc lengths, which must be strictly
    /// increasing modulo the perimeter (one lap in total).
    pub fn new(domain: &AnnulusDomain, arc_lengths: &[f64], spacing: f64) -> Result<Self> {
        let p = domain.perimeter();
        let n = arc_lengths.len();
        if n == 0 {
            return Err(Error::Config("at least one partition bar is required".into()));
        }
        if arc_lengths.iter().any(|l| !l.is_finite()) {
            return Err(Error::Config("bar arc lengths must be finite".into()));
        }
        let wrapped: Vec<f64> = arc_lengths.iter().map(|l| l.rem_euclid(p)).collect();
        if n > 1 {
            let total: f64 = (0..n)
                .map(|i| (wrapped[(i + 1) % n] - wrapped[i]).rem_euclid(p))
                .sum();
            let has_zero_gap = (0..n).any(|i| (wrapped[(i + 1) % n] - wrapped[i]).rem_euclid(p) <= 0.0);
            if has_zero_gap || (total - p).abs() > 1e-9 * p {
                return Err(Error::Config(format!(
                    "bar arc lengths are not cyclically ordered: {wrapped:?}"
                )));
            }
        }
        let bars = wrapped
            .iter()
            .enumerate()
            .map(|(i, &l)| {
                let mut bar = bar_segment(domain, l, spacing)?;
                bar.owner = i;
                Ok(bar)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(PartitionState {
            bars,
            perimeter: p,
            spacing,
        })
    }

    /// `n` bars evenly spaced starting at `offset`.
    pub fn evenly_spaced(domain: &AnnulusDomain, n: usize, offset: f64, spacing: f64) -> Result<Self> {
        let p = domain.perimeter();
        let ls: Vec<f64> = (0..n).map(|i| offset + p * i as f64 / n as f64).collect();
        Self::new(domain, &ls, spacing)
    }

    pub fn len(&self) -> usize {
        self.bars.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bars.is_empty()
    }

    pub fn bars(&self) -> &[PartitionBar] {
        &self.bars
    }

    pub fn perimeter(&self) -> f64 {
        self.perimeter
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    pub fn arc_lengths(&self) -> Vec<f64> {
        self.bars.iter().map(PartitionBar::arc_length).collect()
    }

    /// Counter-clockwise arc from bar `i` to bar `i + 1`.
    pub fn gap(&self, i: usize) -> f64 {
        let n = self.len();
        if n == 1 {
            return self.perimeter;
        }
        (self.bars[(i + 1) % n].arc_length() - self.bars[i].arc_length()).rem_euclid(self.perimeter)
    }

    pub fn min_gap(&self) -> f64 {
        (0..self.len()).map(|i| self.gap(i)).fold(f64::INFINITY, f64::min)
    }

    /// Copy with bar `i` replaced by an arbitrary segment; the arc length
    /// of the replaced bar still decides the subregion seeds.
    pub fn with_bar(&self, i: usize, bar: PartitionBar) -> PartitionState {
        let mut out = self.clone();
        out.bars[i] = PartitionBar { owner: i, ..bar };
        out
    }

    pub fn min_allowed_gap(&self) -> f64 {
        min_bar_gap(self.perimeter, self.len(), self.spacing)
    }
}

/// A cell straddling one bar: `own_fraction` of its area lies on the
/// counter-clockwise side (subregion `bar`), the rest in subregion `bar - 1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CellSplit {
    pub node: usize,
    pub bar: usize,
    pub own_fraction: f64,
}

/// Per-node subregion labels over the metric grid.
#[derive(Debug, Clone)]
pub struct SubregionDecomposition {
    /// 0 for nodes outside Ω, otherwise `subregion + 1`.
    labels: Vec<u32>,
    cells: Vec<Vec<usize>>,
    splits: Vec<CellSplit>,
}

impl SubregionDecomposition {
    pub fn label(&self, node: usize) -> Option<usize> {
        match self.labels[node] {
            0 => None,
            l => Some(l as usize - 1),
        }
    }

    pub fn labels(&self) -> &[u32] {
        &self.labels
    }

    pub fn subregion_count(&self) -> usize {
        self.cells.len()
    }

    /// Node indices of subregion `i`, ascending.
    pub fn cells(&self, i: usize) -> &[usize] {
        &self.cells[i]
    }

    pub fn splits(&self) -> &[CellSplit] {
        &self.splits
    }

    /// Subregion containing `p`, by the label of its grid cell.
    pub fn subregion_of(&self, grid: &MetricGrid, p: Point) -> Option<usize> {
        grid.node_of(p).and_then(|k| self.label(k))
    }
}

const POCKET_MAX: usize = 8;

/// Labels every interior grid node with its subregion: grid edges crossing
/// a bar are severed and each subregion is flood-filled from a seed next to
/// the middle of its inner-boundary arc.
pub fn decompose(
    domain: &AnnulusDomain,
    state: &PartitionState,
    grid: &MetricGrid,
) -> Result<SubregionDecomposition> {
    let n = state.len();
    let spacing = grid.spacing();
    let fail = |reason: String| Error::Decomposition {
        reason,
        bars: state.arc_lengths(),
    };

    // Bar segments extended past both ends so that grid edges clipping the
    // hole or the outside near a bar end are also severed.
    let ext = 1.5 * spacing;
    let cut_lines: Vec<(Point, Point)> = state
        .bars()
        .iter()
        .map(|b| {
            let dir = (b.end - b.start).normalized();
            (b.start - dir * ext, b.end + dir * ext)
        })
        .collect();

    let mut near: HashMap<usize, Vec<usize>> = HashMap::new();
    for (bi, &(a, b)) in cut_lines.iter().enumerate() {
        let len = a.distance(b);
        let steps = (len / (0.25 * spacing)).ceil() as usize + 1;
        for s in 0..=steps {
            let p = a + (b - a) * (s as f64 / steps as f64);
            let Some(k) = grid.node_of(p) else { continue };
            for m in std::iter::once(k).chain(grid.neighbours8(k)) {
                let list = near.entry(m).or_default();
                if !list.contains(&bi) {
                    list.push(bi);
                }
            }
        }
    }
    let blocked = |a: usize, b: usize| -> bool {
        let (pa, pb) = (grid.node_point(a), grid.node_point(b));
        near.get(&a)
            .into_iter()
            .chain(near.get(&b))
            .flatten()
            .any(|&bi| segments_intersect(pa, pb, cut_lines[bi].0, cut_lines[bi].1))
    };

    let mut labels = vec![0u32; grid.len()];
    for i in 0..n {
        let mid = state.bars()[i].arc_length() + 0.5 * state.gap(i);
        let frame = domain.frame_at_arclength(mid);
        let seed = (1..=400)
            .map(|s| frame.footpoint + frame.normal * (0.25 * spacing * s as f64))
            .filter_map(|p| grid.node_of(p))
            .find(|&k| grid.is_inside(k))
            .ok_or_else(|| fail(format!("no interior seed for subregion {i}")))?;
        if labels[seed] != 0 {
            return Err(fail(format!(
                "seed of subregion {i} already belongs to subregion {}",
                labels[seed] - 1
            )));
        }
        let tag = i as u32 + 1;
        labels[seed] = tag;
        let mut queue = VecDeque::from([seed]);
        while let Some(k) = queue.pop_front() {
            for m in grid.neighbours8(k) {
                if labels[m] == 0 && grid.is_inside(m) && !blocked(k, m) {
                    labels[m] = tag;
                    queue.push_back(m);
                }
            }
        }
    }

    // Interior nodes cut off from every seed by the discretization.
    let unlabeled: Vec<usize> = grid.inside_nodes().filter(|&k| labels[k] == 0).collect();
    let mut seen = vec![false; grid.len()];
    for &start in &unlabeled {
        if seen[start] || labels[start] != 0 {
            continue;
        }
        let mut pocket = vec![start];
        seen[start] = true;
        let mut idx = 0;
        while idx < pocket.len() {
            let k = pocket[idx];
            idx += 1;
            for m in grid.neighbours8(k) {
                if !seen[m] && labels[m] == 0 && grid.is_inside(m) && !blocked(k, m) {
                    seen[m] = true;
                    pocket.push(m);
                }
            }
        }
        if pocket.len() > POCKET_MAX {
            return Err(fail(format!(
                "{} interior cells near ({:.3}, {:.3}) are not reachable from any subregion seed",
                pocket.len(),
                grid.node_point(start).x,
                grid.node_point(start).y
            )));
        }
        let mut counts: HashMap<u32, usize> = HashMap::new();
        for &k in &pocket {
            for m in grid.neighbours8(k) {
                if labels[m] != 0 {
                    *counts.entry(labels[m]).or_default() += 1;
                }
            }
        }
        let Some(tag) = counts
            .into_iter()
            .max_by(|a, b| a.1.cmp(&b.1).then_with(|| b.0.cmp(&a.0)))
            .map(|(t, _)| t)
        else {
            return Err(fail("isolated interior pocket".into()));
        };
        for k in pocket {
            labels[k] = tag;
        }
    }

    let mut cells = vec![Vec::new(); n];
    for k in grid.inside_nodes() {
        cells[labels[k] as usize - 1].push(k);
    }
    for (i, c) in cells.iter().enumerate() {
        if c.len() < 16 {
            return Err(Error::Resolution(format!(
                "subregion {i} has only {} cells at spacing {spacing}",
                c.len()
            )));
        }
    }

    let half = 0.5 * spacing;
    let mut splits = Vec::new();
    let mut candidates: Vec<_> = near.iter().filter(|(k, _)| labels[**k] != 0).collect();
    candidates.sort_by_key(|(k, _)| **k);
    for (&k, bars) in candidates {
        let c = grid.node_point(k);
        let lo = Point::new(c.x - half, c.y - half);
        let hi = Point::new(c.x + half, c.y + half);
        let hits: Vec<usize> = bars
            .iter()
            .copied()
            .filter(|&bi| {
                let b = &state.bars()[bi];
                segment_hits_box(b.start, b.end, lo, hi)
            })
            .collect();
        if let [bi] = hits[..] {
            let bar = &state.bars()[bi];
            let own = square_fraction_below(lo, hi, bar.start, bar.frame.tangent);
            splits.push(CellSplit {
                node: k,
                bar: bi,
                own_fraction: own,
            });
        }
    }

    Ok(SubregionDecomposition {
        labels,
        cells,
        splits,
    })
}

fn orient(a: Point, b: Point, c: Point) -> f64 {
    (b - a).cross(c - a)
}

/// Closed-segment intersection test.
pub fn segments_intersect(p1: Point, p2: Point, q1: Point, q2: Point) -> bool {
    let d1 = orient(q1, q2, p1);
    let d2 = orient(q1, q2, p2);
    let d3 = orient(p1, p2, q1);
    let d4 = orient(p1, p2, q2);
    if ((d1 > 0.0 && d2 < 0.0) || (d1 < 0.0 && d2 > 0.0))
        && ((d3 > 0.0 && d4 < 0.0) || (d3 < 0.0 && d4 > 0.0))
    {
        return true;
    }
    let on = |a: Point, b: Point, c: Point, d: f64| {
        d == 0.0 && c.x >= a.x.min(b.x) && c.x <= a.x.max(b.x) && c.y >= a.y.min(b.y) && c.y <= a.y.max(b.y)
    };
    on(q1, q2, p1, d1) || on(q1, q2, p2, d2) || on(p1, p2, q1, d3) || on(p1, p2, q2, d4)
}

/// Liang–Barsky clip of segment `ab` against the box `[lo, hi]`.
fn segment_hits_box(a: Point, b: Point, lo: Point, hi: Point) -> bool {
    let d = b - a;
    let mut t0 = 0.0f64;
    let mut t1 = 1.0f64;
    for (p, q) in [
        (-d.x, a.x - lo.x),
        (d.x, hi.x - a.x),
        (-d.y, a.y - lo.y),
        (d.y, hi.y - a.y),
    ] {
        if p == 0.0 {
            if q < 0.0 {
                return false;
            }
        } else {
            let r = q / p;
            if p < 0.0 {
                t0 = t0.max(r);
            } else {
                t1 = t1.min(r);
            }
        }
    }
    t0 <= t1
}

/// Fraction of the box `[lo, hi]` where `(q - origin)·dir < 0`.
fn square_fraction_below(lo: Point, hi: Point, origin: Point, dir: Point) -> f64 {
    let poly = [lo, Point::new(hi.x, lo.y), hi, Point::new(lo.x, hi.y)];
    let f = |q: Point| (q - origin).dot(dir);
    let mut clipped: Vec<Point> = Vec::with_capacity(6);
    for idx in 0..4 {
        let a = poly[idx];
        let b = poly[(idx + 1) % 4];
        let (fa, fb) = (f(a), f(b));
        if fa < 0.0 {
            clipped.push(a);
        }
        if (fa < 0.0) != (fb < 0.0) {
            let t = fa / (fa - fb);
            clipped.push(a + (b - a) * t);
        }
    }
    let area: f64 = (0..clipped.len())
        .map(|i| clipped[i].cross(clipped[(i + 1) % clipped.len()]))
        .sum::<f64>()
        * 0.5;
    (area.abs() / ((hi.x - lo.x) * (hi.y - lo.y))).clamp(0.0, 1.0)
}

/// Subregion workloads.
#[derive(Debug, Clone, PartialEq)]
pub struct WorkloadVector {
    pub m: Vec<f64>,
    pub mean: f64,
    pub total: f64,
}

impl WorkloadVector {
    pub fn from_masses(m: Vec<f64>) -> Self {
        let total: f64 = m.iter().sum();
        let mean = total / m.len() as f64;
        WorkloadVector { m, mean, total }
    }

    /// `½ Σ (m_i - m̄)²`.
    pub fn lyapunov(&self) -> f64 {
        0.5 * self.m.iter().map(|x| (x - self.mean).powi(2)).sum::<f64>()
    }

    /// `max_i |m_i - m_{i-1}|` (cyclic).
    pub fn max_adjacent_difference(&self) -> f64 {
        let n = self.m.len();
        (0..n)
            .map(|i| (self.m[i] - self.m[(i + n - 1) % n]).abs())
            .fold(0.0, f64::max)
    }

    /// `max_i |m_i - m̄| / m̄`.
    pub fn relative_imbalance(&self) -> f64 {
        self.m.iter().map(|x| (x - self.mean).abs()).fold(0.0, f64::max) / self.mean
    }
}

/// Midpoint-rule workloads; cells straddling a bar are shared between the
/// two adjacent subregions in proportion to their area on each side.
pub fn workload(
    decomp: &SubregionDecomposition,
    density: &DensityField,
    domain: &AnnulusDomain,
    grid: &MetricGrid,
) -> WorkloadVector {
    let n = decomp.subregion_count();
    let area = grid.cell_area();
    let mass = |k: usize| density.eval(domain, grid.node_point(k)) * area;
    let mut m: Vec<f64> = decomp
        .cells
        .iter()
        .map(|cells| cells.iter().map(|&k| mass(k)).sum())
        .collect();
    for s in &decomp.splits {
        let w = mass(s.node);
        let label = decomp.labels[s.node] as usize - 1;
        m[label] -= w;
        m[s.bar] += w * s.own_fraction;
        m[(s.bar + n - 1) % n] += w * (1.0 - s.own_fraction);
    }
    WorkloadVector::from_masses(m)
}

const FLUX_INTERVALS: usize = 256;

/// `∫ ρ` along the bar segment (trapezoid rule).
pub fn bar_flux(bar: &PartitionBar, domain: &AnnulusDomain, density: &DensityField) -> f64 {
    line_integral(bar, |q, _| density.eval(domain, q))
}

/// `∫ ρ (1 + κ t) dt` along the bar, `t` the distance from the footpoint and
/// `κ` the signed boundary curvature there. This is the rate at which the
/// subregion mass changes per unit arc length of footpoint motion, since the
/// normal line rotates as the footpoint slides.
pub fn swept_flux(bar: &PartitionBar, domain: &AnnulusDomain, density: &DensityField) -> f64 {
    let kappa = bar.frame.signed_curvature;
    line_integral(bar, |q, t| density.eval(domain, q) * (1.0 + kappa * t))
}

fn line_integral(bar: &PartitionBar, f: impl Fn(Point, f64) -> f64) -> f64 {
    let len = bar.length();
    let dir = (bar.end - bar.start).normalized();
    let dt = len / FLUX_INTERVALS as f64;
    (0..=FLUX_INTERVALS)
        .map(|k| {
            let t = k as f64 * dt;
            let w = if k == 0 || k == FLUX_INTERVALS { 0.5 } else { 1.0 };
            w * f(bar.start + dir * t, t)
        })
        .sum::<f64>()
        * dt
}

/// Arc-length velocity of a bar from the two workloads it separates.
pub fn bar_velocity(m_prev: f64, m_own: f64, kappa_s: f64) -> f64 {
    kappa_s * (m_own - m_prev)
}

/// Forward-Euler partition update. Each bar moves by
/// `κ_s (m_i - m_{i-1}) dt`, clamped so that it consumes at most half of the
/// slack above the minimum gap on either side. Returns the new state and the
/// number of clamped bars.
pub fn partition_step(
    domain: &AnnulusDomain,
    state: &PartitionState,
    workloads: &WorkloadVector,
    kappa_s: f64,
    dt: f64,
) -> Result<(PartitionState, usize)> {
    let n = state.len();
    if n == 1 {
        return Ok((state.clone(), 0));
    }
    let eps = state.min_allowed_gap();
    let mut clamped = 0;
    let next: Vec<f64> = (0..n)
        .map(|i| {
            let prev = (i + n - 1) % n;
            let step = bar_velocity(workloads.m[prev], workloads.m[i], kappa_s) * dt;
            let fwd = (0.5 * (state.gap(i) - eps)).max(0.0);
            let back = (0.5 * (state.gap(prev) - eps)).max(0.0);
            let allowed = step.clamp(-back, fwd);
            if allowed != step {
                clamped += 1;
            }
            state.bars()[i].arc_length() + allowed
        })
        .collect();
    Ok((PartitionState::new(domain, &next, state.spacing)?, clamped))
}

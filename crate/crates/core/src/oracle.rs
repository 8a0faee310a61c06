//! Independent reference computations used by the `check` command and the
//! test suites. Nothing here is on the simulation path.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use rand::Rng;

use crate::geometry::{AnnulusDomain, Point};
use crate::metric::MetricGrid;
use crate::partition::DensityField;

#[derive(Clone, Copy, PartialEq)]
struct Entry(f64, usize);

impl Eq for Entry {}

impl Ord for Entry {
    fn cmp(&self, other: &Self) -> Ordering {
        other.0.total_cmp(&self.0).then_with(|| other.1.cmp(&self.1))
    }
}

impl PartialOrd for Entry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// 8-connected Dijkstra over passable nodes (optionally masked). Edge weight
/// is the Euclidean edge length times the mean of `1/h` at its endpoints.
/// The source node's value is the straight-line cost from `source`.
pub fn graph_distances(grid: &MetricGrid, source: Point, mask: Option<&[bool]>) -> Vec<f64> {
    let permitted = |k: usize| grid.passable(k) && mask.is_none_or(|m| m[k]);
    let mut dist = vec![f64::INFINITY; grid.len()];
    let mut heap = BinaryHeap::new();
    let hs = grid.barrier(source);
    // straight-line costs to every node within one spacing of the source
    let reach = grid.spacing() * std::f64::consts::SQRT_2;
    if let Some(c) = grid.node_of(source) {
        for k in std::iter::once(c).chain(grid.neighbours8(c)) {
            let gap = source.distance(grid.node_point(k));
            if permitted(k) && gap <= reach {
                dist[k] = gap * 0.5 * (1.0 / hs + 1.0 / grid.h(k));
                heap.push(Entry(dist[k], k));
            }
        }
    }
    while let Some(Entry(d, k)) = heap.pop() {
        if d > dist[k] {
            continue;
        }
        let pk = grid.node_point(k);
        for n in grid.neighbours8(k) {
            if !permitted(n) {
                continue;
            }
            let cost = pk.distance(grid.node_point(n)) * 0.5 * (1.0 / grid.h(k) + 1.0 / grid.h(n));
            let nd = d + cost;
            if nd < dist[n] {
                dist[n] = nd;
                heap.push(Entry(nd, n));
            }
        }
    }
    dist
}

/// Follows steepest descent of a node-valued distance table from `start`
/// back to its minimum; returns the visited node chain.
pub fn backtrace(grid: &MetricGrid, dist: &[f64], start: usize) -> Vec<usize> {
    let mut path = vec![start];
    let mut cur = start;
    loop {
        let next = grid
            .neighbours8(cur)
            .filter(|&n| dist[n] < dist[cur])
            .min_by(|&a, &b| dist[a].total_cmp(&dist[b]));
        match next {
            Some(n) => {
                path.push(n);
                cur = n;
            }
            None => return path,
        }
    }
}

/// Monte Carlo estimate of `∫_Ω ρ` by rejection sampling the bounding box.
pub fn monte_carlo_mass(
    domain: &AnnulusDomain,
    density: &DensityField,
    samples: usize,
    rng: &mut impl Rng,
) -> f64 {
    let (lo, hi) = domain.bounding_box();
    let area = (hi.x - lo.x) * (hi.y - lo.y);
    let mut acc = 0.0;
    for _ in 0..samples {
        let q = Point::new(rng.gen_range(lo.x..hi.x), rng.gen_range(lo.y..hi.y));
        if domain.contains(q) {
            acc += density.eval(domain, q);
        }
    }
    acc * area / samples as f64
}

/// Central-difference Hessian of a scalar function of the plane.
pub fn hessian(f: impl Fn(Point) -> f64, p: Point, step: f64) -> [[f64; 2]; 2] {
    let e = [Point::new(step, 0.0), Point::new(0.0, step)];
    let f0 = f(p);
    let mut hm = [[0.0; 2]; 2];
    for a in 0..2 {
        hm[a][a] = (f(p + e[a]) - 2.0 * f0 + f(p - e[a])) / (step * step);
    }
    // the two mixed partials, each as a difference of central first derivatives
    let dx = |q: Point| (f(q + e[0]) - f(q - e[0])) / (2.0 * step);
    let dy = |q: Point| (f(q + e[1]) - f(q - e[1])) / (2.0 * step);
    hm[0][1] = (dy(p + e[0]) - dy(p - e[0])) / (2.0 * step);
    hm[1][0] = (dx(p + e[1]) - dx(p - e[1])) / (2.0 * step);
    hm
}

/// Smaller eigenvalue of a symmetric 2×2 matrix.
pub fn min_eigenvalue(m: [[f64; 2]; 2]) -> f64 {
    let tr = m[0][0] + m[1][1];
    let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
    let disc = (0.25 * tr * tr - det).max(0.0).sqrt();
    0.5 * tr - disc
}

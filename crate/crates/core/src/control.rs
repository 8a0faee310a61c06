//! Local coverage cost, subregion optima and the agent control law.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{AnnulusDomain, Point};
use crate::metric::{distance_field, GeodesicField, MetricGrid, Restriction};
use crate::partition::{DensityField, SubregionDecomposition};

/// Transport cost `f(p, q)` inside the coverage integral.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum CostKind {
    #[default]
    GeodesicSquared,
    EuclideanSquared,
}

/// How `∂E/∂p` is turned into a velocity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum GradientMode {
    /// `h²` times the Euclidean gradient (gradient w.r.t. the metric).
    #[default]
    Natural,
    Euclidean,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CoverageCostConfig {
    pub kind: CostKind,
    /// Lattice stride (cells) of the coarse candidate pass.
    pub stride: usize,
    /// Chebyshev radius (cells) of the refinement neighbourhood.
    pub refine_radius: usize,
    /// Steps between target recomputations.
    pub period: u64,
    pub gradient: GradientMode,
    /// Start later searches from the previous optimum instead of a fresh
    /// coarse pass.
    pub warm_start: bool,
}

impl Default for CoverageCostConfig {
    fn default() -> Self {
        CoverageCostConfig {
            kind: CostKind::GeodesicSquared,
            stride: 4,
            refine_radius: 4,
            period: 10,
            gradient: GradientMode::Natural,
            warm_start: true,
        }
    }
}

impl CoverageCostConfig {
    pub fn validate(&self) -> Result<()> {
        if self.stride == 0 {
            return Err(Error::Config("stride must be at least 1".into()));
        }
        if self.period == 0 {
            return Err(Error::Config("period must be at least 1".into()));
        }
        Ok(())
    }
}

/// Targets must keep at least this much clearance.
pub fn h_interior(grid: &MetricGrid) -> f64 {
    2.0 * grid.h_min()
}

/// Cells of one subregion with their mass weights `ρ ΔA`.
#[derive(Debug, Clone)]
pub struct WeightedCells {
    pub index: usize,
    /// Ascending node indices.
    pub cells: Vec<usize>,
    pub weights: Vec<f64>,
}

impl WeightedCells {
    pub fn new(index: usize, mut cells: Vec<usize>, weight: impl Fn(usize) -> f64) -> Self {
        cells.sort_unstable();
        cells.dedup();
        let weights = cells.iter().map(|&k| weight(k)).collect();
        WeightedCells {
            index,
            cells,
            weights,
        }
    }

    pub fn from_decomposition(
        decomp: &SubregionDecomposition,
        index: usize,
        density: &DensityField,
        domain: &AnnulusDomain,
        grid: &MetricGrid,
    ) -> Self {
        let area = grid.cell_area();
        Self::new(index, decomp.cells(index).to_vec(), |k| {
            density.eval(domain, grid.node_point(k)) * area
        })
    }

    pub fn contains_node(&self, k: usize) -> bool {
        self.cells.binary_search(&k).is_ok()
    }

    pub fn mass(&self) -> f64 {
        self.weights.iter().sum()
    }

    fn check(&self, grid: &MetricGrid, p: Point) -> Result<()> {
        match grid.node_of(p) {
            Some(k) if self.contains_node(k) && grid.contains(p) => Ok(()),
            _ => Err(Error::OutsideSubregion {
                x: p.x,
                y: p.y,
                subregion: self.index,
            }),
        }
    }
}

/// `J(p) = Σ f(p, q_k) ρ_k ΔA` over the subregion's cells. Cells the
/// restricted field cannot reach (boundary-hugging nodes below the `h`
/// clamp) contribute nothing.
pub fn local_cost(p: Point, sub: &WeightedCells, grid: &MetricGrid, kind: CostKind) -> Result<f64> {
    sub.check(grid, p)?;
    match kind {
        CostKind::EuclideanSquared => Ok(sub
            .cells
            .iter()
            .zip(&sub.weights)
            .map(|(&k, w)| w * grid.node_point(k).distance(p).powi(2))
            .sum()),
        CostKind::GeodesicSquared => {
            let field = distance_field(grid, p, Restriction::Cells(&sub.cells))?;
            Ok(sub
                .cells
                .iter()
                .zip(&sub.weights)
                .map(|(&k, w)| {
                    let d = field.node_value(grid, k);
                    if d.is_finite() {
                        w * d * d
                    } else {
                        0.0
                    }
                })
                .sum())
        }
    }
}

/// Optimum of `J` over one subregion.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TargetState {
    pub point: Point,
    pub node: usize,
    pub cost: f64,
    /// Steps since the last recomputation.
    pub age: u64,
}

fn argmin(grid: &MetricGrid, sub: &WeightedCells, kind: CostKind, nodes: &[usize]) -> Result<(usize, f64)> {
    let costs: Vec<Result<f64>> = nodes
        .par_iter()
        .map(|&k| local_cost(grid.node_point(k), sub, grid, kind))
        .collect();
    let mut best: Option<(usize, f64)> = None;
    for (&k, c) in nodes.iter().zip(costs) {
        let c = c?;
        // strict comparison with ascending nodes keeps the lowest index on ties
        if best.is_none_or(|(bk, bc)| c < bc || (c == bc && k < bk)) {
            best = Some((k, c));
        }
    }
    best.ok_or(Error::EmptySubregion(sub.index))
}

/// Coarse lattice pass over admissible cells, then exhaustive refinement
/// around the best candidate, repeated while the optimum keeps moving.
/// With `hint` the coarse pass is skipped and refinement starts from the
/// hint's cell, provided that cell is admissible.
pub fn find_local_optimum(
    sub: &WeightedCells,
    grid: &MetricGrid,
    cfg: &CoverageCostConfig,
    hint: Option<Point>,
) -> Result<TargetState> {
    let floor = h_interior(grid);
    let admissible: Vec<usize> = sub
        .cells
        .iter()
        .copied()
        .filter(|&k| grid.passable(k) && grid.h(k) >= floor)
        .collect();
    if admissible.is_empty() {
        return Err(Error::EmptySubregion(sub.index));
    }
    let stride = cfg.stride.max(1);
    let start = hint
        .filter(|_| cfg.warm_start)
        .and_then(|p| grid.node_of(p))
        .filter(|k| admissible.binary_search(k).is_ok());
    let (mut best, mut cost) = match start {
        Some(k) => (k, f64::NAN),
        None => {
            let coarse: Vec<usize> = admissible
                .iter()
                .copied()
                .filter(|&k| {
                    let (i, j) = grid.coords(k);
                    i % stride == 0 && j % stride == 0
                })
                .collect();
            let coarse = if coarse.is_empty() {
                admissible.clone()
            } else {
                coarse
            };
            argmin(grid, sub, cfg.kind, &coarse)?
        }
    };
    // a warm start only needs to follow the optimum cell by cell
    let (r, rounds) = match start {
        Some(_) => (1, 64),
        None => (cfg.refine_radius.max(stride / 2).max(1) as i64, 16),
    };
    for _ in 0..rounds {
        let (bi, bj) = grid.coords(best);
        let near: Vec<usize> = admissible
            .iter()
            .copied()
            .filter(|&k| {
                let (i, j) = grid.coords(k);
                (i as i64 - bi as i64).abs() <= r && (j as i64 - bj as i64).abs() <= r
            })
            .collect();
        let (k, c) = argmin(grid, sub, cfg.kind, &near)?;
        let moved = k != best;
        best = k;
        cost = c;
        if !moved {
            break;
        }
    }
    Ok(TargetState {
        point: grid.node_point(best),
        node: best,
        cost,
        age: 0,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AgentState {
    pub id: usize,
    pub position: Point,
    pub input: Point,
}

/// Agents closer than this fraction of a cell (in metric units, `Δ/h`) to
/// their target are considered arrived.
pub const ARRIVAL_FRACTION: f64 = 0.05;

/// `u = -κ_p ∂E/∂p` for `E = ½ d²`, with `d` read from a field sourced at the
/// target. The field's `epoch` is checked against the current decomposition
/// epoch.
pub fn control_input(
    position: Point,
    field: &GeodesicField,
    grid: &MetricGrid,
    kappa_p: f64,
    mode: GradientMode,
    epoch: u64,
    period: u64,
) -> Result<Point> {
    if epoch.saturating_sub(field.epoch) > period {
        return Err(Error::StaleField {
            built: field.epoch,
            now: epoch,
            period,
        });
    }
    let hp = grid.barrier(position);
    let d = field.value_at(grid, position);
    if !(hp > 0.0) || !d.is_finite() || d < ARRIVAL_FRACTION * grid.spacing() / hp {
        return Ok(Point::ZERO);
    }
    let Some(g) = field.gradient(grid, position) else {
        return Ok(Point::ZERO);
    };
    let scale = match mode {
        GradientMode::Natural => hp * hp,
        GradientMode::Euclidean => 1.0,
    };
    Ok(g * (-kappa_p * scale * d))
}

/// Outcome of one Euler step of an agent.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepOutcome {
    pub agent: AgentState,
    /// Number of step halvings applied.
    pub halvings: u32,
    /// The agent stayed put because every trial left the domain.
    pub frozen: bool,
}

const MAX_HALVINGS: u32 = 8;

/// `p ← p + u dt`, halving `dt` while the trial point leaves Ω.
pub fn agent_step(agent: &AgentState, u: Point, dt: f64, domain: &AnnulusDomain) -> StepOutcome {
    let mut step = dt;
    for halvings in 0..=MAX_HALVINGS {
        let trial = agent.position + u * step;
        if domain.barrier(trial) > 0.0 {
            return StepOutcome {
                agent: AgentState {
                    position: trial,
                    input: u,
                    ..*agent
                },
                halvings,
                frozen: false,
            };
        }
        step *= 0.5;
    }
    StepOutcome {
        agent: AgentState {
            input: Point::ZERO,
            ..*agent
        },
        halvings: MAX_HALVINGS,
        frozen: true,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metric::UniformRect;
    use std::sync::Arc;

    fn rect_grid(n: usize) -> MetricGrid {
        let rect = UniformRect {
            lo: Point::new(0.0, 0.0),
            hi: Point::new(1.0, 1.0),
            h: 0.5,
        };
        MetricGrid::build(Arc::new(rect), 1.0 / n as f64).unwrap()
    }

    fn rect_cells(grid: &MetricGrid, lo: Point, hi: Point) -> WeightedCells {
        let cells = grid
            .inside_nodes()
            .filter(|&k| {
                let p = grid.node_point(k);
                p.x > lo.x && p.x < hi.x && p.y > lo.y && p.y < hi.y
            })
            .collect();
        WeightedCells::new(0, cells, |_| grid.cell_area())
    }

    #[test]
    fn single_cell_cost_and_optimum() {
        let g = rect_grid(40);
        let k = g.node_of(Point::new(0.5, 0.5)).unwrap();
        let q = g.node_point(k);
        let sub = WeightedCells::new(0, vec![k], |_| 2.0 * g.cell_area());
        let p = q + Point::new(0.004, -0.003);
        let j = local_cost(p, &sub, &g, CostKind::EuclideanSquared).unwrap();
        assert!((j - p.distance(q).powi(2) * 2.0 * g.cell_area()).abs() < 1e-15);
        let t = find_local_optimum(&sub, &g, &CoverageCostConfig::default(), None).unwrap();
        assert_eq!(t.node, k);
    }

    #[test]
    fn euclidean_moment_matches_closed_form() {
        let g = rect_grid(100);
        let sub = rect_cells(&g, Point::new(0.2, 0.3), Point::new(0.7, 0.6));
        // closed form over the union of the selected cells
        let h = 0.5 * g.spacing();
        let pts: Vec<Point> = sub.cells.iter().map(|&k| g.node_point(k)).collect();
        let ax = pts.iter().map(|p| p.x).fold(f64::INFINITY, f64::min) - h;
        let bx = pts.iter().map(|p| p.x).fold(f64::NEG_INFINITY, f64::max) + h;
        let ay = pts.iter().map(|p| p.y).fold(f64::INFINITY, f64::min) - h;
        let by = pts.iter().map(|p| p.y).fold(f64::NEG_INFINITY, f64::max) + h;
        let p = Point::new(0.35, 0.52);
        let mx = ((bx - p.x).powi(3) - (ax - p.x).powi(3)) / 3.0;
        let my = ((by - p.y).powi(3) - (ay - p.y).powi(3)) / 3.0;
        let exact = mx * (by - ay) + my * (bx - ax);
        let j = local_cost(p, &sub, &g, CostKind::EuclideanSquared).unwrap();
        assert!((j - exact).abs() / exact < 0.01, "{j} vs {exact}");
    }

    #[test]
    fn cost_is_linear_in_density() {
        let g = rect_grid(30);
        let a = rect_cells(&g, Point::new(0.1, 0.1), Point::new(0.5, 0.5));
        let mut b = a.clone();
        b.weights.iter_mut().for_each(|w| *w *= 3.0);
        let p = Point::new(0.3, 0.25);
        for kind in [CostKind::EuclideanSquared, CostKind::GeodesicSquared] {
            let ja = local_cost(p, &a, &g, kind).unwrap();
            let jb = local_cost(p, &b, &g, kind).unwrap();
            assert!((jb - 3.0 * ja).abs() < 1e-12 * jb);
        }
    }

    #[test]
    fn outside_point_rejected() {
        let g = rect_grid(30);
        let a = rect_cells(&g, Point::new(0.1, 0.1), Point::new(0.5, 0.5));
        let err = local_cost(Point::new(0.8, 0.8), &a, &g, CostKind::EuclideanSquared);
        assert!(matches!(err, Err(Error::OutsideSubregion { .. })));
    }

    #[test]
    fn coarse_refine_matches_exhaustive() {
        let g = rect_grid(50);
        let sub = rect_cells(&g, Point::new(0.1, 0.2), Point::new(0.6, 0.55));
        // lopsided weights so the optimum is not at a lattice point
        let weighted = WeightedCells::new(0, sub.cells.clone(), |k| {
            let p = g.node_point(k);
            (1.0 + 3.0 * p.x * p.x + p.y) * g.cell_area()
        });
        for kind in [CostKind::EuclideanSquared, CostKind::GeodesicSquared] {
            let cfg = CoverageCostConfig {
                kind,
                ..Default::default()
            };
            let t = find_local_optimum(&weighted, &g, &cfg, None).unwrap();
            let (k, _) = argmin(&g, &weighted, kind, &weighted.cells).unwrap();
            assert_eq!(t.node, k, "{kind:?}");
        }
    }

    #[test]
    fn zero_input_at_target() {
        let g = rect_grid(50);
        let q = Point::new(0.41, 0.37);
        let f = distance_field(&g, q, Restriction::Whole).unwrap();
        let u = control_input(q, &f, &g, 0.1, GradientMode::Natural, 0, 10).unwrap();
        assert_eq!(u, Point::ZERO);
        let p = Point::new(0.7, 0.6);
        let u = control_input(p, &f, &g, 0.1, GradientMode::Natural, 0, 10).unwrap();
        let grad = f.gradient(&g, p).unwrap();
        assert!(u.normalized().dot(grad.normalized()) < -0.999999);
        // flat metric: heads straight for the target
        assert!(u.normalized().dot((q - p).normalized()) > 0.99);
    }

    #[test]
    fn stale_field_rejected() {
        let g = rect_grid(30);
        let f = distance_field(&g, Point::new(0.5, 0.5), Restriction::Whole).unwrap();
        let r = control_input(Point::new(0.2, 0.2), &f, &g, 0.1, GradientMode::Natural, 11, 10);
        assert!(matches!(r, Err(Error::StaleField { .. })));
    }

    #[test]
    fn euler_step_and_guard() {
        let d = crate::geometry::circular_domain(0.5, 1.0).unwrap();
        let a = AgentState {
            id: 0,
            position: Point::new(0.75, 0.0),
            input: Point::ZERO,
        };
        let out = agent_step(&a, Point::ZERO, 0.02, &d);
        assert_eq!(out.agent.position, a.position);
        let out = agent_step(&a, Point::new(0.0, 1.0), 0.02, &d);
        assert!((out.agent.position.distance(a.position) - 0.02).abs() < 1e-15);
        assert_eq!(out.halvings, 0);
        // a step that would jump across the outer boundary is shortened
        let out = agent_step(&a, Point::new(10.0, 0.0), 0.05, &d);
        assert!(out.halvings > 0 && !out.frozen);
        assert!(d.barrier(out.agent.position) > 0.0);
    }
}

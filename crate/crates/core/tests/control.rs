use std::sync::Arc;

use circov::control::{
    agent_step, control_input, find_local_optimum, local_cost, AgentState, CostKind, CoverageCostConfig,
    GradientMode, WeightedCells,
};
use circov::geometry::{case_study_domain, Point};
use circov::metric::{distance_field, MetricGrid, Restriction, UniformRect};
use circov::partition::{decompose, DensityField, PartitionState};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const SPACING: f64 = 0.02;

fn case_grid() -> MetricGrid {
    MetricGrid::build(Arc::new(case_study_domain()), SPACING).unwrap()
}

fn agent(p: Point) -> AgentState {
    AgentState {
        id: 0,
        position: p,
        input: Point::ZERO,
    }
}

#[test]
fn zero_input_keeps_position() {
    let d = case_study_domain();
    let p = Point::new(1.2, 0.1);
    let out = agent_step(&agent(p), Point::ZERO, 0.02, &d);
    assert_eq!(out.agent.position, p);
    assert_eq!(out.halvings, 0);
}

#[test]
fn euler_step_covers_speed_times_dt() {
    let d = case_study_domain();
    let p = Point::new(1.2, 0.1);
    let u = Point::new(-0.3, 0.4);
    let out = agent_step(&agent(p), u, 0.1, &d);
    assert!((out.agent.position.distance(p) - 0.05).abs() < 1e-12);
}

#[test]
fn random_steps_never_leave_the_domain() {
    let d = case_study_domain();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut a = agent(Point::new(1.2, 0.0));
    for _ in 0..10_000 {
        let u = Point::new(rng.gen_range(-5.0..5.0), rng.gen_range(-5.0..5.0));
        a = agent_step(&a, u, 0.02, &d).agent;
        assert!(d.barrier(a.position) > 0.0, "{:?}", a.position);
    }
}

#[test]
fn input_opposes_distance_gradient() {
    let g = case_grid();
    let q = Point::new(-1.0, 0.2);
    let f = distance_field(&g, q, Restriction::Whole).unwrap();
    for p in [
        Point::new(-0.9, 0.7),
        Point::new(-1.2, -0.4),
        Point::new(-0.2, 1.0),
    ] {
        let u = control_input(p, &f, &g, 0.1, GradientMode::Natural, 0, 10).unwrap();
        let grad = f.gradient(&g, p).unwrap();
        assert!((u.normalized().dot(grad.normalized()) + 1.0).abs() < 1e-12);
        let ue = control_input(p, &f, &g, 0.1, GradientMode::Euclidean, 0, 10).unwrap();
        let hp = g.barrier(p);
        assert!((u - ue * (hp * hp)).norm() < 1e-12);
    }
    assert_eq!(
        control_input(q, &f, &g, 0.1, GradientMode::Natural, 0, 10).unwrap(),
        Point::ZERO
    );
}

#[test]
fn speed_vanishes_towards_the_boundary() {
    let g = case_grid();
    let q = Point::new(1.25, 0.0);
    let f = distance_field(&g, q, Restriction::Whole).unwrap();
    // points on the ray where h = 0.1 h_max · 2^-k, found by bisection
    let at_clearance = |h: f64| {
        let (mut lo, mut hi) = (1.5, 1.8);
        for _ in 0..60 {
            let mid = 0.5 * (lo + hi);
            if g.barrier(Point::new(mid, 0.0)) > h {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Point::new(0.5 * (lo + hi), 0.0)
    };
    let mut last = f64::INFINITY;
    for k in 0..8 {
        let p = at_clearance(0.1 * g.max_h() * 0.5f64.powi(k));
        let u = control_input(p, &f, &g, 0.1, GradientMode::Natural, 0, 10)
            .unwrap()
            .norm();
        assert!(u < last, "speed rose to {u} at {p:?}");
        last = u;
    }
    assert!(last < 1e-2);
}

#[test]
fn euclidean_sector_optimum_is_the_centroid() {
    let rect = UniformRect {
        lo: Point::new(0.0, 0.0),
        hi: Point::new(0.6, 0.4),
        h: 1.0,
    };
    let g = MetricGrid::build(Arc::new(rect), SPACING).unwrap();
    let cells: Vec<usize> = g.inside_nodes().collect();
    let sub = WeightedCells::new(0, cells.clone(), |_| g.cell_area());
    let cfg = CoverageCostConfig {
        kind: CostKind::EuclideanSquared,
        ..Default::default()
    };
    let t = find_local_optimum(&sub, &g, &cfg, None).unwrap();
    let centroid = cells
        .iter()
        .map(|&k| g.node_point(k))
        .fold(Point::ZERO, |a, b| a + b)
        * (1.0 / cells.len() as f64);
    assert!(
        t.point.distance(centroid) <= 2.0 * SPACING,
        "{:?} vs {centroid:?}",
        t.point
    );

    // J scales linearly with the density.
    let heavy = WeightedCells::new(0, cells, |_| 3.0 * g.cell_area());
    let p = Point::new(0.21, 0.13);
    let (a, b) = (
        local_cost(p, &sub, &g, CostKind::GeodesicSquared).unwrap(),
        local_cost(p, &heavy, &g, CostKind::GeodesicSquared).unwrap(),
    );
    assert!((b - 3.0 * a).abs() < 1e-9 * b);
}

#[test]
fn frozen_bars_energy_decreases_and_agent_arrives() {
    let d = case_study_domain();
    let g = case_grid();
    let state = PartitionState::evenly_spaced(&d, 6, 0.0, SPACING).unwrap();
    let dec = decompose(&d, &state, &g).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for i in [0, 3] {
        let sub = WeightedCells::from_decomposition(&dec, i, &DensityField::CaseStudy, &d, &g);
        let target = find_local_optimum(&sub, &g, &CoverageCostConfig::default(), None).unwrap();
        let field = distance_field(&g, target.point, Restriction::Cells(&sub.cells)).unwrap();
        let start = loop {
            let k = sub.cells[rng.gen_range(0..sub.cells.len())];
            if g.h(k) > 0.2 * g.max_h() {
                break g.node_point(k);
            }
        };
        let mut a = agent(start);
        let mut e_prev = 0.5 * field.value_at(&g, start).powi(2);
        let goal = 2.0 * SPACING / g.barrier(target.point);
        let mut arrived = false;
        for _ in 0..5000 {
            let u = control_input(a.position, &field, &g, 0.5, GradientMode::Natural, 0, 10).unwrap();
            a = agent_step(&a, u, 0.02, &d).agent;
            let dist = field.value_at(&g, a.position);
            let e = 0.5 * dist * dist;
            assert!(
                e <= e_prev * (1.0 + 1e-4) + 1e-12,
                "subregion {i}: E rose {e_prev} -> {e}"
            );
            e_prev = e;
            if dist < goal {
                arrived = true;
                break;
            }
        }
        assert!(arrived, "subregion {i}: stopped at E = {e_prev}");
    }
}

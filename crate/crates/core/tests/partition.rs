use std::sync::Arc;

use circov::geometry::{case_study_domain, circular_domain, AnnulusDomain, Point};
use circov::metric::MetricGrid;
use circov::oracle::monte_carlo_mass;
use circov::partition::{
    bar_flux, bar_segment, decompose, partition_step, swept_flux, translated_bar, workload, DensityField,
    PartitionState, WorkloadVector,
};
use circov::sim::random_bars;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const SPACING: f64 = 0.02;

fn setup(domain: AnnulusDomain) -> (AnnulusDomain, MetricGrid) {
    let grid = MetricGrid::build(Arc::new(domain.clone()), SPACING).unwrap();
    (domain, grid)
}

fn masses(
    domain: &AnnulusDomain,
    grid: &MetricGrid,
    state: &PartitionState,
    rho: &DensityField,
) -> WorkloadVector {
    let d = decompose(domain, state, grid).unwrap();
    workload(&d, rho, domain, grid)
}

#[test]
fn case_study_bar_along_x_axis() {
    let d = case_study_domain();
    let bar = bar_segment(&d, 0.0, SPACING).unwrap();
    assert!(bar.start.distance(Point::new(0.7, 0.0)) < 1e-9);
    assert!(bar.end.distance(Point::new(1.8, 0.0)) < 1e-6);
    assert!(d.barrier(bar.start).abs() < 1e-6 && d.barrier(bar.end).abs() < 1e-6);
}

#[test]
fn every_interior_cell_is_labelled_once() {
    let (d, g) = setup(case_study_domain());
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let state = PartitionState::new(&d, &random_bars(&d, 6, SPACING, &mut rng), SPACING).unwrap();
    let dec = decompose(&d, &state, &g).unwrap();
    let total: usize = (0..6).map(|i| dec.cells(i).len()).sum();
    let labelled = g.inside_nodes().filter(|&k| dec.label(k).is_some()).count();
    assert_eq!(total, labelled);
    assert!(labelled <= g.inside_count());
    for k in g.inside_nodes() {
        if let Some(i) = dec.label(k) {
            assert!(dec.cells(i).contains(&k));
        }
    }
}

#[test]
fn uniform_quarters_of_the_circle_annulus() {
    let (d, g) = setup(circular_domain(0.5, 1.0).unwrap());
    let state = PartitionState::evenly_spaced(&d, 4, 0.1, SPACING).unwrap();
    let w = masses(&d, &g, &state, &DensityField::Uniform(1.0));
    let expect = 0.75 * std::f64::consts::PI / 4.0;
    for m in &w.m {
        assert!((m / expect - 1.0).abs() < 0.01, "{m}");
    }
}

#[test]
fn total_mass_against_monte_carlo() {
    let (d, g) = setup(case_study_domain());
    let state = PartitionState::evenly_spaced(&d, 6, 0.0, SPACING).unwrap();
    let w = masses(&d, &g, &state, &DensityField::CaseStudy);
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mc = monte_carlo_mass(&d, &DensityField::CaseStudy, 1_000_000, &mut rng);
    assert!((w.total / mc - 1.0).abs() < 0.01, "{} vs {mc}", w.total);
}

#[test]
fn doubling_density_doubles_workloads() {
    let (d, g) = setup(case_study_domain());
    let state = PartitionState::evenly_spaced(&d, 6, 0.3, SPACING).unwrap();
    let a = masses(&d, &g, &state, &DensityField::CaseStudy);
    let b = masses(&d, &g, &state, &DensityField::CaseStudy.scaled(2.0));
    for (x, y) in a.m.iter().zip(&b.m) {
        assert!((y - 2.0 * x).abs() <= 1e-12 * y.abs());
    }
}

#[test]
fn bar_flux_closed_forms() {
    let d = circular_domain(0.5, 1.0).unwrap();
    let bar = bar_segment(&d, 1.0, SPACING).unwrap();
    assert!((bar_flux(&bar, &d, &DensityField::Uniform(1.0)) - 0.5).abs() < 1e-7);
    let r = DensityField::RadialLinear {
        base: 0.0,
        slope: 1.0,
    };
    assert!((bar_flux(&bar, &d, &r) - 0.375).abs() < 1e-5);
}

#[test]
fn rigid_translation_moves_mass_at_bar_flux_rate() {
    let (d, g) = setup(circular_domain(0.5, 1.0).unwrap());
    let rho = DensityField::RadialLinear {
        base: 1.0,
        slope: 0.5,
    };
    let state = PartitionState::evenly_spaced(&d, 4, 0.2, SPACING).unwrap();
    let delta = 2.0 * SPACING;
    for i in 0..4 {
        let bar = &state.bars()[i];
        let plus = state.with_bar(i, translated_bar(&d, bar, delta, SPACING).unwrap());
        let minus = state.with_bar(i, translated_bar(&d, bar, -delta, SPACING).unwrap());
        let (mp, mm) = (masses(&d, &g, &plus, &rho), masses(&d, &g, &minus, &rho));
        let own = (mp.m[i] - mm.m[i]) / (2.0 * delta);
        let prev = (mp.m[(i + 3) % 4] - mm.m[(i + 3) % 4]) / (2.0 * delta);
        let f = bar_flux(bar, &d, &rho);
        assert!((own / f - 1.0).abs() < 0.02, "bar {i}: {own} vs {f}");
        assert!((prev / f + 1.0).abs() < 0.02, "bar {i}: {prev} vs {f}");
    }
}

#[test]
fn sliding_moves_mass_at_swept_flux_rate() {
    let (d, g) = setup(circular_domain(0.5, 1.0).unwrap());
    let rho = DensityField::Uniform(1.0);
    let state = PartitionState::evenly_spaced(&d, 4, 0.2, SPACING).unwrap();
    let delta = 2.0 * SPACING;
    let ls = state.arc_lengths();
    let shifted = |s: f64| {
        let mut l = ls.clone();
        l[1] += s;
        PartitionState::new(&d, &l, SPACING).unwrap()
    };
    let (mp, mm) = (
        masses(&d, &g, &shifted(delta), &rho),
        masses(&d, &g, &shifted(-delta), &rho),
    );
    // ν points clockwise, i.e. towards decreasing arc length.
    let rate = (mm.m[1] - mp.m[1]) / (2.0 * delta);
    // Footpoint on the inner circle (r = 0.5): the sector grows at ∫ r/0.5 dr = 0.75.
    let swept = swept_flux(&state.bars()[1], &d, &rho);
    assert!((swept - 0.75).abs() < 1e-6, "{swept}");
    assert!((rate / swept - 1.0).abs() < 0.02, "{rate} vs {swept}");
}

#[test]
fn mass_is_conserved_across_steps() {
    let (d, g) = setup(case_study_domain());
    let rho = DensityField::CaseStudy;
    let mut state = PartitionState::evenly_spaced(&d, 6, 0.4, SPACING).unwrap();
    let total0 = masses(&d, &g, &state, &rho).total;
    for _ in 0..20 {
        let w = masses(&d, &g, &state, &rho);
        assert!(
            (w.total - total0).abs() < 2e-3 * total0,
            "{} vs {total0}",
            w.total
        );
        state = partition_step(&d, &state, &w, 0.02, 0.5).unwrap().0;
    }
}

#[test]
fn lyapunov_decreases_with_agents_frozen() {
    let (d, g) = setup(case_study_domain());
    let rho = DensityField::CaseStudy;
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut state = PartitionState::new(&d, &random_bars(&d, 6, SPACING, &mut rng), SPACING).unwrap();
    let mut v_prev = f64::INFINITY;
    for _ in 0..150 {
        let w = masses(&d, &g, &state, &rho);
        let v = w.lyapunov();
        assert!(v <= v_prev + 1e-6 * v_prev.min(1e300), "V rose {v_prev} -> {v}");
        v_prev = v;
        state = partition_step(&d, &state, &w, 0.02, 0.02).unwrap().0;
    }
}

#[test]
fn small_lyapunov_means_small_neighbour_differences() {
    let w = WorkloadVector::from_masses(vec![1.0, 1.0 + 1e-5, 1.0 - 1e-5, 1.0]);
    assert!(w.lyapunov() < 1e-9);
    assert!(w.max_adjacent_difference() < 3e-5);
}

#[test]
fn heavier_first_region_shrinks_with_two_bars() {
    let d = circular_domain(0.5, 1.0).unwrap();
    let state = PartitionState::new(&d, &[0.0, 1.0], SPACING).unwrap();
    let w = WorkloadVector::from_masses(vec![2.0, 1.0]);
    let (next, _) = partition_step(&d, &state, &w, 0.1, 0.1).unwrap();
    assert!(next.bars()[0].arc_length() > 0.0);
    assert!(next.bars()[1].arc_length() < 1.0);
}

fn cyclic_ok(state: &PartitionState) -> bool {
    let n = state.len();
    (0..n).all(|i| state.gap(i) >= state.min_allowed_gap() - 1e-12)
        && ((0..n).map(|i| state.gap(i)).sum::<f64>() - state.perimeter()).abs() < 1e-9
}

#[test]
fn ordering_survives_ten_thousand_random_steps() {
    let d = case_study_domain();
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let mut state = PartitionState::evenly_spaced(&d, 6, 0.0, SPACING).unwrap();
    for _ in 0..10_000 {
        let m: Vec<f64> = (0..6).map(|_| rng.gen_range(0.0..5.0)).collect();
        state = partition_step(&d, &state, &WorkloadVector::from_masses(m), 1.0, 0.5)
            .unwrap()
            .0;
        assert!(cyclic_ok(&state));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn each_bar_reads_only_its_two_neighbours(
        m in prop::collection::vec(0.1f64..3.0, 5),
        i in 0usize..5,
        j in 0usize..5,
        bump in 0.5f64..2.0,
    ) {
        let d = case_study_domain();
        let state = PartitionState::evenly_spaced(&d, 5, 0.0, SPACING).unwrap();
        let step = |m: Vec<f64>| partition_step(&d, &state, &WorkloadVector::from_masses(m), 0.01, 0.02).unwrap().0;
        let base = step(m.clone());
        let mut changed = m.clone();
        changed[j] += bump;
        let other = step(changed);
        if j != i && j != (i + 4) % 5 {
            prop_assert_eq!(base.bars()[i].arc_length(), other.bars()[i].arc_length());
        }
    }

    #[test]
    fn equal_workloads_leave_bars_in_place(m in 0.1f64..10.0, n in 1usize..8) {
        let d = case_study_domain();
        let state = PartitionState::evenly_spaced(&d, n, 0.7, SPACING).unwrap();
        let (next, clamped) = partition_step(&d, &state, &WorkloadVector::from_masses(vec![m; n]), 0.02, 0.02).unwrap();
        prop_assert_eq!(clamped, 0);
        prop_assert_eq!(next.arc_lengths(), state.arc_lengths());
    }
}

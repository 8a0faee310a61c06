use std::f64::consts::{FRAC_PI_2, PI, TAU};

use circov::geometry::{case_study_domain, circular_domain, AnnulusDomain, Point, PolarCurve};
use proptest::prelude::*;

fn domain() -> AnnulusDomain {
    case_study_domain()
}

#[test]
fn paper_radii() {
    let d = domain();
    assert!((d.inner().radius(0.0) - 0.7).abs() < 1e-12);
    assert!((d.inner().radius(FRAC_PI_2) - 0.4).abs() < 1e-12);
    assert!((d.outer().radius(0.0) - 1.8).abs() < 1e-12);
}

#[test]
fn inner_strictly_inside_outer() {
    let d = domain();
    for k in 0..10_000 {
        let t = TAU * k as f64 / 10_000.0;
        let (ri, ro) = (d.inner().radius(t), d.outer().radius(t));
        assert!(ri > 0.0 && ri < ro, "theta {t}");
    }
}

#[test]
fn barrier_vanishes_on_boundary() {
    let d = domain();
    for k in 0..2000 {
        let t = TAU * k as f64 / 2000.0;
        assert!(d.barrier(d.inner().eval(t)).abs() < 1e-9);
        assert!(d.barrier(d.outer().eval(t)).abs() < 1e-9);
    }
    assert!((d.barrier(Point::new(1.25, 0.0)) - 0.3025).abs() < 1e-12);
    assert!(d.barrier(Point::ZERO) < 0.0);
    assert!(!d.contains(Point::ZERO));
    assert!(d.contains(Point::new(1.25, 0.0)));
    assert!(!d.contains(Point::new(3.6, 0.0)));
}

#[test]
fn case_study_extent() {
    // The outer curve spans about 3.77 m × 3.66 m: it fits the 4 m width of
    // the paper's arena but overshoots its 3.6 m depth by ~6 cm.
    let (lo, hi) = domain().bounding_box();
    assert!(hi.x - lo.x < 4.0, "{lo:?} {hi:?}");
    assert!((hi.y - lo.y - 3.659).abs() < 0.01, "{lo:?} {hi:?}");
}

#[test]
fn inverse_ellipse_with_equal_axes_is_a_circle() {
    let e = PolarCurve::inverse_ellipse(0.6, 0.6, Point::ZERO);
    let c = PolarCurve::circle(0.6, Point::ZERO);
    for k in 0..64 {
        let t = TAU * k as f64 / 64.0;
        assert!((e.radius(t) - c.radius(t)).abs() < 1e-14);
        assert!((e.curvature(t) - c.curvature(t)).abs() < 1e-9);
    }
}

#[test]
fn circle_frame_is_radial() {
    let d = circular_domain(0.5, 1.0).unwrap();
    for k in 0..16 {
        let l = d.perimeter() * k as f64 / 16.0;
        let f = d.frame_at_arclength(l);
        let radial = f.footpoint.normalized();
        assert!((f.normal.dot(radial) - 1.0).abs() < 1e-9);
        assert!((f.curvature - 2.0).abs() < 1e-6);
        // clockwise tangent
        assert!(f.tangent.cross(radial) > 0.99);
    }
}

#[test]
fn gradient_is_mirror_symmetric() {
    let d = AnnulusDomain::new(
        PolarCurve::inverse_ellipse(0.7, 0.4, Point::ZERO),
        PolarCurve::fourier(1.5, vec![], vec![(7, 0.3)], Point::ZERO),
    )
    .unwrap();
    for k in 1..50 {
        let t = PI * k as f64 / 50.0;
        let r = 0.5 * (d.inner().radius(t) + d.outer().radius(t));
        let p = Point::polar(r, t);
        let g = d.grad_barrier(p);
        let m = d.grad_barrier(Point::new(p.x, -p.y));
        assert!((g.x - m.x).abs() < 1e-9 && (g.y + m.y).abs() < 1e-9);
    }
}

#[test]
fn radial_gradient_on_circle_annulus() {
    let d = circular_domain(0.5, 1.0).unwrap();
    let g = d.grad_barrier(Point::new(0.75, 0.0));
    assert!((g.x - (1.0 + 0.5 - 1.5)).abs() < 1e-12 && g.y.abs() < 1e-12);
    let g = d.grad_barrier(Point::new(0.6, 0.0));
    assert!((g.x - (1.5 - 1.2)).abs() < 1e-12 && g.y.abs() < 1e-12);
}

#[test]
fn arc_length_table_is_monotone() {
    let d = domain();
    let mut last = -1.0;
    for k in 0..=4096 {
        let l = d.arc_length_of_theta(TAU * k as f64 / 4096.0 * 0.999_999);
        assert!(l > last);
        last = l;
    }
    assert!((last - d.perimeter()).abs() < 1e-3);
}

proptest! {
    #[test]
    fn contains_iff_positive_barrier(x in -2.0f64..2.0, y in -1.8f64..1.8) {
        let d = domain();
        let q = Point::new(x, y);
        prop_assert_eq!(d.contains(q), d.barrier(q) > 0.0);
    }

    #[test]
    fn barrier_gradient_matches_finite_differences(t in 0.0f64..TAU, s in 0.05f64..0.95) {
        let d = domain();
        let (ri, ro) = (d.inner().radius(t), d.outer().radius(t));
        let p = Point::polar(ri + s * (ro - ri), t);
        let e = 1e-6;
        let fd = Point::new(
            (d.barrier(p + Point::new(e, 0.0)) - d.barrier(p - Point::new(e, 0.0))) / (2.0 * e),
            (d.barrier(p + Point::new(0.0, e)) - d.barrier(p - Point::new(0.0, e))) / (2.0 * e),
        );
        let g = d.grad_barrier(p);
        prop_assert!((g - fd).norm() <= 1e-4 * g.norm().max(1.0));
    }

    #[test]
    fn arc_length_round_trip(l in 0.0f64..1.0) {
        let d = domain();
        let l = l * d.perimeter();
        let f = d.frame_at_arclength(l);
        let back = d.arc_length_of_theta(f.theta);
        prop_assert!((back - l).abs() < 1e-6);
        prop_assert!(f.tangent.dot(f.normal).abs() < 1e-9);
        prop_assert!((f.tangent.norm() - 1.0).abs() < 1e-9);
        prop_assert!(d.barrier(f.footpoint).abs() < 1e-9);
    }
}

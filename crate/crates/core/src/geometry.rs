//! Annulus domains bounded by two star-shaped polar curves.
//!
//! The domain is `{q : R_in(θ) < r < R_out(θ)}` in polar coordinates about a
//! shared center. The barrier `h(q) = (R_out(θ) - r)(r - R_in(θ))` is positive
//! inside, zero on both boundary curves and negative outside.

use std::f64::consts::TAU;
use std::ops::{Add, AddAssign, Mul, Neg, Sub};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A point (or free vector) in the world frame, meters.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const ZERO: Point = Point { x: 0.0, y: 0.0 };

    pub const fn new(x: f64, y: f64) -> Self {
        Point { x, y }
    }

    pub fn polar(r: f64, theta: f64) -> Self {
        Point::new(r * theta.cos(), r * theta.sin())
    }

    pub fn dot(self, other: Point) -> f64 {
        self.x * other.x + self.y * other.y
    }

    /// z-component of the planar cross product.
    pub fn cross(self, other: Point) -> f64 {
        self.x * other.y - self.y * other.x
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn distance(self, other: Point) -> f64 {
        (self - other).norm()
    }

    /// Unit vector in the same direction; the zero vector maps to itself.
    pub fn normalized(self) -> Point {
        let n = self.norm();
        if n > 0.0 {
            self * (1.0 / n)
        } else {
            Point::ZERO
        }
    }

    /// Counter-clockwise quarter turn.
    pub fn perp(self) -> Point {
        Point::new(-self.y, self.x)
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }
}

impl Add for Point {
    type Output = Point;
    fn add(self, o: Point) -> Point {
        Point::new(self.x + o.x, self.y + o.y)
    }
}

impl AddAssign for Point {
    fn add_assign(&mut self, o: Point) {
        self.x += o.x;
        self.y += o.y;
    }
}

impl Sub for Point {
    type Output = Point;
    fn sub(self, o: Point) -> Point {
        Point::new(self.x - o.x, self.y - o.y)
    }
}

impl Mul<f64> for Point {
    type Output = Point;
    fn mul(self, k: f64) -> Point {
        Point::new(self.x * k, self.y * k)
    }
}

impl Neg for Point {
    type Output = Point;
    fn neg(self) -> Point {
        Point::new(-self.x, -self.y)
    }
}

/// Wraps an angle into `[0, 2π)`.
pub fn wrap_angle(theta: f64) -> f64 {
    let t = theta.rem_euclid(TAU);
    if t >= TAU {
        0.0
    } else {
        t
    }
}

/// Radial profile of a star-shaped closed curve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum CurveShape {
    /// `R(θ) = 1 / sqrt(cos²θ/a² + sin²θ/b²)`: an axis-aligned ellipse with
    /// semi-axes `a` (along x) and `b` (along y). `a == b` is a circle.
    InverseEllipse { a: f64, b: f64 },
    /// `R(θ) = r0 + Σ a_k sin(kθ) + Σ b_k cos(kθ)`.
    Fourier {
        r0: f64,
        sin: Vec<(u32, f64)>,
        cos: Vec<(u32, f64)>,
    },
}

/// A closed curve given in polar form about `center`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolarCurve {
    pub shape: CurveShape,
    pub center: Point,
}

impl PolarCurve {
    pub fn circle(radius: f64, center: Point) -> Self {
        Self::inverse_ellipse(radius, radius, center)
    }

    pub fn inverse_ellipse(a: f64, b: f64, center: Point) -> Self {
        PolarCurve {
            shape: CurveShape::InverseEllipse { a, b },
            center,
        }
    }

    pub fn fourier(r0: f64, sin: Vec<(u32, f64)>, cos: Vec<(u32, f64)>, center: Point) -> Self {
        PolarCurve {
            shape: CurveShape::Fourier { r0, sin, cos },
            center,
        }
    }

    /// `(R, R', R'')` at `theta`.
    pub fn radius_derivs(&self, theta: f64) -> (f64, f64, f64) {
        match &self.shape {
            CurveShape::InverseEllipse { a, b } => {
                // g = cos²/a² + sin²/b² = A + B cos 2θ, R = g^{-1/2}
                let ia = 1.0 / (a * a);
                let ib = 1.0 / (b * b);
                let big_a = 0.5 * (ia + ib);
                let big_b = 0.5 * (ia - ib);
                let (s2, c2) = (2.0 * theta).sin_cos();
                let g = big_a + big_b * c2;
                let g1 = -2.0 * big_b * s2;
                let g2 = -4.0 * big_b * c2;
                let r = g.powf(-0.5);
                let r1 = -0.5 * g.powf(-1.5) * g1;
                let r2 = 0.75 * g.powf(-2.5) * g1 * g1 - 0.5 * g.powf(-1.5) * g2;
                (r, r1, r2)
            }
            CurveShape::Fourier { r0, sin, cos } => {
                let mut r = *r0;
                let mut r1 = 0.0;
                let mut r2 = 0.0;
                for &(k, a) in sin {
                    let k = f64::from(k);
                    let (s, c) = (k * theta).sin_cos();
                    r += a * s;
                    r1 += a * k * c;
                    r2 -= a * k * k * s;
                }
                for &(k, b) in cos {
                    let k = f64::from(k);
                    let (s, c) = (k * theta).sin_cos();
                    r += b * c;
                    r1 -= b * k * s;
                    r2 -= b * k * k * c;
                }
                (r, r1, r2)
            }
        }
    }

    pub fn radius(&self, theta: f64) -> f64 {
        self.radius_derivs(theta).0
    }

    /// Point on the curve at polar angle `theta` (wrapped mod 2π).
    pub fn eval(&self, theta: f64) -> Point {
        let theta = wrap_angle(theta);
        self.center + Point::polar(self.radius(theta), theta)
    }

    /// Derivative of the curve point with respect to θ.
    pub fn velocity(&self, theta: f64) -> Point {
        let (r, r1, _) = self.radius_derivs(theta);
        let (s, c) = theta.sin_cos();
        Point::new(r1 * c - r * s, r1 * s + r * c)
    }

    /// Signed curvature for counter-clockwise traversal; positive where the
    /// curve bends toward the center.
    pub fn signed_curvature(&self, theta: f64) -> f64 {
        let (r, r1, r2) = self.radius_derivs(theta);
        (r * r + 2.0 * r1 * r1 - r * r2) / (r * r + r1 * r1).powf(1.5)
    }

    pub fn curvature(&self, theta: f64) -> f64 {
        self.signed_curvature(theta).abs()
    }

    fn validate(&self, name: &str) -> Result<()> {
        if !self.center.is_finite() {
            return Err(Error::Geometry(format!("{name} curve center is not finite")));
        }
        match &self.shape {
            CurveShape::InverseEllipse { a, b } => {
                if !(a.is_finite() && b.is_finite() && *a > 0.0 && *b > 0.0) {
                    return Err(Error::Geometry(format!(
                        "{name} curve semi-axes must be positive, got a={a}, b={b}"
                    )));
                }
            }
            CurveShape::Fourier { r0, sin, cos } => {
                let all_finite = r0.is_finite() && sin.iter().chain(cos.iter()).all(|(_, c)| c.is_finite());
                if !all_finite {
                    return Err(Error::Geometry(format!(
                        "{name} curve coefficients must be finite"
                    )));
                }
            }
        }
        for k in 0..SAMPLE_COUNT {
            let theta = TAU * k as f64 / SAMPLE_COUNT as f64;
            let r = self.radius(theta);
            if !(r > 0.0) {
                return Err(Error::Geometry(format!(
                    "{name} curve radius is not positive at θ={theta:.4} (R={r})"
                )));
            }
        }
        Ok(())
    }
}

const SAMPLE_COUNT: usize = 4096;

/// Default number of nodes in the θ ↔ arc-length table.
pub const ARC_TABLE_NODES: usize = 4096;

/// Moving frame on the inner boundary.
///
/// `tangent` is the clockwise unit tangent (the direction in which the
/// workload of the subregion starting at this footpoint grows); `normal`
/// points away from the inner hole.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrenetFrame {
    pub footpoint: Point,
    pub tangent: Point,
    pub normal: Point,
    pub curvature: f64,
    /// Signed curvature for counter-clockwise traversal (positive for a
    /// convex hole).
    pub signed_curvature: f64,
    pub arc_length: f64,
    pub theta: f64,
}

/// Monotone θ ↔ arc-length table for a closed polar curve.
#[derive(Debug, Clone)]
struct ArcTable {
    /// Cumulative arc length at θ_k = 2πk/n, k = 0..=n.
    lengths: Vec<f64>,
}

impl ArcTable {
    fn build(curve: &PolarCurve, nodes: usize) -> Self {
        let n = nodes.max(8);
        let step = TAU / n as f64;
        let speed = |t: f64| curve.velocity(t).norm();
        let mut lengths = Vec::with_capacity(n + 1);
        lengths.push(0.0);
        let mut acc = 0.0;
        for k in 0..n {
            let t0 = k as f64 * step;
            // Simpson on each panel.
            acc += step / 6.0 * (speed(t0) + 4.0 * speed(t0 + 0.5 * step) + speed(t0 + step));
            lengths.push(acc);
        }
        ArcTable { lengths }
    }

    fn perimeter(&self) -> f64 {
        *self.lengths.last().unwrap()
    }

    fn step(&self) -> f64 {
        TAU / (self.lengths.len() - 1) as f64
    }

    fn arc_length(&self, theta: f64) -> f64 {
        let theta = wrap_angle(theta);
        let pos = theta / self.step();
        let k = (pos.floor() as usize).min(self.lengths.len() - 2);
        let frac = pos - k as f64;
        self.lengths[k] + frac * (self.lengths[k + 1] - self.lengths[k])
    }

    fn theta(&self, l: f64) -> f64 {
        let p = self.perimeter();
        let l = l.rem_euclid(p);
        let k = match self
            .lengths
            .binary_search_by(|v| v.partial_cmp(&l).unwrap_or(std::cmp::Ordering::Less))
        {
            Ok(i) => i.min(self.lengths.len() - 2),
            Err(i) => i.saturating_sub(1).min(self.lengths.len() - 2),
        };
        let seg = self.lengths[k + 1] - self.lengths[k];
        let frac = if seg > 0.0 {
            (l - self.lengths[k]) / seg
        } else {
            0.0
        };
        (k as f64 + frac) * self.step()
    }
}

/// Region between two polar curves sharing a center.
#[derive(Debug, Clone)]
pub struct AnnulusDomain {
    inner: PolarCurve,
    outer: PolarCurve,
    arc: ArcTable,
    min_gap: f64,
    max_outer: f64,
}

impl AnnulusDomain {
    pub fn new(inner: PolarCurve, outer: PolarCurve) -> Result<Self> {
        Self::with_table_nodes(inner, outer, ARC_TABLE_NODES)
    }

    pub fn with_table_nodes(inner: PolarCurve, outer: PolarCurve, nodes: usize) -> Result<Self> {
        inner.validate("inner")?;
        outer.validate("outer")?;
        if inner.center != outer.center {
            return Err(Error::Geometry(
                "inner and outer curves must share a center".into(),
            ));
        }
        let mut min_gap = f64::INFINITY;
        let mut max_outer: f64 = 0.0;
        for k in 0..SAMPLE_COUNT {
            let theta = TAU * k as f64 / SAMPLE_COUNT as f64;
            let ri = inner.radius(theta);
            let ro = outer.radius(theta);
            if ri >= ro {
                return Err(Error::Geometry(format!(
                    "inner curve is not strictly inside the outer curve at θ={theta:.4} \
                     (R_in={ri:.6}, R_out={ro:.6})"
                )));
            }
            min_gap = min_gap.min(ro - ri);
            max_outer = max_outer.max(ro);
        }
        let arc = ArcTable::build(&inner, nodes);
        Ok(AnnulusDomain {
            inner,
            outer,
            arc,
            min_gap,
            max_outer,
        })
    }

    pub fn inner(&self) -> &PolarCurve {
        &self.inner
    }

    pub fn outer(&self) -> &PolarCurve {
        &self.outer
    }

    pub fn center(&self) -> Point {
        self.inner.center
    }

    /// Perimeter of the inner boundary.
    pub fn perimeter(&self) -> f64 {
        self.arc.perimeter()
    }

    /// Smallest sampled radial clearance `R_out - R_in`.
    pub fn min_gap(&self) -> f64 {
        self.min_gap
    }

    pub fn diameter(&self) -> f64 {
        2.0 * self.max_outer
    }

    /// Polar coordinates `(r, θ)` of `q` about the shared center, θ in `[0, 2π)`.
    pub fn to_polar(&self, q: Point) -> (f64, f64) {
        let d = q - self.center();
        (d.norm(), wrap_angle(d.y.atan2(d.x)))
    }

    pub fn barrier(&self, q: Point) -> f64 {
        let (r, theta) = self.to_polar(q);
        (self.outer.radius(theta) - r) * (r - self.inner.radius(theta))
    }

    pub fn contains(&self, q: Point) -> bool {
        let (r, theta) = self.to_polar(q);
        self.inner.radius(theta) < r && r < self.outer.radius(theta)
    }

    /// Analytic gradient of the barrier from the polar derivatives of both
    /// curves. Zero at the center, where the polar chart is singular.
    pub fn grad_barrier(&self, q: Point) -> Point {
        let (r, theta) = self.to_polar(q);
        if r == 0.0 {
            return Point::ZERO;
        }
        let (ri, dri, _) = self.inner.radius_derivs(theta);
        let (ro, dro, _) = self.outer.radius_derivs(theta);
        let dh_dr = ro + ri - 2.0 * r;
        let dh_dt = dro * (r - ri) - (ro - r) * dri;
        let (s, c) = theta.sin_cos();
        let e_r = Point::new(c, s);
        let e_t = Point::new(-s, c);
        e_r * dh_dr + e_t * (dh_dt / r)
    }

    /// Axis-aligned bounding box `(min, max)` of the outer curve.
    pub fn bounding_box(&self) -> (Point, Point) {
        let mut lo = Point::new(f64::INFINITY, f64::INFINITY);
        let mut hi = Point::new(f64::NEG_INFINITY, f64::NEG_INFINITY);
        for k in 0..SAMPLE_COUNT {
            let p = self.outer.eval(TAU * k as f64 / SAMPLE_COUNT as f64);
            lo = Point::new(lo.x.min(p.x), lo.y.min(p.y));
            hi = Point::new(hi.x.max(p.x), hi.y.max(p.y));
        }
        (lo, hi)
    }

    pub fn arc_length_of_theta(&self, theta: f64) -> f64 {
        self.arc.arc_length(theta)
    }

    pub fn theta_of_arc_length(&self, l: f64) -> f64 {
        self.arc.theta(l)
    }

    /// Frame on the inner boundary at arc length `l` (wrapped mod perimeter),
    /// measured counter-clockwise from θ = 0.
    pub fn frame_at_arclength(&self, l: f64) -> FrenetFrame {
        let l = l.rem_euclid(self.perimeter());
        let theta = self.arc.theta(l);
        let ccw = self.inner.velocity(theta).normalized();
        let signed = self.inner.signed_curvature(theta);
        FrenetFrame {
            footpoint: self.inner.eval(theta),
            tangent: -ccw,
            // CCW tangent turned clockwise points out of the hole.
            normal: Point::new(ccw.y, -ccw.x),
            curvature: signed.abs(),
            signed_curvature: signed,
            arc_length: l,
            theta,
        }
    }

    /// Largest sampled `‖∇h‖` over the given points (the constant `c_h`).
    pub fn max_grad_barrier<'a>(&self, points: impl IntoIterator<Item = &'a Point>) -> f64 {
        points
            .into_iter()
            .map(|&p| self.grad_barrier(p).norm())
            .fold(0.0, f64::max)
    }

    /// Closed polyline of a boundary curve with `n` vertices.
    pub fn boundary_polyline(&self, outer: bool, n: usize) -> Vec<Point> {
        let curve = if outer { &self.outer } else { &self.inner };
        (0..n).map(|k| curve.eval(TAU * k as f64 / n as f64)).collect()
    }
}

/// The annulus used throughout the case study: an inverse-ellipse hole with
/// semi-axes 0.7 × 0.4 inside a Fourier outer curve `1.5 + 0.3 sin 5θ + 0.3 cos 7θ`.
pub fn case_study_domain() -> AnnulusDomain {
    AnnulusDomain::new(
        PolarCurve::inverse_ellipse(0.7, 0.4, Point::ZERO),
        PolarCurve::fourier(1.5, vec![(5, 0.3)], vec![(7, 0.3)], Point::ZERO),
    )
    .expect("case-study curves are valid")
}

/// Circular annulus with the given radii about the origin.
pub fn circular_domain(r_in: f64, r_out: f64) -> Result<AnnulusDomain> {
    AnnulusDomain::new(
        PolarCurve::circle(r_in, Point::ZERO),
        PolarCurve::circle(r_out, Point::ZERO),
    )
}

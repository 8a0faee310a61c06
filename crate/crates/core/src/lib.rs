//! Distributed circumferential coverage of annulus domains.
//!
//! Each of `N` agents owns one subregion of an annulus, delimited by virtual
//! partition bars that slide along the inner boundary to equalize workload.
//! Inside its subregion an agent descends the geodesic distance to its
//! locally optimal point under the metric `I / h²`, where `h` vanishes on the
//! boundary, so agents never reach the boundary.
//!
//! Modules, bottom-up: [`geometry`] (curves, barrier, frames), [`metric`]
//! (grid, fast marching), [`partition`] (bars, subregions, workloads),
//! [`control`] (coverage cost, targets, control law), [`sim`] (coupled loop
//! and diagnostics) and [`cli`] (scenario files, CSV, SVG).

// `!(x > 0.0)` is used on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod control;
pub mod error;
pub mod geometry;
pub mod metric;
pub mod oracle;
pub mod partition;
pub mod sim;

pub use error::{Error, Result};
pub use geometry::{AnnulusDomain, FrenetFrame, Point, PolarCurve};
pub use metric::{GeodesicField, MetricGrid, Region, Restriction};

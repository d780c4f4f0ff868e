//! Boundary-constrained curve networks and the length minimization that approximates geodesics.

mod curve;
mod export;
mod optimize;

pub use curve::{bezier_sample, Bezier, CurveNet, Domain, Normalization, CURVE_HIDDEN, DEGENERATE_GAP};
pub use export::{interpolate_and_decode, DecodedPath};
pub use optimize::{
    optimize_geodesic, optimize_geodesic_on, pretrain, GeodesicConfig, GeodesicResult, IterationRecord, PathCurve,
};

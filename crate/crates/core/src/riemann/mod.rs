//! Pullback geometry of a decoder: metric tensors, spectral smoothing, curve
//! lengths, magnification factors and a grid-graph distance oracle.

mod field;
mod graph;
mod metric;

pub use field::{mf_field, DistanceField, FieldKind, GridSpec};
pub use graph::{graph_distance_field, GridGraph};
pub use metric::{
    curve_length, magnification_factor, metric_batch, metric_tensor, sample_times, smooth_metric,
    smoothed_quadratic_grad, straight_line_profile, velocities, velocity, MetricTensor, QuadraticGrad, Smoothing,
    NEGATIVE_TOLERANCE,
};

//! Dense numerics: smooth activations, MLPs with analytic derivatives,
//! Adam, finite-difference checks, small symmetric eigen-solver and the
//! parameter file format.

mod activation;
mod adam;
pub mod finite_diff;
pub mod linalg;
mod mlp;
mod real;
pub mod rng;
pub mod serialize;

pub use activation::{activation_eval, logistic, softplus, Activation};
pub use adam::{AdamConfig, AdamState};
pub use finite_diff::{central_jacobian, max_relative_error};
pub use mlp::{Derivatives, Gradients, Layer, LayerSpec, Mlp, TangentTrace, Trace};
pub use real::Real;

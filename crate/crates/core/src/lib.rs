//! Latent-space geometry for deep generative models.
//!
//! An importance-weighted autoencoder is trained on a dataset; its decoder
//! mean induces a pullback metric `G = JᵀJ` on the latent space. Geodesics
//! under that metric are approximated by a small curve network whose length
//! is minimized, with optional SVD smoothing of the metric, magnification
//! factor fields and a grid-graph shortest-path oracle for validation.
//!
//! The numerical core is generic over the scalar type; the `*64` aliases
//! below fix it to `f64`, which is what every experiment uses.

pub mod datasets;
pub mod error;
pub mod experiments;
pub mod geodesic;
pub mod iwae;
pub mod numerics;
pub mod riemann;

pub use error::{Error, Result};
pub use numerics::{Activation, Real};

pub type Mlp64 = numerics::Mlp<f64>;
pub type IwaeModel64 = iwae::IwaeModel<f64>;

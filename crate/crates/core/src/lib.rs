//! Simulator for gradient dynamics of deep square matrix factorization over
//! ℝ and ℂ.
//!
//! * [`linalg`]: field-generic decompositions and perturbation utilities.
//! * [`ensembles`]: Gaussian/Haar sampling, the two initialization schemes,
//!   circular-ensemble densities.
//! * [`dynamics`]: loss, gradients, GD and RK4 gradient-flow steppers,
//!   target reduction.
//! * [`monitors`]: balance errors, skew/main terms, tracked SVD of the
//!   product, per-step trajectory records.
//! * [`rmt`]: Monte-Carlo validators for the initialization statistics.
//!
//! Everything is generic over [`Field`]; the aliases below fix the
//! double-precision instantiations used by the experiments.

pub mod dynamics;
pub mod ensembles;
pub mod error;
pub mod linalg;
pub mod monitors;
pub mod rmt;
pub mod rng;
pub mod scalar;

pub use error::{Error, Result};
pub use rng::SeededRng;
pub use scalar::{Field, FieldTag, Real};

pub use num_complex::Complex64;

pub type RealMatrix = linalg::Mat<f64>;
pub type ComplexMatrix = linalg::Mat<Complex64>;
pub type RealStack = dynamics::LayerStack<f64>;
pub type ComplexStack = dynamics::LayerStack<Complex64>;
pub type RealTarget = dynamics::TargetSpec<f64>;
pub type ComplexTarget = dynamics::TargetSpec<Complex64>;
pub type DynConfig = dynamics::DynConfig<f64>;

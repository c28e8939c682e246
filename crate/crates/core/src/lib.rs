//! Monte Carlo heat kernels of generalized Laplacians on vector bundles over
//! manifolds with boundary.
//!
//! Reflected Brownian motion is simulated in collar charts of a small catalogue
//! of model geometries (half-spaces, the exterior of the unit disk, the upper
//! hemisphere). A matrix multiplicative functional carries the Weitzenböck
//! potential, the Robin term weighted by boundary local time, and the Dirichlet
//! projection; averaging it gives the heat semigroup with mixed boundary
//! conditions. Deterministic oracles (images, eigen-expansions, Crank-Nicolson)
//! provide ground truth, and [`validation`] runs the acceptance criteria.

// `!(x > 0.0)` deliberately rejects NaN; index loops mirror the formulas
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod error;
pub mod geometry;
pub mod linalg;
pub mod bundles;
pub mod sections;
pub mod sde;
pub mod ensemble;
pub mod oracle;
pub mod estimators;
pub mod validation;

pub use bundles::{BundleKind, BundleModel, Coefficient, SpinorInvolution};
pub use ensemble::{EnsembleConfig, Estimate};
pub use error::{Error, Result};
pub use estimators::{KernelHistogram, Setup, Window};
pub use geometry::{Chart, ModelGeometry, Point};
pub use sde::{LocalTimeScheme, PathState, Simulator, StepConfig};
pub use sections::{Harmonic, SectionField};
pub use validation::{CriterionResult, Scale, SuiteConfig};

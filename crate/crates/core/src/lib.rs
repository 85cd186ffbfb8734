//! Numerical workbench for gluing divergence-free vector fields and
//! time-symmetric initial data across annuli and cone shells.
//!
//! The pieces fit together as follows: `grid` provides staggered discrete
//! calculus whose gradient/divergence pair is exactly adjoint; `weights`
//! evaluates the degenerate weight pairs that force corrections to die off
//! at the region boundary; `elliptic` minimizes the associated weighted
//! functionals; `maxwell` screens divergence-free fields through an annulus
//! or cone shell; `constraints` implements the constraint operator, its
//! formal adjoint and Killing-data residuals; `scalar_glue` performs the
//! Picard scalar-curvature interpolation; `diagnostics` computes mass
//! integrals and empirical coercivity constants.

pub mod catalog;
pub mod constraints;
pub mod diagnostics;
pub mod elliptic;
pub mod error;
pub mod grid;
pub mod io;
pub mod maxwell;
pub mod scalar_glue;
pub mod weights;

pub use error::{GlueError, Result};
pub use grid::{
    build_domain, discrete_divergence, discrete_gradient, flux_integral, weighted_inner,
    CellVectorField, GridDomain, RegionSpec, ScalarField, Surface, SymTensorField, VectorField,
};
pub use weights::{eval_cutoff, eval_phi, eval_psi, CutoffSpec, WeightKind, WeightSpec};

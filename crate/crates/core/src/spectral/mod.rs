//! Periodic pseudo-spectral machinery: grids, transforms, differential
//! operators, Leray projection, norms and the dealiased nonlinearity.

mod field;
mod grid;
mod norms;
mod ops;
pub mod random;
mod snapshot;

pub use field::{ScalarField, SpectralVectorField};
pub use grid::TorusGrid;
pub use norms::{
    check_ladyzhenskaya, h1_seminorm, hminus1_norm, lp_norm, scalar_h1_seminorm,
    LadyzhenskayaReport, NormBundle,
};
pub use ops::{
    advect, curl, divergence, gradient, laplacian, leray_project, leray_project_in_place,
    perp_gradient, vector_laplacian, Advector,
};
pub use snapshot::Snapshot;

/// Componentwise gradient of a vector field: `[grad w1, grad w2]`.
pub fn vector_gradient<T: crate::Real>(w: &SpectralVectorField<T>) -> [SpectralVectorField<T>; 2] {
    [gradient(w.component(0)), gradient(w.component(1))]
}

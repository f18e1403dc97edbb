//! Modular two-step nudging data assimilation for the 2D incompressible
//! Navier-Stokes equations on the periodic torus.
//!
//! The numerical core is generic over the scalar type ([`Real`]); the
//! aliases below fix it to `f64`, which is what the experiment drivers in
//! [`harness`] and the command-line tool use.
//!
//! * [`spectral`]: grids, transforms, operators, norms.
//! * [`observers`]: observation operators `I_H`.
//! * [`timestepper`]: forecast step, standard nudging, BDF2 truth.
//! * [`assimilate`]: analysis steps and their exact per-step identities.
//! * [`predictability`]: finite-time Lyapunov exponents and horizons.
//! * [`condlab`]: 1D finite-element conditioning laboratory.

pub mod assimilate;
pub mod condlab;
mod error;
pub mod harness;
pub mod krylov;
pub mod observers;
pub mod predictability;
mod scalar;
pub mod spectral;
pub mod timestepper;

pub use error::{Error, Result};
pub use scalar::Real;

pub type Grid = spectral::TorusGrid<f64>;
pub type Field = spectral::ScalarField<f64>;
pub type VectorField = spectral::SpectralVectorField<f64>;
pub type Observer = observers::ObservationOperator<f64>;
pub type Scheme = timestepper::SchemeConfig<f64>;
pub type State = timestepper::ForecastState<f64>;
pub type Analysis = assimilate::AnalysisResult<f64>;
pub type Series = predictability::ErrorSeries<f64>;
pub type Horizon = predictability::HorizonReport<f64>;
pub type FemOperators = condlab::FemOperatorSet<f64>;

pub type GridF32 = spectral::TorusGrid<f32>;
pub type VectorFieldF32 = spectral::SpectralVectorField<f32>;

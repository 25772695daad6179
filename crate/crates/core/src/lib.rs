//! Semiclassical laboratory: Madelung fields, de Broglie-Bohm trajectories and
//! hbar -> 0 convergence experiments against closed-form classical limits.
//!
//! Numerical code is generic over [`Real`] (`f32` or `f64`); the aliases at
//! the bottom of this file fix the scalar to `f64` for everyday use.

pub mod analytic;
pub mod bohm;
pub mod classical;
pub mod diff;
pub mod domain;
pub mod error;
pub mod interp;
pub mod lab;
pub mod madelung;
pub mod ode;
pub mod scalar;
pub mod schrodinger;
pub mod spectral;
pub mod stats;

pub use error::{Error, Result};
pub use scalar::{Real, Vec3};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

pub type Grid64 = domain::Grid<f64>;
pub type SystemParams64 = domain::SystemParams<f64>;
pub type WaveField64 = domain::WaveField<f64>;
pub type MadelungFields64 = domain::MadelungFields<f64>;
pub type LinearScenario64 = analytic::LinearScenario<f64>;
pub type CoherentScenario64 = analytic::CoherentScenario<f64>;

pub type Grid32 = domain::Grid<f32>;
pub type WaveField32 = domain::WaveField<f32>;

//! Numerical lab for Dyson Brownian motion on linearized covariance matrices.

pub mod dbm;
pub mod diagnostics;
pub mod ensembles;
pub mod error;
pub mod freeconv;
pub mod gapstats;
pub mod quadrature;
pub mod rng;
pub mod scalar;
pub mod shortrange;
pub mod stats;

pub use error::{Error, Result};
pub use rng::{Seed, StreamPosition};
pub use scalar::{Real, C};

pub type DataBlock64 = ensembles::DataBlock<f64>;
pub type DataBlock32 = ensembles::DataBlock<f32>;
pub type LinearizedMatrix64 = ensembles::LinearizedMatrix<f64>;
pub type LinearizedMatrix32 = ensembles::LinearizedMatrix<f32>;
pub type InitialData64 = ensembles::InitialData<f64>;
pub type InitialData32 = ensembles::InitialData<f32>;
pub type RegularityWindow64 = ensembles::RegularityWindow<f64>;
pub type SymTridiagonal64 = ensembles::SymTridiagonal<f64>;
pub type FreeConvolutionField64 = freeconv::FreeConvolutionField<f64>;
pub type FreeConvolutionField32 = freeconv::FreeConvolutionField<f32>;
pub type SpectrumState64 = dbm::SpectrumState<f64>;
pub type SpectrumState32 = dbm::SpectrumState<f32>;
pub type EigenIntegrator64 = dbm::EigenIntegrator<f64>;
pub type EigenIntegrator32 = dbm::EigenIntegrator<f32>;

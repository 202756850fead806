//! Discovery and evaluation of independent semantic axes in embedding sets.
//!
//! The crate is organized around a small data model ([`EmbeddingSet`],
//! [`LinearMap`]) and the transforms and evaluations that act on it:
//!
//! * [`embedstore`]: word2vec-text IO, frequency-weighted resampling, row normalization.
//! * [`whitening`]: centering, PCA/ZCA whitening and the unwhitened PCA rotation.
//! * [`fastica`]: symmetric fixed-point FastICA plus skewness sign fixing.
//! * [`rotation`]: the Crawford–Ferguson criterion family and a gradient-projection optimizer.
//! * [`nongauss`]: per-axis skewness, kurtosis and contrast-gap diagnostics.
//! * [`axisalign`]: lexicon handling, weighted cross-correlation and greedy axis matching.
//! * [`translate`]: least squares and Procrustes baselines, CSLS retrieval, top-1 accuracy.
//! * [`evalsuite`]: word intrusion, top-k truncation, analogy and similarity scoring.
//! * [`pipeline`] and [`plot`]: step chains and SVG/CSV visualization output.
//!
//! All numerical code is generic over [`Real`], implemented for `f32` and `f64`.
//! The `*64` aliases below are what the CLI uses.

pub mod axisalign;
pub mod embedstore;
mod error;
pub mod evalsuite;
pub mod fastica;
mod linalg;
pub mod nongauss;
pub mod pipeline;
pub mod plot;
pub mod report;
pub mod rotation;
mod scalar;
pub mod translate;
pub mod whitening;

pub use embedstore::{EmbeddingSet, FrequencyTable, Meta};
pub use error::{Error, ParseErrorKind, Result};
pub use report::EvalReport;
pub use scalar::Real;
pub use whitening::{LinearMap, MapKind};

pub type EmbeddingSet64 = EmbeddingSet<f64>;
pub type EmbeddingSet32 = EmbeddingSet<f32>;
pub type LinearMap64 = LinearMap<f64>;
pub type LinearMap32 = LinearMap<f32>;
pub type IcaResult64 = fastica::IcaResult<f64>;
pub type SpectralDecomposition64 = whitening::SpectralDecomposition<f64>;
pub type AxisDiagnostics64 = nongauss::AxisDiagnostics<f64>;
pub type Matrix64 = nalgebra::DMatrix<f64>;

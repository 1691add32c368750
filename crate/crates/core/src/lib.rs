//! Multimodal cardiovascular classification from ECG records and retinal
//! fundus images.
//!
//! The pipeline runs ECG preprocessing ([`ecg_prep`]), 1D/2D Fourier spectra
//! ([`spectral`]), Earth Mover's Distance against per-class templates
//! ([`transport`]), and a small convolutional classifier trained with Adam
//! ([`model`]). [`evalstat`] scores the four joint ECG × fundus classes and runs
//! one-way ANOVA on scalar features; [`baselines`] provides the Haar-wavelet and
//! HOG comparison extractors. [`synthgen`] produces a deterministic labelled
//! dataset so the whole chain can be exercised without clinical data.

pub mod baselines;
pub mod dataio;
pub mod ecg_prep;
mod error;
pub mod evalstat;
pub mod model;
mod par;
pub mod pipeline;
pub mod rng;
pub mod spectral;
pub mod synthgen;
pub mod transport;

#[cfg(feature = "cli")]
pub mod cli;

pub use dataio::{ClassLabel, EcgRecord, GrayImage, Label};
pub use error::{Error, Result};

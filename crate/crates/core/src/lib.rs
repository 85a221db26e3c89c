//! Blind estimation of room acoustic parameters from two-channel noisy speech.
//!
//! The crate covers the whole chain: shoebox-room sampling and hybrid
//! (image-source + diffuse-rain) impulse-response simulation, Schroeder-curve
//! RT60 annotation, noisy two-channel speech dataset generation, STFT
//! features, a dual-branch convolutional estimator trained with a Gaussian
//! negative log-likelihood, and precision-weighted fusion of estimates from
//! several source-receiver positions.

pub mod analysis;
pub mod dsp;
pub mod error;
pub mod eval;
pub mod features;
pub mod geometry;
pub mod io;
pub mod neural;
pub mod pipeline;
pub mod rng;
pub mod sim;

pub use error::{Error, Result};

//! Radar-aided identification of the communication user in an ISAC scene.
//!
//! The crate covers the whole chain:
//!
//! - [`scene`]: MISO geometric channel, DFT beam codebook and optimal-beam search.
//! - [`radar`]: FMCW IF signal synthesis into an ADC cube (antennas × chirps × samples).
//! - [`detect`]: range/Doppler/angle FFTs, clutter removal, CA-CFAR, DBSCAN and
//!   cluster summaries (the candidate objects).
//! - [`nn`]: a small dense network with backpropagation and Adam.
//! - [`identify`]: solvers that pick the communication user among the candidates
//!   from the optimal beam index.
//! - [`dataset`]: synthetic drive-through datasets, sequence splits and sample files.

// `!(x > 0.0)` is used on purpose so NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod dataset;
pub mod detect;
mod error;
pub mod identify;
pub mod nn;
pub mod radar;
pub mod rng;
pub mod scene;

pub use error::{Error, Result};

/// Speed of light in vacuum, m/s.
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

//! Circular Convolution Adaptation (C³A) primitives.
//!
//! This crate implements FFT-diagonalized circular and block-circular
//! linear operators with analytic backpropagation, rank and singular
//! spectrum analysis, adapter layers over frozen base weights (including
//! a LoRA baseline), and a small from-scratch MLP training harness used
//! for the synthetic expressiveness experiment.
//!
//! The crate is `no_std` (with `alloc`); all IO, file formats and the
//! command line live in the companion `c3a-cli` crate.

#![cfg_attr(not(test), no_std)]

extern crate alloc;

pub mod adapters;
pub mod block;
pub mod circulant;
pub mod error;
pub mod linalg;
mod poly;
pub mod spectral;
pub mod training;

pub use block::BlockCircularKernel;
pub use circulant::CircularKernel;
pub use error::{Error, Result};
pub use linalg::Mat;
pub use num_complex::Complex64;

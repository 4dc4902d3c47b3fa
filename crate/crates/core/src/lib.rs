//! Dual-path pose estimation networks, built from scratch.
//!
//! This crate is the algorithmic core of the toolkit: a dense `f32` tensor
//! type with reverse-mode automatic differentiation, the dual-path and
//! openpose-style network builders, ground-truth rendering for keypoint
//! heatmaps and part-affinity fields, a deterministic synthetic scene
//! generator, a minimal bottom-up decoder, and closed-form parameter/MAC
//! accounting.
//!
//! The crate is `no_std` (with `alloc`); file IO, the CLI, and wall-clock
//! benchmarking live in the companion `dualpose` crate.

#![cfg_attr(not(test), no_std)]

extern crate alloc;

pub mod analyze;
pub mod checkpoint;
pub mod config;
pub mod decode;
pub mod error;
pub mod gradcheck;
pub mod graph;
pub mod kernels;
pub mod net;
pub mod optim;
pub mod params;
pub mod rng;
pub mod synth;
pub mod targets;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
pub use tensor::Tensor;

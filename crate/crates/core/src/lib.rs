//! Core algorithms for flow-matching policy gradients.
//!
//! This crate holds everything that does arithmetic: a small reverse-mode
//! autodiff tape over dense `f64` tensors, MLP actors and critics, the
//! Euler flow sampler, conditional flow matching losses, trust-region
//! surrogate objectives (PPO / SPO / ASPO), generalized advantage
//! estimation, a set of toy continuous-control environments, and
//! post-hoc diagnostics. It is `no_std`-compatible (with `alloc`); all
//! IO, file formats, and the CLI live in the companion `fpopp-cli` crate.
//!
//! Design notes:
//! - All values are `f64`. Non-finite results abort the current
//!   computation with [`Error::NumericFault`] instead of propagating.
//! - Shape mismatches are contract violations and panic.
//! - Every random stream is an explicit [`rand_chacha::ChaCha8Rng`];
//!   given equal seeds, results are bit-identical across runs.

#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

pub mod advantage;
pub mod cfm;
pub mod diagnostics;
pub mod env;
pub mod error;
pub mod gradcheck;
pub mod math;
pub mod mlp;
pub mod normalizer;
pub mod objectives;
pub mod optim;
pub mod policy;
pub mod rngstream;
pub mod tape;
pub mod tensor;

pub use error::{Error, Result};
pub use tape::{Tape, Var};
pub use tensor::Tensor;

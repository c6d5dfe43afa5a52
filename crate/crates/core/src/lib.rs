//! Core primitives for auditing sequence-to-sequence (machine translation)
//! models for training-data membership leakage.
//!
//! The crate is `no_std` and only needs an allocator. Everything here is pure:
//! n-gram metrics, corpus transformations, probe and shadow split
//! construction, a synthetic memorizing translator, feature extraction, five
//! binary classifiers and the attack/evaluation pipeline built on an
//! abstract [`translator::Oracle`]. File formats, HTTP oracles and the command
//! line live in the `seqmia` companion crate.
#![no_std]
#![forbid(unsafe_code)]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod attack;
pub mod classifiers;
pub mod corpus;
mod error;
pub mod features;
pub mod metrics;
pub mod rng;
pub mod splitter;
pub mod translator;

pub use error::{Error, Result};

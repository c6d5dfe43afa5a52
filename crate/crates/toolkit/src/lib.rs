//! File-backed runner for sequence-to-sequence membership inference audits.
//!
//! The algorithms live in `seqmia-core`. This crate adds corpus and cache
//! files, the HTTP and file-cache oracles, run directories with manifests,
//! report rendering, and the `seqmia` command line.

pub mod cache;
pub mod config;
pub mod corpus_io;
pub mod error;
pub mod files;
pub mod model_io;
pub mod oracles;
pub mod pipeline;
pub mod report;
pub mod run;

pub use error::{Result, ToolError};

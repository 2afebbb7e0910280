//! Serial-recall memory probing harness: the I/O layer.
//!
//! Everything deterministic lives in `memprobe-core`; this crate adds the
//! file formats (lexicon and experiment config TOML, noun-filter lines,
//! line-delimited results), the wire and scripted backends, the parallel
//! runner with resume support, reporting, and the `memprobe` CLI.

pub mod cli;
pub mod configfile;
pub mod error;
pub mod fixtures;
pub mod lexfile;
pub mod report;
pub mod results;
pub mod runner;
pub mod wire;

pub use error::CliError;

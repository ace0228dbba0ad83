//! Implementation of the `gitloss` experiment runner.
//!
//! The binary in `main.rs` is a thin clap wrapper; everything it does lives
//! here so tests can call the same code paths in-process. Each subcommand
//! writes its artifacts under a run directory with fixed names:
//!
//! ```text
//! <out>/
//!   config.snapshot      effective configuration, key = value lines
//!   epochs.csv           one row per training epoch
//!   sweep.csv            one row per (lambda_c, lambda_g) grid cell
//!   curves.csv           loss terms over a signed distance range
//!   embeddings.csv       final eval-split features, label,f1..fd
//!   verification.csv     per-fold verification accuracies
//!   gradcheck.csv        per-check max relative gradient errors
//!   model.ckpt           final network parameters
//!   figures/*.svg        plots
//! ```
//!
//! Every subcommand is deterministic given its seed: re-running with the
//! same flags produces byte-identical CSV and SVG files.

pub mod cli;
pub mod commands;
pub mod config;
pub mod style;
pub mod svg;
pub mod sweep;
pub mod trainer;

pub use gitloss::{Error, Result};

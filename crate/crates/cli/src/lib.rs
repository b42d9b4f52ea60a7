//! Experiment harness and file front end for the SPOC estimator: synthetic
//! sweeps, fitting count matrices from disk, top-word summaries and a
//! self-check suite. The `spoc` binary is a thin clap layer over this crate.

pub mod error;
pub mod experiment;
pub mod fit;
pub mod io;
pub mod topwords;
pub mod verify;

pub use error::{CliError, Result};

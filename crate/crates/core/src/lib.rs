//! Simulator and analysis toolkit for the multi-player max-min fairness
//! bandit game under the collision channel.
//!
//! - [`env`]: reward matrix, noise, and the synchronous collision channel.
//! - [`agent`]: one player's four-phase epoch state machine.
//! - [`oracle`]: centralized ground truth (max-min value, histograms, max-sum, dynamics).
//! - [`harness`]: seeded single runs and batches with regret traces, CSV and SVG output.
//! - [`cli`]: command-line front end.

pub mod agent;
pub mod cli;
pub mod env;
pub mod error;
pub mod harness;
pub mod oracle;
pub mod seed;

pub use error::{Error, Result};

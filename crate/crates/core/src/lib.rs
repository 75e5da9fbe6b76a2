//! Privacy-preserving contextual bandits.
//!
//! Local LinUCB agents learn on-device. Agents that opt in (with probability
//! `p`) encode one interaction as `(code, action, reward)` with a
//! crowd-blending encoder, a trusted shuffler strips metadata, permutes and
//! thresholds the batch, and the server folds the survivors into a global
//! model that new agents use as a warm start.
//!
//! Module map:
//!
//! - [`codec`]: fixed-precision normalized contexts, grid enumeration,
//!   k-means encoder.
//! - [`bandit`]: disjoint-arm LinUCB and its one-hot (per-code) form.
//! - [`privacy`]: closed-form `(epsilon, delta)` accounting.
//! - [`pipeline`]: randomized reporting, shuffler and server aggregation.
//! - [`bench`]: synthetic, multi-label and ad-data environments and the
//!   experiment runner.
//! - [`config`]: experiment configuration, key=value files and validation.

pub mod bandit;
pub mod bench;
pub mod codec;
pub mod config;
pub mod error;
pub mod pipeline;
pub mod privacy;
pub mod seed;

pub use error::{Error, Result};

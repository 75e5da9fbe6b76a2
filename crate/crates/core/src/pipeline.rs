//! Randomized reporting, the trusted shuffler and server-side aggregation.
//!
//! ```text
//! agent --maybe_report--> ReportPayload --anonymize--> AnonymousTuple
//!       --shuffle--> --apply_threshold--> RefinedBatch --server_ingest--> GlobalModel
//! ```
//!
//! The shuffler is an in-process component. Anything that can submit
//! [`ReportPayload`]s and receive [`RefinedBatch`]es can stand in for it.

use std::collections::HashMap;
use std::io::Write;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::bandit::{LinUcb, OneHotLinUcb, RewardObservation};
use crate::codec::EncodedContext;
use crate::{Error, Result};

/// One Bernoulli participation draw: rate `p_positive` for rewarded
/// interactions, `p_negative` otherwise. Always consumes exactly one `f64`
/// from `rng`, whatever the rates.
pub fn maybe_report<R: Rng + ?Sized>(rng: &mut R, p_positive: f64, p_negative: f64, reward: u8) -> bool {
    let p = if reward == 1 { p_positive } else { p_negative };
    rng.random::<f64>() < p
}

/// Transport metadata attached by the sending agent (stands in for an IP
/// address or device id). Removed by [`anonymize`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct AgentTag(pub u64);

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ReportPayload {
    pub code: EncodedContext,
    pub action: usize,
    pub reward: u8,
    pub agent_tag: AgentTag,
}

/// A report after anonymization. There is no field that could carry an
/// agent identifier.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct AnonymousTuple {
    pub code: usize,
    pub action: usize,
    pub reward: u8,
}

pub fn anonymize(batch: Vec<ReportPayload>) -> Vec<AnonymousTuple> {
    batch
        .into_iter()
        .map(|p| AnonymousTuple {
            code: p.code.code(),
            action: p.action,
            reward: p.reward,
        })
        .collect()
}

/// Uniform random permutation (Fisher-Yates).
pub fn shuffle<T, R: Rng + ?Sized>(rng: &mut R, mut tuples: Vec<T>) -> Vec<T> {
    tuples.shuffle(rng);
    tuples
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RefinedBatch {
    pub tuples: Vec<AnonymousTuple>,
    pub threshold_used: u64,
    pub dropped_count: usize,
}

/// Keeps exactly the tuples whose code occurs at least `threshold` times in
/// the batch, in their original relative order.
pub fn apply_threshold(tuples: Vec<AnonymousTuple>, threshold: u64) -> Result<RefinedBatch> {
    if threshold == 0 {
        return Err(Error::domain("shuffler threshold must be at least 1"));
    }
    let mut counts: HashMap<usize, u64> = HashMap::new();
    for t in &tuples {
        *counts.entry(t.code).or_default() += 1;
    }
    let before = tuples.len();
    let kept: Vec<AnonymousTuple> = tuples.into_iter().filter(|t| counts[&t.code] >= threshold).collect();
    Ok(RefinedBatch {
        dropped_count: before - kept.len(),
        tuples: kept,
        threshold_used: threshold,
    })
}

/// Buffers payloads and releases them as anonymized, shuffled, thresholded
/// batches.
#[derive(Clone, Debug)]
pub struct Shuffler {
    threshold: u64,
    rng: ChaCha8Rng,
    pending: Vec<ReportPayload>,
    flushed: u64,
}

impl Shuffler {
    pub fn new(threshold: u64, rng: ChaCha8Rng) -> Result<Self> {
        if threshold == 0 {
            return Err(Error::domain("shuffler threshold must be at least 1"));
        }
        Ok(Self {
            threshold,
            rng,
            pending: Vec::new(),
            flushed: 0,
        })
    }

    pub fn threshold(&self) -> u64 {
        self.threshold
    }

    pub fn submit(&mut self, payload: ReportPayload) {
        self.pending.push(payload);
    }

    pub fn pending(&self) -> usize {
        self.pending.len()
    }

    /// Number of batches released so far.
    pub fn flushed(&self) -> u64 {
        self.flushed
    }

    /// Releases everything pending as one refined batch, or `None` when
    /// nothing is pending.
    pub fn flush(&mut self) -> Option<RefinedBatch> {
        if self.pending.is_empty() {
            return None;
        }
        let tuples = anonymize(std::mem::take(&mut self.pending));
        let tuples = shuffle(&mut self.rng, tuples);
        self.flushed += 1;
        Some(apply_threshold(tuples, self.threshold).expect("threshold validated at construction"))
    }
}

/// Writes one refined batch as `# batch=<n> threshold=<l> dropped=<m>`
/// followed by `code,action,reward` lines.
pub fn write_batch_log<W: Write + ?Sized>(out: &mut W, index: u64, batch: &RefinedBatch) -> std::io::Result<()> {
    writeln!(
        out,
        "# batch={index} threshold={} dropped={}",
        batch.threshold_used, batch.dropped_count
    )?;
    for t in &batch.tuples {
        writeln!(out, "{},{},{}", t.code, t.action, t.reward)?;
    }
    Ok(())
}

/// Server-side model plus a counter bumped on every ingested batch.
#[derive(Clone, Debug, PartialEq)]
pub struct GlobalModel<M> {
    bandit: M,
    version: u64,
    observations: u64,
}

impl<M: Clone> GlobalModel<M> {
    pub fn bandit(&self) -> &M {
        &self.bandit
    }

    pub fn version(&self) -> u64 {
        self.version
    }

    /// Tuples folded in across all batches.
    pub fn observations(&self) -> u64 {
        self.observations
    }

    /// Independent copy of the global state for a newly joining agent.
    pub fn warm_start(&self) -> M {
        self.bandit.clone()
    }
}

impl GlobalModel<OneHotLinUcb> {
    /// Model over one-hot code contexts of dimension `k`.
    pub fn over_codes(k: usize, actions: usize, alpha: f64) -> Result<Self> {
        Ok(Self {
            bandit: OneHotLinUcb::new(k, actions, alpha)?,
            version: 0,
            observations: 0,
        })
    }

    /// Folds a refined batch into the model. A code outside `[0, k)` rejects
    /// the whole batch: it means encoder and model disagree on `k`.
    pub fn server_ingest(&mut self, batch: &RefinedBatch) -> Result<()> {
        self.bandit
            .merge_statistics(batch.tuples.iter().map(|t| (t.code, t.action, t.reward)))?;
        self.version += 1;
        self.observations += batch.tuples.len() as u64;
        Ok(())
    }
}

impl GlobalModel<LinUcb> {
    /// Model over raw `dim`-dimensional contexts (non-private reporting).
    pub fn over_raw(dim: usize, actions: usize, alpha: f64) -> Result<Self> {
        Ok(Self {
            bandit: LinUcb::new(dim, actions, alpha)?,
            version: 0,
            observations: 0,
        })
    }

    pub fn ingest_raw(&mut self, batch: &[RewardObservation]) -> Result<()> {
        self.bandit.merge_statistics(batch)?;
        self.version += 1;
        self.observations += batch.len() as u64;
        Ok(())
    }
}

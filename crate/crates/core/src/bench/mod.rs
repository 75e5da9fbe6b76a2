//! Environments and the experiment runner.

pub mod addata;
pub mod experiment;
pub mod multilabel;
pub mod synthetic;

use rand::seq::index::sample;
use rand_chacha::ChaCha8Rng;

use crate::codec::{normalize_and_round, ContextVector};
use crate::seed::{rng_for, Stream};
use crate::Result;

pub use addata::{hash_categoricals, hash_fields, AdDataEnv, AdDataOptions, HashedLabels};
pub use experiment::{build_encoder, build_environment, run_experiment, run_experiment_in, run_experiment_logged, ExperimentResult, MetricCurve, PrivacyReport, RegimeStats};
pub use multilabel::{multilabel_reward, LabeledInstance, MultiLabelDataset, MultiLabelEnv};
pub use synthetic::{softmax, SyntheticEnv};

/// Which side of a dataset's train/test split to draw from.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Pool {
    Train,
    Test,
}

/// Share of dataset rows reserved for held-out evaluation.
pub const TEST_FRACTION: f64 = 0.3;

/// One local interaction: the context shown to the agent and, for replayed
/// datasets, the row it came from.
#[derive(Clone, Debug, PartialEq)]
pub struct Interaction {
    pub context: ContextVector,
    pub item: usize,
}

/// A source of contexts and binary rewards. Implementations are immutable so
/// agents can be simulated in parallel.
pub trait Environment: Sync {
    fn dim(&self) -> usize;
    fn actions(&self) -> usize;
    /// Column name written to the metric CSV.
    fn metric(&self) -> &'static str;
    fn draw_interactions(&self, pool: Pool, n: usize, rng: &mut ChaCha8Rng) -> Vec<Interaction>;
    fn reward(&self, interaction: &Interaction, action: usize, rng: &mut ChaCha8Rng) -> u8;
}

/// Scales each column to `[0, 1]` (min-max; constant columns become 0) and
/// rounds every row onto the precision-`q` simplex grid. A row that is zero
/// after scaling maps to the uniform vector.
pub fn contexts_from_features(rows: &[Vec<f64>], q: u32) -> Result<Vec<ContextVector>> {
    let d = rows.first().map(Vec::len).unwrap_or(0);
    let mut lo = vec![f64::INFINITY; d];
    let mut hi = vec![f64::NEG_INFINITY; d];
    for row in rows {
        for (j, &v) in row.iter().enumerate() {
            lo[j] = lo[j].min(v);
            hi[j] = hi[j].max(v);
        }
    }
    rows.iter()
        .map(|row| {
            let scaled: Vec<f64> = row
                .iter()
                .enumerate()
                .map(|(j, &v)| if hi[j] > lo[j] { (v - lo[j]) / (hi[j] - lo[j]) } else { 0.0 })
                .collect();
            if scaled.iter().all(|&v| v == 0.0) {
                normalize_and_round(&vec![1.0; d], q)
            } else {
                normalize_and_round(&scaled, q)
            }
        })
        .collect()
}

/// Seeded partition of dataset rows into disjoint train and test sets.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RowSplit {
    train: Vec<usize>,
    test: Vec<usize>,
}

impl RowSplit {
    /// Holds out `round(TEST_FRACTION * rows)` rows (at least one, and at
    /// least one left for training when `rows >= 2`).
    pub fn new(rows: usize, seed: u64) -> Self {
        let mut rng = rng_for(seed, Stream::Dataset, 0);
        let order: Vec<usize> = sample(&mut rng, rows, rows).into_vec();
        if rows < 2 {
            return Self {
                train: order.clone(),
                test: order,
            };
        }
        let n_test = ((rows as f64 * TEST_FRACTION).round() as usize).clamp(1, rows - 1);
        let mut test = order[..n_test].to_vec();
        let mut train = order[n_test..].to_vec();
        test.sort_unstable();
        train.sort_unstable();
        Self { train, test }
    }

    pub fn train(&self) -> &[usize] {
        &self.train
    }

    pub fn test(&self) -> &[usize] {
        &self.test
    }

    pub fn pool(&self, pool: Pool) -> &[usize] {
        match pool {
            Pool::Train => &self.train,
            Pool::Test => &self.test,
        }
    }
}

/// Draws `min(n, rows.len())` distinct rows of `rows` uniformly at random.
pub(crate) fn sample_items(
    contexts: &[ContextVector],
    rows: &[usize],
    n: usize,
    rng: &mut ChaCha8Rng,
) -> Vec<Interaction> {
    let amount = n.min(rows.len());
    sample(rng, rows.len(), amount)
        .into_iter()
        .map(|i| Interaction {
            context: contexts[rows[i]].clone(),
            item: rows[i],
        })
        .collect()
}

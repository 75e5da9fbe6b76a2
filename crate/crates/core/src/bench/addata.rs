//! Ad-recommendation replay over click-log style files.
//!
//! Each row holds an optional label column, numeric columns and categorical
//! columns (13 and 26 by default). The categorical fields of a row are
//! feature-hashed into one bucket; the `top_n` most frequent buckets become
//! the action labels `1..=top_n` (label 1 is the most frequent) and rows
//! outside them are dropped. The first `d` numeric columns form the context,
//! and an agent is rewarded iff it proposes the row's label.

use std::collections::HashMap;
use std::path::Path;

use rand_chacha::ChaCha8Rng;

use super::{contexts_from_features, Environment, Interaction, Pool, RowSplit};
use crate::codec::ContextVector;
use crate::{Error, Result};

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;
/// Separates fields so that ("ab", "c") and ("a", "bc") hash differently.
const FIELD_SEPARATOR: u8 = 0x1f;

/// Stable 64-bit FNV-1a over the fields joined by a unit separator.
pub fn hash_fields<S: AsRef<str>>(fields: &[S]) -> u64 {
    let mut h = FNV_OFFSET;
    for (i, f) in fields.iter().enumerate() {
        if i > 0 {
            h ^= FIELD_SEPARATOR as u64;
            h = h.wrapping_mul(FNV_PRIME);
        }
        for &byte in f.as_ref().as_bytes() {
            h ^= byte as u64;
            h = h.wrapping_mul(FNV_PRIME);
        }
    }
    h
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct HashedLabels {
    /// Feature-hash bucket of each record.
    pub codes: Vec<u64>,
    /// `Some(label)` with `1 <= label <= top_n` for kept records.
    pub labels: Vec<Option<usize>>,
}

impl HashedLabels {
    pub fn kept(&self) -> Vec<bool> {
        self.labels.iter().map(Option::is_some).collect()
    }
}

/// Hashes each record's categorical fields into `buckets` buckets and labels
/// the `top_n` most frequent buckets by descending frequency. Frequency ties
/// go to the smaller bucket.
pub fn hash_categoricals<S: AsRef<str>>(records: &[Vec<S>], top_n: usize, buckets: u64) -> Result<HashedLabels> {
    if top_n == 0 {
        return Err(Error::domain("top_n must be at least 1"));
    }
    if buckets == 0 {
        return Err(Error::domain("bucket count must be at least 1"));
    }
    let codes: Vec<u64> = records.iter().map(|r| hash_fields(r) % buckets).collect();
    let mut freq: HashMap<u64, usize> = HashMap::new();
    for &c in &codes {
        *freq.entry(c).or_default() += 1;
    }
    let mut ranked: Vec<(u64, usize)> = freq.into_iter().collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
    let label_of: HashMap<u64, usize> = ranked
        .iter()
        .take(top_n)
        .enumerate()
        .map(|(rank, &(code, _))| (code, rank + 1))
        .collect();
    let labels = codes.iter().map(|c| label_of.get(c).copied()).collect();
    Ok(HashedLabels { codes, labels })
}

#[derive(Clone, Debug)]
pub struct AdDataOptions {
    pub numeric: usize,
    pub categorical: usize,
    pub has_label: bool,
    /// Numeric columns used as context (the first `context_dim`).
    pub context_dim: usize,
    pub top_n: usize,
    pub buckets: u64,
    pub q: u32,
}

#[derive(Clone, Debug)]
pub struct AdDataEnv {
    contexts: Vec<ContextVector>,
    /// 0-based action of each kept row.
    actions_logged: Vec<usize>,
    top_n: usize,
    context_dim: usize,
    split: RowSplit,
}

fn parse_numeric(cell: &str) -> f64 {
    // Missing values read as 0; counts are log-compressed.
    cell.trim().parse::<f64>().map(|v| v.max(0.0).ln_1p()).unwrap_or(0.0)
}

impl AdDataEnv {
    /// Parses tab- or comma-delimited rows of `[label] numeric... categorical...`.
    /// `seed` fixes the train/test row split.
    pub fn parse(text: &str, options: &AdDataOptions, seed: u64) -> Result<Self> {
        if options.context_dim == 0 || options.context_dim > options.numeric {
            return Err(Error::domain(format!(
                "context dimension must be in 1..={}",
                options.numeric
            )));
        }
        let offset = usize::from(options.has_label);
        let width = offset + options.numeric + options.categorical;
        let mut numeric_rows = Vec::new();
        let mut categorical_rows = Vec::new();
        for (row, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
            let delim = if line.contains('\t') { '\t' } else { ',' };
            let cells: Vec<&str> = line.split(delim).collect();
            if cells.len() != width {
                return Err(Error::Parse(format!(
                    "row {}: {} columns, expected {width}",
                    row + 1,
                    cells.len()
                )));
            }
            numeric_rows.push(
                cells[offset..offset + options.context_dim]
                    .iter()
                    .map(|c| parse_numeric(c))
                    .collect::<Vec<f64>>(),
            );
            categorical_rows.push(cells[offset + options.numeric..].to_vec());
        }
        let hashed = hash_categoricals(&categorical_rows, options.top_n, options.buckets)?;
        let mut kept_rows = Vec::new();
        let mut actions_logged = Vec::new();
        for (features, label) in numeric_rows.into_iter().zip(&hashed.labels) {
            if let Some(label) = label {
                kept_rows.push(features);
                actions_logged.push(label - 1);
            }
        }
        if kept_rows.is_empty() {
            return Err(Error::domain("ad data has no rows"));
        }
        Ok(Self {
            split: RowSplit::new(kept_rows.len(), seed),
            contexts: contexts_from_features(&kept_rows, options.q)?,
            actions_logged,
            top_n: options.top_n,
            context_dim: options.context_dim,
        })
    }

    pub fn load(path: &Path, options: &AdDataOptions, seed: u64) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?, options, seed)
    }

    pub fn rows(&self) -> usize {
        self.contexts.len()
    }

    pub fn logged_actions(&self) -> &[usize] {
        &self.actions_logged
    }
}

impl Environment for AdDataEnv {
    fn dim(&self) -> usize {
        self.context_dim
    }

    fn actions(&self) -> usize {
        self.top_n
    }

    fn metric(&self) -> &'static str {
        "ctr"
    }

    fn draw_interactions(&self, pool: Pool, n: usize, rng: &mut ChaCha8Rng) -> Vec<Interaction> {
        super::sample_items(&self.contexts, self.split.pool(pool), n, rng)
    }

    fn reward(&self, interaction: &Interaction, action: usize, _rng: &mut ChaCha8Rng) -> u8 {
        u8::from(self.actions_logged[interaction.item] == action)
    }
}

//! Multi-label classification replayed as bandit feedback: the agent
//! proposes one label and is rewarded iff it belongs to the instance's label
//! set.
//!
//! Input format (comma- or tab-delimited):
//!
//! ```text
//! # d=3 actions=4
//! f0,f1,f2,l0,l1,l2,l3
//! 0.1,0.7,0.2,0,1,0,1
//! ```
//!
//! The manifest line declares the feature count and label count, the header
//! row names the columns, then each row holds `d` features followed by `|A|`
//! binary label columns.

use std::path::Path;

use rand_chacha::ChaCha8Rng;

use super::{contexts_from_features, Environment, Interaction, Pool, RowSplit};
use crate::codec::ContextVector;
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct LabeledInstance {
    pub features: Vec<f64>,
    /// Sorted, deduplicated label indices.
    pub labels: Vec<usize>,
}

pub fn multilabel_reward(instance: &LabeledInstance, proposed: usize) -> u8 {
    u8::from(instance.labels.binary_search(&proposed).is_ok())
}

#[derive(Clone, Debug, PartialEq)]
pub struct MultiLabelDataset {
    d: usize,
    actions: usize,
    instances: Vec<LabeledInstance>,
}

fn parse_manifest(line: &str) -> Result<(usize, usize)> {
    let body = line
        .trim()
        .strip_prefix('#')
        .ok_or_else(|| Error::Parse("first line must be a manifest like '# d=20 actions=40'".into()))?;
    let mut d = None;
    let mut actions = None;
    for token in body.split(|c: char| c.is_whitespace() || c == ',') {
        if let Some((k, v)) = token.split_once('=') {
            let v: usize = v
                .trim()
                .parse()
                .map_err(|_| Error::Parse(format!("manifest value '{v}' is not an integer")))?;
            match k.trim() {
                "d" => d = Some(v),
                "actions" | "A" => actions = Some(v),
                _ => {}
            }
        }
    }
    match (d, actions) {
        (Some(d), Some(a)) if d > 0 && a > 0 => Ok((d, a)),
        _ => Err(Error::Parse("manifest must declare positive d=<n> and actions=<n>".into())),
    }
}

impl MultiLabelDataset {
    pub fn new(d: usize, actions: usize, instances: Vec<LabeledInstance>) -> Result<Self> {
        for (i, inst) in instances.iter().enumerate() {
            if inst.features.len() != d {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    got: inst.features.len(),
                });
            }
            if inst.features.iter().any(|v| !v.is_finite()) {
                return Err(Error::Parse(format!("instance {i} has a non-finite feature")));
            }
            if let Some(&l) = inst.labels.iter().find(|&&l| l >= actions) {
                return Err(Error::ActionOutOfRange { action: l, actions });
            }
        }
        let instances = instances
            .into_iter()
            .map(|mut inst| {
                inst.labels.sort_unstable();
                inst.labels.dedup();
                inst
            })
            .collect();
        Ok(Self { d, actions, instances })
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let (d, actions) = parse_manifest(lines.next().ok_or_else(|| Error::Parse("empty dataset".into()))?)?;
        let header = lines.next().ok_or_else(|| Error::Parse("missing header row".into()))?;
        let delim = if header.contains('\t') { '\t' } else { ',' };
        let width = header.split(delim).count();
        if width != d + actions {
            return Err(Error::Parse(format!(
                "header has {width} columns, manifest implies {}",
                d + actions
            )));
        }
        let mut instances = Vec::new();
        for (row, line) in lines.enumerate() {
            let cells: Vec<&str> = line.split(delim).map(str::trim).collect();
            if cells.len() != width {
                return Err(Error::Parse(format!(
                    "row {}: {} columns, expected {width}",
                    row + 1,
                    cells.len()
                )));
            }
            let features = cells[..d]
                .iter()
                .map(|c| c.parse::<f64>().map_err(|_| Error::Parse(format!("row {}: bad feature '{c}'", row + 1))))
                .collect::<Result<Vec<_>>>()?;
            let mut labels = Vec::new();
            for (j, c) in cells[d..].iter().enumerate() {
                match *c {
                    "1" => labels.push(j),
                    "0" => {}
                    other => return Err(Error::Parse(format!("row {}: label cell '{other}' is not 0/1", row + 1))),
                }
            }
            instances.push(LabeledInstance { features, labels });
        }
        Self::new(d, actions, instances)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn actions(&self) -> usize {
        self.actions
    }

    pub fn instances(&self) -> &[LabeledInstance] {
        &self.instances
    }
}

/// Agents draw up to `t` instances without replacement from their side of a
/// seeded 70/30 row split; contexts are the instance features scaled to
/// `[0, 1]` per column and rounded onto the grid.
#[derive(Clone, Debug)]
pub struct MultiLabelEnv {
    dataset: MultiLabelDataset,
    contexts: Vec<ContextVector>,
    split: RowSplit,
}

impl MultiLabelEnv {
    pub fn new(dataset: MultiLabelDataset, q: u32, seed: u64) -> Result<Self> {
        if dataset.instances.is_empty() {
            return Err(Error::domain("multi-label dataset has no instances"));
        }
        let rows: Vec<Vec<f64>> = dataset.instances.iter().map(|i| i.features.clone()).collect();
        let contexts = contexts_from_features(&rows, q)?;
        let split = RowSplit::new(rows.len(), seed);
        Ok(Self {
            dataset,
            contexts,
            split,
        })
    }

    pub fn dataset(&self) -> &MultiLabelDataset {
        &self.dataset
    }

    pub fn split(&self) -> &RowSplit {
        &self.split
    }
}

impl Environment for MultiLabelEnv {
    fn dim(&self) -> usize {
        self.dataset.d
    }

    fn actions(&self) -> usize {
        self.dataset.actions
    }

    fn metric(&self) -> &'static str {
        "accuracy"
    }

    fn draw_interactions(&self, pool: Pool, n: usize, rng: &mut ChaCha8Rng) -> Vec<Interaction> {
        super::sample_items(&self.contexts, self.split.pool(pool), n, rng)
    }

    fn reward(&self, interaction: &Interaction, action: usize, _rng: &mut ChaCha8Rng) -> u8 {
        multilabel_reward(&self.dataset.instances[interaction.item], action)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SAMPLE: &str = "# d=2 actions=3\nf0,f1,l0,l1,l2\n0.5,1.0,0,1,1\n2.0,0.0,1,0,0\n0,0,0,0,0\n";

    #[test]
    fn reward_is_label_membership() {
        let inst = LabeledInstance {
            features: vec![],
            labels: vec![2, 5],
        };
        assert_eq!(multilabel_reward(&inst, 5), 1);
        assert_eq!(multilabel_reward(&inst, 2), 1);
        assert_eq!(multilabel_reward(&inst, 3), 0);
        let empty = LabeledInstance {
            features: vec![],
            labels: vec![],
        };
        assert!((0..10).all(|a| multilabel_reward(&empty, a) == 0));
    }

    #[test]
    fn reward_exhaustive_on_small_instances() {
        let actions = 4;
        for mask in 0u32..(1 << actions) {
            let labels: Vec<usize> = (0..actions).filter(|j| mask & (1 << j) != 0).collect();
            let inst = LabeledInstance {
                features: vec![],
                labels: labels.clone(),
            };
            for a in 0..actions {
                assert_eq!(multilabel_reward(&inst, a) == 1, labels.contains(&a));
            }
        }
    }

    #[test]
    fn parses_comma_and_tab() {
        let ds = MultiLabelDataset::parse(SAMPLE).unwrap();
        assert_eq!((ds.d(), ds.actions(), ds.instances().len()), (2, 3, 3));
        assert_eq!(ds.instances()[0].labels, vec![1, 2]);
        assert_eq!(ds.instances()[1].features, vec![2.0, 0.0]);
        let tabbed = SAMPLE.replace(',', "\t");
        assert_eq!(MultiLabelDataset::parse(&tabbed).unwrap(), ds);
    }

    #[test]
    fn parse_errors() {
        assert!(MultiLabelDataset::parse("").is_err());
        assert!(MultiLabelDataset::parse("f0,l0\n1,0\n").is_err());
        assert!(MultiLabelDataset::parse("# d=2 actions=3\nf0,f1,l0\n").is_err());
        assert!(MultiLabelDataset::parse("# d=1 actions=1\nf0,l0\n0.1,2\n").is_err());
        assert!(MultiLabelDataset::parse("# d=1 actions=1\nf0,l0\nx,1\n").is_err());
    }

    #[test]
    fn environment_draws_without_replacement() {
        let env = MultiLabelEnv::new(MultiLabelDataset::parse(SAMPLE).unwrap(), 1, 0).unwrap();
        let mut rng = crate::seed::rng_for(0, crate::seed::Stream::Agent, 0);
        let train = env.draw_interactions(Pool::Train, 10, &mut rng);
        let test = env.draw_interactions(Pool::Test, 10, &mut rng);
        assert_eq!((train.len(), test.len()), (2, 1));
        let mut items: Vec<usize> = train.iter().chain(&test).map(|i| i.item).collect();
        items.sort_unstable();
        assert_eq!(items, vec![0, 1, 2]);
        let mut draws = train;
        draws.extend(test);
        let row0 = draws.iter().find(|i| i.item == 0).unwrap();
        assert_eq!(env.reward(row0, 2, &mut rng), 1);
        assert_eq!(env.reward(row0, 0, &mut rng), 0);
    }
}

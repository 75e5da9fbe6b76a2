//! Experiment configuration.
//!
//! Configs are flat `key=value` text with `#` comments. Keys use the same
//! names as the command-line flags with `-` replaced by `_`, e.g.
//! `cb_sampling_rate=0.5`. Every field is validated before a run starts and
//! all problems are reported together.

use std::fmt::{self, Write as _};
use std::path::PathBuf;
use std::str::FromStr;

use num_bigint::BigUint;

use crate::codec::{cardinality, DEFAULT_ENUMERATION_CAP, MAX_PRECISION};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum EnvKind {
    Synthetic,
    MultiLabel,
    AdData,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Setting {
    Cold,
    WarmNonPrivate,
    WarmPrivate,
}

/// How a private agent feeds its encoded context to LinUCB.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum PrivateContext {
    /// One-hot indicator over the `k` codes.
    OneHot,
    /// The `d`-dimensional centroid of the code.
    Centroid,
}

macro_rules! keyword_enum {
    ($ty:ty { $($variant:path => $name:literal),+ $(,)? }) => {
        impl $ty {
            pub fn as_str(self) -> &'static str {
                match self { $($variant => $name),+ }
            }
        }
        impl FromStr for $ty {
            type Err = String;
            fn from_str(s: &str) -> Result<Self, String> {
                match s.trim() {
                    $($name => Ok($variant),)+
                    other => Err(format!(
                        "unknown value '{other}', expected one of: {}",
                        [$($name),+].join(", ")
                    )),
                }
            }
        }
        impl fmt::Display for $ty {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.as_str())
            }
        }
    };
}

keyword_enum!(EnvKind {
    EnvKind::Synthetic => "synthetic",
    EnvKind::MultiLabel => "multilabel",
    EnvKind::AdData => "addata",
});

keyword_enum!(Setting {
    Setting::Cold => "cold",
    Setting::WarmNonPrivate => "warm-nonprivate",
    Setting::WarmPrivate => "warm-private",
});

keyword_enum!(PrivateContext {
    PrivateContext::OneHot => "onehot",
    PrivateContext::Centroid => "centroid",
});

impl Setting {
    pub const ALL: [Setting; 3] = [Setting::Cold, Setting::WarmNonPrivate, Setting::WarmPrivate];
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub env: EnvKind,
    /// Input file for the multi-label and ad-data environments.
    pub data: Option<PathBuf>,
    pub d: usize,
    pub q: u32,
    pub k: usize,
    pub actions: usize,
    /// Participating agents `u`.
    pub users: usize,
    /// Local interactions per agent `t`.
    pub samples: usize,
    pub alpha: f64,
    pub cb_sampling_rate: f64,
    pub neg_rew_sam_rate: f64,
    pub cb_context_threshold: u64,
    pub beta: f64,
    pub sigma2: f64,
    /// Standard deviation of the synthetic weight matrix entries.
    pub w_scale: f64,
    /// Agents per shuffler round.
    pub batch: usize,
    pub omega_c: f64,
    pub seed: u64,
    /// User counts at which metrics are recorded; empty means automatic.
    pub checkpoints: Vec<usize>,
    /// Held-out evaluation agents; `None` means a 70/30 split against `users`.
    pub eval_users: Option<usize>,
    pub settings: Vec<Setting>,
    /// Pre-trained encoder to load instead of training one.
    pub encoder: Option<PathBuf>,
    pub encoder_samples: usize,
    pub enumeration_cap: u64,
    pub private_context: PrivateContext,
    pub ad_numeric: usize,
    pub ad_categorical: usize,
    pub ad_has_label: bool,
    pub ad_buckets: u64,
    pub out: Option<PathBuf>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            env: EnvKind::Synthetic,
            data: None,
            d: 6,
            q: 1,
            k: 1024,
            actions: 10,
            users: 10_000,
            samples: 10,
            alpha: 1.0,
            cb_sampling_rate: 0.5,
            neg_rew_sam_rate: 0.05,
            cb_context_threshold: 10,
            beta: 0.1,
            sigma2: 0.01,
            w_scale: 10.0,
            batch: 1000,
            omega_c: 1.0,
            seed: 0,
            checkpoints: Vec::new(),
            eval_users: None,
            settings: Setting::ALL.to_vec(),
            encoder: None,
            encoder_samples: 100_000,
            enumeration_cap: DEFAULT_ENUMERATION_CAP,
            private_context: PrivateContext::OneHot,
            ad_numeric: 13,
            ad_categorical: 26,
            ad_has_label: true,
            ad_buckets: 1 << 24,
            out: None,
        }
    }
}

/// Every key accepted by [`ExperimentConfig::set`], in serialization order.
pub const KEYS: &[&str] = &[
    "env",
    "data",
    "d",
    "q",
    "k",
    "actions",
    "users",
    "samples",
    "alpha",
    "cb_sampling_rate",
    "neg_rew_sam_rate",
    "cb_context_threshold",
    "beta",
    "sigma2",
    "w_scale",
    "batch",
    "omega_c",
    "seed",
    "checkpoints",
    "eval_users",
    "setting",
    "encoder",
    "encoder_samples",
    "enumeration_cap",
    "private_context",
    "ad_numeric",
    "ad_categorical",
    "ad_has_label",
    "ad_buckets",
    "out",
];

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T, String>
where
    T::Err: fmt::Display,
{
    value
        .trim()
        .parse()
        .map_err(|e| format!("{key}: cannot parse '{}': {e}", value.trim()))
}

fn parse_list<T: FromStr>(key: &str, value: &str) -> Result<Vec<T>, String>
where
    T::Err: fmt::Display,
{
    value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| parse(key, s))
        .collect()
}

fn optional_path(value: &str) -> Option<PathBuf> {
    let v = value.trim();
    (!v.is_empty()).then(|| PathBuf::from(v))
}

fn join<T: fmt::Display>(items: &[T]) -> String {
    items.iter().map(ToString::to_string).collect::<Vec<_>>().join(",")
}

impl ExperimentConfig {
    /// Sets one field from its textual form. Accepts `-` or `_` in keys.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), String> {
        let key = key.trim().replace('-', "_");
        let k = key.as_str();
        match k {
            "env" => self.env = parse(k, value)?,
            "data" => self.data = optional_path(value),
            "d" => self.d = parse(k, value)?,
            "q" => self.q = parse(k, value)?,
            "k" => self.k = parse(k, value)?,
            "actions" => self.actions = parse(k, value)?,
            "users" => self.users = parse(k, value)?,
            "samples" => self.samples = parse(k, value)?,
            "alpha" => self.alpha = parse(k, value)?,
            "cb_sampling_rate" => self.cb_sampling_rate = parse(k, value)?,
            "neg_rew_sam_rate" => self.neg_rew_sam_rate = parse(k, value)?,
            "cb_context_threshold" => self.cb_context_threshold = parse(k, value)?,
            "beta" => self.beta = parse(k, value)?,
            "sigma2" => self.sigma2 = parse(k, value)?,
            "w_scale" => self.w_scale = parse(k, value)?,
            "batch" => self.batch = parse(k, value)?,
            "omega_c" => self.omega_c = parse(k, value)?,
            "seed" => self.seed = parse(k, value)?,
            "checkpoints" => self.checkpoints = parse_list(k, value)?,
            "eval_users" => {
                self.eval_users = match value.trim() {
                    "" | "auto" => None,
                    v => Some(parse(k, v)?),
                }
            }
            "setting" | "settings" => {
                self.settings = match value.trim() {
                    "all" => Setting::ALL.to_vec(),
                    v => {
                        let mut s: Vec<Setting> = parse_list(k, v)?;
                        s.sort();
                        s.dedup();
                        s
                    }
                }
            }
            "encoder" => self.encoder = optional_path(value),
            "encoder_samples" => self.encoder_samples = parse(k, value)?,
            "enumeration_cap" => self.enumeration_cap = parse(k, value)?,
            "private_context" => self.private_context = parse(k, value)?,
            "ad_numeric" => self.ad_numeric = parse(k, value)?,
            "ad_categorical" => self.ad_categorical = parse(k, value)?,
            "ad_has_label" => self.ad_has_label = parse(k, value)?,
            "ad_buckets" => self.ad_buckets = parse(k, value)?,
            "out" => self.out = optional_path(value),
            other => return Err(format!("unknown key '{other}'")),
        }
        Ok(())
    }

    /// Textual form of one field, as accepted by [`ExperimentConfig::set`].
    pub fn get(&self, key: &str) -> Option<String> {
        let path = |p: &Option<PathBuf>| p.as_ref().map(|p| p.display().to_string()).unwrap_or_default();
        Some(match key {
            "env" => self.env.to_string(),
            "data" => path(&self.data),
            "d" => self.d.to_string(),
            "q" => self.q.to_string(),
            "k" => self.k.to_string(),
            "actions" => self.actions.to_string(),
            "users" => self.users.to_string(),
            "samples" => self.samples.to_string(),
            "alpha" => self.alpha.to_string(),
            "cb_sampling_rate" => self.cb_sampling_rate.to_string(),
            "neg_rew_sam_rate" => self.neg_rew_sam_rate.to_string(),
            "cb_context_threshold" => self.cb_context_threshold.to_string(),
            "beta" => self.beta.to_string(),
            "sigma2" => self.sigma2.to_string(),
            "w_scale" => self.w_scale.to_string(),
            "batch" => self.batch.to_string(),
            "omega_c" => self.omega_c.to_string(),
            "seed" => self.seed.to_string(),
            "checkpoints" => join(&self.checkpoints),
            "eval_users" => self.eval_users.map(|e| e.to_string()).unwrap_or_else(|| "auto".into()),
            "setting" => join(&self.settings),
            "encoder" => path(&self.encoder),
            "encoder_samples" => self.encoder_samples.to_string(),
            "enumeration_cap" => self.enumeration_cap.to_string(),
            "private_context" => self.private_context.to_string(),
            "ad_numeric" => self.ad_numeric.to_string(),
            "ad_categorical" => self.ad_categorical.to_string(),
            "ad_has_label" => self.ad_has_label.to_string(),
            "ad_buckets" => self.ad_buckets.to_string(),
            "out" => path(&self.out),
            _ => return None,
        })
    }

    /// Applies a `key=value` document on top of `self`.
    pub fn apply_kv(&mut self, text: &str) -> Result<()> {
        let mut errors = Vec::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            match line.split_once('=') {
                Some((key, value)) => {
                    if let Err(e) = self.set(key, value) {
                        errors.push(format!("line {}: {e}", lineno + 1));
                    }
                }
                None => errors.push(format!("line {}: expected key=value, got '{line}'", lineno + 1)),
            }
        }
        if errors.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(errors))
        }
    }

    pub fn from_kv(text: &str) -> Result<Self> {
        let mut config = Self::default();
        config.apply_kv(text)?;
        Ok(config)
    }

    pub fn to_kv(&self) -> String {
        let mut out = String::new();
        for key in KEYS {
            let _ = writeln!(out, "{key}={}", self.get(key).expect("every key has a value"));
        }
        out
    }

    /// Checkpoints to record, filling in the automatic 1-2-5 ladder.
    pub fn resolved_checkpoints(&self) -> Vec<usize> {
        if !self.checkpoints.is_empty() {
            return self.checkpoints.clone();
        }
        let mut points = Vec::new();
        let mut decade = 100usize;
        'outer: loop {
            for m in [1, 2, 5] {
                let c = decade.saturating_mul(m);
                if c >= self.users {
                    break 'outer;
                }
                points.push(c);
            }
            decade = decade.saturating_mul(10);
        }
        points.push(self.users);
        points
    }

    /// Held-out evaluation cohort size.
    pub fn resolved_eval_users(&self) -> usize {
        self.eval_users
            .unwrap_or_else(|| ((self.users as f64) * 3.0 / 7.0).round().max(1.0) as usize)
    }

    /// Checks every field and reports all violations at once.
    pub fn validate(&self) -> Result<()> {
        let mut errors = Vec::new();
        let mut bad = |field: &str, msg: String| errors.push(format!("{field}: {msg}"));

        if self.d == 0 {
            bad("d", "must be >= 1".into());
        }
        if self.q == 0 || self.q > MAX_PRECISION {
            bad("q", format!("must be in 1..={MAX_PRECISION}"));
        }
        if self.k == 0 {
            bad("k", "must be >= 1".into());
        }
        if self.d > 0 && (1..=MAX_PRECISION).contains(&self.q) && self.k > 0 && self.encoder.is_none() {
            let n = cardinality(self.d, self.q).expect("d and q checked above");
            if BigUint::from(self.k) > n {
                bad(
                    "k",
                    format!(
                        "{} exceeds the number of distinct contexts n = C(10^q + d - 1, d - 1) = {n}",
                        self.k
                    ),
                );
            }
        }
        if self.actions == 0 {
            bad("actions", "must be >= 1".into());
        }
        if self.users == 0 {
            bad("users", "must be >= 1".into());
        }
        if self.samples == 0 {
            bad("samples", "must be >= 1".into());
        }
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) {
            bad("alpha", format!("must be finite and >= 0, got {}", self.alpha));
        }
        if !(0.0..1.0).contains(&self.cb_sampling_rate) {
            bad("cb_sampling_rate", format!("must be in [0, 1), got {}", self.cb_sampling_rate));
        }
        if !(0.0..1.0).contains(&self.neg_rew_sam_rate) {
            bad("neg_rew_sam_rate", format!("must be in [0, 1), got {}", self.neg_rew_sam_rate));
        }
        if self.cb_context_threshold == 0 {
            bad("cb_context_threshold", "must be >= 1".into());
        }
        if !(0.0..=1.0).contains(&self.beta) {
            bad("beta", format!("must be in [0, 1], got {}", self.beta));
        }
        if !(self.sigma2 >= 0.0 && self.sigma2.is_finite()) {
            bad("sigma2", format!("must be finite and >= 0, got {}", self.sigma2));
        }
        if !(self.w_scale >= 0.0 && self.w_scale.is_finite()) {
            bad("w_scale", format!("must be finite and >= 0, got {}", self.w_scale));
        }
        if self.batch == 0 {
            bad("batch", "must be >= 1".into());
        }
        if !(self.omega_c > 0.0 && self.omega_c.is_finite()) {
            bad("omega_c", format!("must be finite and > 0, got {}", self.omega_c));
        }
        if !self.checkpoints.windows(2).all(|w| w[0] < w[1]) {
            bad("checkpoints", "must be strictly increasing".into());
        }
        if let Some(&c) = self.checkpoints.iter().find(|&&c| c == 0 || c > self.users) {
            bad("checkpoints", format!("{c} is outside 1..={}", self.users));
        }
        if self.eval_users == Some(0) {
            bad("eval_users", "must be >= 1".into());
        }
        if self.settings.is_empty() {
            bad("setting", "select at least one setting".into());
        }
        if self.env != EnvKind::Synthetic && self.data.is_none() {
            bad("data", format!("the {} environment needs an input file", self.env));
        }
        if self.env == EnvKind::AdData && self.d > self.ad_numeric {
            bad(
                "d",
                format!("ad data contexts use the first d of {} numeric columns", self.ad_numeric),
            );
        }
        if self.ad_buckets == 0 {
            bad("ad_buckets", "must be >= 1".into());
        }
        if self.encoder_samples == 0 {
            bad("encoder_samples", "must be >= 1".into());
        }

        if errors.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(errors))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid() {
        let c = ExperimentConfig::default();
        c.validate().unwrap();
        assert_eq!(c.cb_sampling_rate, 0.5);
        assert_eq!(c.q, 1);
        assert_eq!(c.alpha, 1.0);
        assert_eq!(c.cb_context_threshold, 10);
        assert_eq!(c.neg_rew_sam_rate, 0.05);
    }

    #[test]
    fn parses_key_value_text() {
        let c = ExperimentConfig::from_kv(
            "# comment\n cb_sampling_rate = 0.25 \nusers=500 # trailing\nsetting=cold,warm-private\ncheckpoints=100,500\n",
        )
        .unwrap();
        assert_eq!(c.cb_sampling_rate, 0.25);
        assert_eq!(c.users, 500);
        assert_eq!(c.settings, vec![Setting::Cold, Setting::WarmPrivate]);
        assert_eq!(c.checkpoints, vec![100, 500]);
    }

    #[test]
    fn parse_errors_name_every_line() {
        let err = ExperimentConfig::from_kv("users=abc\nbogus=1\nnoequals\n").unwrap_err();
        let Error::Config(lines) = err else { panic!() };
        assert_eq!(lines.len(), 3);
        assert!(lines[0].starts_with("line 1: users"));
        assert!(lines[1].contains("unknown key 'bogus'"));
        assert!(lines[2].contains("expected key=value"));
    }

    #[test]
    fn round_trip_is_idempotent() {
        let mut c = ExperimentConfig::default();
        c.apply_kv("env=multilabel\ndata=/tmp/x.csv\ncheckpoints=10,20\neval_users=7\nsetting=warm-private\nalpha=0.3\n")
            .unwrap();
        let once = ExperimentConfig::from_kv(&c.to_kv()).unwrap().to_kv();
        let twice = ExperimentConfig::from_kv(&once).unwrap().to_kv();
        assert_eq!(once, twice);
        assert_eq!(ExperimentConfig::from_kv(&once).unwrap(), c);
        assert_eq!(ExperimentConfig::from_kv(&ExperimentConfig::default().to_kv()).unwrap(), ExperimentConfig::default());
    }

    #[test]
    fn validation_lists_every_offending_field() {
        let c = ExperimentConfig {
            cb_sampling_rate: 1.0,
            cb_context_threshold: 0,
            k: 100,
            d: 2,
            alpha: -1.0,
            ..ExperimentConfig::default()
        };
        let Error::Config(errors) = c.validate().unwrap_err() else { panic!() };
        let fields: Vec<&str> = errors.iter().map(|e| e.split(':').next().unwrap()).collect();
        assert_eq!(fields, vec!["k", "alpha", "cb_sampling_rate", "cb_context_threshold"]);
        assert!(errors[0].contains("n = C(10^q + d - 1, d - 1) = 11"));
    }

    #[test]
    fn dataset_envs_need_a_file() {
        let c = ExperimentConfig {
            env: EnvKind::MultiLabel,
            ..ExperimentConfig::default()
        };
        assert!(c.validate().unwrap_err().to_string().contains("data"));
    }

    #[test]
    fn automatic_checkpoints() {
        let c = ExperimentConfig {
            users: 10_000,
            ..ExperimentConfig::default()
        };
        assert_eq!(c.resolved_checkpoints(), vec![100, 200, 500, 1000, 2000, 5000, 10_000]);
        let small = ExperimentConfig {
            users: 50,
            ..ExperimentConfig::default()
        };
        assert_eq!(small.resolved_checkpoints(), vec![50]);
        assert_eq!(c.resolved_eval_users(), 4286);
    }

    #[test]
    fn keywords_round_trip() {
        for s in Setting::ALL {
            assert_eq!(s.as_str().parse::<Setting>().unwrap(), s);
        }
        assert!("lukewarm".parse::<Setting>().is_err());
        assert_eq!("addata".parse::<EnvKind>().unwrap(), EnvKind::AdData);
    }
}

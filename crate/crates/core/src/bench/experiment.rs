//! Cold, warm-non-private and warm-private regimes over one environment.
//!
//! Training agents `0..u` are processed in order. Each one starts from the
//! current global model (cold agents always start fresh), runs `t` local
//! interactions with local updates, and hands its reports to the server
//! side of its regime. Reports are aggregated once per round of `batch`
//! agents; an incomplete trailing round is never flushed. At every
//! checkpoint a held-out cohort of evaluation agents (disjoint from the
//! training agents) is warm-started from the global model as it stands and
//! scored on its own `t` interactions.
//!
//! Cold agents use the same context representation as private agents, so a
//! warm-private run in which nothing reaches the server is bit-identical to
//! cold.

use std::fmt::Write as _;
use std::io::Write;
use std::sync::Arc;

use rayon::prelude::*;

use super::{Environment, Interaction, MultiLabelDataset, MultiLabelEnv, Pool, SyntheticEnv};
use crate::bandit::{LinUcb, OneHotLinUcb, RewardObservation};
use crate::bench::addata::{AdDataEnv, AdDataOptions};
use crate::codec::{encode, train_encoder_with, EncodedContext, EncoderModel, TrainOptions};
use crate::config::{EnvKind, ExperimentConfig, PrivateContext, Setting};
use crate::pipeline::{maybe_report, write_batch_log, AgentTag, GlobalModel, RefinedBatch, ReportPayload, Shuffler};
use crate::privacy::{compose, crowd_blending_l, delta_check, PrivacyBudget};
use crate::seed::{rng_for, Stream};
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct MetricCurve {
    pub setting: Setting,
    pub seed: u64,
    pub metric: String,
    /// `(users, value)` with strictly increasing `users`.
    pub points: Vec<(usize, f64)>,
}

impl MetricCurve {
    /// Value at the last checkpoint.
    pub fn last(&self) -> Option<f64> {
        self.points.last().map(|&(_, v)| v)
    }
}

/// Server-side counters for one regime at the end of a run.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RegimeStats {
    pub setting: Setting,
    pub global_version: u64,
    /// Tuples folded into the global model.
    pub global_observations: u64,
    /// Reports handed to the server side (before thresholding).
    pub reports: u64,
    /// Reports removed by the shuffler threshold.
    pub dropped: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PrivacyReport {
    pub budget: PrivacyBudget,
    /// Reports a single user can send (one per interaction).
    pub reports_per_user: u64,
    pub user_epsilon: f64,
    pub users: u64,
    /// `floor(u / k)`, when `u >= k`.
    pub crowd_l: Option<u64>,
    pub delta_ok: bool,
}

impl PrivacyReport {
    pub fn from_config(config: &ExperimentConfig) -> Result<Self> {
        let budget = PrivacyBudget::new(
            config.cb_sampling_rate,
            config.neg_rew_sam_rate,
            0.0,
            config.cb_context_threshold,
            config.omega_c,
        )?;
        let users = config.users as u64;
        let reports_per_user = config.samples as u64;
        Ok(Self {
            user_epsilon: compose(reports_per_user, budget.epsilon)?,
            delta_ok: delta_check(budget.delta, users),
            crowd_l: crowd_blending_l(users, config.k as u64).ok(),
            reports_per_user,
            users,
            budget,
        })
    }

    /// Single-line `# privacy key=value ...` summary.
    pub fn line(&self) -> String {
        let b = &self.budget;
        format!(
            "# privacy p={} p_positive={} p_negative={} epsilon={} reports_per_user={} user_epsilon={} l={} crowd_l={} omega_c={} delta={} delta_ok={}",
            b.p(),
            b.p_positive,
            b.p_negative,
            b.epsilon,
            self.reports_per_user,
            self.user_epsilon,
            b.l,
            self.crowd_l.map(|l| l.to_string()).unwrap_or_else(|| "na".into()),
            b.omega_c,
            b.delta,
            self.delta_ok
        )
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentResult {
    pub curves: Vec<MetricCurve>,
    pub stats: Vec<RegimeStats>,
    pub privacy: PrivacyReport,
    pub checkpoints: Vec<usize>,
    pub eval_users: usize,
}

impl ExperimentResult {
    pub fn curve(&self, setting: Setting) -> Option<&MetricCurve> {
        self.curves.iter().find(|c| c.setting == setting)
    }

    pub fn stats(&self, setting: Setting) -> Option<&RegimeStats> {
        self.stats.iter().find(|s| s.setting == setting)
    }

    /// `setting,seed,x,metric,value` rows followed by the privacy line.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("setting,seed,x,metric,value\n");
        for c in &self.curves {
            for &(x, v) in &c.points {
                let _ = writeln!(out, "{},{},{x},{},{v}", c.setting, c.seed, c.metric);
            }
        }
        out.push_str(&self.privacy.line());
        out.push('\n');
        out
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        out.write_all(self.to_csv().as_bytes())
    }
}

/// Builds the configured environment, checking `d` and `actions` against
/// the data for file-backed environments.
pub fn build_environment(config: &ExperimentConfig) -> Result<Arc<dyn Environment + Send>> {
    let need_path = || {
        config
            .data
            .as_deref()
            .ok_or_else(|| Error::Config(vec![format!("data: the {} environment needs an input file", config.env)]))
    };
    let env: Arc<dyn Environment + Send> = match config.env {
        EnvKind::Synthetic => Arc::new(SyntheticEnv::generate(
            config.d,
            config.actions,
            config.q,
            config.beta,
            config.sigma2,
            config.w_scale,
            config.seed,
        )?),
        EnvKind::MultiLabel => {
            let dataset = MultiLabelDataset::load(need_path()?)?;
            let mut errors = Vec::new();
            if dataset.d() != config.d {
                errors.push(format!("d: {} but the dataset declares d={}", config.d, dataset.d()));
            }
            if dataset.actions() != config.actions {
                errors.push(format!(
                    "actions: {} but the dataset declares actions={}",
                    config.actions,
                    dataset.actions()
                ));
            }
            if !errors.is_empty() {
                return Err(Error::Config(errors));
            }
            Arc::new(MultiLabelEnv::new(dataset, config.q, config.seed)?)
        }
        EnvKind::AdData => {
            let options = AdDataOptions {
                numeric: config.ad_numeric,
                categorical: config.ad_categorical,
                has_label: config.ad_has_label,
                context_dim: config.d,
                top_n: config.actions,
                buckets: config.ad_buckets,
                q: config.q,
            };
            Arc::new(AdDataEnv::load(need_path()?, &options, config.seed)?)
        }
    };
    Ok(env)
}

/// Loads the configured encoder file or trains one from the master seed.
pub fn build_encoder(config: &ExperimentConfig) -> Result<EncoderModel> {
    match &config.encoder {
        Some(path) => {
            let model = EncoderModel::from_json(&std::fs::read_to_string(path)?)?;
            let mut errors = Vec::new();
            if model.d() != config.d {
                errors.push(format!("encoder: trained for d={}, config has d={}", model.d(), config.d));
            }
            if model.q() != config.q {
                errors.push(format!("encoder: trained for q={}, config has q={}", model.q(), config.q));
            }
            if model.k() != config.k {
                errors.push(format!("encoder: has k={}, config has k={}", model.k(), config.k));
            }
            if errors.is_empty() {
                Ok(model)
            } else {
                Err(Error::Config(errors))
            }
        }
        None => train_encoder_with(
            config.d,
            config.q,
            config.k,
            config.seed,
            &TrainOptions {
                enumeration_cap: config.enumeration_cap,
                samples: config.encoder_samples,
                ..TrainOptions::default()
            },
        ),
    }
}

/// A local agent's bandit in one of the three context representations.
#[derive(Clone, Debug)]
enum Policy {
    Raw(LinUcb),
    Code(OneHotLinUcb),
    Centroid(LinUcb),
}

/// What an agent sees for one interaction.
struct Seen {
    interaction: Interaction,
    raw: Vec<f64>,
    code: EncodedContext,
}

impl Policy {
    fn select(&self, seen: &Seen, encoder: Option<&EncoderModel>) -> Result<usize> {
        Ok(match self {
            Policy::Raw(b) => b.select_action(&seen.raw)?.0,
            Policy::Code(b) => b.select_action(seen.code.code())?.0,
            Policy::Centroid(b) => b.select_action(centroid(encoder, seen.code))?.0,
        })
    }

    fn observe(&mut self, seen: &Seen, encoder: Option<&EncoderModel>, action: usize, reward: u8) -> Result<()> {
        match self {
            Policy::Raw(b) => b.observe(&seen.raw, action, reward),
            Policy::Code(b) => b.observe(seen.code.code(), action, reward),
            Policy::Centroid(b) => b.observe(centroid(encoder, seen.code), action, reward),
        }
    }
}

fn centroid(encoder: Option<&EncoderModel>, code: EncodedContext) -> &[f64] {
    &encoder.expect("centroid contexts need an encoder").centroids()[code.code()]
}

/// Server side of a regime.
enum Server {
    /// Cold: nothing is ever sent.
    None { fresh: Policy },
    Raw(GlobalModel<LinUcb>),
    Code(GlobalModel<OneHotLinUcb>),
    Centroid(GlobalModel<LinUcb>),
}

impl Server {
    fn warm_start(&self) -> Policy {
        match self {
            Server::None { fresh } => fresh.clone(),
            Server::Raw(g) => Policy::Raw(g.warm_start()),
            Server::Code(g) => Policy::Code(g.warm_start()),
            Server::Centroid(g) => Policy::Centroid(g.warm_start()),
        }
    }

    fn counters(&self) -> (u64, u64) {
        match self {
            Server::None { .. } => (0, 0),
            Server::Raw(g) | Server::Centroid(g) => (g.version(), g.observations()),
            Server::Code(g) => (g.version(), g.observations()),
        }
    }
}

struct Simulation<'a> {
    config: &'a ExperimentConfig,
    env: &'a dyn Environment,
    encoder: Option<&'a EncoderModel>,
}

impl Simulation<'_> {
    fn fresh_private_policy(&self) -> Result<Policy> {
        let c = self.config;
        Ok(match c.private_context {
            PrivateContext::OneHot => Policy::Code(OneHotLinUcb::new(c.k, self.env.actions(), c.alpha)?),
            PrivateContext::Centroid => Policy::Centroid(LinUcb::new(self.env.dim(), self.env.actions(), c.alpha)?),
        })
    }

    fn server(&self, setting: Setting) -> Result<Server> {
        let c = self.config;
        let (dim, actions) = (self.env.dim(), self.env.actions());
        Ok(match setting {
            Setting::Cold => Server::None {
                fresh: self.fresh_private_policy()?,
            },
            Setting::WarmNonPrivate => Server::Raw(GlobalModel::over_raw(dim, actions, c.alpha)?),
            Setting::WarmPrivate => match c.private_context {
                PrivateContext::OneHot => Server::Code(GlobalModel::over_codes(c.k, actions, c.alpha)?),
                PrivateContext::Centroid => Server::Centroid(GlobalModel::over_raw(dim, actions, c.alpha)?),
            },
        })
    }

    fn observe_contexts(&self, pool: Pool, rng: &mut rand_chacha::ChaCha8Rng) -> Result<Vec<Seen>> {
        self.env
            .draw_interactions(pool, self.config.samples, rng)
            .into_iter()
            .map(|interaction| {
                let code = match self.encoder {
                    Some(m) => encode(m, &interaction.context)?,
                    None => EncodedContext(0),
                };
                Ok(Seen {
                    raw: interaction.context.to_f64(),
                    interaction,
                    code,
                })
            })
            .collect()
    }

    /// Runs one agent's local loop; returns `(interaction index, action, reward)`.
    fn run_agent(
        &self,
        policy: &mut Policy,
        seen: &[Seen],
        rng: &mut rand_chacha::ChaCha8Rng,
    ) -> Result<Vec<(usize, usize, u8)>> {
        let mut log = Vec::with_capacity(seen.len());
        for (i, s) in seen.iter().enumerate() {
            let action = policy.select(s, self.encoder)?;
            let reward = self.env.reward(&s.interaction, action, rng);
            policy.observe(s, self.encoder, action, reward)?;
            log.push((i, action, reward));
        }
        Ok(log)
    }

    /// Mean reward of the held-out cohort, each agent warm-started from
    /// `server`. Integer sums keep the parallel reduction exact.
    fn evaluate(&self, server: &Server, eval_users: usize) -> Result<f64> {
        let totals = (0..eval_users)
            .into_par_iter()
            .map(|j| -> Result<(u64, u64)> {
                let mut rng = rng_for(self.config.seed, Stream::Evaluation, j as u64);
                let seen = self.observe_contexts(Pool::Test, &mut rng)?;
                let mut policy = server.warm_start();
                let log = self.run_agent(&mut policy, &seen, &mut rng)?;
                Ok((log.iter().map(|&(_, _, r)| r as u64).sum(), log.len() as u64))
            })
            .collect::<Result<Vec<_>>>()?;
        let (hits, n) = totals
            .into_iter()
            .fold((0u64, 0u64), |(h, n), (dh, dn)| (h + dh, n + dn));
        Ok(if n == 0 { 0.0 } else { hits as f64 / n as f64 })
    }

    fn run_setting(
        &self,
        setting: Setting,
        checkpoints: &[usize],
        eval_users: usize,
        mut batch_log: Option<&mut (dyn Write + '_)>,
    ) -> Result<(MetricCurve, RegimeStats)> {
        let c = self.config;
        let mut server = self.server(setting)?;
        let mut curve = MetricCurve {
            setting,
            seed: c.seed,
            metric: self.env.metric().to_string(),
            points: Vec::with_capacity(checkpoints.len()),
        };
        let mut stats = RegimeStats {
            setting,
            global_version: 0,
            global_observations: 0,
            reports: 0,
            dropped: 0,
        };

        if let Server::None { .. } = server {
            // Nothing depends on the training agents.
            let value = self.evaluate(&server, eval_users)?;
            curve.points = checkpoints.iter().map(|&x| (x, value)).collect();
            return Ok((curve, stats));
        }

        let mut shuffler = Shuffler::new(c.cb_context_threshold, rng_for(c.seed, Stream::Shuffler, 0))?;
        let mut raw_round: Vec<RewardObservation> = Vec::new();
        let mut next_checkpoint = checkpoints.iter().peekable();

        for agent in 0..c.users {
            let mut rng = rng_for(c.seed, Stream::Agent, agent as u64);
            let seen = self.observe_contexts(Pool::Train, &mut rng)?;
            let mut policy = server.warm_start();
            let log = self.run_agent(&mut policy, &seen, &mut rng)?;

            match &server {
                Server::Raw(_) => {
                    for &(i, action, reward) in &log {
                        raw_round.push(RewardObservation::new(seen[i].raw.clone(), action, reward));
                    }
                    stats.reports += log.len() as u64;
                }
                Server::Code(_) | Server::Centroid(_) => {
                    let mut report_rng = rng_for(c.seed, Stream::Report, agent as u64);
                    for &(i, action, reward) in &log {
                        if maybe_report(&mut report_rng, c.cb_sampling_rate, c.neg_rew_sam_rate, reward) {
                            shuffler.submit(ReportPayload {
                                code: seen[i].code,
                                action,
                                reward,
                                agent_tag: AgentTag(agent as u64),
                            });
                            stats.reports += 1;
                        }
                    }
                }
                Server::None { .. } => unreachable!("cold handled above"),
            }

            let done = agent + 1;
            if done % c.batch == 0 {
                let mut next_batch = || -> Result<RefinedBatch> {
                    let batch = flush(&mut shuffler);
                    stats.dropped += batch.dropped_count as u64;
                    if let Some(out) = batch_log.as_deref_mut() {
                        write_batch_log(out, shuffler.flushed(), &batch)?;
                    }
                    Ok(batch)
                };
                match &mut server {
                    Server::Raw(g) => g.ingest_raw(&std::mem::take(&mut raw_round))?,
                    Server::Code(g) => g.server_ingest(&next_batch()?)?,
                    Server::Centroid(g) => {
                        let batch = next_batch()?;
                        let encoder = self.encoder.expect("centroid contexts need an encoder");
                        let observations: Vec<RewardObservation> = batch
                            .tuples
                            .iter()
                            .map(|t| {
                                let x = encoder
                                    .centroids()
                                    .get(t.code)
                                    .ok_or(Error::CodeOutOfRange { code: t.code, k: encoder.k() })?;
                                Ok(RewardObservation::new(x.clone(), t.action, t.reward))
                            })
                            .collect::<Result<_>>()?;
                        g.ingest_raw(&observations)?;
                    }
                    Server::None { .. } => unreachable!(),
                }
            }
            if next_checkpoint.peek() == Some(&&done) {
                next_checkpoint.next();
                curve.points.push((done, self.evaluate(&server, eval_users)?));
            }
        }
        let (version, observations) = server.counters();
        stats.global_version = version;
        stats.global_observations = observations;
        Ok((curve, stats))
    }
}

/// An empty round still bumps the model version, like any other batch.
fn flush(shuffler: &mut Shuffler) -> RefinedBatch {
    shuffler.flush().unwrap_or(RefinedBatch {
        tuples: Vec::new(),
        threshold_used: shuffler.threshold(),
        dropped_count: 0,
    })
}

/// Runs every configured setting. Deterministic for a fixed config.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentResult> {
    config.validate()?;
    let env = build_environment(config)?;
    run_experiment_in(config, env.as_ref())
}

/// [`run_experiment`] over a caller-supplied environment.
pub fn run_experiment_in(config: &ExperimentConfig, env: &dyn Environment) -> Result<ExperimentResult> {
    run_experiment_logged(config, env, None)
}

/// [`run_experiment_in`], additionally writing every refined warm-private
/// batch to `batch_log`.
pub fn run_experiment_logged(
    config: &ExperimentConfig,
    env: &dyn Environment,
    mut batch_log: Option<&mut dyn Write>,
) -> Result<ExperimentResult> {
    config.validate()?;
    if env.dim() != config.d || env.actions() != config.actions {
        return Err(Error::Config(vec![format!(
            "environment has d={} actions={}, config has d={} actions={}",
            env.dim(),
            env.actions(),
            config.d,
            config.actions
        )]));
    }
    let needs_encoder = config
        .settings
        .iter()
        .any(|s| matches!(s, Setting::Cold | Setting::WarmPrivate));
    let encoder = if needs_encoder { Some(build_encoder(config)?) } else { None };
    let sim = Simulation {
        config,
        env,
        encoder: encoder.as_ref(),
    };
    let checkpoints = config.resolved_checkpoints();
    let eval_users = config.resolved_eval_users();

    let mut settings = config.settings.clone();
    settings.sort();
    settings.dedup();
    let mut curves = Vec::new();
    let mut stats = Vec::new();
    for setting in settings {
        let log = if setting == Setting::WarmPrivate {
            batch_log.as_deref_mut()
        } else {
            None
        };
        let (curve, s) = sim.run_setting(setting, &checkpoints, eval_users, log)?;
        curves.push(curve);
        stats.push(s);
    }
    Ok(ExperimentResult {
        curves,
        stats,
        privacy: PrivacyReport::from_config(config)?,
        checkpoints,
        eval_users,
    })
}

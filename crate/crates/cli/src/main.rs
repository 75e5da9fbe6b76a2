//! `p2b`: train encoders, run bandit experiments and tabulate privacy budgets.
//!
//! Exit codes: 0 on success, 2 for invalid arguments or configuration, 3 for
//! runtime failures (I/O, malformed input files).

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use p2b_core::bench::{build_environment, run_experiment_logged};
use p2b_core::codec::{cardinality, train_encoder_with, TrainOptions, DEFAULT_ENUMERATION_CAP};
use p2b_core::config::ExperimentConfig;
use p2b_core::privacy::{delta_check, delta_of, epsilon_of};
use p2b_core::Error;

const EXIT_VALIDATION: u8 = 2;
const EXIT_RUNTIME: u8 = 3;

#[derive(Parser)]
#[command(name = "p2b", version, about = "Privacy-preserving contextual bandit experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a context encoder and write it as JSON.
    BuildEncoder(BuildEncoderArgs),
    /// Run cold / warm-non-private / warm-private experiments and emit CSV.
    Run(Box<RunArgs>),
    /// Tabulate epsilon (and optionally delta) over a grid of participation probabilities.
    Privacy(PrivacyArgs),
}

#[derive(Args)]
struct BuildEncoderArgs {
    #[arg(long)]
    d: usize,
    #[arg(long, default_value_t = 1)]
    q: u32,
    #[arg(long)]
    k: usize,
    #[arg(long, env = "P2B_SEED", default_value_t = 0)]
    seed: u64,
    /// Grid samples used when the grid is too large to enumerate.
    #[arg(long, default_value_t = 100_000)]
    samples: usize,
    #[arg(long, default_value_t = DEFAULT_ENUMERATION_CAP)]
    enumeration_cap: u64,
    /// User counts for the implied crowd-size table.
    #[arg(long, value_delimiter = ',', default_values_t = [1_000u64, 10_000, 100_000, 1_000_000])]
    users: Vec<u64>,
    #[arg(long)]
    out: PathBuf,
}

/// Every field is optional so that a `--config` file can fill it in; flags
/// override the file.
#[derive(Args)]
struct RunArgs {
    /// Flat key=value config file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Write each refined warm-private batch to this file.
    #[arg(long)]
    batch_log: Option<PathBuf>,
    #[arg(long)]
    env: Option<String>,
    #[arg(long)]
    data: Option<String>,
    #[arg(long)]
    d: Option<String>,
    #[arg(long)]
    q: Option<String>,
    #[arg(long)]
    k: Option<String>,
    #[arg(long)]
    actions: Option<String>,
    #[arg(long)]
    users: Option<String>,
    #[arg(long)]
    samples: Option<String>,
    #[arg(long)]
    alpha: Option<String>,
    #[arg(long)]
    cb_sampling_rate: Option<String>,
    #[arg(long)]
    neg_rew_sam_rate: Option<String>,
    #[arg(long)]
    cb_context_threshold: Option<String>,
    #[arg(long)]
    beta: Option<String>,
    #[arg(long)]
    sigma2: Option<String>,
    #[arg(long)]
    w_scale: Option<String>,
    #[arg(long)]
    batch: Option<String>,
    #[arg(long)]
    omega_c: Option<String>,
    #[arg(long, env = "P2B_SEED")]
    seed: Option<String>,
    #[arg(long)]
    checkpoints: Option<String>,
    #[arg(long)]
    eval_users: Option<String>,
    /// cold, warm-nonprivate, warm-private (comma-separated) or all.
    #[arg(long)]
    setting: Option<String>,
    #[arg(long)]
    encoder: Option<String>,
    #[arg(long)]
    encoder_samples: Option<String>,
    #[arg(long)]
    enumeration_cap: Option<String>,
    /// onehot or centroid.
    #[arg(long)]
    private_context: Option<String>,
    #[arg(long)]
    ad_numeric: Option<String>,
    #[arg(long)]
    ad_categorical: Option<String>,
    #[arg(long)]
    ad_has_label: Option<String>,
    #[arg(long)]
    ad_buckets: Option<String>,
    /// Output CSV path; stdout when absent.
    #[arg(long)]
    out: Option<String>,
}

impl RunArgs {
    fn overrides(&self) -> [(&'static str, &Option<String>); 30] {
        [
            ("env", &self.env),
            ("data", &self.data),
            ("d", &self.d),
            ("q", &self.q),
            ("k", &self.k),
            ("actions", &self.actions),
            ("users", &self.users),
            ("samples", &self.samples),
            ("alpha", &self.alpha),
            ("cb_sampling_rate", &self.cb_sampling_rate),
            ("neg_rew_sam_rate", &self.neg_rew_sam_rate),
            ("cb_context_threshold", &self.cb_context_threshold),
            ("beta", &self.beta),
            ("sigma2", &self.sigma2),
            ("w_scale", &self.w_scale),
            ("batch", &self.batch),
            ("omega_c", &self.omega_c),
            ("seed", &self.seed),
            ("checkpoints", &self.checkpoints),
            ("eval_users", &self.eval_users),
            ("setting", &self.setting),
            ("encoder", &self.encoder),
            ("encoder_samples", &self.encoder_samples),
            ("enumeration_cap", &self.enumeration_cap),
            ("private_context", &self.private_context),
            ("ad_numeric", &self.ad_numeric),
            ("ad_categorical", &self.ad_categorical),
            ("ad_has_label", &self.ad_has_label),
            ("ad_buckets", &self.ad_buckets),
            ("out", &self.out),
        ]
    }

    fn to_config(&self) -> Result<ExperimentConfig, Failure> {
        let mut config = match &self.config {
            Some(path) => {
                let text = std::fs::read_to_string(path)
                    .map_err(|e| Failure::runtime(format!("{}: {e}", path.display())))?;
                ExperimentConfig::from_kv(&text).map_err(Failure::from)?
            }
            None => ExperimentConfig::default(),
        };
        let errors: Vec<String> = self
            .overrides()
            .into_iter()
            .filter_map(|(key, value)| value.as_ref().map(|v| (key, v)))
            .filter_map(|(key, value)| config.set(key, value).err())
            .collect();
        if !errors.is_empty() {
            return Err(Failure::validation(errors.join("\n")));
        }
        config.validate().map_err(Failure::from)?;
        Ok(config)
    }
}

#[derive(Args)]
struct PrivacyArgs {
    /// Participation probabilities, comma-separated.
    #[arg(long, value_delimiter = ',', required = true, allow_negative_numbers = true)]
    p: Vec<f64>,
    #[arg(long, default_value_t = 0.0)]
    epsilon_bar: f64,
    /// Crowd size; adds the delta column.
    #[arg(long)]
    l: Option<u64>,
    #[arg(long, default_value_t = 1.0)]
    omega_c: f64,
    /// Population size; adds the delta <= 1/u verdict.
    #[arg(long)]
    users: Option<u64>,
}

struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn validation(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_VALIDATION,
            message: message.into(),
        }
    }

    fn runtime(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_RUNTIME,
            message: message.into(),
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::Io(_) | Error::Json(_) | Error::Parse(_) => EXIT_RUNTIME,
            _ => EXIT_VALIDATION,
        };
        Self {
            code,
            message: e.to_string(),
        }
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Failure::runtime(e.to_string())
    }
}

fn build_encoder(args: &BuildEncoderArgs) -> Result<(), Failure> {
    let n = cardinality(args.d, args.q)?;
    let options = TrainOptions {
        enumeration_cap: args.enumeration_cap,
        samples: args.samples,
        ..TrainOptions::default()
    };
    let model = train_encoder_with(args.d, args.q, args.k, args.seed, &options)?;
    std::fs::write(&args.out, model.to_json()?)
        .map_err(|e| Failure::runtime(format!("{}: {e}", args.out.display())))?;

    let mut out = io::stdout().lock();
    writeln!(out, "n={n}")?;
    writeln!(out, "k={}", model.k())?;
    writeln!(out, "min_cluster_size={}", model.min_cluster_size())?;
    writeln!(out, "exhaustive={}", model.exhaustive())?;
    writeln!(out, "u,l")?;
    for &u in &args.users {
        writeln!(out, "{u},{}", u / model.k() as u64)?;
    }
    Ok(())
}

fn run(args: &RunArgs) -> Result<(), Failure> {
    let config = args.to_config()?;
    let env = build_environment(&config)?;
    let mut log = match &args.batch_log {
        Some(path) => Some(BufWriter::new(
            File::create(path).map_err(|e| Failure::runtime(format!("{}: {e}", path.display())))?,
        )),
        None => None,
    };
    let result = run_experiment_logged(&config, env.as_ref(), log.as_mut().map(|w| w as &mut dyn Write))?;
    if let Some(mut w) = log {
        w.flush()?;
    }
    match &config.out {
        Some(path) => {
            let mut w = BufWriter::new(
                File::create(path).map_err(|e| Failure::runtime(format!("{}: {e}", path.display())))?,
            );
            result.write_csv(&mut w)?;
            w.flush()?;
        }
        None => result.write_csv(io::stdout().lock())?,
    }
    Ok(())
}

fn privacy(args: &PrivacyArgs) -> Result<(), Failure> {
    if let Some(&bad) = args.p.iter().find(|p| !(0.0..1.0).contains(*p)) {
        return Err(Failure::validation(format!("p: {bad} is outside [0, 1)")));
    }
    let mut grid = args.p.clone();
    grid.sort_by(f64::total_cmp);
    let mut out = io::stdout().lock();
    writeln!(out, "p,epsilon_bar,epsilon,l,omega_c,delta,delta_ok")?;
    for p in grid {
        let epsilon = epsilon_of(p, args.epsilon_bar)?;
        let (l, delta, ok) = match args.l {
            Some(l) => {
                let delta = delta_of(l, p, args.omega_c)?;
                let ok = args.users.map(|u| delta_check(delta, u).to_string()).unwrap_or_default();
                (l.to_string(), delta.to_string(), ok)
            }
            None => Default::default(),
        };
        writeln!(out, "{p},{},{epsilon},{l},{},{delta},{ok}", args.epsilon_bar, args.omega_c)?;
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match &cli.command {
        Command::BuildEncoder(args) => build_encoder(args),
        Command::Run(args) => run(args),
        Command::Privacy(args) => privacy(args),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

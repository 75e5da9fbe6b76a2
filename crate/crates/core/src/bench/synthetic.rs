//! Synthetic preference environment.
//!
//! A fixed random linear map scores every action for a context; the mean
//! reward of action `a` is `beta * softmax(W x + b)_a + z` with
//! `z ~ N(0, sigma2)`. Rewards are binary: the mean is clamped to `[0, 1]`
//! and used as a Bernoulli rate.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::{Environment, Interaction, Pool};
use crate::codec::sample_grid_point;
use crate::seed::{rng_for, Stream};
use crate::{Error, Result};

/// Numerically stable softmax (max-subtracted).
pub fn softmax(v: &[f64]) -> Vec<f64> {
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = v.iter().map(|x| (x - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticEnv {
    d: usize,
    q: u32,
    /// Row-major `actions x d`.
    weights: Vec<f64>,
    bias: Vec<f64>,
    beta: f64,
    noise: Normal<f64>,
}

impl SyntheticEnv {
    pub fn from_parts(weights: Vec<Vec<f64>>, bias: Vec<f64>, q: u32, beta: f64, sigma2: f64) -> Result<Self> {
        let actions = weights.len();
        let d = weights.first().map(Vec::len).unwrap_or(0);
        if actions == 0 || d == 0 || bias.len() != actions || weights.iter().any(|r| r.len() != d) {
            return Err(Error::domain("weights must be a non-empty actions x d matrix matching bias"));
        }
        if !(0.0..=1.0).contains(&beta) {
            return Err(Error::domain(format!("beta must be in [0, 1], got {beta}")));
        }
        let noise = Normal::new(0.0, sigma2.max(0.0).sqrt())
            .map_err(|e| Error::domain(format!("sigma2: {e}")))?;
        Ok(Self {
            d,
            q,
            weights: weights.into_iter().flatten().collect(),
            bias,
            beta,
            noise,
        })
    }

    /// Draws `W ~ N(0, w_scale^2)` and `b ~ N(0, 1)` from the environment
    /// stream of `seed`. They stay fixed for the lifetime of the environment.
    pub fn generate(
        d: usize,
        actions: usize,
        q: u32,
        beta: f64,
        sigma2: f64,
        w_scale: f64,
        seed: u64,
    ) -> Result<Self> {
        let mut rng = rng_for(seed, Stream::Environment, 0);
        let unit = Normal::new(0.0, 1.0).expect("unit normal");
        let weights = (0..actions)
            .map(|_| (0..d).map(|_| w_scale * unit.sample(&mut rng)).collect())
            .collect();
        let bias = (0..actions).map(|_| unit.sample(&mut rng)).collect();
        Self::from_parts(weights, bias, q, beta, sigma2)
    }

    /// `softmax(W x + b)`.
    pub fn preferences(&self, x: &[f64]) -> Vec<f64> {
        let logits: Vec<f64> = self
            .weights
            .chunks(self.d)
            .zip(&self.bias)
            .map(|(row, b)| row.iter().zip(x).map(|(w, xi)| w * xi).sum::<f64>() + b)
            .collect();
        softmax(&logits)
    }

    /// Noise-free mean reward `beta * softmax(W x + b)_a`.
    pub fn mean_reward(&self, x: &[f64], action: usize) -> f64 {
        self.beta * self.preferences(x)[action]
    }

    /// Draws `z`, then a Bernoulli with rate `clamp(mean + z, 0, 1)`. Always
    /// consumes one normal and one uniform draw.
    pub fn synth_reward<R: Rng + ?Sized>(&self, x: &[f64], action: usize, rng: &mut R) -> u8 {
        let z = self.noise.sample(rng);
        let rate = (self.mean_reward(x, action) + z).clamp(0.0, 1.0);
        u8::from(rng.random::<f64>() < rate)
    }
}

impl Environment for SyntheticEnv {
    fn dim(&self) -> usize {
        self.d
    }

    fn actions(&self) -> usize {
        self.bias.len()
    }

    fn metric(&self) -> &'static str {
        "average_reward"
    }

    /// Contexts are fresh uniform grid draws, so both pools are the same.
    fn draw_interactions(&self, _pool: Pool, n: usize, rng: &mut ChaCha8Rng) -> Vec<Interaction> {
        (0..n)
            .map(|_| Interaction {
                context: sample_grid_point(self.d, self.q, rng).expect("dimension and precision validated"),
                item: 0,
            })
            .collect()
    }

    fn reward(&self, interaction: &Interaction, action: usize, rng: &mut ChaCha8Rng) -> u8 {
        self.synth_reward(&interaction.context.to_f64(), action, rng)
    }
}

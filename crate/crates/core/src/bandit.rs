//! Disjoint-arm LinUCB.
//!
//! Each action keeps a ridge-regression design matrix `A_a` (identity prior)
//! and response vector `b_a`. The score of action `a` for context `x` is
//! `theta_a . x + alpha * sqrt(x' A_a^-1 x)` with `theta_a = A_a^-1 b_a`.
//!
//! [`LinUcb`] keeps `A_a^-1` up to date with Sherman-Morrison rank-one
//! updates; [`LinUcb::direct_scores`] recomputes everything from `A_a` and
//! `b_a` by Cholesky solves. [`OneHotLinUcb`] is the same model restricted to
//! one-hot contexts over `k` codes, where every `A_a` stays diagonal.

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub const SNAPSHOT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RewardObservation {
    pub context: Vec<f64>,
    pub action: usize,
    pub reward: u8,
}

impl RewardObservation {
    pub fn new(context: Vec<f64>, action: usize, reward: u8) -> Self {
        Self {
            context,
            action,
            reward,
        }
    }
}

fn check_reward(reward: u8) -> Result<()> {
    if reward > 1 {
        return Err(Error::domain(format!("reward must be 0 or 1, got {reward}")));
    }
    Ok(())
}

fn check_alpha(alpha: f64) -> Result<()> {
    if !(alpha >= 0.0 && alpha.is_finite()) {
        return Err(Error::domain(format!("alpha must be finite and >= 0, got {alpha}")));
    }
    Ok(())
}

/// Index of the largest score; the lowest index wins ties.
pub fn argmax(scores: &[f64]) -> usize {
    let mut best = 0;
    for (i, &s) in scores.iter().enumerate().skip(1) {
        if s > scores[best] {
            best = i;
        }
    }
    best
}

#[derive(Clone, Debug, PartialEq)]
struct Arm {
    design: Vec<f64>,
    response: Vec<f64>,
    inverse: Vec<f64>,
}

impl Arm {
    fn identity(dim: usize) -> Self {
        let eye = linalg::identity(dim);
        Self {
            design: eye.clone(),
            response: vec![0.0; dim],
            inverse: eye,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LinUcb {
    dim: usize,
    alpha: f64,
    arms: Vec<Arm>,
}

impl LinUcb {
    pub fn new(dim: usize, actions: usize, alpha: f64) -> Result<Self> {
        if dim == 0 || actions == 0 {
            return Err(Error::domain(format!(
                "LinUCB needs dim >= 1 and actions >= 1, got dim={dim}, actions={actions}"
            )));
        }
        check_alpha(alpha)?;
        Ok(Self {
            dim,
            alpha,
            arms: vec![Arm::identity(dim); actions],
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn actions(&self) -> usize {
        self.arms.len()
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    /// Row-major `dim x dim` design matrix of `action`.
    pub fn design(&self, action: usize) -> &[f64] {
        &self.arms[action].design
    }

    pub fn response(&self, action: usize) -> &[f64] {
        &self.arms[action].response
    }

    /// Ridge estimate `A_a^-1 b_a` by a fresh Cholesky solve.
    pub fn theta(&self, action: usize) -> Vec<f64> {
        let arm = &self.arms[action];
        let chol = linalg::cholesky(&arm.design, self.dim).expect("design matrices stay SPD");
        linalg::cholesky_solve(&chol, &arm.response, self.dim)
    }

    fn check_context(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: x.len(),
            });
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::domain("context entries must be finite"));
        }
        Ok(())
    }

    fn check_action(&self, action: usize) -> Result<()> {
        if action >= self.actions() {
            return Err(Error::ActionOutOfRange {
                action,
                actions: self.actions(),
            });
        }
        Ok(())
    }

    /// UCB scores from the maintained inverses.
    pub fn scores(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_context(x)?;
        let d = self.dim;
        let mut v = vec![0.0; d];
        Ok(self
            .arms
            .iter()
            .map(|arm| {
                for (i, vi) in v.iter_mut().enumerate() {
                    *vi = arm.inverse[i * d..(i + 1) * d].iter().zip(x).map(|(a, b)| a * b).sum();
                }
                let exploit: f64 = arm.response.iter().zip(&v).map(|(b, vi)| b * vi).sum();
                let width: f64 = x.iter().zip(&v).map(|(a, b)| a * b).sum();
                exploit + self.alpha * width.max(0.0).sqrt()
            })
            .collect())
    }

    /// UCB scores recomputed from `A_a` and `b_a` by Cholesky solves.
    pub fn direct_scores(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_context(x)?;
        let d = self.dim;
        Ok(self
            .arms
            .iter()
            .map(|arm| {
                let chol = linalg::cholesky(&arm.design, d).expect("design matrices stay SPD");
                let theta = linalg::cholesky_solve(&chol, &arm.response, d);
                let v = linalg::cholesky_solve(&chol, x, d);
                let exploit: f64 = theta.iter().zip(x).map(|(t, xi)| t * xi).sum();
                let width: f64 = x.iter().zip(&v).map(|(a, b)| a * b).sum();
                exploit + self.alpha * width.max(0.0).sqrt()
            })
            .collect())
    }

    pub fn select_action(&self, x: &[f64]) -> Result<(usize, Vec<f64>)> {
        let scores = self.scores(x)?;
        Ok((argmax(&scores), scores))
    }

    pub fn update(&mut self, obs: &RewardObservation) -> Result<()> {
        self.observe(&obs.context, obs.action, obs.reward)
    }

    /// `A_a += x x'`, `b_a += r x`.
    pub fn observe(&mut self, x: &[f64], action: usize, reward: u8) -> Result<()> {
        self.check_context(x)?;
        self.check_action(action)?;
        check_reward(reward)?;
        let d = self.dim;
        let arm = &mut self.arms[action];
        for i in 0..d {
            for j in 0..d {
                arm.design[i * d + j] += x[i] * x[j];
            }
        }
        if reward == 1 {
            for (b, xi) in arm.response.iter_mut().zip(x) {
                *b += xi;
            }
        }
        // Sherman-Morrison: (A + x x')^-1 = A^-1 - (A^-1 x)(A^-1 x)' / (1 + x' A^-1 x).
        let v: Vec<f64> = (0..d)
            .map(|i| arm.inverse[i * d..(i + 1) * d].iter().zip(x).map(|(a, b)| a * b).sum())
            .collect();
        let denom = 1.0 + x.iter().zip(&v).map(|(a, b)| a * b).sum::<f64>();
        for i in 0..d {
            for j in 0..d {
                arm.inverse[i * d + j] -= v[i] * v[j] / denom;
            }
        }
        Ok(())
    }

    /// Folds a batch of observations. All entries are validated before any
    /// is applied; touched inverses are then rebuilt from their design matrix.
    pub fn merge_statistics(&mut self, batch: &[RewardObservation]) -> Result<()> {
        for obs in batch {
            self.check_context(&obs.context)?;
            self.check_action(obs.action)?;
            check_reward(obs.reward)?;
        }
        let d = self.dim;
        let mut touched = vec![false; self.actions()];
        for obs in batch {
            let arm = &mut self.arms[obs.action];
            let x = &obs.context;
            for i in 0..d {
                for j in 0..d {
                    arm.design[i * d + j] += x[i] * x[j];
                }
            }
            if obs.reward == 1 {
                for (b, xi) in arm.response.iter_mut().zip(x) {
                    *b += xi;
                }
            }
            touched[obs.action] = true;
        }
        for (arm, _) in self.arms.iter_mut().zip(&touched).filter(|(_, t)| **t) {
            let chol = linalg::cholesky(&arm.design, d).expect("design matrices stay SPD");
            arm.inverse = linalg::cholesky_inverse(&chol, d);
        }
        Ok(())
    }

    /// True when every design matrix admits a Cholesky factorization.
    pub fn is_spd(&self) -> bool {
        self.arms.iter().all(|a| linalg::cholesky(&a.design, self.dim).is_some())
    }

    pub fn snapshot(&self) -> LinUcbSnapshot {
        let d = self.dim;
        LinUcbSnapshot {
            version: SNAPSHOT_VERSION,
            dim: d,
            actions: self.actions(),
            alpha: self.alpha,
            design: self
                .arms
                .iter()
                .map(|a| a.design.chunks(d).map(<[f64]>::to_vec).collect())
                .collect(),
            response: self.arms.iter().map(|a| a.response.clone()).collect(),
        }
    }

    pub fn from_snapshot(snapshot: &LinUcbSnapshot) -> Result<Self> {
        if snapshot.version != SNAPSHOT_VERSION {
            return Err(Error::Parse(format!(
                "unsupported snapshot version {}",
                snapshot.version
            )));
        }
        let mut model = Self::new(snapshot.dim, snapshot.actions, snapshot.alpha)?;
        let d = snapshot.dim;
        if snapshot.design.len() != snapshot.actions || snapshot.response.len() != snapshot.actions {
            return Err(Error::Parse("snapshot arm count does not match actions".into()));
        }
        for (arm, (rows, b)) in model
            .arms
            .iter_mut()
            .zip(snapshot.design.iter().zip(&snapshot.response))
        {
            if rows.len() != d || rows.iter().any(|r| r.len() != d) || b.len() != d {
                return Err(Error::Parse("snapshot matrix shape does not match dim".into()));
            }
            arm.design = rows.iter().flatten().copied().collect();
            arm.response = b.clone();
            let chol = linalg::cholesky(&arm.design, d)
                .ok_or_else(|| Error::Parse("snapshot design matrix is not positive definite".into()))?;
            arm.inverse = linalg::cholesky_inverse(&chol, d);
        }
        Ok(model)
    }
}

/// Serialized LinUCB state for warm-start distribution.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinUcbSnapshot {
    pub version: u32,
    pub dim: usize,
    pub actions: usize,
    pub alpha: f64,
    pub design: Vec<Vec<Vec<f64>>>,
    pub response: Vec<Vec<f64>>,
}

/// LinUCB over one-hot contexts `e_code`, `code < codes`.
///
/// With one-hot inputs `A_a = I + sum e_c e_c'` is diagonal, so only its
/// diagonal is stored: `counts[a][c] = 1 + #observations of (c, a)` and
/// `rewards[a][c] = sum of their rewards`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OneHotLinUcb {
    codes: usize,
    actions: usize,
    alpha: f64,
    counts: Vec<f64>,
    rewards: Vec<f64>,
}

impl OneHotLinUcb {
    pub fn new(codes: usize, actions: usize, alpha: f64) -> Result<Self> {
        if codes == 0 || actions == 0 {
            return Err(Error::domain(format!(
                "LinUCB needs dim >= 1 and actions >= 1, got dim={codes}, actions={actions}"
            )));
        }
        check_alpha(alpha)?;
        Ok(Self {
            codes,
            actions,
            alpha,
            counts: vec![1.0; codes * actions],
            rewards: vec![0.0; codes * actions],
        })
    }

    pub fn codes(&self) -> usize {
        self.codes
    }

    pub fn actions(&self) -> usize {
        self.actions
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    fn check(&self, code: usize, action: usize) -> Result<()> {
        if code >= self.codes {
            return Err(Error::CodeOutOfRange { code, k: self.codes });
        }
        if action >= self.actions {
            return Err(Error::ActionOutOfRange {
                action,
                actions: self.actions,
            });
        }
        Ok(())
    }

    pub fn scores(&self, code: usize) -> Result<Vec<f64>> {
        self.check(code, 0)?;
        Ok((0..self.actions)
            .map(|a| {
                let i = a * self.codes + code;
                let n = self.counts[i];
                self.rewards[i] / n + self.alpha * (1.0 / n).sqrt()
            })
            .collect())
    }

    pub fn select_action(&self, code: usize) -> Result<(usize, Vec<f64>)> {
        let scores = self.scores(code)?;
        Ok((argmax(&scores), scores))
    }

    pub fn observe(&mut self, code: usize, action: usize, reward: u8) -> Result<()> {
        self.check(code, action)?;
        check_reward(reward)?;
        let i = action * self.codes + code;
        self.counts[i] += 1.0;
        self.rewards[i] += reward as f64;
        Ok(())
    }

    /// Folds `(code, action, reward)` triples after validating all of them.
    pub fn merge_statistics<I>(&mut self, batch: I) -> Result<()>
    where
        I: IntoIterator<Item = (usize, usize, u8)> + Clone,
    {
        for (code, action, reward) in batch.clone() {
            self.check(code, action)?;
            check_reward(reward)?;
        }
        for (code, action, reward) in batch {
            let i = action * self.codes + code;
            self.counts[i] += 1.0;
            self.rewards[i] += reward as f64;
        }
        Ok(())
    }

    /// Diagonal of `A_action`.
    pub fn design_diagonal(&self, action: usize) -> &[f64] {
        &self.counts[action * self.codes..(action + 1) * self.codes]
    }

    pub fn response(&self, action: usize) -> &[f64] {
        &self.rewards[action * self.codes..(action + 1) * self.codes]
    }

    /// Total number of observations folded in.
    pub fn observations(&self) -> u64 {
        self.counts.iter().map(|c| c - 1.0).sum::<f64>() as u64
    }

    /// Equivalent dense model over `codes`-dimensional one-hot contexts.
    pub fn to_dense(&self) -> LinUcb {
        let k = self.codes;
        let mut dense = LinUcb::new(k, self.actions, self.alpha).expect("validated at construction");
        for (a, arm) in dense.arms.iter_mut().enumerate() {
            for c in 0..k {
                let n = self.counts[a * k + c];
                arm.design[c * k + c] = n;
                arm.inverse[c * k + c] = 1.0 / n;
                arm.response[c] = self.rewards[a * k + c];
            }
        }
        dense
    }
}

pub(crate) mod linalg {
    pub fn identity(n: usize) -> Vec<f64> {
        let mut m = vec![0.0; n * n];
        for i in 0..n {
            m[i * n + i] = 1.0;
        }
        m
    }

    /// Lower-triangular `L` with `A = L L'`, or `None` if `A` is not SPD.
    pub fn cholesky(a: &[f64], n: usize) -> Option<Vec<f64>> {
        let mut l = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..=i {
                let mut sum = a[i * n + j];
                for k in 0..j {
                    sum -= l[i * n + k] * l[j * n + k];
                }
                if i == j {
                    if sum.is_nan() || sum <= 0.0 {
                        return None;
                    }
                    l[i * n + i] = sum.sqrt();
                } else {
                    l[i * n + j] = sum / l[j * n + j];
                }
            }
        }
        Some(l)
    }

    pub fn cholesky_solve(l: &[f64], b: &[f64], n: usize) -> Vec<f64> {
        let mut y = vec![0.0; n];
        for i in 0..n {
            let mut s = b[i];
            for k in 0..i {
                s -= l[i * n + k] * y[k];
            }
            y[i] = s / l[i * n + i];
        }
        let mut x = vec![0.0; n];
        for i in (0..n).rev() {
            let mut s = y[i];
            for k in i + 1..n {
                s -= l[k * n + i] * x[k];
            }
            x[i] = s / l[i * n + i];
        }
        x
    }

    pub fn cholesky_inverse(l: &[f64], n: usize) -> Vec<f64> {
        let mut inv = vec![0.0; n * n];
        let mut e = vec![0.0; n];
        for j in 0..n {
            e.iter_mut().for_each(|v| *v = 0.0);
            e[j] = 1.0;
            let col = cholesky_solve(l, &e, n);
            for i in 0..n {
                inv[i * n + j] = col[i];
            }
        }
        // Symmetrize away rounding asymmetry.
        for i in 0..n {
            for j in 0..i {
                let m = 0.5 * (inv[i * n + j] + inv[j * n + i]);
                inv[i * n + j] = m;
                inv[j * n + i] = m;
            }
        }
        inv
    }
}

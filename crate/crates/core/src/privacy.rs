//! Differential-privacy accounting for pre-sampling combined with
//! crowd-blending.
//!
//! An agent participates with probability `p`; its report is an encoded
//! context shared by a crowd of at least `l` others (`epsilon_bar = 0` for
//! the encoder, since every member of a crowd emits the same code). The
//! mechanism is then `(epsilon, delta)`-DP with
//!
//! ```text
//! epsilon = ln( p * (2 - p) / (1 - p) * e^epsilon_bar + (1 - p) )
//! delta   = exp( -omega_c * l * (1 - p)^2 )
//! ```
//!
//! `omega_c` is an unspecified constant from the crowd-blending analysis. It
//! defaults to 1.0, so the resulting delta is a *relative* figure, not an
//! absolute guarantee.

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub const DEFAULT_OMEGA_C: f64 = 1.0;

fn check_p(p: f64) -> Result<()> {
    if !(0.0..1.0).contains(&p) {
        return Err(Error::domain(format!("participation probability p must be in [0, 1), got {p}")));
    }
    Ok(())
}

pub fn epsilon_of(p: f64, epsilon_bar: f64) -> Result<f64> {
    check_p(p)?;
    if !(epsilon_bar >= 0.0 && epsilon_bar.is_finite()) {
        return Err(Error::domain(format!("epsilon_bar must be finite and >= 0, got {epsilon_bar}")));
    }
    Ok((p * ((2.0 - p) / (1.0 - p)) * epsilon_bar.exp() + (1.0 - p)).ln())
}

pub fn delta_of(l: u64, p: f64, omega_c: f64) -> Result<f64> {
    check_p(p)?;
    if l == 0 {
        return Err(Error::domain("crowd size l must be at least 1"));
    }
    if !(omega_c > 0.0 && omega_c.is_finite()) {
        return Err(Error::domain(format!("omega_c must be finite and > 0, got {omega_c}")));
    }
    Ok((-omega_c * l as f64 * (1.0 - p) * (1.0 - p)).exp())
}

/// Crowd size `floor(u / k)` achieved by an optimal encoder over `u` users.
pub fn crowd_blending_l(users: u64, k: u64) -> Result<u64> {
    if k == 0 {
        return Err(Error::domain("k must be at least 1"));
    }
    if users < k {
        return Err(Error::domain(format!(
            "u = {users} users cannot fill k = {k} crowds; raise the shuffler threshold or lower k"
        )));
    }
    Ok(users / k)
}

/// Basic composition over `m` reports.
pub fn compose(m: u64, epsilon: f64) -> Result<f64> {
    if m == 0 {
        return Err(Error::domain("composition needs m >= 1"));
    }
    if epsilon.is_nan() || epsilon < 0.0 {
        return Err(Error::domain(format!("epsilon must be >= 0, got {epsilon}")));
    }
    Ok(m as f64 * epsilon)
}

/// `delta <= 1/u`: anything larger lets the mechanism leak a whole record.
pub fn delta_check(delta: f64, users: u64) -> bool {
    users >= 1 && delta <= 1.0 / users as f64
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PrivacyBudget {
    pub p_positive: f64,
    pub p_negative: f64,
    pub epsilon_bar: f64,
    pub l: u64,
    pub omega_c: f64,
    pub epsilon: f64,
    pub delta: f64,
}

impl PrivacyBudget {
    /// Worst case over the two reporting rates: `p = max(p_positive, p_negative)`.
    pub fn new(p_positive: f64, p_negative: f64, epsilon_bar: f64, l: u64, omega_c: f64) -> Result<Self> {
        check_p(p_negative)?;
        let p = p_positive.max(p_negative);
        Ok(Self {
            p_positive,
            p_negative,
            epsilon_bar,
            l,
            omega_c,
            epsilon: epsilon_of(p, epsilon_bar)?,
            delta: delta_of(l, p, omega_c)?,
        })
    }

    pub fn p(&self) -> f64 {
        self.p_positive.max(self.p_negative)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn epsilon_examples() {
        assert!((epsilon_of(0.5, 0.0).unwrap() - 2f64.ln()).abs() < 1e-12);
        assert_eq!(format!("{:.3}", epsilon_of(0.5, 0.0).unwrap()), "0.693");
        assert!((epsilon_of(0.25, 0.0).unwrap() - (4.0f64 / 3.0).ln()).abs() < 1e-12);
        assert_eq!(format!("{:.2}", epsilon_of(0.25, 0.0).unwrap()), "0.29");
        assert_eq!(epsilon_of(0.0, 0.0).unwrap(), 0.0);
        assert!(epsilon_of(1.0, 0.0).is_err());
        assert!(epsilon_of(-0.1, 0.0).is_err());
        assert!(epsilon_of(0.5, -1.0).is_err());
    }

    #[test]
    fn epsilon_grows_with_crowd_epsilon() {
        assert!(epsilon_of(0.5, 0.1).unwrap() > epsilon_of(0.5, 0.0).unwrap());
    }

    #[test]
    fn epsilon_is_increasing_and_diverges() {
        let grid: Vec<f64> = (0..100).map(|i| i as f64 / 100.0).collect();
        let eps: Vec<f64> = grid.iter().map(|&p| epsilon_of(p, 0.0).unwrap()).collect();
        assert!(eps.windows(2).all(|w| w[0] < w[1]));
        assert!(epsilon_of(0.99, 0.0).unwrap() > epsilon_of(0.9, 0.0).unwrap());
        assert!(epsilon_of(0.999_999, 0.0).unwrap() > 13.0);
    }

    #[test]
    fn delta_examples() {
        assert!((delta_of(10, 0.5, 1.0).unwrap() - (-2.5f64).exp()).abs() < 1e-15);
        assert!((delta_of(10, 0.5, 1.0).unwrap() - 0.082085).abs() < 1e-6);
        assert!((delta_of(1, 0.0, 1.0).unwrap() - 0.367879).abs() < 1e-6);
        let seq: Vec<f64> = [1, 2, 4, 8, 16, 32, 64].iter().map(|&l| delta_of(l, 0.5, 1.0).unwrap()).collect();
        assert!(seq.windows(2).all(|w| w[1] < w[0]));
        assert!(delta_of(100_000, 0.5, 1.0).unwrap() < 1e-300);
        assert!(delta_of(0, 0.5, 1.0).is_err());
        assert!(delta_of(1, 1.0, 1.0).is_err());
        assert!(delta_of(1, 0.5, 0.0).is_err());
    }

    #[test]
    fn delta_increases_with_p() {
        let a = delta_of(10, 0.1, 1.0).unwrap();
        let b = delta_of(10, 0.5, 1.0).unwrap();
        let c = delta_of(10, 0.9, 1.0).unwrap();
        assert!(a < b && b < c);
    }

    #[test]
    fn crowd_size_examples() {
        assert_eq!(crowd_blending_l(1000, 32).unwrap(), 31);
        assert_eq!(crowd_blending_l(128, 128).unwrap(), 1);
        assert_eq!(crowd_blending_l(3000, 128).unwrap(), 23);
        let err = crowd_blending_l(10, 32).unwrap_err().to_string();
        assert!(err.contains("threshold"));
    }

    #[test]
    fn composition() {
        let e = 2f64.ln();
        assert_eq!(compose(1, e).unwrap(), e);
        assert!((compose(3, e).unwrap() - 2.079442).abs() < 1e-6);
        assert!(compose(0, e).is_err());
        assert!((compose(5, e).unwrap() - (compose(2, e).unwrap() + compose(3, e).unwrap())).abs() < 1e-12);
    }

    #[test]
    fn delta_check_examples() {
        assert!(!delta_check(1.0 / 500.0, 3000));
        assert!(delta_check(0.0, 1));
        assert!(delta_check(0.0, 1_000_000));
        assert!(delta_check(1e-6, 100_000));
    }

    #[test]
    fn budget_uses_worst_case_rate() {
        let b = PrivacyBudget::new(0.5, 0.05, 0.0, 10, 1.0).unwrap();
        assert_eq!(b.p(), 0.5);
        assert_eq!(b.epsilon, epsilon_of(0.5, 0.0).unwrap());
        let flipped = PrivacyBudget::new(0.05, 0.5, 0.0, 10, 1.0).unwrap();
        assert_eq!(flipped.epsilon, b.epsilon);
        assert_eq!(flipped.delta, b.delta);
    }
}

//! Fixed-precision normalized contexts and the crowd-blending encoder.
//!
//! A context is a histogram over `d` bins whose entries are multiples of
//! `10^-q` summing to one. Entries are stored as integer units of `10^-q`, so
//! the sum invariant holds exactly; they are converted to `f64` only for
//! distance and bandit arithmetic.

mod encoder;

pub use encoder::{encode, train_encoder, train_encoder_with, EncodedContext, EncoderModel, TrainOptions};

use num_bigint::BigUint;
use rand::Rng;

use crate::{Error, Result};

/// Default ceiling on the number of grid points that may be enumerated.
pub const DEFAULT_ENUMERATION_CAP: u64 = 10_000_000;

/// Largest supported precision; `10^q` must fit in a `u32`.
pub const MAX_PRECISION: u32 = 9;

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ContextVector {
    units: Vec<u32>,
    precision: u32,
}

fn scale_of(precision: u32) -> Result<u32> {
    if precision == 0 || precision > MAX_PRECISION {
        return Err(Error::domain(format!(
            "precision q must be in 1..={MAX_PRECISION}, got {precision}"
        )));
    }
    Ok(10u32.pow(precision))
}

impl ContextVector {
    /// Builds a vector from integer units of `10^-q`. The units must sum to `10^q`.
    pub fn from_units(units: Vec<u32>, precision: u32) -> Result<Self> {
        let scale = scale_of(precision)?;
        if units.is_empty() {
            return Err(Error::domain("context dimension d must be at least 1"));
        }
        let sum: u64 = units.iter().map(|&u| u as u64).sum();
        if sum != scale as u64 {
            return Err(Error::domain(format!(
                "context units sum to {sum}, expected {scale}"
            )));
        }
        Ok(Self { units, precision })
    }

    pub fn dim(&self) -> usize {
        self.units.len()
    }

    pub fn precision(&self) -> u32 {
        self.precision
    }

    /// `10^q`.
    pub fn scale(&self) -> u32 {
        10u32.pow(self.precision)
    }

    pub fn units(&self) -> &[u32] {
        &self.units
    }

    pub fn to_f64(&self) -> Vec<f64> {
        let scale = self.scale() as f64;
        self.units.iter().map(|&u| u as f64 / scale).collect()
    }
}

/// Number of normalized contexts with `d` entries at precision `q`:
/// `C(10^q + d - 1, d - 1)` (stars and bars).
pub fn cardinality(d: usize, q: u32) -> Result<BigUint> {
    if d < 1 || q < 1 {
        return Err(Error::domain(format!(
            "cardinality needs d >= 1 and q >= 1, got d={d}, q={q}"
        )));
    }
    let stars = BigUint::from(10u32).pow(q);
    let mut n = BigUint::from(1u32);
    for i in 1..d {
        // C(s+i, i) = C(s+i-1, i-1) * (s+i) / i, exact at every step.
        n = n * (&stars + BigUint::from(i)) / BigUint::from(i);
    }
    Ok(n)
}

/// [`cardinality`] as a `u64`, or `None` when it does not fit.
pub fn cardinality_u64(d: usize, q: u32) -> Result<Option<u64>> {
    Ok(u64::try_from(cardinality(d, q)?).ok())
}

/// Lexicographic iterator over every grid point. See [`enumerate_grid`].
#[derive(Clone, Debug)]
pub struct GridIter {
    next: Option<Vec<u32>>,
    scale: u32,
    precision: u32,
}

impl Iterator for GridIter {
    type Item = ContextVector;

    fn next(&mut self) -> Option<ContextVector> {
        let current = self.next.take()?;
        let d = current.len();
        // Advance the free prefix (all but the last entry) in lexicographic
        // order; the last entry absorbs the remainder.
        let mut prefix_sum = 0u32;
        let mut pivot = None;
        for (i, &u) in current[..d - 1].iter().enumerate() {
            prefix_sum += u;
            if prefix_sum < self.scale {
                pivot = Some(i);
            }
        }
        if let Some(i) = pivot {
            let mut succ = current.clone();
            succ[i] += 1;
            for u in &mut succ[i + 1..d - 1] {
                *u = 0;
            }
            let head: u32 = succ[..d - 1].iter().sum();
            succ[d - 1] = self.scale - head;
            self.next = Some(succ);
        }
        Some(ContextVector {
            units: current,
            precision: self.precision,
        })
    }
}

/// Enumerates the normalized grid in lexicographic order, starting at
/// `(0, ..., 0, 1)`. Fails if the grid holds more than `cap` points.
pub fn enumerate_grid(d: usize, q: u32, cap: u64) -> Result<GridIter> {
    let n = cardinality(d, q)?;
    if n > BigUint::from(cap) {
        return Err(Error::CapExceeded {
            cap,
            requested: n.to_string(),
        });
    }
    let scale = scale_of(q)?;
    let mut first = vec![0u32; d];
    first[d - 1] = scale;
    Ok(GridIter {
        next: Some(first),
        scale,
        precision: q,
    })
}

/// Draws a grid point uniformly at random by placing `d - 1` bars among
/// `10^q + d - 1` slots.
pub fn sample_grid_point<R: Rng + ?Sized>(d: usize, q: u32, rng: &mut R) -> Result<ContextVector> {
    let scale = scale_of(q)?;
    if d == 0 {
        return Err(Error::domain("context dimension d must be at least 1"));
    }
    let slots = scale as usize + d - 1;
    let mut bars = rand::seq::index::sample(rng, slots, d - 1).into_vec();
    bars.sort_unstable();
    let mut units = Vec::with_capacity(d);
    let mut prev: isize = -1;
    for &bar in &bars {
        units.push((bar as isize - prev - 1) as u32);
        prev = bar as isize;
    }
    units.push((slots as isize - prev - 1) as u32);
    Ok(ContextVector {
        units,
        precision: q,
    })
}

/// Normalizes `raw` to sum to one and rounds to precision `q` with the
/// largest-remainder method, so the result sums to exactly `10^q` units.
/// Remainder ties go to the lowest index.
pub fn normalize_and_round(raw: &[f64], q: u32) -> Result<ContextVector> {
    let scale = scale_of(q)?;
    if raw.is_empty() {
        return Err(Error::domain("context dimension d must be at least 1"));
    }
    if let Some(bad) = raw.iter().find(|v| !v.is_finite() || **v < 0.0) {
        return Err(Error::domain(format!(
            "raw context entries must be finite and non-negative, got {bad}"
        )));
    }
    let total: f64 = raw.iter().sum();
    if total <= 0.0 || !total.is_finite() {
        return Err(Error::domain("raw context must have a positive, finite sum"));
    }

    let scaled: Vec<f64> = raw.iter().map(|v| v * scale as f64 / total).collect();
    let mut units: Vec<u32> = scaled
        .iter()
        .map(|s| (s.floor() as u32).min(scale))
        .collect();
    let assigned: u32 = units.iter().sum();
    let deficit = scale.saturating_sub(assigned) as usize;

    let mut order: Vec<usize> = (0..raw.len()).collect();
    // Stable sort keeps lowest index first among equal remainders.
    order.sort_by(|&a, &b| {
        let ra = scaled[a] - units[a] as f64;
        let rb = scaled[b] - units[b] as f64;
        rb.total_cmp(&ra)
    });
    for &i in order.iter().take(deficit) {
        units[i] += 1;
    }
    Ok(ContextVector {
        units,
        precision: q,
    })
}

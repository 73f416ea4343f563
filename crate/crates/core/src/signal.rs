//! Vector kernels: autoconvolution, I-divergence, the fitting objective and
//! its gradient.
//!
//! All sums are direct O(n²) loops so that results are bit-stable across
//! runs and platforms.

use std::fmt;
use std::ops::Deref;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A finite nonnegative signal on `0..=n`, implicitly zero elsewhere.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct Signal(Vec<f64>);

impl Signal {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::Empty);
        }
        if let Some((index, &value)) = values
            .iter()
            .enumerate()
            .find(|(_, v)| !(v.is_finite() && **v >= 0.0))
        {
            return Err(Error::InvalidEntry { index, value });
        }
        Ok(Signal(values))
    }

    /// Builds a signal from values already known to be finite and nonnegative.
    pub(crate) fn from_vec_unchecked(values: Vec<f64>) -> Self {
        debug_assert!(!values.is_empty());
        debug_assert!(values.iter().all(|v| v.is_finite() && *v >= 0.0));
        Signal(values)
    }

    /// The largest index `n`; the signal has `n + 1` entries.
    pub fn degree(&self) -> usize {
        self.0.len() - 1
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    pub fn sum(&self) -> f64 {
        self.0.iter().sum()
    }

    pub fn max(&self) -> f64 {
        self.0.iter().copied().fold(0.0, f64::max)
    }

    pub fn reversed(&self) -> Signal {
        Signal(self.0.iter().rev().copied().collect())
    }
}

impl Deref for Signal {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl TryFrom<Vec<f64>> for Signal {
    type Error = Error;

    fn try_from(values: Vec<f64>) -> Result<Self> {
        Signal::new(values)
    }
}

impl From<Signal> for Vec<f64> {
    fn from(s: Signal) -> Vec<f64> {
        s.0
    }
}

/// An I-divergence value in `[0, +inf]`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct Divergence(f64);

impl Divergence {
    pub const INFINITE: Divergence = Divergence(f64::INFINITY);

    pub(crate) fn from_sum(value: f64) -> Self {
        // Round-off can leave an exact match a hair below zero.
        Divergence(value.max(0.0))
    }

    pub fn value(self) -> f64 {
        self.0
    }

    pub fn is_finite(self) -> bool {
        self.0.is_finite()
    }
}

impl fmt::Display for Divergence {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0.is_finite() {
            write!(f, "{}", self.0)
        } else {
            f.write_str("inf")
        }
    }
}

fn check_lengths(a: &[f64], b: &[f64]) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::LengthMismatch {
            left: a.len(),
            right: b.len(),
        });
    }
    Ok(())
}

/// Full autoconvolution, `2n + 1` entries.
pub fn autoconvolve(x: &Signal) -> Signal {
    let n = x.degree();
    let mut out = vec![0.0; 2 * n + 1];
    for (i, slot) in out.iter_mut().enumerate() {
        let lo = i.saturating_sub(n);
        let hi = i.min(n);
        *slot = (lo..=hi).map(|j| x[i - j] * x[j]).sum();
    }
    Signal::from_vec_unchecked(out)
}

/// Autoconvolution restricted to `0..=n`, same length as `x`.
pub fn autoconvolve_truncated(x: &Signal) -> Signal {
    Signal::from_vec_unchecked(truncated_conv(x))
}

pub(crate) fn truncated_conv(x: &[f64]) -> Vec<f64> {
    (0..x.len())
        .map(|i| (0..=i).map(|j| x[i - j] * x[j]).sum())
        .collect()
}

/// Generalized Kullback-Leibler divergence `sum u log(u/v) - u + v`.
pub fn i_divergence(u: &[f64], v: &[f64]) -> Result<Divergence> {
    check_lengths(u, v)?;
    Ok(divergence_terms(u.iter().copied().zip(v.iter().copied())))
}

pub(crate) fn divergence_terms(pairs: impl Iterator<Item = (f64, f64)>) -> Divergence {
    let mut total = 0.0;
    for (a, b) in pairs {
        if a > 0.0 {
            if b <= 0.0 {
                return Divergence::INFINITE;
            }
            total += a * (a / b).ln() - a + b;
        } else {
            total += b;
        }
    }
    Divergence::from_sum(total)
}

/// `I(y || x*x)` with the autoconvolution truncated to the data length.
pub fn objective(x: &Signal, y: &Signal) -> Result<Divergence> {
    check_lengths(x, y)?;
    let yhat = truncated_conv(x);
    i_divergence(y, &yhat)
}

/// Ratio `y_i / (x*x)_i`; entries with `y_i = 0` are zero.
pub fn rho(x: &Signal, y: &Signal) -> Result<Signal> {
    check_lengths(x, y)?;
    ratio(y, &truncated_conv(x)).map(Signal::from_vec_unchecked)
}

pub(crate) fn ratio(y: &[f64], yhat: &[f64]) -> Result<Vec<f64>> {
    y.iter()
        .zip(yhat)
        .enumerate()
        .map(|(index, (&num, &den))| {
            if num == 0.0 {
                Ok(0.0)
            } else if den > 0.0 {
                Ok(num / den)
            } else {
                Err(Error::DegenerateDenominator { index, value: den })
            }
        })
        .collect()
}

/// Gradient of the objective. At coordinates with `x_k = 0` this is the
/// right derivative.
pub fn gradient(x: &Signal, y: &Signal) -> Result<Vec<f64>> {
    let rho = rho(x, y)?;
    Ok(gradient_from_rho(x, &rho))
}

pub(crate) fn gradient_from_rho(x: &[f64], rho: &[f64]) -> Vec<f64> {
    let n = x.len() - 1;
    (0..=n)
        .map(|k| -2.0 * (0..=n - k).map(|j| (rho[j + k] - 1.0) * x[j]).sum::<f64>())
        .collect()
}

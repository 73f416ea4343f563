//! Exact solution of the structured quadratic system
//!
//! ```text
//! x_j * (x_0 + x_1 + ... + x_{n-j}) = r_j,    j = 0..=n
//! ```
//!
//! for nonnegative `r`. The closed forms are products of ratios of
//! differences `B_a - E_b` of prefix sums `B` and suffix sums `E` of `r`,
//! anchored at the middle coordinate `x_mid = r_mid / S` where
//! `S^2 = sum_{j <= n/2} r_j - sum_{j > n/2} r_j` and `S = x_0 + ... + x_{n/2}`.
//!
//! [`solve_recursive`] computes the same solution by peeling coordinates off
//! the middle in alternating order; it shares no arithmetic with the closed
//! forms and serves as a cross-check.

use crate::error::{Error, Result};
use crate::signal::Signal;

/// Above this degree the ratio products are accumulated in log space.
const LOG_SPACE_DEGREE: usize = 128;
const FEASIBILITY_EPS: f64 = 1e-12;
const DENOMINATOR_EPS: f64 = 1e-14;
/// Relative agreement required between the closed-form and recursive routes.
pub const AGREEMENT_TOL: f64 = 1e-9;

/// Coefficients of the system together with their prefix/suffix sums.
#[derive(Debug, Clone, PartialEq)]
pub struct SolverInput {
    r: Vec<f64>,
    prefix: Vec<f64>,
    /// `suffix[j] = sum_{i >= j} r_i`, with a trailing zero at `n + 1`.
    suffix: Vec<f64>,
    s_squared: f64,
    s: f64,
    total: f64,
}

impl SolverInput {
    pub fn degree(&self) -> usize {
        self.r.len() - 1
    }

    /// `floor(n / 2)`.
    pub fn half_index(&self) -> usize {
        self.degree() / 2
    }

    pub fn r(&self) -> &[f64] {
        &self.r
    }

    /// `B_j = r_0 + ... + r_j`.
    pub fn prefix(&self, j: usize) -> f64 {
        self.prefix[j]
    }

    /// `E_j = r_j + ... + r_n`; `E_{n+1} = 0`.
    pub fn suffix(&self, j: usize) -> f64 {
        self.suffix[j]
    }

    pub fn s_squared(&self) -> f64 {
        self.s_squared
    }

    pub fn s(&self) -> f64 {
        self.s
    }

    pub fn total(&self) -> f64 {
        self.total
    }

    fn gap(&self, a: usize, b: usize) -> f64 {
        self.prefix[a] - self.suffix[b]
    }

    /// `B_a - E_b`, rejected if not safely positive.
    fn checked_gap(&self, a: usize, b: usize, index: usize) -> Result<f64> {
        let value = self.gap(a, b);
        if value > DENOMINATOR_EPS * self.total {
            Ok(value)
        } else {
            Err(Error::DegenerateDenominator { index, value })
        }
    }

    fn require_positive_s(&self) -> Result<()> {
        if self.s > 0.0 {
            Ok(())
        } else {
            Err(Error::Infeasible {
                s_squared: self.s_squared,
            })
        }
    }
}

/// Validates `r` and computes `B`, `E`, `S^2` and `S`.
pub fn prepare(r: &[f64]) -> Result<SolverInput> {
    if r.is_empty() {
        return Err(Error::Empty);
    }
    if let Some((index, &value)) = r
        .iter()
        .enumerate()
        .find(|(_, v)| !(v.is_finite() && **v >= 0.0))
    {
        return Err(Error::InvalidEntry { index, value });
    }
    let n = r.len() - 1;
    let k = n / 2;

    let mut prefix = Vec::with_capacity(n + 1);
    let mut acc = 0.0;
    for &v in r {
        acc += v;
        prefix.push(acc);
    }
    let mut suffix = vec![0.0; n + 2];
    for j in (0..=n).rev() {
        suffix[j] = suffix[j + 1] + r[j];
    }
    let total = prefix[n];

    let s_squared = prefix[k] - suffix[k + 1];
    debug_assert!({
        let direct: f64 = r[..=k].iter().sum::<f64>() - r[k + 1..].iter().sum::<f64>();
        (direct - s_squared).abs() <= 1e-12 * total.max(f64::MIN_POSITIVE)
    });
    if s_squared < -FEASIBILITY_EPS * total {
        return Err(Error::Infeasible { s_squared });
    }
    let s_squared = s_squared.max(0.0);

    Ok(SolverInput {
        r: r.to_vec(),
        prefix,
        suffix,
        s_squared,
        s: s_squared.sqrt(),
        total,
    })
}

/// Solution of the system with its per-equation residuals.
#[derive(Debug, Clone, PartialEq)]
pub struct SolverSolution {
    pub x: Signal,
    /// `|x_j * sum_{i <= n-j} x_i - r_j|`.
    pub residuals: Vec<f64>,
    pub max_residual: f64,
}

impl SolverSolution {
    fn new(x: Vec<f64>, r: &[f64]) -> Result<Self> {
        if let Some(index) = x.iter().position(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::DegenerateDenominator {
                index,
                value: x[index],
            });
        }
        let residuals = residuals(&x, r);
        let max_residual = residuals.iter().copied().fold(0.0, f64::max);
        Ok(SolverSolution {
            x: Signal::from_vec_unchecked(x),
            residuals,
            max_residual,
        })
    }

    /// `x_0 + ... + x_{floor(n/2)}`, which equals `S` for an exact solution.
    pub fn half_sum(&self) -> f64 {
        let k = self.x.degree() / 2;
        self.x[..=k].iter().sum()
    }
}

/// `r_j = x_j * sum_{i <= n-j} x_i`, the map the solver inverts.
pub fn forward(x: &[f64]) -> Vec<f64> {
    let cumulative = prefix_sums(x);
    let n = x.len() - 1;
    x.iter()
        .enumerate()
        .map(|(j, &xj)| xj * cumulative[n - j])
        .collect()
}

fn prefix_sums(x: &[f64]) -> Vec<f64> {
    x.iter()
        .scan(0.0, |acc, &v| {
            *acc += v;
            Some(*acc)
        })
        .collect()
}

fn residuals(x: &[f64], r: &[f64]) -> Vec<f64> {
    forward(x)
        .iter()
        .zip(r)
        .map(|(lhs, rhs)| (lhs - rhs).abs())
        .collect()
}

/// Running product of positive ratios, optionally in log space.
#[derive(Debug, Clone, Copy)]
enum RatioProduct {
    Direct(f64),
    Log(f64),
}

impl RatioProduct {
    fn new(log_space: bool) -> Self {
        if log_space {
            RatioProduct::Log(0.0)
        } else {
            RatioProduct::Direct(1.0)
        }
    }

    fn mul(&mut self, num: f64, den: f64) {
        match self {
            RatioProduct::Direct(p) => *p *= num / den,
            RatioProduct::Log(l) => *l += num.ln() - den.ln(),
        }
    }

    /// `coeff * product`, with `coeff > 0`.
    fn scaled(&self, coeff: f64) -> f64 {
        match *self {
            RatioProduct::Direct(p) => coeff * p,
            RatioProduct::Log(l) => (coeff.ln() + l).exp(),
        }
    }
}

/// Closed-form solution for even degree `n = 2k`.
pub fn solve_even(input: &SolverInput) -> Result<SolverSolution> {
    let n = input.degree();
    assert!(n.is_multiple_of(2), "solve_even called with odd degree {n}");
    input.require_positive_s()?;
    let k = input.half_index();
    let r = &input.r;
    let s = input.s;
    let log_space = n > LOG_SPACE_DEGREE;
    let mut x = vec![0.0; n + 1];

    x[k] = r[k] / s;

    if k > 0 {
        // m > k: r_m S / (B_k - E_{k+1}) * prod_{i=k+1}^{m} (B_{n-i+1} - E_i) / (B_{n-i} - E_i)
        let lead = s / input.checked_gap(k, k + 1, k + 1)?;
        let mut product = RatioProduct::new(log_space);
        for m in k + 1..=n {
            let den = input.checked_gap(n - m, m, m)?;
            product.mul(input.gap(n - m + 1, m), den);
            if r[m] > 0.0 {
                x[m] = product.scaled(r[m] * lead);
            }
        }

        // m < k: r_m / S * prod_{i=1}^{k-m} (B_{k-i} - E_{k+i}) / (B_{k-i} - E_{k+1+i})
        let mut product = RatioProduct::new(log_space);
        for i in 1..=k {
            let m = k - i;
            let den = input.checked_gap(k - i, k + 1 + i, m)?;
            product.mul(input.gap(k - i, k + i), den);
            if r[m] > 0.0 {
                x[m] = product.scaled(r[m] / s);
            }
        }
    }

    SolverSolution::new(x, r)
}

/// Closed-form solution for odd degree `n = 2k + 1`.
pub fn solve_odd(input: &SolverInput) -> Result<SolverSolution> {
    let n = input.degree();
    assert!(n % 2 == 1, "solve_odd called with even degree {n}");
    input.require_positive_s()?;
    let k = input.half_index();
    let r = &input.r;
    let s = input.s;
    let log_space = n > LOG_SPACE_DEGREE;
    let mut x = vec![0.0; n + 1];

    // m >= k+1: r_m / S * prod_{l=1}^{m-k-1} (B_{k-l+1} - E_{k+l+1}) / (B_{k-l} - E_{k+l+1})
    x[k + 1] = r[k + 1] / s;
    let mut product = RatioProduct::new(log_space);
    for m in k + 2..=n {
        let l = m - k - 1;
        let den = input.checked_gap(k - l, k + l + 1, m)?;
        product.mul(input.gap(k - l + 1, k + l + 1), den);
        if r[m] > 0.0 {
            x[m] = product.scaled(r[m] / s);
        }
    }

    // m <= k: r_m S / (B_k - E_{k+2}) * prod_{l=1}^{k-m} (B_{k-l} - E_{k+l+1}) / (B_{k-l} - E_{k+l+2})
    let lead = s / input.checked_gap(k, k + 2, k)?;
    let mut product = RatioProduct::new(log_space);
    for m in (0..=k).rev() {
        if m < k {
            let l = k - m;
            let den = input.checked_gap(k - l, k + l + 2, m)?;
            product.mul(input.gap(k - l, k + l + 1), den);
        }
        if r[m] > 0.0 {
            x[m] = product.scaled(r[m] * lead);
        }
    }

    SolverSolution::new(x, r)
}

/// Solves by alternating outward from the middle coordinate:
/// each new coordinate is `r_j` divided by a partial sum that is `S`
/// adjusted by coordinates already found.
pub fn solve_recursive(input: &SolverInput) -> Result<SolverSolution> {
    input.require_positive_s()?;
    let n = input.degree();
    let k = input.half_index();
    let r = &input.r;
    let s = input.s;
    let mut x = vec![0.0; n + 1];

    let divide = |index: usize, den: f64| -> Result<f64> {
        if r[index] == 0.0 {
            Ok(0.0)
        } else if den > 0.0 {
            Ok(r[index] / den)
        } else {
            Err(Error::DegenerateDenominator { index, value: den })
        }
    };

    // `taken_low` = sum of the coordinates found at or below the middle of the
    // lower half, `taken_high` = sum of those found above it.
    let mut taken_low = 0.0;
    let mut taken_high = 0.0;
    if n.is_multiple_of(2) {
        x[k] = divide(k, s)?;
        taken_low += x[k];
        for l in 0..k {
            let up = k + l + 1;
            x[up] = divide(up, s - taken_low)?;
            taken_high += x[up];
            let down = k - l - 1;
            x[down] = divide(down, s + taken_high)?;
            taken_low += x[down];
        }
    } else {
        x[k + 1] = divide(k + 1, s)?;
        taken_high += x[k + 1];
        x[k] = divide(k, s + taken_high)?;
        taken_low += x[k];
        for l in 0..k {
            let up = k + l + 2;
            x[up] = divide(up, s - taken_low)?;
            taken_high += x[up];
            let down = k - l - 1;
            x[down] = divide(down, s + taken_high)?;
            taken_low += x[down];
        }
    }

    SolverSolution::new(x, r)
}

/// Dispatches on the parity of the degree.
pub fn solve_prepared(input: &SolverInput) -> Result<SolverSolution> {
    if input.degree().is_multiple_of(2) {
        solve_even(input)
    } else {
        solve_odd(input)
    }
}

pub fn solve(r: &[f64]) -> Result<SolverSolution> {
    solve_prepared(&prepare(r)?)
}

/// Like [`solve`], additionally running [`solve_recursive`] and failing if
/// any coordinate differs by more than [`AGREEMENT_TOL`] relative.
pub fn solve_validated(r: &[f64]) -> Result<SolverSolution> {
    let input = prepare(r)?;
    let closed = solve_prepared(&input)?;
    let recursive = solve_recursive(&input)?;
    if let Some((index, (&a, &b))) = closed
        .x
        .iter()
        .zip(recursive.x.iter())
        .enumerate()
        .find(|(_, (a, b))| (*a - *b).abs() > AGREEMENT_TOL * a.abs().max(b.abs()))
    {
        return Err(Error::SolverDisagreement {
            index,
            closed: a,
            recursive: b,
        });
    }
    Ok(closed)
}

//! Lower-triangular lifted matrices and the two partial minimizations.
//!
//! These are materialized for diagnostics and tests only; the fitting loop
//! never builds an `(n+1) x (n+1)` matrix.

use rand::Rng;

use crate::error::{Error, Result};
use crate::signal::{self, divergence_terms, Divergence, Signal};
use crate::solver;

/// Square matrix, zero strictly above the diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct LiftedTriangular {
    side: usize,
    entries: Vec<f64>,
}

impl LiftedTriangular {
    pub fn zeros(side: usize) -> Self {
        LiftedTriangular {
            side,
            entries: vec![0.0; side * side],
        }
    }

    /// Builds from the lower triangle given row by row (row `i` has `i + 1`
    /// entries).
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let side = rows.len();
        let mut m = LiftedTriangular::zeros(side);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != i + 1 {
                return Err(Error::LengthMismatch {
                    left: row.len(),
                    right: i + 1,
                });
            }
            for (j, &v) in row.iter().enumerate() {
                if !(v.is_finite() && v >= 0.0) {
                    return Err(Error::InvalidEntry {
                        index: i * side + j,
                        value: v,
                    });
                }
                m.set(i, j, v);
            }
        }
        Ok(m)
    }

    pub fn side(&self) -> usize {
        self.side
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[i * self.side + j]
    }

    fn set(&mut self, i: usize, j: usize, v: f64) {
        debug_assert!(j <= i);
        self.entries[i * self.side + j] = v;
    }

    /// `(i, j, value)` over the lower triangle.
    pub fn lower(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.side).flat_map(move |i| (0..=i).map(move |j| (i, j, self.get(i, j))))
    }

    pub fn row_sums(&self) -> Vec<f64> {
        (0..self.side)
            .map(|i| (0..=i).map(|j| self.get(i, j)).sum())
            .collect()
    }

    pub fn column_sums(&self) -> Vec<f64> {
        (0..self.side)
            .map(|j| (j..self.side).map(|i| self.get(i, j)).sum())
            .collect()
    }

    pub fn total(&self) -> f64 {
        self.lower().map(|(_, _, v)| v).sum()
    }

    /// Largest violation of `M_ij = M_{i,i-j}`.
    pub fn asymmetry(&self) -> f64 {
        self.lower()
            .map(|(i, j, v)| (v - self.get(i, i - j)).abs())
            .fold(0.0, f64::max)
    }
}

/// `W_ij = x_j x_{i-j}` for `j <= i`.
pub fn build_w(x: &Signal) -> LiftedTriangular {
    let side = x.len();
    let mut w = LiftedTriangular::zeros(side);
    for i in 0..side {
        for j in 0..=i {
            w.set(i, j, x[j] * x[i - j]);
        }
    }
    w
}

/// Minimizer of `I(Y || W(x))` over matrices with row sums `y`:
/// `Y*_ij = x_j x_{i-j} y_i / (x*x)_i`.
pub fn build_y_star(x: &Signal, y: &Signal) -> Result<LiftedTriangular> {
    let rho = signal::rho(x, y)?;
    let side = x.len();
    let mut m = LiftedTriangular::zeros(side);
    for i in 0..side {
        for j in 0..=i {
            m.set(i, j, x[j] * x[i - j] * rho[i]);
        }
    }
    Ok(m)
}

/// `Ỹ_j = sum_{i >= j} Y_ij + sum_{i >= j} Y_{i,i-j}`: column sum plus the
/// sum along the `j`-th subdiagonal.
pub fn tilde_sums(m: &LiftedTriangular) -> Vec<f64> {
    let side = m.side();
    (0..side)
        .map(|j| {
            let column: f64 = (j..side).map(|i| m.get(i, j)).sum();
            let diagonal: f64 = (j..side).map(|i| m.get(i, i - j)).sum();
            column + diagonal
        })
        .collect()
}

pub fn matrix_i_divergence(m: &LiftedTriangular, n: &LiftedTriangular) -> Result<Divergence> {
    if m.side() != n.side() {
        return Err(Error::LengthMismatch {
            left: m.side(),
            right: n.side(),
        });
    }
    Ok(divergence_terms(
        m.lower().map(|(i, j, v)| (v, n.get(i, j))),
    ))
}

/// Draws a member of the set of lower-triangular matrices with row sums
/// `y`: i.i.d. uniform(0,1) entries, each row rescaled to sum to `y_i`.
pub fn random_y_member<R: Rng + ?Sized>(y: &Signal, rng: &mut R) -> LiftedTriangular {
    let side = y.len();
    let mut m = LiftedTriangular::zeros(side);
    for i in 0..side {
        let raw: Vec<f64> = (0..=i).map(|_| rng.gen::<f64>() + f64::EPSILON).collect();
        let total: f64 = raw.iter().sum();
        for (j, v) in raw.into_iter().enumerate() {
            m.set(i, j, v * y[i] / total);
        }
    }
    m
}

/// Terms of the first Pythagorean identity,
/// `I(Y||W) = I(Y||Y*) + I(Y*||W)`, plus the reduction `I(Y*||W) = I(y||x*x)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PythagorasY {
    pub total: f64,
    pub to_projection: f64,
    pub projection_to_w: f64,
    pub objective: f64,
    pub residual: f64,
    pub objective_residual: f64,
}

impl PythagorasY {
    /// Residual divided by the size of the terms involved.
    pub fn relative_residual(&self) -> f64 {
        self.residual / self.total.max(f64::MIN_POSITIVE)
    }

    pub fn relative_objective_residual(&self) -> f64 {
        self.objective_residual / self.objective.max(f64::MIN_POSITIVE)
    }
}

pub fn verify_pythagoras_y(m: &LiftedTriangular, x: &Signal, y: &Signal) -> Result<PythagorasY> {
    let w = build_w(x);
    let y_star = build_y_star(x, y)?;
    let total = matrix_i_divergence(m, &w)?.value();
    let to_projection = matrix_i_divergence(m, &y_star)?.value();
    let projection_to_w = matrix_i_divergence(&y_star, &w)?.value();
    let objective = signal::objective(x, y)?.value();
    Ok(PythagorasY {
        total,
        to_projection,
        projection_to_w,
        objective,
        residual: (total - to_projection - projection_to_w).abs(),
        objective_residual: (projection_to_w - objective).abs(),
    })
}

/// Terms of the second Pythagorean identity,
/// `I(Y||W) = I(Y||W*) + I(W*||W)`, where `W* = W(x*)` and `x*` solves the
/// system with `r = Ỹ/2`; plus the mass identity `sum (x* * x*) = sum Y`.
#[derive(Debug, Clone, PartialEq)]
pub struct PythagorasW {
    pub x_star: Signal,
    pub total: f64,
    pub to_projection: f64,
    pub projection_to_w: f64,
    pub residual: f64,
    pub mass: f64,
    pub mass_residual: f64,
}

impl PythagorasW {
    pub fn relative_residual(&self) -> f64 {
        self.residual / self.total.max(f64::MIN_POSITIVE)
    }

    pub fn relative_mass_residual(&self) -> f64 {
        self.mass_residual / self.mass.max(f64::MIN_POSITIVE)
    }
}

/// Minimizer `x*` of `I(Y || W(x))` over `x`.
pub fn project_w(m: &LiftedTriangular) -> Result<Signal> {
    let r: Vec<f64> = tilde_sums(m).into_iter().map(|v| 0.5 * v).collect();
    Ok(solver::solve(&r)?.x)
}

pub fn verify_pythagoras_w(m: &LiftedTriangular, w: &LiftedTriangular) -> Result<PythagorasW> {
    let x_star = project_w(m)?;
    let w_star = build_w(&x_star);
    let total = matrix_i_divergence(m, w)?.value();
    let to_projection = matrix_i_divergence(m, &w_star)?.value();
    let projection_to_w = matrix_i_divergence(&w_star, w)?.value();
    let mass = m.total();
    let fitted_mass = signal::autoconvolve_truncated(&x_star).sum();
    Ok(PythagorasW {
        x_star,
        total,
        to_projection,
        projection_to_w,
        residual: (total - to_projection - projection_to_w).abs(),
        mass,
        mass_residual: (fitted_mass - mass).abs(),
    })
}

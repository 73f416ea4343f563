//! The alternating-minimization fit.
//!
//! One step maps `x^t` to `x^{t+1}`:
//!
//! 1. `yhat = (x^t * x^t)` truncated, `rho = y / yhat`;
//! 2. `r_j = x_j sum_{i <= n-j} x_i rho_{i+j}`, the column sums of the
//!    optimal lifted data matrix;
//! 3. `x^{t+1}` is the exact solution of `x_j sum_{i <= n-j} x_i = r_j`
//!    (see [`crate::solver`]).
//!
//! The divergence `I(y || x^t * x^t)` never increases, and from `t = 1` on
//! the fitted mass `sum (x^t * x^t)` equals `sum y`.

use log::warn;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lifting;
use crate::signal::{self, Divergence, Signal};
use crate::solver;

/// ChaCha stream used for initial points; data generators use stream 0.
pub const INIT_STREAM: u64 = 1;

/// Current iterate and the quantities derived from it.
#[derive(Debug, Clone, PartialEq)]
pub struct IterationState {
    pub t: usize,
    pub x: Signal,
    pub yhat: Signal,
    pub rho: Signal,
    pub divergence: Divergence,
}

impl IterationState {
    /// Fails with [`Error::InfiniteDivergence`] if `x` cannot explain the
    /// support of `y`.
    pub fn new(t: usize, x: Signal, y: &Signal) -> Result<Self> {
        let yhat = signal::autoconvolve_truncated(&x);
        let divergence = signal::i_divergence(y, &yhat)?;
        if !divergence.is_finite() {
            return Err(Error::InfiniteDivergence);
        }
        let rho = Signal::from_vec_unchecked(signal::ratio(y, &yhat)?);
        Ok(IterationState {
            t,
            x,
            yhat,
            rho,
            divergence,
        })
    }

    pub fn mass(&self) -> f64 {
        self.yhat.sum()
    }

    pub fn gradient(&self) -> Vec<f64> {
        signal::gradient_from_rho(&self.x, &self.rho)
    }
}

/// `r_j = x_j sum_{i=0}^{n-j} x_i rho_{i+j}`.
pub fn compute_r(x: &[f64], rho: &[f64]) -> Result<Vec<f64>> {
    if x.len() != rho.len() {
        return Err(Error::LengthMismatch {
            left: x.len(),
            right: rho.len(),
        });
    }
    let n = x.len() - 1;
    Ok((0..=n)
        .map(|j| x[j] * (0..=n - j).map(|i| x[i] * rho[i + j]).sum::<f64>())
        .collect())
}

fn advance(
    state: &IterationState,
    y: &Signal,
    validate: bool,
) -> Result<(IterationState, Vec<f64>)> {
    let r = compute_r(&state.x, &state.rho)?;
    let solution = if validate {
        solver::solve_validated(&r)
    } else {
        solver::solve(&r)
    };
    let wrap = |e: Error| Error::Iteration {
        iteration: state.t,
        source: Box::new(e),
    };
    let x = solution.map_err(wrap)?.x;
    let next = IterationState::new(state.t + 1, x, y).map_err(wrap)?;
    Ok((next, r))
}

/// One iteration of the fit.
pub fn step(state: &IterationState, y: &Signal) -> Result<IterationState> {
    advance(state, y, false).map(|(next, _)| next)
}

/// Tolerances, all relative to `sum y`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Tolerances {
    pub mass: f64,
    pub identity: f64,
    pub gain: f64,
    pub kkt: f64,
    pub orthogonality: f64,
    /// Relative to `max r`.
    pub implicit_update: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            mass: 1e-10,
            identity: 1e-8,
            gain: 1e-12,
            kkt: 1e-6,
            orthogonality: 1e-8,
            implicit_update: 1e-9,
        }
    }
}

/// How the starting point is chosen. Random and constant starts are scaled
/// by `sqrt(sum y) / (n + 1)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Init {
    Uniform { lo: f64, hi: f64 },
    Constant,
    Given(Signal),
}

impl Default for Init {
    fn default() -> Self {
        Init::Uniform { lo: 0.5, hi: 1.5 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub max_iterations: usize,
    /// Stop once the divergence decreased by less than this fraction over
    /// `stop_window` iterations.
    pub stop_tolerance: f64,
    pub stop_window: usize,
    pub init: Init,
    pub seed: u64,
    pub restarts: usize,
    /// Cross-check every step: recursive solver, gain decomposition,
    /// conservation and the implicit update.
    pub validate: bool,
    pub tolerances: Tolerances,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            max_iterations: 2000,
            stop_tolerance: 1e-12,
            stop_window: 10,
            init: Init::default(),
            seed: 0,
            restarts: 1,
            validate: false,
            tolerances: Tolerances::default(),
        }
    }
}

impl RunConfig {
    pub fn check(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::InvalidConfig(what.to_string()));
        if self.max_iterations == 0 {
            return bad("max_iterations must be at least 1");
        }
        if self.restarts == 0 {
            return bad("restarts must be at least 1");
        }
        if self.stop_window == 0 {
            return bad("stop_window must be at least 1");
        }
        if self.stop_tolerance.is_nan() || self.stop_tolerance < 0.0 {
            return bad("stop_tolerance must be nonnegative");
        }
        let t = &self.tolerances;
        if [
            t.mass,
            t.identity,
            t.gain,
            t.kkt,
            t.orthogonality,
            t.implicit_update,
        ]
        .iter()
        .any(|v| v.is_nan() || *v <= 0.0)
        {
            return bad("tolerances must be positive");
        }
        match &self.init {
            Init::Uniform { lo, hi } if !(*lo > 0.0 && hi >= lo && hi.is_finite()) => {
                bad("uniform init needs 0 < lo <= hi")
            }
            Init::Given(x) if x.sum() <= 0.0 => bad("initial point must have a positive entry"),
            _ => Ok(()),
        }
    }

    /// Starting point for restart `restart`, drawn from seed `seed + restart`.
    pub fn initial_point(&self, y: &Signal, restart: usize) -> Result<Signal> {
        let len = y.len();
        let scale = y.sum().sqrt() / len as f64;
        match &self.init {
            Init::Given(x) => {
                if x.len() != len {
                    return Err(Error::LengthMismatch {
                        left: x.len(),
                        right: len,
                    });
                }
                Ok(x.clone())
            }
            Init::Constant => Signal::new(vec![scale; len]),
            Init::Uniform { lo, hi } => {
                let mut rng = init_rng(self.seed.wrapping_add(restart as u64));
                Signal::new((0..len).map(|_| scale * rng.gen_range(*lo..=*hi)).collect())
            }
        }
    }
}

pub fn init_rng(seed: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(INIT_STREAM);
    rng
}

/// One row of the trace. Step quantities (`gain`, ...) describe the step
/// that produced iterate `t` and are absent at `t = 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub t: usize,
    pub divergence: f64,
    /// `I^{t-1} - I^t`.
    pub gain: Option<f64>,
    /// `2 sum_j r_j log(x^t_j / x^{t-1}_j)`.
    pub w_gain: Option<f64>,
    /// `I(Y^{t-1} || Y^t)`, validation mode only.
    pub y_gain_matrix: Option<f64>,
    /// `I(W^t || W^{t-1})`, validation mode only.
    pub w_gain_matrix: Option<f64>,
    /// Relative residual of the implicit gradient form of the update,
    /// validation mode only.
    pub implicit_residual: Option<f64>,
    /// `max_j |x_j grad_j I|`.
    pub kkt_residual: f64,
    /// `sum_i (x * x)_i` over the data range.
    pub mass: f64,
    /// `sum_j x_j grad_j I`.
    pub orthogonality: f64,
    pub min_x: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RunWarning {
    /// `y_0 = 0`: a minimizer need not exist.
    LeadingDataZero,
    /// Coordinate `index` reached exactly zero at iteration `t`.
    CoordinateVanished { t: usize, index: usize },
    /// The iterate kept growing over the second half of the run, the usual
    /// symptom of an unattained infimum.
    CoordinatesGrowing { ratio: f64 },
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct IterationTrace {
    pub records: Vec<TraceRecord>,
}

impl IterationTrace {
    pub fn divergences(&self) -> impl Iterator<Item = f64> + '_ {
        self.records.iter().map(|r| r.divergence)
    }

    pub fn is_monotone(&self, slack: f64) -> bool {
        self.records
            .windows(2)
            .all(|w| w[1].divergence <= w[0].divergence + slack)
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    Converged,
    MaxIterations,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KktCoordinate {
    pub value: f64,
    pub gradient: f64,
    pub complementarity: f64,
}

/// First-order optimality check for the nonnegativity-constrained problem.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KktReport {
    pub coordinates: Vec<KktCoordinate>,
    pub max_complementarity: f64,
    /// Smallest gradient over coordinates with `x_j <= theta_zero`.
    pub min_boundary_gradient: Option<f64>,
    pub tolerance: f64,
    pub theta_zero: f64,
    pub satisfied: bool,
}

/// `satisfied` iff every `|x_j grad_j I| <= tol` and `grad_j I >= -tol`
/// wherever `x_j <= theta_zero`.
pub fn kkt_report(x: &Signal, y: &Signal, tol: f64, theta_zero: f64) -> Result<KktReport> {
    let gradient = signal::gradient(x, y)?;
    let coordinates: Vec<KktCoordinate> = x
        .iter()
        .zip(&gradient)
        .map(|(&value, &g)| KktCoordinate {
            value,
            gradient: g,
            complementarity: value * g,
        })
        .collect();
    let max_complementarity = coordinates
        .iter()
        .map(|c| c.complementarity.abs())
        .fold(0.0, f64::max);
    let min_boundary_gradient = coordinates
        .iter()
        .filter(|c| c.value <= theta_zero)
        .map(|c| c.gradient)
        .reduce(f64::min);
    let satisfied = max_complementarity <= tol && min_boundary_gradient.is_none_or(|g| g >= -tol);
    Ok(KktReport {
        coordinates,
        max_complementarity,
        min_boundary_gradient,
        tolerance: tol,
        theta_zero,
        satisfied,
    })
}

/// Boundary threshold used by [`run`]: `1e-10 * max x`.
pub fn default_theta_zero(x: &Signal) -> f64 {
    1e-10 * x.max()
}

/// `||step(x) - x||_inf / max(1, ||x||_inf)`.
pub fn fixed_point_distance(x: &Signal, y: &Signal) -> Result<f64> {
    let state = IterationState::new(0, x.clone(), y)?;
    let next = step(&state, y)?;
    let diff = next
        .x
        .iter()
        .zip(x.iter())
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    Ok(diff / x.max().max(1.0))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunOutcome {
    pub x: Signal,
    pub trace: IterationTrace,
    pub kkt: KktReport,
    pub iterations: usize,
    pub stop: StopReason,
    /// Seed the initial point was drawn from, if random.
    pub init_seed: Option<u64>,
    pub warnings: Vec<RunWarning>,
}

impl RunOutcome {
    pub fn final_divergence(&self) -> f64 {
        self.trace
            .records
            .last()
            .map_or(f64::INFINITY, |r| r.divergence)
    }

    pub fn initial_divergence(&self) -> f64 {
        self.trace
            .records
            .first()
            .map_or(f64::INFINITY, |r| r.divergence)
    }
}

fn record(state: &IterationState) -> TraceRecord {
    let gradient = state.gradient();
    let orthogonality = state.x.iter().zip(&gradient).map(|(a, b)| a * b).sum();
    let kkt_residual = state
        .x
        .iter()
        .zip(&gradient)
        .map(|(a, b)| (a * b).abs())
        .fold(0.0, f64::max);
    TraceRecord {
        t: state.t,
        divergence: state.divergence.value(),
        gain: None,
        w_gain: None,
        y_gain_matrix: None,
        w_gain_matrix: None,
        implicit_residual: None,
        kkt_residual,
        mass: state.mass(),
        orthogonality,
        min_x: state.x.iter().copied().fold(f64::INFINITY, f64::min),
    }
}

/// `I(W(next) || W(prev)) = 2 sum r_j log(next_j / prev_j) + mass(prev) - mass(next)`.
fn closed_form_w_gain(r: &[f64], next: &IterationState, prev: &IterationState) -> f64 {
    let log_term: f64 = r
        .iter()
        .zip(next.x.iter().zip(prev.x.iter()))
        .filter(|(rj, _)| **rj > 0.0)
        .map(|(rj, (a, b))| rj * (a / b).ln())
        .sum();
    2.0 * log_term + prev.mass() - next.mass()
}

/// Relative residual of `x'_j sum_{i<=n-j} x'_i = x_j (-grad_j/2 + sum_{i<=n-j} x_i)`.
fn implicit_update_residual(prev: &IterationState, next: &Signal, r: &[f64]) -> f64 {
    let gradient = prev.gradient();
    let lhs = solver::forward(next);
    let base = solver::forward(&prev.x);
    let scale = r.iter().copied().fold(f64::MIN_POSITIVE, f64::max);
    lhs.iter()
        .zip(&base)
        .zip(prev.x.iter().zip(&gradient))
        .map(|((l, b), (xj, g))| (l - (b - 0.5 * xj * g)).abs())
        .fold(0.0, f64::max)
        / scale
}

struct Checker<'a> {
    y: &'a Signal,
    data_mass: f64,
    tol: Tolerances,
}

impl Checker<'_> {
    fn fail(&self, iteration: usize, what: String) -> Error {
        Error::Validation { iteration, what }
    }

    /// Fills the matrix-based fields of `rec` and checks every identity the
    /// step must satisfy.
    fn check_step(
        &self,
        prev: &IterationState,
        next: &IterationState,
        r: &[f64],
        rec: &mut TraceRecord,
    ) -> Result<()> {
        let t = next.t;
        let scale = self.data_mass;
        let y_prev = lifting::build_y_star(&prev.x, self.y)?;
        let y_next = lifting::build_y_star(&next.x, self.y)?;
        let y_gain = lifting::matrix_i_divergence(&y_prev, &y_next)?.value();
        let w_gain =
            lifting::matrix_i_divergence(&lifting::build_w(&next.x), &lifting::build_w(&prev.x))?
                .value();
        let implicit = implicit_update_residual(prev, &next.x, r);
        rec.y_gain_matrix = Some(y_gain);
        rec.w_gain_matrix = Some(w_gain);
        rec.implicit_residual = Some(implicit);

        let gain = rec.gain.unwrap_or_default();
        if gain < -self.tol.gain * scale {
            return Err(self.fail(t, format!("divergence increased by {:e}", -gain)));
        }
        let decomposition = (gain - y_gain - w_gain).abs();
        if decomposition > self.tol.identity * scale {
            return Err(self.fail(t, format!("gain decomposition off by {decomposition:e}")));
        }
        let closed = (w_gain - rec.w_gain.unwrap_or_default()).abs();
        if closed > self.tol.identity * scale {
            return Err(self.fail(t, format!("closed-form W-gain off by {closed:e}")));
        }
        if implicit > self.tol.implicit_update {
            return Err(self.fail(t, format!("implicit update residual {implicit:e}")));
        }
        let mass_error = (rec.mass - self.data_mass).abs();
        if mass_error > self.tol.mass * scale {
            return Err(self.fail(t, format!("mass off by {mass_error:e}")));
        }
        if rec.orthogonality.abs() > self.tol.orthogonality * scale {
            return Err(self.fail(t, format!("sum x grad = {:e}", rec.orthogonality)));
        }
        Ok(())
    }
}

/// Runs the iteration from the given starting point.
pub fn run_from(y: &Signal, x0: Signal, config: &RunConfig) -> Result<RunOutcome> {
    config.check()?;
    if x0.len() != y.len() {
        return Err(Error::LengthMismatch {
            left: x0.len(),
            right: y.len(),
        });
    }
    let data_mass = y.sum();
    if data_mass <= 0.0 {
        return Err(Error::InvalidConfig(
            "data must have a positive entry".into(),
        ));
    }
    let mut warnings = Vec::new();
    if y[0] == 0.0 {
        warn!("y_0 = 0: the infimum may not be attained");
        warnings.push(RunWarning::LeadingDataZero);
    }

    let checker = Checker {
        y,
        data_mass,
        tol: config.tolerances,
    };
    let mut vanished = vec![false; y.len()];
    for (j, v) in x0.iter().enumerate() {
        vanished[j] = *v == 0.0;
    }
    let mut state = IterationState::new(0, x0, y)?;
    let mut records = vec![record(&state)];
    let mut midpoint_max = None;
    let mut stop = StopReason::MaxIterations;

    for _ in 0..config.max_iterations {
        let (next, r) = advance(&state, y, config.validate)?;
        let mut rec = record(&next);
        let gain = state.divergence.value() - next.divergence.value();
        rec.gain = Some(gain);
        rec.w_gain = Some(closed_form_w_gain(&r, &next, &state));
        if config.validate {
            checker.check_step(&state, &next, &r, &mut rec)?;
        }
        for (j, v) in next.x.iter().enumerate() {
            if *v == 0.0 && !vanished[j] {
                vanished[j] = true;
                warnings.push(RunWarning::CoordinateVanished {
                    t: next.t,
                    index: j,
                });
            }
        }
        records.push(rec);
        state = next;
        if state.t == config.max_iterations / 2 {
            midpoint_max = Some(state.x.max());
        }

        let w = config.stop_window;
        if state.t >= w {
            let earlier = records[state.t - w].divergence;
            let now = state.divergence.value();
            if earlier - now <= config.stop_tolerance * earlier {
                stop = StopReason::Converged;
                break;
            }
        }
    }

    if y[0] == 0.0 {
        if let Some(mid) = midpoint_max {
            let ratio = state.x.max() / mid;
            if ratio > 1.0 + 1e-3 {
                warnings.push(RunWarning::CoordinatesGrowing { ratio });
            }
        }
    }

    let kkt = kkt_report(
        &state.x,
        y,
        config.tolerances.kkt * data_mass,
        default_theta_zero(&state.x),
    )?;
    Ok(RunOutcome {
        iterations: state.t,
        x: state.x,
        trace: IterationTrace { records },
        kkt,
        stop,
        init_seed: None,
        warnings,
    })
}

/// Runs every restart; results are ordered by restart index.
pub fn run_all(y: &Signal, config: &RunConfig) -> Vec<Result<RunOutcome>> {
    if let Err(e) = config.check() {
        return vec![Err(e)];
    }
    (0..config.restarts)
        .into_par_iter()
        .map(|restart| {
            let x0 = config.initial_point(y, restart)?;
            let mut outcome = run_from(y, x0, config)?;
            if matches!(config.init, Init::Uniform { .. }) {
                outcome.init_seed = Some(config.seed.wrapping_add(restart as u64));
            }
            Ok(outcome)
        })
        .collect()
}

/// Runs every restart and keeps the one with the smallest final divergence.
pub fn run(y: &Signal, config: &RunConfig) -> Result<RunOutcome> {
    let mut first_error = None;
    let mut best: Option<RunOutcome> = None;
    for result in run_all(y, config) {
        match result {
            Ok(outcome) => {
                if best
                    .as_ref()
                    .is_none_or(|b| outcome.final_divergence() < b.final_divergence())
                {
                    best = Some(outcome);
                }
            }
            Err(e) => {
                first_error.get_or_insert(e);
            }
        }
    }
    best.ok_or_else(|| first_error.expect("at least one restart runs"))
}

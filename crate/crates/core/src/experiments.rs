//! Seeded synthetic data and multi-start experiment protocols.
//!
//! Two generators:
//!
//! * `exact`: a random `x` with i.i.d. uniform[1, 10] entries on `0..=m`,
//!   data `y = x * x` (full autoconvolution, `2m + 1` entries);
//! * `random`: `y_k = (k + 1) u_k` with `u_k` i.i.d. uniform[1, 2K^2],
//!   `k = 0..=2m`.
//!
//! In both cases the fit runs on all `2m + 1` data points with an unknown of
//! the same length.
//!
//! Seeding: data come from ChaCha8 stream 0 seeded with `seed`; restart `r`
//! starts from stream [`INIT_STREAM`](crate::algorithm::INIT_STREAM) seeded
//! with `seed + r`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::algorithm::{self, RunConfig, RunOutcome};
use crate::error::{Error, Result};
use crate::signal::{autoconvolve, Signal};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    Exact,
    Random,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSpec {
    pub kind: ExperimentKind,
    pub m: usize,
    /// Scale of the random generator; unused by `exact`.
    pub k_scale: u32,
    pub iterations: usize,
    pub seed: u64,
    pub restarts: usize,
    pub validate: bool,
}

impl ExperimentSpec {
    pub fn exact(m: usize, seed: u64) -> Self {
        ExperimentSpec {
            kind: ExperimentKind::Exact,
            m,
            k_scale: 5,
            iterations: 2000,
            seed,
            restarts: 3,
            validate: false,
        }
    }

    pub fn random(m: usize, k_scale: u32, seed: u64) -> Self {
        ExperimentSpec {
            kind: ExperimentKind::Random,
            m,
            k_scale,
            iterations: 2000,
            seed,
            restarts: 2,
            validate: false,
        }
    }

    pub fn check(&self) -> Result<()> {
        if self.m == 0 || self.k_scale == 0 || self.iterations == 0 || self.restarts == 0 {
            return Err(Error::InvalidConfig(
                "m, K, T and restarts must all be at least 1".into(),
            ));
        }
        Ok(())
    }

    /// Fit configuration derived from this experiment.
    pub fn run_config(&self) -> RunConfig {
        RunConfig {
            max_iterations: self.iterations,
            seed: self.seed,
            restarts: self.restarts,
            validate: self.validate,
            ..RunConfig::default()
        }
    }
}

fn data_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Returns `(true_x, y)` with `true_x` of length `m + 1` and `y` its full
/// autoconvolution.
pub fn generate_exact(m: usize, seed: u64) -> Result<(Signal, Signal)> {
    if m == 0 {
        return Err(Error::InvalidConfig("m must be at least 1".into()));
    }
    let mut rng = data_rng(seed);
    let x = Signal::new((0..=m).map(|_| rng.gen_range(1.0..=10.0)).collect())?;
    let y = autoconvolve(&x);
    Ok((x, y))
}

/// `y_k = (k + 1) u_k`, `u_k ~ uniform[1, 2K^2]`, `k = 0..=2m`.
pub fn generate_random(m: usize, k_scale: u32, seed: u64) -> Result<Signal> {
    if m == 0 || k_scale == 0 {
        return Err(Error::InvalidConfig("m and K must be at least 1".into()));
    }
    let mut rng = data_rng(seed);
    let upper = 2.0 * f64::from(k_scale).powi(2);
    Signal::new(
        (0..=2 * m)
            .map(|k| (k + 1) as f64 * rng.gen_range(1.0..=upper))
            .collect(),
    )
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentRun {
    pub restart: usize,
    pub init_seed: u64,
    /// Error message if the run failed.
    pub outcome: std::result::Result<RunOutcome, String>,
    /// `||x^T - true_x||_inf / ||true_x||_inf`, with `true_x` zero-padded.
    pub recovery_error: Option<f64>,
    pub fixed_point_distance: Option<f64>,
}

impl ExperimentRun {
    /// Ratio of final to initial divergence.
    pub fn reduction(&self) -> Option<f64> {
        let out = self.outcome.as_ref().ok()?;
        Some(out.final_divergence() / out.initial_divergence())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentResult {
    pub spec: ExperimentSpec,
    pub y: Signal,
    pub true_x: Option<Signal>,
    pub runs: Vec<ExperimentRun>,
}

impl ExperimentResult {
    /// Completed run with the smallest final divergence.
    pub fn best(&self) -> Option<&ExperimentRun> {
        self.runs
            .iter()
            .filter(|r| r.outcome.is_ok())
            .min_by(|a, b| {
                let da = a.outcome.as_ref().unwrap().final_divergence();
                let db = b.outcome.as_ref().unwrap().final_divergence();
                da.total_cmp(&db)
            })
    }

    pub fn completed(&self) -> usize {
        self.runs.iter().filter(|r| r.outcome.is_ok()).count()
    }
}

pub fn recovery_error(fitted: &Signal, true_x: &Signal) -> f64 {
    let len = fitted.len().max(true_x.len());
    let at = |s: &Signal, i: usize| s.get(i).copied().unwrap_or(0.0);
    let worst = (0..len)
        .map(|i| (at(fitted, i) - at(true_x, i)).abs())
        .fold(0.0, f64::max);
    worst / true_x.max()
}

pub fn run_experiment(spec: &ExperimentSpec) -> Result<ExperimentResult> {
    spec.check()?;
    let (true_x, y) = match spec.kind {
        ExperimentKind::Exact => {
            let (x, y) = generate_exact(spec.m, spec.seed)?;
            (Some(x), y)
        }
        ExperimentKind::Random => (None, generate_random(spec.m, spec.k_scale, spec.seed)?),
    };
    let config = spec.run_config();
    let runs = algorithm::run_all(&y, &config)
        .into_iter()
        .enumerate()
        .map(|(restart, result)| {
            let recovery_error = match (&result, &true_x) {
                (Ok(out), Some(tx)) => Some(recovery_error(&out.x, tx)),
                _ => None,
            };
            let fixed_point_distance = result
                .as_ref()
                .ok()
                .and_then(|out| algorithm::fixed_point_distance(&out.x, &y).ok());
            ExperimentRun {
                restart,
                init_seed: spec.seed.wrapping_add(restart as u64),
                outcome: result.map_err(|e| e.to_string()),
                recovery_error,
                fixed_point_distance,
            }
        })
        .collect();
    Ok(ExperimentResult {
        spec: spec.clone(),
        y,
        true_x,
        runs,
    })
}

/// Iterations at which the one-step gain jumps above `factor` times the
/// median gain of the preceding `window` steps, after a plateau. Flags the
/// sudden drops that accompany a switch of basin of attraction.
pub fn sudden_drops(outcome: &RunOutcome, window: usize, factor: f64) -> Vec<usize> {
    let gains: Vec<f64> = outcome
        .trace
        .records
        .iter()
        .skip(1)
        .map(|r| r.gain.unwrap_or(0.0).max(0.0))
        .collect();
    let mut hits = Vec::new();
    for t in window..gains.len() {
        let mut recent = gains[t - window..t].to_vec();
        recent.sort_by(f64::total_cmp);
        let median = recent[window / 2];
        if gains[t] > factor * median
            && gains[t] > 0.0
            && hits.last().is_none_or(|&h| t > h + window)
        {
            hits.push(t + 1);
        }
    }
    hits
}

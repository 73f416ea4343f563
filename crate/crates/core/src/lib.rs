//! Positive deautoconvolution.
//!
//! Given nonnegative data `y_0, ..., y_n`, find a nonnegative `x` of the same
//! length minimizing the I-divergence `I(y || x * x)` between the data and the
//! autoconvolution of `x` restricted to `0..=n`.
//!
//! The fit ([`algorithm::run`]) alternates two exact partial minimizations
//! over lifted lower-triangular matrices ([`lifting`]); the harder one reduces
//! to a structured quadratic system with a closed-form solution
//! ([`solver`]).

pub mod algorithm;
pub mod error;
pub mod experiments;
pub mod lifting;
pub mod reference;
pub mod signal;
pub mod solver;

pub use algorithm::{
    fixed_point_distance, kkt_report, run, run_all, run_from, step, Init, IterationState,
    IterationTrace, KktReport, RunConfig, RunOutcome, Tolerances, TraceRecord,
};
pub use error::{Error, Result};
pub use signal::{Divergence, Signal};

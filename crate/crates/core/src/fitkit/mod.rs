//! Least-squares parameter extraction.
//!
//! The extraction chain mirrors how a pump-power series is analysed:
//!
//! 1. [`fit_bare_cavity`] on the weakest-pump trace gives `ω_c`, `κ` and
//!    the transmission amplitude;
//! 2. [`fit_omia`] on every trace, with the cavity held fixed, gives the
//!    mechanical frequency, intrinsic linewidth and cooperativity;
//! 3. [`fit_coop_linear`] regresses cooperativity against pump photon number
//!    through the origin and converts the slope into `g₀`.
//!
//! [`batch_extract`] runs the whole chain.

mod extract;
pub mod lsq;
mod report;
mod resonance;
mod trace;

pub use extract::{
    batch_extract, fit_coop_linear, BatchConfig, BatchResult, CoopPoint, FixedRates, TraceOutcome,
};
pub use lsq::{least_squares, Bounds, LmSettings, LmSolution, LsqError, Problem, Termination};
pub use report::{FitParam, FitReport, ParamUnit};
pub use resonance::{
    fit_bare_cavity, fit_omia, BareCavityProblem, OmiaProblem, OMIA_DEGENERATE_COOP,
};
pub use trace::{Trace, TraceData, TraceMeta};

use thiserror::Error;

use crate::omresponse::ResponseError;

#[derive(Debug, Error)]
pub enum FitError {
    #[error("invalid trace: {0}")]
    InvalidTrace(String),
    #[error("no resonance found: peak is not 3 dB above the median level")]
    NoResonanceFound,
    #[error("no absorption dip found relative to the bare-cavity model")]
    NoDipFound,
    #[error("cooperativity {coop:.3e} too small: linewidth and cooperativity are not separately identifiable")]
    DegenerateFit { coop: f64, report: Box<FitReport> },
    #[error("fit did not converge after {} iterations", .0.iterations)]
    NotConverged(Box<FitReport>),
    #[error("normal matrix is singular; parameters not identifiable")]
    SingularJacobian,
    #[error("cooperativity slope is negative ({0:e} per photon)")]
    NegativeSlope(f64),
    #[error("need at least {needed} points, got {got}")]
    TooFewPoints { needed: usize, got: usize },
    #[error("trace metadata lacks `{0}`")]
    MissingMetadata(&'static str),
    #[error(transparent)]
    Model(#[from] ResponseError),
    #[error("optimizer failure: {0}")]
    Optimizer(String),
}

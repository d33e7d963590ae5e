//! Robust linear regression under heavy tails and adversarial contamination.
//!
//! The estimator runs in three stages:
//!
//! 1. [`pruning`]: a median-of-least-squares initialization computed on the
//!    first half of the sample, followed by removal of the second-half rows
//!    with the largest joint residual / feature norm.
//! 2. [`regression`]: an outer descent loop whose directions are margin
//!    certificates produced by multiplicative weights ([`mwu`]) on bucketed
//!    score vectors, preconditioned by an inner loop that estimates `Σv`
//!    without ever forming the covariance matrix.
//! 3. [`adaptive`]: Lepski selection over a geometric grid of noise scales
//!    when the noise covariance norm is unknown.
//!
//! [`datagen`] and [`oracles`] support simulation and independent checking;
//! [`suites`] bundles the seeded statistical verification runs.

pub mod adaptive;
pub mod datagen;
pub mod io;
pub mod model;
pub mod mwu;
pub mod numerics;
pub mod oracles;
pub mod pruning;
pub mod regression;
pub mod rng;
pub mod suites;

pub use adaptive::{adaptive_fit, rate_r, AdaptiveFit, LepskiGrid, LevelReport};
pub use datagen::{
    contaminate, generate_clean, ContaminationKind, ContaminationStrategy, DistributionSpec,
    FeatureLaw, NoiseLaw, NoiseScale,
};
pub use model::{
    compute_rates, validate_config, CheckedConfig, Condition, ConfigError, ConstantsProfile,
    LabeledDataset, ProblemDims, Profile, RateBundle, SpectralInputs,
};
pub use mwu::{mw, mw_iterate, spherical_round, MarginCertificate, MwInputs, MwTrace, RoundBudget};
pub use pruning::{hsu_sabato_median, prune, BucketPartition, PruningOutput};
pub use regression::{
    bucket_scores, robust_direction, robust_regression, BucketScores, DirectionScores, FitResult,
    FitSettings, IterateRecord, StepConstants,
};

/// Vector type used across the public API.
pub type Vector = nalgebra::DVector<f64>;
/// Dense matrix type used across the public API.
pub type Matrix = nalgebra::DMatrix<f64>;

/// Union of the per-module failure types.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error(transparent)]
    Config(#[from] model::ConfigError),
    #[error(transparent)]
    Numerics(#[from] numerics::NumericsError),
    #[error(transparent)]
    Mw(#[from] mwu::MwError),
    #[error(transparent)]
    Data(#[from] datagen::DataError),
    #[error(transparent)]
    Io(#[from] io::IoError),
    #[error(transparent)]
    Fit(#[from] regression::FitError),
}

impl Error {
    /// True when the failure comes from a numerical routine rather than
    /// malformed input.
    pub fn is_numerical(&self) -> bool {
        match self {
            Error::Numerics(_) => true,
            Error::Mw(e) | Error::Fit(regression::FitError::Mw(e)) => !e.is_input_error(),
            _ => false,
        }
    }
}

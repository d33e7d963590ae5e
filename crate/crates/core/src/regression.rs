//! The outer descent loop over `b` and the inner loop that estimates `Σv`.
//!
//! Both loops follow the same pattern: build one score vector per bucket,
//! ask [`crate::mwu::mw`] for a margin certificate `(θ, v)`, and take a step
//! along the certified direction when the gate accepts it.

use std::collections::BTreeMap;

use crate::model::{
    compute_rates, inner_accuracy, outer_step_size, r1_of_zeta, validate_config, ConfigError,
    ConstantsProfile, LabeledDataset, RateBundle, SpectralInputs,
};
use crate::mwu::{mw, MwError, MwInputs, RoundBudget};
use crate::pruning::{prune, BucketPartition, PruningOutput};
use crate::rng::{derive_seed, PURPOSE_INNER, PURPOSE_OUTER};
use crate::{Matrix, Vector};

#[derive(Debug, Clone, thiserror::Error)]
pub enum FitError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Mw(#[from] MwError),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("invalid fit settings: {0}")]
    InvalidSettings(String),
}

/// Per-bucket residual-weighted feature averages at a fixed `b`.
#[derive(Debug, Clone, PartialEq)]
pub struct BucketScores {
    /// Row `i` is `(1/B) Σ_{l ∈ B_i} (y_l - <x_l, b>) x_l`.
    pub z: Matrix,
    /// `max_i |z_i|^2`.
    pub u: f64,
}

/// Per-bucket `(1/B) Σ <x_l, v> x_l - μ`.
#[derive(Debug, Clone, PartialEq)]
pub struct DirectionScores {
    pub z: Matrix,
    pub u: f64,
}

fn max_row_sq(z: &Matrix) -> f64 {
    z.row_iter().map(|r| r.norm_squared()).fold(0.0, f64::max)
}

fn weighted_bucket_means(features: &Matrix, weights: &[f64], partition: &BucketPartition) -> Matrix {
    let p = features.ncols();
    let scale = 1.0 / partition.size as f64;
    let mut z = Matrix::zeros(partition.count, p);
    for i in 0..partition.count {
        for l in partition.bucket(i) {
            let w = weights[l] * scale;
            for j in 0..p {
                z[(i, j)] += w * features[(l, j)];
            }
        }
    }
    z
}

fn check_partition(rows: usize, partition: &BucketPartition) -> Result<(), FitError> {
    if partition.rows() != rows {
        return Err(FitError::DimensionMismatch {
            expected: partition.rows(),
            got: rows,
        });
    }
    Ok(())
}

pub fn bucket_scores(pruned: &LabeledDataset, partition: &BucketPartition, b: &Vector) -> Result<BucketScores, FitError> {
    check_partition(pruned.len(), partition)?;
    if b.len() != pruned.dim() {
        return Err(FitError::DimensionMismatch {
            expected: pruned.dim(),
            got: b.len(),
        });
    }
    let residuals = &pruned.labels - &pruned.features * b;
    let z = weighted_bucket_means(&pruned.features, residuals.as_slice(), partition);
    let u = max_row_sq(&z);
    Ok(BucketScores { z, u })
}

/// Bucket means of `<x, v> x`; the `μ`-free part of [`DirectionScores`].
pub fn direction_moments(features: &Matrix, partition: &BucketPartition, v_hat: &Vector) -> Result<Matrix, FitError> {
    check_partition(features.nrows(), partition)?;
    if v_hat.len() != features.ncols() {
        return Err(FitError::DimensionMismatch {
            expected: features.ncols(),
            got: v_hat.len(),
        });
    }
    let proj = features * v_hat;
    Ok(weighted_bucket_means(features, proj.as_slice(), partition))
}

pub fn direction_scores(moments: &Matrix, mu: &Vector) -> DirectionScores {
    let mut z = moments.clone();
    for mut row in z.row_iter_mut() {
        row -= mu.transpose();
    }
    let u = max_row_sq(&z);
    DirectionScores { z, u }
}

/// Loop lengths, sphere sample counts and MW budgets for one fit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitSettings {
    /// `T1`.
    pub outer_rounds: usize,
    /// `T2`.
    pub inner_rounds: usize,
    /// `K`, buckets of the first batch.
    pub buckets: usize,
    pub eta: f64,
    /// `S1`.
    pub outer_samples: usize,
    /// `S2`.
    pub inner_samples: usize,
    /// Moment-equivalence constant `L`, used only by the rate formulas.
    pub hyper_l: f64,
    pub outer_budget: RoundBudget,
    pub inner_budget: RoundBudget,
}

impl FitSettings {
    /// Sizes that finish a `n = 5000, p = 5` fit in about a second on one core.
    pub fn practical(buckets: usize, eta: f64) -> Self {
        let budget = RoundBudget {
            max_rounds: 200,
            min_rounds: 20,
            record_history: false,
        };
        Self {
            outer_rounds: 50,
            inner_rounds: 50,
            buckets,
            eta,
            outer_samples: 100,
            inner_samples: 50,
            hyper_l: 3f64.powf(0.25),
            outer_budget: budget,
            inner_budget: budget,
        }
    }

    fn validate(&self) -> Result<(), FitError> {
        if self.outer_rounds == 0 || self.inner_rounds == 0 {
            return Err(FitError::InvalidSettings("T1 and T2 must be at least 1".into()));
        }
        if self.outer_samples == 0 || self.inner_samples == 0 {
            return Err(FitError::InvalidSettings("S1 and S2 must be at least 1".into()));
        }
        Ok(())
    }
}

/// How the noise level enters the rates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NoiseLevel {
    /// `r1` given directly.
    R1(f64),
    /// Noise scale `ζ`, with `r1 = r1(ζ)`.
    Zeta(f64),
}

/// Step sizes held fixed for a whole fit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepConstants {
    /// Outer step size `c_*`.
    pub c_star: f64,
    /// Inner step size `c̄_*`.
    pub bar_c_star: f64,
    /// Inner accuracy `Δ`.
    pub delta: f64,
    /// `C_{α1} μ² r1`, added to `θ_t` in the outer update.
    pub margin_offset: f64,
}

impl StepConstants {
    pub fn new(consts: &ConstantsProfile, spectral: &SpectralInputs, rates: &RateBundle, inner_rounds: usize) -> Self {
        let delta = inner_accuracy(consts, spectral, rates, inner_rounds);
        Self {
            c_star: outer_step_size(consts, spectral, delta),
            bar_c_star: consts.bar_c_star,
            delta,
            margin_offset: consts.const_alpha1 * spectral.mu2 * rates.r1,
        }
    }
}

/// `b + c_* (θ + offset) μ`.
pub fn outer_update(b: &Vector, theta: f64, mu: &Vector, steps: &StepConstants) -> Vector {
    b + mu * (steps.c_star * (theta + steps.margin_offset))
}

/// `μ + c̄_* θ v`.
pub fn inner_update(mu: &Vector, theta: f64, v: &Vector, bar_c_star: f64) -> Vector {
    mu + v * (bar_c_star * theta)
}

#[derive(Debug, Clone, PartialEq)]
pub struct IterateRecord {
    /// 1-based round index.
    pub t: usize,
    /// Certified margin, NaN when the round produced no certificate.
    pub theta: f64,
    pub accepted: bool,
    pub step_norm: f64,
    /// `|b^{t+1} - b*|` when the ground truth is known.
    pub error: Option<f64>,
    /// Iterate after this round.
    pub b: Vector,
    pub inner_accepted: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    /// Last iterate `b^{T1}`.
    pub b_hat: Vector,
    pub b0: Vector,
    pub iterates: Vec<IterateRecord>,
    pub accepted_steps: usize,
    pub rate_bundle: RateBundle,
    pub steps: StepConstants,
    pub flags: Vec<String>,
}

/// Result of one inner-loop run.
#[derive(Debug, Clone, PartialEq)]
pub struct DirectionEstimate {
    /// `μ^{T2}`, the estimate of `Σv`.
    pub mu: Vector,
    pub accepted: usize,
    /// Margin of each round, NaN for rounds without a certificate.
    pub thetas: Vec<f64>,
    pub flags: Vec<String>,
}

/// Errors that make the whole fit meaningless rather than one round.
fn is_fatal(e: &MwError) -> bool {
    e.is_input_error()
}

#[derive(Default)]
struct FlagTally(BTreeMap<String, usize>);

impl FlagTally {
    fn add(&mut self, flag: impl Into<String>) {
        *self.0.entry(flag.into()).or_default() += 1;
    }

    fn finish(self, rounds: usize) -> Vec<String> {
        self.0.into_iter().map(|(k, c)| format!("{k} ({c}/{rounds})")).collect()
    }
}

/// Runs the inner loop for direction `v_hat` on the pruned features.
#[allow(clippy::too_many_arguments)]
pub fn robust_direction(
    features: &Matrix,
    partition: &BucketPartition,
    v_hat: &Vector,
    settings: &FitSettings,
    consts: &ConstantsProfile,
    rates: &RateBundle,
    seed: u64,
) -> Result<DirectionEstimate, FitError> {
    settings.validate()?;
    let moments = direction_moments(features, partition, v_hat)?;
    let kk = partition.count;
    let slack = consts.inner_slack(kk);
    let one_sided = consts.inner_one_sided_slack(kk);
    let r_tilde = consts.const_bar_alpha1 * rates.bar_r1;

    let mut mu = Vector::zeros(features.ncols());
    mu[0] = 1.0;
    let mut prev = f64::INFINITY;
    let mut accepted = 0;
    let mut thetas = Vec::with_capacity(settings.inner_rounds);
    let mut tally = FlagTally::default();
    for tau in 0..settings.inner_rounds {
        let scores = direction_scores(&moments, &mu);
        let inputs = MwInputs::new(scores.z, settings.inner_samples, slack, one_sided, 1.0, r_tilde);
        match mw(&inputs, &settings.inner_budget, derive_seed(seed, &[tau as u64])) {
            Ok(cert) => {
                cert.flags.iter().for_each(|f| tally.add(format!("inner-mw {f}")));
                thetas.push(cert.theta);
                if cert.theta < prev {
                    mu = inner_update(&mu, cert.theta, &cert.v, consts.bar_c_star);
                    prev = cert.theta;
                    accepted += 1;
                }
            }
            Err(e) if is_fatal(&e) => return Err(e.into()),
            Err(e) => {
                tally.add(format!("inner-mw skipped: {e}"));
                thetas.push(f64::NAN);
            }
        }
    }
    Ok(DirectionEstimate {
        mu,
        accepted,
        thetas,
        flags: tally.finish(settings.inner_rounds),
    })
}

/// Rates for either noise parametrization. A direct `r1` is mapped to the
/// `ζ` that produces it so every rate stays on one formula.
pub fn rates_for(
    pruning: &PruningOutput,
    settings: &FitSettings,
    noise: NoiseLevel,
    consts: &ConstantsProfile,
    spectral: &SpectralInputs,
) -> Result<RateBundle, FitError> {
    let zeta = match noise {
        NoiseLevel::Zeta(z) => z,
        NoiseLevel::R1(r1) => {
            if !(r1 > 0.0) {
                return Err(ConfigError::NonPositive("r1").into());
            }
            (r1 / r1_of_zeta(&pruning.dims, 1.0)).powi(2)
        }
    };
    Ok(compute_rates(&pruning.dims, consts, spectral, zeta, settings.hyper_l)?)
}

/// Prunes `dataset`, then runs the outer loop.
pub fn robust_regression(
    dataset: &LabeledDataset,
    settings: &FitSettings,
    noise: NoiseLevel,
    consts: &ConstantsProfile,
    spectral: &SpectralInputs,
    seed: u64,
) -> Result<FitResult, FitError> {
    settings.validate()?;
    let pruning = prune(dataset, settings.buckets, settings.eta)?;
    fit_pruned(&pruning, settings, noise, consts, spectral, dataset.ground_truth_b.as_ref(), seed)
}

/// The outer loop on an already pruned sample. Lets several noise levels
/// share one pruning pass.
pub fn fit_pruned(
    pruning: &PruningOutput,
    settings: &FitSettings,
    noise: NoiseLevel,
    consts: &ConstantsProfile,
    spectral: &SpectralInputs,
    truth: Option<&Vector>,
    seed: u64,
) -> Result<FitResult, FitError> {
    settings.validate()?;
    let rates = rates_for(pruning, settings, noise, consts, spectral)?;
    let mut checked = validate_config(pruning.dims, *consts, *spectral)?;
    checked.check_rate_conditions(&rates, settings.hyper_l, settings.inner_rounds);
    let steps = StepConstants::new(consts, spectral, &rates, settings.inner_rounds);

    let data = &pruning.pruned;
    let partition = &pruning.partition;
    let kk = partition.count;
    let slack = consts.outer_slack(kk);
    let one_sided = consts.outer_one_sided_slack(kk);
    let radius = spectral.mu2;
    let r_tilde = consts.const_alpha1 * spectral.mu2 * rates.r1;

    let mut flags: Vec<String> = checked.warnings.iter().map(|w| format!("condition: {}", w.detail)).collect();
    let mut tally = FlagTally::default();
    let mut b = pruning.b0.clone();
    let mut prev = f64::INFINITY;
    let mut iterates = Vec::with_capacity(settings.outer_rounds);
    let mut accepted_steps = 0;
    for t in 1..=settings.outer_rounds {
        let scores = bucket_scores(data, partition, &b)?;
        let mut inputs = MwInputs::new(scores.z, settings.outer_samples, slack, one_sided, radius, r_tilde);
        // Keeps every weight factor 1 - τ/(2U) nonnegative when R > 1.
        inputs.u_bound *= radius.max(1.0).powi(2);
        let outcome = mw(&inputs, &settings.outer_budget, derive_seed(seed, &[PURPOSE_OUTER, t as u64]));
        let mut record = IterateRecord {
            t,
            theta: f64::NAN,
            accepted: false,
            step_norm: 0.0,
            error: None,
            b: Vector::zeros(0),
            inner_accepted: 0,
        };
        match outcome {
            Ok(cert) => {
                cert.flags.iter().for_each(|f| tally.add(format!("outer-mw {f}")));
                record.theta = cert.theta;
                if cert.theta < prev / spectral.kappa {
                    let dir = robust_direction(
                        &data.features,
                        partition,
                        &cert.v,
                        settings,
                        consts,
                        &rates,
                        derive_seed(seed, &[PURPOSE_INNER, t as u64]),
                    )?;
                    dir.flags.iter().for_each(|f| tally.add(f.clone()));
                    let next = outer_update(&b, cert.theta, &dir.mu, &steps);
                    record.step_norm = (&next - &b).norm();
                    record.inner_accepted = dir.accepted;
                    record.accepted = true;
                    b = next;
                    prev = cert.theta;
                    accepted_steps += 1;
                }
            }
            Err(e) if is_fatal(&e) => return Err(e.into()),
            Err(e) => tally.add(format!("outer-mw skipped: {e}")),
        }
        record.error = truth.map(|s| (&b - s).norm());
        record.b = b.clone();
        iterates.push(record);
    }
    if accepted_steps == 0 {
        flags.push("no outer step accepted".into());
    }
    flags.extend(tally.finish(settings.outer_rounds));
    Ok(FitResult {
        b_hat: b,
        b0: pruning.b0.clone(),
        iterates,
        accepted_steps,
        rate_bundle: rates,
        steps,
        flags,
    })
}

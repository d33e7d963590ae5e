//! Lepski selection over a geometric grid of noise scales.

use crate::model::{r1_of_zeta, r_of_zeta, ConfigError, ConstantsProfile, LabeledDataset, ProblemDims, SpectralInputs};
use crate::numerics::{balls_intersect_from, default_ball_tol};
use crate::pruning::prune;
use crate::regression::{fit_pruned, FitError, FitResult, FitSettings, NoiseLevel};
use crate::rng::{derive_seed, PURPOSE_LEVEL};
use crate::Vector;

/// Levels `ζ_ℓ = γ^ℓ ζ0` for `ℓ = 1..=M`, `M = ⌈log_{1/γ} ζ0⌉`.
#[derive(Debug, Clone, PartialEq)]
pub struct LepskiGrid {
    pub zeta0: f64,
    pub gamma: f64,
    pub levels: Vec<f64>,
}

impl LepskiGrid {
    pub fn new(zeta0: f64, gamma: f64) -> Result<Self, ConfigError> {
        if !(gamma > 0.0 && gamma < 1.0) {
            return Err(ConfigError::Invalid(format!("gamma = {gamma} is outside (0, 1)")));
        }
        if !(zeta0 > 1.0) || !zeta0.is_finite() {
            return Err(ConfigError::Invalid(format!("zeta0 = {zeta0} must exceed 1 for a nonempty grid")));
        }
        // Guard against ceil(4.000000001) for exact powers.
        let m = (zeta0.ln() / (1.0 / gamma).ln() - 1e-9).ceil().max(1.0) as usize;
        let levels = (1..=m).map(|l| gamma.powi(l as i32) * zeta0).collect();
        Ok(Self { zeta0, gamma, levels })
    }

    pub fn len(&self) -> usize {
        self.levels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.levels.is_empty()
    }
}

/// Confidence radius `R(ζ)` of a fixed-level fit with `T1` outer rounds and
/// step size `c_star`.
pub fn rate_r(
    zeta: f64,
    outer_rounds: usize,
    consts: &ConstantsProfile,
    spectral: &SpectralInputs,
    dims: &ProblemDims,
    c_star: f64,
) -> f64 {
    let (a, kappa) = (consts.a, spectral.kappa);
    let coef = 2.0 * consts.const_alpha2 / (a * kappa)
        + 2.0 * consts.e_star / a * (1.0 + 1.0 / (312.5 * kappa))
        + 5050.52;
    let first = coef * spectral.mu2 * r1_of_zeta(dims, zeta);
    let second = 3.0 * r_of_zeta(dims, spectral, zeta) * (-a * outer_rounds as f64 / (8.0 * c_star)).exp();
    first.max(second)
}

#[derive(Debug, Clone, PartialEq)]
pub struct LevelReport {
    /// 1-based level index.
    pub level: usize,
    pub zeta: f64,
    pub radius: f64,
    pub error: Option<f64>,
    /// Whether the balls of levels `1..=level` share a point. `None` past
    /// the first infeasible prefix, where the scan stops.
    pub prefix_feasible: Option<bool>,
    pub fit: FitResult,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdaptiveFit {
    pub b_hat: Vector,
    /// Selected level `ℓ̂`, 1-based.
    pub chosen: usize,
    pub levels: Vec<LevelReport>,
    pub flags: Vec<String>,
}

/// Largest prefix of balls with a common point, scanning forward and
/// warm-starting each feasibility solve from the previous witness.
/// Returns the prefix length and per-prefix verdicts.
pub fn select_level(centers: &[Vector], radii: &[f64]) -> Result<(usize, Vec<bool>), crate::numerics::NumericsError> {
    let mut verdicts = Vec::with_capacity(centers.len());
    let mut witness: Option<Vector> = None;
    let mut chosen = 0;
    for l in 1..=centers.len() {
        let tol = default_ball_tol(&radii[..l]);
        let res = balls_intersect_from(&centers[..l], &radii[..l], tol, witness.as_ref())?;
        verdicts.push(res.feasible);
        if !res.feasible {
            break;
        }
        chosen = l;
        witness = res.witness;
    }
    Ok((chosen.max(1), verdicts))
}

/// One fixed-level fit per grid point on a shared pruning pass, then Lepski
/// selection among the results.
pub fn adaptive_fit(
    dataset: &LabeledDataset,
    settings: &FitSettings,
    grid: &LepskiGrid,
    consts: &ConstantsProfile,
    spectral: &SpectralInputs,
    seed: u64,
) -> Result<AdaptiveFit, FitError> {
    let pruning = prune(dataset, settings.buckets, settings.eta)?;
    let truth = dataset.ground_truth_b.as_ref();
    let mut levels = Vec::with_capacity(grid.len());
    for (i, &zeta) in grid.levels.iter().enumerate() {
        let level = i + 1;
        let fit = fit_pruned(
            &pruning,
            settings,
            NoiseLevel::Zeta(zeta),
            consts,
            spectral,
            truth,
            derive_seed(seed, &[PURPOSE_LEVEL, level as u64]),
        )?;
        let radius = rate_r(zeta, settings.outer_rounds, consts, spectral, &pruning.dims, fit.steps.c_star);
        levels.push(LevelReport {
            level,
            zeta,
            radius,
            error: truth.map(|b| (&fit.b_hat - b).norm()),
            prefix_feasible: None,
            fit,
        });
    }
    let centers: Vec<Vector> = levels.iter().map(|l| l.fit.b_hat.clone()).collect();
    let radii: Vec<f64> = levels.iter().map(|l| l.radius).collect();
    let mut flags = Vec::new();
    let chosen = match select_level(&centers, &radii) {
        Ok((chosen, verdicts)) => {
            for (l, v) in levels.iter_mut().zip(verdicts) {
                l.prefix_feasible = Some(v);
            }
            chosen
        }
        Err(e) => {
            flags.push(format!("ball intersection failed, falling back to level 1: {e}"));
            1
        }
    };
    Ok(AdaptiveFit {
        b_hat: levels[chosen - 1].fit.b_hat.clone(),
        chosen,
        levels,
        flags,
    })
}

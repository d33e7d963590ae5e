//! Synthetic heavy-tailed samples and adversarial contamination.

use nalgebra::Cholesky;
use rand::seq::index;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal, StudentT};
use serde::{Deserialize, Serialize};

use crate::model::{LabeledDataset, ProblemDims};
use crate::numerics::bucket_least_squares;
use crate::rng::{derive_seed, stream, PURPOSE_ATTACK, PURPOSE_DATA};
use crate::{Matrix, Vector};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum DataError {
    #[error("cannot corrupt {o} rows of a {rows}-row sample")]
    TooManyOutliers { o: usize, rows: usize },
    #[error("the oracle adversary needs the ground-truth parameter")]
    MissingGroundTruth,
    #[error("covariance matrix is not symmetric positive definite")]
    NotPositiveDefinite,
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("invalid law: {0}")]
    InvalidLaw(String),
}

/// Law of the standardized feature coordinates before mixing by `Σ^{1/2}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FeatureLaw {
    Gaussian,
    /// Independent Student-t coordinates rescaled to unit variance.
    StudentT { nu: f64 },
    /// Rademacher coordinates times a radial factor equal to `lambda` with
    /// probability `prob` and `1` otherwise, renormalized to unit variance.
    /// Larger `lambda` raises the moment ratio without touching `Σ`.
    ScaledRademacherMixture { lambda: f64, prob: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseScale {
    /// `|x| / sqrt(tr Σ)`.
    Norm,
    /// `|x_1| / sqrt(Σ_11)`.
    FirstCoord,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum NoiseLaw {
    Gaussian { sigma: f64 },
    StudentT { nu: f64, sigma: f64 },
    /// `sigma * g * h(x)` with `g` standard normal independent of `x`, so
    /// `E[ξx] = 0` while `Ξ` is no longer proportional to `Σ`.
    FeatureDependent { sigma: f64, scale: NoiseScale },
}

#[derive(Debug, Clone, PartialEq)]
pub struct DistributionSpec {
    pub feature_law: FeatureLaw,
    pub noise_law: NoiseLaw,
    pub sigma_matrix: Matrix,
    /// Moment-equivalence constant; recorded for the rate formulas only.
    pub hyper_l: f64,
}

impl DistributionSpec {
    pub fn gaussian(p: usize, sigma: f64) -> Self {
        Self {
            feature_law: FeatureLaw::Gaussian,
            noise_law: NoiseLaw::Gaussian { sigma },
            sigma_matrix: Matrix::identity(p, p),
            hyper_l: 3f64.powf(0.25),
        }
    }

    pub fn dim(&self) -> usize {
        self.sigma_matrix.nrows()
    }

    pub fn validate(&self) -> Result<(), DataError> {
        let s = &self.sigma_matrix;
        if s.nrows() != s.ncols() || (s - s.transpose()).norm() > 1e-12 * s.norm().max(1.0) {
            return Err(DataError::NotPositiveDefinite);
        }
        Cholesky::new(s.clone()).ok_or(DataError::NotPositiveDefinite)?;
        match self.feature_law {
            FeatureLaw::StudentT { nu } if !(nu > 4.0) => {
                return Err(DataError::InvalidLaw(format!("feature t law needs nu > 4, got {nu}")))
            }
            FeatureLaw::ScaledRademacherMixture { lambda, prob }
                if !(lambda > 0.0) || !(0.0..=1.0).contains(&prob) =>
            {
                return Err(DataError::InvalidLaw(format!("mixture lambda={lambda} prob={prob}")))
            }
            _ => {}
        }
        match self.noise_law {
            NoiseLaw::StudentT { nu, .. } if !(nu > 4.0) => {
                Err(DataError::InvalidLaw(format!("noise t law needs nu > 4, got {nu}")))
            }
            NoiseLaw::Gaussian { sigma }
            | NoiseLaw::StudentT { sigma, .. }
            | NoiseLaw::FeatureDependent { sigma, .. }
                if !(sigma >= 0.0) =>
            {
                Err(DataError::InvalidLaw(format!("noise scale {sigma}")))
            }
            _ => Ok(()),
        }
    }

    fn noise_sigma(&self) -> f64 {
        match self.noise_law {
            NoiseLaw::Gaussian { sigma }
            | NoiseLaw::StudentT { sigma, .. }
            | NoiseLaw::FeatureDependent { sigma, .. } => sigma,
        }
    }

    /// `Ξ = E[ξ² x xᵀ]`: closed form when the noise is independent of `x`,
    /// otherwise a seeded Monte-Carlo average over `draws` samples.
    pub fn noise_covariance(&self, draws: usize, seed: u64) -> Result<Matrix, DataError> {
        self.validate()?;
        let sigma = self.noise_sigma();
        match self.noise_law {
            NoiseLaw::Gaussian { .. } | NoiseLaw::StudentT { .. } => Ok(&self.sigma_matrix * (sigma * sigma)),
            NoiseLaw::FeatureDependent { .. } => {
                let mut sampler = Sampler::new(self)?;
                let mut rng = stream(derive_seed(seed, &[PURPOSE_DATA, 1]));
                let p = self.dim();
                let mut acc = Matrix::zeros(p, p);
                for _ in 0..draws {
                    let x = sampler.features(&mut rng);
                    let xi = sampler.noise(&mut rng, &x);
                    acc.ger(xi * xi, &x, &x, 1.0);
                }
                Ok(acc / draws as f64)
            }
        }
    }
}

struct Sampler<'a> {
    spec: &'a DistributionSpec,
    root: Matrix,
    t_feature: Option<StudentT<f64>>,
    t_noise: Option<StudentT<f64>>,
    trace: f64,
}

impl<'a> Sampler<'a> {
    fn new(spec: &'a DistributionSpec) -> Result<Self, DataError> {
        let chol = Cholesky::new(spec.sigma_matrix.clone()).ok_or(DataError::NotPositiveDefinite)?;
        let t = |nu: f64| StudentT::new(nu).map_err(|e| DataError::InvalidLaw(e.to_string()));
        Ok(Self {
            spec,
            root: chol.l(),
            t_feature: match spec.feature_law {
                FeatureLaw::StudentT { nu } => Some(t(nu)?),
                _ => None,
            },
            t_noise: match spec.noise_law {
                NoiseLaw::StudentT { nu, .. } => Some(t(nu)?),
                _ => None,
            },
            trace: spec.sigma_matrix.trace(),
        })
    }

    fn features<R: Rng>(&mut self, rng: &mut R) -> Vector {
        let p = self.spec.dim();
        let base = match self.spec.feature_law {
            FeatureLaw::Gaussian => Vector::from_iterator(p, (0..p).map(|_| rng.sample::<f64, _>(StandardNormal))),
            FeatureLaw::StudentT { nu } => {
                let law = self.t_feature.as_ref().expect("t law built");
                let scale = ((nu - 2.0) / nu).sqrt();
                Vector::from_iterator(p, (0..p).map(|_| scale * law.sample(rng)))
            }
            FeatureLaw::ScaledRademacherMixture { lambda, prob } => {
                let norm = (prob * lambda * lambda + 1.0 - prob).sqrt();
                let s = if rng.random::<f64>() < prob { lambda } else { 1.0 } / norm;
                Vector::from_iterator(p, (0..p).map(|_| if rng.random::<bool>() { s } else { -s }))
            }
        };
        &self.root * base
    }

    fn noise<R: Rng>(&mut self, rng: &mut R, x: &Vector) -> f64 {
        match self.spec.noise_law {
            NoiseLaw::Gaussian { sigma } => sigma * rng.sample::<f64, _>(StandardNormal),
            NoiseLaw::StudentT { nu, sigma } => {
                let law = self.t_noise.as_ref().expect("t law built");
                sigma * ((nu - 2.0) / nu).sqrt() * law.sample(rng)
            }
            NoiseLaw::FeatureDependent { sigma, scale } => {
                let h = match scale {
                    NoiseScale::Norm => x.norm() / self.trace.sqrt(),
                    NoiseScale::FirstCoord => x[0].abs() / self.spec.sigma_matrix[(0, 0)].sqrt(),
                };
                sigma * h * rng.sample::<f64, _>(StandardNormal)
            }
        }
    }
}

/// `2n` iid rows `y = <x, b*> + ξ`, generated sequentially from one stream.
pub fn generate_clean(
    dims: &ProblemDims,
    dist: &DistributionSpec,
    b_star: &Vector,
    seed: u64,
) -> Result<LabeledDataset, DataError> {
    dist.validate()?;
    if dist.dim() != dims.p {
        return Err(DataError::DimensionMismatch {
            expected: dims.p,
            got: dist.dim(),
        });
    }
    if b_star.len() != dims.p {
        return Err(DataError::DimensionMismatch {
            expected: dims.p,
            got: b_star.len(),
        });
    }
    let rows = dims.rows();
    let mut sampler = Sampler::new(dist)?;
    let mut rng = stream(derive_seed(seed, &[PURPOSE_DATA]));
    let mut features = Matrix::zeros(rows, dims.p);
    let mut labels = Vector::zeros(rows);
    for r in 0..rows {
        let x = sampler.features(&mut rng);
        let xi = sampler.noise(&mut rng, &x);
        labels[r] = x.dot(b_star) + xi;
        features.set_row(r, &x.transpose());
    }
    Ok(LabeledDataset {
        labels,
        features,
        corrupted_mask: Some(vec![false; rows]),
        ground_truth_b: Some(b_star.clone()),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ContaminationKind {
    LabelFlipLarge,
    FeatureBlowup,
    OracleAdaptive,
    ClusterAtPoint,
}

impl std::str::FromStr for ContaminationKind {
    type Err = DataError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "label_flip_large" => Ok(Self::LabelFlipLarge),
            "feature_blowup" => Ok(Self::FeatureBlowup),
            "oracle_adaptive" => Ok(Self::OracleAdaptive),
            "cluster_at_point" => Ok(Self::ClusterAtPoint),
            other => Err(DataError::InvalidLaw(format!("unknown contamination {other:?}"))),
        }
    }
}

impl std::fmt::Display for ContaminationKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::LabelFlipLarge => "label_flip_large",
            Self::FeatureBlowup => "feature_blowup",
            Self::OracleAdaptive => "oracle_adaptive",
            Self::ClusterAtPoint => "cluster_at_point",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ContaminationStrategy {
    pub kind: ContaminationKind,
    pub magnitude: f64,
    /// Cluster location or decoy parameter, depending on `kind`.
    /// Defaults: the all-ones point, resp. `b* + 1`.
    pub target: Option<Vector>,
}

impl ContaminationStrategy {
    pub fn new(kind: ContaminationKind, magnitude: f64) -> Self {
        Self {
            kind,
            magnitude,
            target: None,
        }
    }
}

/// Replaces exactly `o` rows. Rows are drawn uniformly without replacement,
/// except for the oracle adversary, which takes the rows with the largest
/// `|<x, b_dec - b*>|`.
pub fn contaminate(
    clean: &LabeledDataset,
    strategy: &ContaminationStrategy,
    o: usize,
    seed: u64,
) -> Result<LabeledDataset, DataError> {
    let rows = clean.len();
    if o > rows {
        return Err(DataError::TooManyOutliers { o, rows });
    }
    let mut out = clean.clone();
    if o == 0 {
        return Ok(out);
    }
    let p = clean.dim();
    if let Some(t) = &strategy.target {
        if t.len() != p {
            return Err(DataError::DimensionMismatch { expected: p, got: t.len() });
        }
    }
    let mag = strategy.magnitude;
    let decoy_shift = if strategy.kind == ContaminationKind::OracleAdaptive {
        let b_star = clean.ground_truth_b.as_ref().ok_or(DataError::MissingGroundTruth)?;
        let decoy = strategy
            .target
            .clone()
            .unwrap_or_else(|| b_star.add_scalar(1.0));
        Some(decoy - b_star)
    } else {
        None
    };
    let chosen: Vec<usize> = match &decoy_shift {
        Some(shift) => {
            let leverage: Vec<f64> = (0..rows)
                .map(|r| clean.features.row(r).transpose().dot(shift).abs())
                .collect();
            let mut order: Vec<usize> = (0..rows).collect();
            order.sort_by(|&a, &b| leverage[b].total_cmp(&leverage[a]).then(a.cmp(&b)));
            order.truncate(o);
            order
        }
        None => {
            let mut rng = stream(derive_seed(seed, &[PURPOSE_ATTACK]));
            index::sample(&mut rng, rows, o).into_vec()
        }
    };
    let point = strategy.target.clone().unwrap_or_else(|| Vector::from_element(p, 1.0));
    for &r in &chosen {
        match strategy.kind {
            ContaminationKind::LabelFlipLarge => {
                let y = out.labels[r];
                let sign = if y < 0.0 { -1.0 } else { 1.0 };
                out.labels[r] = -(y.abs() + mag) * sign;
            }
            ContaminationKind::FeatureBlowup => {
                let x = out.features.row(r).transpose();
                let norm = x.norm();
                let x = if norm > 0.0 { x * (mag / norm) } else { Vector::from_element(p, mag / (p as f64).sqrt()) };
                out.features.set_row(r, &x.transpose());
            }
            ContaminationKind::OracleAdaptive => {
                let shift = decoy_shift.as_ref().expect("decoy computed");
                let x = out.features.row(r).transpose();
                out.labels[r] += mag * x.dot(shift);
            }
            ContaminationKind::ClusterAtPoint => {
                out.features.set_row(r, &point.transpose());
                out.labels[r] = mag;
            }
        }
    }
    let mut mask = clean.corrupted_mask.clone().unwrap_or_else(|| vec![false; rows]);
    for &r in &chosen {
        mask[r] = true;
    }
    out.corrupted_mask = Some(mask);
    Ok(out)
}

/// Ordinary least squares on every row.
pub fn ols(data: &LabeledDataset) -> Vector {
    bucket_least_squares(&data.features, &data.labels)
}

/// Least squares on the rows the mask marks as clean.
pub fn oracle_ols(data: &LabeledDataset) -> Vector {
    match &data.corrupted_mask {
        Some(mask) => {
            let rows: Vec<usize> = (0..data.len()).filter(|&r| !mask[r]).collect();
            ols(&data.select_rows(&rows))
        }
        None => ols(data),
    }
}

/// Largest ratio `(mean <x,v>^4)^{1/4} / (mean <x,v>^2)^{1/2}` over the given directions.
pub fn empirical_moment_ratio(features: &Matrix, directions: &[Vector]) -> f64 {
    let n = features.nrows() as f64;
    directions
        .iter()
        .map(|v| {
            let proj = features * v;
            let m2 = proj.iter().map(|t| t * t).sum::<f64>() / n;
            let m4 = proj.iter().map(|t| t.powi(4)).sum::<f64>() / n;
            m4.powf(0.25) / m2.sqrt()
        })
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::sample_unit_sphere;

    fn dims(n: usize, p: usize) -> ProblemDims {
        ProblemDims::new(n, p, 10, 0.2, 0.05).unwrap()
    }

    #[test]
    fn noiseless_residuals_vanish() {
        let d = dims(200, 3);
        let b = Vector::from_vec(vec![1.0, -1.0, 2.0]);
        for law in [
            FeatureLaw::Gaussian,
            FeatureLaw::StudentT { nu: 6.0 },
            FeatureLaw::ScaledRademacherMixture { lambda: 4.0, prob: 0.1 },
        ] {
            let mut spec = DistributionSpec::gaussian(3, 0.0);
            spec.feature_law = law;
            let data = generate_clean(&d, &spec, &b, 1).unwrap();
            assert!((0..data.len()).all(|r| data.residual(r, &b) == 0.0));
        }
    }

    #[test]
    fn gaussian_covariance_close_to_identity() {
        let d = ProblemDims::new(20_000, 4, 10, 0.2, 0.0).unwrap();
        let data = generate_clean(&d, &DistributionSpec::gaussian(4, 1.0), &Vector::zeros(4), 2).unwrap();
        let rows = data.len() as f64;
        let cov = data.features.tr_mul(&data.features) / rows;
        let err = (cov - Matrix::identity(4, 4)).svd(false, false).singular_values.max();
        assert!(err < 3.0 * (4.0 / rows).sqrt(), "{err}");
    }

    #[test]
    fn student_features_have_bounded_moment_ratio() {
        let d = ProblemDims::new(500_000, 3, 10, 0.2, 0.0).unwrap();
        let mut spec = DistributionSpec::gaussian(3, 0.0);
        spec.feature_law = FeatureLaw::StudentT { nu: 5.0 };
        let data = generate_clean(&d, &spec, &Vector::zeros(3), 3).unwrap();
        let ratio = empirical_moment_ratio(&data.features, &sample_unit_sphere(3, 20, 4));
        // Kurtosis of t_5 is 9, so each coordinate has ratio 9^{1/4} ≈ 1.73.
        assert!(ratio > 1.0 && ratio < 2.0, "{ratio}");
    }

    #[test]
    fn heavy_laws_rejected() {
        let mut spec = DistributionSpec::gaussian(2, 1.0);
        spec.feature_law = FeatureLaw::StudentT { nu: 4.0 };
        assert!(matches!(spec.validate(), Err(DataError::InvalidLaw(_))));
        let mut spec = DistributionSpec::gaussian(2, 1.0);
        spec.noise_law = NoiseLaw::StudentT { nu: 3.0, sigma: 1.0 };
        assert!(spec.validate().is_err());
        let mut spec = DistributionSpec::gaussian(2, 1.0);
        spec.sigma_matrix[(0, 0)] = -1.0;
        assert_eq!(spec.validate(), Err(DataError::NotPositiveDefinite));
    }

    #[test]
    fn seeded_reproducibility() {
        let d = dims(100, 2);
        let spec = DistributionSpec::gaussian(2, 1.0);
        let b = Vector::from_vec(vec![0.5, 0.5]);
        assert_eq!(generate_clean(&d, &spec, &b, 9).unwrap(), generate_clean(&d, &spec, &b, 9).unwrap());
        assert_ne!(generate_clean(&d, &spec, &b, 9).unwrap(), generate_clean(&d, &spec, &b, 10).unwrap());
    }

    #[test]
    fn noise_uncorrelated_with_features() {
        let d = ProblemDims::new(20_000, 3, 10, 0.2, 0.0).unwrap();
        for noise in [
            NoiseLaw::Gaussian { sigma: 1.0 },
            NoiseLaw::StudentT { nu: 5.0, sigma: 1.0 },
            NoiseLaw::FeatureDependent { sigma: 1.0, scale: NoiseScale::FirstCoord },
        ] {
            let mut spec = DistributionSpec::gaussian(3, 1.0);
            spec.noise_law = noise;
            let data = generate_clean(&d, &spec, &Vector::zeros(3), 5).unwrap();
            let rows = data.len() as f64;
            let cross = data.features.tr_mul(&data.labels) / rows;
            assert!(cross.norm() < 4.0 * (3.0 * 3.0 / rows).sqrt(), "{noise:?}: {}", cross.norm());
        }
    }

    #[test]
    fn feature_dependent_covariance() {
        // Gaussian x, h = |x_1|: Ξ = Σ + 2 e1 e1ᵀ for Σ = I.
        let mut spec = DistributionSpec::gaussian(2, 1.0);
        spec.noise_law = NoiseLaw::FeatureDependent { sigma: 1.0, scale: NoiseScale::FirstCoord };
        let xi = spec.noise_covariance(200_000, 1).unwrap();
        assert!((xi[(0, 0)] - 3.0).abs() < 0.1 && (xi[(1, 1)] - 1.0).abs() < 0.05, "{xi}");
        let xi = DistributionSpec::gaussian(2, 2.0).noise_covariance(1, 1).unwrap();
        assert_eq!(xi, Matrix::identity(2, 2) * 4.0);
    }

    fn clean(seed: u64) -> LabeledDataset {
        let d = dims(500, 3);
        generate_clean(&d, &DistributionSpec::gaussian(3, 1.0), &Vector::from_vec(vec![1.0, 2.0, 3.0]), seed).unwrap()
    }

    #[test]
    fn zero_outliers_is_identity() {
        let c = clean(1);
        let s = ContaminationStrategy::new(ContaminationKind::ClusterAtPoint, 1e6);
        assert_eq!(contaminate(&c, &s, 0, 3).unwrap(), c);
    }

    #[test]
    fn exact_count_for_every_kind() {
        let c = clean(2);
        for kind in [
            ContaminationKind::LabelFlipLarge,
            ContaminationKind::FeatureBlowup,
            ContaminationKind::OracleAdaptive,
            ContaminationKind::ClusterAtPoint,
        ] {
            let out = contaminate(&c, &ContaminationStrategy::new(kind, 100.0), 37, 4).unwrap();
            assert_eq!(out.corrupted_count(), 37, "{kind}");
            let mask = out.corrupted_mask.as_ref().unwrap();
            for r in 0..c.len() {
                if !mask[r] {
                    assert_eq!(out.labels[r], c.labels[r]);
                    assert_eq!(out.features.row(r), c.features.row(r));
                }
            }
        }
        assert!(matches!(
            contaminate(&c, &ContaminationStrategy::new(ContaminationKind::ClusterAtPoint, 1.0), 1001, 1),
            Err(DataError::TooManyOutliers { .. })
        ));
    }

    #[test]
    fn cluster_rows_have_huge_residuals() {
        let c = clean(3);
        let b = c.ground_truth_b.clone().unwrap();
        let out = contaminate(&c, &ContaminationStrategy::new(ContaminationKind::ClusterAtPoint, 1e6), 25, 5).unwrap();
        let mask = out.corrupted_mask.as_ref().unwrap();
        for r in (0..out.len()).filter(|&r| mask[r]) {
            assert!(out.residual(r, &b).abs() > 1e5);
        }
    }

    #[test]
    fn oracle_adversary_pulls_ols_toward_decoy() {
        let mut wins = 0;
        for seed in 0..20 {
            let c = clean(100 + seed);
            let b_star = c.ground_truth_b.clone().unwrap();
            let decoy = Vector::from_vec(vec![-3.0, 0.0, 5.0]);
            let strategy = ContaminationStrategy {
                kind: ContaminationKind::OracleAdaptive,
                magnitude: 1.0,
                target: Some(decoy.clone()),
            };
            let out = contaminate(&c, &strategy, 50, seed).unwrap();
            assert!((ols(&c) - &b_star).norm() < 1.0);
            if (ols(&out) - &decoy).norm() < (ols(&c) - &decoy).norm() {
                wins += 1;
            }
        }
        assert_eq!(wins, 20);
    }

    #[test]
    fn oracle_adversary_needs_truth() {
        let mut c = clean(4);
        c.ground_truth_b = None;
        let s = ContaminationStrategy::new(ContaminationKind::OracleAdaptive, 1.0);
        assert_eq!(contaminate(&c, &s, 3, 1), Err(DataError::MissingGroundTruth));
    }

    #[test]
    fn oracle_ols_ignores_masked_rows() {
        let c = clean(5);
        let out = contaminate(&c, &ContaminationStrategy::new(ContaminationKind::ClusterAtPoint, 1e6), 40, 6).unwrap();
        let b = c.ground_truth_b.clone().unwrap();
        assert!((oracle_ols(&out) - &b).norm() < 0.5);
        assert!((ols(&out) - &b).norm() > 10.0);
    }
}

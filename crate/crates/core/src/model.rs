//! Problem configuration, the constant table and the rate formulas.

use serde::{Deserialize, Serialize};

use crate::{Matrix, Vector};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ConfigError {
    #[error("sample half-size n = {n} is not divisible by the bucket count K = {k}")]
    NotDivisible { n: usize, k: usize },
    #[error("pruning fraction eta = {0} outside (0, 1/2]")]
    EtaOutOfRange(f64),
    #[error("contamination fraction eps = {0} outside [0, 1/2)")]
    EpsOutOfRange(f64),
    #[error("{0} must be positive")]
    NonPositive(&'static str),
    #[error("pruned sample of size {m} holds no complete bucket of size {bucket}")]
    EmptyPrunedSample { m: usize, bucket: usize },
    #[error("spectral inputs give condition number {0} < 1")]
    BadConditionNumber(f64),
    #[error("invalid configuration: {0}")]
    Invalid(String),
}

/// Sizes of one regression problem: `2n` rows split into two batches of `n`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ProblemDims {
    pub n: usize,
    pub p: usize,
    pub buckets: usize,
    pub bucket_size: usize,
    pub eta: f64,
    /// Rows kept by pruning; a multiple of `bucket_size`.
    pub m: usize,
    pub pruned_buckets: usize,
    pub eps: f64,
    pub outliers: usize,
    /// Set when `(1 - eta) n` had to be rounded down to a multiple of the bucket size.
    pub m_adjusted: bool,
}

impl ProblemDims {
    pub fn new(n: usize, p: usize, buckets: usize, eta: f64, eps: f64) -> Result<Self, ConfigError> {
        if n == 0 {
            return Err(ConfigError::NonPositive("n"));
        }
        if p == 0 {
            return Err(ConfigError::NonPositive("p"));
        }
        if buckets == 0 {
            return Err(ConfigError::NonPositive("K"));
        }
        if n % buckets != 0 {
            return Err(ConfigError::NotDivisible { n, k: buckets });
        }
        if !(eta > 0.0 && eta <= 0.5) {
            return Err(ConfigError::EtaOutOfRange(eta));
        }
        if !(0.0..0.5).contains(&eps) {
            return Err(ConfigError::EpsOutOfRange(eps));
        }
        let bucket_size = n / buckets;
        let target = ((1.0 - eta) * n as f64 + 1e-9).floor() as usize;
        let m = target / bucket_size * bucket_size;
        if m == 0 {
            return Err(ConfigError::EmptyPrunedSample {
                m: target,
                bucket: bucket_size,
            });
        }
        Ok(Self {
            n,
            p,
            buckets,
            bucket_size,
            eta,
            m,
            pruned_buckets: m / bucket_size,
            eps,
            outliers: (eps * n as f64).round() as usize,
            m_adjusted: m != target,
        })
    }

    pub fn rows(&self) -> usize {
        2 * self.n
    }
}

/// Labels and features of a `2n`-row sample.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    pub labels: Vector,
    /// One row per observation.
    pub features: Matrix,
    pub corrupted_mask: Option<Vec<bool>>,
    pub ground_truth_b: Option<Vector>,
}

impl LabeledDataset {
    pub fn new(labels: Vector, features: Matrix) -> Result<Self, ConfigError> {
        if labels.len() != features.nrows() {
            return Err(ConfigError::Invalid(format!(
                "{} labels for {} feature rows",
                labels.len(),
                features.nrows()
            )));
        }
        Ok(Self {
            labels,
            features,
            corrupted_mask: None,
            ground_truth_b: None,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.features.ncols()
    }

    pub fn corrupted_count(&self) -> usize {
        self.corrupted_mask
            .as_ref()
            .map_or(0, |m| m.iter().filter(|&&c| c).count())
    }

    /// Copy of the listed rows, carrying the mask entries and ground truth along.
    pub fn select_rows(&self, rows: &[usize]) -> Self {
        let p = self.dim();
        let features = Matrix::from_fn(rows.len(), p, |i, j| self.features[(rows[i], j)]);
        let labels = Vector::from_iterator(rows.len(), rows.iter().map(|&r| self.labels[r]));
        Self {
            labels,
            features,
            corrupted_mask: self
                .corrupted_mask
                .as_ref()
                .map(|m| rows.iter().map(|&r| m[r]).collect()),
            ground_truth_b: self.ground_truth_b.clone(),
        }
    }

    /// Residual `y - <x, b>` of one row.
    pub fn residual(&self, row: usize, b: &Vector) -> f64 {
        self.labels[row] - self.features.row(row).transpose().dot(b)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Profile {
    Paper,
    Practical,
    Custom,
}

impl std::str::FromStr for Profile {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "paper" => Ok(Profile::Paper),
            "practical" => Ok(Profile::Practical),
            "custom" => Ok(Profile::Custom),
            other => Err(ConfigError::Invalid(format!("unknown profile {other:?}"))),
        }
    }
}

/// Every named constant used by the estimator and by its rate formulas.
///
/// `const_*` fields are the capital-C constants paired with the quantile
/// levels `alpha*`; `c_alpha1` and `c_bar_alpha1` are the one-sided slack
/// fractions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConstantsProfile {
    pub alpha1: f64,
    pub alpha2: f64,
    pub alpha3: f64,
    pub alpha4: f64,
    pub c_alpha1: f64,
    pub rho: f64,
    pub a: f64,
    pub phi: f64,
    pub const_alpha1: f64,
    pub const_alpha2: f64,
    pub const_alpha3: f64,
    pub const_alpha4: f64,
    pub bar_rho: f64,
    pub bar_alpha1: f64,
    pub bar_alpha2: f64,
    pub bar_alpha4: f64,
    pub c_bar_alpha1: f64,
    pub bar_a: f64,
    pub const_bar_alpha1: f64,
    pub const_bar_alpha2: f64,
    /// Not fixed numerically by the analysis; defaults to `const_alpha4`.
    pub const_bar_alpha4: f64,
    pub bar_c_star: f64,
    pub bar_delta0: f64,
    pub big_c_star: f64,
    pub d_star: f64,
    pub e_star: f64,
    /// Absolute constant in `r_{n,K}` and `r2`.
    pub abs_c: f64,
    /// Multiplier of `bar_r1` in the inner-loop accuracy `Delta`.
    pub delta_coef: f64,
}

impl ConstantsProfile {
    pub fn paper() -> Self {
        let const_alpha1 = 2525.26;
        let const_alpha2 = 192.4;
        let d_star = 1.0 / 625.0;
        Self {
            alpha1: 1.0 / 96.0,
            alpha2: 0.08,
            alpha3: 0.239,
            alpha4: 1.0 / 144.0,
            c_alpha1: 0.25,
            rho: 1.0 / 36.0,
            a: 0.0128,
            phi: 0.49 * std::f64::consts::PI,
            const_alpha1,
            const_alpha2,
            const_alpha3: 51.9,
            const_alpha4: 4330.0,
            bar_rho: 1.0 / 24.0,
            bar_alpha1: 1.0 / 64.0,
            bar_alpha2: 1.0 / 8.0,
            bar_alpha4: 1.0 / 96.0,
            c_bar_alpha1: 0.25,
            bar_a: 0.0128,
            const_bar_alpha1: 1666.68,
            const_bar_alpha2: 110.0,
            const_bar_alpha4: 4330.0,
            bar_c_star: 1.045752e-6,
            bar_delta0: 1.093597e-12,
            big_c_star: 8e5,
            d_star,
            e_star: (const_alpha1 + const_alpha2) / d_star,
            abs_c: 1.0,
            delta_coef: 263876.1,
        }
    }

    /// Desk-scale constants: the exact worst-case values make the iteration
    /// counts astronomically large.
    pub fn practical() -> Self {
        let mut c = Self::paper();
        c.a = 0.5;
        c.bar_a = 0.5;
        c.bar_delta0 = 0.05;
        c.bar_c_star = 0.1;
        c.const_alpha1 = 10.0;
        c.const_alpha2 = 10.0;
        c.const_alpha3 = 10.0;
        c.const_alpha4 = 10.0;
        c.const_bar_alpha1 = 10.0;
        c.const_bar_alpha2 = 10.0;
        c.const_bar_alpha4 = 10.0;
        c.e_star = (c.const_alpha1 + c.const_alpha2) / c.d_star;
        c.delta_coef = 0.01;
        c
    }

    pub fn for_profile(profile: Profile) -> Self {
        match profile {
            Profile::Paper | Profile::Custom => Self::paper(),
            Profile::Practical => Self::practical(),
        }
    }

    /// `(label, alpha, C_alpha)` for every quantile level that carries a
    /// capital-C companion.
    pub fn alpha_pairs(&self) -> [(&'static str, f64, f64); 7] {
        [
            ("alpha1", self.alpha1, self.const_alpha1),
            ("alpha2", self.alpha2, self.const_alpha2),
            ("alpha3", self.alpha3, self.const_alpha3),
            ("alpha4", self.alpha4, self.const_alpha4),
            ("bar_alpha1", self.bar_alpha1, self.const_bar_alpha1),
            ("bar_alpha2", self.bar_alpha2, self.const_bar_alpha2),
            ("bar_alpha4", self.bar_alpha4, self.const_bar_alpha4),
        ]
    }

    /// Labels of the pairs violating `28/(4C) + 4/C^2 + sqrt(2)/C^(2/3) <= alpha`.
    pub fn violated_alpha_pairs(&self) -> Vec<&'static str> {
        self.alpha_pairs()
            .into_iter()
            .filter(|&(_, alpha, c)| alpha_constraint(c) > alpha)
            .map(|(name, _, _)| name)
            .collect()
    }

    /// Two-sided slack `k = ceil(4 alpha1 K')` for the outer loop.
    pub fn outer_slack(&self, pruned_buckets: usize) -> usize {
        ceil_count(4.0 * self.alpha1 * pruned_buckets as f64)
    }

    pub fn outer_one_sided_slack(&self, pruned_buckets: usize) -> usize {
        ceil_count(self.c_alpha1 * pruned_buckets as f64)
    }

    pub fn inner_slack(&self, pruned_buckets: usize) -> usize {
        ceil_count(4.0 * self.bar_alpha1 * pruned_buckets as f64)
    }

    pub fn inner_one_sided_slack(&self, pruned_buckets: usize) -> usize {
        ceil_count(self.c_bar_alpha1 * pruned_buckets as f64)
    }
}

fn ceil_count(x: f64) -> usize {
    (x - 1e-9).ceil().max(1.0) as usize
}

/// Left-hand side of the constraint tying a quantile level to its constant.
pub fn alpha_constraint(c: f64) -> f64 {
    28.0 / (4.0 * c) + 4.0 / (c * c) + std::f64::consts::SQRT_2 / c.powf(2.0 / 3.0)
}

/// The two spectral quantities the estimator takes as known inputs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SpectralInputs {
    /// Inverse of the smallest eigenvalue of `Σ`.
    pub mu2: f64,
    /// Operator norm of `Σ`.
    pub sigma_op: f64,
    pub kappa: f64,
}

impl SpectralInputs {
    pub fn new(mu2: f64, sigma_op: f64) -> Result<Self, ConfigError> {
        if !(mu2 > 0.0) {
            return Err(ConfigError::NonPositive("mu2"));
        }
        if !(sigma_op > 0.0) {
            return Err(ConfigError::NonPositive("sigma_op"));
        }
        let kappa = mu2 * sigma_op;
        if kappa < 1.0 - 1e-12 {
            return Err(ConfigError::BadConditionNumber(kappa));
        }
        Ok(Self {
            mu2,
            sigma_op,
            kappa: kappa.max(1.0),
        })
    }

    pub fn identity() -> Self {
        Self {
            mu2: 1.0,
            sigma_op: 1.0,
            kappa: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum Condition {
    /// Bucket count dominates the outlier count.
    BucketsVsOutliers,
    /// Pruning removes at least four times the contamination.
    PruningVsContamination,
    /// Empirical-process deviation is small.
    EmpiricalDeviation,
    /// Quadratic-process deviation is small.
    QuadraticDeviation,
    /// Outer step size regime.
    OuterRegime,
    /// Inner-loop accuracy below `a / 16`.
    InnerAccuracy,
    /// A quantile level and its constant satisfy the deviation constraint.
    ConstantPairs,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConditionWarning {
    pub condition: Condition,
    pub detail: String,
}

/// A configuration that passed structural validation, with the list of
/// analytical preconditions it violates.
#[derive(Debug, Clone, PartialEq)]
pub struct CheckedConfig {
    pub dims: ProblemDims,
    pub consts: ConstantsProfile,
    pub spectral: SpectralInputs,
    pub warnings: Vec<ConditionWarning>,
}

impl CheckedConfig {
    pub fn holds(&self, condition: Condition) -> bool {
        !self.warnings.iter().any(|w| w.condition == condition)
    }

    /// Adds the rate-dependent conditions, which need `L` and `T2`.
    pub fn check_rate_conditions(&mut self, rates: &RateBundle, hyper_l: f64, inner_rounds: usize) {
        let d = self.dims;
        let c = self.consts;
        let (n, p, k) = (d.n as f64, d.p as f64, d.buckets as f64);
        let l2 = hyper_l * hyper_l;

        let empirical = l2 * (7.0 * (k * 24f64.ln() / n).sqrt() + 4.0 * (p / n).sqrt());
        if empirical > 0.5 {
            self.warn(
                Condition::EmpiricalDeviation,
                format!("L^2 (7 sqrt(K log 24 / n) + 4 sqrt(p / n)) = {empirical:.4} > 1/2"),
            );
        }
        let quadratic = c.const_alpha3 * rates.r_nk
            + 2.0 * l2 * (c.abs_c * c.const_alpha3 * p_log_p(d.p) / n).sqrt();
        if quadratic > 0.5 {
            self.warn(
                Condition::QuadraticDeviation,
                format!("C_a3 r_nK + 2 L^2 sqrt(C C_a3 p log p / n) = {quadratic:.4} > 1/2"),
            );
        }
        let regime = self.spectral.mu2 * self.spectral.sigma_op * rates.r2;
        let regime_cap = 1.0 / (312.5 * c.const_alpha4);
        if regime > regime_cap {
            self.warn(
                Condition::OuterRegime,
                format!("mu2 |Sigma| r2 = {regime:.4e} > {regime_cap:.4e}"),
            );
        }
        let delta = inner_accuracy(&c, &self.spectral, rates, inner_rounds);
        if delta > c.a / 16.0 {
            self.warn(
                Condition::InnerAccuracy,
                format!("Delta = {delta:.4e} > a / 16 = {:.4e}", c.a / 16.0),
            );
        }
    }

    fn warn(&mut self, condition: Condition, detail: String) {
        self.warnings.push(ConditionWarning { condition, detail });
    }
}

/// Structural validation plus the sample-size conditions that need no rates.
pub fn validate_config(
    dims: ProblemDims,
    consts: ConstantsProfile,
    spectral: SpectralInputs,
) -> Result<CheckedConfig, ConfigError> {
    if dims.n % dims.buckets != 0 {
        return Err(ConfigError::NotDivisible {
            n: dims.n,
            k: dims.buckets,
        });
    }
    if !(dims.eta > 0.0 && dims.eta <= 0.5) {
        return Err(ConfigError::EtaOutOfRange(dims.eta));
    }
    let mut checked = CheckedConfig {
        dims,
        consts,
        spectral,
        warnings: Vec::new(),
    };
    let factor = [
        4.0,
        1.0 / consts.alpha1.max(consts.alpha2),
        1.0 / consts.alpha3,
        1.0 / consts.alpha4,
        1.0 / consts.bar_alpha4,
    ]
    .into_iter()
    .fold(0.0, f64::max);
    let needed = factor * dims.outliers as f64;
    if dims.buckets as f64 <= needed {
        checked.warn(
            Condition::BucketsVsOutliers,
            format!(
                "K > {factor:.1} o fails ({} <= {needed:.1})",
                dims.buckets
            ),
        );
    }
    if dims.eta < 4.0 * dims.eps - 1e-12 {
        checked.warn(
            Condition::PruningVsContamination,
            format!("eta = {} < 4 eps = {}", dims.eta, 4.0 * dims.eps),
        );
    }
    for name in consts.violated_alpha_pairs() {
        checked.warnings.push(ConditionWarning {
            condition: Condition::ConstantPairs,
            detail: format!("constant paired with {name} violates its quantile constraint"),
        });
    }
    Ok(checked)
}

/// Rates evaluated for one configuration and noise scale `zeta`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RateBundle {
    pub zeta: f64,
    pub r_nk: f64,
    pub r1: f64,
    pub r2: f64,
    pub bar_r1: f64,
    pub bar_r2: f64,
    pub r_init: f64,
    pub c_rho: f64,
    pub c_bar_rho: f64,
}

fn p_log_p(p: usize) -> f64 {
    let p = p as f64;
    p * p.ln()
}

/// `1 + sqrt(2 / rho)`.
pub fn product_process_constant(rho: f64) -> f64 {
    1.0 + (2.0 / rho).sqrt()
}

pub fn compute_rates(
    dims: &ProblemDims,
    consts: &ConstantsProfile,
    spectral: &SpectralInputs,
    zeta: f64,
    hyper_l: f64,
) -> Result<RateBundle, ConfigError> {
    if !(zeta > 0.0) {
        return Err(ConfigError::NonPositive("zeta"));
    }
    if !(hyper_l > 0.0) {
        return Err(ConfigError::NonPositive("L"));
    }
    let n = dims.n as f64;
    let k = dims.buckets as f64;
    let l2 = hyper_l * hyper_l;
    let plogp = p_log_p(dims.p);
    let c = consts.abs_c;

    let r_nk = (c * l2 * (plogp / n).sqrt()).max(l2 * (k / n).sqrt());
    let c_rho = product_process_constant(consts.rho);
    let c_bar_rho = product_process_constant(consts.bar_rho);
    let second = |c_a: f64, c_r: f64| {
        2.0 * c_a * r_nk + c * c_a * c_r * plogp / (2.0 * n) + 2.0 * l2 * (c * c_a * plogp / (2.0 * n)).sqrt()
    };
    let r2 = second(consts.const_alpha4, c_rho);
    let bar_r2 = second(consts.const_bar_alpha4, c_bar_rho);
    Ok(RateBundle {
        zeta,
        r_nk,
        r1: r1_of_zeta(dims, zeta),
        r2,
        bar_r1: spectral.sigma_op * bar_r2,
        bar_r2,
        r_init: r_of_zeta(dims, spectral, zeta),
        c_rho,
        c_bar_rho,
    })
}

/// `(2 sqrt(p/n) ∨ sqrt(K/n)) sqrt(zeta)`.
pub fn r1_of_zeta(dims: &ProblemDims, zeta: f64) -> f64 {
    let n = dims.n as f64;
    (2.0 * (dims.p as f64 / n).sqrt()).max((dims.buckets as f64 / n).sqrt()) * zeta.sqrt()
}

/// `2 mu2 sqrt(12 p K / n) sqrt(zeta)`.
pub fn r_of_zeta(dims: &ProblemDims, spectral: &SpectralInputs, zeta: f64) -> f64 {
    let n = dims.n as f64;
    2.0 * spectral.mu2 * (12.0 * (dims.p * dims.buckets) as f64 / n).sqrt() * zeta.sqrt()
}

/// `r1` when the noise covariance `Ξ` is known: `2 sqrt(tr Ξ / n) ∨ sqrt(|Ξ| K / n)`.
pub fn r1_known_noise(dims: &ProblemDims, xi_trace: f64, xi_op: f64) -> f64 {
    let n = dims.n as f64;
    (2.0 * (xi_trace / n).sqrt()).max((xi_op * dims.buckets as f64 / n).sqrt())
}

/// Initialization radius `2 mu2 sqrt(12 (K/n) tr Ξ)`.
pub fn init_radius(dims: &ProblemDims, spectral: &SpectralInputs, xi_trace: f64) -> f64 {
    2.0 * spectral.mu2 * (12.0 * dims.buckets as f64 / dims.n as f64 * xi_trace).sqrt()
}

/// Accuracy of the inner direction estimate, `delta_coef bar_r1 ∨ (1+κ)^2 exp(-T2 bar_delta0)`.
pub fn inner_accuracy(
    consts: &ConstantsProfile,
    spectral: &SpectralInputs,
    rates: &RateBundle,
    inner_rounds: usize,
) -> f64 {
    let kappa = spectral.kappa;
    (consts.delta_coef * rates.bar_r1)
        .max((1.0 + kappa).powi(2) * (-(inner_rounds as f64) * consts.bar_delta0).exp())
}

/// Outer step size `a / (8 (2 + C_a4) κ^2 (κ^2 + Δ^2))`.
pub fn outer_step_size(consts: &ConstantsProfile, spectral: &SpectralInputs, delta: f64) -> f64 {
    let k2 = spectral.kappa * spectral.kappa;
    consts.a / (8.0 * (2.0 + consts.const_alpha4) * k2 * (k2 + delta * delta))
}

/// Success-probability margin of spherical rounding,
/// `(2φ/π)(1 - 2k/K') - (1 - k'/K')`.
pub fn rounding_margin(phi: f64, slack: usize, one_sided: usize, buckets: usize) -> f64 {
    let kk = buckets as f64;
    2.0 * phi / std::f64::consts::PI * (1.0 - 2.0 * slack as f64 / kk) - (1.0 - one_sided as f64 / kk)
}

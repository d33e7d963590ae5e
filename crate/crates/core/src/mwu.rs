//! Multiplicative weights over bucket points and spherical rounding of the
//! averaged direction matrix into a margin certificate.

use nalgebra::SymmetricEigen;

use crate::numerics::{
    kl_project_capped_simplex, sample_unit_sphere, select_in_place, top_eigenvector, NumericsError, Rank,
    DEFAULT_EIG_MAX_ITER, DEFAULT_EIG_TOL,
};
use crate::rng::{derive_seed, PURPOSE_EIGEN};
use crate::{Matrix, Vector};

pub const DEFAULT_MAX_ROUNDS: usize = 100_000;
pub const TRUNCATED_FLAG: &str = "budget-truncated";
pub const RAISED_FLAG: &str = "rounds-raised-to-minimum";

#[derive(Debug, Clone, thiserror::Error)]
pub enum MwError {
    #[error("slack k = {slack} needs 0 < 2k < K' = {buckets}")]
    InvalidSlack { slack: usize, buckets: usize },
    #[error("one-sided slack k' = {one_sided} leaves no certified points among K' = {buckets} (k = {slack})")]
    DegenerateCertificate { slack: usize, one_sided: usize, buckets: usize },
    #[error("margin lower bound must be positive, got {0}")]
    NonPositiveMargin(f64),
    #[error("radius must be positive, got {0}")]
    NonPositiveRadius(f64),
    #[error("rounding needs at least one sphere sample")]
    NoSamples,
    #[error("round count floor(40 U (1 - 2k/K') / r^2) is zero and no minimum is set")]
    NoRounds,
    #[error("U = {bound:.6e} is below max |z|^2 = {max_norm:.6e}")]
    BoundTooSmall { bound: f64, max_norm: f64 },
    #[error("weight factor {factor:.6e} < 0 at index {index}: U is stale for radius > 1")]
    NegativeFactor { index: usize, factor: f64 },
    #[error(transparent)]
    Numerics(#[from] NumericsError),
}

impl MwError {
    /// Errors caused by the arguments rather than by the iteration.
    pub fn is_input_error(&self) -> bool {
        matches!(
            self,
            MwError::InvalidSlack { .. }
                | MwError::DegenerateCertificate { .. }
                | MwError::NonPositiveMargin(_)
                | MwError::NonPositiveRadius(_)
                | MwError::NoSamples
        )
    }
}

/// Bucket points and parameters of one margin problem.
#[derive(Debug, Clone, PartialEq)]
pub struct MwInputs {
    /// One bucket point per row.
    pub points: Matrix,
    pub u_bound: f64,
    pub samples: usize,
    pub slack: usize,
    pub one_sided: usize,
    pub radius: f64,
    pub r_tilde1: f64,
}

impl MwInputs {
    /// Uses `U = max_i |z_i|^2`.
    pub fn new(points: Matrix, samples: usize, slack: usize, one_sided: usize, radius: f64, r_tilde1: f64) -> Self {
        let u_bound = max_sq_norm(&points);
        Self {
            points,
            u_bound,
            samples,
            slack,
            one_sided,
            radius,
            r_tilde1,
        }
    }

    pub fn buckets(&self) -> usize {
        self.points.nrows()
    }

    /// `floor(40 U (1 - 2k/K') / r̃1^2)`, saturating.
    pub fn scheduled_rounds(&self) -> u64 {
        let kk = self.buckets() as f64;
        let t = (40.0 * self.u_bound * (1.0 - 2.0 * self.slack as f64 / kk) / (self.r_tilde1 * self.r_tilde1)).floor();
        if t.is_nan() || t <= 0.0 {
            0
        } else if t >= u64::MAX as f64 {
            u64::MAX
        } else {
            t as u64
        }
    }

    /// Coordinate cap of the restricted simplex: `1/(2k)`.
    pub fn cap(&self) -> f64 {
        1.0 / (2 * self.slack) as f64
    }

    fn validate(&self) -> Result<(), MwError> {
        let kk = self.buckets();
        if self.slack == 0 || 2 * self.slack >= kk {
            return Err(MwError::InvalidSlack {
                slack: self.slack,
                buckets: kk,
            });
        }
        check_slacks(kk, self.slack, self.one_sided)?;
        if !(self.r_tilde1 > 0.0) {
            return Err(MwError::NonPositiveMargin(self.r_tilde1));
        }
        if !(self.radius > 0.0) {
            return Err(MwError::NonPositiveRadius(self.radius));
        }
        if self.samples == 0 {
            return Err(MwError::NoSamples);
        }
        let max_norm = max_sq_norm(&self.points);
        if self.u_bound < max_norm * (1.0 - 1e-12) {
            return Err(MwError::BoundTooSmall {
                bound: self.u_bound,
                max_norm,
            });
        }
        Ok(())
    }
}

fn check_slacks(buckets: usize, slack: usize, one_sided: usize) -> Result<(), MwError> {
    if one_sided >= buckets || slack + one_sided >= buckets {
        return Err(MwError::DegenerateCertificate {
            slack,
            one_sided,
            buckets,
        });
    }
    Ok(())
}

fn max_sq_norm(points: &Matrix) -> f64 {
    points.row_iter().map(|r| r.norm_squared()).fold(0.0, f64::max)
}

/// Iteration limits around the analytical round count.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RoundBudget {
    pub max_rounds: usize,
    /// Lower bound on the rounds actually run; `0` keeps the analytical count.
    pub min_rounds: usize,
    /// Keep per-round weights and losses (needed by the regret check).
    pub record_history: bool,
}

impl Default for RoundBudget {
    fn default() -> Self {
        Self {
            max_rounds: DEFAULT_MAX_ROUNDS,
            min_rounds: 0,
            record_history: false,
        }
    }
}

impl RoundBudget {
    pub fn rounds_for(&self, scheduled: u64) -> (usize, Vec<&'static str>) {
        let mut flags = Vec::new();
        let mut t = scheduled.min(self.max_rounds as u64) as usize;
        if scheduled > self.max_rounds as u64 {
            flags.push(TRUNCATED_FLAG);
        }
        if t < self.min_rounds {
            t = self.min_rounds.min(self.max_rounds);
            flags.push(RAISED_FLAG);
        }
        (t, flags)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MwTrace {
    pub rounds: usize,
    pub scheduled_rounds: u64,
    pub flags: Vec<&'static str>,
    /// `(1/T) Σ v vᵀ`.
    pub m: Matrix,
    /// Cumulative losses `Σ_t τ_i^{(t)}`.
    pub tau_running: Vec<f64>,
    /// `<w^{(t)}, τ^{(t)}>` per round, i.e. the top eigenvalue times `R^2`.
    pub round_values: Vec<f64>,
    /// Shannon entropy of `w^{(t)}` per round.
    pub entropies: Vec<f64>,
    pub weights_history: Option<Vec<Vec<f64>>>,
    pub tau_history: Option<Vec<Vec<f64>>>,
}

/// The multiplicative-weights loop. Runs the analytical number of rounds,
/// adjusted by `budget`.
pub fn mw_iterate(inputs: &MwInputs, budget: &RoundBudget, seed: u64) -> Result<MwTrace, MwError> {
    inputs.validate()?;
    let scheduled_rounds = inputs.scheduled_rounds();
    let (rounds, flags) = budget.rounds_for(scheduled_rounds);
    if rounds == 0 {
        return Err(MwError::NoRounds);
    }
    let z = &inputs.points;
    let (kk, p) = z.shape();
    let cap = inputs.cap();
    let r = inputs.radius;
    let u = inputs.u_bound;

    let mut w = vec![1.0 / kk as f64; kk];
    let mut m = Matrix::zeros(p, p);
    let mut tau_running = vec![0.0; kk];
    let mut round_values = Vec::with_capacity(rounds);
    let mut entropies = Vec::with_capacity(rounds);
    let mut weights_history = budget.record_history.then(Vec::new);
    let mut tau_history = budget.record_history.then(Vec::new);
    let mut gram = Matrix::zeros(p, p);
    let mut weighted = Matrix::zeros(kk, p);

    for t in 0..rounds {
        for i in 0..kk {
            let s = w[i].sqrt();
            for j in 0..p {
                weighted[(i, j)] = s * z[(i, j)];
            }
        }
        weighted.tr_mul_to(&weighted, &mut gram);
        let pair = top_eigenvector(
            &gram,
            DEFAULT_EIG_TOL,
            DEFAULT_EIG_MAX_ITER,
            derive_seed(seed, &[PURPOSE_EIGEN, t as u64]),
        )?;
        let v = &pair.vector * r;
        let tau: Vec<f64> = (z * &v).iter().map(|x| x * x).collect();

        round_values.push(w.iter().zip(&tau).map(|(a, b)| a * b).sum());
        entropies.push(-w.iter().filter(|&&x| x > 0.0).map(|&x| x * x.ln()).sum::<f64>());
        if let Some(h) = weights_history.as_mut() {
            h.push(w.clone());
        }
        if let Some(h) = tau_history.as_mut() {
            h.push(tau.clone());
        }
        m.ger(1.0, &v, &v, 1.0);

        let mut w_hat = Vec::with_capacity(kk);
        for (i, (&wi, &ti)) in w.iter().zip(&tau).enumerate() {
            tau_running[i] += ti;
            let factor = if u > 0.0 { 1.0 - ti / (2.0 * u) } else { 1.0 };
            if factor < 0.0 {
                return Err(MwError::NegativeFactor { index: i, factor });
            }
            w_hat.push(wi * factor);
        }
        let total: f64 = w_hat.iter().sum();
        if total > 0.0 {
            w_hat.iter_mut().for_each(|x| *x /= total);
        }
        w = kl_project_capped_simplex(&w_hat, cap)?;
    }
    m /= rounds as f64;
    m = 0.5 * (&m + m.transpose());
    Ok(MwTrace {
        rounds,
        scheduled_rounds,
        flags,
        m,
        tau_running,
        round_values,
        entropies,
        weights_history,
        tau_history,
    })
}

/// A margin-direction pair with the counts needed to audit it.
#[derive(Debug, Clone, PartialEq)]
pub struct MarginCertificate {
    pub theta: f64,
    pub v: Vector,
    /// `#{i : |<z_i, v>| > θ}`.
    pub satisfied_count: usize,
    /// `#{i : |<z_i, v>| >= θ}`; at least `K' - k'` by construction of `θ`.
    pub attained_count: usize,
    /// `#{i : <z_i, v> >= θ}` after the sign choice.
    pub one_sided_count: usize,
    /// Index of the winning sphere draw.
    pub draw: usize,
    pub flipped: bool,
    pub flags: Vec<&'static str>,
}

impl MarginCertificate {
    /// Recounts the three populations from the points.
    pub fn recount(points: &Matrix, theta: f64, v: &Vector) -> (usize, usize, usize) {
        let proj = points * v;
        let strict = proj.iter().filter(|x| x.abs() > theta).count();
        let attained = proj.iter().filter(|x| x.abs() >= theta).count();
        let one_sided = proj.iter().filter(|&&x| x >= theta).count();
        (strict, attained, one_sided)
    }

    /// Two-sided certificate for slack `one_sided`: all but `k'` points sit
    /// at or beyond the margin. The strict count can fall short by ties at
    /// the order statistic itself.
    pub fn certifies(&self, buckets: usize, one_sided: usize) -> bool {
        self.attained_count + one_sided >= buckets
    }
}

/// `M^{1/2}` with eigenvalues below `1e-12 |M|` treated as zero.
pub fn psd_sqrt(m: &Matrix) -> Matrix {
    let eig = SymmetricEigen::new(0.5 * (m + m.transpose()));
    let top = eig.eigenvalues.iter().cloned().fold(0.0f64, f64::max);
    let floor = 1e-12 * top;
    let roots = eig.eigenvalues.map(|l| if l > floor { l.sqrt() } else { 0.0 });
    &eig.eigenvectors * Matrix::from_diagonal(&roots) * eig.eigenvectors.transpose()
}

/// Draws `samples` sphere points, maps them through `M^{1/2}`, keeps the draw
/// with the largest `(K'-k')`-th absolute projection (lowest index on ties)
/// and fixes the sign by the `(K'-k-k')`-th signed projection.
pub fn spherical_round(
    points: &Matrix,
    m: &Matrix,
    samples: usize,
    slack: usize,
    one_sided: usize,
    seed: u64,
) -> Result<MarginCertificate, MwError> {
    let (kk, p) = points.shape();
    if samples == 0 {
        return Err(MwError::NoSamples);
    }
    check_slacks(kk, slack, one_sided)?;
    let root = psd_sqrt(m);
    let draws = sample_unit_sphere(p, samples, seed);
    let rank = Rank::Descending(kk - one_sided);
    let mut best: Option<(f64, usize, Vector)> = None;
    let mut buf = vec![0.0; kk];
    for (l, theta) in draws.iter().enumerate() {
        let v = &root * theta;
        let proj = points * &v;
        for (b, x) in buf.iter_mut().zip(proj.iter()) {
            *b = x.abs();
        }
        let stat = select_in_place(&mut buf, rank)?;
        if best.as_ref().is_none_or(|(s, _, _)| stat > *s) {
            best = Some((stat, l, v));
        }
    }
    let (theta, draw, mut v) = best.expect("at least one draw");
    let proj = points * &v;
    buf.copy_from_slice(proj.as_slice());
    let signed = select_in_place(&mut buf, Rank::Descending(kk - slack - one_sided))?;
    let flipped = signed < theta;
    if flipped {
        v = -v;
    }
    let (satisfied_count, attained_count, one_sided_count) = MarginCertificate::recount(points, theta, &v);
    Ok(MarginCertificate {
        theta,
        v,
        satisfied_count,
        attained_count,
        one_sided_count,
        draw,
        flipped,
        flags: Vec::new(),
    })
}

/// [`mw_iterate`] followed by [`spherical_round`] on its averaged matrix.
pub fn mw(inputs: &MwInputs, budget: &RoundBudget, seed: u64) -> Result<MarginCertificate, MwError> {
    let trace = mw_iterate(inputs, budget, derive_seed(seed, &[0]))?;
    let mut cert = spherical_round(
        &inputs.points,
        &trace.m,
        inputs.samples,
        inputs.slack,
        inputs.one_sided,
        derive_seed(seed, &[1]),
    )?;
    cert.flags = trace.flags;
    Ok(cert)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::unit_sphere_draw;
    use crate::oracles;
    use crate::rng::stream;
    use proptest::prelude::*;
    use rand::Rng;

    fn equal_points(kk: usize, z: &[f64]) -> Matrix {
        Matrix::from_fn(kk, z.len(), |_, j| z[j])
    }

    /// `count` points with `|<z, u>| >= theta0` along `u = e1`, the rest arbitrary.
    pub(crate) fn planted(kk: usize, p: usize, count: usize, theta0: f64, seed: u64) -> Matrix {
        let mut rng = stream(seed);
        Matrix::from_fn(kk, p, |i, j| {
            if i < count {
                if j == 0 {
                    let s = if rng.random::<bool>() { 1.0 } else { -1.0 };
                    s * (theta0 + rng.random_range(0.0..0.5))
                } else {
                    rng.random_range(-0.3..0.3)
                }
            } else {
                rng.random_range(-2.0..2.0)
            }
        })
    }

    #[test]
    fn rank_one_points() {
        let z = [0.6, -0.8, 0.0];
        let mut inputs = MwInputs::new(equal_points(12, &z), 50, 2, 4, 2.0, 0.5);
        inputs.u_bound *= 4.0;
        let trace = mw_iterate(&inputs, &RoundBudget::default(), 1).unwrap();
        assert_eq!(trace.rounds as u64, trace.scheduled_rounds);
        let zz = Vector::from_vec(z.to_vec());
        let expected = &zz * zz.transpose() * 4.0;
        assert!((&trace.m - expected).norm() < 1e-9);
        for row in inputs.points.row_iter() {
            let q = (row * &trace.m * row.transpose())[(0, 0)];
            assert!((q - 4.0).abs() < 1e-9);
        }
        let cert = mw(&inputs, &RoundBudget::default(), 3).unwrap();
        let draws = sample_unit_sphere(3, 50, derive_seed(3, &[1]));
        let best = draws.iter().map(|t| t.dot(&zz).abs()).fold(0.0, f64::max);
        assert!((cert.theta - 2.0 * best).abs() < 1e-9);
        assert!((cert.v.normalize().dot(&zz).abs() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn zero_matrix_rounds_to_zero() {
        let z = planted(10, 3, 8, 1.0, 1);
        let cert = spherical_round(&z, &Matrix::zeros(3, 3), 20, 1, 3, 4).unwrap();
        assert_eq!(cert.theta, 0.0);
        assert_eq!(cert.v, Vector::zeros(3));
    }

    #[test]
    fn rank_one_rounding_picks_best_draw() {
        let u = Vector::from_vec(vec![0.0, 1.0, 0.0]);
        let m = &u * u.transpose();
        let z = planted(20, 3, 20, 1.0, 2);
        let cert = spherical_round(&z, &m, 64, 2, 5, 7).unwrap();
        let draws = sample_unit_sphere(3, 64, 7);
        let scales: Vec<f64> = draws.iter().map(|t| t.dot(&u).abs()).collect();
        let best = scales.iter().cloned().fold(0.0, f64::max);
        assert!((cert.v.norm() - best).abs() < 1e-9);
        assert!((cert.v.normalize().dot(&u).abs() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn weights_stay_in_restricted_simplex() {
        let z = planted(60, 4, 55, 1.0, 3);
        let inputs = MwInputs::new(z, 50, 5, 15, 1.0, 1.0);
        let budget = RoundBudget {
            record_history: true,
            ..RoundBudget::default()
        };
        let trace = mw_iterate(&inputs, &budget, 4).unwrap();
        for w in trace.weights_history.as_ref().unwrap() {
            assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            assert!(w.iter().all(|&x| x >= 0.0 && x <= inputs.cap() + 1e-12));
            // KL to uniform stays below 5 k~ / K' with k~ = K' - 2k.
            let uniform = vec![1.0 / 60.0; 60];
            assert!(oracles::kl(w, &uniform) <= 5.0 * 50.0 / 60.0);
        }
        let eig = oracles::exact_eig(&trace.m);
        assert!(eig.values.iter().all(|&l| l >= -1e-12 && l <= 1.0 + 1e-12));
        assert!((trace.m.trace() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn planted_quantile_property() {
        let theta0 = 1.0;
        let z = planted(60, 4, 55, theta0, 5);
        let inputs = MwInputs::new(z.clone(), 200, 5, 15, 1.0, theta0);
        let trace = mw_iterate(&inputs, &RoundBudget::default(), 6).unwrap();
        let above = z
            .row_iter()
            .filter(|r| (r * &trace.m * r.transpose())[(0, 0)] > theta0 * theta0 / 6.0)
            .count();
        assert!(above > 50, "{above}");
    }

    #[test]
    fn truncation_and_minimum_flags() {
        let z = planted(20, 2, 18, 1.0, 7);
        let inputs = MwInputs::new(z, 10, 2, 6, 1.0, 1e-3);
        let budget = RoundBudget {
            max_rounds: 30,
            ..RoundBudget::default()
        };
        let trace = mw_iterate(&inputs, &budget, 1).unwrap();
        assert_eq!(trace.rounds, 30);
        assert_eq!(trace.flags, vec![TRUNCATED_FLAG]);
        let big = MwInputs { r_tilde1: 1e6, ..inputs.clone() };
        assert!(matches!(mw_iterate(&big, &RoundBudget::default(), 1), Err(MwError::NoRounds)));
        let raised = RoundBudget {
            min_rounds: 5,
            ..RoundBudget::default()
        };
        let trace = mw_iterate(&big, &raised, 1).unwrap();
        assert_eq!((trace.rounds, trace.flags.clone()), (5, vec![RAISED_FLAG]));
    }

    #[test]
    fn input_errors() {
        let z = planted(10, 2, 8, 1.0, 8);
        let base = MwInputs::new(z, 10, 2, 3, 1.0, 0.5);
        let b = RoundBudget::default();
        assert!(matches!(mw(&MwInputs { slack: 5, ..base.clone() }, &b, 1), Err(MwError::InvalidSlack { .. })));
        assert!(matches!(mw(&MwInputs { slack: 0, ..base.clone() }, &b, 1), Err(MwError::InvalidSlack { .. })));
        assert!(matches!(
            mw(&MwInputs { one_sided: 8, ..base.clone() }, &b, 1),
            Err(MwError::DegenerateCertificate { .. })
        ));
        assert!(matches!(mw(&MwInputs { u_bound: 1e-3, ..base.clone() }, &b, 1), Err(MwError::BoundTooSmall { .. })));
        assert!(matches!(mw(&MwInputs { samples: 0, ..base.clone() }, &b, 1), Err(MwError::NoSamples)));
        // Radius above one with U = max |z|^2 can push a factor negative.
        let z = equal_points(10, &[1.0, 0.0]);
        let far = MwInputs::new(z, 10, 2, 3, 2.0, 0.5);
        assert!(matches!(mw(&far, &b, 1), Err(MwError::NegativeFactor { .. })));
    }

    #[test]
    fn deterministic_given_seed() {
        let z = planted(40, 3, 36, 1.0, 9);
        let inputs = MwInputs::new(z, 100, 3, 12, 1.0, 1.0);
        let b = RoundBudget::default();
        assert_eq!(mw(&inputs, &b, 11).unwrap(), mw(&inputs, &b, 11).unwrap());
    }

    #[test]
    fn certificate_against_grid_oracle() {
        let z = planted(40, 2, 38, 1.0, 10);
        let inputs = MwInputs::new(z.clone(), 200, 3, 12, 1.0, 1.0);
        let cert = mw(&inputs, &RoundBudget::default(), 12).unwrap();
        let (best, _) = oracles::brute_margin(&z, 12, 1.0, 100_000).unwrap();
        // grid slack: `R max|z| * angular step`
        let slack = z.row_iter().map(|r| r.norm()).fold(0.0, f64::max) * std::f64::consts::TAU / 1e5;
        assert!(cert.theta <= best + slack);
        let (opt_k, _) = oracles::brute_margin(&z, 3, 1.0, 100_000).unwrap();
        let floor = (0.49 * std::f64::consts::PI).cos() * opt_k / 6f64.sqrt();
        assert!(cert.theta >= floor, "{} < {floor}", cert.theta);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn certificate_invariants(seed in 0u64..10_000, kk in 12usize..40, p in 1usize..5) {
            let mut rng = stream(seed);
            let z = Matrix::from_fn(kk, p, |_, _| rng.random_range(-3.0..3.0));
            let slack = 1 + kk / 10;
            let one_sided = kk / 3;
            let inputs = MwInputs::new(z.clone(), 30, slack, one_sided, 1.0, 2.0);
            let budget = RoundBudget { min_rounds: 5, max_rounds: 400, record_history: true };
            let trace = mw_iterate(&inputs, &budget, seed).unwrap();
            let cert = spherical_round(&z, &trace.m, 30, slack, one_sided, seed).unwrap();
            let (s, a, o) = MarginCertificate::recount(&z, cert.theta, &cert.v);
            prop_assert_eq!((s, a, o), (cert.satisfied_count, cert.attained_count, cert.one_sided_count));
            prop_assert!(cert.certifies(kk, one_sided));
            prop_assert!(cert.v.norm() <= 1.0 + 1e-9);
            let ceiling = z.row_iter().map(|r| r.norm()).fold(0.0, f64::max);
            prop_assert!(cert.theta <= ceiling + 1e-12);
            prop_assert!((trace.m.trace() - 1.0).abs() < 1e-9);

            // regret inequality against random comparators
            let ws = trace.weights_history.as_ref().unwrap();
            let taus = trace.tau_history.as_ref().unwrap();
            let uniform = vec![1.0 / kk as f64; kk];
            for _ in 0..20 {
                let w = oracles::random_capped_simplex_point(&mut rng, kk, inputs.cap());
                let kl = oracles::kl(&w, &uniform);
                let (mut lhs, mut rhs) = (0.0, 0.0);
                for t in 0..trace.rounds {
                    lhs += ws[t].iter().zip(&taus[t]).map(|(a, b)| a * b).sum::<f64>();
                    rhs += w.iter().zip(&taus[t]).map(|(a, b)| a * b).sum::<f64>();
                    let tt = (t + 1) as f64;
                    prop_assert!(lhs / tt <= 1.5 * rhs / tt + 2.0 * inputs.u_bound * kl / tt + 1e-9);
                }
            }
        }

        #[test]
        fn psd_sqrt_squares_back(seed in 0u64..1000, p in 1usize..6) {
            let mut rng = stream(seed);
            let v = unit_sphere_draw(&mut rng, p);
            let u = unit_sphere_draw(&mut rng, p);
            let m = &v * v.transpose() * 0.7 + &u * u.transpose() * 0.3;
            let r = psd_sqrt(&m);
            prop_assert!((&r * &r - &m).norm() < 1e-9);
        }
    }
}

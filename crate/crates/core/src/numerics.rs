//! Dense numerical kernels shared by the estimator.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::rng::{derive_seed, stream, PURPOSE_EIGEN};

pub const DEFAULT_EIG_TOL: f64 = 1e-9;
pub const DEFAULT_EIG_MAX_ITER: usize = 100_000;

#[derive(Debug, Clone, PartialEq)]
pub struct EigPair {
    pub value: f64,
    pub vector: DVector<f64>,
    /// `|Mv - λv|`.
    pub residual: f64,
}

#[derive(Debug, Clone, thiserror::Error)]
pub enum NumericsError {
    #[error("power iteration stalled after {iterations} iterations (residual {residual:.3e})")]
    NoConvergence {
        iterations: usize,
        residual: f64,
        last: Box<EigPair>,
    },
    #[error("matrix must be square, got {0}x{1}")]
    NotSquare(usize, usize),
    #[error("cap {cap} admits no probability vector on {support} positive coordinates")]
    InfeasibleCap { cap: f64, support: usize },
    #[error("weights must be finite and nonnegative with positive total")]
    InvalidWeights,
    #[error("rank {rank} outside 1..={len}")]
    RankOutOfRange { rank: usize, len: usize },
    #[error("empty input")]
    Empty,
    #[error("{centers} centers but {radii} radii")]
    LengthMismatch { centers: usize, radii: usize },
    #[error("ball feasibility undecided within budget (best {best:.3e}, lower bound {lower:.3e})")]
    BallsNoConvergence {
        best: f64,
        lower: f64,
        witness: DVector<f64>,
    },
}

/// Largest eigenpair of a symmetric PSD matrix by power iteration from a
/// seeded random start. Stops once `|Mv - λv| <= tol * trace(M)`; a stalled
/// run is retried once from a fresh start.
pub fn top_eigenvector(
    m: &DMatrix<f64>,
    tol: f64,
    max_iter: usize,
    seed: u64,
) -> Result<EigPair, NumericsError> {
    if m.nrows() != m.ncols() {
        return Err(NumericsError::NotSquare(m.nrows(), m.ncols()));
    }
    let mut rng = stream(seed);
    let start = unit_sphere_draw(&mut rng, m.nrows());
    match power_iteration(m, start, tol, max_iter) {
        Ok(pair) => Ok(pair),
        Err(_) => {
            let start = unit_sphere_draw(&mut rng, m.nrows());
            power_iteration(m, start, tol, max_iter)
        }
    }
}

/// Same as [`top_eigenvector`] but starting from `start`; falls back to a
/// seeded random start if the warm start stalls.
pub fn top_eigenvector_from(
    m: &DMatrix<f64>,
    start: &DVector<f64>,
    tol: f64,
    max_iter: usize,
    seed: u64,
) -> Result<EigPair, NumericsError> {
    if m.nrows() != m.ncols() {
        return Err(NumericsError::NotSquare(m.nrows(), m.ncols()));
    }
    let norm = start.norm();
    if norm > 0.0 && norm.is_finite() {
        if let Ok(pair) = power_iteration(m, start / norm, tol, max_iter) {
            return Ok(pair);
        }
    }
    top_eigenvector(m, tol, max_iter, derive_seed(seed, &[PURPOSE_EIGEN]))
}

fn power_iteration(
    m: &DMatrix<f64>,
    mut v: DVector<f64>,
    tol: f64,
    max_iter: usize,
) -> Result<EigPair, NumericsError> {
    let p = m.nrows();
    let mut w = DVector::zeros(p);
    w.gemv(1.0, m, &v, 0.0);
    let scale = m.trace();
    if p == 0 || scale <= 0.0 {
        let residual = w.norm();
        return Ok(EigPair {
            value: 0.0,
            vector: v,
            residual,
        });
    }
    let threshold = tol * scale;
    let mut residual = f64::INFINITY;
    let mut value = 0.0;
    for _ in 0..max_iter {
        value = v.dot(&w);
        residual = (&w - value * &v).norm();
        if residual <= threshold {
            return Ok(EigPair {
                value: value.max(0.0),
                vector: v,
                residual,
            });
        }
        let norm = w.norm();
        if norm == 0.0 {
            break;
        }
        v = &w / norm;
        w.gemv(1.0, m, &v, 0.0);
    }
    Err(NumericsError::NoConvergence {
        iterations: max_iter,
        residual,
        last: Box::new(EigPair {
            value: value.max(0.0),
            vector: v,
            residual,
        }),
    })
}

/// Minimum-norm least-squares solution of `Xb ≈ y` via a thin SVD; singular
/// values below `1e-10 * |X|` are treated as zero.
pub fn bucket_least_squares(x: &DMatrix<f64>, y: &DVector<f64>) -> DVector<f64> {
    let p = x.ncols();
    if x.nrows() == 0 || p == 0 {
        return DVector::zeros(p);
    }
    let svd = x.clone().svd(true, true);
    let top = svd.singular_values.max();
    if top <= 0.0 || !top.is_finite() {
        return DVector::zeros(p);
    }
    let cutoff = 1e-10 * top;
    let u = svd.u.as_ref().expect("thin U requested");
    let v_t = svd.v_t.as_ref().expect("thin V^T requested");
    let mut coef = u.tr_mul(y);
    for (c, &s) in coef.iter_mut().zip(svd.singular_values.iter()) {
        *c = if s > cutoff { *c / s } else { 0.0 };
    }
    v_t.tr_mul(&coef)
}

/// KL projection of `w_hat` onto `{w : Σw = 1, 0 <= w_i <= cap}`.
///
/// The minimizer has the form `w_i = min(cap, λ ŵ_i)`; coordinates are
/// capped in decreasing order of `ŵ` until the remaining mass fits.
pub fn kl_project_capped_simplex(w_hat: &[f64], cap: f64) -> Result<Vec<f64>, NumericsError> {
    if w_hat.is_empty() {
        return Err(NumericsError::Empty);
    }
    if w_hat.iter().any(|&w| !(w >= 0.0) || !w.is_finite()) || !(cap > 0.0) {
        return Err(NumericsError::InvalidWeights);
    }
    let mut order: Vec<usize> = (0..w_hat.len()).filter(|&i| w_hat[i] > 0.0).collect();
    let support = order.len();
    if support == 0 {
        return Err(NumericsError::InvalidWeights);
    }
    if cap * (support as f64) < 1.0 - 1e-12 {
        return Err(NumericsError::InfeasibleCap { cap, support });
    }
    order.sort_by(|&a, &b| w_hat[b].total_cmp(&w_hat[a]).then(a.cmp(&b)));

    // Tail sums accumulated from the smallest weight up; a running
    // subtraction loses the small tail once large weights are capped.
    let mut tail = vec![0.0; support + 1];
    for r in (0..support).rev() {
        tail[r] = tail[r + 1] + w_hat[order[r]];
    }
    let mut capped = 0;
    let mut scale = 0.0;
    while capped < support {
        let remaining = 1.0 - capped as f64 * cap;
        let rest = tail[capped];
        if remaining <= 0.0 || rest <= 0.0 {
            break;
        }
        scale = remaining / rest;
        if scale * w_hat[order[capped]] <= cap {
            break;
        }
        capped += 1;
        scale = 0.0;
    }
    let mut w = vec![0.0; w_hat.len()];
    for (rank, &i) in order.iter().enumerate() {
        w[i] = if rank < capped {
            cap
        } else {
            (scale * w_hat[i]).min(cap)
        };
    }
    Ok(w)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Rank {
    /// `j`-th smallest, 1-based.
    Ascending(usize),
    /// `j`-th largest, 1-based.
    Descending(usize),
}

impl Rank {
    fn index(self, len: usize) -> Result<usize, NumericsError> {
        let j = match self {
            Rank::Ascending(j) | Rank::Descending(j) => j,
        };
        if len == 0 {
            return Err(NumericsError::Empty);
        }
        if j == 0 || j > len {
            return Err(NumericsError::RankOutOfRange { rank: j, len });
        }
        Ok(match self {
            Rank::Ascending(j) => j - 1,
            Rank::Descending(j) => len - j,
        })
    }
}

/// Exact order statistic by selection.
pub fn order_statistic(values: &[f64], rank: Rank) -> Result<f64, NumericsError> {
    let mut buf = values.to_vec();
    select_in_place(&mut buf, rank)
}

/// Order statistic that reorders `buf` instead of copying it.
pub fn select_in_place(buf: &mut [f64], rank: Rank) -> Result<f64, NumericsError> {
    let idx = rank.index(buf.len())?;
    let (_, value, _) = buf.select_nth_unstable_by(idx, f64::total_cmp);
    Ok(*value)
}

/// One uniform draw from the unit sphere in `R^p` (normalized Gaussian).
pub fn unit_sphere_draw<R: Rng + ?Sized>(rng: &mut R, p: usize) -> DVector<f64> {
    loop {
        let g = DVector::from_iterator(p, (0..p).map(|_| rng.sample::<f64, _>(StandardNormal)));
        let norm = g.norm();
        if norm > 1e-300 && norm.is_finite() {
            return g / norm;
        }
    }
}

pub fn sample_unit_sphere(p: usize, count: usize, seed: u64) -> Vec<DVector<f64>> {
    let mut rng = stream(seed);
    (0..count).map(|_| unit_sphere_draw(&mut rng, p)).collect()
}

/// Outcome of the common-intersection test for a family of balls.
#[derive(Debug, Clone, PartialEq)]
pub struct BallIntersection {
    pub feasible: bool,
    /// Best value of `max_j (|x - c_j| - R_j)` found.
    pub value: f64,
    /// Certified lower bound on the minimum of that function.
    pub lower_bound: f64,
    /// Point attaining `value`.
    pub witness: Option<DVector<f64>>,
}

pub fn default_ball_tol(radii: &[f64]) -> f64 {
    let r = radii.iter().fold(0.0f64, |a, &b| a.max(b.abs()));
    if r > 0.0 {
        1e-9 * r
    } else {
        1e-12
    }
}

pub fn balls_intersect(
    centers: &[DVector<f64>],
    radii: &[f64],
    tol: f64,
) -> Result<BallIntersection, NumericsError> {
    balls_intersect_from(centers, radii, tol, None)
}

/// Decides whether `min_x max_j (|x - c_j| - R_j) <= tol`.
///
/// The minimizer lies in the convex hull of the centers, so the problem is
/// solved in coordinates of their affine span: bisection in one dimension,
/// a central-cut ellipsoid method otherwise. Every cut yields a certified
/// lower bound, so the answer is exact up to the reported gap.
pub fn balls_intersect_from(
    centers: &[DVector<f64>],
    radii: &[f64],
    tol: f64,
    start: Option<&DVector<f64>>,
) -> Result<BallIntersection, NumericsError> {
    if centers.is_empty() {
        return Err(NumericsError::Empty);
    }
    if centers.len() != radii.len() {
        return Err(NumericsError::LengthMismatch {
            centers: centers.len(),
            radii: radii.len(),
        });
    }
    let frame = AffineFrame::new(centers);
    let scale = frame.spread + radii.iter().fold(0.0f64, |a, &b| a.max(b.abs())) + 1e-300;
    let eval = |y: &DVector<f64>| frame.objective(y, radii);

    let finish = |feasible: bool, value: f64, lower: f64, y: &DVector<f64>| BallIntersection {
        feasible,
        value,
        lower_bound: lower,
        witness: Some(frame.to_ambient(y)),
    };

    let dim = frame.basis.len();
    if dim == 0 {
        let y = DVector::zeros(0);
        let (value, _) = eval(&y);
        let slack = frame.offsets.iter().fold(0.0f64, |a, &b| a.max(b));
        return Ok(finish(value <= tol, value, value - slack, &y));
    }

    let mut y = match start {
        Some(s) if s.len() == frame.origin.len() => frame.to_local(s),
        _ => frame.local.iter().fold(DVector::zeros(dim), |acc, q| acc + q) / frame.local.len() as f64,
    };
    let radius = frame
        .local
        .iter()
        .map(|q| (&y - q).norm())
        .fold(0.0f64, f64::max)
        * (1.0 + 1e-9)
        + 1e-12 * scale;

    let (mut best, _) = eval(&y);
    let mut best_y = y.clone();
    let mut lower = f64::NEG_INFINITY;
    let converged = |best: f64, lower: f64| best - lower <= 1e-12 * scale;

    if dim == 1 {
        let (mut lo, mut hi) = (y[0] - radius, y[0] + radius);
        for _ in 0..400 {
            let mid = DVector::from_element(1, 0.5 * (lo + hi));
            let (value, grad) = eval(&mid);
            if value < best {
                best = value;
                best_y = mid.clone();
            }
            let g = grad[0];
            lower = lower.max(value - g.abs() * 0.5 * (hi - lo));
            if g == 0.0 {
                lower = lower.max(value);
            }
            if best <= tol || lower > tol || converged(best, lower) || g == 0.0 {
                return Ok(finish(best <= tol, best, lower, &best_y));
            }
            if g > 0.0 {
                hi = mid[0];
            } else {
                lo = mid[0];
            }
        }
    } else {
        let d = dim as f64;
        let mut shape = DMatrix::identity(dim, dim) * (radius * radius);
        let budget = 2000 + 400 * (dim + 1) * (dim + 1);
        for _ in 0..budget {
            let (value, grad) = eval(&y);
            if value < best {
                best = value;
                best_y = y.clone();
            }
            if grad.norm() == 0.0 {
                lower = lower.max(value);
                return Ok(finish(best <= tol, best, lower, &best_y));
            }
            let pg = &shape * &grad;
            let gpg = grad.dot(&pg);
            if !(gpg > 0.0) {
                break;
            }
            let s = gpg.sqrt();
            lower = lower.max(value - s);
            if best <= tol || lower > tol || converged(best, lower) {
                return Ok(finish(best <= tol, best, lower, &best_y));
            }
            let step = pg / s;
            y -= &step / (d + 1.0);
            shape = (shape - (2.0 / (d + 1.0)) * &step * step.transpose()) * (d * d / (d * d - 1.0));
            shape = 0.5 * (&shape + shape.transpose());
        }
    }
    if converged(best, lower) {
        return Ok(finish(best <= tol, best, lower, &best_y));
    }
    Err(NumericsError::BallsNoConvergence {
        best,
        lower,
        witness: frame.to_ambient(&best_y),
    })
}

/// Orthonormal coordinates of the affine span of a point set.
struct AffineFrame {
    origin: DVector<f64>,
    basis: Vec<DVector<f64>>,
    local: Vec<DVector<f64>>,
    /// Distance of each point from the span of `basis` (rounding residue).
    offsets: Vec<f64>,
    spread: f64,
}

impl AffineFrame {
    fn new(points: &[DVector<f64>]) -> Self {
        let origin = points[0].clone();
        let diffs: Vec<DVector<f64>> = points.iter().map(|c| c - &origin).collect();
        let spread = diffs.iter().map(|d| d.norm()).fold(0.0f64, f64::max);
        let mut basis: Vec<DVector<f64>> = Vec::new();
        for d in &diffs {
            let mut r = d.clone();
            for _ in 0..2 {
                for e in &basis {
                    let c = e.dot(&r);
                    r.axpy(-c, e, 1.0);
                }
            }
            let norm = r.norm();
            if norm > 1e-12 * spread && norm > 0.0 {
                basis.push(r / norm);
            }
        }
        let local: Vec<DVector<f64>> = diffs
            .iter()
            .map(|d| DVector::from_iterator(basis.len(), basis.iter().map(|e| e.dot(d))))
            .collect();
        let offsets = diffs
            .iter()
            .zip(&local)
            .map(|(d, q)| (d.norm_squared() - q.norm_squared()).max(0.0).sqrt())
            .collect();
        Self {
            origin,
            basis,
            local,
            offsets,
            spread,
        }
    }

    fn to_ambient(&self, y: &DVector<f64>) -> DVector<f64> {
        let mut x = self.origin.clone();
        for (e, &c) in self.basis.iter().zip(y.iter()) {
            x.axpy(c, e, 1.0);
        }
        x
    }

    fn to_local(&self, x: &DVector<f64>) -> DVector<f64> {
        let d = x - &self.origin;
        DVector::from_iterator(self.basis.len(), self.basis.iter().map(|e| e.dot(&d)))
    }

    /// Objective value and a subgradient at local coordinates `y`.
    fn objective(&self, y: &DVector<f64>, radii: &[f64]) -> (f64, DVector<f64>) {
        let mut best = f64::NEG_INFINITY;
        let mut grad = DVector::zeros(y.len());
        for ((q, &h), &r) in self.local.iter().zip(&self.offsets).zip(radii) {
            let diff = y - q;
            let dist = (diff.norm_squared() + h * h).sqrt();
            let value = dist - r;
            if value > best {
                best = value;
                grad = if dist > 0.0 { diff / dist } else { DVector::zeros(y.len()) };
            }
        }
        (best, grad)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracles;
    use proptest::prelude::*;
    use rand::Rng;
    use rand::SeedableRng;

    fn random_gram(p: usize, seed: u64) -> DMatrix<f64> {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let x = DMatrix::from_fn(p, p + 3, |_, _| rng.sample::<f64, _>(StandardNormal));
        &x * x.transpose()
    }

    #[test]
    fn diagonal_top_eigenpair() {
        let m = DMatrix::from_diagonal(&DVector::from_vec(vec![3.0, 1.0, 0.0]));
        let e = top_eigenvector(&m, DEFAULT_EIG_TOL, DEFAULT_EIG_MAX_ITER, 1).unwrap();
        assert!((e.value - 3.0).abs() < 1e-8);
        assert!((e.vector[0].abs() - 1.0).abs() < 1e-8);
    }

    #[test]
    fn identity_any_vector() {
        let m = DMatrix::<f64>::identity(4, 4);
        let e = top_eigenvector(&m, DEFAULT_EIG_TOL, DEFAULT_EIG_MAX_ITER, 9).unwrap();
        assert_eq!(e.residual, 0.0);
        assert!((e.value - 1.0).abs() < 1e-14);
        assert!((e.vector.norm() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn zero_matrix() {
        let m = DMatrix::<f64>::zeros(3, 3);
        let e = top_eigenvector(&m, DEFAULT_EIG_TOL, 10, 2).unwrap();
        assert_eq!(e.value, 0.0);
    }

    #[test]
    fn eigen_matches_dense_oracle() {
        // Frozen from the Jacobi oracle for this seed.
        let m = random_gram(5, 11);
        let exact = oracles::exact_eig(&m);
        let e = top_eigenvector(&m, DEFAULT_EIG_TOL, DEFAULT_EIG_MAX_ITER, 3).unwrap();
        assert!((e.value - exact.values[0]).abs() < 1e-8 * exact.values[0]);
    }

    #[test]
    fn eigen_stall_reports_last_iterate() {
        let m = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 0.999_999]));
        let err = top_eigenvector(&m, 1e-15, 2, 5).unwrap_err();
        match err {
            NumericsError::NoConvergence { last, .. } => assert!((last.vector.norm() - 1.0).abs() < 1e-12),
            other => panic!("{other}"),
        }
    }

    #[test]
    fn least_squares_interpolates() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(4);
        let x = DMatrix::from_fn(12, 4, |_, _| rng.sample::<f64, _>(StandardNormal));
        let b0 = DVector::from_vec(vec![1.0, -2.0, 0.5, 3.0]);
        let b = bucket_least_squares(&x, &(&x * &b0));
        assert!((b - b0).norm() < 1e-10);
    }

    #[test]
    fn least_squares_zero_design() {
        let x = DMatrix::<f64>::zeros(6, 3);
        let y = DVector::from_element(6, 2.0);
        assert_eq!(bucket_least_squares(&x, &y), DVector::zeros(3));
    }

    #[test]
    fn least_squares_matches_normal_equations() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(21);
        let x = DMatrix::from_fn(50, 5, |_, _| rng.sample::<f64, _>(StandardNormal));
        let y = DVector::from_fn(50, |_, _| rng.sample::<f64, _>(StandardNormal));
        let b = bucket_least_squares(&x, &y);
        let oracle = oracles::normal_equations(&x, &y).unwrap();
        assert!((b - oracle).norm() < 1e-8);
    }

    #[test]
    fn least_squares_rank_deficient_is_min_norm() {
        // Two identical columns: min-norm solution splits the weight evenly.
        let col = DVector::from_vec(vec![1.0, 2.0, 3.0]);
        let x = DMatrix::from_columns(&[col.clone(), col.clone()]);
        let b = bucket_least_squares(&x, &(2.0 * &col));
        assert!((b[0] - 1.0).abs() < 1e-10 && (b[1] - 1.0).abs() < 1e-10);
    }

    #[test]
    fn kl_projection_examples() {
        let w = kl_project_capped_simplex(&[0.25; 4], 0.5).unwrap();
        assert_eq!(w, vec![0.25; 4]);
        let w = kl_project_capped_simplex(&[0.7, 0.1, 0.1, 0.1], 0.5).unwrap();
        let expected = [0.5, 1.0 / 6.0, 1.0 / 6.0, 1.0 / 6.0];
        for (a, b) in w.iter().zip(expected) {
            assert!((a - b).abs() < 1e-15);
        }
        let w = kl_project_capped_simplex(&[0.5, 0.0, 0.3, 0.2], 0.4).unwrap();
        assert_eq!(w[1], 0.0);
        assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn kl_projection_matches_brute_force() {
        let w_hat = [0.7, 0.1, 0.1, 0.1];
        let brute = oracles::brute_kl_project(&w_hat, 0.5, 200_000).unwrap();
        let w = kl_project_capped_simplex(&w_hat, 0.5).unwrap();
        assert!((oracles::kl(&w, &w_hat) - oracles::kl(&brute, &w_hat)).abs() < 1e-9);
    }

    #[test]
    fn kl_projection_keeps_a_tiny_tail_exact() {
        let raw = [1.0, 0.9, 0.8, 1e-7, 2e-7, 3e-7];
        let total: f64 = raw.iter().sum();
        let w_hat: Vec<f64> = raw.iter().map(|x| x / total).collect();
        let w = kl_project_capped_simplex(&w_hat, 0.2).unwrap();
        assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-14);
        assert!((w[5] / w[3] - 3.0).abs() < 1e-12);
    }

    #[test]
    fn kl_projection_errors() {
        assert!(matches!(
            kl_project_capped_simplex(&[0.5, 0.5, 0.0], 0.4),
            Err(NumericsError::InfeasibleCap { .. })
        ));
        assert!(matches!(
            kl_project_capped_simplex(&[0.0, 0.0], 1.0),
            Err(NumericsError::InvalidWeights)
        ));
        assert!(kl_project_capped_simplex(&[0.2; 4], 0.2).is_err());
    }

    #[test]
    fn order_statistic_examples() {
        assert_eq!(order_statistic(&[3.0, 1.0, 2.0], Rank::Descending(1)).unwrap(), 3.0);
        assert_eq!(order_statistic(&[3.0, 1.0, 2.0], Rank::Ascending(2)).unwrap(), 2.0);
        assert!(matches!(order_statistic(&[], Rank::Ascending(1)), Err(NumericsError::Empty)));
        assert!(order_statistic(&[1.0], Rank::Ascending(2)).is_err());
    }

    #[test]
    fn order_statistic_matches_sort() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(8);
        let values: Vec<f64> = (0..10_000).map(|_| rng.random::<f64>()).collect();
        let mut sorted = values.clone();
        sorted.sort_by(f64::total_cmp);
        for j in (1..=values.len()).step_by(97).chain([1, values.len()]) {
            assert_eq!(order_statistic(&values, Rank::Ascending(j)).unwrap(), sorted[j - 1]);
        }
    }

    #[test]
    fn sphere_samples() {
        let draws = sample_unit_sphere(1, 10_000, 3);
        let plus = draws.iter().filter(|v| v[0] == 1.0).count();
        assert!(draws.iter().all(|v| v[0].abs() == 1.0));
        assert!((plus as f64 / 10_000.0 - 0.5).abs() < 0.02);

        let s = 4000;
        let draws = sample_unit_sphere(3, s, 5);
        let mean = draws.iter().fold(DVector::zeros(3), |a, v| a + v) / s as f64;
        assert!(mean.norm() < 3.0 / (s as f64).sqrt());
        assert!(draws.iter().all(|v| (v.norm() - 1.0).abs() < 1e-12));
        assert_eq!(draws, sample_unit_sphere(3, s, 5));
    }

    #[test]
    fn two_balls() {
        let c = vec![DVector::from_vec(vec![0.0, 0.0]), DVector::from_vec(vec![3.0, 0.0])];
        let out = balls_intersect(&c, &[1.0, 2.0], 1e-9).unwrap();
        assert!(out.feasible);
        let w = out.witness.unwrap();
        assert!(w[1].abs() < 1e-9 && w[0] > -1e-9 && w[0] < 3.0 + 1e-9);
        assert!(w.norm() <= 1.0 + 1e-6 && (&w - &c[1]).norm() <= 2.0 + 1e-6);
    }

    #[test]
    fn three_separated_balls() {
        let h = 3.0 * 3f64.sqrt() / 2.0;
        let c = vec![
            DVector::from_vec(vec![0.0, 0.0]),
            DVector::from_vec(vec![3.0, 0.0]),
            DVector::from_vec(vec![1.5, h]),
        ];
        let out = balls_intersect(&c, &[1.0; 3], 1e-9).unwrap();
        let exact = 3f64.sqrt() - 1.0;
        assert!(!out.feasible);
        assert!(out.lower_bound > 0.0 && out.lower_bound <= exact + 1e-12);
        assert!(out.value >= exact - 1e-12);
    }

    #[test]
    fn coincident_and_nested_balls() {
        let c = vec![DVector::from_vec(vec![1.0, 2.0, 3.0]); 4];
        assert!(balls_intersect(&c, &[0.5, 0.1, 2.0, 0.3], 1e-9).unwrap().feasible);
        let c = vec![DVector::from_vec(vec![0.0, 0.0, 0.0]), DVector::from_vec(vec![0.5, 0.0, 0.0])];
        assert!(balls_intersect(&c, &[2.0, 0.1], 1e-9).unwrap().feasible);
    }

    #[test]
    fn balls_against_grid_oracle() {
        // The oracle brackets the optimum within its covering radius; our
        // value must land in that bracket.
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(17);
        for _ in 0..6 {
            let centers: Vec<DVector<f64>> = (0..5)
                .map(|_| DVector::from_fn(4, |_, _| rng.random_range(-1.0..1.0)))
                .collect();
            let radii: Vec<f64> = (0..5).map(|_| rng.random_range(0.3..1.3)).collect();
            let out = balls_intersect(&centers, &radii, 1e-9).unwrap();
            let grid = oracles::grid_ball_minimum(&centers, &radii, 21);
            assert!(out.lower_bound <= grid.minimum + 1e-9, "{:?} vs {:?}", out, grid);
            if out.feasible {
                assert!(grid.minimum - grid.cover <= 1e-9, "{:?} vs {:?}", out, grid);
            } else {
                assert!(grid.minimum > 1e-9);
            }
            if grid.minimum <= 0.0 {
                assert!(out.feasible);
            }
            if grid.minimum - grid.cover > 1e-9 {
                assert!(!out.feasible);
            }
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn kl_projection_structure(
            raw in proptest::collection::vec(0.0f64..1.0, 2..40),
            cap_factor in 1.0f64..4.0,
        ) {
            let support = raw.iter().filter(|&&w| w > 0.0).count();
            prop_assume!(support > 0);
            let cap = (cap_factor / support as f64).min(1.0);
            let w = kl_project_capped_simplex(&raw, cap).unwrap();
            prop_assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            prop_assert!(w.iter().all(|&x| x >= 0.0 && x <= cap + 1e-15));
            // single scale on uncapped coordinates
            let ratios: Vec<f64> = raw.iter().zip(&w)
                .filter(|(&r, &x)| r > 0.0 && x < cap - 1e-12)
                .map(|(&r, &x)| x / r)
                .collect();
            if let Some(&first) = ratios.first() {
                for r in &ratios {
                    prop_assert!((r - first).abs() <= 1e-9 * first);
                }
                for (&r, &x) in raw.iter().zip(&w) {
                    if r > 0.0 && x >= cap - 1e-12 {
                        prop_assert!(first * r >= cap - 1e-9);
                    }
                }
            }
        }

        #[test]
        fn kl_projection_beats_random_feasible(seed in 0u64..1000) {
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let n = 12;
            let raw: Vec<f64> = (0..n).map(|_| rng.random::<f64>().powi(3) + 1e-6).collect();
            let cap = 0.2;
            let w = kl_project_capped_simplex(&raw, cap).unwrap();
            let best = oracles::kl(&w, &raw);
            for _ in 0..1000 {
                let u = oracles::random_capped_simplex_point(&mut rng, n, cap);
                prop_assert!(best <= oracles::kl(&u, &raw) + 1e-12);
            }
        }

        #[test]
        fn eigenvalue_is_maximal(seed in 0u64..200, p in 1usize..8) {
            let m = random_gram(p, seed);
            let e = top_eigenvector(&m, DEFAULT_EIG_TOL, DEFAULT_EIG_MAX_ITER, seed).unwrap();
            prop_assert!((e.vector.norm() - 1.0).abs() < 1e-12);
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed ^ 0xff);
            for _ in 0..1000 {
                let v = unit_sphere_draw(&mut rng, p);
                prop_assert!(e.value >= v.dot(&(&m * &v)) - 1e-9 * m.trace());
            }
        }

        #[test]
        fn descending_is_reflected_ascending(
            values in proptest::collection::vec(-100.0f64..100.0, 1..60),
            j in 1usize..60,
        ) {
            prop_assume!(j <= values.len());
            let n = values.len();
            prop_assert_eq!(
                order_statistic(&values, Rank::Descending(j)).unwrap(),
                order_statistic(&values, Rank::Ascending(n + 1 - j)).unwrap()
            );
        }

        #[test]
        fn balls_order_invariant(seed in 0u64..500) {
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let count = 2 + (seed % 4) as usize;
            let centers: Vec<DVector<f64>> = (0..count)
                .map(|_| DVector::from_fn(3, |_, _| rng.random_range(-2.0..2.0)))
                .collect();
            let radii: Vec<f64> = (0..count).map(|_| rng.random_range(0.5..2.5)).collect();
            let a = balls_intersect(&centers, &radii, 1e-9).unwrap();
            prop_assume!(if a.feasible { a.value < -1e-6 } else { a.lower_bound > 1e-6 });
            let mut order: Vec<usize> = (0..count).collect();
            order.reverse();
            order.rotate_left(1);
            let c2: Vec<_> = order.iter().map(|&i| centers[i].clone()).collect();
            let r2: Vec<_> = order.iter().map(|&i| radii[i]).collect();
            let b = balls_intersect(&c2, &r2, 1e-9).unwrap();
            prop_assert_eq!(a.feasible, b.feasible);
        }
    }
}

//! Brute-force reference implementations for tests and verification runs.
//!
//! Nothing here calls into the estimator's own kernels: each routine solves
//! its problem by a different (slow, simple) method so it can be used to
//! check the fast path.

use nalgebra::{DMatrix, DVector};
use rand::Rng;

/// Full symmetric spectrum, eigenvalues in descending order.
#[derive(Debug, Clone)]
pub struct Spectrum {
    pub values: Vec<f64>,
    /// Column `i` is the eigenvector for `values[i]`.
    pub vectors: DMatrix<f64>,
}

/// Cyclic Jacobi rotations until the off-diagonal mass is negligible.
pub fn exact_eig(m: &DMatrix<f64>) -> Spectrum {
    let p = m.nrows();
    let mut a = m.clone();
    let mut v = DMatrix::<f64>::identity(p, p);
    let scale = m.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-300);
    for _sweep in 0..100 {
        let off: f64 = (0..p)
            .flat_map(|i| (0..p).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| a[(i, j)] * a[(i, j)])
            .sum::<f64>()
            .sqrt();
        if off <= 1e-15 * scale {
            break;
        }
        for i in 0..p {
            for j in (i + 1)..p {
                let aij = a[(i, j)];
                if aij.abs() <= 1e-300 {
                    continue;
                }
                let theta = (a[(j, j)] - a[(i, i)]) / (2.0 * aij);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..p {
                    let aki = a[(k, i)];
                    let akj = a[(k, j)];
                    a[(k, i)] = c * aki - s * akj;
                    a[(k, j)] = s * aki + c * akj;
                }
                for k in 0..p {
                    let aik = a[(i, k)];
                    let ajk = a[(j, k)];
                    a[(i, k)] = c * aik - s * ajk;
                    a[(j, k)] = s * aik + c * ajk;
                }
                for k in 0..p {
                    let vki = v[(k, i)];
                    let vkj = v[(k, j)];
                    v[(k, i)] = c * vki - s * vkj;
                    v[(k, j)] = s * vki + c * vkj;
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..p).collect();
    order.sort_by(|&x, &y| a[(y, y)].total_cmp(&a[(x, x)]));
    Spectrum {
        values: order.iter().map(|&i| a[(i, i)]).collect(),
        vectors: DMatrix::from_fn(p, p, |r, c| v[(r, order[c])]),
    }
}

/// Solves `XᵀX b = Xᵀy` by Gaussian elimination with partial pivoting.
pub fn normal_equations(x: &DMatrix<f64>, y: &DVector<f64>) -> Option<DVector<f64>> {
    let p = x.ncols();
    let n = x.nrows();
    let mut a = vec![vec![0.0; p + 1]; p];
    for i in 0..p {
        for j in 0..p {
            a[i][j] = (0..n).map(|r| x[(r, i)] * x[(r, j)]).sum();
        }
        a[i][p] = (0..n).map(|r| x[(r, i)] * y[r]).sum();
    }
    for col in 0..p {
        let pivot = (col..p).max_by(|&r, &s| a[r][col].abs().total_cmp(&a[s][col].abs()))?;
        if a[pivot][col].abs() < 1e-300 {
            return None;
        }
        a.swap(col, pivot);
        for r in 0..p {
            if r != col {
                let f = a[r][col] / a[col][col];
                for c in col..=p {
                    a[r][c] -= f * a[col][c];
                }
            }
        }
    }
    Some(DVector::from_iterator(p, (0..p).map(|i| a[i][p] / a[i][i])))
}

/// `Σ w_i ln(w_i / q_i)` with `0 ln 0 = 0`.
pub fn kl(w: &[f64], q: &[f64]) -> f64 {
    w.iter()
        .zip(q)
        .map(|(&a, &b)| {
            if a == 0.0 {
                0.0
            } else if b == 0.0 {
                f64::INFINITY
            } else {
                a * (a / b).ln()
            }
        })
        .sum()
}

/// Euclidean projection onto `{Σw = 1, 0 <= w <= cap}` by bisection on the shift.
/// Projection of `y` onto `{x : Σx = 1, lo ≤ x ≤ cap}` in the metric
/// `diag(1/d)`: `x_i = clamp(y_i - ν d_i, lo_i, cap)` with `ν` by bisection.
fn scaled_project(y: &[f64], d: &[f64], lo: &[f64], cap: f64) -> Vec<f64> {
    let at = |nu: f64| -> Vec<f64> {
        y.iter()
            .zip(d)
            .zip(lo)
            .map(|((&yi, &di), &li)| (yi - nu * di).clamp(li, cap))
            .collect()
    };
    let mass = |nu: f64| at(nu).iter().sum::<f64>();
    let (mut a, mut b) = (-1.0, 1.0);
    while mass(a) < 1.0 {
        a *= 2.0;
    }
    while mass(b) > 1.0 {
        b *= 2.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (a + b);
        if mass(mid) > 1.0 {
            a = mid;
        } else {
            b = mid;
        }
    }
    at(0.5 * (a + b))
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum OracleError {
    #[error("iteration budget exhausted (duality gap {0:.3e})")]
    Budget(f64),
    #[error("capped simplex empty on the support of the reference weights")]
    Infeasible,
    #[error("grid oracle supports dimension <= 3, got {0}")]
    Dimension(usize),
}

/// Lagrangian lower bound on `min KL(w ‖ q)` over the capped simplex:
/// `Σ_i min_{0 ≤ u ≤ cap} (u ln(u/q_i) + λu) - λ`.
fn dual_bound(q: &[f64], cap: f64, lambda: f64) -> f64 {
    q.iter()
        .map(|&qi| {
            let u = (qi * (-1.0 - lambda).exp()).min(cap);
            u * (u / qi).ln() + lambda * u
        })
        .sum::<f64>()
        - lambda
}

/// Maximizes the concave [`dual_bound`] by golden section over a bracket
/// read off the current gradient.
fn best_multiplier(q: &[f64], cap: f64, g: &[f64]) -> f64 {
    let lo = -g.iter().cloned().fold(f64::NEG_INFINITY, f64::max) - 1.0;
    let hi = -g.iter().cloned().fold(f64::INFINITY, f64::min) + 1.0;
    let ratio = (5f64.sqrt() - 1.0) / 2.0;
    let (mut a, mut b) = (lo, hi);
    for _ in 0..200 {
        let c = b - ratio * (b - a);
        let d = a + ratio * (b - a);
        if dual_bound(q, cap, c) < dual_bound(q, cap, d) {
            a = c;
        } else {
            b = d;
        }
    }
    0.5 * (a + b)
}

/// Diagonally scaled projected gradient (Hessian metric `diag(1/w)`) with
/// Armijo backtracking on `KL(w ‖ ŵ)` over the capped simplex restricted to
/// the support of `ŵ`. Stops when the Lagrangian duality gap falls below
/// `1e-12`, which certifies the objective value.
pub fn brute_kl_project(w_hat: &[f64], cap: f64, budget: usize) -> Result<Vec<f64>, OracleError> {
    let support: Vec<usize> = (0..w_hat.len()).filter(|&i| w_hat[i] > 0.0).collect();
    let s = support.len();
    if s == 0 || cap * (s as f64) < 1.0 - 1e-12 {
        return Err(OracleError::Infeasible);
    }
    let q: Vec<f64> = support.iter().map(|&i| w_hat[i]).collect();
    let objective = |w: &[f64]| kl(w, &q);
    let mut w = vec![1.0 / s as f64; s];
    if cap * (s as f64) <= 1.0 + 1e-12 {
        // The uniform point is the only feasible one.
        let mut out = vec![0.0; w_hat.len()];
        support.iter().for_each(|&i| out[i] = 1.0 / s as f64);
        return Ok(out);
    }
    let mut gap = f64::INFINITY;
    for _ in 0..budget {
        let g: Vec<f64> = w.iter().zip(&q).map(|(&a, &b)| (a / b).ln() + 1.0).collect();
        let lambda = best_multiplier(&q, cap, &g);
        let f0 = objective(&w);
        gap = f0 - dual_bound(&q, cap, lambda);
        if gap <= 1e-12 {
            break;
        }
        let lo: Vec<f64> = w.iter().map(|&wi| 0.01 * wi).collect();
        let mut t = 1.0;
        let next = loop {
            let y: Vec<f64> = w.iter().zip(&g).map(|(&wi, &gi)| wi - t * wi * gi).collect();
            let trial = scaled_project(&y, &w, &lo, cap);
            let decrease: f64 = g.iter().zip(trial.iter().zip(&w)).map(|(gi, (a, b))| gi * (a - b)).sum();
            if objective(&trial) <= f0 + 1e-4 * decrease.min(0.0) || t < 1e-20 {
                break trial;
            }
            t *= 0.5;
        };
        w = next;
    }
    if gap > 1e-12 {
        return Err(OracleError::Budget(gap));
    }
    let mut out = vec![0.0; w_hat.len()];
    for (&i, &x) in support.iter().zip(&w) {
        out[i] = x;
    }
    Ok(out)
}

/// A feasible point of the capped simplex: random weights shrunk toward uniform.
pub fn random_capped_simplex_point<R: Rng + ?Sized>(rng: &mut R, n: usize, cap: f64) -> Vec<f64> {
    let raw: Vec<f64> = (0..n).map(|_| -rng.random::<f64>().max(1e-300).ln()).collect();
    let total: f64 = raw.iter().sum();
    let x: Vec<f64> = raw.iter().map(|r| r / total).collect();
    let u = 1.0 / n as f64;
    let top = x.iter().cloned().fold(0.0, f64::max);
    let t = if top > cap { (cap - u) / (top - u) } else { 1.0 };
    let t = t * rng.random::<f64>().sqrt();
    x.iter().map(|&xi| t * xi + (1.0 - t) * u).collect()
}

#[derive(Debug, Clone)]
pub struct GridMinimum {
    /// Smallest objective value over the grid.
    pub minimum: f64,
    /// Covering radius of the grid; the true minimum is within this of `minimum`.
    pub cover: f64,
    pub argmin: DVector<f64>,
}

/// Minimum of `max_j (|x - c_j| - R_j)` over a regular grid spanning the
/// bounding box of the centers.
pub fn grid_ball_minimum(centers: &[DVector<f64>], radii: &[f64], per_axis: usize) -> GridMinimum {
    let p = centers[0].len();
    let lo: Vec<f64> = (0..p).map(|d| centers.iter().map(|c| c[d]).fold(f64::INFINITY, f64::min)).collect();
    let hi: Vec<f64> = (0..p).map(|d| centers.iter().map(|c| c[d]).fold(f64::NEG_INFINITY, f64::max)).collect();
    let steps = per_axis.max(2) - 1;
    let width: Vec<f64> = (0..p).map(|d| (hi[d] - lo[d]) / steps as f64).collect();
    let cover = 0.5 * width.iter().map(|w| w * w).sum::<f64>().sqrt();
    let mut idx = vec![0usize; p];
    let mut best = f64::INFINITY;
    let mut argmin = DVector::zeros(p);
    loop {
        let x = DVector::from_iterator(p, (0..p).map(|d| lo[d] + idx[d] as f64 * width[d]));
        let value = centers
            .iter()
            .zip(radii)
            .map(|(c, r)| (&x - c).norm() - r)
            .fold(f64::NEG_INFINITY, f64::max);
        if value < best {
            best = value;
            argmin = x;
        }
        let mut d = 0;
        while d < p {
            idx[d] += 1;
            if idx[d] <= steps {
                break;
            }
            idx[d] = 0;
            d += 1;
        }
        if d == p {
            break;
        }
    }
    GridMinimum {
        minimum: best,
        cover,
        argmin,
    }
}

/// Grid search for the two-sided margin problem: over `grid_size` directions
/// of length `radius`, maximize the `(K' - k)`-th largest `|<z_i, v>|`.
/// Returns a lower bound on the optimum.
pub fn brute_margin(
    points: &DMatrix<f64>,
    slack: usize,
    radius: f64,
    grid_size: usize,
) -> Result<(f64, DVector<f64>), OracleError> {
    let p = points.ncols();
    let kk = points.nrows();
    let directions: Vec<DVector<f64>> = match p {
        1 => vec![DVector::from_element(1, 1.0), DVector::from_element(1, -1.0)],
        2 => (0..grid_size)
            .map(|j| {
                let t = std::f64::consts::TAU * j as f64 / grid_size as f64;
                DVector::from_vec(vec![t.cos(), t.sin()])
            })
            .collect(),
        3 => {
            let golden = std::f64::consts::PI * (3.0 - 5f64.sqrt());
            (0..grid_size)
                .map(|j| {
                    let zc = 1.0 - 2.0 * (j as f64 + 0.5) / grid_size as f64;
                    let r = (1.0 - zc * zc).sqrt();
                    let t = golden * j as f64;
                    DVector::from_vec(vec![r * t.cos(), r * t.sin(), zc])
                })
                .collect()
        }
        other => return Err(OracleError::Dimension(other)),
    };
    let rank = kk - slack;
    let mut best = (f64::NEG_INFINITY, DVector::zeros(p));
    for u in directions {
        let v = radius * u;
        let mut proj: Vec<f64> = (0..kk).map(|i| points.row(i).transpose().dot(&v).abs()).collect();
        proj.sort_by(|a, b| b.total_cmp(a));
        let theta = proj[rank - 1];
        if theta > best.0 {
            best = (theta, v);
        }
    }
    Ok(best)
}

/// Literal Hsu-Sabato median: for each point the smallest radius whose closed
/// ball holds more than half of the points, minimized over points.
pub fn brute_hsu_sabato(points: &[DVector<f64>]) -> usize {
    let k = points.len();
    let mut best = (f64::INFINITY, 0);
    for (i, z) in points.iter().enumerate() {
        let mut candidates: Vec<f64> = points.iter().map(|w| (w - z).norm()).collect();
        candidates.sort_by(f64::total_cmp);
        let radius = candidates
            .iter()
            .copied()
            .find(|&r| points.iter().filter(|w| (*w - z).norm() <= r).count() * 2 > k)
            .unwrap_or(f64::INFINITY);
        if radius < best.0 {
            best = (radius, i);
        }
    }
    best.1
}

/// Bucket averages `(1/B) Σ (y - <x, b>) x` by explicit double loop.
pub fn naive_bucket_scores(
    features: &DMatrix<f64>,
    labels: &DVector<f64>,
    buckets: &[Vec<usize>],
    b: &DVector<f64>,
) -> Vec<DVector<f64>> {
    let p = features.ncols();
    buckets
        .iter()
        .map(|rows| {
            let mut z = vec![0.0; p];
            for &r in rows {
                let mut fitted = 0.0;
                for j in 0..p {
                    fitted += features[(r, j)] * b[j];
                }
                let resid = labels[r] - fitted;
                for j in 0..p {
                    z[j] += resid * features[(r, j)];
                }
            }
            DVector::from_iterator(p, z.into_iter().map(|s| s / rows.len() as f64))
        })
        .collect()
}

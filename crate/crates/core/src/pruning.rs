//! Median-of-least-squares initialization and pruning of the second batch.

use std::ops::Range;

use crate::model::{ConfigError, LabeledDataset, ProblemDims};
use crate::numerics::bucket_least_squares;
use crate::Vector;

/// Split of `rows` consecutive indices into equal contiguous buckets.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BucketPartition {
    pub count: usize,
    pub size: usize,
}

impl BucketPartition {
    pub fn new(rows: usize, count: usize) -> Result<Self, ConfigError> {
        if count == 0 || rows == 0 {
            return Err(ConfigError::NonPositive("bucket count"));
        }
        if rows % count != 0 {
            return Err(ConfigError::NotDivisible { n: rows, k: count });
        }
        Ok(Self {
            count,
            size: rows / count,
        })
    }

    pub fn rows(&self) -> usize {
        self.count * self.size
    }

    pub fn bucket(&self, i: usize) -> Range<usize> {
        i * self.size..(i + 1) * self.size
    }

    pub fn members(&self) -> Vec<Vec<usize>> {
        (0..self.count).map(|i| self.bucket(i).collect()).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PruningOutput {
    pub b0: Vector,
    /// Largest `|y - <x, b0>| ∨ |x|` among kept rows.
    pub r_star_m: f64,
    /// Kept second-batch rows, in their original order.
    pub pruned: LabeledDataset,
    /// Positions of the kept rows within the second batch, ascending.
    pub kept_indices: Vec<usize>,
    /// Partition of `pruned` into buckets of the original size.
    pub partition: BucketPartition,
    pub dims: ProblemDims,
}

/// Index and value of the point whose `(⌊K/2⌋+1)`-th nearest member of the
/// set (itself included) is closest. Ties go to the lowest index.
pub fn hsu_sabato_median(points: &[Vector]) -> (usize, Vector) {
    let k = points.len();
    assert!(k > 0, "median of an empty set");
    let rank = k / 2;
    let mut dist = vec![0.0; k];
    let mut best = (f64::INFINITY, 0usize);
    for (i, z) in points.iter().enumerate() {
        for (d, w) in dist.iter_mut().zip(points) {
            *d = (w - z).norm();
        }
        let (_, radius, _) = dist.select_nth_unstable_by(rank, f64::total_cmp);
        if *radius < best.0 {
            best = (*radius, i);
        }
    }
    (best.1, points[best.1].clone())
}

/// Bucket least squares on the first `n` rows, their median as `b0`, then
/// the `m` second-batch rows with the smallest `|y - <x, b0>| ∨ |x|`.
/// Ties are broken toward the lower row index.
pub fn prune(dataset: &LabeledDataset, buckets: usize, eta: f64) -> Result<PruningOutput, ConfigError> {
    let rows = dataset.len();
    if rows % 2 != 0 {
        return Err(ConfigError::Invalid(format!("sample has an odd number of rows ({rows})")));
    }
    let n = rows / 2;
    let dims = ProblemDims::new(n, dataset.dim(), buckets, eta, 0.0)?;
    let first = BucketPartition::new(n, buckets)?;
    let estimates: Vec<Vector> = (0..first.count)
        .map(|i| {
            let r = first.bucket(i);
            let x = dataset.features.rows(r.start, r.len()).into_owned();
            let y = dataset.labels.rows(r.start, r.len()).into_owned();
            bucket_least_squares(&x, &y)
        })
        .collect();
    let (_, b0) = hsu_sabato_median(&estimates);

    let scores: Vec<f64> = (n..rows)
        .map(|r| dataset.residual(r, &b0).abs().max(dataset.features.row(r).norm()))
        .collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]).then(a.cmp(&b)));
    let mut kept_indices = order[..dims.m].to_vec();
    let r_star_m = scores[order[dims.m - 1]];
    kept_indices.sort_unstable();
    let absolute: Vec<usize> = kept_indices.iter().map(|&i| n + i).collect();
    Ok(PruningOutput {
        b0,
        r_star_m,
        pruned: dataset.select_rows(&absolute),
        kept_indices,
        partition: BucketPartition::new(dims.m, dims.pruned_buckets)?,
        dims,
    })
}

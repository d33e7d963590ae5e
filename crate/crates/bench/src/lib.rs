//! Seeded inputs shared by the benchmarks.

use robreg_core::datagen::{contaminate, generate_clean, ContaminationKind, ContaminationStrategy, DistributionSpec};
use robreg_core::{LabeledDataset, Matrix, ProblemDims, Vector};

/// A contaminated Gaussian sample of `2n` rows, `ε = 0.05`, cluster attack.
pub fn dataset(n: usize, p: usize, buckets: usize, seed: u64) -> LabeledDataset {
    let dims = ProblemDims::new(n, p, buckets, 0.2, 0.05).expect("valid dims");
    let b_star = Vector::from_element(p, 1.0);
    let clean = generate_clean(&dims, &DistributionSpec::gaussian(p, 1.0), &b_star, seed).expect("clean sample");
    let attack = ContaminationStrategy::new(ContaminationKind::ClusterAtPoint, 1e6);
    contaminate(&clean, &attack, dims.outliers, seed).expect("contaminated sample")
}

/// `XᵀX / rows` of a Gaussian design.
pub fn gram(p: usize, seed: u64) -> Matrix {
    let rows = 4 * p;
    let dims = ProblemDims::new(rows, p, rows, 0.5, 0.0).expect("valid dims");
    let data = generate_clean(&dims, &DistributionSpec::gaussian(p, 1.0), &Vector::zeros(p), seed).expect("sample");
    data.features.tr_mul(&data.features) / (2 * rows) as f64
}

/// Positive, uneven weights summing to one.
pub fn weights(len: usize) -> Vec<f64> {
    let raw: Vec<f64> = (0..len).map(|i| 1.0 + ((i * 7919) % 97) as f64 * (i % 5) as f64).collect();
    let total: f64 = raw.iter().sum();
    raw.into_iter().map(|w| w / total).collect()
}

//! The SVD-based summary against an eigendecomposition of `AᵀA`.

use kacz_core::linalg::{DenseMatrix, LinearSystem, SpectralSummary};
use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// `m x n` matrix of rank `r` as a product of two random factors.
fn low_rank(m: usize, n: usize, r: usize, seed: u64) -> DMatrix<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let b = DMatrix::from_fn(m, r, |_, _| rng.random_range(-1.0..1.0));
    let c = DMatrix::from_fn(r, n, |_, _| rng.random_range(-1.0..1.0));
    b * c
}

fn system(a: &DMatrix<f64>, b: &DVector<f64>) -> LinearSystem {
    let rows: Vec<Vec<f64>> = (0..a.nrows())
        .map(|i| a.row(i).iter().copied().collect())
        .collect();
    LinearSystem::build(
        DenseMatrix::from_rows(&rows).unwrap(),
        b.iter().copied().collect(),
    )
    .unwrap()
}

#[test]
fn rank_deficient_summary_matches_eigen_oracle() {
    for (seed, (m, n, r)) in [(12, 8, 3), (20, 30, 5), (40, 10, 10), (15, 15, 14)]
        .into_iter()
        .enumerate()
    {
        let a = low_rank(m, n, r, seed as u64);
        let mut rng = ChaCha8Rng::seed_from_u64(100 + seed as u64);
        let planted = DVector::from_fn(n, |_, _| rng.random_range(-2.0..2.0));
        let b = &a * &planted;
        let x0 = DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0));
        let sys = system(&a, &b);
        let summary = SpectralSummary::compute(&sys, x0.as_slice()).unwrap();

        let eig = SymmetricEigen::new(a.transpose() * &a);
        let top = eig.eigenvalues.max();
        let kept: Vec<usize> = (0..n)
            .filter(|&k| eig.eigenvalues[k] > 1e-10 * top)
            .collect();
        assert_eq!(summary.rank, r, "case {seed}");
        assert_eq!(kept.len(), r, "oracle rank, case {seed}");

        let lam_min = kept
            .iter()
            .map(|&k| eig.eigenvalues[k])
            .fold(f64::INFINITY, f64::min);
        assert!(
            (summary.sigma_min_sq - lam_min).abs() <= 1e-9 * top,
            "case {seed}"
        );
        assert!((summary.sigma_max - top.sqrt()).abs() <= 1e-10 * top.sqrt());

        // x* = x0 + Σ_k v_k v_kᵀ Aᵀ (b - A x0) / λ_k
        let g = a.transpose() * (&b - &a * &x0);
        let mut x_star = x0.clone();
        for &k in &kept {
            let v = eig.eigenvectors.column(k);
            x_star += v * (v.dot(&g) / eig.eigenvalues[k]);
        }
        let err = (DVector::from_column_slice(&summary.x_star) - &x_star).norm();
        assert!(err <= 1e-8 * (1.0 + x_star.norm()), "case {seed}: {err}");
    }
}

use std::sync::OnceLock;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;

use super::matrix::{Matrix, RowView};
use super::LinalgError;

/// Default row-count cap for the O(m^2) coherence computation.
pub const DEFAULT_DELTA_ROW_CAP: usize = 2000;

/// Largest row count for which rows of `A Aᵀ` are memoized.
pub const GRAM_CACHE_MAX_ROWS: usize = 4096;

/// |cos| at or above `1 - PAIRWISE_DEPENDENCE_TOL` counts as linearly dependent.
pub const PAIRWISE_DEPENDENCE_TOL: f64 = 1e-12;

/// A consistent linear system `Ax = b` with cached row norms.
///
/// Immutable after construction. Rows of `A Aᵀ` are memoized lazily (for
/// `m <= GRAM_CACHE_MAX_ROWS`) so that the incremental residual update
/// `r += alpha * A a_i` costs O(m) once a row has been touched.
#[derive(Debug)]
pub struct LinearSystem {
    a: Matrix,
    b: Vec<f64>,
    row_sq_norms: Vec<f64>,
    frob_sq: f64,
    row_sampler: WeightedIndex<f64>,
    gram: Option<Vec<OnceLock<Box<[f64]>>>>,
}

impl Clone for LinearSystem {
    fn clone(&self) -> Self {
        Self::build(self.a.clone(), self.b.clone()).expect("already validated")
    }
}

impl LinearSystem {
    /// Validates `A` and `b` and caches `‖a_i‖²` and `‖A‖_F²`.
    pub fn build(a: impl Into<Matrix>, b: Vec<f64>) -> Result<Self, LinalgError> {
        let a = a.into();
        let m = a.rows();
        if m < 2 {
            return Err(LinalgError::TooFewRows(m));
        }
        if b.len() != m {
            return Err(LinalgError::DimensionMismatch {
                expected: m,
                found: b.len(),
            });
        }
        let row_sq_norms: Vec<f64> = (0..m).map(|i| a.row(i).norm_sq()).collect();
        if let Some(i) = row_sq_norms
            .iter()
            .position(|&v| v <= 0.0 || !v.is_finite())
        {
            return Err(LinalgError::ZeroRow(i));
        }
        let frob_sq = row_sq_norms.iter().sum();
        let row_sampler =
            WeightedIndex::new(&row_sq_norms).map_err(|e| LinalgError::Sampling(e.to_string()))?;
        let gram = (m <= GRAM_CACHE_MAX_ROWS).then(|| (0..m).map(|_| OnceLock::new()).collect());
        Ok(Self {
            a,
            b,
            row_sq_norms,
            frob_sq,
            row_sampler,
            gram,
        })
    }

    pub fn matrix(&self) -> &Matrix {
        &self.a
    }

    pub fn rhs(&self) -> &[f64] {
        &self.b
    }

    pub fn rows(&self) -> usize {
        self.a.rows()
    }

    pub fn cols(&self) -> usize {
        self.a.cols()
    }

    pub fn row(&self, i: usize) -> RowView<'_> {
        self.a.row(i)
    }

    pub fn row_sq_norms(&self) -> &[f64] {
        &self.row_sq_norms
    }

    pub fn frob_sq(&self) -> f64 {
        self.frob_sq
    }

    /// Samples a row index with probability `‖a_i‖² / ‖A‖_F²`.
    pub fn sample_row_by_norm<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        self.row_sampler.sample(rng)
    }

    fn gram_row(&self, i: usize) -> Option<&[f64]> {
        let cache = self.gram.as_ref()?;
        Some(cache[i].get_or_init(|| self.a.row_product(i).into_boxed_slice()))
    }

    /// `<a_i, a_j>`.
    pub fn row_dot(&self, i: usize, j: usize) -> f64 {
        if i == j {
            return self.row_sq_norms[i];
        }
        if let Some(cache) = &self.gram {
            if let Some(row) = cache[i].get() {
                return row[j];
            }
            if let Some(row) = cache[j].get() {
                return row[i];
            }
        }
        self.a.row(i).dot_row(&self.a.row(j))
    }

    /// `out += alpha * A a_i`.
    pub fn add_scaled_row_product(&self, i: usize, alpha: f64, out: &mut [f64]) {
        if alpha == 0.0 {
            return;
        }
        match self.gram_row(i) {
            Some(g) => {
                for (o, gi) in out.iter_mut().zip(g) {
                    *o += alpha * gi;
                }
            }
            None => self.a.add_scaled_row_product(i, alpha, out),
        }
    }

    /// `Ax - b`, by a full pass over the stored matrix.
    pub fn residual(&self, x: &[f64]) -> Result<Vec<f64>, LinalgError> {
        if x.len() != self.cols() {
            return Err(LinalgError::DimensionMismatch {
                expected: self.cols(),
                found: x.len(),
            });
        }
        Ok((0..self.rows())
            .map(|i| self.a.row(i).dot(x) - self.b[i])
            .collect())
    }

    /// `(γ1, γ2)`: `‖A‖_F²` minus the smallest, resp. two smallest, squared row norms.
    ///
    /// These equal the maxima over excluded indices; `m = 2` gives `γ2 = 0`.
    pub fn gammas(&self) -> (f64, f64) {
        let (mut lo1, mut lo2) = (f64::INFINITY, f64::INFINITY);
        for &v in &self.row_sq_norms {
            if v < lo1 {
                lo2 = lo1;
                lo1 = v;
            } else if v < lo2 {
                lo2 = v;
            }
        }
        let gamma1 = self.frob_sq - lo1;
        let gamma2 = if self.rows() == 2 {
            0.0
        } else {
            self.frob_sq - lo1 - lo2
        };
        (gamma1, gamma2)
    }

    /// Minimum absolute cosine between distinct rows, capped at
    /// [`DEFAULT_DELTA_ROW_CAP`] rows.
    pub fn delta(&self) -> Result<f64, LinalgError> {
        self.delta_with_cap(Some(DEFAULT_DELTA_ROW_CAP))
    }

    /// Like [`delta`](Self::delta) with an explicit cap; `None` lifts it.
    pub fn delta_with_cap(&self, cap: Option<usize>) -> Result<f64, LinalgError> {
        let m = self.rows();
        if let Some(cap) = cap {
            if m > cap {
                return Err(LinalgError::SizeCapExceeded {
                    what: "coherence",
                    size: m,
                    cap,
                });
            }
        }
        let norms: Vec<f64> = self.row_sq_norms.iter().map(|v| v.sqrt()).collect();
        let mut best = f64::INFINITY;
        for i in 0..m {
            let ai = self.a.row(i);
            for j in (i + 1)..m {
                let cos = (ai.dot_row(&self.a.row(j)) / (norms[i] * norms[j])).abs();
                if cos >= 1.0 - PAIRWISE_DEPENDENCE_TOL {
                    return Err(LinalgError::PairwiseDependentRows(i, j));
                }
                best = best.min(cos);
            }
        }
        Ok(best)
    }

    /// γ1, γ2 and δ together.
    pub fn coherence(&self, cap: Option<usize>) -> Result<CoherenceSummary, LinalgError> {
        let (gamma1, gamma2) = self.gammas();
        let delta = self.delta_with_cap(cap)?;
        Ok(CoherenceSummary {
            gamma1,
            gamma2,
            delta,
        })
    }
}

/// Row-coherence quantities of a system.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct CoherenceSummary {
    pub gamma1: f64,
    pub gamma2: f64,
    pub delta: f64,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{CsrMatrix, DenseMatrix};
    use proptest::prelude::*;

    fn dense(rows: &[&[f64]]) -> DenseMatrix {
        DenseMatrix::from_rows(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap()
    }

    fn example() -> LinearSystem {
        LinearSystem::build(
            dense(&[&[1.0, 0.0], &[0.0, 1.0], &[1.0, 1.0]]),
            vec![1.0, 2.0, 3.0],
        )
        .unwrap()
    }

    // Literal max-over-excluded-index definitions.
    fn brute_gammas(norms: &[f64]) -> (f64, f64) {
        let m = norms.len();
        let mut g1 = f64::NEG_INFINITY;
        let mut g2 = f64::NEG_INFINITY;
        for i in 0..m {
            let s: f64 = (0..m).filter(|&j| j != i).map(|j| norms[j]).sum();
            g1 = g1.max(s);
            for j in 0..m {
                if j != i {
                    let s: f64 = (0..m).filter(|&k| k != i && k != j).map(|k| norms[k]).sum();
                    g2 = g2.max(s);
                }
            }
        }
        (g1, g2)
    }

    fn brute_delta(rows: &[Vec<f64>]) -> f64 {
        let mut best = f64::INFINITY;
        for i in 0..rows.len() {
            for j in 0..rows.len() {
                if i != j {
                    let ni: f64 = rows[i].iter().map(|v| v * v).sum::<f64>().sqrt();
                    let nj: f64 = rows[j].iter().map(|v| v * v).sum::<f64>().sqrt();
                    let c: f64 = rows[i].iter().zip(&rows[j]).map(|(a, b)| a * b).sum();
                    best = best.min((c / (ni * nj)).abs());
                }
            }
        }
        best
    }

    #[test]
    fn build_caches_norms() {
        let sys = example();
        assert_eq!(sys.row_sq_norms(), &[1.0, 1.0, 2.0]);
        assert_eq!(sys.frob_sq(), 4.0);
        let id = LinearSystem::build(dense(&[&[1.0, 0.0], &[0.0, 1.0]]), vec![0.0, 0.0]).unwrap();
        assert_eq!(id.row_sq_norms(), &[1.0, 1.0]);
    }

    #[test]
    fn build_rejects_bad_input() {
        let err = LinearSystem::build(dense(&[&[1.0, 0.0], &[0.0, 0.0]]), vec![1.0, 1.0]);
        assert!(matches!(err, Err(LinalgError::ZeroRow(1))));
        let err = LinearSystem::build(dense(&[&[1.0, 0.0], &[0.0, 1.0]]), vec![1.0]);
        assert!(matches!(err, Err(LinalgError::DimensionMismatch { .. })));
        let err = LinearSystem::build(dense(&[&[1.0, 0.0]]), vec![1.0]);
        assert!(matches!(err, Err(LinalgError::TooFewRows(1))));
        let sparse = CsrMatrix::from_triplets(2, 2, &[(0, 0, 1.0)]).unwrap();
        assert!(matches!(
            LinearSystem::build(sparse, vec![1.0, 1.0]),
            Err(LinalgError::ZeroRow(1))
        ));
    }

    #[test]
    fn gammas_examples() {
        assert_eq!(example().gammas(), (3.0, 2.0));
        let sys = LinearSystem::build(
            dense(&[&[2.0, 0.0], &[0.0, 1.0], &[1.0, 1.0]]),
            vec![0.0; 3],
        )
        .unwrap();
        assert_eq!(sys.gammas(), (6.0, 4.0));
        assert_eq!(brute_gammas(&[4.0, 1.0, 2.0]), (6.0, 4.0));
        let unit = LinearSystem::build(
            DenseMatrix::from_rows(&vec![vec![1.0]; 5]).unwrap(),
            vec![0.0; 5],
        )
        .unwrap();
        assert_eq!(unit.gammas(), (4.0, 3.0));
        let two = LinearSystem::build(dense(&[&[1.0, 0.0], &[0.0, 3.0]]), vec![0.0; 2]).unwrap();
        assert_eq!(two.gammas(), (9.0, 0.0));
    }

    #[test]
    fn delta_examples() {
        assert_eq!(example().delta().unwrap(), 0.0);
        let sys = LinearSystem::build(dense(&[&[1.0, 0.0], &[1.0, 1.0]]), vec![0.0; 2]).unwrap();
        assert!((sys.delta().unwrap() - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-10);
        let near = LinearSystem::build(dense(&[&[1.0, 0.0], &[1.0, 1e-13]]), vec![0.0; 2]).unwrap();
        assert!(matches!(
            near.delta(),
            Err(LinalgError::PairwiseDependentRows(0, 1))
        ));
    }

    #[test]
    fn delta_respects_cap() {
        let sys = example();
        assert!(matches!(
            sys.delta_with_cap(Some(2)),
            Err(LinalgError::SizeCapExceeded { .. })
        ));
        assert_eq!(sys.delta_with_cap(None).unwrap(), 0.0);
    }

    #[test]
    fn residual_examples() {
        let sys = example();
        assert_eq!(sys.residual(&[0.0, 0.0]).unwrap(), vec![-1.0, -2.0, -3.0]);
        assert_eq!(sys.residual(&[1.0, 2.0]).unwrap(), vec![0.0, 0.0, 0.0]);
        assert_eq!(sys.residual(&[1.5, 1.5]).unwrap(), vec![0.5, -0.5, 0.0]);
        assert!(matches!(
            sys.residual(&[0.0]),
            Err(LinalgError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn row_dot_uses_cache_consistently() {
        let sys = example();
        assert_eq!(sys.row_dot(0, 2), 1.0);
        let mut r = vec![0.0; 3];
        sys.add_scaled_row_product(2, 1.0, &mut r);
        assert_eq!(r, vec![1.0, 1.0, 2.0]);
        assert_eq!(sys.row_dot(2, 0), 1.0);
        assert_eq!(sys.row_dot(0, 2), 1.0);
        assert_eq!(sys.row_dot(1, 2), 1.0);
    }

    fn matrix_strategy() -> impl Strategy<Value = Vec<Vec<f64>>> {
        (2usize..=50, 2usize..=6).prop_flat_map(|(m, n)| {
            prop::collection::vec(
                prop::collection::vec(-10.0f64..10.0, n).prop_filter("nonzero row", |r| {
                    r.iter().map(|v| v * v).sum::<f64>() > 1e-6
                }),
                m,
            )
        })
    }

    proptest! {
        #[test]
        fn gammas_match_brute_force(rows in matrix_strategy()) {
            let m = rows.len();
            let sys = LinearSystem::build(DenseMatrix::from_rows(&rows).unwrap(), vec![0.0; m]).unwrap();
            let (g1, g2) = sys.gammas();
            let (b1, b2) = brute_gammas(sys.row_sq_norms());
            let scale = sys.frob_sq();
            prop_assert!((g1 - b1).abs() <= 1e-12 * scale);
            if m > 2 {
                prop_assert!((g2 - b2).abs() <= 1e-12 * scale);
            }
            let sum: f64 = sys.row_sq_norms().iter().sum();
            prop_assert!((sys.frob_sq() - sum).abs() <= 1e-12 * sys.frob_sq());
        }

        #[test]
        fn delta_matches_brute_force(rows in matrix_strategy()) {
            let m = rows.len();
            let sys = LinearSystem::build(DenseMatrix::from_rows(&rows).unwrap(), vec![0.0; m]).unwrap();
            match sys.delta() {
                Ok(d) => {
                    prop_assert!((d - brute_delta(&rows)).abs() <= 1e-12);
                    prop_assert!((0.0..1.0).contains(&d));
                    if m >= 3 {
                        let (g1, g2) = sys.gammas();
                        prop_assert!(g2 < g1 && g1 < sys.frob_sq());
                    }
                }
                Err(LinalgError::PairwiseDependentRows(..)) => {}
                Err(e) => prop_assert!(false, "unexpected error {e}"),
            }
        }
    }
}

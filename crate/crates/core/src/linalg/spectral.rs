use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::matrix::{dot, norm_sq};
use super::{LinalgError, LinearSystem};

/// Largest `min(m, n)` for which the dense SVD is attempted.
pub const SPECTRAL_DIM_CAP: usize = 5000;

/// Consistency tolerance: `‖A x* - b‖ <= CONSISTENCY_TOL * max(1, ‖b‖)`.
pub const CONSISTENCY_TOL: f64 = 1e-10;

/// Singular-value facts and the reference solution `x* = A†b + (I - A†A) x0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectralSummary {
    /// Smallest nonzero singular value, squared.
    pub sigma_min_sq: f64,
    pub sigma_max: f64,
    pub rank: usize,
    /// Projection of `x0` onto the solution set.
    pub x_star: Vec<f64>,
    /// Orthonormal basis of `Range(Aᵀ)`, one row per retained singular vector.
    #[serde(skip)]
    row_space: Vec<Vec<f64>>,
}

impl SpectralSummary {
    /// Dense SVD of `A`; singular values at or below
    /// `σ_max * max(m, n) * f64::EPSILON` are treated as zero.
    pub fn compute(sys: &LinearSystem, x0: &[f64]) -> Result<Self, LinalgError> {
        Self::compute_with_cap(sys, x0, SPECTRAL_DIM_CAP)
    }

    pub fn compute_with_cap(
        sys: &LinearSystem,
        x0: &[f64],
        cap: usize,
    ) -> Result<Self, LinalgError> {
        let (m, n) = (sys.rows(), sys.cols());
        if x0.len() != n {
            return Err(LinalgError::DimensionMismatch {
                expected: n,
                found: x0.len(),
            });
        }
        if m.min(n) > cap {
            return Err(LinalgError::SizeCapExceeded {
                what: "spectral summary",
                size: m.min(n),
                cap,
            });
        }
        let dense = sys.matrix().to_dense();
        let a = DMatrix::from_row_slice(m, n, dense.as_slice());
        let svd = a.svd(true, true);
        let u = svd.u.as_ref().ok_or(LinalgError::SvdFailed)?;
        let v_t = svd.v_t.as_ref().ok_or(LinalgError::SvdFailed)?;
        let sigma = &svd.singular_values;

        let sigma_max = sigma.iter().copied().fold(0.0, f64::max);
        let cutoff = sigma_max * (m.max(n) as f64) * f64::EPSILON;
        let kept: Vec<usize> = (0..sigma.len()).filter(|&k| sigma[k] > cutoff).collect();
        if kept.is_empty() {
            return Err(LinalgError::SvdFailed);
        }
        let sigma_min = kept.iter().map(|&k| sigma[k]).fold(f64::INFINITY, f64::min);

        // x* = x0 + A†(b - A x0)
        let r0: Vec<f64> = sys
            .residual(x0)
            .expect("length checked")
            .iter()
            .map(|v| -v)
            .collect();
        let mut x_star = x0.to_vec();
        let mut row_space = Vec::with_capacity(kept.len());
        for &k in &kept {
            let uk: Vec<f64> = u.column(k).iter().copied().collect();
            let coeff = dot(&uk, &r0) / sigma[k];
            let vk: Vec<f64> = v_t.row(k).iter().copied().collect();
            for (x, v) in x_star.iter_mut().zip(&vk) {
                *x += coeff * v;
            }
            row_space.push(vk);
        }

        let summary = Self {
            sigma_min_sq: sigma_min * sigma_min,
            sigma_max,
            rank: kept.len(),
            x_star,
            row_space,
        };
        let res = norm_sq(&sys.residual(&summary.x_star).expect("length checked")).sqrt();
        let scale = norm_sq(sys.rhs()).sqrt().max(1.0);
        if res > CONSISTENCY_TOL * scale {
            return Err(LinalgError::InconsistentSystem {
                residual: res,
                tolerance: CONSISTENCY_TOL * scale,
            });
        }
        Ok(summary)
    }

    /// Norm of the component of `v` orthogonal to `Range(Aᵀ)`.
    pub fn null_space_component_norm(&self, v: &[f64]) -> f64 {
        let mut rest = v.to_vec();
        for basis in &self.row_space {
            let c = dot(basis, v);
            for (r, b) in rest.iter_mut().zip(basis) {
                *r -= c * b;
            }
        }
        norm_sq(&rest).sqrt()
    }

    /// Condition number `σ_max / σ_min` over nonzero singular values.
    pub fn condition_number(&self) -> f64 {
        self.sigma_max / self.sigma_min_sq.sqrt()
    }
}

//! Prior precision blocks for latent components, including rank-deficient
//! structure matrices and their generalized log-determinants.

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::ModelError;

/// Eigenvalues below this threshold count as zero when computing ranks and
/// generalized determinants.
pub const EIGEN_TOL: f64 = 1e-9;

/// A symmetric nonnegative-definite precision block together with its rank
/// and the log generalized determinant (product of nonzero eigenvalues).
#[derive(Debug, Clone)]
pub struct PrecisionStructure {
    pub matrix: DMatrix<f64>,
    pub rank: usize,
    pub log_gdet: f64,
}

impl PrecisionStructure {
    /// Computes rank and log generalized determinant by eigendecomposition.
    pub fn from_matrix(matrix: DMatrix<f64>) -> Self {
        let eig = SymmetricEigen::new(matrix.clone());
        let mut rank = 0;
        let mut log_gdet = 0.0;
        for &l in eig.eigenvalues.iter() {
            if l > EIGEN_TOL {
                rank += 1;
                log_gdet += l.ln();
            }
        }
        Self {
            matrix,
            rank,
            log_gdet,
        }
    }

    /// The structure scaled by a positive precision `nu`. The generalized
    /// determinant obeys `log|nu S|* = rank ln nu + log|S|*`.
    pub fn scaled(&self, nu: f64) -> PrecisionStructure {
        PrecisionStructure {
            matrix: &self.matrix * nu,
            rank: self.rank,
            log_gdet: self.rank as f64 * nu.ln() + self.log_gdet,
        }
    }
}

/// Component kinds with a fixed structure matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StructureKind {
    /// Independent effects: identity, full rank.
    Iid,
    /// First-order random walk: `D^T D` for the first-difference matrix `D`,
    /// rank `T - 1` (the constant vector spans the null space).
    Rw1,
    /// Seasonal with period `m`: `A^T A` where row `t` of `A` sums entries
    /// `t..t+m-1`, rank `T - m + 1`.
    Seasonal,
}

/// Unit-precision structure matrix for the given kind.
pub fn structure_matrix(
    kind: StructureKind,
    t_len: usize,
    period: Option<usize>,
) -> Result<PrecisionStructure, ModelError> {
    if t_len < 2 {
        return Err(ModelError::TooFewTimePoints(2));
    }
    match kind {
        StructureKind::Iid => Ok(PrecisionStructure {
            matrix: DMatrix::identity(t_len, t_len),
            rank: t_len,
            log_gdet: 0.0,
        }),
        StructureKind::Rw1 => {
            let mut d = DMatrix::zeros(t_len - 1, t_len);
            for t in 0..t_len - 1 {
                d[(t, t)] = -1.0;
                d[(t, t + 1)] = 1.0;
            }
            let s = d.transpose() * d;
            let ps = PrecisionStructure::from_matrix(s);
            debug_assert_eq!(ps.rank, t_len - 1);
            Ok(ps)
        }
        StructureKind::Seasonal => {
            let m = period.ok_or(ModelError::MissingComponentInput("seasonal", "a period"))?;
            if m < 2 {
                return Err(ModelError::PeriodTooSmall(m));
            }
            if m > t_len {
                return Err(ModelError::PeriodTooLarge { period: m, t_len });
            }
            let rows = t_len - m + 1;
            let mut a = DMatrix::zeros(rows, t_len);
            for t in 0..rows {
                for j in 0..m {
                    a[(t, t + j)] = 1.0;
                }
            }
            let s = a.transpose() * &a;
            let ps = PrecisionStructure::from_matrix(s);
            debug_assert_eq!(ps.rank, rows);
            Ok(ps)
        }
    }
}

/// Precision matrix of a stationary AR(1) process of length `t_len` with
/// innovation precision `v` and correlation `rho`: tridiagonal with diagonal
/// `v*(1, 1+rho^2, ..., 1+rho^2, 1)` and off-diagonal `-v*rho`. Full rank
/// with `log det = T ln v + ln(1 - rho^2)`.
pub fn ar1_precision(t_len: usize, v: f64, rho: f64) -> Result<PrecisionStructure, ModelError> {
    if t_len < 2 {
        return Err(ModelError::TooFewTimePoints(2));
    }
    if !(rho.abs() < 1.0) {
        return Err(ModelError::NonStationaryRho(rho));
    }
    if !(v > 0.0) {
        return Err(ModelError::NonPositivePrecision(v));
    }
    let mut q = DMatrix::zeros(t_len, t_len);
    for t in 0..t_len {
        let diag = if t == 0 || t == t_len - 1 {
            1.0
        } else {
            1.0 + rho * rho
        };
        q[(t, t)] = v * diag;
        if t + 1 < t_len {
            q[(t, t + 1)] = -v * rho;
            q[(t + 1, t)] = -v * rho;
        }
    }
    Ok(PrecisionStructure {
        matrix: q,
        rank: t_len,
        log_gdet: t_len as f64 * v.ln() + (1.0 - rho * rho).ln(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn rw1_t3_matrix_and_rank() {
        let s = structure_matrix(StructureKind::Rw1, 3, None).unwrap();
        let expected = DMatrix::from_row_slice(3, 3, &[1.0, -1.0, 0.0, -1.0, 2.0, -1.0, 0.0, -1.0, 1.0]);
        assert_relative_eq!(s.matrix, expected, epsilon = 1e-12);
        assert_eq!(s.rank, 2);
        // Nonzero eigenvalues of the T=3 first-difference structure are 1 and 3.
        assert_relative_eq!(s.log_gdet, 3.0_f64.ln(), epsilon = 1e-10);
    }

    #[test]
    fn iid_is_identity() {
        let s = structure_matrix(StructureKind::Iid, 4, None).unwrap();
        assert_relative_eq!(s.matrix, DMatrix::identity(4, 4), epsilon = 0.0);
        assert_eq!(s.rank, 4);
        assert_eq!(s.log_gdet, 0.0);
    }

    #[test]
    fn seasonal_rank_by_eigenvalues() {
        let s = structure_matrix(StructureKind::Seasonal, 5, Some(3)).unwrap();
        assert_eq!(s.rank, 3); // T - m + 1
        let eig = SymmetricEigen::new(s.matrix.clone());
        let numeric_rank = eig.eigenvalues.iter().filter(|&&l| l > EIGEN_TOL).count();
        assert_eq!(numeric_rank, 3);
    }

    #[test]
    fn seasonal_period_bounds() {
        assert!(matches!(
            structure_matrix(StructureKind::Seasonal, 5, Some(6)),
            Err(ModelError::PeriodTooLarge { .. })
        ));
        assert!(matches!(
            structure_matrix(StructureKind::Seasonal, 5, Some(1)),
            Err(ModelError::PeriodTooSmall(1))
        ));
    }

    #[test]
    fn rank_identities_across_sizes() {
        for t in 3..=30 {
            let rw1 = structure_matrix(StructureKind::Rw1, t, None).unwrap();
            assert_eq!(rw1.rank, t - 1, "rw1 rank at T={t}");
            for m in [2usize, 4, 12] {
                if m <= t {
                    let s = structure_matrix(StructureKind::Seasonal, t, Some(m)).unwrap();
                    assert_eq!(s.rank, t - m + 1, "seasonal rank at T={t}, m={m}");
                }
            }
        }
    }

    #[test]
    fn rw1_annihilates_constant_vector() {
        let s = structure_matrix(StructureKind::Rw1, 12, None).unwrap();
        let ones = nalgebra::DVector::from_element(12, 1.0);
        let product = &s.matrix * ones;
        assert!(product.amax() <= 1e-12);
    }

    #[test]
    fn generalized_determinant_scaling_law() {
        for (kind, m) in [
            (StructureKind::Iid, None),
            (StructureKind::Rw1, None),
            (StructureKind::Seasonal, Some(4)),
        ] {
            let s = structure_matrix(kind, 10, m).unwrap();
            let nu = 7.0;
            let scaled = PrecisionStructure::from_matrix(&s.matrix * nu);
            assert_eq!(scaled.rank, s.rank);
            assert_relative_eq!(
                scaled.log_gdet - s.log_gdet,
                s.rank as f64 * nu.ln(),
                epsilon = 1e-10
            );
            // The analytic shortcut agrees with recomputation.
            assert_relative_eq!(s.scaled(nu).log_gdet, scaled.log_gdet, epsilon = 1e-10);
        }
    }

    #[test]
    fn ar1_rho_zero_is_scaled_identity() {
        let q = ar1_precision(4, 2.5, 0.0).unwrap();
        assert_relative_eq!(q.matrix, DMatrix::identity(4, 4) * 2.5, epsilon = 1e-12);
        assert_relative_eq!(q.log_gdet, 4.0 * 2.5_f64.ln(), epsilon = 1e-12);
    }

    #[test]
    fn ar1_t2_stationary_variance() {
        let q = ar1_precision(2, 1.0, 0.5).unwrap();
        let expected = DMatrix::from_row_slice(2, 2, &[1.0, -0.5, -0.5, 1.0]);
        assert_relative_eq!(q.matrix, expected, epsilon = 1e-12);
        let cov = q.matrix.clone().try_inverse().unwrap();
        // Stationary variance v^{-1} (1 - rho^2)^{-1} = 1 / 0.75 = 4/3.
        assert_relative_eq!(cov[(0, 0)], 4.0 / 3.0, epsilon = 1e-12);
    }

    #[test]
    fn ar1_covariance_is_stationary_for_dense_inverse() {
        let (v, rho) = (1.7, -0.6);
        for t_len in [5usize, 12, 20] {
            let q = ar1_precision(t_len, v, rho).unwrap();
            let cov = q.matrix.clone().try_inverse().unwrap();
            let scale = (1.0 / v) / (1.0 - rho * rho);
            for i in 0..t_len {
                for j in 0..t_len {
                    let expected = scale * rho.powi((i as i32 - j as i32).abs());
                    assert_relative_eq!(cov[(i, j)], expected, epsilon = 1e-8);
                }
            }
            // log det from the analytic formula matches the dense eigenvalues.
            let dense = PrecisionStructure::from_matrix(q.matrix.clone());
            assert_relative_eq!(dense.log_gdet, q.log_gdet, epsilon = 1e-8);
        }
    }

    #[test]
    fn ar1_rejects_bad_parameters() {
        assert!(matches!(
            ar1_precision(5, 1.0, 1.0),
            Err(ModelError::NonStationaryRho(_))
        ));
        assert!(matches!(
            ar1_precision(5, 0.0, 0.2),
            Err(ModelError::NonPositivePrecision(_))
        ));
    }
}

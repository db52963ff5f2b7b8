use crate::error::{Error, Result};

use super::{complete_orthonormal, multilinear, multilinear_t, thin_svd, unfold_mode_n, DenseMatrix, DenseTensor3};

/// Tucker decomposition `core ×_1 u1 ×_2 u2 ×_3 u3`.
#[derive(Clone, Debug)]
pub struct TuckerFactors {
    pub core: DenseTensor3,
    pub u1: DenseMatrix,
    pub u2: DenseMatrix,
    pub u3: DenseMatrix,
}

impl TuckerFactors {
    pub fn factor(&self, mode: usize) -> &DenseMatrix {
        match mode {
            1 => &self.u1,
            2 => &self.u2,
            3 => &self.u3,
            _ => panic!("mode {mode} out of range"),
        }
    }

    pub fn factor_mut(&mut self, mode: usize) -> &mut DenseMatrix {
        match mode {
            1 => &mut self.u1,
            2 => &mut self.u2,
            3 => &mut self.u3,
            _ => panic!("mode {mode} out of range"),
        }
    }

    pub fn ranks(&self) -> (usize, usize, usize) {
        self.core.dims()
    }

    pub fn reconstruct(&self) -> DenseTensor3 {
        multilinear(&self.core, &self.u1, &self.u2, &self.u3).expect("consistent tucker shapes")
    }
}

/// Leading `rank` left singular vectors of the horizontal mode-n unfolding,
/// completed to `rank` columns when the unfolding has fewer.
pub(crate) fn leading_mode_basis(t: &DenseTensor3, mode: usize, rank: usize) -> Result<DenseMatrix> {
    let horizontal = unfold_mode_n(t, mode)?.transpose();
    let svd = thin_svd(&horizontal)?;
    Ok(complete_orthonormal(&svd.u.leading_columns(rank), rank))
}

/// Truncated higher-order SVD with multilinear ranks `ranks`.
pub fn hosvd(t: &DenseTensor3, ranks: (usize, usize, usize)) -> Result<TuckerFactors> {
    let (d1, d2, d3) = t.dims();
    for (mode, rank, max) in [(1, ranks.0, d1), (2, ranks.1, d2), (3, ranks.2, d3)] {
        if rank == 0 || rank > max {
            return Err(Error::RankOutOfRange { mode, rank, max });
        }
    }
    let u1 = leading_mode_basis(t, 1, ranks.0)?;
    let u2 = leading_mode_basis(t, 2, ranks.1)?;
    let u3 = leading_mode_basis(t, 3, ranks.2)?;
    let core = multilinear_t(t, &u1, &u2, &u3)?;
    Ok(TuckerFactors { core, u1, u2, u3 })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rank_one_exact() {
        let a = [1.0, 2.0];
        let b = [0.5, -1.0, 3.0];
        let c = [2.0, 2.0, -1.0, 0.25];
        let t = DenseTensor3::from_fn((2, 3, 4), |i, j, k| a[i] * b[j] * c[k]);
        let f = hosvd(&t, (1, 1, 1)).unwrap();
        let err = f.reconstruct().sub(&t).unwrap().frobenius_norm();
        assert!(err < 1e-12 * t.frobenius_norm());
    }

    #[test]
    fn rank_bounds() {
        let t = DenseTensor3::filled((2, 3, 4), 1.0);
        assert!(matches!(
            hosvd(&t, (0, 1, 1)),
            Err(Error::RankOutOfRange { mode: 1, .. })
        ));
        assert!(matches!(
            hosvd(&t, (1, 4, 1)),
            Err(Error::RankOutOfRange { mode: 2, .. })
        ));
    }

    #[test]
    fn rank_above_unfolding_rank_is_completed() {
        // mode-1 unfolding of a 4x1x2 tensor has only 2 rows worth of rank
        let t = DenseTensor3::from_fn((4, 1, 2), |i, _, k| (i + 3 * k) as f64);
        let f = hosvd(&t, (4, 1, 2)).unwrap();
        assert_eq!(f.u1.shape(), (4, 4));
        assert!(f.u1.orthonormality_defect() < 1e-12);
        assert!(f.reconstruct().sub(&t).unwrap().frobenius_norm() < 1e-12);
    }
}

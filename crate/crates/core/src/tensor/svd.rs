use crate::error::{Error, Result};

use super::DenseMatrix;

/// Thin singular value decomposition `m = u · diag(s) · vt`.
#[derive(Clone, Debug)]
pub struct SvdResult {
    /// `m x r`, orthonormal columns.
    pub u: DenseMatrix,
    /// Nonincreasing, nonnegative, length `r = min(m, n)`.
    pub s: Vec<f64>,
    /// `r x n`, orthonormal rows.
    pub vt: DenseMatrix,
}

impl SvdResult {
    pub fn reconstruct(&self) -> DenseMatrix {
        let mut us = self.u.clone();
        for r in 0..us.rows() {
            for (c, s) in self.s.iter().enumerate() {
                us[(r, c)] *= s;
            }
        }
        us.matmul(&self.vt).expect("consistent svd shapes")
    }

    /// `u · vt`, the orthonormal polar factor of the decomposed matrix.
    pub fn polar(&self) -> DenseMatrix {
        self.u.matmul(&self.vt).expect("consistent svd shapes")
    }
}

/// Eigendecomposition of a symmetric matrix, eigenvalues nonincreasing.
#[derive(Clone, Debug)]
pub struct SymmetricEigen {
    pub values: Vec<f64>,
    /// Eigenvectors as columns, in the order of `values`.
    pub vectors: DenseMatrix,
}

const SVD_EPS: f64 = 1e-15;
const MAX_SWEEPS: usize = 10_000;

/// Thin SVD with deterministic signs: the first entry of each left singular
/// vector whose magnitude exceeds 1e-12 is made nonnegative.
pub fn thin_svd(m: &DenseMatrix) -> Result<SvdResult> {
    if m.as_slice().iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("svd input"));
    }
    let (rows, cols) = m.shape();
    let r = rows.min(cols);
    if r == 0 {
        return Ok(SvdResult {
            u: DenseMatrix::zeros(rows, 0),
            s: Vec::new(),
            vt: DenseMatrix::zeros(0, cols),
        });
    }
    let svd = nalgebra::linalg::SVD::try_new(m.to_nalgebra(), true, true, SVD_EPS, MAX_SWEEPS)
        .ok_or(Error::NonFinite("svd did not converge"))?;
    let u = svd.u.expect("requested u");
    let vt = svd.v_t.expect("requested v_t");
    let s: Vec<f64> = svd.singular_values.iter().copied().collect();

    // try_new already orders, but ties and tiny negatives are normalized here
    let mut order: Vec<usize> = (0..r).collect();
    order.sort_by(|&a, &b| s[b].total_cmp(&s[a]).then(a.cmp(&b)));
    let mut u_out = DenseMatrix::zeros(rows, r);
    let mut vt_out = DenseMatrix::zeros(r, cols);
    let mut s_out = Vec::with_capacity(r);
    for (dst, &src) in order.iter().enumerate() {
        let sign = sign_of_first_significant((0..rows).map(|i| u[(i, src)]));
        for i in 0..rows {
            u_out[(i, dst)] = sign * u[(i, src)];
        }
        for j in 0..cols {
            vt_out[(dst, j)] = sign * vt[(src, j)];
        }
        s_out.push(s[src].max(0.0));
    }
    Ok(SvdResult {
        u: u_out,
        s: s_out,
        vt: vt_out,
    })
}

/// Symmetric eigendecomposition with eigenvalues sorted nonincreasing and the
/// same sign convention as [`thin_svd`] applied to each eigenvector.
pub fn symmetric_eigen(m: &DenseMatrix) -> Result<SymmetricEigen> {
    let n = m.rows();
    if m.cols() != n {
        return Err(Error::ShapeMismatch("eigendecomposition needs a square matrix".into()));
    }
    if m.as_slice().iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("eigen input"));
    }
    let mut sym = m.to_nalgebra();
    for i in 0..n {
        for j in 0..i {
            let avg = 0.5 * (sym[(i, j)] + sym[(j, i)]);
            sym[(i, j)] = avg;
            sym[(j, i)] = avg;
        }
    }
    let eig = nalgebra::linalg::SymmetricEigen::try_new(sym, SVD_EPS, MAX_SWEEPS)
        .ok_or(Error::NonFinite("eigendecomposition did not converge"))?;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));
    let mut vectors = DenseMatrix::zeros(n, n);
    let mut values = Vec::with_capacity(n);
    for (dst, &src) in order.iter().enumerate() {
        let sign = sign_of_first_significant((0..n).map(|i| eig.eigenvectors[(i, src)]));
        for i in 0..n {
            vectors[(i, dst)] = sign * eig.eigenvectors[(i, src)];
        }
        values.push(eig.eigenvalues[src]);
    }
    Ok(SymmetricEigen { values, vectors })
}

fn sign_of_first_significant(mut it: impl Iterator<Item = f64>) -> f64 {
    match it.find(|v| v.abs() > 1e-12) {
        Some(v) if v < 0.0 => -1.0,
        _ => 1.0,
    }
}

/// Extends the orthonormal columns of `u` to `target` columns by Gram-Schmidt
/// against the canonical basis. Columns of `u` are kept as they are.
pub fn complete_orthonormal(u: &DenseMatrix, target: usize) -> DenseMatrix {
    let rows = u.rows();
    let target = target.min(rows);
    let mut cols: Vec<Vec<f64>> = (0..u.cols().min(target)).map(|c| u.column(c)).collect();
    let mut e = 0;
    while cols.len() < target && e < rows {
        let mut v = vec![0.0; rows];
        v[e] = 1.0;
        e += 1;
        // two passes of classical Gram-Schmidt for stability
        for _ in 0..2 {
            for c in &cols {
                let dot: f64 = c.iter().zip(&v).map(|(a, b)| a * b).sum();
                for (vi, ci) in v.iter_mut().zip(c) {
                    *vi -= dot * ci;
                }
            }
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-8 {
            v.iter_mut().for_each(|x| *x /= norm);
            cols.push(v);
        }
    }
    DenseMatrix::from_fn(rows, cols.len(), |r, c| cols[c][r])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn diagonal_input() {
        let svd = thin_svd(&DenseMatrix::diag(&[3.0, 1.0])).unwrap();
        assert_eq!(svd.s, vec![3.0, 1.0]);
        assert!(svd.u.sub(&DenseMatrix::identity(2)).unwrap().frobenius_norm() < 1e-14);
        assert!(svd.vt.sub(&DenseMatrix::identity(2)).unwrap().frobenius_norm() < 1e-14);
    }

    #[test]
    fn rank_one_outer_product() {
        let x = [1.0, 2.0, -2.0];
        let y = [3.0, 4.0];
        let m = DenseMatrix::from_fn(3, 2, |r, c| x[r] * y[c]);
        let svd = thin_svd(&m).unwrap();
        assert!((svd.s[0] - 15.0).abs() < 1e-12);
        assert!(svd.s[1].abs() < 1e-12);
    }

    #[test]
    fn sign_convention_is_stable() {
        let m = DenseMatrix::from_fn(5, 3, |r, c| ((r * 7 + c * 3) % 5) as f64 - 2.0 + 0.1 * c as f64);
        let a = thin_svd(&m).unwrap();
        let b = thin_svd(&m.clone()).unwrap();
        assert_eq!(a.u, b.u);
        for c in 0..3 {
            let first = a.u.column(c).into_iter().find(|v| v.abs() > 1e-12).unwrap();
            assert!(first > 0.0);
        }
    }

    #[test]
    fn wide_and_empty_inputs() {
        let m = DenseMatrix::from_fn(2, 5, |r, c| (r + 1) as f64 * (c as f64).cos());
        let svd = thin_svd(&m).unwrap();
        assert_eq!(svd.u.shape(), (2, 2));
        assert_eq!(svd.vt.shape(), (2, 5));
        assert!(svd.reconstruct().sub(&m).unwrap().frobenius_norm() < 1e-12);
        assert!(thin_svd(&DenseMatrix::from_row_major(1, 1, vec![0.0]).unwrap()).is_ok());
    }

    #[test]
    fn completion_spans_space() {
        let u = DenseMatrix::from_fn(4, 1, |_, _| 0.5);
        let full = complete_orthonormal(&u, 4);
        assert_eq!(full.shape(), (4, 4));
        assert!(full.orthonormality_defect() < 1e-12);
        assert_eq!(full.column(0), u.column(0));
    }

    #[test]
    fn eigen_sorted() {
        let m = DenseMatrix::from_row_major(2, 2, vec![1.0, 0.0, 0.0, 4.0]).unwrap();
        let e = symmetric_eigen(&m).unwrap();
        assert_eq!(e.values, vec![4.0, 1.0]);
        assert_eq!(e.vectors.column(0), vec![0.0, 1.0]);
    }
}

//! Dense third-order tensors and the multilinear primitives built on them.
//!
//! # Layout
//!
//! A [`DenseTensor3`] of dims `(d1, d2, d3)` stores element `(i1, i2, i3)` at
//! linear offset `i1 + d1·(i2 + d2·i3)` (first index fastest).
//!
//! # Unfoldings
//!
//! [`unfold_mode_n`] returns the *vertical* mode-n unfolding: a matrix with
//! one column per index of mode n and one row per combination of the other two
//! indices. Rows are ordered with the lower remaining mode fastest, so for mode
//! 1 the row of `(i2, i3)` is `i2 + d2·i3`, for mode 2 the row of `(i1, i3)` is
//! `i1 + d1·i3`, and for mode 3 the row of `(i1, i2)` is `i1 + d1·i2`.
//!
//! The transpose of this matrix is the usual horizontal unfolding `X_(n)`
//! (`d_n` rows), which gives the identities
//!
//! ```text
//! unfold(t ×_n U, n)                   = unfold(t, n) · Uᵀ
//! unfold(g ×_1 U1 ×_2 U2 ×_3 U3, 1)ᵀ   = U1 · unfold(g, 1)ᵀ · (U3 ⊗ U2)ᵀ
//! ```
//!
//! and their mode-2 / mode-3 analogues with `(U3 ⊗ U1)` and `(U2 ⊗ U1)`.

mod matrix;
mod svd;
mod tucker;

pub use matrix::{kronecker, DenseMatrix};
pub use svd::{complete_orthonormal, symmetric_eigen, thin_svd, SvdResult, SymmetricEigen};
pub use tucker::{hosvd, TuckerFactors};

use crate::error::{Error, Result};

/// Dense third-order real tensor.
#[derive(Clone, Debug, PartialEq)]
pub struct DenseTensor3 {
    dims: (usize, usize, usize),
    values: Vec<f64>,
}

impl DenseTensor3 {
    pub fn zeros(dims: (usize, usize, usize)) -> Self {
        Self {
            dims,
            values: vec![0.0; dims.0 * dims.1 * dims.2],
        }
    }

    pub fn filled(dims: (usize, usize, usize), value: f64) -> Self {
        Self {
            dims,
            values: vec![value; dims.0 * dims.1 * dims.2],
        }
    }

    /// Wraps values already in the documented layout. Rejects a length that
    /// does not match `dims` and any non-finite value.
    pub fn from_vec(dims: (usize, usize, usize), values: Vec<f64>) -> Result<Self> {
        if values.len() != dims.0 * dims.1 * dims.2 {
            return Err(Error::ShapeMismatch(format!(
                "{} values for a {}x{}x{} tensor",
                values.len(),
                dims.0,
                dims.1,
                dims.2
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("tensor"));
        }
        Ok(Self { dims, values })
    }

    pub fn from_fn(dims: (usize, usize, usize), mut f: impl FnMut(usize, usize, usize) -> f64) -> Self {
        let mut values = Vec::with_capacity(dims.0 * dims.1 * dims.2);
        for i3 in 0..dims.2 {
            for i2 in 0..dims.1 {
                for i1 in 0..dims.0 {
                    values.push(f(i1, i2, i3));
                }
            }
        }
        Self { dims, values }
    }

    #[inline]
    pub fn dims(&self) -> (usize, usize, usize) {
        self.dims
    }

    #[inline]
    pub fn dim(&self, mode: usize) -> usize {
        match mode {
            1 => self.dims.0,
            2 => self.dims.1,
            3 => self.dims.2,
            _ => panic!("mode {mode} out of range"),
        }
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.values.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    #[inline]
    pub fn offset(&self, i1: usize, i2: usize, i3: usize) -> usize {
        debug_assert!(i1 < self.dims.0 && i2 < self.dims.1 && i3 < self.dims.2);
        i1 + self.dims.0 * (i2 + self.dims.1 * i3)
    }

    #[inline]
    pub fn get(&self, i1: usize, i2: usize, i3: usize) -> f64 {
        self.values[self.offset(i1, i2, i3)]
    }

    #[inline]
    pub fn set(&mut self, i1: usize, i2: usize, i3: usize, v: f64) {
        let o = self.offset(i1, i2, i3);
        self.values[o] = v;
    }

    #[inline]
    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    #[inline]
    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.values
    }

    /// Frontal slice `i3` (a `d1 x d2` image), contiguous in memory.
    pub fn slice3(&self, i3: usize) -> &[f64] {
        let n = self.dims.0 * self.dims.1;
        &self.values[i3 * n..(i3 + 1) * n]
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> DenseTensor3 {
        DenseTensor3 {
            dims: self.dims,
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    /// Elementwise combination of two tensors of equal dims.
    pub fn zip_map(&self, other: &DenseTensor3, f: impl Fn(f64, f64) -> f64) -> Result<DenseTensor3> {
        if self.dims != other.dims {
            return Err(Error::ShapeMismatch(format!("{:?} vs {:?}", self.dims, other.dims)));
        }
        Ok(DenseTensor3 {
            dims: self.dims,
            values: self.values.iter().zip(&other.values).map(|(&a, &b)| f(a, b)).collect(),
        })
    }

    pub fn sub(&self, other: &DenseTensor3) -> Result<DenseTensor3> {
        self.zip_map(other, |a, b| a - b)
    }

    pub fn add(&self, other: &DenseTensor3) -> Result<DenseTensor3> {
        self.zip_map(other, |a, b| a + b)
    }

    pub fn scale(&self, s: f64) -> DenseTensor3 {
        self.map(|v| v * s)
    }

    pub fn inner(&self, other: &DenseTensor3) -> Result<f64> {
        if self.dims != other.dims {
            return Err(Error::ShapeMismatch("inner product".into()));
        }
        Ok(self.values.iter().zip(&other.values).map(|(a, b)| a * b).sum())
    }

    pub fn frobenius_norm(&self) -> f64 {
        frobenius_norm(self)
    }

    pub fn min_max(&self) -> (f64, f64) {
        self.values
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
                (lo.min(v), hi.max(v))
            })
    }
}

fn check_mode(n: usize) -> Result<()> {
    if (1..=3).contains(&n) {
        Ok(())
    } else {
        Err(Error::InvalidMode(n))
    }
}

/// Splits a tensor around mode `n`: `(inner, d_n, outer)` such that the
/// element with mode-n index `i` sits at `a + inner·(i + d_n·b)`.
#[inline]
fn split_dims(dims: (usize, usize, usize), n: usize) -> (usize, usize, usize) {
    match n {
        1 => (1, dims.0, dims.1 * dims.2),
        2 => (dims.0, dims.1, dims.2),
        _ => (dims.0 * dims.1, dims.2, 1),
    }
}

/// Vertical mode-n unfolding (see the module docs for the index convention).
pub fn unfold_mode_n(t: &DenseTensor3, n: usize) -> Result<DenseMatrix> {
    check_mode(n)?;
    let (inner, dn, outer) = split_dims(t.dims, n);
    let mut out = vec![0.0; t.len()];
    // row = a + inner·b enumerates the other two indices, lower mode fastest
    for b in 0..outer {
        for i in 0..dn {
            let src = &t.values[inner * (i + dn * b)..inner * (i + dn * b) + inner];
            for (a, &v) in src.iter().enumerate() {
                out[(a + inner * b) * dn + i] = v;
            }
        }
    }
    DenseMatrix::from_row_major(inner * outer, dn, out)
}

/// Inverse of [`unfold_mode_n`].
pub fn fold_mode_n(m: &DenseMatrix, n: usize, dims: (usize, usize, usize)) -> Result<DenseTensor3> {
    check_mode(n)?;
    let (inner, dn, outer) = split_dims(dims, n);
    if m.shape() != (inner * outer, dn) {
        return Err(Error::ShapeMismatch(format!(
            "cannot fold a {}x{} matrix along mode {n} into {:?}",
            m.rows(),
            m.cols(),
            dims
        )));
    }
    let src = m.as_slice();
    let mut values = vec![0.0; dims.0 * dims.1 * dims.2];
    for b in 0..outer {
        for i in 0..dn {
            let dst = &mut values[inner * (i + dn * b)..inner * (i + dn * b) + inner];
            for (a, d) in dst.iter_mut().enumerate() {
                *d = src[(a + inner * b) * dn + i];
            }
        }
    }
    Ok(DenseTensor3 { dims, values })
}

/// Mode-n product `t ×_n u` with `u` of shape `J x d_n`; mode n of the result
/// has size `J`.
pub fn mode_n_product(t: &DenseTensor3, u: &DenseMatrix, n: usize) -> Result<DenseTensor3> {
    check_mode(n)?;
    let (inner, dn, outer) = split_dims(t.dims, n);
    if u.cols() != dn {
        return Err(Error::ShapeMismatch(format!(
            "mode-{n} product needs {dn} columns, matrix is {}x{}",
            u.rows(),
            u.cols()
        )));
    }
    let j_out = u.rows();
    let dims = match n {
        1 => (j_out, t.dims.1, t.dims.2),
        2 => (t.dims.0, j_out, t.dims.2),
        _ => (t.dims.0, t.dims.1, j_out),
    };
    let mut values = vec![0.0; inner * j_out * outer];
    for b in 0..outer {
        for j in 0..j_out {
            let dst_start = inner * (j + j_out * b);
            for (i, &w) in u.row(j).iter().enumerate() {
                if w == 0.0 {
                    continue;
                }
                let src_start = inner * (i + dn * b);
                let src = &t.values[src_start..src_start + inner];
                let dst = &mut values[dst_start..dst_start + inner];
                for (d, &s) in dst.iter_mut().zip(src) {
                    *d += w * s;
                }
            }
        }
    }
    Ok(DenseTensor3 { dims, values })
}

/// Mode-n product with the transpose, `t ×_n uᵀ`, for `u` of shape `d_n x J`.
pub fn mode_n_product_t(t: &DenseTensor3, u: &DenseMatrix, n: usize) -> Result<DenseTensor3> {
    mode_n_product(t, &u.transpose(), n)
}

/// `g ×_1 u1 ×_2 u2 ×_3 u3`.
pub fn multilinear(g: &DenseTensor3, u1: &DenseMatrix, u2: &DenseMatrix, u3: &DenseMatrix) -> Result<DenseTensor3> {
    let t = mode_n_product(g, u1, 1)?;
    let t = mode_n_product(&t, u2, 2)?;
    mode_n_product(&t, u3, 3)
}

/// `t ×_1 u1ᵀ ×_2 u2ᵀ ×_3 u3ᵀ`.
pub fn multilinear_t(t: &DenseTensor3, u1: &DenseMatrix, u2: &DenseMatrix, u3: &DenseMatrix) -> Result<DenseTensor3> {
    let t = mode_n_product_t(t, u1, 1)?;
    let t = mode_n_product_t(&t, u2, 2)?;
    mode_n_product_t(&t, u3, 3)
}

pub fn frobenius_norm(t: &DenseTensor3) -> f64 {
    t.values.iter().map(|v| v * v).sum::<f64>().sqrt()
}

pub fn l1_norm(t: &DenseTensor3) -> f64 {
    t.values.iter().map(|v| v.abs()).sum()
}

//! Spectral subspace identification and the mode-3 projection `X = Z ×_3 A`.
//!
//! Noise is estimated by regressing every band on all the others over the
//! pixel set. The signal subspace is then taken from the eigenvectors of the
//! signal correlation matrix, keeping those whose projected signal power
//! exceeds twice their projected noise power (the minimum mean-squared-error
//! criterion).

use std::ops::Deref;

use crate::error::{Error, Result};
use crate::hsi_io::HsiCube;
use crate::tensor::{mode_n_product, symmetric_eigen, DenseMatrix, DenseTensor3};

/// Relative ridge added to the band Gram matrix before inversion.
pub const RIDGE: f64 = 1e-6;
/// Refinement sweeps applied after the ridge solve (iterated Tikhonov).
const REFINEMENT_STEPS: usize = 2;
/// MSE changes smaller than this fraction of the mean band power are ties.
const DELTA_TOL: f64 = 1e-10;

/// Column-orthonormal `n3 x k` spectral basis.
#[derive(Clone, Debug, PartialEq)]
pub struct SubspaceBasis {
    a: DenseMatrix,
}

impl SubspaceBasis {
    pub fn new(a: DenseMatrix) -> Result<Self> {
        if a.cols() == 0 || a.cols() > a.rows() {
            return Err(Error::ShapeMismatch(format!(
                "basis of {} columns in {} bands",
                a.cols(),
                a.rows()
            )));
        }
        let defect = a.orthonormality_defect();
        if defect >= 1e-8 {
            return Err(Error::ShapeMismatch(format!(
                "basis columns are not orthonormal (defect {defect:e})"
            )));
        }
        Ok(Self { a })
    }

    pub(crate) fn new_unchecked(a: DenseMatrix) -> Self {
        Self { a }
    }

    pub fn identity(bands: usize) -> Self {
        Self {
            a: DenseMatrix::identity(bands),
        }
    }

    pub fn matrix(&self) -> &DenseMatrix {
        &self.a
    }

    pub fn k(&self) -> usize {
        self.a.cols()
    }

    pub fn bands(&self) -> usize {
        self.a.rows()
    }
}

/// Coefficient image `n1 x n2 x k` in the spectral subspace.
#[derive(Clone, Debug, PartialEq)]
pub struct ReducedImage(DenseTensor3);

impl ReducedImage {
    pub fn new(z: DenseTensor3) -> Self {
        Self(z)
    }

    pub fn tensor(&self) -> &DenseTensor3 {
        &self.0
    }

    pub fn tensor_mut(&mut self) -> &mut DenseTensor3 {
        &mut self.0
    }

    pub fn into_tensor(self) -> DenseTensor3 {
        self.0
    }

    pub fn k(&self) -> usize {
        self.0.dims().2
    }
}

impl Deref for ReducedImage {
    type Target = DenseTensor3;

    fn deref(&self) -> &DenseTensor3 {
        &self.0
    }
}

#[derive(Clone, Debug)]
pub struct NoiseEstimate {
    /// Regression residual per element, same dims as the input.
    pub residual: DenseTensor3,
    /// Residual mean square per band.
    pub variances: Vec<f64>,
}

impl NoiseEstimate {
    pub fn band_stds(&self) -> Vec<f64> {
        self.variances.iter().map(|v| v.sqrt()).collect()
    }
}

/// `G[a][b] = Σ_p y[p, a]·y[p, b]`.
fn band_gram(data: &DenseTensor3) -> DenseMatrix {
    let n3 = data.dims().2;
    let mut g = DenseMatrix::zeros(n3, n3);
    for a in 0..n3 {
        let sa = data.slice3(a);
        for b in a..n3 {
            let v: f64 = sa.iter().zip(data.slice3(b)).map(|(x, y)| x * y).sum();
            g[(a, b)] = v;
            g[(b, a)] = v;
        }
    }
    g
}

/// Per-band multiple-regression noise estimate.
pub fn estimate_noise(y: &HsiCube) -> Result<NoiseEstimate> {
    let data = y.data();
    let (n1, n2, n3) = data.dims();
    if n3 < 3 {
        return Err(Error::TooFewBands { needed: 3, got: n3 });
    }
    let pixels = n1 * n2;
    if pixels < n3 {
        return Err(Error::Underdetermined { bands: n3, pixels });
    }
    let gram = band_gram(data);
    let ridge = RIDGE * gram.trace() / n3 as f64;
    let mut k = gram.to_nalgebra();
    for i in 0..n3 {
        k[(i, i)] += ridge.max(f64::MIN_POSITIVE);
    }
    let p = k.try_inverse().ok_or(Error::NonFinite("band gram matrix inverse"))?;

    let mut residual = data.clone();
    let mut variances = Vec::with_capacity(n3);
    let m = n3 - 1;
    for i in 0..n3 {
        let others: Vec<usize> = (0..n3).filter(|&j| j != i).collect();
        // inverse of the ridged gram with row/column i removed, by Schur complement
        let pii = p[(i, i)];
        let inv = DenseMatrix::from_fn(m, m, |r, c| {
            let (a, b) = (others[r], others[c]);
            p[(a, b)] - p[(a, i)] * p[(i, b)] / pii
        });
        let rhs: Vec<f64> = others.iter().map(|&j| gram[(j, i)]).collect();
        let apply = |v: &[f64]| -> Vec<f64> {
            (0..m)
                .map(|r| inv.row(r).iter().zip(v).map(|(a, b)| a * b).sum())
                .collect()
        };
        let mut beta = apply(&rhs);
        for _ in 0..REFINEMENT_STEPS {
            let fit: Vec<f64> = (0..m)
                .map(|r| {
                    rhs[r]
                        - others
                            .iter()
                            .zip(&beta)
                            .map(|(&j, b)| gram[(others[r], j)] * b)
                            .sum::<f64>()
                })
                .collect();
            for (b, d) in beta.iter_mut().zip(apply(&fit)) {
                *b += d;
            }
        }
        let band = &mut residual.as_mut_slice()[i * pixels..(i + 1) * pixels];
        for (&j, &b) in others.iter().zip(&beta) {
            for (w, &x) in band.iter_mut().zip(data.slice3(j)) {
                *w -= b * x;
            }
        }
        variances.push(band.iter().map(|w| w * w).sum::<f64>() / pixels as f64);
    }
    Ok(NoiseEstimate { residual, variances })
}

/// Subspace selection result with the per-eigenvector diagnostics.
#[derive(Clone, Debug)]
pub struct SubspaceSelection {
    pub basis: SubspaceBasis,
    /// Eigenvalues of the signal correlation matrix, nonincreasing.
    pub eigenvalues: Vec<f64>,
    /// Mean-squared-error change `2·noise power − signal power` per eigenvector.
    pub mse_deltas: Vec<f64>,
}

struct Correlations {
    signal_power: f64,
    signal_vectors: DenseMatrix,
    signal_values: Vec<f64>,
    deltas: Vec<f64>,
}

fn correlations(y: &HsiCube, noise: &NoiseEstimate) -> Result<Correlations> {
    let data = y.data();
    if noise.residual.dims() != data.dims() {
        return Err(Error::ShapeMismatch("noise estimate does not match cube".into()));
    }
    let pixels = (data.dims().0 * data.dims().1) as f64;
    let scale = |m: DenseMatrix| {
        let (r, c) = m.shape();
        DenseMatrix::from_fn(r, c, |i, j| m[(i, j)] / pixels)
    };
    let ry = scale(band_gram(data));
    let rn = scale(band_gram(&noise.residual));
    let rx = scale(band_gram(&data.sub(&noise.residual)?));
    let eig = symmetric_eigen(&rx)?;
    let n3 = ry.rows();
    let quad = |m: &DenseMatrix, c: usize| -> f64 {
        let e = eig.vectors.column(c);
        (0..n3)
            .map(|i| e[i] * (0..n3).map(|j| m[(i, j)] * e[j]).sum::<f64>())
            .sum()
    };
    let deltas = (0..n3).map(|c| 2.0 * quad(&rn, c) - quad(&ry, c)).collect();
    Ok(Correlations {
        signal_power: ry.trace(),
        signal_vectors: eig.vectors,
        signal_values: eig.values,
        deltas,
    })
}

/// Minimum-error subspace: `k` is the number of eigenvectors that lower the
/// projection MSE, clamped to `[1, n3]`; the basis is the top-`k`
/// eigenvectors of the signal correlation matrix.
pub fn select_rank_and_basis(y: &HsiCube, noise: &NoiseEstimate) -> Result<SubspaceSelection> {
    let c = correlations(y, noise)?;
    let n3 = c.deltas.len();
    // deltas at rounding level (null directions of noiseless data) do not count
    let tol = DELTA_TOL * c.signal_power / n3 as f64;
    let k = c.deltas.iter().filter(|&&d| d < -tol).count().clamp(1, n3);
    Ok(SubspaceSelection {
        basis: SubspaceBasis::new_unchecked(c.signal_vectors.leading_columns(k)),
        eigenvalues: c.signal_values,
        mse_deltas: c.deltas,
    })
}

/// Top-`k` signal eigenvectors for a caller-chosen dimension.
pub fn basis_with_rank(y: &HsiCube, noise: &NoiseEstimate, k: usize) -> Result<SubspaceBasis> {
    let c = correlations(y, noise)?;
    let k = k.clamp(1, c.deltas.len());
    Ok(SubspaceBasis::new_unchecked(c.signal_vectors.leading_columns(k)))
}

/// `z = x ×_3 Aᵀ`.
pub fn project(x: &DenseTensor3, basis: &SubspaceBasis) -> Result<ReducedImage> {
    if x.dims().2 != basis.bands() {
        return Err(Error::ShapeMismatch(format!(
            "cube has {} bands, basis {}",
            x.dims().2,
            basis.bands()
        )));
    }
    Ok(ReducedImage(mode_n_product(x, &basis.a.transpose(), 3)?))
}

/// `x = z ×_3 A`.
pub fn reconstruct(z: &ReducedImage, basis: &SubspaceBasis) -> Result<HsiCube> {
    if z.k() != basis.k() {
        return Err(Error::ShapeMismatch(format!(
            "reduced image has {} bands, basis {}",
            z.k(),
            basis.k()
        )));
    }
    Ok(HsiCube::new(mode_n_product(&z.0, &basis.a, 3)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::noise::{add_case_noise, NoiseSpec};

    fn lcg(seed: u64) -> impl FnMut() -> f64 {
        let mut s = seed;
        move || {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            (s >> 11) as f64 / (1u64 << 53) as f64
        }
    }

    fn mixture(dims: (usize, usize, usize), rank: usize, seed: u64) -> (HsiCube, DenseMatrix) {
        let mut next = lcg(seed);
        let (n1, n2, n3) = dims;
        let spectra = DenseMatrix::from_fn(n3, rank, |b, r| {
            0.3 + 0.25 * ((b as f64 + 1.0) * (r as f64 + 1.0) * 0.37).sin() + 0.1 * r as f64
        });
        let abund: Vec<f64> = (0..n1 * n2 * rank).map(|_| next()).collect();
        let data = DenseTensor3::from_fn(dims, |i, j, b| {
            (0..rank)
                .map(|r| abund[(i + n1 * j) * rank + r] * spectra[(b, r)])
                .sum::<f64>()
                / rank as f64
        });
        (HsiCube::new(data), spectra)
    }

    #[test]
    fn white_noise_level() {
        let clean = HsiCube::new(DenseTensor3::zeros((64, 64, 16)));
        let (noisy, _) = add_case_noise(&clean, &NoiseSpec::gaussian(0.1, 11)).unwrap();
        let est = estimate_noise(&noisy).unwrap();
        let mean_std = est.band_stds().iter().sum::<f64>() / 16.0;
        assert!((0.08..=0.12).contains(&mean_std), "{mean_std}");
    }

    #[test]
    fn noiseless_rank_one_has_no_residual() {
        let (cube, _) = mixture((20, 20, 12), 1, 3);
        let est = estimate_noise(&cube).unwrap();
        let rms = (est.residual.as_slice().iter().map(|v| v * v).sum::<f64>() / est.residual.len() as f64).sqrt();
        assert!(rms < 1e-8, "rms residual {rms:e}");
    }

    #[test]
    fn preconditions() {
        let cube = HsiCube::new(DenseTensor3::filled((2, 2, 8), 1.0));
        assert!(matches!(estimate_noise(&cube), Err(Error::Underdetermined { .. })));
        let cube = HsiCube::new(DenseTensor3::filled((4, 4, 2), 1.0));
        assert!(matches!(estimate_noise(&cube), Err(Error::TooFewBands { .. })));
    }

    #[test]
    fn recovers_planted_rank() {
        let (clean, _) = mixture((32, 32, 16), 3, 5);
        let (noisy, _) = add_case_noise(&clean, &NoiseSpec::gaussian(1e-4, 6)).unwrap();
        let est = estimate_noise(&noisy).unwrap();
        let sel = select_rank_and_basis(&noisy, &est).unwrap();
        assert_eq!(sel.basis.k(), 3);
        assert!(sel.basis.matrix().orthonormality_defect() < 1e-8);
    }

    #[test]
    fn pure_noise_gives_small_rank() {
        let clean = HsiCube::new(DenseTensor3::zeros((32, 32, 16)));
        let (noisy, _) = add_case_noise(&clean, &NoiseSpec::gaussian(0.1, 8)).unwrap();
        let est = estimate_noise(&noisy).unwrap();
        let sel = select_rank_and_basis(&noisy, &est).unwrap();
        assert!(sel.basis.k() <= 3, "k = {}", sel.basis.k());
    }

    #[test]
    fn rank_one_direction() {
        let (cube, spectra) = mixture((16, 16, 10), 1, 9);
        let est = estimate_noise(&cube).unwrap();
        let sel = select_rank_and_basis(&cube, &est).unwrap();
        assert_eq!(sel.basis.k(), 1);
        let e = spectra.column(0);
        let norm = e.iter().map(|v| v * v).sum::<f64>().sqrt();
        let a = sel.basis.matrix().column(0);
        let cos: f64 = a.iter().zip(&e).map(|(x, y)| x * y).sum::<f64>().abs() / norm;
        assert!(cos.min(1.0).acos() < 1e-6);
    }

    #[test]
    fn identity_basis_projection() {
        let (cube, _) = mixture((5, 4, 6), 2, 1);
        let z = project(cube.data(), &SubspaceBasis::identity(6)).unwrap();
        assert_eq!(z.tensor(), cube.data());
    }

    #[test]
    fn dimension_checks() {
        let (cube, _) = mixture((5, 4, 6), 2, 1);
        let basis = SubspaceBasis::identity(5);
        assert!(project(cube.data(), &basis).is_err());
        let z = ReducedImage::new(DenseTensor3::zeros((5, 4, 3)));
        assert!(reconstruct(&z, &basis).is_err());
        assert!(SubspaceBasis::new(DenseMatrix::from_fn(3, 2, |_, _| 1.0)).is_err());
    }
}

//! Weighted low-rank Tucker regularization of one patch group.
//!
//! For a group `Z` and noise variance `σ²` the subproblem is
//! `min (1/σ²)‖Z − G ×₁U1 ×₂U2 ×₃U3‖² + Σ w ∘ |G|` over orthonormal factors
//! and a core, with weights `w = c√q / (|G| + ε)` refreshed from the current
//! core at the start of each round. Within a round the weights are frozen and
//! every step (three Procrustes factor updates, one soft-threshold of the
//! projected core) is an exact block minimizer, so the objective never rises.

use crate::error::{Error, Result};
use crate::tensor::{
    hosvd, mode_n_product_t, multilinear, multilinear_t, thin_svd, unfold_mode_n, DenseMatrix, DenseTensor3,
    TuckerFactors,
};

/// Per-entry regularization weights.
#[derive(Clone, Debug, PartialEq)]
pub struct WeightVector {
    pub w: Vec<f64>,
    pub c: f64,
    pub eps: f64,
}

/// `w_j = c·√q / (|σ_j| + eps)`.
pub fn compute_weights(sigmas: &[f64], c: f64, q: usize, eps: f64) -> WeightVector {
    let scale = c * (q as f64).sqrt();
    WeightVector {
        w: sigmas.iter().map(|s| scale / (s.abs() + eps)).collect(),
        c,
        eps,
    }
}

/// `sign(x)·max(|x| − t, 0)`.
#[inline]
pub fn soft_threshold(x: f64, t: f64) -> f64 {
    if x > t {
        x - t
    } else if x < -t {
        x + t
    } else {
        0.0
    }
}

/// Elementwise soft threshold of `o` at `w·σ²/2`, with `w` laid out like `o`.
pub fn shrink_core(o: &DenseTensor3, w: &DenseTensor3, sigma2: f64) -> Result<DenseTensor3> {
    o.zip_map(w, |x, wi| soft_threshold(x, wi * sigma2 / 2.0))
}

/// Full multilinear ranks of a tensor: each mode capped by the product of
/// the other two.
pub fn full_ranks(dims: (usize, usize, usize)) -> (usize, usize, usize) {
    let (a, b, c) = dims;
    (a.min(b * c), b.min(a * c), c.min(a * b))
}

/// Procrustes update of factor `mode` with the core and the other two
/// factors held fixed: `U = P·Qᵀ` from the SVD of
/// `W = unfold(Z ×_{others} Uᵀ)ᵀ · unfold(G)` (`d_j x r_j`), the orthonormal
/// matrix maximizing `trace(UᵀW)`.
pub fn update_factor(
    zi: &DenseTensor3,
    core: &DenseTensor3,
    factors: [&DenseMatrix; 3],
    mode: usize,
) -> Result<DenseMatrix> {
    if !(1..=3).contains(&mode) {
        return Err(Error::InvalidMode(mode));
    }
    let mut projected = zi.clone();
    for other in (1..=3).filter(|&m| m != mode) {
        projected = mode_n_product_t(&projected, factors[other - 1], other)?;
    }
    let w = unfold_mode_n(&projected, mode)?.t_matmul(&unfold_mode_n(core, mode)?)?;
    procrustes(&w)
}

/// Orthonormal polar factor of `w` (`d x r`, `r ≤ d`); first `r` identity
/// columns when `w` vanishes.
pub fn procrustes(w: &DenseMatrix) -> Result<DenseMatrix> {
    let (d, r) = w.shape();
    if r > d {
        return Err(Error::ShapeMismatch(format!(
            "procrustes target {d}x{r} is wider than tall"
        )));
    }
    if w.as_slice().iter().all(|&v| v == 0.0) {
        return Ok(DenseMatrix::eye(d, r));
    }
    Ok(thin_svd(w)?.polar())
}

/// Stepwise solver state for one group.
#[derive(Clone, Debug)]
pub struct WlrtrState {
    zi: DenseTensor3,
    sigma2: f64,
    c: f64,
    eps: f64,
    pub factors: TuckerFactors,
    /// Weights laid out like the core, frozen between refreshes.
    pub weights: DenseTensor3,
}

impl WlrtrState {
    /// Starts from the full-rank HOSVD of `zi` with weights from its core.
    pub fn new(zi: &DenseTensor3, sigma2: f64, c: f64, eps: f64) -> Result<Self> {
        Self::with_ranks(zi, full_ranks(zi.dims()), sigma2, c, eps)
    }

    /// Starts from a truncated HOSVD.
    pub fn with_ranks(zi: &DenseTensor3, ranks: (usize, usize, usize), sigma2: f64, c: f64, eps: f64) -> Result<Self> {
        if !zi.is_finite() {
            return Err(Error::NonFinite("group tensor"));
        }
        let factors = hosvd(zi, ranks)?;
        let mut state = Self {
            zi: zi.clone(),
            sigma2,
            c,
            eps,
            weights: DenseTensor3::zeros(factors.core.dims()),
            factors,
        };
        state.refresh_weights();
        Ok(state)
    }

    pub fn refresh_weights(&mut self) {
        let q = self.zi.dim(2);
        let w = compute_weights(self.factors.core.as_slice(), self.c, q, self.eps);
        self.weights = DenseTensor3::from_vec(self.factors.core.dims(), w.w).expect("weights match core shape");
    }

    pub fn update_factor(&mut self, mode: usize) -> Result<()> {
        let f = &self.factors;
        let u = update_factor(&self.zi, &f.core, [&f.u1, &f.u2, &f.u3], mode)?;
        *self.factors.factor_mut(mode) = u;
        Ok(())
    }

    /// Exact minimizer over the core given the factors.
    pub fn shrink(&mut self) -> Result<()> {
        let f = &self.factors;
        let o = multilinear_t(&self.zi, &f.u1, &f.u2, &f.u3)?;
        self.factors.core = shrink_core(&o, &self.weights, self.sigma2)?;
        Ok(())
    }

    /// One reweighting round: refresh weights, update all factors, shrink.
    pub fn round(&mut self) -> Result<()> {
        self.refresh_weights();
        for mode in 1..=3 {
            self.update_factor(mode)?;
        }
        self.shrink()
    }

    /// `(1/σ²)‖Z − L‖² + Σ w|G|` with the current weights.
    pub fn objective(&self) -> f64 {
        let fit = self
            .zi
            .sub(&self.estimate())
            .expect("same shape")
            .frobenius_norm()
            .powi(2);
        let penalty: f64 = self
            .weights
            .as_slice()
            .iter()
            .zip(self.factors.core.as_slice())
            .map(|(w, g)| w * g.abs())
            .sum();
        fit / self.sigma2 + penalty
    }

    /// `ℒ = G ×₁U1 ×₂U2 ×₃U3`.
    pub fn estimate(&self) -> DenseTensor3 {
        let f = &self.factors;
        multilinear(&f.core, &f.u1, &f.u2, &f.u3).expect("consistent tucker shapes")
    }

    pub fn into_parts(self) -> (DenseTensor3, TuckerFactors) {
        let l = self.estimate();
        (l, self.factors)
    }
}

/// Low-rank estimate of one group after `rounds` reweighting rounds.
pub fn denoise_group(zi: &DenseTensor3, sigma2: f64, c: f64, eps: f64, rounds: usize) -> Result<DenseTensor3> {
    Ok(denoise_group_factors(zi, sigma2, c, eps, rounds)?.0)
}

/// Like [`denoise_group`], also returning the final Tucker factors.
pub fn denoise_group_factors(
    zi: &DenseTensor3,
    sigma2: f64,
    c: f64,
    eps: f64,
    rounds: usize,
) -> Result<(DenseTensor3, TuckerFactors)> {
    denoise_group_ranked(zi, full_ranks(zi.dims()), sigma2, c, eps, rounds)
}

/// [`denoise_group_factors`] with the Tucker ranks capped at `ranks`.
pub fn denoise_group_ranked(
    zi: &DenseTensor3,
    ranks: (usize, usize, usize),
    sigma2: f64,
    c: f64,
    eps: f64,
    rounds: usize,
) -> Result<(DenseTensor3, TuckerFactors)> {
    let mut state = WlrtrState::with_ranks(zi, ranks, sigma2, c, eps)?;
    for _ in 0..rounds {
        state.round()?;
    }
    Ok(state.into_parts())
}

/// `Σ w|G|` for a core and weights derived from that same core.
pub fn weighted_core_norm(core: &DenseTensor3, c: f64, q: usize, eps: f64) -> f64 {
    let w = compute_weights(core.as_slice(), c, q, eps);
    w.w.iter().zip(core.as_slice()).map(|(w, g)| w * g.abs()).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn gaussian(dims: (usize, usize, usize), rng: &mut ChaCha8Rng) -> DenseTensor3 {
        DenseTensor3::from_fn(dims, |_, _, _| StandardNormal.sample(rng))
    }

    fn random_orthonormal(d: usize, r: usize, rng: &mut ChaCha8Rng) -> DenseMatrix {
        let m = DenseMatrix::from_fn(d, r, |_, _| StandardNormal.sample(rng));
        thin_svd(&m).unwrap().polar()
    }

    #[test]
    fn weights_arithmetic() {
        let w = compute_weights(&[0.5], 1.0, 16, 0.0);
        assert!((w.w[0] - 8.0).abs() < 1e-15);
        let w = compute_weights(&[0.0], 2.0, 4, 1e-16);
        assert!(w.w[0].is_finite());
        assert!((w.w[0] - 4e16).abs() < 1.0);
        let w = compute_weights(&[3.0, 2.0, 2.0, 0.5, 0.0], 1.0, 9, 1e-16);
        assert!(w.w.windows(2).all(|p| p[0] <= p[1]));
    }

    #[test]
    fn shrink_examples() {
        let o = DenseTensor3::from_vec((2, 1, 1), vec![1.0, -0.2]).unwrap();
        let w = DenseTensor3::filled((2, 1, 1), 0.6);
        let g = shrink_core(&o, &w, 1.0).unwrap();
        assert!((g.get(0, 0, 0) - 0.7).abs() < 1e-15);
        assert_eq!(g.get(1, 0, 0), 0.0);
    }

    #[test]
    fn shrink_matches_scalar_grid_search() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let o = gaussian((3, 2, 2), &mut rng);
        let w = DenseTensor3::from_fn((3, 2, 2), |_, _, _| rng.random_range(0.0..2.0));
        let sigma2 = 0.7;
        let g = shrink_core(&o, &w, sigma2).unwrap();
        for i in 0..o.len() {
            let (x, t) = (o.as_slice()[i], w.as_slice()[i] * sigma2 / 2.0);
            let f = |v: f64| 0.5 * (x - v).powi(2) + t * v.abs();
            let mut best = (f64::INFINITY, 0.0);
            for s in -40_000..=40_000 {
                let v = s as f64 * 1e-4;
                if f(v) < best.0 {
                    best = (f(v), v);
                }
            }
            assert!((g.as_slice()[i] - best.1).abs() <= 1e-4, "entry {i}");
            assert!(f(g.as_slice()[i]) <= best.0 + 1e-12);
        }
    }

    #[test]
    fn procrustes_zero_and_scalar() {
        assert_eq!(procrustes(&DenseMatrix::zeros(3, 2)).unwrap(), DenseMatrix::eye(3, 2));
        let one = DenseTensor3::from_vec((1, 1, 1), vec![-2.5]).unwrap();
        let f = hosvd(&one, (1, 1, 1)).unwrap();
        for mode in 1..=3 {
            let u = update_factor(&one, &f.core, [&f.u1, &f.u2, &f.u3], mode).unwrap();
            assert_eq!(u.as_slice()[0].abs(), 1.0);
        }
    }

    #[test]
    fn factor_update_fixed_point() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let core = gaussian((2, 2, 2), &mut rng);
        let u1 = random_orthonormal(5, 2, &mut rng);
        let u2 = random_orthonormal(4, 2, &mut rng);
        let u3 = random_orthonormal(3, 2, &mut rng);
        let z = multilinear(&core, &u1, &u2, &u3).unwrap();
        let got = update_factor(&z, &core, [&u1, &u2, &u3], 1).unwrap();
        // same column space: projector difference vanishes
        let p_got = got.matmul(&got.transpose()).unwrap();
        let p_ref = u1.matmul(&u1.transpose()).unwrap();
        assert!(p_got.sub(&p_ref).unwrap().frobenius_norm() < 1e-8);
        assert!(got.sub(&u1).unwrap().frobenius_norm() < 1e-8);
    }

    #[test]
    fn factor_update_beats_angle_sweep() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let z = gaussian((4, 3, 2), &mut rng);
        let f = hosvd(&z, full_ranks(z.dims())).unwrap();
        let core = gaussian(f.core.dims(), &mut rng);
        // mode 3 is 2x2, so the orthonormal set is rotations and reflections
        let u = update_factor(&z, &core, [&f.u1, &f.u2, &f.u3], 3).unwrap();
        let projected = mode_n_product_t(&mode_n_product_t(&z, &f.u1, 1).unwrap(), &f.u2, 2).unwrap();
        let w = unfold_mode_n(&projected, 3)
            .unwrap()
            .t_matmul(&unfold_mode_n(&core, 3).unwrap())
            .unwrap();
        let score = |m: &DenseMatrix| m.t_matmul(&w).unwrap().trace();
        let got = score(&u);
        let mut best = f64::NEG_INFINITY;
        for step in 0..20_000 {
            let t = step as f64 * std::f64::consts::TAU / 20_000.0;
            let (s, c) = t.sin_cos();
            let rot = DenseMatrix::from_row_major(2, 2, vec![c, -s, s, c]).unwrap();
            let refl = DenseMatrix::from_row_major(2, 2, vec![c, s, s, -c]).unwrap();
            best = best.max(score(&rot)).max(score(&refl));
        }
        assert!(got >= best - 1e-12);
        assert!(got - best < 1e-6 * got.abs().max(1.0));
    }

    #[test]
    fn zero_group_stays_zero() {
        let z = DenseTensor3::zeros((4, 3, 2));
        let l = denoise_group(&z, 0.01, 2f64.sqrt(), 1e-16, 2).unwrap();
        assert_eq!(l.frobenius_norm(), 0.0);
    }

    #[test]
    fn strong_low_rank_group_is_kept() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let core = gaussian((2, 2, 2), &mut rng).map(|v| 50.0 * (v.signum() + v));
        let z = multilinear(
            &core,
            &random_orthonormal(9, 2, &mut rng),
            &random_orthonormal(8, 2, &mut rng),
            &random_orthonormal(3, 2, &mut rng),
        )
        .unwrap();
        let l = denoise_group(&z, 1e-4, 2f64.sqrt(), 1e-16, 2).unwrap();
        assert!(l.sub(&z).unwrap().frobenius_norm() < 1e-3 * z.frobenius_norm());
    }

    #[test]
    fn objective_monotone_and_factors_orthonormal() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..10 {
            let z = gaussian((6, 5, 3), &mut rng);
            let mut state = WlrtrState::new(&z, 0.3, 2f64.sqrt(), 1e-16).unwrap();
            for _ in 0..3 {
                state.refresh_weights();
                let mut prev = state.objective();
                for mode in 1..=3 {
                    state.update_factor(mode).unwrap();
                    assert!(state.factors.factor(mode).orthonormality_defect() < 1e-8);
                    let now = state.objective();
                    assert!(now <= prev + 1e-9 * prev.abs().max(1.0), "mode {mode}: {prev} -> {now}");
                    prev = now;
                }
                state.shrink().unwrap();
                assert!(state.objective() <= prev + 1e-9 * prev.abs().max(1.0));
            }
        }
    }

    #[test]
    fn positive_homogeneity() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let z = gaussian((5, 4, 3), &mut rng);
        let alpha = 3.5;
        let a = denoise_group(&z.scale(alpha), 0.2 * alpha * alpha, 2f64.sqrt(), 1e-16, 2).unwrap();
        let b = denoise_group(&z, 0.2, 2f64.sqrt(), 1e-16, 2).unwrap().scale(alpha);
        assert!(a.sub(&b).unwrap().frobenius_norm() < 1e-9 * b.frobenius_norm().max(1.0));
    }
}

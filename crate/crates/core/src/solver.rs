//! Alternating minimization of the full mixed-noise model
//!
//! `½‖Y − Z ×₃ A − S‖² + λ1 Σ_i [(1/σ_i²)‖R_i Z − L_i‖² + ‖L_i‖_{w,*}] + λ2‖S‖₁`
//!
//! with an outer loop of iterative regularization: each pass denoises
//! `Yⁿ = α Xⁿ⁻¹ + (1 − α) Y` in a subspace whose dimension grows by `β·n`.

#[cfg(not(all(target_arch = "wasm32", target_os = "unknown")))]
use std::time::Instant;
#[cfg(all(target_arch = "wasm32", target_os = "unknown"))]
use web_time::Instant;

use serde::{Deserialize, Serialize};

use crate::config::{SigmaMode, SolverConfig};
use crate::error::{Error, Result};
use crate::hsi_io::HsiCube;
use crate::metrics::mpsnr;
use crate::par::map_indexed;
use crate::patch::{aggregate, block_match, build_grid, extract_group, GroupIndex};
use crate::subspace::{basis_with_rank, estimate_noise, project, select_rank_and_basis, ReducedImage, SubspaceBasis};
use crate::tensor::{mode_n_product, mode_n_product_t, unfold_mode_n, DenseTensor3};
use crate::wlrtr::{self, full_ranks, procrustes, soft_threshold, weighted_core_norm};

/// Robust standard-deviation scale of the median absolute deviation.
const MAD_SCALE: f64 = 1.4826;

/// One group's low-rank estimate and the constants it was computed with.
#[derive(Clone, Debug)]
pub struct GroupEstimate {
    pub index: GroupIndex,
    pub l: DenseTensor3,
    pub sigma2: f64,
    /// `‖L‖_{w,*}` evaluated on the final core.
    pub penalty: f64,
}

/// Mutable state of a run.
#[derive(Clone, Debug)]
pub struct SolverState {
    pub y: HsiCube,
    pub y_n: DenseTensor3,
    pub z: ReducedImage,
    pub basis: SubspaceBasis,
    pub s: DenseTensor3,
    pub k: usize,
    pub iteration: usize,
    pub objective_trace: Vec<f64>,
}

/// Seconds spent in each stage of one outer iteration.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct StageTimes {
    pub subspace: f64,
    pub matching: f64,
    pub groups: f64,
    pub cycles: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub k: usize,
    pub sigma: f64,
    pub groups: usize,
    pub cycles: usize,
    pub objective: f64,
    /// Against the ground truth, when one was supplied.
    pub mpsnr: Option<f64>,
    /// Wall time since the start of the run.
    pub elapsed: f64,
    pub stages: StageTimes,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub iterations: Vec<IterationRecord>,
}

impl Diagnostics {
    pub fn to_csv(&self) -> String {
        let mut out = String::from(
            "iteration,k,sigma,groups,cycles,objective,mpsnr,elapsed_s,subspace_s,matching_s,groups_s,cycles_s\n",
        );
        for r in &self.iterations {
            let mpsnr = r.mpsnr.map_or(String::new(), |v| format!("{v:.6}"));
            out.push_str(&format!(
                "{},{},{:.6e},{},{},{:.9e},{},{:.6},{:.6},{:.6},{:.6},{:.6}\n",
                r.iteration,
                r.k,
                r.sigma,
                r.groups,
                r.cycles,
                r.objective,
                mpsnr,
                r.elapsed,
                r.stages.subspace,
                r.stages.matching,
                r.stages.groups,
                r.stages.cycles
            ));
        }
        out
    }
}

#[derive(Clone, Debug)]
pub struct DenoiseOutput {
    pub x: HsiCube,
    /// Sparse component of the input, `soft(Y − X̂, λ2)`.
    pub s: HsiCube,
    pub basis: SubspaceBasis,
    pub diagnostics: Diagnostics,
}

fn check_dims(a: (usize, usize, usize), b: (usize, usize, usize), what: &str) -> Result<()> {
    if a == b {
        Ok(())
    } else {
        Err(Error::ShapeMismatch(format!("{what}: {a:?} vs {b:?}")))
    }
}

/// `Z ×₃ A`.
fn expand(z: &DenseTensor3, a: &SubspaceBasis) -> Result<DenseTensor3> {
    mode_n_product(z, a.matrix(), 3)
}

/// Value of the full model at the given blocks.
#[allow(clippy::too_many_arguments)]
pub fn objective(
    y: &DenseTensor3,
    z: &DenseTensor3,
    a: &SubspaceBasis,
    s: &DenseTensor3,
    groups: &[GroupEstimate],
    p: usize,
    lambda1: f64,
    lambda2: f64,
) -> Result<f64> {
    let fit = y.sub(&expand(z, a)?)?.sub(s)?.frobenius_norm().powi(2) / 2.0;
    let zr = ReducedImage::new(z.clone());
    let mut group_term = 0.0;
    for g in groups {
        let rz = extract_group(&zr, &g.index, p)?.t;
        group_term += rz.sub(&g.l)?.frobenius_norm().powi(2) / g.sigma2 + g.penalty;
    }
    let sparse: f64 = s.as_slice().iter().map(|v| v.abs()).sum();
    Ok(fit + lambda1 * group_term + lambda2 * sparse)
}

/// `S = soft(Y − Z ×₃ A, λ2)`.
pub fn update_sparse(y: &DenseTensor3, z: &DenseTensor3, a: &SubspaceBasis, lambda2: f64) -> Result<DenseTensor3> {
    y.zip_map(&expand(z, a)?, |yv, xv| soft_threshold(yv - xv, lambda2))
}

/// Closed-form reduced image given the sparse part, basis and group estimates.
pub fn update_reduced(
    y: &DenseTensor3,
    s: &DenseTensor3,
    a: &SubspaceBasis,
    groups: &[GroupEstimate],
    p: usize,
    lambda1: f64,
) -> Result<ReducedImage> {
    let data = mode_n_product_t(&y.sub(s)?, a.matrix(), 3)?;
    let weights: Vec<f64> = groups.iter().map(|g| 2.0 * lambda1 / g.sigma2).collect();
    let pairs: Vec<(GroupIndex, DenseTensor3)> = groups.iter().map(|g| (g.index.clone(), g.l.clone())).collect();
    aggregate(&pairs, &weights, p, &data)
}

/// Orthonormal basis best aligning `Z ×₃ A` with `Y − S`.
pub fn update_basis(y: &DenseTensor3, s: &DenseTensor3, z: &DenseTensor3) -> Result<SubspaceBasis> {
    let (n1, n2, n3) = y.dims();
    let k = z.dims().2;
    if k > n3 {
        return Err(Error::RankOutOfRange {
            mode: 3,
            rank: k,
            max: n3,
        });
    }
    if (z.dims().0, z.dims().1) != (n1, n2) || s.dims() != y.dims() {
        return Err(Error::ShapeMismatch(format!(
            "reduced image {:?} and sparse part {:?} do not match cube {:?}",
            z.dims(),
            s.dims(),
            y.dims()
        )));
    }
    let m = unfold_mode_n(&y.sub(s)?, 3)?.t_matmul(&unfold_mode_n(z, 3)?)?;
    SubspaceBasis::new(procrustes(&m)?)
}

/// `(α·xₙ + (1 − α)·y, k + round(β·n))` with `k` clamped to `[1, bands]`.
pub fn iterate_regularization(
    x_n: &DenseTensor3,
    y: &DenseTensor3,
    alpha: f64,
    k: usize,
    beta: f64,
    n: usize,
) -> Result<(DenseTensor3, usize)> {
    let next = x_n.zip_map(y, |x, yv| alpha * x + (1.0 - alpha) * yv)?;
    let bands = y.dims().2;
    let k_next = (k as f64 + (beta * n as f64).round()).clamp(1.0, bands as f64) as usize;
    Ok((next, k_next))
}

/// `(1.4826 · median|v − median v|)²`.
pub fn robust_variance(values: &[f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    let mut v = values.to_vec();
    let med = median(&mut v);
    for x in v.iter_mut() {
        *x = (*x - med).abs();
    }
    (MAD_SCALE * median(&mut v)).powi(2)
}

fn median(v: &mut [f64]) -> f64 {
    let n = v.len();
    let mid = n / 2;
    let (_, upper, _) = v.select_nth_unstable_by(mid, f64::total_cmp);
    let upper = *upper;
    if n % 2 == 1 {
        upper
    } else {
        let lower = v[..mid].iter().copied().fold(f64::NEG_INFINITY, f64::max);
        (lower + upper) / 2.0
    }
}

/// Residual pixels of every band under the patches of one group.
fn group_residual(residual: &DenseTensor3, gi: &GroupIndex, p: usize) -> Vec<f64> {
    let (_, _, n3) = residual.dims();
    let mut out = Vec::with_capacity(gi.q() * p * p * n3);
    for &(r0, c0) in &gi.members {
        for b in 0..n3 {
            for dc in 0..p {
                for dr in 0..p {
                    out.push(residual.get(r0 + dr, c0 + dc, b));
                }
            }
        }
    }
    out
}

/// Smallest noise variance the solver accepts, relative to the signal energy,
/// so that noiseless input does not divide by zero.
const SIGMA2_FLOOR: f64 = 1e-12;

fn relative_change(new: &DenseTensor3, old: &DenseTensor3) -> f64 {
    let diff = new.sub(old).expect("same shape").frobenius_norm();
    let scale = old.frobenius_norm();
    if scale == 0.0 {
        if diff == 0.0 {
            0.0
        } else {
            f64::INFINITY
        }
    } else {
        diff / scale
    }
}

/// Denoises `y`. With `truth`, every iteration also records its MPSNR.
pub fn denoise(y: &HsiCube, cfg: &SolverConfig, truth: Option<&HsiCube>) -> Result<DenoiseOutput> {
    cfg.validate_for(y.dims())?;
    if !y.data().is_finite() {
        return Err(Error::NonFinite("input cube"));
    }
    if let Some(t) = truth {
        check_dims(t.dims(), y.dims(), "ground truth")?;
    }
    let start = Instant::now();
    let (n1, n2, n3) = y.dims();
    let grid = build_grid(n1, n2, cfg.p, cfg.stride)?;
    let references: Vec<(usize, usize)> = grid.references().collect();
    let energy = y.data().frobenius_norm().powi(2) / y.data().len() as f64;
    let floor = SIGMA2_FLOOR * energy.max(f64::MIN_POSITIVE);

    let mut state = SolverState {
        y: y.clone(),
        y_n: y.data().clone(),
        z: ReducedImage::new(DenseTensor3::zeros((n1, n2, 1))),
        basis: SubspaceBasis::identity(n3),
        s: DenseTensor3::zeros(y.dims()),
        k: 0,
        iteration: 0,
        objective_trace: Vec::new(),
    };
    let mut diagnostics = Diagnostics::default();
    let mut x_n = y.data().clone();

    for n in 1..=cfg.iters {
        state.iteration = n;
        let mut stages = StageTimes::default();

        let t = Instant::now();
        let current = HsiCube::new(state.y_n.clone());
        let noise = estimate_noise(&current)?;
        if n == 1 {
            state.k = match cfg.k {
                Some(k) => k,
                None => select_rank_and_basis(&current, &noise)?.basis.k(),
            };
        }
        state.basis = basis_with_rank(&current, &noise, state.k)?;
        state.z = project(&state.y_n, &state.basis)?;
        // the first pass has no estimate yet, so its noise is read off the
        // band regression; later passes use what the previous estimate left
        // of the original input
        let residual = if n == 1 {
            noise.residual.clone()
        } else {
            y.data().zip_map(&x_n, |yv, xv| {
                let r = yv - xv;
                r - soft_threshold(r, cfg.lambda2)
            })?
        };
        let global_sigma2 = robust_variance(residual.as_slice()).max(floor);
        stages.subspace = t.elapsed().as_secs_f64();

        let t = Instant::now();
        let z = &state.z;
        let indices = map_indexed(references.len(), |i| {
            block_match(z, references[i], cfg.p, cfg.q, cfg.window)
        });
        let indices: Vec<GroupIndex> = indices.into_iter().collect::<Result<_>>()?;
        stages.matching = t.elapsed().as_secs_f64();

        let t = Instant::now();
        let estimates = map_indexed(indices.len(), |i| -> Result<GroupEstimate> {
            let gi = &indices[i];
            let sigma2 = match cfg.sigma_mode {
                SigmaMode::Global => global_sigma2,
                SigmaMode::Group => robust_variance(&group_residual(&residual, gi, cfg.p)).max(floor),
            };
            let group = extract_group(z, gi, cfg.p)?;
            let mut ranks = full_ranks(group.t.dims());
            if let Some(cap) = cfg.max_rank {
                ranks = (ranks.0.min(cap), ranks.1.min(cap), ranks.2.min(cap));
            }
            let (l, factors) = wlrtr::denoise_group_ranked(&group.t, ranks, sigma2, cfg.c, cfg.eps, cfg.inner_rounds)?;
            Ok(GroupEstimate {
                index: group.owner,
                l,
                sigma2,
                penalty: weighted_core_norm(&factors.core, cfg.c, gi.q(), cfg.eps),
            })
        });
        let groups: Vec<GroupEstimate> = estimates.into_iter().collect::<Result<_>>()?;
        stages.groups = t.elapsed().as_secs_f64();

        let t = Instant::now();
        let mut cycles = 0;
        for _ in 0..cfg.max_cycles {
            cycles += 1;
            let s = update_sparse(&state.y_n, &state.z, &state.basis, cfg.lambda2)?;
            let z_new = update_reduced(&state.y_n, &s, &state.basis, &groups, cfg.p, cfg.lambda1)?;
            state.basis = update_basis(&state.y_n, &s, &z_new)?;
            let dz = relative_change(&z_new, &state.z);
            let ds = relative_change(&s, &state.s);
            state.z = z_new;
            state.s = s;
            if dz < cfg.tol && ds < cfg.tol {
                break;
            }
        }
        stages.cycles = t.elapsed().as_secs_f64();

        x_n = expand(&state.z, &state.basis)?;
        if !x_n.is_finite() {
            return Err(Error::Diverged(n));
        }
        let value = objective(
            &state.y_n,
            &state.z,
            &state.basis,
            &state.s,
            &groups,
            cfg.p,
            cfg.lambda1,
            cfg.lambda2,
        )?;
        state.objective_trace.push(value);
        let quality = match truth {
            Some(t) => Some(mpsnr(t, &HsiCube::new(x_n.clone()))?),
            None => None,
        };
        diagnostics.iterations.push(IterationRecord {
            iteration: n,
            k: state.k,
            sigma: global_sigma2.sqrt(),
            groups: groups.len(),
            cycles,
            objective: value,
            mpsnr: quality,
            elapsed: start.elapsed().as_secs_f64(),
            stages,
        });

        if n < cfg.iters {
            let (next, k_next) = iterate_regularization(&x_n, y.data(), cfg.alpha, state.k, cfg.beta, n)?;
            state.y_n = next;
            state.k = k_next;
        }
    }

    let s = y.data().zip_map(&x_n, |yv, xv| soft_threshold(yv - xv, cfg.lambda2))?;
    Ok(DenoiseOutput {
        x: HsiCube::new(x_n),
        s: HsiCube::new(s),
        basis: state.basis,
        diagnostics,
    })
}

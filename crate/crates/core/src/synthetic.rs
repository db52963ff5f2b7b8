//! Seeded low-rank test cubes.
//!
//! Each cube is a sum of `rank` outer products of a spatial abundance map and
//! a smooth spectral signature, divided by its maximum so that values lie in
//! (0, 1] and the spectral rank is exact. Abundance maps mix
//! Gaussian blobs with one sharp-edged rectangle so that both flat regions
//! and edges appear.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::hsi_io::HsiCube;
use crate::tensor::DenseTensor3;

fn abundance(n1: usize, n2: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let blobs: Vec<(f64, f64, f64, f64)> = (0..4)
        .map(|_| {
            (
                rng.random_range(0.0..n1 as f64),
                rng.random_range(0.0..n2 as f64),
                rng.random_range(0.15..0.35) * n1.min(n2) as f64,
                rng.random_range(0.4..1.0),
            )
        })
        .collect();
    let r0 = rng.random_range(0..n1.max(2) / 2);
    let c0 = rng.random_range(0..n2.max(2) / 2);
    let (h, w) = (
        rng.random_range(n1 / 4..=n1 / 2 + 1),
        rng.random_range(n2 / 4..=n2 / 2 + 1),
    );
    let step = rng.random_range(0.3..0.6);
    let mut map = vec![0.0; n1 * n2];
    for c in 0..n2 {
        for r in 0..n1 {
            let mut v: f64 = blobs
                .iter()
                .map(|&(br, bc, s, a)| {
                    let d2 = (r as f64 - br).powi(2) + (c as f64 - bc).powi(2);
                    a * (-d2 / (2.0 * s * s)).exp()
                })
                .sum();
            if (r0..r0 + h).contains(&r) && (c0..c0 + w).contains(&c) {
                v += step;
            }
            map[r + n1 * c] = v;
        }
    }
    map
}

fn signature(n3: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let bumps: Vec<(f64, f64, f64)> = (0..2)
        .map(|_| {
            (
                rng.random_range(0.0..1.0),
                rng.random_range(0.1..0.3),
                rng.random_range(0.3..1.0),
            )
        })
        .collect();
    let base = rng.random_range(0.1..0.4);
    (0..n3)
        .map(|b| {
            let t = if n3 > 1 { b as f64 / (n3 - 1) as f64 } else { 0.0 };
            base + bumps
                .iter()
                .map(|&(m, s, a)| a * (-(t - m).powi(2) / (2.0 * s * s)).exp())
                .sum::<f64>()
        })
        .collect()
}

/// A `n1 x n2 x n3` cube of spectral rank `rank` (for `rank ≤ n3`) with
/// maximum 1.
pub fn low_rank_cube(n1: usize, n2: usize, n3: usize, rank: usize, seed: u64) -> Result<HsiCube> {
    if n1 < 2 || n2 < 2 || n3 == 0 || rank == 0 || rank > n3 {
        return Err(Error::ShapeMismatch(format!(
            "cannot build a rank-{rank} cube of {n1}x{n2}x{n3}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let maps: Vec<Vec<f64>> = (0..rank).map(|_| abundance(n1, n2, &mut rng)).collect();
    let sigs: Vec<Vec<f64>> = (0..rank).map(|_| signature(n3, &mut rng)).collect();
    let data = DenseTensor3::from_fn((n1, n2, n3), |r, c, b| {
        maps.iter().zip(&sigs).map(|(m, s)| m[r + n1 * c] * s[b]).sum()
    });
    let peak = data.min_max().1;
    Ok(HsiCube::new(data.scale(1.0 / peak)))
}

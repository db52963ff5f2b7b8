//! Simulated mixed noise: Gaussian, salt-and-pepper impulses and deadlines.
//!
//! Draw order is fixed (per-band sigmas, Gaussian field, impulse band choice,
//! impulse pixels, deadline bands, deadline columns) so a seed fully
//! determines the output.

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hsi_io::HsiCube;

/// Gaussian standard deviation, fixed or drawn per band.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum Sigma {
    Fixed(f64),
    PerBandUniform { lo: f64, hi: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    /// Preset the spec was built from (1..=4), or 0 for a custom spec.
    pub case: u8,
    pub sigma: Sigma,
    pub impulse_bands: usize,
    pub impulse_fraction: f64,
    /// Deadline bands drawn from the impulse bands.
    pub deadline_bands_in_impulse: usize,
    /// Deadline bands drawn from the remaining bands.
    pub deadline_bands_other: usize,
    /// Inclusive range of the number of deadlines per affected band.
    pub deadlines_per_band: (usize, usize),
    /// Inclusive range of deadline widths in columns.
    pub deadline_width: (usize, usize),
    pub seed: u64,
}

impl NoiseSpec {
    pub fn gaussian(sigma: f64, seed: u64) -> Self {
        NoiseSpec {
            case: 0,
            sigma: Sigma::Fixed(sigma),
            impulse_bands: 0,
            impulse_fraction: 0.0,
            deadline_bands_in_impulse: 0,
            deadline_bands_other: 0,
            deadlines_per_band: (3, 5),
            deadline_width: (1, 3),
            seed,
        }
    }

    /// The four benchmark noise cases.
    pub fn case(id: u8, seed: u64) -> Result<Self> {
        let mut spec = NoiseSpec::gaussian(0.1, seed);
        spec.case = id;
        match id {
            1 => {}
            2..=4 => {
                spec.sigma = Sigma::PerBandUniform { lo: 0.1, hi: 0.2 };
                if id >= 3 {
                    spec.impulse_bands = 20;
                    spec.impulse_fraction = 0.2;
                }
                if id == 4 {
                    spec.deadline_bands_in_impulse = 10;
                    spec.deadline_bands_other = 10;
                }
            }
            other => return Err(Error::NoiseSpec(format!("unknown case {other}, expected 1-4"))),
        }
        Ok(spec)
    }

    /// A case scaled to a cube with few bands: at most half the bands get
    /// impulses and half of those (plus as many others) get deadlines.
    pub fn case_scaled(id: u8, bands: usize, seed: u64) -> Result<Self> {
        let mut spec = NoiseSpec::case(id, seed)?;
        if spec.impulse_bands > 0 {
            spec.impulse_bands = spec.impulse_bands.min(bands / 2).max(1);
        }
        if spec.deadline_bands_in_impulse > 0 {
            spec.deadline_bands_in_impulse = spec.deadline_bands_in_impulse.min(spec.impulse_bands / 2).max(1);
            spec.deadline_bands_other = spec
                .deadline_bands_other
                .min((bands - spec.impulse_bands) / 2)
                .max(usize::from(bands > spec.impulse_bands));
        }
        Ok(spec)
    }

    pub fn validate(&self, bands: usize, cols: usize) -> Result<()> {
        let mut problems = Vec::new();
        match self.sigma {
            Sigma::Fixed(s) if !(s >= 0.0 && s.is_finite()) => problems.push(format!("sigma {s} must be >= 0")),
            Sigma::PerBandUniform { lo, hi } if !(lo >= 0.0 && hi >= lo && hi.is_finite()) => {
                problems.push(format!("sigma range [{lo}, {hi}] is invalid"))
            }
            _ => {}
        }
        if !(0.0..=1.0).contains(&self.impulse_fraction) {
            problems.push(format!("impulse fraction {} outside [0, 1]", self.impulse_fraction));
        }
        if self.impulse_bands > bands {
            problems.push(format!("{} impulse bands exceed {bands} bands", self.impulse_bands));
        }
        if self.deadline_bands_in_impulse > self.impulse_bands {
            problems.push(format!(
                "{} deadline bands requested among {} impulse bands",
                self.deadline_bands_in_impulse, self.impulse_bands
            ));
        }
        if self.deadline_bands_other > bands.saturating_sub(self.impulse_bands) {
            problems.push(format!(
                "{} deadline bands requested among {} non-impulse bands",
                self.deadline_bands_other,
                bands.saturating_sub(self.impulse_bands)
            ));
        }
        let (wlo, whi) = self.deadline_width;
        if wlo < 1 || whi < wlo || whi > cols {
            problems.push(format!(
                "deadline width range {wlo}-{whi} is invalid for {cols} columns"
            ));
        }
        let (clo, chi) = self.deadlines_per_band;
        if chi < clo {
            problems.push(format!("deadline count range {clo}-{chi} is invalid"));
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::NoiseSpec(problems.join("; ")))
        }
    }
}

/// What was injected; `mask` uses the cube layout.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InjectedNoise {
    pub spec: NoiseSpec,
    pub band_sigmas: Vec<f64>,
    pub impulse_bands: Vec<usize>,
    pub deadline_bands: Vec<usize>,
    /// `(band, first column, width)`.
    pub deadlines: Vec<(usize, usize, usize)>,
    #[serde(skip)]
    pub mask: Vec<u8>,
}

impl InjectedNoise {
    pub const CLEAN: u8 = 0;
    pub const IMPULSE: u8 = 1;
    pub const DEADLINE: u8 = 2;

    pub fn sparse_count(&self) -> usize {
        self.mask.iter().filter(|&&m| m != Self::CLEAN).count()
    }
}

/// Adds the noise described by `spec` to a normalized cube.
pub fn add_case_noise(clean: &HsiCube, spec: &NoiseSpec) -> Result<(HsiCube, InjectedNoise)> {
    let (n1, n2, n3) = clean.dims();
    spec.validate(n3, n2)?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);

    let band_sigmas: Vec<f64> = (0..n3)
        .map(|_| match spec.sigma {
            Sigma::Fixed(s) => s,
            Sigma::PerBandUniform { lo, hi } if hi > lo => rng.random_range(lo..=hi),
            Sigma::PerBandUniform { lo, .. } => lo,
        })
        .collect();

    let mut data = clean.data().clone();
    let pixels = n1 * n2;
    for (b, &sigma) in band_sigmas.iter().enumerate() {
        for v in &mut data.as_mut_slice()[b * pixels..(b + 1) * pixels] {
            let z: f64 = rng.sample(StandardNormal);
            *v += sigma * z;
        }
    }

    let mut mask = vec![InjectedNoise::CLEAN; data.len()];
    let mut impulse_bands = sample(&mut rng, n3, spec.impulse_bands).into_vec();
    impulse_bands.sort_unstable();
    let per_band = (spec.impulse_fraction * pixels as f64).round() as usize;
    for &b in &impulse_bands {
        let mut hit = sample(&mut rng, pixels, per_band).into_vec();
        hit.sort_unstable();
        for p in hit {
            let value = if rng.random_bool(0.5) { 1.0 } else { 0.0 };
            data.as_mut_slice()[b * pixels + p] = value;
            mask[b * pixels + p] = InjectedNoise::IMPULSE;
        }
    }

    let others: Vec<usize> = (0..n3).filter(|b| impulse_bands.binary_search(b).is_err()).collect();
    let mut deadline_bands: Vec<usize> = sample(&mut rng, impulse_bands.len(), spec.deadline_bands_in_impulse)
        .into_iter()
        .map(|i| impulse_bands[i])
        .chain(
            sample(&mut rng, others.len(), spec.deadline_bands_other)
                .into_iter()
                .map(|i| others[i]),
        )
        .collect();
    deadline_bands.sort_unstable();
    let mut deadlines = Vec::new();
    for &b in &deadline_bands {
        let count = rng.random_range(spec.deadlines_per_band.0..=spec.deadlines_per_band.1);
        for _ in 0..count {
            let width = rng.random_range(spec.deadline_width.0..=spec.deadline_width.1);
            let start = rng.random_range(0..=n2 - width);
            for c in start..start + width {
                for r in 0..n1 {
                    let o = data.offset(r, c, b);
                    data.as_mut_slice()[o] = 0.0;
                    mask[o] = InjectedNoise::DEADLINE;
                }
            }
            deadlines.push((b, start, width));
        }
    }

    Ok((
        HsiCube::new(data),
        InjectedNoise {
            spec: spec.clone(),
            band_sigmas,
            impulse_bands,
            deadline_bands,
            deadlines,
            mask,
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::DenseTensor3;

    fn ramp(dims: (usize, usize, usize)) -> HsiCube {
        let (n1, n2, n3) = dims;
        HsiCube::new(DenseTensor3::from_fn(dims, |i, j, k| {
            (i + j + k) as f64 / (n1 + n2 + n3) as f64
        }))
    }

    #[test]
    fn zero_sigma_is_identity() {
        let clean = ramp((8, 8, 4));
        let (noisy, _) = add_case_noise(&clean, &NoiseSpec::gaussian(0.0, 7)).unwrap();
        assert_eq!(noisy, clean);
    }

    #[test]
    fn same_seed_same_bytes() {
        let clean = ramp((16, 16, 40));
        let spec = NoiseSpec::case(4, 99).unwrap();
        let (a, ta) = add_case_noise(&clean, &spec).unwrap();
        let (b, tb) = add_case_noise(&clean, &spec).unwrap();
        assert_eq!(a, b);
        assert_eq!(ta, tb);
        let (c, _) = add_case_noise(&clean, &NoiseSpec::case(4, 100).unwrap()).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn case3_impulse_support() {
        let clean = ramp((32, 32, 40));
        let (_, truth) = add_case_noise(&clean, &NoiseSpec::case(3, 5).unwrap()).unwrap();
        let pixels = 32 * 32;
        let affected: Vec<usize> = (0..40)
            .filter(|b| truth.mask[b * pixels..(b + 1) * pixels].contains(&InjectedNoise::IMPULSE))
            .collect();
        assert_eq!(affected.len(), 20);
        assert_eq!(affected, truth.impulse_bands);
        for b in affected {
            let count = truth.mask[b * pixels..(b + 1) * pixels]
                .iter()
                .filter(|&&m| m == InjectedNoise::IMPULSE)
                .count();
            let frac = count as f64 / pixels as f64;
            assert!((0.18..=0.22).contains(&frac), "band {b}: {frac}");
        }
    }

    #[test]
    fn case1_empirical_std() {
        let clean = ramp((64, 64, 16));
        let (noisy, _) = add_case_noise(&clean, &NoiseSpec::case(1, 2024).unwrap()).unwrap();
        let diff = noisy.data().sub(clean.data()).unwrap();
        let n = diff.len() as f64;
        let mean = diff.as_slice().iter().sum::<f64>() / n;
        let var = diff.as_slice().iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (n - 1.0);
        assert!((0.095..=0.105).contains(&var.sqrt()), "{}", var.sqrt());
    }

    #[test]
    fn case2_sigmas_in_range() {
        let clean = ramp((8, 8, 30));
        let (_, truth) = add_case_noise(&clean, &NoiseSpec::case(2, 1).unwrap()).unwrap();
        assert!(truth.band_sigmas.iter().all(|s| (0.1..=0.2).contains(s)));
        assert!(truth.band_sigmas.windows(2).any(|w| w[0] != w[1]));
    }

    #[test]
    fn case4_deadlines() {
        let clean = ramp((20, 24, 40));
        let (noisy, truth) = add_case_noise(&clean, &NoiseSpec::case(4, 3).unwrap()).unwrap();
        assert_eq!(truth.deadline_bands.len(), 20);
        let in_impulse = truth
            .deadline_bands
            .iter()
            .filter(|b| truth.impulse_bands.contains(b))
            .count();
        assert_eq!(in_impulse, 10);
        for &(b, start, width) in &truth.deadlines {
            assert!((1..=3).contains(&width));
            for c in start..start + width {
                for r in 0..20 {
                    assert_eq!(noisy.data().get(r, c, b), 0.0);
                }
            }
        }
    }

    #[test]
    fn band_counts_checked() {
        let clean = ramp((8, 8, 10));
        assert!(matches!(
            add_case_noise(&clean, &NoiseSpec::case(3, 1).unwrap()),
            Err(Error::NoiseSpec(_))
        ));
        assert!(NoiseSpec::case(5, 1).is_err());
        let scaled = NoiseSpec::case_scaled(4, 16, 1).unwrap();
        assert_eq!(
            (
                scaled.impulse_bands,
                scaled.deadline_bands_in_impulse,
                scaled.deadline_bands_other
            ),
            (8, 4, 4)
        );
        assert!(add_case_noise(&ramp((8, 8, 16)), &scaled).is_ok());
    }
}

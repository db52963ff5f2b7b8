//! Browser bindings for the static demo page in `www/`.

use wasm_bindgen::prelude::*;

use swlrtr::config::SolverConfig;
use swlrtr::hsi_io::HsiCube;
use swlrtr::metrics::{evaluate, mpsnr};
use swlrtr::noise::{add_case_noise, NoiseSpec};
use swlrtr::patch::{block_match, extract_group, min_window_positions};
use swlrtr::solver::denoise;
use swlrtr::subspace::{basis_with_rank, estimate_noise, project, select_rank_and_basis};
use swlrtr::synthetic::low_rank_cube;
use swlrtr::tensor::hosvd;
use swlrtr::wlrtr::{compute_weights, full_ranks, soft_threshold};

fn text<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

/// A synthetic cube, its noisy copy and the latest denoising result.
#[wasm_bindgen]
pub struct Scene {
    clean: HsiCube,
    noisy: HsiCube,
    denoised: Option<HsiCube>,
    sparse: Option<HsiCube>,
    cfg: SolverConfig,
}

#[wasm_bindgen]
impl Scene {
    /// `size x size x bands` rank-3 cube with benchmark noise case `case`.
    #[wasm_bindgen(constructor)]
    pub fn new(size: usize, bands: usize, case: u8, seed: u32) -> Result<Scene, String> {
        let clean = low_rank_cube(size, size, bands, 3.min(bands), u64::from(seed)).map_err(text)?;
        let spec = NoiseSpec::case_scaled(case, bands, u64::from(seed) + 1).map_err(text)?;
        let (noisy, _) = add_case_noise(&clean, &spec).map_err(text)?;
        Ok(Scene {
            clean,
            noisy,
            denoised: None,
            sparse: None,
            cfg: SolverConfig::default(),
        })
    }

    pub fn size(&self) -> usize {
        self.clean.rows()
    }

    pub fn bands(&self) -> usize {
        self.clean.bands()
    }

    #[wasm_bindgen(js_name = noisyMpsnr)]
    pub fn noisy_mpsnr(&self) -> Result<f64, String> {
        mpsnr(&self.clean, &self.noisy).map_err(text)
    }

    /// Runs the solver and returns the MPSNR after each outer iteration.
    /// `k = 0` picks the subspace dimension from the data.
    pub fn denoise(&mut self, lambda1: f64, lambda2: f64, iters: usize, k: usize) -> Result<Vec<f64>, String> {
        let cfg = SolverConfig {
            lambda1,
            lambda2,
            iters,
            k: (k > 0).then_some(k),
            ..SolverConfig::default()
        };
        let out = denoise(&self.noisy, &cfg, Some(&self.clean)).map_err(text)?;
        self.cfg = cfg;
        self.denoised = Some(out.x);
        self.sparse = Some(out.s);
        Ok(out.diagnostics.iterations.iter().filter_map(|r| r.mpsnr).collect())
    }

    /// `[MPSNR, MSSIM, ERGAS, MSA]` of the denoised cube, empty before the
    /// first run.
    pub fn metrics(&self) -> Result<Vec<f64>, String> {
        match &self.denoised {
            Some(x) => {
                let r = evaluate(&self.clean, x).map_err(text)?;
                Ok(vec![r.mpsnr, r.mssim, r.ergas, r.msa])
            }
            None => Ok(Vec::new()),
        }
    }

    /// Row-major RGBA pixels of one band of `layer` (`clean`, `noisy`,
    /// `denoised` or `sparse`). Intensities are clamped to [0, 1]; the
    /// sparse layer shows magnitudes in red.
    #[wasm_bindgen(js_name = bandRgba)]
    pub fn band_rgba(&self, layer: &str, band: usize) -> Result<Vec<u8>, String> {
        let cube = match layer {
            "clean" => Some(&self.clean),
            "noisy" => Some(&self.noisy),
            "denoised" => self.denoised.as_ref(),
            "sparse" => self.sparse.as_ref(),
            other => return Err(format!("unknown layer {other:?}")),
        }
        .ok_or_else(|| format!("no {layer} cube yet"))?;
        if band >= cube.bands() {
            return Err(format!("band {band} out of range 0..{}", cube.bands()));
        }
        let (rows, cols) = (cube.rows(), cube.cols());
        let mut out = Vec::with_capacity(rows * cols * 4);
        for r in 0..rows {
            for c in 0..cols {
                let v = cube.data().get(r, c, band);
                let px = if layer == "sparse" {
                    let m = (v.abs() * 255.0).clamp(0.0, 255.0) as u8;
                    [m, m / 4, m / 4, 255]
                } else {
                    let g = (v * 255.0).round().clamp(0.0, 255.0) as u8;
                    [g, g, g, 255]
                };
                out.extend_from_slice(&px);
            }
        }
        Ok(out)
    }

    /// Core magnitudes, largest first, of the group matched around pixel
    /// `(row, col)` of the noisy cube's reduced image.
    #[wasm_bindgen(js_name = groupSpectrum)]
    pub fn group_spectrum(&self, row: usize, col: usize) -> Result<Vec<f64>, String> {
        let noise = estimate_noise(&self.noisy).map_err(text)?;
        let basis = match self.cfg.k {
            Some(k) => basis_with_rank(&self.noisy, &noise, k).map_err(text)?,
            None => select_rank_and_basis(&self.noisy, &noise).map_err(text)?.basis,
        };
        let z = project(self.noisy.data(), &basis).map_err(text)?;
        let p = self.cfg.p;
        let n = self.size();
        let reference = (row.min(n - p), col.min(n - p));
        let q = self.cfg.q.min(min_window_positions(n, p, self.cfg.window).pow(2));
        let gi = block_match(&z, reference, p, q, self.cfg.window).map_err(text)?;
        let group = extract_group(&z, &gi, p).map_err(text)?;
        let core = hosvd(&group.t, full_ranks(group.t.dims())).map_err(text)?.core;
        let mut mags: Vec<f64> = core.as_slice().iter().map(|v| v.abs()).collect();
        mags.sort_by(|a, b| b.total_cmp(a));
        Ok(mags)
    }
}

/// Applies one reweighted shrinkage step to core magnitudes: each entry is
/// soft-thresholded at `w·σ²/2` with `w = c·√q / (|g| + ε)`.
#[wasm_bindgen(js_name = shrinkSpectrum)]
pub fn shrink_spectrum(values: &[f64], sigma: f64, c: f64, q: usize) -> Vec<f64> {
    let w = compute_weights(values, c, q, 1e-16);
    let sigma2 = sigma * sigma;
    values
        .iter()
        .zip(&w.w)
        .map(|(&v, &wi)| soft_threshold(v, wi * sigma2 / 2.0))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shrinkage_keeps_large_and_drops_small() {
        let out = shrink_spectrum(&[10.0, 1.0, 0.01], 0.1, 2f64.sqrt(), 70);
        assert!(out[0] > 9.9);
        assert_eq!(out[2], 0.0);
        assert!(out.windows(2).all(|p| p[0] >= p[1]));
    }

    #[test]
    fn scene_views_and_group_spectrum() {
        let scene = Scene::new(16, 8, 1, 3).unwrap();
        let rgba = scene.band_rgba("noisy", 2).unwrap();
        assert_eq!(rgba.len(), 16 * 16 * 4);
        assert!(scene.band_rgba("denoised", 0).is_err());
        assert!(scene.band_rgba("noisy", 8).is_err());
        let spectrum = scene.group_spectrum(20, 0).unwrap();
        assert!(spectrum.windows(2).all(|p| p[0] >= p[1]));
    }

    #[test]
    fn denoise_improves_the_scene() {
        let mut scene = Scene::new(16, 8, 1, 3).unwrap();
        let before = scene.noisy_mpsnr().unwrap();
        let trace = scene.denoise(0.2, 0.1, 2, 0).unwrap();
        assert_eq!(trace.len(), 2);
        assert!(scene.metrics().unwrap()[0] > before + 5.0);
        assert_eq!(scene.band_rgba("sparse", 0).unwrap().len(), 16 * 16 * 4);
    }
}

//! Reference-based quality indices: PSNR, SSIM, ERGAS and spectral angle.
//!
//! SSIM uses an 8x8 uniform window at every position, population
//! (1/N) moments, and `C1 = (0.01 L)²`, `C2 = (0.03 L)²` with `L = 1`.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hsi_io::HsiCube;
use crate::par;

pub const SSIM_WINDOW: usize = 8;
const SSIM_C1: f64 = 0.01 * 0.01;
const SSIM_C2: f64 = 0.03 * 0.03;

/// Read-only view of one band, `rows x cols`, stored with rows fastest.
#[derive(Clone, Copy, Debug)]
pub struct BandView<'a> {
    pub data: &'a [f64],
    pub rows: usize,
    pub cols: usize,
}

impl<'a> BandView<'a> {
    pub fn new(data: &'a [f64], rows: usize, cols: usize) -> Self {
        assert_eq!(data.len(), rows * cols, "band view size");
        Self { data, rows, cols }
    }

    pub fn of(cube: &'a HsiCube, band: usize) -> Self {
        BandView::new(cube.data().slice3(band), cube.rows(), cube.cols())
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r + self.rows * c]
    }
}

fn same_shape(a: &BandView, b: &BandView) -> Result<()> {
    if (a.rows, a.cols) != (b.rows, b.cols) {
        return Err(Error::ShapeMismatch(format!(
            "band {}x{} vs {}x{}",
            a.rows, a.cols, b.rows, b.cols
        )));
    }
    Ok(())
}

fn same_dims(a: &HsiCube, b: &HsiCube) -> Result<()> {
    if a.dims() != b.dims() {
        return Err(Error::ShapeMismatch(format!("cube {:?} vs {:?}", a.dims(), b.dims())));
    }
    Ok(())
}

/// PSNR in dB; `f64::INFINITY` when the bands are identical.
pub fn psnr_band(reference: BandView, test: BandView, peak: f64) -> Result<f64> {
    same_shape(&reference, &test)?;
    let mse = reference
        .data
        .iter()
        .zip(test.data)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        / reference.data.len() as f64;
    if mse == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (peak * peak / mse).log10())
}

/// Summed-area table with a zero border: `(rows + 1) x (cols + 1)`, rows fastest.
struct Integral {
    rows: usize,
    sums: Vec<f64>,
}

impl Integral {
    fn new(rows: usize, cols: usize, f: impl Fn(usize, usize) -> f64) -> Self {
        let stride = rows + 1;
        let mut sums = vec![0.0; stride * (cols + 1)];
        for c in 0..cols {
            let mut run = 0.0;
            for r in 0..rows {
                run += f(r, c);
                sums[(r + 1) + stride * (c + 1)] = sums[(r + 1) + stride * c] + run;
            }
        }
        Integral { rows, sums }
    }

    #[inline]
    fn window(&self, r: usize, c: usize, w: usize) -> f64 {
        let s = self.rows + 1;
        let at = |r: usize, c: usize| self.sums[r + s * c];
        at(r + w, c + w) - at(r, c + w) - at(r + w, c) + at(r, c)
    }
}

/// Mean SSIM over all 8x8 windows.
pub fn ssim_band(reference: BandView, test: BandView) -> Result<f64> {
    same_shape(&reference, &test)?;
    let (rows, cols) = (reference.rows, reference.cols);
    if rows < SSIM_WINDOW || cols < SSIM_WINDOW {
        return Err(Error::WindowTooLarge {
            window: SSIM_WINDOW,
            rows,
            cols,
        });
    }
    let sx = Integral::new(rows, cols, |r, c| reference.get(r, c));
    let sy = Integral::new(rows, cols, |r, c| test.get(r, c));
    let sxx = Integral::new(rows, cols, |r, c| reference.get(r, c).powi(2));
    let syy = Integral::new(rows, cols, |r, c| test.get(r, c).powi(2));
    let sxy = Integral::new(rows, cols, |r, c| reference.get(r, c) * test.get(r, c));
    let n = (SSIM_WINDOW * SSIM_WINDOW) as f64;
    let mut total = 0.0;
    let mut count = 0usize;
    for c in 0..=cols - SSIM_WINDOW {
        for r in 0..=rows - SSIM_WINDOW {
            let mx = sx.window(r, c, SSIM_WINDOW) / n;
            let my = sy.window(r, c, SSIM_WINDOW) / n;
            let vx = (sxx.window(r, c, SSIM_WINDOW) / n - mx * mx).max(0.0);
            let vy = (syy.window(r, c, SSIM_WINDOW) / n - my * my).max(0.0);
            let cov = sxy.window(r, c, SSIM_WINDOW) / n - mx * my;
            total += ((2.0 * mx * my + SSIM_C1) * (2.0 * cov + SSIM_C2))
                / ((mx * mx + my * my + SSIM_C1) * (vx + vy + SSIM_C2));
            count += 1;
        }
    }
    Ok(total / count as f64)
}

/// ERGAS with resolution ratio 1.
pub fn ergas(reference: &HsiCube, test: &HsiCube) -> Result<f64> {
    same_dims(reference, test)?;
    let mut acc = 0.0;
    for b in 0..reference.bands() {
        let r = reference.data().slice3(b);
        let t = test.data().slice3(b);
        let n = r.len() as f64;
        let mean = r.iter().sum::<f64>() / n;
        if mean == 0.0 {
            return Err(Error::ZeroMeanBand(b));
        }
        let mse = r.iter().zip(t).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / n;
        acc += mse / (mean * mean);
    }
    Ok(100.0 * (acc / reference.bands() as f64).sqrt())
}

/// Per-pixel spectral angles in radians, skipping pixels where either
/// spectrum is zero. Returns the angles and the number of skipped pixels.
pub fn spectral_angles(reference: &HsiCube, test: &HsiCube) -> Result<(Vec<f64>, usize)> {
    same_dims(reference, test)?;
    let (n1, n2, n3) = reference.dims();
    let pixels = n1 * n2;
    let (r, t) = (reference.data().as_slice(), test.data().as_slice());
    let mut angles = Vec::with_capacity(pixels);
    let mut skipped = 0;
    let mut u = vec![0.0; n3];
    let mut v = vec![0.0; n3];
    for p in 0..pixels {
        let (mut nr, mut nt) = (0.0, 0.0);
        for b in 0..n3 {
            u[b] = r[p + pixels * b];
            v[b] = t[p + pixels * b];
            nr += u[b] * u[b];
            nt += v[b] * v[b];
        }
        if nr == 0.0 || nt == 0.0 {
            skipped += 1;
            continue;
        }
        // 2·atan2(|û − v̂|, |û + v̂|) stays accurate for nearly parallel spectra
        let (nr, nt) = (nr.sqrt(), nt.sqrt());
        let (mut diff, mut sum) = (0.0, 0.0);
        for (a, b) in u.iter().zip(&v) {
            let (a, b) = (a / nr, b / nt);
            diff += (a - b) * (a - b);
            sum += (a + b) * (a + b);
        }
        angles.push(2.0 * diff.sqrt().atan2(sum.sqrt()));
    }
    Ok((angles, skipped))
}

/// Mean spectral angle in radians (0 if every pixel was skipped).
pub fn msa(reference: &HsiCube, test: &HsiCube) -> Result<f64> {
    let (angles, _) = spectral_angles(reference, test)?;
    if angles.is_empty() {
        return Ok(0.0);
    }
    Ok(angles.iter().sum::<f64>() / angles.len() as f64)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub psnr: Vec<f64>,
    pub ssim: Vec<f64>,
    pub mpsnr: f64,
    pub mssim: f64,
    pub ergas: f64,
    pub msa: f64,
    pub msa_skipped: usize,
    pub runtime_secs: Option<f64>,
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// MPSNR over bands with peak 1.
pub fn mpsnr(reference: &HsiCube, test: &HsiCube) -> Result<f64> {
    same_dims(reference, test)?;
    let psnr = (0..reference.bands())
        .map(|b| psnr_band(BandView::of(reference, b), BandView::of(test, b), 1.0))
        .collect::<Result<Vec<_>>>()?;
    Ok(mean(&psnr))
}

/// Full report; per-band indices are computed in parallel.
pub fn evaluate(reference: &HsiCube, test: &HsiCube) -> Result<MetricsReport> {
    same_dims(reference, test)?;
    let per_band = par::map_indexed(reference.bands(), |b| -> Result<(f64, f64)> {
        let (r, t) = (BandView::of(reference, b), BandView::of(test, b));
        Ok((psnr_band(r, t, 1.0)?, ssim_band(r, t)?))
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    let (psnr, ssim): (Vec<f64>, Vec<f64>) = per_band.into_iter().unzip();
    let (angles, msa_skipped) = spectral_angles(reference, test)?;
    Ok(MetricsReport {
        mpsnr: mean(&psnr),
        mssim: mean(&ssim),
        psnr,
        ssim,
        ergas: ergas(reference, test)?,
        msa: if angles.is_empty() { 0.0 } else { mean(&angles) },
        msa_skipped,
        runtime_secs: None,
    })
}

fn fmt_value(v: f64) -> String {
    if v.is_infinite() {
        if v > 0.0 {
            "inf".into()
        } else {
            "-inf".into()
        }
    } else {
        format!("{v}")
    }
}

impl MetricsReport {
    /// `band,psnr,ssim,ergas,msa,runtime_s`: one row per band, then a
    /// `summary` row carrying the band means and the cube-level indices.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("band,psnr,ssim,ergas,msa,runtime_s\n");
        for (b, (p, s)) in self.psnr.iter().zip(&self.ssim).enumerate() {
            let _ = writeln!(out, "{b},{},{},,,", fmt_value(*p), fmt_value(*s));
        }
        let _ = writeln!(
            out,
            "summary,{},{},{},{},{}",
            fmt_value(self.mpsnr),
            fmt_value(self.mssim),
            fmt_value(self.ergas),
            fmt_value(self.msa),
            self.runtime_secs.map(fmt_value).unwrap_or_default()
        );
        out
    }
}

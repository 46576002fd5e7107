//! PSNR and SSIM, computed per band and averaged.
//!
//! Inputs are clamped to `[0, 1]` first; the peak value is 1.0. A band with
//! zero error scores [`PSNR_CAP_DB`], and no band ever scores above it.
//!
//! SSIM uses an 11x11 Gaussian window (sigma 1.5), `C1 = 0.01^2`,
//! `C2 = 0.03^2`, and averages the SSIM map over the valid region only (no
//! padding). Bands smaller than 11 pixels on a side use a window clipped to
//! the band size.

use serde::{Deserialize, Serialize};

use crate::error::{mismatch, Result};
use crate::tensor::HsiCube;

pub const PSNR_CAP_DB: f64 = 100.0;
pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
const SSIM_C1: f64 = 0.01 * 0.01;
const SSIM_C2: f64 = 0.03 * 0.03;

/// Full quality report for a reconstruction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub psnr_db: f64,
    pub ssim: f64,
    pub per_band_psnr: Vec<f64>,
    pub per_band_ssim: Vec<f64>,
    /// Mean squared error over the whole (clamped) cube.
    pub mse: f64,
}

/// Per-band scores and their mean.
#[derive(Debug, Clone, PartialEq)]
pub struct BandScores {
    pub mean: f64,
    pub per_band: Vec<f64>,
}

impl BandScores {
    fn from_bands(per_band: Vec<f64>) -> Self {
        let mean = per_band.iter().sum::<f64>() / per_band.len() as f64;
        BandScores { mean, per_band }
    }
}

fn check_dims(reference: &HsiCube, test: &HsiCube) -> Result<()> {
    let dims = |c: &HsiCube| (c.config().height(), c.plane_width(), c.config().bands());
    let (a, b) = (dims(reference), dims(test));
    if a != b {
        return Err(mismatch(
            "metric inputs",
            format!("{}x{}x{}", a.0, a.1, a.2),
            format!("{}x{}x{}", b.0, b.1, b.2),
        ));
    }
    Ok(())
}

#[inline]
fn clamp01(v: f64) -> f64 {
    v.clamp(0.0, 1.0)
}

fn band_mse(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| {
            let d = clamp01(*x) - clamp01(*y);
            d * d
        })
        .sum::<f64>()
        / a.len() as f64
}

fn psnr_from_mse(mse: f64) -> f64 {
    if mse <= 0.0 {
        PSNR_CAP_DB
    } else {
        (10.0 * (1.0 / mse).log10()).min(PSNR_CAP_DB)
    }
}

pub fn psnr(reference: &HsiCube, test: &HsiCube) -> Result<BandScores> {
    check_dims(reference, test)?;
    let bands = reference.config().bands();
    Ok(BandScores::from_bands(
        (0..bands)
            .map(|c| psnr_from_mse(band_mse(reference.band(c), test.band(c))))
            .collect(),
    ))
}

fn gaussian_kernel(size: usize) -> Vec<f64> {
    let center = (size as f64 - 1.0) / 2.0;
    let raw: Vec<f64> = (0..size)
        .map(|i| {
            let x = i as f64 - center;
            (-(x * x) / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp()
        })
        .collect();
    let total: f64 = raw.iter().sum();
    raw.into_iter().map(|v| v / total).collect()
}

/// Separable valid-mode filter with independent row and column kernels.
fn filter_valid(plane: &[f64], h: usize, w: usize, kr: &[f64], kc: &[f64]) -> Vec<f64> {
    let oh = h + 1 - kr.len();
    let ow = w + 1 - kc.len();
    let mut horiz = vec![0.0; h * ow];
    for i in 0..h {
        let row = &plane[i * w..(i + 1) * w];
        for j in 0..ow {
            horiz[i * ow + j] = kc.iter().zip(&row[j..]).map(|(k, v)| k * v).sum();
        }
    }
    let mut out = vec![0.0; oh * ow];
    for i in 0..oh {
        for j in 0..ow {
            out[i * ow + j] = kr
                .iter()
                .enumerate()
                .map(|(t, k)| k * horiz[(i + t) * ow + j])
                .sum();
        }
    }
    out
}

fn band_ssim(a: &[f64], b: &[f64], h: usize, w: usize) -> f64 {
    let x: Vec<f64> = a.iter().map(|&v| clamp01(v)).collect();
    let y: Vec<f64> = b.iter().map(|&v| clamp01(v)).collect();
    let kr = gaussian_kernel(SSIM_WINDOW.min(h));
    let kc = gaussian_kernel(SSIM_WINDOW.min(w));

    let xx: Vec<f64> = x.iter().map(|v| v * v).collect();
    let yy: Vec<f64> = y.iter().map(|v| v * v).collect();
    let xy: Vec<f64> = x.iter().zip(&y).map(|(p, q)| p * q).collect();

    let mu_x = filter_valid(&x, h, w, &kr, &kc);
    let mu_y = filter_valid(&y, h, w, &kr, &kc);
    let e_xx = filter_valid(&xx, h, w, &kr, &kc);
    let e_yy = filter_valid(&yy, h, w, &kr, &kc);
    let e_xy = filter_valid(&xy, h, w, &kr, &kc);

    let n = mu_x.len();
    let mut total = 0.0;
    for i in 0..n {
        let (mx, my) = (mu_x[i], mu_y[i]);
        let sxx = e_xx[i] - mx * mx;
        let syy = e_yy[i] - my * my;
        let sxy = e_xy[i] - mx * my;
        let num = (2.0 * mx * my + SSIM_C1) * (2.0 * sxy + SSIM_C2);
        let den = (mx * mx + my * my + SSIM_C1) * (sxx + syy + SSIM_C2);
        total += num / den;
    }
    total / n as f64
}

pub fn ssim(reference: &HsiCube, test: &HsiCube) -> Result<BandScores> {
    check_dims(reference, test)?;
    let h = reference.config().height();
    let w = reference.plane_width();
    Ok(BandScores::from_bands(
        (0..reference.config().bands())
            .map(|c| band_ssim(reference.band(c), test.band(c), h, w))
            .collect(),
    ))
}

/// PSNR, SSIM and whole-cube MSE in one report.
pub fn evaluate(reference: &HsiCube, test: &HsiCube) -> Result<MetricReport> {
    let p = psnr(reference, test)?;
    let s = ssim(reference, test)?;
    Ok(MetricReport {
        psnr_db: p.mean,
        ssim: s.mean,
        per_band_psnr: p.per_band,
        per_band_ssim: s.per_band,
        mse: band_mse(reference.data(), test.data()),
    })
}

//! Full-reference image fidelity metrics: PSNR and single-scale SSIM.
//!
//! SSIM uses the standard 11x11 Gaussian window (sigma 1.5), K1 = 0.01,
//! K2 = 0.03, dynamic range 1.0, evaluated over the valid region (no
//! padding), per channel, then averaged. All accumulation is in `f64`.

use crate::error::{Error, Result};
use crate::tensor::Tensor;
use crate::Scalar;

pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
pub const SSIM_K1: f64 = 0.01;
pub const SSIM_K2: f64 = 0.03;

/// Peak signal-to-noise ratio in dB. Identical inputs (zero MSE) report the
/// `f64::INFINITY` sentinel.
pub fn psnr<F: Scalar>(a: &Tensor<F>, b: &Tensor<F>, peak: f64) -> Result<f64> {
    a.check_same_shape(b)?;
    if !(peak > 0.0) {
        return Err(Error::invalid("peak", "must be > 0"));
    }
    let mut sum_sq = 0.0f64;
    for (x, y) in a.data().iter().zip(b.data()) {
        let d = x.to_f64().unwrap() - y.to_f64().unwrap();
        sum_sq += d * d;
    }
    let mse = sum_sq / a.len() as f64;
    if mse == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (peak * peak / mse).log10())
}

fn gaussian_window_1d() -> [f64; SSIM_WINDOW] {
    let mut w = [0.0; SSIM_WINDOW];
    let center = (SSIM_WINDOW / 2) as f64;
    let mut sum = 0.0;
    for (i, v) in w.iter_mut().enumerate() {
        let d = i as f64 - center;
        *v = (-d * d / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp();
        sum += *v;
    }
    for v in w.iter_mut() {
        *v /= sum;
    }
    w
}

/// Valid-mode separable windowed filtering of an `h x w` plane:
/// returns `(h - 10) x (w - 10)` local weighted means.
fn filter_valid(plane: &[f64], h: usize, w: usize, kernel: &[f64; SSIM_WINDOW]) -> Vec<f64> {
    let vw = w - SSIM_WINDOW + 1;
    let vh = h - SSIM_WINDOW + 1;
    let mut horiz = vec![0.0; h * vw];
    for r in 0..h {
        for c in 0..vw {
            let mut acc = 0.0;
            for (k, &kv) in kernel.iter().enumerate() {
                acc += kv * plane[r * w + c + k];
            }
            horiz[r * vw + c] = acc;
        }
    }
    let mut out = vec![0.0; vh * vw];
    for r in 0..vh {
        for c in 0..vw {
            let mut acc = 0.0;
            for (k, &kv) in kernel.iter().enumerate() {
                acc += kv * horiz[(r + k) * vw + c];
            }
            out[r * vw + c] = acc;
        }
    }
    out
}

fn channel_plane<F: Scalar>(t: &Tensor<F>, channel: usize) -> Vec<f64> {
    let (h, w) = (t.height(), t.width());
    let mut plane = Vec::with_capacity(h * w);
    for r in 0..h {
        for c in 0..w {
            plane.push(t.get(r, c, channel).to_f64().unwrap());
        }
    }
    plane
}

/// Mean local SSIM between two equal-shaped images with unit dynamic range.
pub fn ssim<F: Scalar>(a: &Tensor<F>, b: &Tensor<F>) -> Result<f64> {
    a.check_same_shape(b)?;
    let (h, w) = (a.height(), a.width());
    if h < SSIM_WINDOW || w < SSIM_WINDOW {
        return Err(Error::invalid(
            "image",
            format!("{h}x{w} is smaller than the {SSIM_WINDOW}x{SSIM_WINDOW} window"),
        ));
    }
    let kernel = gaussian_window_1d();
    let c1 = (SSIM_K1 * 1.0f64).powi(2);
    let c2 = (SSIM_K2 * 1.0f64).powi(2);

    let mut channel_means = Vec::with_capacity(a.channels());
    for channel in 0..a.channels() {
        let pa = channel_plane(a, channel);
        let pb = channel_plane(b, channel);
        let paa: Vec<f64> = pa.iter().map(|v| v * v).collect();
        let pbb: Vec<f64> = pb.iter().map(|v| v * v).collect();
        let pab: Vec<f64> = pa.iter().zip(&pb).map(|(x, y)| x * y).collect();

        let mu_a = filter_valid(&pa, h, w, &kernel);
        let mu_b = filter_valid(&pb, h, w, &kernel);
        let e_aa = filter_valid(&paa, h, w, &kernel);
        let e_bb = filter_valid(&pbb, h, w, &kernel);
        let e_ab = filter_valid(&pab, h, w, &kernel);

        let mut acc = 0.0;
        for i in 0..mu_a.len() {
            let (ma, mb) = (mu_a[i], mu_b[i]);
            let var_a = e_aa[i] - ma * ma;
            let var_b = e_bb[i] - mb * mb;
            let cov = e_ab[i] - ma * mb;
            acc += ((2.0 * ma * mb + c1) * (2.0 * cov + c2))
                / ((ma * ma + mb * mb + c1) * (var_a + var_b + c2));
        }
        channel_means.push(acc / mu_a.len() as f64);
    }
    Ok(channel_means.iter().sum::<f64>() / channel_means.len() as f64)
}

/// Scores of one image against the reference.
#[derive(Clone, Debug)]
pub struct ImageScore {
    pub id: String,
    pub psnr_db: f64,
    pub ssim: f64,
}

/// Per-image and aggregate scores of one pilot-study variant.
#[derive(Clone, Debug)]
pub struct MetricReport {
    variant: String,
    scale: usize,
    scores: Vec<ImageScore>,
    mean_psnr_db: f64,
    mean_ssim: f64,
}

impl MetricReport {
    pub fn from_scores(variant: impl Into<String>, scale: usize, scores: Vec<ImageScore>) -> Result<Self> {
        if scores.is_empty() {
            return Err(Error::EmptyCorpus);
        }
        let n = scores.len() as f64;
        let mean_psnr_db = scores.iter().map(|s| s.psnr_db).sum::<f64>() / n;
        let mean_ssim = scores.iter().map(|s| s.ssim).sum::<f64>() / n;
        Ok(MetricReport {
            variant: variant.into(),
            scale,
            scores,
            mean_psnr_db,
            mean_ssim,
        })
    }

    pub fn variant(&self) -> &str {
        &self.variant
    }

    pub fn scale(&self) -> usize {
        self.scale
    }

    pub fn corpus_size(&self) -> usize {
        self.scores.len()
    }

    pub fn scores(&self) -> &[ImageScore] {
        &self.scores
    }

    pub fn mean_psnr_db(&self) -> f64 {
        self.mean_psnr_db
    }

    pub fn mean_ssim(&self) -> f64 {
        self.mean_ssim
    }
}

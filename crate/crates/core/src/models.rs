//! Model contracts and the analytic desk-scale implementations behind them.
//!
//! The denoiser and autoencoder used by the pipeline are abstract traits so a
//! real network can be adapted in later. The implementations here are linear
//! or closed-form, which makes every pipeline-level claim checkable against
//! hand arithmetic: a Bayes-optimal noise predictor for an isotropic Gaussian
//! data prior, and a patch autoencoder whose channel mixing is a fixed random
//! orthonormal map.

use rand::Rng;

use crate::error::{Error, Result};
use crate::rng::{stream, RngSeed, StreamDomain};
use crate::schedule::NoiseSchedule;
use crate::tensor::Tensor;
use crate::Scalar;

/// Selects the denoiser branch; stands in for prompt conditioning.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ConditioningTag {
    Unconditional,
    Class(u32),
}

/// Shape-preserving noise predictor.
pub trait Denoiser<F: Scalar>: Send + Sync {
    fn predict_noise(&self, z_t: &Tensor<F>, t: usize, cond: ConditioningTag) -> Result<Tensor<F>>;
}

/// Pixel <-> latent codec with a fixed spatial factor.
pub trait Autoencoder<F: Scalar>: Send + Sync {
    /// `(H, W, 3) -> (H/f, W/f, c)`.
    fn encode(&self, image: &Tensor<F>) -> Result<Tensor<F>>;
    /// `(h, w, c) -> (h*f, w*f, 3)`.
    fn decode(&self, latent: &Tensor<F>) -> Result<Tensor<F>>;
    fn spatial_factor(&self) -> usize;
    fn latent_channels(&self) -> usize;
}

/// Bayes-optimal noise prediction for `z0 ~ N(mu, sigma^2 I)`:
///
/// ```text
/// eps_hat = (z_t - sqrt(a_t) * mu) * sqrt(1 - a_t) / (a_t * sigma^2 + 1 - a_t)
/// ```
///
/// derived from the closed-form posterior mean `E[z0 | z_t]`. Conditioning is
/// ignored: both branches predict the same noise.
pub struct AnalyticGaussianDenoiser<F> {
    mean: F,
    mean_field: Option<Tensor<F>>,
    sigma2: F,
    schedule: NoiseSchedule<F>,
}

impl<F: Scalar> AnalyticGaussianDenoiser<F> {
    /// Prior with a constant mean over all elements.
    pub fn isotropic(mean: F, sigma2: F, schedule: NoiseSchedule<F>) -> Result<Self> {
        if !(sigma2 > F::zero()) || !sigma2.is_finite() {
            return Err(Error::invalid("prior_sigma2", "must be > 0"));
        }
        Ok(AnalyticGaussianDenoiser { mean, mean_field: None, sigma2, schedule })
    }

    /// Prior with a per-element mean tensor; inputs must match its shape.
    pub fn with_mean_field(mean_field: Tensor<F>, sigma2: F, schedule: NoiseSchedule<F>) -> Result<Self> {
        if !(sigma2 > F::zero()) || !sigma2.is_finite() {
            return Err(Error::invalid("prior_sigma2", "must be > 0"));
        }
        Ok(AnalyticGaussianDenoiser { mean: F::zero(), mean_field: Some(mean_field), sigma2, schedule })
    }

    /// The scalar form of the prediction, shared by both prior variants.
    pub(crate) fn bayes_eps(z: F, mu: F, sigma2: F, alpha_bar: F) -> F {
        let rest = F::one() - alpha_bar;
        (z - alpha_bar.sqrt() * mu) * rest.sqrt() / (alpha_bar * sigma2 + rest)
    }
}

impl<F: Scalar> Denoiser<F> for AnalyticGaussianDenoiser<F> {
    fn predict_noise(&self, z_t: &Tensor<F>, t: usize, _cond: ConditioningTag) -> Result<Tensor<F>> {
        let a = self.schedule.alpha_bar(t)?;
        let sigma2 = self.sigma2;
        match &self.mean_field {
            None => {
                let mu = self.mean;
                Ok(z_t.map(|z| Self::bayes_eps(z, mu, sigma2, a)))
            }
            Some(field) => z_t.zip_map(field, |z, mu| Self::bayes_eps(z, mu, sigma2, a)),
        }
    }
}

/// Space-to-depth patch extraction followed by a fixed orthonormal channel
/// mixing: a seeded random rotation of the `c` lowest-frequency patch modes.
///
/// Each non-overlapping `f x f` RGB patch becomes a `3f^2` vector, projected
/// onto `c` orthonormal rows. The rows span the smoothest DCT modes of the
/// patch (the luma mean, luma gradients, and so on), mixed together by a
/// seeded random orthogonal rotation. With `c = 3f^2` the map is orthogonal
/// and decode inverts encode exactly (up to rounding); with `c < 3f^2` it is
/// a lossy projection that keeps smooth content, which is the regime the
/// upsampling pilot study probes: latent cells then measure scale-covariant
/// quantities (local gradients), and interpolating the latent grid transplants
/// coarse-scale measurements onto the fine-scale decoder unrescaled.
pub struct OrthogonalPatchAutoencoder<F> {
    factor: usize,
    channels: usize,
    patch_dim: usize,
    /// `channels x patch_dim`, rows orthonormal.
    basis: Vec<F>,
}

impl<F: Scalar> OrthogonalPatchAutoencoder<F> {
    pub fn new(factor: usize, channels: usize, seed: RngSeed) -> Result<Self> {
        if factor == 0 {
            return Err(Error::invalid("f", "spatial factor must be >= 1"));
        }
        let patch_dim = 3 * factor * factor;
        if channels == 0 || channels > patch_dim {
            return Err(Error::invalid(
                "latent_channels",
                format!("must lie in 1..={patch_dim} for f = {factor}"),
            ));
        }
        let mut rng = stream(seed, StreamDomain::Autoencoder, 0, 0);
        let modes = frequency_ordered_modes(channels, factor);
        let rotation = orthonormal_rows(channels, channels, &mut rng);
        // basis = rotation * modes, rows stay orthonormal
        let mut basis = vec![0.0f64; channels * patch_dim];
        for r in 0..channels {
            for k in 0..channels {
                let q = rotation[r * channels + k];
                let mode = &modes[k * patch_dim..(k + 1) * patch_dim];
                for (b, &m) in basis[r * patch_dim..][..patch_dim].iter_mut().zip(mode) {
                    *b += q * m;
                }
            }
        }
        let basis = basis.into_iter().map(F::from_f64_lossy).collect();
        Ok(OrthogonalPatchAutoencoder { factor, channels, patch_dim, basis })
    }

    fn check_image(&self, image: &Tensor<F>) -> Result<()> {
        if image.channels() != 3 {
            return Err(Error::ShapeMismatch {
                expected: "3-channel image".into(),
                got: format!("{} channels", image.channels()),
            });
        }
        if image.height() % self.factor != 0 || image.width() % self.factor != 0 {
            return Err(Error::invalid(
                "image",
                format!(
                    "dimensions {}x{} are not divisible by the spatial factor {}",
                    image.height(),
                    image.width(),
                    self.factor
                ),
            ));
        }
        Ok(())
    }
}

/// The `count` lowest-frequency orthonormal patch modes, row-major
/// `count x 3f^2`. Spatial structure is the separable DCT-II over the patch,
/// colors use an orthonormal luma-first triple. Modes come luma-major: all
/// luma modes from smoothest up (mean, gradients, curvatures, ...), then the
/// chroma planes in the same spatial order. Small `c` therefore keeps the
/// smooth luminance structure a real autoencoder would reconstruct best.
fn frequency_ordered_modes(count: usize, f: usize) -> Vec<f64> {
    // orthonormal 1-D DCT-II rows: u_k(p) = a_k cos(pi (2p+1) k / (2f))
    let dct: Vec<f64> = (0..f)
        .flat_map(|k| {
            let norm = if k == 0 { (1.0 / f as f64).sqrt() } else { (2.0 / f as f64).sqrt() };
            (0..f)
                .map(move |p| {
                    norm * (std::f64::consts::PI * (2 * p + 1) as f64 * k as f64
                        / (2.0 * f as f64))
                        .cos()
                })
                .collect::<Vec<_>>()
        })
        .collect();
    let s3 = 3.0f64.sqrt();
    let s2 = 2.0f64.sqrt();
    let s6 = 6.0f64.sqrt();
    let color_basis = [
        [1.0 / s3, 1.0 / s3, 1.0 / s3],
        [1.0 / s2, -1.0 / s2, 0.0],
        [1.0 / s6, 1.0 / s6, -2.0 / s6],
    ];
    let mut spatial: Vec<(usize, usize)> = (0..f)
        .flat_map(|ky| (0..f).map(move |kx| (ky, kx)))
        .collect();
    spatial.sort_by_key(|&(ky, kx)| (ky + kx, ky, kx));

    let patch_dim = 3 * f * f;
    let mut modes = Vec::with_capacity(count * patch_dim);
    'outer: for color in &color_basis {
        for &(ky, kx) in &spatial {
            if modes.len() == count * patch_dim {
                break 'outer;
            }
            for py in 0..f {
                for px in 0..f {
                    let s = dct[ky * f + py] * dct[kx * f + px];
                    for col in 0..3 {
                        modes.push(s * color[col]);
                    }
                }
            }
        }
    }
    modes
}

/// Rows of a random orthonormal matrix via modified Gram-Schmidt with a
/// re-orthogonalization pass, all in f64.
fn orthonormal_rows(rows: usize, dim: usize, rng: &mut impl Rng) -> Vec<f64> {
    use rand_distr::StandardNormal;
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(rows);
    while basis.len() < rows {
        let mut v: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
        for _ in 0..2 {
            for b in &basis {
                let dot: f64 = v.iter().zip(b).map(|(a, b)| a * b).sum();
                for (vi, bi) in v.iter_mut().zip(b) {
                    *vi -= dot * bi;
                }
            }
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm < 1e-8 {
            continue; // essentially impossible; redraw
        }
        for vi in v.iter_mut() {
            *vi /= norm;
        }
        basis.push(v);
    }
    basis.into_iter().flatten().collect()
}

impl<F: Scalar> Autoencoder<F> for OrthogonalPatchAutoencoder<F> {
    fn encode(&self, image: &Tensor<F>) -> Result<Tensor<F>> {
        self.check_image(image)?;
        let f = self.factor;
        let (gh, gw) = (image.height() / f, image.width() / f);
        let mut patch = vec![F::zero(); self.patch_dim];
        let mut out = vec![F::zero(); gh * gw * self.channels];
        for gy in 0..gh {
            for gx in 0..gw {
                for py in 0..f {
                    for px in 0..f {
                        for col in 0..3 {
                            patch[(py * f + px) * 3 + col] =
                                image.get(gy * f + py, gx * f + px, col);
                        }
                    }
                }
                let cell = &mut out[(gy * gw + gx) * self.channels..][..self.channels];
                for (ch, slot) in cell.iter_mut().enumerate() {
                    let row = &self.basis[ch * self.patch_dim..][..self.patch_dim];
                    *slot = row
                        .iter()
                        .zip(&patch)
                        .fold(F::zero(), |acc, (&b, &p)| acc + b * p);
                }
            }
        }
        Ok(Tensor::from_vec_unchecked(gh, gw, self.channels, out))
    }

    fn decode(&self, latent: &Tensor<F>) -> Result<Tensor<F>> {
        if latent.channels() != self.channels {
            return Err(Error::ShapeMismatch {
                expected: format!("{} latent channels", self.channels),
                got: format!("{} channels", latent.channels()),
            });
        }
        let f = self.factor;
        let (gh, gw) = (latent.height(), latent.width());
        let (h, w) = (gh * f, gw * f);
        let mut out = vec![F::zero(); h * w * 3];
        let mut patch = vec![F::zero(); self.patch_dim];
        for gy in 0..gh {
            for gx in 0..gw {
                patch.iter_mut().for_each(|p| *p = F::zero());
                for ch in 0..self.channels {
                    let row = &self.basis[ch * self.patch_dim..][..self.patch_dim];
                    let v = latent.get(gy, gx, ch);
                    for (p, &b) in patch.iter_mut().zip(row) {
                        *p += v * b;
                    }
                }
                for py in 0..f {
                    for px in 0..f {
                        for col in 0..3 {
                            out[((gy * f + py) * w + gx * f + px) * 3 + col] =
                                patch[(py * f + px) * 3 + col];
                        }
                    }
                }
            }
        }
        Ok(Tensor::from_vec_unchecked(h, w, 3, out))
    }

    fn spatial_factor(&self) -> usize {
        self.factor
    }

    fn latent_channels(&self) -> usize {
        self.channels
    }
}

//! Forward-diffusion arithmetic and the deterministic reverse update.
//!
//! Everything is expressed in the cumulative signal-retention sequence
//! `alpha_bar` so that the forward map (`diffuse_*`) and the reverse step
//! (`denoise_step`) are exact algebraic inverses when the true noise is
//! known. The reverse update is the deterministic (eta = 0) form:
//!
//! ```text
//! z0_hat  = (z_t - sqrt(1 - a_t) * eps) / sqrt(a_t)
//! z_{t-1} = sqrt(a_{t-1}) * z0_hat + sqrt(1 - a_{t-1}) * eps
//! ```

use rand::Rng;

use crate::error::{Error, Result};
use crate::rng::standard_normal_tensor;
use crate::tensor::Tensor;
use crate::Scalar;

/// Cumulative noise schedule over `t0` discrete steps; `alpha_bar[0] = 1`.
#[derive(Clone, Debug)]
pub struct NoiseSchedule<F> {
    alpha_bar: Vec<F>,
}

impl<F: Scalar> NoiseSchedule<F> {
    /// Build from a linearly spaced beta ramp. Products accumulate in `f64`
    /// before narrowing to `F`.
    pub fn linear_beta(t0: usize, beta_start: f64, beta_end: f64) -> Result<Self> {
        if t0 == 0 {
            return Err(Error::invalid("t0", "must be >= 1"));
        }
        if !(beta_start > 0.0) || !(beta_end < 1.0) || beta_start > beta_end {
            return Err(Error::invalid(
                "beta_start/beta_end",
                format!("need 0 < beta_start <= beta_end < 1, got ({beta_start}, {beta_end})"),
            ));
        }
        let mut alpha_bar = Vec::with_capacity(t0 + 1);
        let mut prod = 1.0f64;
        alpha_bar.push(F::one());
        for s in 0..t0 {
            let beta = if t0 == 1 {
                beta_start
            } else {
                beta_start + (beta_end - beta_start) * s as f64 / (t0 - 1) as f64
            };
            prod *= 1.0 - beta;
            alpha_bar.push(F::from_f64_lossy(prod));
        }
        Ok(NoiseSchedule { alpha_bar })
    }

    pub fn total_steps(&self) -> usize {
        self.alpha_bar.len() - 1
    }

    pub fn alpha_bar(&self, t: usize) -> Result<F> {
        self.alpha_bar
            .get(t)
            .copied()
            .ok_or(Error::StepOutOfRange { t, t0: self.total_steps() })
    }

    pub fn alpha_bars(&self) -> &[F] {
        &self.alpha_bar
    }

    /// Forward-diffuse `z0` to step `t` with the caller-supplied noise.
    /// `t = 0` returns `z0` bitwise.
    pub fn diffuse_with_noise(&self, z0: &Tensor<F>, t: usize, eps: &Tensor<F>) -> Result<Tensor<F>> {
        if t == 0 {
            return Ok(z0.clone());
        }
        let a = self.alpha_bar(t)?;
        let signal = a.sqrt();
        let noise = (F::one() - a).sqrt();
        z0.zip_map(eps, |z, e| signal * z + noise * e)
    }

    /// Forward-diffuse `z0` to step `t`, drawing i.i.d. standard normal noise
    /// from `rng`. `t = 0` returns `z0` bitwise and consumes no randomness.
    pub fn diffuse_to(&self, z0: &Tensor<F>, t: usize, rng: &mut impl Rng) -> Result<Tensor<F>> {
        if t == 0 {
            return Ok(z0.clone());
        }
        self.alpha_bar(t)?;
        let eps = standard_normal_tensor(z0.height(), z0.width(), z0.channels(), rng);
        self.diffuse_with_noise(z0, t, &eps)
    }

    /// One deterministic reverse step from `t` to `t - 1` given the predicted
    /// noise.
    pub fn denoise_step(&self, z_t: &Tensor<F>, eps_pred: &Tensor<F>, t: usize) -> Result<Tensor<F>> {
        if t == 0 {
            return Err(Error::StepOutOfRange { t, t0: self.total_steps() });
        }
        let a_t = self.alpha_bar(t)?;
        let a_prev = self.alpha_bar(t - 1)?;
        let inv_signal = F::one() / a_t.sqrt();
        let noise_t = (F::one() - a_t).sqrt();
        let signal_prev = a_prev.sqrt();
        let noise_prev = (F::one() - a_prev).sqrt();
        z_t.zip_map(eps_pred, |z, e| {
            let z0_hat = (z - noise_t * e) * inv_signal;
            signal_prev * z0_hat + noise_prev * e
        })
    }
}

/// Classifier-free guidance combination:
/// `eps_uncond + scale * (eps_cond - eps_uncond)`.
pub fn cfg_combine<F: Scalar>(
    eps_uncond: &Tensor<F>,
    eps_cond: &Tensor<F>,
    scale: F,
) -> Result<Tensor<F>> {
    eps_uncond.zip_map(eps_cond, |u, c| u + scale * (c - u))
}

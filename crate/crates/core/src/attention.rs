//! Parameter-free self-attention and the guidance schedule that blends it
//! into stage-one denoising.
//!
//! Attention is computed directly from the latent: scores are raw token
//! dot-products over channels, there are no learned projections. Rows are
//! softmax-normalized (with max subtraction) and applied to the token values
//! themselves. Dot products, softmax and the value product accumulate in
//! `f64` regardless of the tensor scalar.

use crate::error::{Error, Result};
use crate::tensor::{Matrix, Tensor};
use crate::Scalar;

/// Default attention scaling: sqrt of the channel count.
pub fn default_scaling<F: Scalar>(channels: usize) -> F {
    F::from_f64_lossy((channels as f64).sqrt())
}

fn resolve_scaling<F: Scalar>(scaling: Option<F>, channels: usize) -> Result<f64> {
    let s = scaling.unwrap_or_else(|| default_scaling(channels));
    let s = s.to_f64().unwrap();
    if !(s > 0.0) || !s.is_finite() {
        return Err(Error::invalid("pfsa_scaling", "must be a positive real"));
    }
    Ok(s)
}

/// One softmax attention row over all tokens, in f64.
fn attention_row(tokens: &[f64], n: usize, c: usize, i: usize, inv_scale: f64) -> Vec<f64> {
    let ti = &tokens[i * c..(i + 1) * c];
    let mut scores = Vec::with_capacity(n);
    let mut max = f64::NEG_INFINITY;
    for j in 0..n {
        let tj = &tokens[j * c..(j + 1) * c];
        let dot: f64 = ti.iter().zip(tj).map(|(a, b)| a * b).sum();
        let s = dot * inv_scale;
        max = max.max(s);
        scores.push(s);
    }
    let mut sum = 0.0;
    for s in scores.iter_mut() {
        *s = (*s - max).exp();
        sum += *s;
    }
    for s in scores.iter_mut() {
        *s /= sum;
    }
    scores
}

fn tokens_f64<F: Scalar>(z: &Tensor<F>) -> Vec<f64> {
    z.data().iter().map(|v| v.to_f64().unwrap()).collect()
}

/// Parameter-free self-attention over the spatial tokens of `z`.
///
/// Equivalent to unflattening `Softmax(M Mᵀ / scaling) M` where `M` is the
/// `(h*w) x c` token matrix of `z`, but computed row by row so the full
/// attention matrix is never materialized. `scaling` defaults to `sqrt(c)`.
pub fn pfsa<F: Scalar>(z: &Tensor<F>, scaling: Option<F>) -> Result<Tensor<F>> {
    let inv_scale = 1.0 / resolve_scaling(scaling, z.channels())?;
    let (n, c) = (z.height() * z.width(), z.channels());
    let tokens = tokens_f64(z);
    let mut out = vec![F::zero(); n * c];
    for i in 0..n {
        let row = attention_row(&tokens, n, c, i, inv_scale);
        let mut acc = vec![0.0f64; c];
        for (j, &p) in row.iter().enumerate() {
            let tj = &tokens[j * c..(j + 1) * c];
            for (a, v) in acc.iter_mut().zip(tj) {
                *a += p * v;
            }
        }
        for (o, a) in out[i * c..(i + 1) * c].iter_mut().zip(&acc) {
            *o = F::from_f64_lossy(*a);
        }
    }
    Ok(Tensor::from_vec_unchecked(z.height(), z.width(), c, out))
}

/// The row-stochastic attention matrix itself, for diagnostics and tests.
/// Row `i` holds the softmax weights token `i` puts on every token.
pub fn pfsa_attention<F: Scalar>(z: &Tensor<F>, scaling: Option<F>) -> Result<Matrix<F>> {
    let inv_scale = 1.0 / resolve_scaling(scaling, z.channels())?;
    let (n, c) = (z.height() * z.width(), z.channels());
    let tokens = tokens_f64(z);
    let mut data = Vec::with_capacity(n * n);
    for i in 0..n {
        data.extend(
            attention_row(&tokens, n, c, i, inv_scale)
                .into_iter()
                .map(F::from_f64_lossy),
        );
    }
    Ok(Matrix::from_raw(n, n, data))
}

/// Blend the attention output into the latent: `gamma * PFSA(z) + (1 - gamma) * z`.
///
/// `gamma = 0` returns `z` unchanged (attention is not even computed) and
/// `gamma = 1` returns the raw attention output.
pub fn attentive_guide<F: Scalar>(
    z: &Tensor<F>,
    gamma: F,
    scaling: Option<F>,
) -> Result<Tensor<F>> {
    if gamma < F::zero() || gamma > F::one() {
        return Err(Error::invalid("gamma", "blend weight must lie in [0, 1]"));
    }
    if gamma == F::zero() {
        return Ok(z.clone());
    }
    let attended = pfsa(z, scaling)?;
    if gamma == F::one() {
        return Ok(attended);
    }
    let keep = F::one() - gamma;
    attended.zip_map(z, |p, v| gamma * p + keep * v)
}

/// Per-step guidance scales for stage one.
///
/// For `t <= T0 - k` the scale follows a cosine-power decay from the full
/// `base_scale` at `t = T0 - k` down to exactly zero at `t = 0`; the first
/// `k = round(delay_rate * T0)` steps of denoising (largest `t`) get zero.
#[derive(Clone, Debug)]
pub struct GuidanceSchedule<F> {
    base_scale: F,
    delay_rate: f64,
    decay_factor: f64,
    total_steps: usize,
    delay_steps: usize,
    per_step: Vec<F>,
}

impl<F: Scalar> GuidanceSchedule<F> {
    pub fn build(gamma: F, eta1: f64, beta: f64, t0: usize) -> Result<Self> {
        if t0 == 0 {
            return Err(Error::invalid("t0", "must be >= 1"));
        }
        if gamma < F::zero() || !gamma.is_finite() {
            return Err(Error::invalid("gamma", "must be >= 0"));
        }
        if !(0.0..1.0).contains(&eta1) {
            return Err(Error::invalid("eta1", "delay rate must lie in [0, 1)"));
        }
        if !(beta > 0.0) {
            return Err(Error::invalid("beta", "decay factor must be > 0"));
        }
        let delay_steps = (eta1 * t0 as f64).round() as usize;
        if delay_steps >= t0 {
            return Err(Error::invalid(
                "eta1",
                format!("delay of {delay_steps} steps leaves no guided window for t0 = {t0}"),
            ));
        }
        let guided = (t0 - delay_steps) as f64;
        let gamma_f64 = gamma.to_f64().unwrap();
        let per_step = (0..=t0)
            .map(|t| {
                if t > t0 - delay_steps {
                    F::zero()
                } else {
                    let phase = (t0 - delay_steps - t) as f64 / guided;
                    let window = ((phase * std::f64::consts::PI).cos() + 1.0) / 2.0;
                    F::from_f64_lossy(gamma_f64 * window.powf(beta))
                }
            })
            .collect();
        Ok(GuidanceSchedule {
            base_scale: gamma,
            delay_rate: eta1,
            decay_factor: beta,
            total_steps: t0,
            delay_steps,
            per_step,
        })
    }

    pub fn base_scale(&self) -> F {
        self.base_scale
    }

    pub fn delay_rate(&self) -> f64 {
        self.delay_rate
    }

    pub fn decay_factor(&self) -> f64 {
        self.decay_factor
    }

    pub fn total_steps(&self) -> usize {
        self.total_steps
    }

    /// `k`, the number of delayed steps.
    pub fn delay_steps(&self) -> usize {
        self.delay_steps
    }

    /// Guidance scale at step `t`, for `t` in `0..=total_steps`.
    pub fn gamma_at(&self, t: usize) -> F {
        self.per_step[t]
    }

    pub fn per_step(&self) -> &[F] {
        &self.per_step
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("t,gamma_t\n");
        for (t, g) in self.per_step.iter().enumerate() {
            out.push_str(&format!("{t},{g}\n"));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tensor_1x2x1(a: f32, b: f32) -> Tensor<f32> {
        Tensor::from_vec(1, 2, 1, vec![a, b]).unwrap()
    }

    /// Brute-force two-token check of the full attention output.
    fn brute_force_pfsa(values: &[f64], scale: f64) -> Vec<f64> {
        let n = values.len();
        let mut out = vec![0.0; n];
        for i in 0..n {
            let scores: Vec<f64> = (0..n).map(|j| values[i] * values[j] / scale).collect();
            let m = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let exps: Vec<f64> = scores.iter().map(|s| (s - m).exp()).collect();
            let sum: f64 = exps.iter().sum();
            out[i] = exps
                .iter()
                .zip(values)
                .map(|(e, v)| e / sum * v)
                .sum();
        }
        out
    }

    #[test]
    fn single_token_is_fixed_point() {
        let z = Tensor::from_vec(1, 1, 4, vec![0.3f32, -1.2, 5.0, 0.0]).unwrap();
        let out = pfsa(&z, None).unwrap();
        assert_eq!(z.data(), out.data());
    }

    #[test]
    fn constant_tokens_are_fixed_point() {
        let z = Tensor::from_fn(3, 3, 2, |_, _, ch| if ch == 0 { 0.8f32 } else { -0.4 }).unwrap();
        let out = pfsa(&z, None).unwrap();
        for (a, b) in z.data().iter().zip(out.data()) {
            assert!((a - b).abs() <= 1e-6);
        }
    }

    #[test]
    fn two_token_case_matches_hand_softmax() {
        let z = tensor_1x2x1(0.0, 1.0);
        let out = pfsa(&z, Some(1.0)).unwrap();
        // softmax([0,0]) = [.5,.5] -> 0.5; softmax([0,1]) -> e/(1+e)
        assert!((out.data()[0] - 0.5).abs() < 1e-6);
        assert!((out.data()[1] - 0.731_058_58).abs() < 1e-6);

        let brute = brute_force_pfsa(&[0.0, 1.0], 1.0);
        for (got, want) in out.data().iter().zip(&brute) {
            assert!((*got as f64 - want).abs() < 1e-6);
        }
    }

    #[test]
    fn attention_rows_sum_to_one() {
        let z = Tensor::from_fn(4, 4, 3, |r, c, ch| {
            ((r * 31 + c * 17 + ch * 7) % 13) as f32 / 6.5 - 1.0
        })
        .unwrap();
        let rows = pfsa_attention(&z, None).unwrap();
        for i in 0..rows.rows() {
            let sum: f64 = rows.row(i).iter().map(|&p| p as f64).sum();
            assert!((sum - 1.0).abs() < 1e-6, "row {i} sums to {sum}");
        }
    }

    #[test]
    fn output_stays_in_convex_hull() {
        let z = Tensor::from_fn(5, 3, 2, |r, c, ch| {
            (((r * 7 + c * 3 + ch) * 2654435761usize) % 1000) as f32 / 100.0 - 5.0
        })
        .unwrap();
        let out = pfsa(&z, None).unwrap();
        for ch in 0..z.channels() {
            let mut lo = f32::INFINITY;
            let mut hi = f32::NEG_INFINITY;
            for r in 0..z.height() {
                for c in 0..z.width() {
                    lo = lo.min(z.get(r, c, ch));
                    hi = hi.max(z.get(r, c, ch));
                }
            }
            for r in 0..z.height() {
                for c in 0..z.width() {
                    let v = out.get(r, c, ch);
                    assert!(v >= lo - 1e-6 && v <= hi + 1e-6);
                }
            }
        }
    }

    #[test]
    fn guide_endpoints_are_exact() {
        let z = tensor_1x2x1(0.0, 1.0);
        let same = attentive_guide(&z, 0.0, Some(1.0)).unwrap();
        assert_eq!(z.data(), same.data());
        let full = attentive_guide(&z, 1.0, Some(1.0)).unwrap();
        let attended = pfsa(&z, Some(1.0)).unwrap();
        assert_eq!(full.data(), attended.data());
    }

    #[test]
    fn guide_half_blend_matches_linear_oracle() {
        let z = tensor_1x2x1(0.0, 1.0);
        let half = attentive_guide(&z, 0.5, Some(1.0)).unwrap();
        // elementwise mean of z and its attention output
        assert!((half.data()[0] - 0.25).abs() < 1e-6);
        let e = std::f64::consts::E;
        let expect = 0.5 * (e / (1.0 + e)) + 0.5;
        assert!((half.data()[1] as f64 - expect).abs() < 1e-6);
    }

    #[test]
    fn guide_is_affine_in_gamma() {
        let z = Tensor::from_fn(2, 3, 2, |r, c, ch| (r + 2 * c + ch) as f32 * 0.31 - 0.8).unwrap();
        let at0 = attentive_guide(&z, 0.0, None).unwrap();
        let at1 = attentive_guide(&z, 1.0, None).unwrap();
        for gamma in [0.25f32, 0.5] {
            let got = attentive_guide(&z, gamma, None).unwrap();
            for i in 0..got.len() {
                let interp = gamma * at1.data()[i] + (1.0 - gamma) * at0.data()[i];
                assert!((got.data()[i] - interp).abs() <= 1e-6);
            }
        }
    }

    #[test]
    fn guide_rejects_out_of_range_gamma() {
        let z = tensor_1x2x1(0.0, 1.0);
        assert!(attentive_guide(&z, -0.1, None).is_err());
        assert!(attentive_guide(&z, 1.1, None).is_err());
    }

    #[test]
    fn schedule_paper_defaults() {
        let s = GuidanceSchedule::build(0.004f64, 0.06, 3.0, 50).unwrap();
        assert_eq!(s.delay_steps(), 3);
        assert_eq!(s.gamma_at(47), 0.004);
        assert_eq!(s.gamma_at(0), 0.0);
        for t in 48..=50 {
            assert_eq!(s.gamma_at(t), 0.0);
        }
        // non-increasing toward t = 0
        for t in 1..=47 {
            assert!(s.gamma_at(t) >= s.gamma_at(t - 1));
        }
        for t in 0..=50 {
            assert!(s.gamma_at(t) >= 0.0 && s.gamma_at(t) <= 0.004);
        }
    }

    #[test]
    fn schedule_interior_value_matches_scalar_oracle() {
        // 0.004 * ((cos(23*pi/47) + 1)/2)^3, evaluated independently in
        // high precision: 5.518159614690127e-4
        let s = GuidanceSchedule::build(0.004f64, 0.06, 3.0, 50).unwrap();
        assert!((s.gamma_at(24) - 5.518159614690127e-4).abs() < 1e-15);
    }

    #[test]
    fn zero_gamma_gives_all_zero_schedule() {
        let s = GuidanceSchedule::build(0.0f32, 0.06, 3.0, 50).unwrap();
        assert!(s.per_step().iter().all(|&g| g == 0.0));
    }

    #[test]
    fn schedule_rejects_empty_guided_window() {
        assert!(GuidanceSchedule::build(0.004f64, 0.99, 3.0, 50).is_err());
        assert!(GuidanceSchedule::build(0.004f64, 0.06, 3.0, 0).is_err());
    }

    #[test]
    fn csv_lists_every_step() {
        let s = GuidanceSchedule::build(0.0f32, 0.0, 3.0, 4).unwrap();
        let csv = s.to_csv();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "t,gamma_t");
        assert_eq!(lines.len(), 6);
        assert_eq!(lines[1], "0,0");
    }
}

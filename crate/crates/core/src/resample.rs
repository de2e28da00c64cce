//! Bicubic resampling by separable cubic convolution.
//!
//! Conventions, shared with the test oracles:
//! - Keys kernel with `a = -0.5` (Catmull-Rom),
//! - half-pixel-centered coordinates: `src = (dst + 0.5) * scale - 0.5`,
//! - clamp-to-edge sampling, which keeps the four tap weights a partition of
//!   unity at the borders (no renormalization needed).

use crate::error::{Error, Result};
use crate::tensor::{Shape2D, Tensor};
use crate::Scalar;

/// Kernel sharpness parameter of the cubic convolution.
pub const CUBIC_A: f64 = -0.5;

/// Keys cubic convolution kernel, support `|x| < 2`.
pub fn cubic_kernel(x: f64) -> f64 {
    let x = x.abs();
    if x <= 1.0 {
        ((CUBIC_A + 2.0) * x - (CUBIC_A + 3.0)) * x * x + 1.0
    } else if x < 2.0 {
        ((CUBIC_A * x - 5.0 * CUBIC_A) * x + 8.0 * CUBIC_A) * x - 4.0 * CUBIC_A
    } else {
        0.0
    }
}

struct Taps {
    /// Index of the first of four source samples (may be negative; samples
    /// are clamped into range at use).
    base: isize,
    weights: [f64; 4],
}

fn axis_taps(src_len: usize, dst_len: usize) -> Vec<Taps> {
    let scale = src_len as f64 / dst_len as f64;
    (0..dst_len)
        .map(|dst| {
            let src = (dst as f64 + 0.5) * scale - 0.5;
            let base = src.floor() as isize - 1;
            let mut weights = [0.0; 4];
            for (k, w) in weights.iter_mut().enumerate() {
                *w = cubic_kernel(src - (base + k as isize) as f64);
            }
            Taps { base, weights }
        })
        .collect()
}

#[inline]
fn clamp_index(i: isize, len: usize) -> usize {
    i.clamp(0, len as isize - 1) as usize
}

/// Resample every channel of `t` to `target` by separable cubic convolution.
pub fn bicubic_resample<F: Scalar>(t: &Tensor<F>, target: Shape2D) -> Result<Tensor<F>> {
    debug_assert!(t.data().iter().all(|v| v.is_finite()));
    let (src_h, src_w, ch) = (t.height(), t.width(), t.channels());
    let (dst_h, dst_w) = (target.height, target.width);

    let col_taps = axis_taps(src_w, dst_w);
    let row_taps = axis_taps(src_h, dst_h);

    // horizontal pass: (src_h x dst_w x ch)
    let mut mid = vec![F::zero(); src_h * dst_w * ch];
    for r in 0..src_h {
        for (c_dst, taps) in col_taps.iter().enumerate() {
            for k in 0..4 {
                let c_src = clamp_index(taps.base + k as isize, src_w);
                let w = F::from_f64_lossy(taps.weights[k]);
                for channel in 0..ch {
                    mid[(r * dst_w + c_dst) * ch + channel] +=
                        w * t.get(r, c_src, channel);
                }
            }
        }
    }

    // vertical pass: (dst_h x dst_w x ch)
    let mut out = vec![F::zero(); dst_h * dst_w * ch];
    for (r_dst, taps) in row_taps.iter().enumerate() {
        for k in 0..4 {
            let r_src = clamp_index(taps.base + k as isize, src_h);
            let w = F::from_f64_lossy(taps.weights[k]);
            let src_row = &mid[r_src * dst_w * ch..(r_src + 1) * dst_w * ch];
            let dst_row = &mut out[r_dst * dst_w * ch..(r_dst + 1) * dst_w * ch];
            for (d, s) in dst_row.iter_mut().zip(src_row) {
                *d += w * *s;
            }
        }
    }

    Ok(Tensor::from_vec_unchecked(dst_h, dst_w, ch, out))
}

/// Shrink both spatial dimensions by an integer factor (floor division),
/// using the same cubic convolution as [`bicubic_resample`].
pub fn downsample<F: Scalar>(t: &Tensor<F>, factor: usize) -> Result<Tensor<F>> {
    if factor == 0 {
        return Err(Error::invalid("factor", "must be >= 1"));
    }
    if t.height() < factor || t.width() < factor {
        return Err(Error::invalid(
            "factor",
            format!(
                "factor {factor} exceeds tensor dimensions {}x{}",
                t.height(),
                t.width()
            ),
        ));
    }
    bicubic_resample(
        t,
        Shape2D::new(t.height() / factor, t.width() / factor)?,
    )
}

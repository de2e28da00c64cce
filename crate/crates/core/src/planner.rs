//! Stage ladder for progressive refinement.
//!
//! Stage 0 runs at a shape that keeps the training pixel count but matches
//! the target aspect ratio. Later stages interpolate the pixel count linearly
//! up to the target. Every stage shape is snapped up to a multiple of the
//! autoencoder spatial factor so the latent grid stays integral; the final
//! stage is forced to the exact target.

use crate::error::{Error, Result};
use crate::tensor::Shape2D;

fn snap_up(v: usize, f: usize) -> usize {
    v.div_ceil(f) * f
}

fn ceil_sqrt(x: f64) -> usize {
    x.sqrt().ceil() as usize
}

fn round_half_up(x: f64) -> usize {
    (x + 0.5).floor() as usize
}

fn shape_for_area(area: f64, aspect_ratio: f64, f: usize) -> Result<Shape2D> {
    let h = snap_up(ceil_sqrt(area * aspect_ratio).max(1), f);
    let w = snap_up(ceil_sqrt(area / aspect_ratio).max(1), f);
    Shape2D::new(h, w)
}

/// Shape of stage 0: training pixel count, target aspect ratio, dimensions
/// snapped up to multiples of `f`.
pub fn initial_shape(train: Shape2D, target: Shape2D, f: usize) -> Result<Shape2D> {
    if f == 0 {
        return Err(Error::invalid("f", "spatial factor must be >= 1"));
    }
    if train.height % f != 0 || train.width % f != 0 {
        return Err(Error::invalid(
            "train",
            format!("{train} is not divisible by the spatial factor {f}"),
        ));
    }
    shape_for_area(train.area() as f64, target.aspect_ratio(), f)
}

/// The full progressive plan: per-stage pixel shapes and denoising step
/// counts.
#[derive(Clone, Debug, PartialEq)]
pub struct StagePlan {
    shapes: Vec<Shape2D>,
    denoise_steps: Vec<usize>,
    aspect_ratio: f64,
}

impl StagePlan {
    pub fn build(
        train: Shape2D,
        target: Shape2D,
        t0: usize,
        eta2: &[f64],
        f: usize,
    ) -> Result<Self> {
        if t0 == 0 {
            return Err(Error::invalid("t0", "must be >= 1"));
        }
        if target.height % f != 0 || target.width % f != 0 {
            return Err(Error::invalid(
                "target",
                format!("{target} is not divisible by the spatial factor {f}"),
            ));
        }
        let first = initial_shape(train, target, f)?;
        let aspect_ratio = target.aspect_ratio();

        if eta2.is_empty() && first != target {
            return Err(Error::invalid(
                "eta2",
                format!("must be non-empty: target {target} differs from the initial shape {first}"),
            ));
        }
        if target.area() < first.area() {
            return Err(Error::invalid(
                "target",
                format!("target area {target} is below the initial stage {first}"),
            ));
        }

        let n = eta2.len();
        let mut shapes = Vec::with_capacity(n + 1);
        shapes.push(first);
        let (a0, a1) = (first.area() as f64, target.area() as f64);
        for i in 1..n {
            let area = a0 + (a1 - a0) * i as f64 / n as f64;
            shapes.push(shape_for_area(area, aspect_ratio, f)?);
        }
        if n >= 1 {
            shapes.push(target);
        }

        let mut denoise_steps = Vec::with_capacity(n + 1);
        denoise_steps.push(t0);
        for (i, &eta) in eta2.iter().enumerate() {
            if !(eta > 0.0 && eta <= 1.0) {
                return Err(Error::invalid(
                    "eta2",
                    format!("entry {i} is {eta}; every entry must lie in (0, 1]"),
                ));
            }
            let steps = round_half_up(eta * t0 as f64);
            if steps == 0 {
                return Err(Error::invalid(
                    "eta2",
                    format!("entry {i} ({eta}) rounds to zero denoising steps for t0 = {t0}"),
                ));
            }
            denoise_steps.push(steps);
        }

        Ok(StagePlan { shapes, denoise_steps, aspect_ratio })
    }

    /// Total number of stages, including stage 0.
    pub fn num_stages(&self) -> usize {
        self.shapes.len()
    }

    pub fn shapes(&self) -> &[Shape2D] {
        &self.shapes
    }

    pub fn denoise_steps(&self) -> &[usize] {
        &self.denoise_steps
    }

    pub fn aspect_ratio(&self) -> f64 {
        self.aspect_ratio
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("stage,height,width,steps\n");
        for (i, (shape, steps)) in self.shapes.iter().zip(&self.denoise_steps).enumerate() {
            out.push_str(&format!("{i},{},{},{steps}\n", shape.height, shape.width));
        }
        out
    }
}

//! Two-stage high-resolution diffusion sampling at desk scale.
//!
//! The library decomposes generation into (i) attentive base-resolution
//! denoising, where a parameter-free self-attention blend nudges the latent
//! toward globally consistent structure, and (ii) progressive refinement,
//! where the decoded image is repeatedly upsampled in pixel space, re-encoded,
//! partially re-noised, and denoised for a short tail of steps.
//!
//! Everything runs on plain CPU tensors with analytic stand-in models (a
//! Bayes-optimal Gaussian denoiser and an orthogonal patch autoencoder), so
//! every schedule, planner, and operator is testable against closed forms.
//! The scalar type is generic over `f32`/`f64`; the pipeline and file formats
//! use `f32`.

use std::fmt;

pub mod attention;
pub mod error;
pub mod io;
pub mod metrics;
pub mod models;
pub mod pilot;
pub mod pipeline;
pub mod planner;
pub mod resample;
pub mod rng;
pub mod schedule;
pub mod tensor;

/// Floating-point scalar the tensor math is generic over.
pub trait Scalar:
    num_traits::Float
    + num_traits::FromPrimitive
    + num_traits::ToPrimitive
    + num_traits::NumAssign
    + fmt::Debug
    + fmt::Display
    + Send
    + Sync
    + 'static
{
    /// Lossy conversion from `f64`, used where coefficients are derived in
    /// double precision.
    fn from_f64_lossy(v: f64) -> Self {
        Self::from(v).expect("f64 converts to any supported scalar")
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}

pub type TensorF32 = tensor::Tensor<f32>;
pub type TensorF64 = tensor::Tensor<f64>;

pub use error::{Error, Result};
pub use tensor::{Matrix, Shape2D, Tensor};

pub use attention::{attentive_guide, default_scaling, pfsa, pfsa_attention, GuidanceSchedule};
pub use metrics::{psnr, ssim, ImageScore, MetricReport};
pub use models::{
    AnalyticGaussianDenoiser, Autoencoder, ConditioningTag, Denoiser, OrthogonalPatchAutoencoder,
};
pub use pilot::{run_pilot_study, synthetic_corpus};
pub use pipeline::{generate, GenerateOutput, PipelineConfig, StageTrace};
pub use planner::{initial_shape, StagePlan};
pub use rng::RngSeed;
pub use schedule::{cfg_combine, NoiseSchedule};

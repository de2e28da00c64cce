//! Two-stage generation: attentive base-resolution denoising, then
//! progressive upsample-encode-diffuse-denoise refinement.
//!
//! Stage 0 denoises a fresh Gaussian latent for `t0` steps; after each update
//! inside the guided window the latent is blended with its parameter-free
//! self-attention (skipped entirely while the per-step scale is zero, so a
//! zero-gamma run is bitwise identical to a guidance-free loop). Each later
//! stage decodes, bicubic-upsamples in pixel space, re-encodes, re-noises to
//! its step budget, and denoises without guidance.
//!
//! Noise streams are keyed `(seed, stage, step)`, so adding stages never
//! perturbs the randomness of earlier ones.

use crate::attention::{attentive_guide, GuidanceSchedule};
use crate::error::{Error, Result};
use crate::models::{Autoencoder, ConditioningTag, Denoiser};
use crate::planner::StagePlan;
use crate::resample::bicubic_resample;
use crate::rng::{standard_normal_tensor, stream, RngSeed, StreamDomain};
use crate::schedule::{cfg_combine, NoiseSchedule};
use crate::tensor::{Shape2D, Tensor, TensorStats};
use crate::Scalar;

/// Every user-facing knob of a generation run.
#[derive(Clone, Debug)]
pub struct PipelineConfig {
    /// Denoising steps of stage 0.
    pub t0: usize,
    /// Base attentive-guidance scale; 0 disables guidance.
    pub gamma: f64,
    /// Fraction of stage-0 steps to delay guidance by.
    pub eta1: f64,
    /// Cosine-decay exponent of the guidance schedule.
    pub beta_decay: f64,
    /// Per-refinement-stage step fractions of `t0`.
    pub eta2: Vec<f64>,
    /// Classifier-free guidance scale.
    pub cfg_scale: f64,
    /// Output image shape.
    pub target: Shape2D,
    /// Resolution the denoiser is nominally trained at.
    pub train: Shape2D,
    pub seed: RngSeed,
    /// Override for the attention scaling (default: sqrt of latent channels).
    pub pfsa_scaling: Option<f64>,
    pub beta_start: f64,
    pub beta_end: f64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            t0: 50,
            gamma: 0.004,
            eta1: 0.06,
            beta_decay: 3.0,
            eta2: vec![0.2],
            cfg_scale: 7.5,
            target: Shape2D { height: 512, width: 512 },
            train: Shape2D { height: 256, width: 256 },
            seed: RngSeed(0),
            pfsa_scaling: None,
            beta_start: 1e-4,
            beta_end: 0.02,
        }
    }
}

impl PipelineConfig {
    /// Scalar range checks. Errors name the offending key.
    pub fn validate(&self) -> Result<()> {
        if self.t0 == 0 {
            return Err(Error::invalid("t0", "must be >= 1"));
        }
        if !(self.gamma >= 0.0) || !self.gamma.is_finite() {
            return Err(Error::invalid("gamma", "must be a finite real >= 0"));
        }
        if !(0.0..1.0).contains(&self.eta1) {
            return Err(Error::invalid("eta1", "must lie in [0, 1)"));
        }
        if !(self.beta_decay > 0.0) {
            return Err(Error::invalid("beta", "decay factor must be > 0"));
        }
        for (i, &eta) in self.eta2.iter().enumerate() {
            if !(eta > 0.0 && eta <= 1.0) {
                return Err(Error::invalid(
                    "eta2",
                    format!("entry {i} is {eta}; every entry must lie in (0, 1]"),
                ));
            }
        }
        if !(self.cfg_scale >= 0.0) || !self.cfg_scale.is_finite() {
            return Err(Error::invalid("cfg_scale", "must be a finite real >= 0"));
        }
        if let Some(s) = self.pfsa_scaling {
            if !(s > 0.0) || !s.is_finite() {
                return Err(Error::invalid("pfsa_scaling", "must be > 0"));
            }
        }
        Ok(())
    }

    /// Full validation: scalar ranges plus constructibility of the noise
    /// schedule, guidance schedule, and stage plan for spatial factor `f`.
    pub fn validate_full(&self, f: usize) -> Result<()> {
        self.validate()?;
        NoiseSchedule::<f64>::linear_beta(self.t0, self.beta_start, self.beta_end)?;
        GuidanceSchedule::<f64>::build(self.gamma, self.eta1, self.beta_decay, self.t0)?;
        StagePlan::build(self.train, self.target, self.t0, &self.eta2, f)?;
        Ok(())
    }

    pub fn noise_schedule<F: Scalar>(&self) -> Result<NoiseSchedule<F>> {
        NoiseSchedule::linear_beta(self.t0, self.beta_start, self.beta_end)
    }

    pub fn guidance_schedule<F: Scalar>(&self) -> Result<GuidanceSchedule<F>> {
        GuidanceSchedule::build(
            F::from_f64_lossy(self.gamma),
            self.eta1,
            self.beta_decay,
            self.t0,
        )
    }

    pub fn stage_plan(&self, f: usize) -> Result<StagePlan> {
        StagePlan::build(self.train, self.target, self.t0, &self.eta2, f)
    }
}

/// One recorded denoising step.
#[derive(Clone, Debug)]
pub struct StepRecord {
    pub stage: usize,
    pub latent_height: usize,
    pub latent_width: usize,
    /// Scheduler step index the latent was updated to (counts down).
    pub t: usize,
    /// Attentive-guidance scale applied after this step (0 when skipped).
    pub gamma: f64,
    pub mean: f64,
    pub var: f64,
    pub min: f64,
    pub max: f64,
}

/// Per-step observability for a whole run.
#[derive(Clone, Debug, Default)]
pub struct StageTrace {
    records: Vec<StepRecord>,
}

impl StageTrace {
    fn record(
        &mut self,
        stage: usize,
        latent: Shape2D,
        t: usize,
        gamma: f64,
        stats: TensorStats,
    ) -> Result<()> {
        if ![stats.mean, stats.var, stats.min, stats.max]
            .iter()
            .all(|v| v.is_finite())
        {
            return Err(Error::NonFinite { context: "stage trace statistics" });
        }
        self.records.push(StepRecord {
            stage,
            latent_height: latent.height,
            latent_width: latent.width,
            t,
            gamma,
            mean: stats.mean,
            var: stats.var,
            min: stats.min,
            max: stats.max,
        });
        Ok(())
    }

    pub fn records(&self) -> &[StepRecord] {
        &self.records
    }

    /// Steps recorded per stage, in stage order.
    pub fn steps_per_stage(&self) -> Vec<usize> {
        let mut counts: Vec<usize> = Vec::new();
        for r in &self.records {
            if r.stage >= counts.len() {
                counts.resize(r.stage + 1, 0);
            }
            counts[r.stage] += 1;
        }
        counts
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("stage,height,width,t,gamma,mean,var,min,max\n");
        for r in &self.records {
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{},{}\n",
                r.stage, r.latent_height, r.latent_width, r.t, r.gamma, r.mean, r.var, r.min, r.max
            ));
        }
        out
    }
}

/// A generated image plus its step-by-step trace.
pub struct GenerateOutput<F> {
    pub image: Tensor<F>,
    pub trace: StageTrace,
}

fn predict_guided<F: Scalar>(
    denoiser: &dyn Denoiser<F>,
    z: &Tensor<F>,
    t: usize,
    cfg_scale: F,
) -> Result<Tensor<F>> {
    // both branches run even for toy models, to keep the real call pattern
    let eps_uncond = denoiser.predict_noise(z, t, ConditioningTag::Unconditional)?;
    let eps_cond = denoiser.predict_noise(z, t, ConditioningTag::Class(0))?;
    cfg_combine(&eps_uncond, &eps_cond, cfg_scale)
}

/// Stage 0: denoise a fresh Gaussian latent for `t0` steps, blending in
/// self-attention inside the guided window.
pub fn run_stage_one<F: Scalar>(
    cfg: &PipelineConfig,
    denoiser: &dyn Denoiser<F>,
    schedule: &NoiseSchedule<F>,
    guidance: &GuidanceSchedule<F>,
    latent: Shape2D,
    latent_channels: usize,
    trace: &mut StageTrace,
) -> Result<Tensor<F>> {
    let t0 = cfg.t0;
    let k = guidance.delay_steps();
    let cfg_scale = F::from_f64_lossy(cfg.cfg_scale);
    let scaling = cfg.pfsa_scaling.map(F::from_f64_lossy);

    let mut rng = stream(cfg.seed, StreamDomain::Pipeline, 0, t0 as u32);
    let mut z = standard_normal_tensor(latent.height, latent.width, latent_channels, &mut rng);

    for t in (0..t0).rev() {
        let eps = predict_guided(denoiser, &z, t + 1, cfg_scale)?;
        z = schedule.denoise_step(&z, &eps, t + 1)?;
        let mut applied = F::zero();
        if t + k + 1 <= t0 {
            let gamma = guidance.gamma_at(t);
            if gamma != F::zero() {
                z = attentive_guide(&z, gamma, scaling)?;
                applied = gamma;
            }
        }
        trace.record(0, latent, t, applied.to_f64().unwrap(), z.stats())?;
    }
    Ok(z)
}

/// Refinement stage `stage >= 1`: decode, upsample in pixel space, re-encode,
/// re-noise to the stage's step budget, and denoise it back down.
#[allow(clippy::too_many_arguments)]
pub fn run_refinement_stage<F: Scalar>(
    z_prev: &Tensor<F>,
    stage: usize,
    plan: &StagePlan,
    cfg: &PipelineConfig,
    denoiser: &dyn Denoiser<F>,
    autoencoder: &dyn Autoencoder<F>,
    schedule: &NoiseSchedule<F>,
    trace: &mut StageTrace,
) -> Result<Tensor<F>> {
    if stage == 0 || stage >= plan.num_stages() {
        return Err(Error::invalid(
            "stage",
            format!("refinement stage {stage} outside 1..{}", plan.num_stages()),
        ));
    }
    let steps = plan.denoise_steps()[stage];
    if steps == 0 {
        return Err(Error::invalid("eta2", "stage has zero denoising steps"));
    }
    let shape = plan.shapes()[stage];
    let cfg_scale = F::from_f64_lossy(cfg.cfg_scale);

    let image = autoencoder.decode(z_prev)?;
    let upsampled = bicubic_resample(&image, shape)?;
    let z0 = autoencoder.encode(&upsampled)?;
    let latent = z0.shape();

    let mut rng = stream(cfg.seed, StreamDomain::Pipeline, stage as u32, steps as u32);
    let mut z = schedule.diffuse_to(&z0, steps, &mut rng)?;

    for t in (0..steps).rev() {
        let eps = predict_guided(denoiser, &z, t + 1, cfg_scale)?;
        z = schedule.denoise_step(&z, &eps, t + 1)?;
        trace.record(stage, latent, t, 0.0, z.stats())?;
    }
    Ok(z)
}

/// Run the full pipeline and decode the final latent to a pixel image of
/// exactly the target shape.
pub fn generate<F: Scalar>(
    cfg: &PipelineConfig,
    denoiser: &dyn Denoiser<F>,
    autoencoder: &dyn Autoencoder<F>,
) -> Result<GenerateOutput<F>> {
    cfg.validate()?;
    let f = autoencoder.spatial_factor();
    let plan = cfg.stage_plan(f)?;
    let schedule = cfg.noise_schedule::<F>()?;
    let guidance = cfg.guidance_schedule::<F>()?;

    let stage0 = plan.shapes()[0];
    let latent0 = Shape2D::new(stage0.height / f, stage0.width / f)?;

    let mut trace = StageTrace::default();
    let mut z = run_stage_one(
        cfg,
        denoiser,
        &schedule,
        &guidance,
        latent0,
        autoencoder.latent_channels(),
        &mut trace,
    )?;
    for stage in 1..plan.num_stages() {
        z = run_refinement_stage(
            &z, stage, &plan, cfg, denoiser, autoencoder, &schedule, &mut trace,
        )?;
    }
    let image = autoencoder.decode(&z)?;
    debug_assert_eq!(image.shape(), cfg.target);
    Ok(GenerateOutput { image, trace })
}

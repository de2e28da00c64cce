//! Flat `key = value` run configuration.
//!
//! One key per line, `#` starts a comment, unknown keys are rejected, and
//! missing keys fall back to the documented defaults. Every key maps 1:1 to
//! a pipeline or model knob, which keeps configs diffable in experiment logs.

use std::path::{Path, PathBuf};

use hires_diffuse::pipeline::PipelineConfig;
use hires_diffuse::rng::RngSeed;
use hires_diffuse::tensor::Shape2D;

pub const SEED_ENV_VAR: &str = "HIRES_DIFFUSE_SEED";

/// A config-phase failure; callers exit with status 2.
#[derive(Debug)]
pub struct ConfigError(pub String);

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        self.0.fmt(f)
    }
}

type Result<T> = std::result::Result<T, ConfigError>;

fn bad(key: &str, reason: impl std::fmt::Display) -> ConfigError {
    ConfigError(format!("`{key}`: {reason}"))
}

/// All run settings: pipeline knobs plus toy-model geometry and paths.
#[derive(Clone, Debug)]
pub struct AppConfig {
    pub t0: usize,
    pub gamma: f64,
    pub eta1: f64,
    /// Guidance decay factor (the `--beta` flag).
    pub beta: f64,
    pub eta2: Vec<f64>,
    pub cfg_scale: f64,
    pub target: Shape2D,
    pub train: Shape2D,
    /// Seed from the config file; flags and the environment can override.
    pub seed: Option<u64>,
    pub pfsa_scaling: Option<f64>,
    pub beta_start: f64,
    pub beta_end: f64,
    /// Autoencoder spatial factor.
    pub f: usize,
    pub latent_channels: usize,
    pub prior_mean: f64,
    pub prior_sigma2: f64,
    pub out_dir: Option<PathBuf>,
    pub corpus_dir: Option<PathBuf>,
}

impl Default for AppConfig {
    fn default() -> Self {
        let p = PipelineConfig::default();
        AppConfig {
            t0: p.t0,
            gamma: p.gamma,
            eta1: p.eta1,
            beta: p.beta_decay,
            eta2: p.eta2.clone(),
            cfg_scale: p.cfg_scale,
            target: p.target,
            train: p.train,
            seed: None,
            pfsa_scaling: None,
            beta_start: p.beta_start,
            beta_end: p.beta_end,
            f: 8,
            latent_channels: 4,
            prior_mean: 0.0,
            prior_sigma2: 1.0,
            out_dir: None,
            corpus_dir: None,
        }
    }
}

pub fn parse_shape(key: &str, value: &str) -> Result<Shape2D> {
    let (h, w) = value
        .split_once(['x', 'X'])
        .ok_or_else(|| bad(key, format!("expected HxW, got `{value}`")))?;
    let h = h.trim().parse::<usize>().map_err(|e| bad(key, e))?;
    let w = w.trim().parse::<usize>().map_err(|e| bad(key, e))?;
    Shape2D::new(h, w).map_err(|e| bad(key, e))
}

pub fn parse_eta2(key: &str, value: &str) -> Result<Vec<f64>> {
    if value.trim().is_empty() {
        return Ok(Vec::new());
    }
    value
        .split(',')
        .map(|part| part.trim().parse::<f64>().map_err(|e| bad(key, format!("`{part}`: {e}"))))
        .collect()
}

impl AppConfig {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        match path {
            None => Ok(AppConfig::default()),
            Some(path) => {
                let text = std::fs::read_to_string(path)
                    .map_err(|e| ConfigError(format!("cannot read {}: {e}", path.display())))?;
                Self::parse(&text)
            }
        }
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = AppConfig::default();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| ConfigError(format!("line {}: expected `key = value`", lineno + 1)))?;
            let (key, value) = (key.trim(), value.trim());
            cfg.set(key, value)?;
        }
        Ok(cfg)
    }

    fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let parse_f64 = |k: &str, v: &str| v.parse::<f64>().map_err(|e| bad(k, e));
        match key {
            "t0" => self.t0 = value.parse().map_err(|e| bad(key, e))?,
            "gamma" => self.gamma = parse_f64(key, value)?,
            "eta1" => self.eta1 = parse_f64(key, value)?,
            "beta" => self.beta = parse_f64(key, value)?,
            "eta2" => self.eta2 = parse_eta2(key, value)?,
            "cfg_scale" => self.cfg_scale = parse_f64(key, value)?,
            "target" => self.target = parse_shape(key, value)?,
            "train" => self.train = parse_shape(key, value)?,
            "seed" => self.seed = Some(value.parse().map_err(|e| bad(key, e))?),
            "pfsa_scaling" => self.pfsa_scaling = Some(parse_f64(key, value)?),
            "beta_start" => self.beta_start = parse_f64(key, value)?,
            "beta_end" => self.beta_end = parse_f64(key, value)?,
            "f" => self.f = value.parse().map_err(|e| bad(key, e))?,
            "latent_channels" => self.latent_channels = value.parse().map_err(|e| bad(key, e))?,
            "prior_mean" => self.prior_mean = parse_f64(key, value)?,
            "prior_sigma2" => self.prior_sigma2 = parse_f64(key, value)?,
            "out_dir" => self.out_dir = Some(PathBuf::from(value)),
            "corpus_dir" => self.corpus_dir = Some(PathBuf::from(value)),
            other => return Err(ConfigError(format!("unknown key `{other}`"))),
        }
        Ok(())
    }

    /// Seed precedence: `--seed` flag, then config file, then the
    /// environment variable, then 0.
    pub fn resolve_seed(&self, flag: Option<u64>) -> Result<u64> {
        if let Some(s) = flag.or(self.seed) {
            return Ok(s);
        }
        match std::env::var(SEED_ENV_VAR) {
            Ok(v) => v
                .parse::<u64>()
                .map_err(|e| ConfigError(format!("{SEED_ENV_VAR}: {e}"))),
            Err(_) => Ok(0),
        }
    }

    pub fn pipeline(&self, seed: u64) -> PipelineConfig {
        PipelineConfig {
            t0: self.t0,
            gamma: self.gamma,
            eta1: self.eta1,
            beta_decay: self.beta,
            eta2: self.eta2.clone(),
            cfg_scale: self.cfg_scale,
            target: self.target,
            train: self.train,
            seed: RngSeed(seed),
            pfsa_scaling: self.pfsa_scaling,
            beta_start: self.beta_start,
            beta_end: self.beta_end,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_the_documented_ones() {
        let c = AppConfig::default();
        assert_eq!(c.t0, 50);
        assert_eq!(c.gamma, 0.004);
        assert_eq!(c.eta1, 0.06);
        assert_eq!(c.beta, 3.0);
        assert_eq!(c.cfg_scale, 7.5);
        assert_eq!(c.eta2, vec![0.2]);
        assert_eq!(c.f, 8);
        assert_eq!(c.latent_channels, 4);
    }

    #[test]
    fn parses_keys_comments_and_blank_lines() {
        let cfg = AppConfig::parse(
            "# a comment\n\
             t0 = 20\n\
             eta2 = 0.1, 0.2  # inline comment\n\
             target = 1024x2048\n\
             \n\
             seed = 7\n",
        )
        .unwrap();
        assert_eq!(cfg.t0, 20);
        assert_eq!(cfg.eta2, vec![0.1, 0.2]);
        assert_eq!(cfg.target, Shape2D::new(1024, 2048).unwrap());
        assert_eq!(cfg.seed, Some(7));
    }

    #[test]
    fn empty_eta2_means_no_refinement_stages() {
        let cfg = AppConfig::parse("eta2 =\n").unwrap();
        assert!(cfg.eta2.is_empty());
    }

    #[test]
    fn rejects_unknown_keys_and_bad_values() {
        assert!(AppConfig::parse("tzero = 5\n").unwrap_err().0.contains("tzero"));
        assert!(AppConfig::parse("t0 = five\n").unwrap_err().0.contains("t0"));
        assert!(AppConfig::parse("target = 1024\n").unwrap_err().0.contains("target"));
        assert!(AppConfig::parse("just a line\n").is_err());
    }

    #[test]
    fn seed_precedence() {
        let mut cfg = AppConfig::default();
        assert_eq!(cfg.resolve_seed(Some(3)).unwrap(), 3);
        cfg.seed = Some(9);
        assert_eq!(cfg.resolve_seed(None).unwrap(), 9);
        assert_eq!(cfg.resolve_seed(Some(3)).unwrap(), 3);
    }
}

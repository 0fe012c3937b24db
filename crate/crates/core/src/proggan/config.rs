use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use super::schedule::ResolutionSchedule;
use crate::error::{Error, Result};
use crate::trainer::fingerprint_of;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PganConfig {
    pub latent_dim: usize,
    /// Feature maps at resolution `r` are `min(2·fmap_base/r, fmap_max)`.
    pub fmap_base: usize,
    pub fmap_max: usize,
    pub schedule: ResolutionSchedule,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub gp_lambda: f64,
    /// Weight of the `mean(D(real)²)` term that keeps critic scores near 0.
    pub drift: f64,
    pub seed: u64,
    pub checkpoint_dir: PathBuf,
    /// Write a checkpoint every this many epochs (0 = only the final one).
    pub checkpoint_every: u64,
}

impl Default for PganConfig {
    fn default() -> Self {
        Self {
            latent_dim: 512,
            fmap_base: 8192,
            fmap_max: 512,
            schedule: ResolutionSchedule::default(),
            batch_size: 16,
            learning_rate: 1e-3,
            adam_beta1: 0.0,
            adam_beta2: 0.99,
            gp_lambda: 10.0,
            drift: 1e-3,
            seed: 0,
            checkpoint_dir: PathBuf::from("checkpoints/pgan"),
            checkpoint_every: 30,
        }
    }
}

#[derive(Serialize)]
struct FingerprintView<'a> {
    architecture: &'static str,
    latent_dim: usize,
    fmap_base: usize,
    fmap_max: usize,
    schedule: &'a ResolutionSchedule,
    batch_size: usize,
    learning_rate: f64,
    adam_beta1: f64,
    adam_beta2: f64,
    gp_lambda: f64,
    drift: f64,
    seed: u64,
}

impl PganConfig {
    pub fn channels(&self, res: u32) -> usize {
        (2 * self.fmap_base / res as usize).clamp(1, self.fmap_max)
    }

    pub fn validate(&self) -> Result<()> {
        self.schedule.validate()?;
        if self.latent_dim == 0 || self.fmap_base == 0 || self.fmap_max == 0 {
            return Err(Error::invalid(
                "latent_dim, fmap_base and fmap_max must be positive",
            ));
        }
        if self.batch_size == 0 {
            return Err(Error::invalid("batch_size must be positive"));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(Error::invalid("learning_rate must be positive"));
        }
        for (name, b) in [
            ("adam_beta1", self.adam_beta1),
            ("adam_beta2", self.adam_beta2),
        ] {
            if !(0.0..1.0).contains(&b) {
                return Err(Error::invalid(format!("{name} must lie in [0, 1)")));
            }
        }
        for (name, v) in [("gp_lambda", self.gp_lambda), ("drift", self.drift)] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::invalid(format!(
                    "{name} must be finite and non-negative"
                )));
            }
        }
        Ok(())
    }

    pub fn fingerprint(&self) -> Result<[u8; 32]> {
        fingerprint_of(&FingerprintView {
            architecture: "pgan-conditional-v1",
            latent_dim: self.latent_dim,
            fmap_base: self.fmap_base,
            fmap_max: self.fmap_max,
            schedule: &self.schedule,
            batch_size: self.batch_size,
            learning_rate: self.learning_rate,
            adam_beta1: self.adam_beta1,
            adam_beta2: self.adam_beta2,
            gp_lambda: self.gp_lambda,
            drift: self.drift,
            seed: self.seed,
        })
    }
}

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use super::checkpoint::fingerprint_of;
use crate::error::{Error, Result};
use crate::mapkit::labels::NUM_LABELS;
use crate::objectives::LossWeights;
use crate::synthnet::{DiscriminatorConfig, GeneratorConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainingConfig {
    /// Total epochs, including the decay phase.
    pub epochs: u64,
    /// Trailing epochs over which the learning rate falls linearly to zero.
    pub decay_epochs: u64,
    pub learning_rate: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub batch_size: usize,
    pub seed: u64,
    pub width: u32,
    pub height: u32,
    /// Append the instance boundary plane to the label planes.
    pub use_boundary: bool,
    pub checkpoint_dir: PathBuf,
    /// Write a checkpoint every this many epochs (0 = only the final one).
    pub checkpoint_every: u64,
    pub generator: GeneratorConfig,
    pub discriminator: DiscriminatorConfig,
    pub loss: LossWeights,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        Self {
            epochs: 200,
            decay_epochs: 100,
            learning_rate: 2e-4,
            adam_beta1: 0.5,
            adam_beta2: 0.999,
            batch_size: 1,
            seed: 0,
            width: 1024,
            height: 512,
            use_boundary: true,
            checkpoint_dir: PathBuf::from("checkpoints/pix2pixhd"),
            checkpoint_every: 10,
            generator: GeneratorConfig::default(),
            discriminator: DiscriminatorConfig::default(),
            loss: LossWeights::default(),
        }
    }
}

/// Fields that identify a model; run plumbing (where and how often to save)
/// is left out so it can change between resumed runs.
#[derive(Serialize)]
struct FingerprintView<'a> {
    epochs: u64,
    decay_epochs: u64,
    learning_rate: f64,
    adam_beta1: f64,
    adam_beta2: f64,
    batch_size: usize,
    seed: u64,
    width: u32,
    height: u32,
    use_boundary: bool,
    generator: &'a GeneratorConfig,
    discriminator: &'a DiscriminatorConfig,
    loss: &'a LossWeights,
}

impl TrainingConfig {
    pub fn input_channels(&self) -> usize {
        NUM_LABELS + self.use_boundary as usize
    }

    /// Copy with the network channel counts derived from `use_boundary`.
    pub fn resolved(&self) -> Self {
        let mut cfg = self.clone();
        let in_ch = self.input_channels();
        cfg.generator.input_channels = in_ch;
        cfg.discriminator.input_channels = in_ch + cfg.generator.output_channels;
        cfg
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("epochs", self.epochs > 0),
            ("batch_size", self.batch_size > 0),
            ("width", self.width > 0),
            ("height", self.height > 0),
            (
                "learning_rate",
                self.learning_rate.is_finite() && self.learning_rate > 0.0,
            ),
        ];
        for (name, ok) in positive {
            if !ok {
                return Err(Error::invalid(format!("{name} must be positive")));
            }
        }
        for (name, b) in [
            ("adam_beta1", self.adam_beta1),
            ("adam_beta2", self.adam_beta2),
        ] {
            if !(0.0..1.0).contains(&b) {
                return Err(Error::invalid(format!("{name} must lie in [0, 1)")));
            }
        }
        if self.decay_epochs > self.epochs {
            return Err(Error::invalid("decay_epochs cannot exceed epochs"));
        }
        let r = self.resolved();
        r.generator.validate()?;
        r.discriminator.validate()?;
        r.loss.validate()?;
        let m = r.generator.spatial_multiple() as u32;
        if self.width % m != 0 || self.height % m != 0 {
            return Err(Error::invalid(format!(
                "resolution {}x{} is not divisible by {m}",
                self.width, self.height
            )));
        }
        let dm = 1u32 << (r.discriminator.num_scales - 1).min(31);
        if self.width % dm != 0 || self.height % dm != 0 {
            return Err(Error::invalid(format!(
                "resolution {}x{} is not divisible by {dm} for the discriminator pyramid",
                self.width, self.height
            )));
        }
        Ok(())
    }

    /// Learning rate for 0-based epoch `epoch`: constant through epoch
    /// `epochs - decay_epochs`, then falling by `lr / decay_epochs` per epoch.
    pub fn learning_rate_at(&self, epoch: u64) -> f64 {
        let constant = self.epochs - self.decay_epochs;
        if epoch <= constant || self.decay_epochs == 0 {
            self.learning_rate
        } else {
            let steps = (epoch - constant) as f64;
            (self.learning_rate - steps * self.learning_rate / self.decay_epochs as f64).max(0.0)
        }
    }

    pub fn fingerprint(&self) -> Result<[u8; 32]> {
        let r = self.resolved();
        fingerprint_of(&FingerprintView {
            epochs: r.epochs,
            decay_epochs: r.decay_epochs,
            learning_rate: r.learning_rate,
            adam_beta1: r.adam_beta1,
            adam_beta2: r.adam_beta2,
            batch_size: r.batch_size,
            seed: r.seed,
            width: r.width,
            height: r.height,
            use_boundary: r.use_boundary,
            generator: &r.generator,
            discriminator: &r.discriminator,
            loss: &r.loss,
        })
    }
}

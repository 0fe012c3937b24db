//! Alternating least-squares GAN training of the label-map generator against
//! the multi-scale discriminator, with resumable checkpoints and inference.

mod adam;
mod checkpoint;
mod config;

use std::fs::OpenOptions;
use std::io::Write;
use std::path::{Path, PathBuf};

use candle_core::Tensor;
use image::RgbImage;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

pub use adam::{Adam, AdamParams};
pub use checkpoint::{fingerprint_hex, fingerprint_of, Checkpoint, NamedArray};
pub use config::TrainingConfig;

use crate::error::{Error, Result};
use crate::fsutil::write_png;
use crate::imaging::{image_to_tensor, one_hot_to_tensor, stack, tensor_to_image};
use crate::mapkit::labels::{BORDER, NUM_LABELS};
use crate::mapkit::{
    boundary_map, fresh_instance_id, letterbox, one_hot, InstanceMap, SemanticLabelMap,
};
use crate::objectives::{feature_matching, lsgan_d_terms, lsgan_g_loss, LossReport};
use crate::synthnet::nn::scalar;
use crate::synthnet::{Generator, MultiScaleDiscriminator};

pub const CHECKPOINT_KIND: &str = "pix2pixhd";
const ADAM_EPS: f64 = 1e-8;

/// Generator input planes for one map: label indicators, plus the instance
/// boundary plane when `use_boundary` is set.
pub fn encode_maps(
    semantic: &SemanticLabelMap,
    instance: Option<&InstanceMap>,
    use_boundary: bool,
) -> Result<Tensor> {
    let boundary = if use_boundary {
        let inst = instance.ok_or_else(|| {
            Error::invalid("model was trained with boundary maps but no instance map was given")
        })?;
        Some(boundary_map(inst))
    } else {
        None
    };
    one_hot_to_tensor(&one_hot(semantic, NUM_LABELS, boundary.as_ref())?)
}

/// One aligned (map, photograph) training example.
#[derive(Debug, Clone)]
pub struct TrainingPair {
    pub id: String,
    /// `C×H×W` generator input.
    pub input: Tensor,
    /// `3×H×W` target in `[-1,1]`.
    pub target: Tensor,
}

impl TrainingPair {
    pub fn from_maps(
        id: impl Into<String>,
        semantic: &SemanticLabelMap,
        instance: Option<&InstanceMap>,
        image: &RgbImage,
        use_boundary: bool,
    ) -> Result<Self> {
        if image.dimensions() != (semantic.width(), semantic.height()) {
            return Err(Error::invalid(format!(
                "image is {:?} but label map is {}x{}",
                image.dimensions(),
                semantic.width(),
                semantic.height()
            )));
        }
        Ok(Self {
            id: id.into(),
            input: encode_maps(semantic, instance, use_boundary)?,
            target: image_to_tensor(image)?,
        })
    }
}

/// Random access to training pairs, so large corpora can be decoded lazily
/// instead of held in memory.
pub trait PairSource {
    fn len(&self) -> usize;
    fn pair(&self, index: usize) -> Result<TrainingPair>;

    fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

impl PairSource for [TrainingPair] {
    fn len(&self) -> usize {
        <[TrainingPair]>::len(self)
    }

    fn pair(&self, index: usize) -> Result<TrainingPair> {
        self.get(index)
            .cloned()
            .ok_or_else(|| Error::invalid(format!("pair index {index} out of range")))
    }
}

impl PairSource for Vec<TrainingPair> {
    fn len(&self) -> usize {
        self.as_slice().len()
    }

    fn pair(&self, index: usize) -> Result<TrainingPair> {
        self.as_slice().pair(index)
    }
}

/// Per-step metrics record, written as one JSON line.
#[derive(Debug, Clone, Serialize, serde::Deserialize, PartialEq)]
pub struct StepRecord {
    pub step: u64,
    pub epoch: u64,
    pub g_gan: f64,
    pub g_fm: f64,
    pub d_real: f64,
    pub d_fake: f64,
}

/// Generator, discriminator and both optimizers.
pub struct Pix2PixHd {
    cfg: TrainingConfig,
    fingerprint: [u8; 32],
    generator: Generator,
    discriminator: MultiScaleDiscriminator,
    opt_g: Adam,
    opt_d: Adam,
    step: u64,
    epoch: u64,
}

impl Pix2PixHd {
    pub fn new(cfg: &TrainingConfig) -> Result<Self> {
        cfg.validate()?;
        let cfg = cfg.resolved();
        let generator = Generator::new(&cfg.generator, cfg.seed)?;
        let discriminator =
            MultiScaleDiscriminator::new(&cfg.discriminator, cfg.seed.wrapping_add(1))?;
        let hp = AdamParams {
            lr: cfg.learning_rate,
            beta1: cfg.adam_beta1,
            beta2: cfg.adam_beta2,
            eps: ADAM_EPS,
        };
        let opt_g = Adam::new("opt_g", generator.params(), hp)?;
        let opt_d = Adam::new("opt_d", discriminator.params(), hp)?;
        Ok(Self {
            fingerprint: cfg.fingerprint()?,
            cfg,
            generator,
            discriminator,
            opt_g,
            opt_d,
            step: 0,
            epoch: 0,
        })
    }

    pub fn config(&self) -> &TrainingConfig {
        &self.cfg
    }

    pub fn generator(&self) -> &Generator {
        &self.generator
    }

    pub fn discriminator(&self) -> &MultiScaleDiscriminator {
        &self.discriminator
    }

    /// Completed epochs.
    pub fn epoch(&self) -> u64 {
        self.epoch
    }

    /// Completed optimization steps.
    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub fn set_learning_rate(&mut self, lr: f64) {
        self.opt_g.set_lr(lr);
        self.opt_d.set_lr(lr);
    }

    fn check_batch(&self, input: &Tensor, target: &Tensor) -> Result<()> {
        let (n, c, h, w) = input.dims4().map_err(|_| {
            Error::invalid(format!("input must be N×C×H×W, got {:?}", input.dims()))
        })?;
        let want = (n, self.cfg.generator.output_channels, h, w);
        if target.dims4().ok() != Some(want) {
            return Err(Error::invalid(format!(
                "target {:?} does not match input {:?}",
                target.dims(),
                input.dims()
            )));
        }
        if c != self.cfg.generator.input_channels {
            return Err(Error::invalid(format!(
                "input has {c} channels, model expects {}",
                self.cfg.generator.input_channels
            )));
        }
        Ok(())
    }

    fn finite(&self, v: f64, what: &'static str) -> Result<f64> {
        if v.is_finite() {
            Ok(v)
        } else {
            Err(Error::Diverged {
                step: self.step + 1,
                what,
            })
        }
    }

    /// One discriminator update followed by one generator update on a batch.
    pub fn train_step(&mut self, input: &Tensor, target: &Tensor) -> Result<LossReport> {
        self.check_batch(input, target)?;
        let fake = self.generator.forward(input)?;

        let real_pyr = self.discriminator.forward(input, target)?;
        let fake_pyr = self.discriminator.forward(input, &fake.detach())?;
        let (d_real, d_fake) = lsgan_d_terms(&real_pyr.logits(), &fake_pyr.logits())?;
        let d_real_v = self.finite(scalar(&d_real)?, "d_real")?;
        let d_fake_v = self.finite(scalar(&d_fake)?, "d_fake")?;
        let grads = (d_real + d_fake)?.backward()?;
        self.opt_d.step(&grads)?;

        let real_pyr = self.discriminator.forward(input, target)?.detach();
        let fake_pyr = self.discriminator.forward(input, &fake)?;
        let g_gan = lsgan_g_loss(&fake_pyr.logits())?;
        let g_fm = feature_matching(&real_pyr, &fake_pyr)?;
        let g_gan_v = self.finite(scalar(&g_gan)?, "g_gan")?;
        let g_fm_v = self.finite(scalar(&g_fm)?, "g_fm")?;
        let g_total = (g_gan + (g_fm * self.cfg.loss.lambda_fm)?)?;
        let grads = g_total.backward()?;
        self.opt_g.step(&grads)?;

        self.step += 1;
        Ok(LossReport {
            g_gan: g_gan_v,
            g_fm: g_fm_v,
            d_real: d_real_v,
            d_fake: d_fake_v,
        })
    }

    /// Generator output for a `N×C×H×W` batch; no parameter is touched.
    pub fn generate(&self, input: &Tensor) -> Result<Tensor> {
        Ok(self.generator.forward(input)?.detach())
    }

    pub fn to_checkpoint(&self) -> Result<Checkpoint> {
        let mut ckpt = Checkpoint {
            kind: CHECKPOINT_KIND.into(),
            fingerprint: self.fingerprint,
            epoch: self.epoch,
            config_json: serde_json::to_string(&self.cfg)?,
            counters: vec![("step".into(), self.step)],
            tensors: Vec::new(),
        };
        ckpt.push_params(self.generator.params())?;
        ckpt.push_params(self.discriminator.params())?;
        self.opt_g.export(&mut ckpt)?;
        self.opt_d.export(&mut ckpt)?;
        Ok(ckpt)
    }

    /// Rebuilds the model stored in `ckpt`, using the config it carries.
    pub fn from_checkpoint(ckpt: &Checkpoint) -> Result<Self> {
        if ckpt.kind != CHECKPOINT_KIND {
            return Err(Error::Checkpoint(format!(
                "expected a `{CHECKPOINT_KIND}` checkpoint, found `{}`",
                ckpt.kind
            )));
        }
        let cfg: TrainingConfig = serde_json::from_str(&ckpt.config_json)?;
        let mut model = Self::new(&cfg)?;
        if model.fingerprint != ckpt.fingerprint {
            return Err(Error::ConfigMismatch {
                expected: fingerprint_hex(&model.fingerprint),
                found: ckpt.fingerprint_hex(),
            });
        }
        model.load_state(ckpt)?;
        Ok(model)
    }

    /// Restores weights, optimizer state and counters after checking that
    /// `ckpt` was produced by the same configuration.
    pub fn resume_from(&mut self, ckpt: &Checkpoint) -> Result<()> {
        if ckpt.fingerprint != self.fingerprint {
            return Err(Error::ConfigMismatch {
                expected: fingerprint_hex(&self.fingerprint),
                found: ckpt.fingerprint_hex(),
            });
        }
        self.load_state(ckpt)
    }

    fn load_state(&mut self, ckpt: &Checkpoint) -> Result<()> {
        ckpt.restore_params(self.generator.params())?;
        ckpt.restore_params(self.discriminator.params())?;
        self.opt_g.restore(ckpt)?;
        self.opt_d.restore(ckpt)?;
        self.step = ckpt
            .counter("step")
            .ok_or_else(|| Error::Checkpoint("missing counter `step`".into()))?;
        self.epoch = ckpt.epoch;
        Ok(())
    }

    /// Runs one pass over `data` in a seeded order that depends only on the
    /// epoch index, so resumed runs replay the same batches.
    pub fn train_epoch<S: PairSource + ?Sized>(
        &mut self,
        data: &S,
        mut on_step: impl FnMut(&StepRecord) -> Result<()>,
    ) -> Result<()> {
        if data.is_empty() {
            return Err(Error::invalid("training set is empty"));
        }
        let epoch = self.epoch;
        self.set_learning_rate(self.cfg.learning_rate_at(epoch));
        let mut order: Vec<usize> = (0..data.len()).collect();
        let mut rng =
            ChaCha8Rng::seed_from_u64(self.cfg.seed ^ epoch.wrapping_mul(0x9E37_79B9_7F4A_7C15));
        order.shuffle(&mut rng);
        for chunk in order.chunks(self.cfg.batch_size) {
            let pairs = chunk
                .iter()
                .map(|&i| data.pair(i))
                .collect::<Result<Vec<_>>>()?;
            let inputs: Vec<Tensor> = pairs.iter().map(|p| p.input.clone()).collect();
            let targets: Vec<Tensor> = pairs.iter().map(|p| p.target.clone()).collect();
            let report = self.train_step(&stack(&inputs)?, &stack(&targets)?)?;
            on_step(&StepRecord {
                step: self.step,
                epoch,
                g_gan: report.g_gan,
                g_fm: report.g_fm,
                d_real: report.d_real,
                d_fake: report.d_fake,
            })?;
        }
        self.epoch += 1;
        Ok(())
    }
}

/// What [`train`] produced.
#[derive(Debug)]
pub struct TrainOutcome {
    pub final_checkpoint: PathBuf,
    /// Epoch count found in the checkpoint directory at start-up, if resumed.
    pub resumed_from: Option<u64>,
    pub checkpoint: Checkpoint,
}

pub const METRICS_FILE: &str = "metrics.jsonl";

/// Trains to `cfg.epochs`, resuming from the newest checkpoint in
/// `cfg.checkpoint_dir` when one exists. Checkpoints are written every
/// `checkpoint_every` epochs and after the last epoch; per-step metrics are
/// appended to `metrics.jsonl` in the same directory.
pub fn train<S: PairSource + ?Sized>(cfg: &TrainingConfig, data: &S) -> Result<TrainOutcome> {
    if data.is_empty() {
        return Err(Error::invalid("training set is empty"));
    }
    let mut model = Pix2PixHd::new(cfg)?;
    let dir = cfg.checkpoint_dir.clone();
    std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;

    let mut resumed_from = None;
    if let Some(path) = Checkpoint::latest_in(&dir)? {
        let ckpt = Checkpoint::load(&path)?;
        model.resume_from(&ckpt)?;
        log::info!("resuming from {} (epoch {})", path.display(), ckpt.epoch);
        resumed_from = Some(ckpt.epoch);
    }

    let metrics_path = dir.join(METRICS_FILE);
    let mut metrics = OpenOptions::new()
        .create(true)
        .append(true)
        .open(&metrics_path)
        .map_err(|e| Error::io(&metrics_path, e))?;

    let mut last_saved = None;
    while model.epoch() < cfg.epochs {
        model.train_epoch(data, |rec| {
            let line = serde_json::to_string(rec)?;
            writeln!(metrics, "{line}").map_err(|e| Error::io(&metrics_path, e))
        })?;
        let done = model.epoch();
        log::info!("epoch {done}/{} done", cfg.epochs);
        let periodic = cfg.checkpoint_every > 0 && done % cfg.checkpoint_every == 0;
        if periodic || done == cfg.epochs {
            let path = dir.join(Checkpoint::file_name(done));
            model.to_checkpoint()?.save(&path)?;
            last_saved = Some(path);
        }
    }
    metrics.flush().map_err(|e| Error::io(&metrics_path, e))?;

    let final_checkpoint = match last_saved {
        Some(p) => p,
        None => {
            // Already complete on entry; make sure the final file exists.
            let path = dir.join(Checkpoint::file_name(model.epoch()));
            if !path.exists() {
                model.to_checkpoint()?.save(&path)?;
            }
            path
        }
    };
    Ok(TrainOutcome {
        checkpoint: Checkpoint::load(&final_checkpoint)?,
        final_checkpoint,
        resumed_from,
    })
}

/// Brings a map pair to `width×height`, letterboxing when the size differs.
pub fn fit_maps(
    semantic: &SemanticLabelMap,
    instance: Option<&InstanceMap>,
    width: u32,
    height: u32,
) -> Result<(SemanticLabelMap, Option<InstanceMap>)> {
    let same = |w: u32, h: u32| (w, h) == (width, height);
    let sem = if same(semantic.width(), semantic.height()) {
        semantic.clone()
    } else {
        letterbox(semantic, width, height, BORDER)?
    };
    let inst = match instance {
        Some(i) if same(i.width(), i.height()) => Some(i.clone()),
        Some(i) => Some(letterbox(i, width, height, fresh_instance_id(i))?),
        None => None,
    };
    if !same(sem.width(), sem.height())
        || inst.as_ref().is_some_and(|i| !same(i.width(), i.height()))
    {
        return Err(Error::invalid(format!(
            "maps could not be brought to {width}x{height}"
        )));
    }
    Ok((sem, inst))
}

/// Generates one image per map pair with the generator stored in `ckpt`.
/// Maps of another size are letterboxed to the trained resolution.
pub fn synthesize(
    ckpt: &Checkpoint,
    maps: &[(SemanticLabelMap, Option<InstanceMap>)],
) -> Result<Vec<RgbImage>> {
    let model = Pix2PixHd::from_checkpoint(ckpt)?;
    synthesize_with(&model, maps)
}

/// [`synthesize`] with an already loaded model.
pub fn synthesize_with(
    model: &Pix2PixHd,
    maps: &[(SemanticLabelMap, Option<InstanceMap>)],
) -> Result<Vec<RgbImage>> {
    let cfg = model.config();
    maps.iter()
        .map(|(sem, inst)| {
            let (sem, inst) = fit_maps(sem, inst.as_ref(), cfg.width, cfg.height)?;
            let x = encode_maps(&sem, inst.as_ref(), cfg.use_boundary)?.unsqueeze(0)?;
            tensor_to_image(&model.generate(&x)?.squeeze(0)?)
        })
        .collect()
}

/// Output file name for the image synthesized from mask `id`.
pub fn synthetic_file_name(id: &str) -> String {
    format!("{id}_synthetic.png")
}

/// Writes each `(id, image)` as `<id>_synthetic.png` under `dir`.
pub fn write_synthetic(dir: &Path, items: &[(String, RgbImage)]) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    items
        .iter()
        .map(|(id, img)| {
            let path = dir.join(synthetic_file_name(id));
            write_png(&image::DynamicImage::ImageRgb8(img.clone()), &path)?;
            Ok(path)
        })
        .collect()
}

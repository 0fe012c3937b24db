use std::collections::BTreeMap;
use std::fs::OpenOptions;
use std::io::Write;
use std::path::PathBuf;

use candle_core::{Device, Tensor, Var};
use image::{imageops, RgbImage};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::config::PganConfig;
use super::label::{labels_tensor, ConditionLabel};
use super::nets::{blend_real, PganDiscriminator, PganGenerator};
use crate::error::{Error, Result};
use crate::imaging::{image_to_tensor, tensor_to_image};
use crate::synthnet::nn::scalar;
use crate::trainer::{fingerprint_hex, Adam, AdamParams, Checkpoint};

pub const PGAN_CHECKPOINT_KIND: &str = "pgan";
pub const PGAN_METRICS_FILE: &str = "metrics.jsonl";
const ADAM_EPS: f64 = 1e-8;
const GRAD_ENV: &str = "CANDLE_GRAD_DO_NOT_DETACH";

#[derive(Debug, Clone)]
pub struct LabeledImage {
    pub id: String,
    pub image: RgbImage,
    pub label: ConditionLabel,
}

/// Pairs every image with its label; an image without one is an error.
pub fn attach_labels(
    images: Vec<(String, RgbImage)>,
    labels: &BTreeMap<String, ConditionLabel>,
) -> Result<Vec<LabeledImage>> {
    images
        .into_iter()
        .map(|(id, image)| {
            let label = *labels
                .get(&id)
                .ok_or_else(|| Error::invalid(format!("image `{id}` has no label")))?;
            Ok(LabeledImage { id, image, label })
        })
        .collect()
}

/// Center square crop resized to `res×res`.
pub fn square_resize(img: &RgbImage, res: u32) -> RgbImage {
    let (w, h) = img.dimensions();
    let side = w.min(h);
    let crop = imageops::crop_imm(img, (w - side) / 2, (h - side) / 2, side, side).to_image();
    if side == res {
        crop
    } else {
        imageops::resize(&crop, res, res, imageops::FilterType::Triangle)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PganStepRecord {
    pub step: u64,
    pub epoch: u64,
    pub resolution: u32,
    pub alpha: f64,
    pub d_loss: f64,
    pub g_loss: f64,
    pub gradient_penalty: f64,
}

/// Fails unless gradients of gradients can be taken on this thread. The
/// tensor backend reads its switch once per thread, on the first backward
/// pass, so callers must set it before any differentiation happens there.
pub fn second_order_available() -> Result<()> {
    let x = Var::new(&[1.5f32, -2.0], &Device::Cpu)?;
    let y = x.as_tensor().sqr()?.sum_all()?;
    let g = y
        .backward()?
        .get(x.as_tensor())
        .cloned()
        .ok_or_else(|| Error::invalid("no first-order gradient"))?;
    let gg = g.sum_all()?.backward()?;
    match gg.get(x.as_tensor()) {
        Some(t) if t.to_vec1::<f32>()? == [2.0, 2.0] => Ok(()),
        _ => Err(Error::invalid(format!(
            "second-order gradients are unavailable; set {GRAD_ENV}=1 before the first backward pass"
        ))),
    }
}

/// `mean_i (‖∇ₓD(x_i)‖₂ − 1)²` over the batch `x`. The result is itself
/// differentiable with respect to the critic parameters when second-order
/// gradients are enabled.
pub fn gradient_penalty(
    critic: &PganDiscriminator,
    x: &Tensor,
    labels: &Tensor,
    res: u32,
    alpha: f64,
) -> Result<Tensor> {
    let x = Var::from_tensor(&x.detach())?;
    let score = critic.forward(x.as_tensor(), labels, res, alpha)?;
    let grad = score
        .sum_all()?
        .backward()?
        .get(x.as_tensor())
        .cloned()
        .ok_or_else(|| Error::invalid("critic output does not depend on its input"))?;
    let norms = (grad.sqr()?.flatten_from(1)?.sum(1)? + 1e-12)?.sqrt()?;
    Ok((norms - 1.0)?.sqr()?.mean_all()?)
}

fn normal_tensor(rng: &mut ChaCha8Rng, n: usize, d: usize) -> Result<Tensor> {
    let data: Vec<f32> = (0..n * d).map(|_| rng.sample(StandardNormal)).collect();
    Ok(Tensor::from_vec(data, (n, d), &Device::Cpu)?)
}

fn step_rng(seed: u64, step: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ step.wrapping_mul(0x9E37_79B9_7F4A_7C15));
    rng.set_stream(stream);
    rng
}

/// Conditional progressive GAN with its optimizers.
pub struct Pgan {
    cfg: PganConfig,
    fingerprint: [u8; 32],
    generator: PganGenerator,
    discriminator: PganDiscriminator,
    opt_g: Adam,
    opt_d: Adam,
    step: u64,
    epoch: u64,
}

impl Pgan {
    pub fn new(cfg: &PganConfig) -> Result<Self> {
        cfg.validate()?;
        let generator = PganGenerator::new(cfg, cfg.seed)?;
        let discriminator = PganDiscriminator::new(cfg, cfg.seed.wrapping_add(1))?;
        let hp = AdamParams {
            lr: cfg.learning_rate,
            beta1: cfg.adam_beta1,
            beta2: cfg.adam_beta2,
            eps: ADAM_EPS,
        };
        Ok(Self {
            fingerprint: cfg.fingerprint()?,
            opt_g: Adam::new("opt_g", generator.params(), hp)?,
            opt_d: Adam::new("opt_d", discriminator.params(), hp)?,
            cfg: cfg.clone(),
            generator,
            discriminator,
            step: 0,
            epoch: 0,
        })
    }

    pub fn config(&self) -> &PganConfig {
        &self.cfg
    }

    pub fn generator(&self) -> &PganGenerator {
        &self.generator
    }

    pub fn discriminator(&self) -> &PganDiscriminator {
        &self.discriminator
    }

    pub fn epoch(&self) -> u64 {
        self.epoch
    }

    /// Resolution and blend weight of the most recently trained epoch.
    pub fn current_stage(&self) -> Result<(u32, f64)> {
        if self.epoch == 0 {
            return Ok((self.cfg.schedule.start_res, 1.0));
        }
        let s = self.cfg.schedule.locate(self.epoch - 1)?;
        Ok((s.resolution, s.alpha))
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

    /// One critic update (WGAN-GP with drift) then one generator update.
    /// Requires second-order gradients on the calling thread.
    pub fn train_step(
        &mut self,
        real: &Tensor,
        labels: &Tensor,
        res: u32,
        alpha: f64,
    ) -> Result<PganStepRecord> {
        let n = real.dim(0)?;
        let mut rng = step_rng(self.cfg.seed, self.step, 0);
        let real = blend_real(real, alpha)?;

        let z = normal_tensor(&mut rng, n, self.cfg.latent_dim)?;
        let fake = self.generator.forward(&z, labels, res, alpha)?.detach();
        let d_real = self.discriminator.forward(&real, labels, res, alpha)?;
        let d_fake = self.discriminator.forward(&fake, labels, res, alpha)?;
        let eps: Vec<f32> = (0..n).map(|_| rng.gen::<f32>()).collect();
        let eps = Tensor::from_vec(eps, (n, 1, 1, 1), &Device::Cpu)?;
        let mixed = (real.broadcast_mul(&eps)? + fake.broadcast_mul(&(1.0 - &eps)?)?)?;
        let gp = gradient_penalty(&self.discriminator, &mixed, labels, res, alpha)?;
        let wdist = (d_fake.mean_all()? - d_real.mean_all()?)?;
        let drift = d_real.sqr()?.mean_all()?;
        let d_loss = ((wdist + (&gp * self.cfg.gp_lambda)?)? + (drift * self.cfg.drift)?)?;
        let d_loss_v = self.finite(scalar(&d_loss)?, "d_loss")?;
        let gp_v = self.finite(scalar(&gp)?, "gradient_penalty")?;
        self.opt_d.step(&d_loss.backward()?)?;

        let z = normal_tensor(&mut rng, n, self.cfg.latent_dim)?;
        let fake = self.generator.forward(&z, labels, res, alpha)?;
        let g_loss = self
            .discriminator
            .forward(&fake, labels, res, alpha)?
            .mean_all()?
            .neg()?;
        let g_loss_v = self.finite(scalar(&g_loss)?, "g_loss")?;
        self.opt_g.step(&g_loss.backward()?)?;

        self.step += 1;
        Ok(PganStepRecord {
            step: self.step,
            epoch: self.epoch,
            resolution: res,
            alpha,
            d_loss: d_loss_v,
            g_loss: g_loss_v,
            gradient_penalty: gp_v,
        })
    }

    /// Generates `labels.len()` images at the given stage.
    pub fn generate(
        &self,
        z: &Tensor,
        labels: &[ConditionLabel],
        res: u32,
        alpha: f64,
    ) -> Result<Tensor> {
        Ok(self
            .generator
            .forward(z, &labels_tensor(labels)?, res, alpha)?
            .detach())
    }

    pub fn to_checkpoint(&self) -> Result<Checkpoint> {
        let mut ckpt = Checkpoint {
            kind: PGAN_CHECKPOINT_KIND.into(),
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

    pub fn from_checkpoint(ckpt: &Checkpoint) -> Result<Self> {
        if ckpt.kind != PGAN_CHECKPOINT_KIND {
            return Err(Error::Checkpoint(format!(
                "expected a `{PGAN_CHECKPOINT_KIND}` checkpoint, found `{}`",
                ckpt.kind
            )));
        }
        let cfg: PganConfig = serde_json::from_str(&ckpt.config_json)?;
        let mut model = Self::new(&cfg)?;
        model.resume_from(ckpt)?;
        Ok(model)
    }

    pub fn resume_from(&mut self, ckpt: &Checkpoint) -> Result<()> {
        if ckpt.fingerprint != self.fingerprint {
            return Err(Error::ConfigMismatch {
                expected: fingerprint_hex(&self.fingerprint),
                found: ckpt.fingerprint_hex(),
            });
        }
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
}

/// Images at `target_res` as one `N×3×R×R` tensor, plus their labels.
struct PreparedData {
    images: Tensor,
    labels: Vec<ConditionLabel>,
}

impl PreparedData {
    fn new(data: &[LabeledImage], res: u32) -> Result<Self> {
        let tensors = data
            .iter()
            .map(|d| image_to_tensor(&square_resize(&d.image, res)))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            images: Tensor::stack(&tensors, 0)?,
            labels: data.iter().map(|d| d.label).collect(),
        })
    }

    fn at_resolution(&self, target: u32, res: u32) -> Result<Tensor> {
        let f = (target / res) as usize;
        Ok(if f == 1 {
            self.images.clone()
        } else {
            self.images.avg_pool2d(f)?
        })
    }
}

#[derive(Debug)]
pub struct PganOutcome {
    pub final_checkpoint: PathBuf,
    pub resumed_from: Option<u64>,
    pub checkpoint: Checkpoint,
    /// Resolutions trained, in order, one entry per epoch run in this call.
    pub epoch_resolutions: Vec<u32>,
}

/// Runs the full progressive schedule, resuming from the newest checkpoint
/// in `cfg.checkpoint_dir` if present. Training runs on a dedicated thread
/// with second-order differentiation enabled for the gradient penalty.
pub fn train_pgan(cfg: &PganConfig, data: &[LabeledImage]) -> Result<PganOutcome> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(Error::invalid("PGAN training set is empty"));
    }
    if std::env::var(GRAD_ENV).ok().as_deref() != Some("1") {
        // Edition 2021: `set_var` is safe. Only threads that have not yet run
        // a backward pass pick the setting up, hence the worker below.
        std::env::set_var(GRAD_ENV, "1");
    }
    std::thread::scope(|s| {
        s.spawn(|| {
            second_order_available()?;
            train_pgan_on_this_thread(cfg, data)
        })
        .join()
        .unwrap_or_else(|_| Err(Error::invalid("PGAN training thread panicked")))
    })
}

fn train_pgan_on_this_thread(cfg: &PganConfig, data: &[LabeledImage]) -> Result<PganOutcome> {
    let mut model = Pgan::new(cfg)?;
    let dir = cfg.checkpoint_dir.clone();
    std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    let mut resumed_from = None;
    if let Some(path) = Checkpoint::latest_in(&dir)? {
        let ckpt = Checkpoint::load(&path)?;
        model.resume_from(&ckpt)?;
        resumed_from = Some(ckpt.epoch);
    }

    let target = cfg.schedule.target_res;
    let prepared = PreparedData::new(data, target)?;
    let metrics_path = dir.join(PGAN_METRICS_FILE);
    let mut metrics = OpenOptions::new()
        .create(true)
        .append(true)
        .open(&metrics_path)
        .map_err(|e| Error::io(&metrics_path, e))?;

    let total = cfg.schedule.total_epochs();
    let mut epoch_resolutions = Vec::new();
    let mut stage_images: Option<(u32, Tensor)> = None;
    let mut last_saved = None;
    while model.epoch < total {
        let state = cfg.schedule.locate(model.epoch)?;
        let res = state.resolution;
        if stage_images.as_ref().map(|(r, _)| *r) != Some(res) {
            stage_images = Some((res, prepared.at_resolution(target, res)?));
        }
        let images = &stage_images.as_ref().expect("set above").1;
        let mut order: Vec<usize> = (0..data.len()).collect();
        order.shuffle(&mut step_rng(cfg.seed, model.epoch, 1));
        for chunk in order.chunks(cfg.batch_size) {
            let idx = Tensor::from_vec(
                chunk.iter().map(|&i| i as u32).collect::<Vec<_>>(),
                chunk.len(),
                &Device::Cpu,
            )?;
            let real = images.index_select(&idx, 0)?;
            let labels: Vec<ConditionLabel> = chunk.iter().map(|&i| prepared.labels[i]).collect();
            let rec = model.train_step(&real, &labels_tensor(&labels)?, res, state.alpha)?;
            writeln!(metrics, "{}", serde_json::to_string(&rec)?)
                .map_err(|e| Error::io(&metrics_path, e))?;
        }
        model.epoch += 1;
        epoch_resolutions.push(res);
        log::info!(
            "pgan epoch {}/{total} at {res}x{res}, alpha {:.3}",
            model.epoch,
            state.alpha
        );
        let periodic = cfg.checkpoint_every > 0 && model.epoch % cfg.checkpoint_every == 0;
        if periodic || model.epoch == total {
            let path = dir.join(Checkpoint::file_name(model.epoch));
            model.to_checkpoint()?.save(&path)?;
            last_saved = Some(path);
        }
    }
    let final_checkpoint = match last_saved {
        Some(p) => p,
        None => {
            let path = dir.join(Checkpoint::file_name(model.epoch));
            if !path.exists() {
                model.to_checkpoint()?.save(&path)?;
            }
            path
        }
    };
    Ok(PganOutcome {
        checkpoint: Checkpoint::load(&final_checkpoint)?,
        final_checkpoint,
        resumed_from,
        epoch_resolutions,
    })
}

/// `n` images of class `label` at the checkpoint's current resolution;
/// identical for identical `(ckpt, label, n, seed)`.
pub fn sample_pgan(
    ckpt: &Checkpoint,
    label: ConditionLabel,
    n: usize,
    seed: u64,
) -> Result<Vec<RgbImage>> {
    if n == 0 {
        return Ok(Vec::new());
    }
    let model = Pgan::from_checkpoint(ckpt)?;
    let (res, alpha) = model.current_stage()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let z = normal_tensor(&mut rng, n, model.cfg.latent_dim)?;
    const CHUNK: usize = 32;
    let mut out = Vec::with_capacity(n);
    for start in (0..n).step_by(CHUNK) {
        let len = CHUNK.min(n - start);
        let imgs = model.generate(&z.narrow(0, start, len)?, &vec![label; len], res, alpha)?;
        for i in 0..len {
            out.push(tensor_to_image(&imgs.get(i)?)?);
        }
    }
    Ok(out)
}

/// Per-label sample counts that keep the melanoma share of `reference`.
pub fn ratio_preserving_counts(reference: &[ConditionLabel], n: usize) -> (usize, usize) {
    if reference.is_empty() {
        return (n, 0);
    }
    let mel = reference.iter().filter(|l| l.is_melanoma()).count();
    let n_mel = ((n * mel) as f64 / reference.len() as f64).round() as usize;
    (n - n_mel, n_mel)
}

//! Pluggable melanoma classifiers and test-time augmentation.

use std::collections::BTreeMap;

use candle_core::{Tensor, Var, D};
use image::{imageops, RgbImage};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::augment::{augment, AugmentParams};
use crate::error::{Error, Result};
use crate::imaging::{image_to_tensor, stack};
use crate::proggan::LabeledImage;
use crate::synthnet::nn::{scalar, seeded_rng, Conv2d, Padding, ParamStore};
use crate::trainer::{Adam, AdamParams};

/// Binary lesion classifier trained from scratch for one run.
pub trait Classifier: Send {
    /// Trains on `data`, augmenting every image each time it is visited.
    fn fit(
        &mut self,
        data: &[&LabeledImage],
        augment: &AugmentParams,
        rng: &mut ChaCha8Rng,
    ) -> Result<()>;

    /// Melanoma probability for each image.
    fn predict(&self, images: &[RgbImage]) -> Result<Vec<f64>>;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ClassifierConfig {
    /// Images are resized to `input_size × input_size`.
    pub input_size: u32,
    /// Channels of the first convolution block.
    pub width: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
}

impl Default for ClassifierConfig {
    fn default() -> Self {
        Self {
            input_size: 32,
            width: 8,
            epochs: 20,
            batch_size: 16,
            learning_rate: 2e-3,
        }
    }
}

impl ClassifierConfig {
    pub fn validate(&self) -> Result<()> {
        if self.input_size < 8 || self.width == 0 || self.batch_size == 0 {
            return Err(Error::invalid(
                "classifier needs input_size ≥ 8 and positive width and batch_size",
            ));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(Error::invalid("classifier learning_rate must be positive"));
        }
        Ok(())
    }
}

pub type ClassifierFactory = fn(&ClassifierConfig, u64) -> Result<Box<dyn Classifier>>;

/// Backbones by name.
#[derive(Clone)]
pub struct ClassifierRegistry {
    entries: BTreeMap<String, ClassifierFactory>,
}

pub const DEFAULT_CLASSIFIER: &str = "small-cnn";

impl Default for ClassifierRegistry {
    fn default() -> Self {
        let mut r = Self {
            entries: BTreeMap::new(),
        };
        r.register(DEFAULT_CLASSIFIER, |cfg, seed| {
            Ok(Box::new(SmallCnn::new(cfg, seed)?))
        });
        r
    }
}

impl ClassifierRegistry {
    /// Adds or replaces a backbone.
    pub fn register(&mut self, name: &str, factory: ClassifierFactory) {
        self.entries.insert(name.to_string(), factory);
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(|s| s.as_str())
    }

    pub fn build(
        &self,
        name: &str,
        cfg: &ClassifierConfig,
        seed: u64,
    ) -> Result<Box<dyn Classifier>> {
        let factory = self.entries.get(name).ok_or_else(|| {
            Error::invalid(format!(
                "unknown classifier `{name}` (known: {})",
                self.names().collect::<Vec<_>>().join(", ")
            ))
        })?;
        factory(cfg, seed)
    }
}

/// Mean melanoma probability over `replicas` independently augmented copies
/// of `image`.
pub fn tta_predict(
    model: &dyn Classifier,
    image: &RgbImage,
    replicas: usize,
    params: &AugmentParams,
    rng: &mut impl Rng,
) -> Result<f64> {
    if replicas == 0 {
        return Err(Error::invalid(
            "test-time augmentation needs at least one replica",
        ));
    }
    let views: Vec<RgbImage> = (0..replicas).map(|_| augment(image, params, rng)).collect();
    let probs = model.predict(&views)?;
    Ok(probs.iter().sum::<f64>() / probs.len() as f64)
}

/// Six 3×3 convolutions (every second one strided), global average pooling
/// and a linear melanoma logit.
pub struct SmallCnn {
    cfg: ClassifierConfig,
    params: ParamStore,
    convs: Vec<Conv2d>,
    head_w: Var,
    head_b: Var,
}

impl SmallCnn {
    pub fn new(cfg: &ClassifierConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let mut rng = seeded_rng(seed);
        let mut params = ParamStore::new();
        let w = cfg.width;
        let widths = [w, w, 2 * w, 2 * w, 4 * w, 4 * w];
        let mut convs = Vec::with_capacity(6);
        let mut c_in = 3;
        for (i, &c_out) in widths.iter().enumerate() {
            let std = (2.0 / (9 * c_in) as f64).sqrt();
            let stride = if i % 2 == 1 { 2 } else { 1 };
            convs.push(Conv2d::new(
                &mut params,
                &format!("cls.conv{i}"),
                c_in,
                c_out,
                3,
                stride,
                Padding::Zero(1),
                true,
                std,
                &mut rng,
            )?);
            c_in = c_out;
        }
        let head_w = params.normal(
            "cls.head.weight",
            &[c_in, 1],
            (1.0 / c_in as f64).sqrt(),
            &mut rng,
        )?;
        let head_b = params.constant("cls.head.bias", &[1], 0.0)?;
        Ok(Self {
            cfg: cfg.clone(),
            params,
            convs,
            head_w,
            head_b,
        })
    }

    pub fn params(&self) -> &ParamStore {
        &self.params
    }

    /// `N×3×S×S` in `[-1,1]` to `N` logits.
    pub fn logits(&self, x: &Tensor) -> Result<Tensor> {
        let mut h = x.clone();
        for conv in &self.convs {
            h = conv.forward(&h)?.relu()?;
        }
        let pooled = h.mean(D::Minus1)?.mean(D::Minus1)?;
        let z = pooled
            .matmul(self.head_w.as_tensor())?
            .broadcast_add(self.head_b.as_tensor())?;
        Ok(z.squeeze(1)?)
    }

    fn prepare(&self, img: &RgbImage) -> RgbImage {
        let s = self.cfg.input_size;
        if img.dimensions() == (s, s) {
            img.clone()
        } else {
            imageops::resize(img, s, s, imageops::FilterType::Triangle)
        }
    }
}

/// Mean binary cross-entropy on logits: `max(z,0) − z·y + ln(1 + e^{−|z|})`.
pub fn bce_with_logits(logits: &Tensor, targets: &Tensor) -> Result<Tensor> {
    let softplus = (logits.abs()?.neg()?.exp()? + 1.0)?.log()?;
    let loss = ((logits.relu()? - (logits * targets)?)? + softplus)?;
    Ok(loss.mean_all()?)
}

impl Classifier for SmallCnn {
    fn fit(
        &mut self,
        data: &[&LabeledImage],
        params: &AugmentParams,
        rng: &mut ChaCha8Rng,
    ) -> Result<()> {
        if data.is_empty() {
            return Err(Error::InsufficientData(
                "classifier training set is empty".into(),
            ));
        }
        let images: Vec<RgbImage> = data.iter().map(|d| self.prepare(&d.image)).collect();
        let mut opt = Adam::new(
            "cls",
            &self.params,
            AdamParams {
                lr: self.cfg.learning_rate,
                beta1: 0.9,
                beta2: 0.999,
                eps: 1e-8,
            },
        )?;
        let mut order: Vec<usize> = (0..images.len()).collect();
        let mut step = 0u64;
        for _ in 0..self.cfg.epochs {
            order.shuffle(rng);
            for batch in order.chunks(self.cfg.batch_size) {
                let x = batch
                    .iter()
                    .map(|&i| image_to_tensor(&augment(&images[i], params, rng)))
                    .collect::<Result<Vec<_>>>()?;
                let x = stack(&x)?;
                let y: Vec<f32> = batch
                    .iter()
                    .map(|&i| f32::from(u8::from(data[i].label.is_melanoma())))
                    .collect();
                let y = Tensor::from_vec(y, batch.len(), x.device())?;
                let loss = bce_with_logits(&self.logits(&x)?, &y)?;
                step += 1;
                if !scalar(&loss)?.is_finite() {
                    return Err(Error::Diverged {
                        step,
                        what: "classifier loss",
                    });
                }
                opt.step(&loss.backward()?)?;
            }
        }
        Ok(())
    }

    fn predict(&self, images: &[RgbImage]) -> Result<Vec<f64>> {
        let mut out = Vec::with_capacity(images.len());
        for chunk in images.chunks(64) {
            let x = chunk
                .iter()
                .map(|img| image_to_tensor(&self.prepare(img)))
                .collect::<Result<Vec<_>>>()?;
            let p = sigmoid(&self.logits(&stack(&x)?)?)?;
            out.extend(p.to_vec1::<f32>()?.into_iter().map(f64::from));
        }
        Ok(out)
    }
}

fn sigmoid(z: &Tensor) -> Result<Tensor> {
    Ok((z.neg()?.exp()? + 1.0)?.recip()?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::proggan::ConditionLabel;
    use rand::SeedableRng;

    struct Constant(f64);

    impl Classifier for Constant {
        fn fit(
            &mut self,
            _: &[&LabeledImage],
            _: &AugmentParams,
            _: &mut ChaCha8Rng,
        ) -> Result<()> {
            Ok(())
        }
        fn predict(&self, images: &[RgbImage]) -> Result<Vec<f64>> {
            Ok(vec![self.0; images.len()])
        }
    }

    #[test]
    fn constant_model_tta() {
        let img = RgbImage::from_pixel(8, 8, image::Rgb([10, 20, 30]));
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for r in [1, 2, 50] {
            let p =
                tta_predict(&Constant(0.7), &img, r, &AugmentParams::default(), &mut rng).unwrap();
            assert!((p - 0.7).abs() < 1e-12);
        }
        assert!(tta_predict(&Constant(0.7), &img, 0, &AugmentParams::default(), &mut rng).is_err());
    }

    #[test]
    fn bce_matches_direct_formula() {
        let z = Tensor::new(&[-3.0f32, 0.0, 2.5], &candle_core::Device::Cpu).unwrap();
        let y = Tensor::new(&[0.0f32, 1.0, 1.0], &candle_core::Device::Cpu).unwrap();
        let got = scalar(&bce_with_logits(&z, &y).unwrap()).unwrap();
        let sig = |v: f64| 1.0 / (1.0 + (-v).exp());
        let want = (-(1.0 - sig(-3.0)).ln() - sig(0.0).ln() - sig(2.5).ln()) / 3.0;
        assert!((got - want).abs() < 1e-6);
    }

    #[test]
    fn small_cnn_learns_brightness() {
        let cfg = ClassifierConfig {
            input_size: 8,
            width: 4,
            epochs: 30,
            batch_size: 8,
            ..Default::default()
        };
        let data: Vec<LabeledImage> = (0..16)
            .map(|i| {
                let mel = i % 2 == 0;
                let v = if mel { 40 } else { 210 } + (i as u8 % 5);
                LabeledImage {
                    id: format!("{i}"),
                    image: RgbImage::from_pixel(8, 8, image::Rgb([v, v, v])),
                    label: ConditionLabel::from_melanoma(mel),
                }
            })
            .collect();
        let refs: Vec<&LabeledImage> = data.iter().collect();
        let mut model = SmallCnn::new(&cfg, 3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        model
            .fit(&refs, &AugmentParams::identity(), &mut rng)
            .unwrap();
        let probs = model
            .predict(&data.iter().map(|d| d.image.clone()).collect::<Vec<_>>())
            .unwrap();
        for (p, d) in probs.iter().zip(&data) {
            assert_eq!(*p > 0.5, d.label.is_melanoma(), "p = {p}");
        }
    }
}

use candle_core::Tensor;
use serde::{Deserialize, Serialize};

use super::generator::INIT_STD;
use super::nn::{
    avg_pool_half, instance_norm, leaky_relu, seeded_rng, Conv2d, Padding, ParamStore,
};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DiscriminatorConfig {
    /// Conditioning planes plus image channels.
    pub input_channels: usize,
    pub num_scales: usize,
    pub base_channels: usize,
    /// Number of stride-2 layers per patch discriminator.
    pub num_layers: usize,
    pub max_channels: usize,
}

impl Default for DiscriminatorConfig {
    fn default() -> Self {
        Self {
            input_channels: 12,
            num_scales: 3,
            base_channels: 64,
            num_layers: 3,
            max_channels: 512,
        }
    }
}

impl DiscriminatorConfig {
    pub fn validate(&self) -> Result<()> {
        if self.num_scales == 0 {
            return Err(Error::invalid("discriminator needs at least one scale"));
        }
        if self.input_channels == 0 || self.base_channels == 0 || self.max_channels == 0 {
            return Err(Error::invalid(
                "discriminator channel counts must be positive",
            ));
        }
        if self.num_layers == 0 {
            return Err(Error::invalid(
                "discriminator needs at least one strided layer",
            ));
        }
        Ok(())
    }
}

/// Intermediate activations and the patch-logit map of one scale.
#[derive(Debug, Clone)]
pub struct ScaleOutput {
    pub features: Vec<Tensor>,
    pub logits: Tensor,
}

/// Per-scale outputs, finest scale first.
#[derive(Debug, Clone)]
pub struct FeaturePyramid {
    pub scales: Vec<ScaleOutput>,
}

impl FeaturePyramid {
    pub fn logits(&self) -> Vec<Tensor> {
        self.scales.iter().map(|s| s.logits.clone()).collect()
    }

    /// Copy cut from the autograd graph.
    pub fn detach(&self) -> FeaturePyramid {
        FeaturePyramid {
            scales: self
                .scales
                .iter()
                .map(|s| ScaleOutput {
                    features: s.features.iter().map(Tensor::detach).collect(),
                    logits: s.logits.detach(),
                })
                .collect(),
        }
    }
}

struct PatchLayer {
    conv: Conv2d,
    norm: bool,
}

/// PatchGAN: 4×4 convolutions, `num_layers` of them strided, ending in a
/// one-channel logit map.
struct PatchDiscriminator {
    layers: Vec<PatchLayer>,
}

impl PatchDiscriminator {
    fn new(
        cfg: &DiscriminatorConfig,
        prefix: &str,
        params: &mut ParamStore,
        rng: &mut rand_chacha::ChaCha8Rng,
    ) -> Result<Self> {
        const K: usize = 4;
        const PAD: usize = 2;
        let mut layers = Vec::new();
        let mut nf = cfg.base_channels.min(cfg.max_channels);
        layers.push(PatchLayer {
            conv: Conv2d::new(
                params,
                &format!("{prefix}.layer0"),
                cfg.input_channels,
                nf,
                K,
                2,
                Padding::Zero(PAD),
                true,
                INIT_STD,
                rng,
            )?,
            norm: false,
        });
        for i in 1..=cfg.num_layers {
            let prev = nf;
            nf = (nf * 2).min(cfg.max_channels);
            let stride = if i < cfg.num_layers { 2 } else { 1 };
            layers.push(PatchLayer {
                conv: Conv2d::new(
                    params,
                    &format!("{prefix}.layer{i}"),
                    prev,
                    nf,
                    K,
                    stride,
                    Padding::Zero(PAD),
                    false,
                    INIT_STD,
                    rng,
                )?,
                norm: true,
            });
        }
        layers.push(PatchLayer {
            conv: Conv2d::new(
                params,
                &format!("{prefix}.logits"),
                nf,
                1,
                K,
                1,
                Padding::Zero(PAD),
                true,
                INIT_STD,
                rng,
            )?,
            norm: false,
        });
        Ok(Self { layers })
    }

    fn forward(&self, x: &Tensor) -> Result<ScaleOutput> {
        let mut features = Vec::with_capacity(self.layers.len() - 1);
        let mut h = x.clone();
        let (last, hidden) = self.layers.split_last().expect("at least two layers");
        for layer in hidden {
            h = layer.conv.forward(&h)?;
            if layer.norm {
                h = instance_norm(&h)?;
            }
            h = leaky_relu(&h, 0.2)?;
            features.push(h.clone());
        }
        let logits = last.conv.forward(&h)?;
        Ok(ScaleOutput { features, logits })
    }
}

/// `num_scales` independent patch discriminators, scale `i` seeing the input
/// downsampled `2^i` times.
pub struct MultiScaleDiscriminator {
    cfg: DiscriminatorConfig,
    params: ParamStore,
    scales: Vec<PatchDiscriminator>,
}

impl MultiScaleDiscriminator {
    pub fn new(cfg: &DiscriminatorConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let mut rng = seeded_rng(seed);
        let mut params = ParamStore::new();
        let scales = (0..cfg.num_scales)
            .map(|i| PatchDiscriminator::new(cfg, &format!("d.scale{i}"), &mut params, &mut rng))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            cfg: cfg.clone(),
            params,
            scales,
        })
    }

    pub fn config(&self) -> &DiscriminatorConfig {
        &self.cfg
    }

    pub fn params(&self) -> &ParamStore {
        &self.params
    }

    /// Scores a conditioning batch together with an image batch.
    pub fn forward(&self, cond: &Tensor, img: &Tensor) -> Result<FeaturePyramid> {
        let (cn, cc, ch, cw) = cond
            .dims4()
            .map_err(|_| Error::invalid("condition must be 4-D"))?;
        let (inn, ic, ih, iw) = img
            .dims4()
            .map_err(|_| Error::invalid("image must be 4-D"))?;
        if (cn, ch, cw) != (inn, ih, iw) {
            return Err(Error::invalid(format!(
                "condition {:?} and image {:?} are not aligned",
                cond.dims(),
                img.dims()
            )));
        }
        if cc + ic != self.cfg.input_channels {
            return Err(Error::invalid(format!(
                "discriminator expects {} channels, got {}+{}",
                self.cfg.input_channels, cc, ic
            )));
        }
        let input = Tensor::cat(&[cond, img], 1)?;
        let levels = downsample_pyramid(&input, self.cfg.num_scales)?;
        let scales = self
            .scales
            .iter()
            .zip(&levels)
            .map(|(d, x)| d.forward(x))
            .collect::<Result<Vec<_>>>()?;
        Ok(FeaturePyramid { scales })
    }
}

/// Free-function form of [`MultiScaleDiscriminator::forward`].
pub fn discriminator_forward(
    d: &MultiScaleDiscriminator,
    cond: &Tensor,
    img: &Tensor,
) -> Result<FeaturePyramid> {
    d.forward(cond, img)
}

/// `[x, pool(x), pool(pool(x)), …]`, `levels` entries, each pool a 3×3
/// stride-2 average over reflect padding. Spatial dims must be divisible by
/// `2^(levels-1)`.
pub fn downsample_pyramid(x: &Tensor, levels: usize) -> Result<Vec<Tensor>> {
    if levels == 0 {
        return Ok(Vec::new());
    }
    let (_, _, h, w) = x
        .dims4()
        .map_err(|_| Error::invalid("pyramid input must be 4-D"))?;
    let m = 1usize << (levels - 1);
    if h % m != 0 || w % m != 0 {
        return Err(Error::invalid(format!(
            "pyramid of {levels} levels needs dims divisible by {m}, got {h}x{w}"
        )));
    }
    let mut out = vec![x.clone()];
    for _ in 1..levels {
        let next = avg_pool_half(out.last().expect("non-empty"))?;
        out.push(next);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use candle_core::{DType, Device};

    #[test]
    fn pyramid_halves_exactly() {
        let x = Tensor::zeros((1, 3, 4, 4), DType::F32, &Device::Cpu).unwrap();
        let shapes: Vec<Vec<usize>> = downsample_pyramid(&x, 3)
            .unwrap()
            .iter()
            .map(|t| t.dims().to_vec())
            .collect();
        assert_eq!(
            shapes,
            vec![vec![1, 3, 4, 4], vec![1, 3, 2, 2], vec![1, 3, 1, 1]]
        );
    }

    #[test]
    fn pyramid_preserves_constants() {
        let x = Tensor::full(0.37f32, (1, 3, 8, 16), &Device::Cpu).unwrap();
        for level in downsample_pyramid(&x, 3).unwrap() {
            let v = level.flatten_all().unwrap().to_vec1::<f32>().unwrap();
            assert!(v.iter().all(|&a| (a - 0.37).abs() < 1e-6));
        }
    }

    #[test]
    fn pyramid_rejects_indivisible() {
        let x = Tensor::zeros((1, 3, 6, 8), DType::F32, &Device::Cpu).unwrap();
        assert!(downsample_pyramid(&x, 3).is_err());
    }

    #[test]
    fn rejects_misaligned_inputs() {
        let d = MultiScaleDiscriminator::new(
            &DiscriminatorConfig {
                base_channels: 4,
                ..Default::default()
            },
            0,
        )
        .unwrap();
        let cond = Tensor::zeros((1, 9, 32, 64), DType::F32, &Device::Cpu).unwrap();
        let img = Tensor::zeros((1, 3, 16, 64), DType::F32, &Device::Cpu).unwrap();
        assert!(matches!(
            d.forward(&cond, &img),
            Err(Error::InvalidArgument(_))
        ));
    }
}

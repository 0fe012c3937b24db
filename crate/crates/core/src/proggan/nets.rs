use candle_core::{Tensor, Var, D};
use rand_chacha::ChaCha8Rng;

use super::config::PganConfig;
use super::label::condition_concat_batch;
use crate::error::{Error, Result};
use crate::synthnet::nn::{leaky_relu, seeded_rng, Conv2d, Padding, ParamStore};

const SLOPE: f64 = 0.2;

/// Equalized-learning-rate convolution: N(0,1) weights rescaled by
/// `gain/sqrt(fan_in)` at every call.
fn eq_conv(
    params: &mut ParamStore,
    name: &str,
    cin: usize,
    cout: usize,
    k: usize,
    gain: f64,
    rng: &mut ChaCha8Rng,
) -> Result<Conv2d> {
    let scale = gain / ((cin * k * k) as f64).sqrt();
    Ok(Conv2d::new(
        params,
        name,
        cin,
        cout,
        k,
        1,
        Padding::Zero(k / 2),
        true,
        1.0,
        rng,
    )?
    .with_weight_scale(scale))
}

/// Equalized-learning-rate fully connected layer.
struct EqDense {
    weight: Var,
    bias: Var,
    scale: f64,
}

impl EqDense {
    fn new(
        params: &mut ParamStore,
        name: &str,
        cin: usize,
        cout: usize,
        gain: f64,
        rng: &mut ChaCha8Rng,
    ) -> Result<Self> {
        Ok(Self {
            weight: params.normal(format!("{name}.weight"), &[cout, cin], 1.0, rng)?,
            bias: params.constant(format!("{name}.bias"), &[cout], 0.0)?,
            scale: gain / (cin as f64).sqrt(),
        })
    }

    fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let w = (self.weight.as_tensor() * self.scale)?;
        Ok(x.matmul(&w.t()?)?.broadcast_add(self.bias.as_tensor())?)
    }
}

/// `x / sqrt(mean_c(x²) + 1e-8)` per pixel.
pub fn pixel_norm(x: &Tensor) -> Result<Tensor> {
    let norm = (x.sqr()?.mean_keepdim(1)? + 1e-8)?.sqrt()?;
    Ok(x.broadcast_div(&norm)?)
}

/// Appends one constant plane holding the average, over features and
/// positions, of the per-feature standard deviation across the batch.
pub fn minibatch_stddev(x: &Tensor) -> Result<Tensor> {
    let (n, _, h, w) = x.dims4()?;
    let mean = x.mean_keepdim(0)?;
    let var = x.broadcast_sub(&mean)?.sqr()?.mean_keepdim(0)?;
    let std = (var + 1e-8)?.sqrt()?.mean_all()?;
    let plane = std.reshape((1, 1, 1, 1))?.broadcast_as((n, 1, h, w))?;
    Ok(Tensor::cat(&[x, &plane], 1)?)
}

fn upsample2(x: &Tensor) -> Result<Tensor> {
    let (_, _, h, w) = x.dims4()?;
    Ok(x.upsample_nearest2d(h * 2, w * 2)?)
}

fn downsample2(x: &Tensor) -> Result<Tensor> {
    Ok(x.avg_pool2d(2)?)
}

fn blend(alpha: f64, new: &Tensor, old: &Tensor) -> Result<Tensor> {
    Ok(((new * alpha)? + (old * (1.0 - alpha))?)?)
}

fn check_alpha(alpha: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::invalid(format!("alpha {alpha} is outside [0, 1]")));
    }
    Ok(())
}

fn stage_index(cfg: &PganConfig, res: u32) -> Result<usize> {
    cfg.schedule
        .stages()
        .iter()
        .position(|&r| r == res)
        .ok_or_else(|| Error::invalid(format!("{res} is not a stage resolution")))
}

struct GBlock {
    conv1: Conv2d,
    conv2: Conv2d,
}

/// Label-conditional progressive generator. Parameters for every stage up to
/// the target resolution exist from the start.
pub struct PganGenerator {
    cfg: PganConfig,
    params: ParamStore,
    dense: EqDense,
    base_conv: Conv2d,
    blocks: Vec<GBlock>,
    to_rgb: Vec<Conv2d>,
}

impl PganGenerator {
    pub fn new(cfg: &PganConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let mut rng = seeded_rng(seed);
        let mut params = ParamStore::new();
        let gain = 2f64.sqrt();
        let stages = cfg.schedule.stages();
        let c0 = cfg.channels(stages[0]);
        let s0 = stages[0] as usize;
        let dense = EqDense::new(
            &mut params,
            "pg.g.dense",
            cfg.latent_dim + 2,
            c0 * s0 * s0,
            gain / 4.0,
            &mut rng,
        )?;
        let base_conv = eq_conv(&mut params, "pg.g.base", c0 + 2, c0, 3, gain, &mut rng)?;
        let mut to_rgb = vec![eq_conv(&mut params, "pg.g.rgb0", c0, 3, 1, 1.0, &mut rng)?];
        let mut blocks = Vec::new();
        for (i, pair) in stages.windows(2).enumerate() {
            let (cin, cout) = (cfg.channels(pair[0]), cfg.channels(pair[1]));
            let s = i + 1;
            blocks.push(GBlock {
                conv1: eq_conv(
                    &mut params,
                    &format!("pg.g.b{s}.conv1"),
                    cin + 2,
                    cout,
                    3,
                    gain,
                    &mut rng,
                )?,
                conv2: eq_conv(
                    &mut params,
                    &format!("pg.g.b{s}.conv2"),
                    cout + 2,
                    cout,
                    3,
                    gain,
                    &mut rng,
                )?,
            });
            to_rgb.push(eq_conv(
                &mut params,
                &format!("pg.g.rgb{s}"),
                cout,
                3,
                1,
                1.0,
                &mut rng,
            )?);
        }
        Ok(Self {
            cfg: cfg.clone(),
            params,
            dense,
            base_conv,
            blocks,
            to_rgb,
        })
    }

    pub fn params(&self) -> &ParamStore {
        &self.params
    }

    fn act(&self, x: &Tensor) -> Result<Tensor> {
        pixel_norm(&leaky_relu(x, SLOPE)?)
    }

    /// Images `N×3×res×res` from latents `N×latent_dim` and one-hot labels
    /// `N×2`. With `alpha < 1` the newest block is blended with the
    /// upsampled output of the previous stage.
    pub fn forward(&self, z: &Tensor, labels: &Tensor, res: u32, alpha: f64) -> Result<Tensor> {
        check_alpha(alpha)?;
        let stage = stage_index(&self.cfg, res)?;
        let (n, zd) = z.dims2()?;
        if zd != self.cfg.latent_dim || labels.dims() != [n, 2] {
            return Err(Error::invalid(format!(
                "expected latents N×{} and labels N×2, got {:?} and {:?}",
                self.cfg.latent_dim,
                z.dims(),
                labels.dims()
            )));
        }
        let s0 = self.cfg.schedule.start_res as usize;
        let c0 = self.cfg.channels(self.cfg.schedule.start_res);
        let zin = Tensor::cat(
            &[
                &pixel_norm(&z.unsqueeze(2)?.unsqueeze(3)?)?.flatten_from(1)?,
                labels,
            ],
            1,
        )?;
        let mut h = self.act(&self.dense.forward(&zin)?.reshape((n, c0, s0, s0))?)?;
        h = self.act(
            &self
                .base_conv
                .forward(&condition_concat_batch(&h, labels)?)?,
        )?;
        let mut prev = h.clone();
        for block in &self.blocks[..stage] {
            prev = h.clone();
            let up = upsample2(&h)?;
            h = self.act(&block.conv1.forward(&condition_concat_batch(&up, labels)?)?)?;
            h = self.act(&block.conv2.forward(&condition_concat_batch(&h, labels)?)?)?;
        }
        let new = self.to_rgb[stage].forward(&h)?;
        if stage == 0 || alpha >= 1.0 {
            return Ok(new);
        }
        let old = upsample2(&self.to_rgb[stage - 1].forward(&prev)?)?;
        if alpha <= 0.0 {
            return Ok(old);
        }
        blend(alpha, &new, &old)
    }
}

struct DBlock {
    conv1: Conv2d,
    conv2: Conv2d,
}

/// Label-conditional progressive critic, mirroring [`PganGenerator`].
pub struct PganDiscriminator {
    cfg: PganConfig,
    params: ParamStore,
    from_rgb: Vec<Conv2d>,
    blocks: Vec<DBlock>,
    final_conv: Conv2d,
    dense: EqDense,
    out: EqDense,
}

impl PganDiscriminator {
    pub fn new(cfg: &PganConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let mut rng = seeded_rng(seed);
        let mut params = ParamStore::new();
        let gain = 2f64.sqrt();
        let stages = cfg.schedule.stages();
        let mut from_rgb = Vec::new();
        for (s, &r) in stages.iter().enumerate() {
            from_rgb.push(eq_conv(
                &mut params,
                &format!("pg.d.rgb{s}"),
                3 + 2,
                cfg.channels(r),
                1,
                gain,
                &mut rng,
            )?);
        }
        let mut blocks = Vec::new();
        for (i, pair) in stages.windows(2).enumerate() {
            // Block `s` maps resolution stages[s] down to stages[s-1].
            let (cout, cin) = (cfg.channels(pair[0]), cfg.channels(pair[1]));
            let s = i + 1;
            blocks.push(DBlock {
                conv1: eq_conv(
                    &mut params,
                    &format!("pg.d.b{s}.conv1"),
                    cin + 2,
                    cin,
                    3,
                    gain,
                    &mut rng,
                )?,
                conv2: eq_conv(
                    &mut params,
                    &format!("pg.d.b{s}.conv2"),
                    cin + 2,
                    cout,
                    3,
                    gain,
                    &mut rng,
                )?,
            });
        }
        let c0 = cfg.channels(stages[0]);
        let s0 = stages[0] as usize;
        let final_conv = eq_conv(&mut params, "pg.d.final", c0 + 1 + 2, c0, 3, gain, &mut rng)?;
        let dense = EqDense::new(
            &mut params,
            "pg.d.dense",
            c0 * s0 * s0 + 2,
            c0,
            gain,
            &mut rng,
        )?;
        let out = EqDense::new(&mut params, "pg.d.out", c0, 1, 1.0, &mut rng)?;
        Ok(Self {
            cfg: cfg.clone(),
            params,
            from_rgb,
            blocks,
            final_conv,
            dense,
            out,
        })
    }

    pub fn params(&self) -> &ParamStore {
        &self.params
    }

    fn rgb(&self, stage: usize, img: &Tensor, labels: &Tensor) -> Result<Tensor> {
        leaky_relu(
            &self.from_rgb[stage].forward(&condition_concat_batch(img, labels)?)?,
            SLOPE,
        )
    }

    fn block(&self, stage: usize, h: &Tensor, labels: &Tensor) -> Result<Tensor> {
        let b = &self.blocks[stage - 1];
        let h = leaky_relu(
            &b.conv1.forward(&condition_concat_batch(h, labels)?)?,
            SLOPE,
        )?;
        let h = leaky_relu(
            &b.conv2.forward(&condition_concat_batch(&h, labels)?)?,
            SLOPE,
        )?;
        downsample2(&h)
    }

    /// Critic scores `N` for images `N×3×res×res`. With `alpha < 1` the new
    /// input path is blended with the previous stage's path on the
    /// downsampled image.
    pub fn forward(&self, img: &Tensor, labels: &Tensor, res: u32, alpha: f64) -> Result<Tensor> {
        check_alpha(alpha)?;
        let stage = stage_index(&self.cfg, res)?;
        let (n, c, h, w) = img.dims4()?;
        if c != 3 || h != res as usize || w != res as usize || labels.dims() != [n, 2] {
            return Err(Error::invalid(format!(
                "expected N×3×{res}×{res} images and N×2 labels, got {:?} and {:?}",
                img.dims(),
                labels.dims()
            )));
        }
        let mut x = if stage == 0 {
            self.rgb(0, img, labels)?
        } else {
            let new = if alpha > 0.0 {
                Some(self.block(stage, &self.rgb(stage, img, labels)?, labels)?)
            } else {
                None
            };
            let old = if alpha < 1.0 {
                Some(self.rgb(stage - 1, &downsample2(img)?, labels)?)
            } else {
                None
            };
            match (new, old) {
                (Some(a), Some(b)) => blend(alpha, &a, &b)?,
                (Some(a), None) => a,
                (None, Some(b)) => b,
                (None, None) => unreachable!("alpha is in [0, 1]"),
            }
        };
        for s in (1..stage).rev() {
            x = self.block(s, &x, labels)?;
        }
        let x = minibatch_stddev(&x)?;
        let x = leaky_relu(
            &self
                .final_conv
                .forward(&condition_concat_batch(&x, labels)?)?,
            SLOPE,
        )?;
        let flat = Tensor::cat(&[&x.flatten_from(1)?, labels], 1)?;
        let x = leaky_relu(&self.dense.forward(&flat)?, SLOPE)?;
        Ok(self.out.forward(&x)?.squeeze(D::Minus1)?)
    }
}

/// Real images shown to the critic during a fade: the same blend of the
/// sharp image and its upsampled half-resolution copy that the generator
/// produces.
pub fn blend_real(img: &Tensor, alpha: f64) -> Result<Tensor> {
    check_alpha(alpha)?;
    if alpha >= 1.0 {
        return Ok(img.clone());
    }
    let low = upsample2(&downsample2(img)?)?;
    blend(alpha, img, &low)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::proggan::ResolutionSchedule;
    use candle_core::{DType, Device};

    fn tiny() -> PganConfig {
        PganConfig {
            latent_dim: 8,
            fmap_base: 32,
            fmap_max: 8,
            schedule: ResolutionSchedule {
                target_res: 16,
                fade_epochs: 1,
                stable_epochs: 1,
                initial_stable_epochs: 1,
                ..Default::default()
            },
            ..Default::default()
        }
    }

    #[test]
    fn output_shapes_per_stage() {
        let cfg = tiny();
        let g = PganGenerator::new(&cfg, 1).unwrap();
        let d = PganDiscriminator::new(&cfg, 2).unwrap();
        let z = Tensor::randn(0f32, 1.0, (3, 8), &Device::Cpu).unwrap();
        let labels = Tensor::new(&[[1f32, 0.], [0., 1.], [0., 1.]], &Device::Cpu).unwrap();
        for res in [4u32, 8, 16] {
            let img = g.forward(&z, &labels, res, 0.5).unwrap();
            assert_eq!(img.dims(), &[3, 3, res as usize, res as usize]);
            assert_eq!(d.forward(&img, &labels, res, 0.5).unwrap().dims(), &[3]);
        }
        assert!(g.forward(&z, &labels, 32, 1.0).is_err());
    }

    #[test]
    fn pixel_norm_gives_unit_rms() {
        let x = Tensor::randn(0f32, 3.0, (2, 5, 3, 3), &Device::Cpu).unwrap();
        let rms = pixel_norm(&x)
            .unwrap()
            .sqr()
            .unwrap()
            .mean_keepdim(1)
            .unwrap();
        let v = rms.flatten_all().unwrap().to_vec1::<f32>().unwrap();
        assert!(v.iter().all(|&a| (a - 1.0).abs() < 1e-4));
    }

    #[test]
    fn stddev_plane_is_constant_and_zero_for_identical_samples() {
        let x = Tensor::ones((4, 2, 3, 3), DType::F32, &Device::Cpu).unwrap();
        let y = minibatch_stddev(&x).unwrap();
        assert_eq!(y.dims(), &[4, 3, 3, 3]);
        let plane = y
            .narrow(1, 2, 1)
            .unwrap()
            .flatten_all()
            .unwrap()
            .to_vec1::<f32>()
            .unwrap();
        assert!(plane.iter().all(|&v| (v - 1e-4).abs() < 1e-6));
    }
}

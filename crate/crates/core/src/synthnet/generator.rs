use candle_core::Tensor;
use serde::{Deserialize, Serialize};

use super::nn::{
    instance_norm, seeded_rng, Conv2d, ConvTranspose2d, LayerSpec, Padding, ParamStore,
};
use crate::error::{Error, Result};

/// Weight init standard deviation for both networks.
pub const INIT_STD: f64 = 0.02;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GeneratorConfig {
    /// One-hot label planes plus the optional boundary plane.
    pub input_channels: usize,
    pub output_channels: usize,
    pub base_channels: usize,
    pub num_downsamples: usize,
    pub num_residual_blocks: usize,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        Self {
            input_channels: 9,
            output_channels: 3,
            base_channels: 64,
            num_downsamples: 4,
            num_residual_blocks: 9,
        }
    }
}

impl GeneratorConfig {
    pub fn validate(&self) -> Result<()> {
        if self.input_channels == 0 || self.output_channels == 0 || self.base_channels == 0 {
            return Err(Error::invalid("generator channel counts must be positive"));
        }
        if self.num_downsamples > 12 {
            return Err(Error::invalid("generator supports at most 12 downsamples"));
        }
        self.base_channels
            .checked_mul(1 << self.num_downsamples)
            .filter(|&c| c <= 1 << 16)
            .ok_or_else(|| Error::invalid("generator bottleneck width overflows"))?;
        Ok(())
    }

    /// Input height and width must be multiples of this.
    pub fn spatial_multiple(&self) -> usize {
        1 << self.num_downsamples
    }
}

struct ResidualBlock {
    first: Conv2d,
    second: Conv2d,
}

/// Coarse-to-fine global generator: wide input conv, strided downsampling,
/// residual bottleneck, transposed-conv upsampling, wide output conv + tanh.
pub struct Generator {
    cfg: GeneratorConfig,
    params: ParamStore,
    input: Conv2d,
    down: Vec<Conv2d>,
    blocks: Vec<ResidualBlock>,
    up: Vec<ConvTranspose2d>,
    output: Conv2d,
}

/// Builds a generator with weights drawn from `N(0, 0.02²)` using `seed`.
pub fn build_generator(cfg: &GeneratorConfig, seed: u64) -> Result<Generator> {
    Generator::new(cfg, seed)
}

impl Generator {
    pub fn new(cfg: &GeneratorConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let mut rng = seeded_rng(seed);
        let mut p = ParamStore::new();
        let ngf = cfg.base_channels;
        // Convolutions followed by instance norm carry no bias: the norm
        // cancels any per-channel constant.
        let input = Conv2d::new(
            &mut p,
            "g.input",
            cfg.input_channels,
            ngf,
            7,
            1,
            Padding::Reflect(3),
            false,
            INIT_STD,
            &mut rng,
        )?;
        let mut down = Vec::new();
        for i in 0..cfg.num_downsamples {
            let c = ngf << i;
            down.push(Conv2d::new(
                &mut p,
                &format!("g.down{i}"),
                c,
                c * 2,
                3,
                2,
                Padding::Zero(1),
                false,
                INIT_STD,
                &mut rng,
            )?);
        }
        let width = ngf << cfg.num_downsamples;
        let mut blocks = Vec::new();
        for i in 0..cfg.num_residual_blocks {
            let first = Conv2d::new(
                &mut p,
                &format!("g.res{i}.conv1"),
                width,
                width,
                3,
                1,
                Padding::Reflect(1),
                false,
                INIT_STD,
                &mut rng,
            )?;
            let second = Conv2d::new(
                &mut p,
                &format!("g.res{i}.conv2"),
                width,
                width,
                3,
                1,
                Padding::Reflect(1),
                false,
                INIT_STD,
                &mut rng,
            )?;
            blocks.push(ResidualBlock { first, second });
        }
        let mut up = Vec::new();
        for i in 0..cfg.num_downsamples {
            let c = ngf << (cfg.num_downsamples - i);
            up.push(ConvTranspose2d::new(
                &mut p,
                &format!("g.up{i}"),
                c,
                c / 2,
                3,
                2,
                1,
                1,
                false,
                INIT_STD,
                &mut rng,
            )?);
        }
        let output = Conv2d::new(
            &mut p,
            "g.output",
            ngf,
            cfg.output_channels,
            7,
            1,
            Padding::Reflect(3),
            true,
            INIT_STD,
            &mut rng,
        )?;
        Ok(Self {
            cfg: cfg.clone(),
            params: p,
            input,
            down,
            blocks,
            up,
            output,
        })
    }

    pub fn config(&self) -> &GeneratorConfig {
        &self.cfg
    }

    pub fn params(&self) -> &ParamStore {
        &self.params
    }

    /// `k/n/s` of every convolution in evaluation order.
    pub fn layer_specs(&self) -> Vec<LayerSpec> {
        let mut specs = vec![self.input.spec()];
        specs.extend(self.down.iter().map(Conv2d::spec));
        for b in &self.blocks {
            specs.push(b.first.spec());
            specs.push(b.second.spec());
        }
        specs.extend(self.up.iter().map(ConvTranspose2d::spec));
        specs.push(self.output.spec());
        specs
    }

    /// Maps an `N×C×H×W` conditioning batch to `N×3×H×W` images in `[-1,1]`.
    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let (_, c, h, w) = x.dims4().map_err(|_| {
            Error::invalid(format!("generator expects N×C×H×W, got {:?}", x.dims()))
        })?;
        if c != self.cfg.input_channels {
            return Err(Error::invalid(format!(
                "generator expects {} input channels, got {c}",
                self.cfg.input_channels
            )));
        }
        let m = self.cfg.spatial_multiple();
        if h % m != 0 || w % m != 0 {
            return Err(Error::invalid(format!(
                "spatial size {h}x{w} is not divisible by {m}"
            )));
        }
        let mut y = instance_norm(&self.input.forward(x)?)?.relu()?;
        for conv in &self.down {
            y = instance_norm(&conv.forward(&y)?)?.relu()?;
        }
        for b in &self.blocks {
            let r = instance_norm(&b.first.forward(&y)?)?.relu()?;
            let r = instance_norm(&b.second.forward(&r)?)?;
            y = (y + r)?;
        }
        for conv in &self.up {
            y = instance_norm(&conv.forward(&y)?)?.relu()?;
        }
        Ok(self.output.forward(&y)?.tanh()?)
    }
}

/// Free-function form of [`Generator::forward`].
pub fn generator_forward(g: &Generator, x: &Tensor) -> Result<Tensor> {
    g.forward(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use candle_core::{DType, Device};

    fn desk() -> GeneratorConfig {
        GeneratorConfig {
            input_channels: 9,
            output_channels: 3,
            base_channels: 4,
            num_downsamples: 2,
            num_residual_blocks: 1,
        }
    }

    #[test]
    fn default_topology_has_28_convolutions() {
        let cfg = GeneratorConfig {
            base_channels: 1,
            ..GeneratorConfig::default()
        };
        let g = Generator::new(&cfg, 0).unwrap();
        let specs = g.layer_specs();
        assert_eq!(specs.len(), 1 + 4 + 9 * 2 + 4 + 1);
        let encoder: Vec<usize> = specs[..5].iter().map(|s| s.n).collect();
        assert_eq!(encoder, vec![1, 2, 4, 8, 16]);
        assert_eq!(specs[0], LayerSpec { k: 7, n: 1, s: 1 });
        assert_eq!(specs.last().unwrap(), &LayerSpec { k: 7, n: 3, s: 1 });
    }

    #[test]
    fn no_residual_blocks_still_maps_shapes() {
        let cfg = GeneratorConfig {
            num_residual_blocks: 0,
            ..desk()
        };
        let g = Generator::new(&cfg, 0).unwrap();
        let x = Tensor::zeros((1, 9, 16, 8), DType::F32, &Device::Cpu).unwrap();
        assert_eq!(g.forward(&x).unwrap().dims(), &[1, 3, 16, 8]);
    }

    #[test]
    fn rejects_indivisible_input() {
        let g = Generator::new(&desk(), 0).unwrap();
        let x = Tensor::zeros((1, 9, 10, 8), DType::F32, &Device::Cpu).unwrap();
        assert!(matches!(g.forward(&x), Err(Error::InvalidArgument(_))));
        let x = Tensor::zeros((1, 8, 16, 8), DType::F32, &Device::Cpu).unwrap();
        assert!(matches!(g.forward(&x), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn rejects_zero_width_config() {
        let cfg = GeneratorConfig {
            base_channels: 0,
            ..desk()
        };
        assert!(matches!(
            Generator::new(&cfg, 0),
            Err(Error::InvalidArgument(_))
        ));
    }
}

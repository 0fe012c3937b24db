//! Small layer toolkit on top of `candle-core`: named parameter storage,
//! padded convolutions, transposed convolutions and instance normalization.

use candle_core::{DType, Device, Tensor, Var, D};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Kernel size `k`, output channels `n` and stride `s` of one convolution.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerSpec {
    pub k: usize,
    pub n: usize,
    pub s: usize,
}

/// Trainable tensors in creation order, addressed by dotted names.
#[derive(Debug, Clone, Default)]
pub struct ParamStore {
    entries: Vec<(String, Var)>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    fn push(&mut self, name: String, var: Var) -> Result<Var> {
        if self.entries.iter().any(|(n, _)| *n == name) {
            return Err(Error::invalid(format!("duplicate parameter `{name}`")));
        }
        self.entries.push((name, var.clone()));
        Ok(var)
    }

    /// Gaussian-initialized parameter.
    pub fn normal(
        &mut self,
        name: impl Into<String>,
        shape: &[usize],
        std: f64,
        rng: &mut ChaCha8Rng,
    ) -> Result<Var> {
        let count: usize = shape.iter().product();
        let dist = Normal::new(0.0f32, std as f32).map_err(|e| Error::invalid(e.to_string()))?;
        let data: Vec<f32> = (0..count).map(|_| dist.sample(rng)).collect();
        let var = Var::from_tensor(&Tensor::from_vec(data, shape, &Device::Cpu)?)?;
        self.push(name.into(), var)
    }

    pub fn constant(
        &mut self,
        name: impl Into<String>,
        shape: &[usize],
        value: f32,
    ) -> Result<Var> {
        let t = Tensor::full(value, shape, &Device::Cpu)?;
        self.push(name.into(), Var::from_tensor(&t)?)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Var)> {
        self.entries.iter().map(|(n, v)| (n.as_str(), v))
    }

    pub fn vars(&self) -> Vec<Var> {
        self.entries.iter().map(|(_, v)| v.clone()).collect()
    }

    pub fn get(&self, name: &str) -> Option<&Var> {
        self.entries.iter().find(|(n, _)| n == name).map(|(_, v)| v)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Total number of scalar parameters.
    pub fn num_elements(&self) -> usize {
        self.entries.iter().map(|(_, v)| v.elem_count()).sum()
    }

    pub fn extend(&mut self, other: &ParamStore) -> Result<()> {
        for (name, var) in &other.entries {
            self.push(name.clone(), var.clone())?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Padding {
    Zero(usize),
    Reflect(usize),
}

/// 2-D convolution with optional bias and a runtime weight multiplier
/// (1.0 except for equalized-learning-rate layers).
#[derive(Debug, Clone)]
pub struct Conv2d {
    weight: Var,
    bias: Option<Var>,
    stride: usize,
    padding: Padding,
    scale: f64,
    spec: LayerSpec,
}

impl Conv2d {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        params: &mut ParamStore,
        name: &str,
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        stride: usize,
        padding: Padding,
        bias: bool,
        init_std: f64,
        rng: &mut ChaCha8Rng,
    ) -> Result<Self> {
        if in_channels == 0 || out_channels == 0 || kernel == 0 || stride == 0 {
            return Err(Error::invalid(format!(
                "conv `{name}` needs positive channels, kernel and stride"
            )));
        }
        let weight = params.normal(
            format!("{name}.weight"),
            &[out_channels, in_channels, kernel, kernel],
            init_std,
            rng,
        )?;
        let bias = if bias {
            Some(params.constant(format!("{name}.bias"), &[out_channels], 0.0)?)
        } else {
            None
        };
        Ok(Self {
            weight,
            bias,
            stride,
            padding,
            scale: 1.0,
            spec: LayerSpec {
                k: kernel,
                n: out_channels,
                s: stride,
            },
        })
    }

    /// Sets the constant the weight is multiplied by at every forward pass.
    pub fn with_weight_scale(mut self, scale: f64) -> Self {
        self.scale = scale;
        self
    }

    pub fn spec(&self) -> LayerSpec {
        self.spec
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let (x, pad) = match self.padding {
            Padding::Zero(p) => (x.clone(), p),
            Padding::Reflect(p) => (reflect_pad(x, p)?, 0),
        };
        let w = if self.scale == 1.0 {
            self.weight.as_tensor().clone()
        } else {
            (self.weight.as_tensor() * self.scale)?
        };
        let y = x.conv2d(&w, pad, self.stride, 1, 1)?;
        add_channel_bias(y, self.bias.as_ref())
    }
}

/// Transposed convolution (`weight` laid out `in×out×k×k`).
///
/// Evaluated as a stride-1 convolution over the zero-dilated input with the
/// flipped, transposed kernel; this keeps the work on the im2col path.
#[derive(Debug, Clone)]
pub struct ConvTranspose2d {
    weight: Var,
    bias: Option<Var>,
    stride: usize,
    padding: usize,
    output_padding: usize,
    spec: LayerSpec,
}

impl ConvTranspose2d {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        params: &mut ParamStore,
        name: &str,
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
        output_padding: usize,
        bias: bool,
        init_std: f64,
        rng: &mut ChaCha8Rng,
    ) -> Result<Self> {
        if padding >= kernel || output_padding >= stride {
            return Err(Error::invalid(format!(
                "transposed conv `{name}`: padding must be < kernel and output padding < stride"
            )));
        }
        let weight = params.normal(
            format!("{name}.weight"),
            &[in_channels, out_channels, kernel, kernel],
            init_std,
            rng,
        )?;
        let bias = if bias {
            Some(params.constant(format!("{name}.bias"), &[out_channels], 0.0)?)
        } else {
            None
        };
        Ok(Self {
            weight,
            bias,
            stride,
            padding,
            output_padding,
            spec: LayerSpec {
                k: kernel,
                n: out_channels,
                s: stride,
            },
        })
    }

    pub fn spec(&self) -> LayerSpec {
        self.spec
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let y = conv_transpose2d(
            x,
            self.weight.as_tensor(),
            self.stride,
            self.padding,
            self.output_padding,
        )?;
        add_channel_bias(y, self.bias.as_ref())
    }
}

/// Transposed convolution via dilation + ordinary convolution. Matches
/// `Tensor::conv_transpose2d(x, w, padding, output_padding, stride, 1)`.
pub fn conv_transpose2d(
    x: &Tensor,
    weight: &Tensor,
    stride: usize,
    padding: usize,
    output_padding: usize,
) -> Result<Tensor> {
    let (_, _, k, _) = weight.dims4()?;
    let (n, c, h, w) = x.dims4()?;
    let dilated = if stride == 1 {
        x.clone()
    } else {
        let s = stride;
        // Interleave s-1 zero columns, then zero rows.
        let cols = x
            .unsqueeze(4)?
            .pad_with_zeros(4, 0, s - 1)?
            .reshape((n, c, h, w * s))?
            .narrow(3, 0, (w - 1) * s + 1)?;
        let w2 = (w - 1) * s + 1;
        cols.unsqueeze(3)?
            .pad_with_zeros(3, 0, s - 1)?
            .reshape((n, c, h * s, w2))?
            .narrow(2, 0, (h - 1) * s + 1)?
    };
    let lo = k - 1 - padding;
    let hi = lo + output_padding;
    let padded = dilated
        .pad_with_zeros(2, lo, hi)?
        .pad_with_zeros(3, lo, hi)?;
    let flip = Tensor::from_vec((0..k as u32).rev().collect::<Vec<_>>(), k, x.device())?;
    let kernel = weight
        .transpose(0, 1)?
        .contiguous()?
        .index_select(&flip, 2)?
        .index_select(&flip, 3)?
        .contiguous()?;
    Ok(padded.conv2d(&kernel, 0, 1, 1, 1)?)
}

fn add_channel_bias(y: Tensor, bias: Option<&Var>) -> Result<Tensor> {
    match bias {
        Some(b) => {
            let c = b.dim(0)?;
            Ok(y.broadcast_add(&b.as_tensor().reshape((1, c, 1, 1))?)?)
        }
        None => Ok(y),
    }
}

fn reflect_index(i: isize, n: usize) -> u32 {
    if n == 1 {
        return 0;
    }
    let period = 2 * (n as isize - 1);
    let mut m = i.rem_euclid(period);
    if m >= n as isize {
        m = period - m;
    }
    m as u32
}

/// Mirror padding (edge pixel not repeated) of the two spatial dims.
pub fn reflect_pad(x: &Tensor, pad: usize) -> Result<Tensor> {
    if pad == 0 {
        return Ok(x.clone());
    }
    let mut out = x.contiguous()?;
    for dim in [2usize, 3] {
        let n = out.dim(dim)?;
        let idx: Vec<u32> = (-(pad as isize)..(n + pad) as isize)
            .map(|i| reflect_index(i, n))
            .collect();
        let len = idx.len();
        let idx = Tensor::from_vec(idx, len, x.device())?;
        out = out.index_select(&idx, dim)?;
    }
    Ok(out)
}

/// Per-sample, per-channel normalization over the spatial dims (no affine).
pub fn instance_norm(x: &Tensor) -> Result<Tensor> {
    const EPS: f64 = 1e-5;
    let mean = x.mean_keepdim(D::Minus1)?.mean_keepdim(D::Minus2)?;
    let centered = x.broadcast_sub(&mean)?;
    let var = centered
        .sqr()?
        .mean_keepdim(D::Minus1)?
        .mean_keepdim(D::Minus2)?;
    Ok(centered.broadcast_div(&(var + EPS)?.sqrt()?)?)
}

pub fn leaky_relu(x: &Tensor, slope: f64) -> Result<Tensor> {
    Ok((x.relu()? - (x.neg()?.relu()? * slope)?)?)
}

/// 3×3 average pooling with stride 2 over a reflect-padded input; halves
/// even spatial dims exactly.
pub fn avg_pool_half(x: &Tensor) -> Result<Tensor> {
    // Separable box sums plus strided row/column picks, which keeps the op
    // differentiable (the native pool has no backward when ksize != stride).
    let mut out = reflect_pad(x, 1)?;
    for dim in [2usize, 3] {
        let n = out.dim(dim)? - 2;
        let sum = ((out.narrow(dim, 0, n)? + out.narrow(dim, 1, n)?)? + out.narrow(dim, 2, n)?)?;
        let idx: Vec<u32> = (0..n as u32).step_by(2).collect();
        let len = idx.len();
        let idx = Tensor::from_vec(idx, len, x.device())?;
        out = sum.contiguous()?.index_select(&idx, dim)?;
    }
    Ok((out / 9.0)?)
}

/// Copies a tensor's values out as `f32`.
pub fn to_f32_vec(t: &Tensor) -> Result<Vec<f32>> {
    Ok(t.to_dtype(DType::F32)?.flatten_all()?.to_vec1::<f32>()?)
}

/// Scalar tensor to `f64`.
pub fn scalar(t: &Tensor) -> Result<f64> {
    Ok(t.to_dtype(DType::F64)?.to_scalar::<f64>()?)
}

pub(crate) fn seeded_rng(seed: u64) -> ChaCha8Rng {
    use rand::SeedableRng;
    ChaCha8Rng::seed_from_u64(seed)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reflect_pad_mirrors_without_edge_repeat() {
        let x = Tensor::from_vec(vec![1f32, 2., 3.], (1, 1, 1, 3), &Device::Cpu).unwrap();
        let y = reflect_pad(&x, 2).unwrap();
        // Rows: single row reflects onto itself.
        assert_eq!(y.dims4().unwrap(), (1, 1, 5, 7));
        let row: Vec<f32> = y
            .get(0)
            .unwrap()
            .get(0)
            .unwrap()
            .get(0)
            .unwrap()
            .to_vec1()
            .unwrap();
        assert_eq!(row, vec![3., 2., 1., 2., 3., 2., 1.]);
    }

    #[test]
    fn transposed_conv_matches_native() {
        let mut rng = seeded_rng(3);
        let mut ps = ParamStore::new();
        let w = ps.normal("w", &[4, 5, 3, 3], 1.0, &mut rng).unwrap();
        let x = ps.normal("x", &[2, 4, 3, 5], 1.0, &mut rng).unwrap();
        for (stride, pad, out_pad) in [(2, 1, 1), (2, 0, 0), (1, 1, 0), (3, 2, 1)] {
            let ours =
                conv_transpose2d(x.as_tensor(), w.as_tensor(), stride, pad, out_pad).unwrap();
            let native = x
                .as_tensor()
                .conv_transpose2d(w.as_tensor(), pad, out_pad, stride, 1)
                .unwrap();
            assert_eq!(ours.dims(), native.dims());
            let diff = (ours - native).unwrap().abs().unwrap().max_all().unwrap();
            assert!(diff.to_scalar::<f32>().unwrap() < 1e-4);
        }
    }

    #[test]
    fn instance_norm_gives_zero_mean_unit_variance() {
        let mut rng = seeded_rng(1);
        let mut ps = ParamStore::new();
        let x = ps.normal("x", &[2, 3, 8, 8], 3.0, &mut rng).unwrap();
        let y = instance_norm(x.as_tensor()).unwrap();
        let mean = y.mean_keepdim(3).unwrap().mean_keepdim(2).unwrap();
        assert!(to_f32_vec(&mean).unwrap().iter().all(|m| m.abs() < 1e-5));
        let var = y
            .sqr()
            .unwrap()
            .mean_keepdim(3)
            .unwrap()
            .mean_keepdim(2)
            .unwrap();
        assert!(to_f32_vec(&var)
            .unwrap()
            .iter()
            .all(|v| (v - 1.0).abs() < 1e-3));
    }

    #[test]
    fn leaky_relu_slopes() {
        let x = Tensor::new(&[-2f32, 0., 3.], &Device::Cpu).unwrap();
        assert_eq!(
            leaky_relu(&x, 0.2).unwrap().to_vec1::<f32>().unwrap(),
            vec![-0.4, 0., 3.]
        );
    }

    #[test]
    fn avg_pool_half_matches_native_pool() {
        let x = Tensor::randn(0f32, 1.0, (2, 3, 8, 6), &Device::Cpu).unwrap();
        let ours = to_f32_vec(&avg_pool_half(&x).unwrap()).unwrap();
        let native = reflect_pad(&x, 1)
            .unwrap()
            .avg_pool2d_with_stride((3, 3), (2, 2))
            .unwrap();
        assert_eq!(native.dims(), &[2, 3, 4, 3]);
        for (a, b) in ours.iter().zip(to_f32_vec(&native).unwrap()) {
            assert!((a - b).abs() < 1e-5);
        }
    }
}

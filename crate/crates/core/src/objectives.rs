//! Least-squares adversarial losses and the discriminator feature-matching
//! loss. All functions work on tensors of any float dtype.

use candle_core::Tensor;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::synthnet::nn::scalar;
use crate::synthnet::FeaturePyramid;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LossWeights {
    /// Weight of the feature-matching term in the generator objective.
    pub lambda_fm: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self { lambda_fm: 10.0 }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda_fm.is_finite() && self.lambda_fm >= 0.0) {
            return Err(Error::invalid("lambda_fm must be finite and non-negative"));
        }
        Ok(())
    }
}

/// Scalar loss components of one training step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossReport {
    pub g_gan: f64,
    pub g_fm: f64,
    pub d_real: f64,
    pub d_fake: f64,
}

impl LossReport {
    pub fn g_total(&self, weights: &LossWeights) -> f64 {
        self.g_gan + weights.lambda_fm * self.g_fm
    }

    pub fn d_total(&self) -> f64 {
        self.d_real + self.d_fake
    }

    pub fn is_finite(&self) -> bool {
        [self.g_gan, self.g_fm, self.d_real, self.d_fake]
            .iter()
            .all(|v| v.is_finite())
    }
}

fn sum_scalars(terms: Vec<Tensor>) -> Result<Tensor> {
    let mut it = terms.into_iter();
    let first = it
        .next()
        .ok_or_else(|| Error::invalid("loss needs at least one scale"))?;
    it.try_fold(first, |acc, t| Ok((acc + t)?))
}

/// `Σ_scales 0.5·mean((real−1)²)` and `Σ_scales 0.5·mean(fake²)`.
pub fn lsgan_d_terms(real_logits: &[Tensor], fake_logits: &[Tensor]) -> Result<(Tensor, Tensor)> {
    if real_logits.len() != fake_logits.len() {
        return Err(Error::invalid(format!(
            "{} real scales vs {} fake scales",
            real_logits.len(),
            fake_logits.len()
        )));
    }
    let real = real_logits
        .iter()
        .map(|r| Ok(((r - 1.0)?.sqr()?.mean_all()? * 0.5)?))
        .collect::<Result<Vec<_>>>()?;
    let fake = fake_logits
        .iter()
        .map(|f| Ok((f.sqr()?.mean_all()? * 0.5)?))
        .collect::<Result<Vec<_>>>()?;
    Ok((sum_scalars(real)?, sum_scalars(fake)?))
}

pub fn lsgan_d_loss(real_logits: &[Tensor], fake_logits: &[Tensor]) -> Result<Tensor> {
    let (real, fake) = lsgan_d_terms(real_logits, fake_logits)?;
    Ok((real + fake)?)
}

/// `Σ_scales mean((fake−1)²)`.
pub fn lsgan_g_loss(fake_logits: &[Tensor]) -> Result<Tensor> {
    let terms = fake_logits
        .iter()
        .map(|f| Ok((f - 1.0)?.sqr()?.mean_all()?))
        .collect::<Result<Vec<_>>>()?;
    sum_scalars(terms)
}

/// Per scale, the mean absolute difference of each intermediate feature map
/// averaged over layers; summed over scales.
pub fn feature_matching(real: &FeaturePyramid, fake: &FeaturePyramid) -> Result<Tensor> {
    let real: Vec<&[Tensor]> = real.scales.iter().map(|s| s.features.as_slice()).collect();
    let fake: Vec<&[Tensor]> = fake.scales.iter().map(|s| s.features.as_slice()).collect();
    feature_matching_layers(&real, &fake)
}

/// [`feature_matching`] over bare per-scale feature lists.
pub fn feature_matching_layers(real: &[&[Tensor]], fake: &[&[Tensor]]) -> Result<Tensor> {
    if real.len() != fake.len() {
        return Err(Error::invalid(format!(
            "feature pyramids have {} and {} scales",
            real.len(),
            fake.len()
        )));
    }
    let mut per_scale = Vec::with_capacity(real.len());
    for (i, (r, f)) in real.iter().zip(fake).enumerate() {
        if r.len() != f.len() {
            return Err(Error::invalid(format!(
                "scale {i}: {} real layers vs {} fake layers",
                r.len(),
                f.len()
            )));
        }
        if r.is_empty() {
            continue;
        }
        let mut layers = Vec::with_capacity(r.len());
        for (j, (a, b)) in r.iter().zip(f.iter()).enumerate() {
            if a.dims() != b.dims() {
                return Err(Error::invalid(format!(
                    "scale {i} layer {j}: shapes {:?} and {:?} differ",
                    a.dims(),
                    b.dims()
                )));
            }
            layers.push((a - b)?.abs()?.mean_all()?);
        }
        let n = layers.len() as f64;
        per_scale.push((sum_scalars(layers)? / n)?);
    }
    if per_scale.is_empty() {
        let probe = real
            .iter()
            .find_map(|r| r.first())
            .ok_or_else(|| Error::invalid("feature pyramids contain no layers"))?;
        return Ok(Tensor::zeros((), probe.dtype(), probe.device())?);
    }
    sum_scalars(per_scale)
}

/// Differentiable totals plus their scalar breakdown.
#[derive(Debug, Clone)]
pub struct LossTerms {
    pub g_total: Tensor,
    pub d_total: Tensor,
    pub report: LossReport,
}

/// Combines both objectives from one evaluation of the discriminator on real
/// and on synthesized images: `g = g_gan + λ·g_fm`, `d = d_real + d_fake`.
pub fn total_losses(
    real: &FeaturePyramid,
    fake: &FeaturePyramid,
    weights: &LossWeights,
) -> Result<LossTerms> {
    let g_gan = lsgan_g_loss(&fake.logits())?;
    let g_fm = feature_matching(real, fake)?;
    let (d_real, d_fake) = lsgan_d_terms(&real.logits(), &fake.logits())?;
    let report = LossReport {
        g_gan: scalar(&g_gan)?,
        g_fm: scalar(&g_fm)?,
        d_real: scalar(&d_real)?,
        d_fake: scalar(&d_fake)?,
    };
    let g_total = if weights.lambda_fm == 0.0 {
        g_gan
    } else {
        (g_gan + (g_fm * weights.lambda_fm)?)?
    };
    Ok(LossTerms {
        g_total,
        d_total: (d_real + d_fake)?,
        report,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthnet::ScaleOutput;
    use candle_core::Device;

    fn full(v: f64, n: usize) -> Tensor {
        Tensor::full(v, (1, 1, n, n), &Device::Cpu).unwrap()
    }

    fn s(t: Tensor) -> f64 {
        scalar(&t).unwrap()
    }

    #[test]
    fn d_loss_closed_forms() {
        assert_eq!(
            s(lsgan_d_loss(&[full(1.0, 4)], &[full(0.0, 4)]).unwrap()),
            0.0
        );
        assert_eq!(
            s(lsgan_d_loss(&[full(0.0, 4)], &[full(1.0, 4)]).unwrap()),
            1.0
        );
        let opt = lsgan_d_loss(&[full(1.0, 4), full(1.0, 2)], &[full(0.0, 4), full(0.0, 2)]);
        assert_eq!(s(opt.unwrap()), 0.0);
    }

    #[test]
    fn g_loss_closed_forms() {
        assert_eq!(s(lsgan_g_loss(&[full(1.0, 4)]).unwrap()), 0.0);
        assert_eq!(s(lsgan_g_loss(&[full(0.0, 4)]).unwrap()), 1.0);
        assert_eq!(s(lsgan_g_loss(&[full(0.5, 4)]).unwrap()), 0.25);
    }

    fn pyramid(features: Vec<Vec<Tensor>>) -> FeaturePyramid {
        FeaturePyramid {
            scales: features
                .into_iter()
                .map(|f| ScaleOutput {
                    features: f,
                    logits: full(1.0, 2),
                })
                .collect(),
        }
    }

    #[test]
    fn feature_matching_closed_forms() {
        let ones = pyramid(vec![vec![full(1.0, 3)]]);
        let zeros = pyramid(vec![vec![full(0.0, 3)]]);
        assert_eq!(s(feature_matching(&ones, &zeros).unwrap()), 1.0);
        assert_eq!(s(feature_matching(&zeros, &ones).unwrap()), 1.0);
        assert_eq!(s(feature_matching(&ones, &ones).unwrap()), 0.0);
    }

    #[test]
    fn feature_matching_averages_layers_and_sums_scales() {
        let real = pyramid(vec![vec![full(1.0, 2), full(3.0, 2)], vec![full(0.5, 1)]]);
        let fake = pyramid(vec![vec![full(0.0, 2), full(0.0, 2)], vec![full(0.0, 1)]]);
        // (1 + 3)/2 + 0.5
        assert_eq!(s(feature_matching(&real, &fake).unwrap()), 2.5);
    }

    #[test]
    fn feature_matching_rejects_mismatched_structure() {
        let a = pyramid(vec![vec![full(1.0, 2)]]);
        let b = pyramid(vec![vec![full(1.0, 2), full(1.0, 2)]]);
        assert!(matches!(
            feature_matching(&a, &b),
            Err(Error::InvalidArgument(_))
        ));
        let c = pyramid(vec![vec![full(1.0, 3)]]);
        assert!(matches!(
            feature_matching(&a, &c),
            Err(Error::InvalidArgument(_))
        ));
    }

    #[test]
    fn lambda_scaling() {
        let r = LossReport {
            g_gan: 1.0,
            g_fm: 0.5,
            d_real: 0.0,
            d_fake: 0.0,
        };
        assert_eq!(r.g_total(&LossWeights { lambda_fm: 10.0 }), 6.0);
        assert_eq!(r.g_total(&LossWeights { lambda_fm: 0.0 }), r.g_gan);
    }

    #[test]
    fn totals_vanish_at_optimum() {
        let mut real = pyramid(vec![vec![full(0.3, 2)]]);
        let mut fake = real.clone();
        real.scales[0].logits = full(1.0, 2);
        fake.scales[0].logits = full(0.0, 2);
        let t = total_losses(&real, &fake, &LossWeights::default()).unwrap();
        // Generator loss is not at its optimum when the discriminator is.
        assert_eq!(t.report.d_real, 0.0);
        assert_eq!(t.report.d_fake, 0.0);
        assert_eq!(t.report.g_fm, 0.0);
        fake.scales[0].logits = full(1.0, 2);
        let t = total_losses(&real, &fake, &LossWeights::default()).unwrap();
        assert_eq!((t.report.g_gan, t.report.g_fm), (0.0, 0.0));
    }
}

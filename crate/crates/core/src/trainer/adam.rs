use candle_core::backprop::GradStore;
use candle_core::{Tensor, Var};

use super::checkpoint::{Checkpoint, NamedArray};
use crate::error::{Error, Result};
use crate::synthnet::ParamStore;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamParams {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

/// Adam over a fixed, named parameter list. Moment buffers are kept per
/// parameter so they can be stored in and restored from a [`Checkpoint`].
pub struct Adam {
    name: String,
    params: Vec<(String, Var)>,
    m: Vec<Tensor>,
    v: Vec<Tensor>,
    step: u64,
    pub hp: AdamParams,
}

impl Adam {
    pub fn new(name: impl Into<String>, store: &ParamStore, hp: AdamParams) -> Result<Self> {
        let params: Vec<(String, Var)> = store
            .iter()
            .map(|(n, v)| (n.to_string(), v.clone()))
            .collect();
        let m = params
            .iter()
            .map(|(_, v)| v.as_tensor().zeros_like())
            .collect::<candle_core::Result<Vec<_>>>()?;
        let v = m.clone();
        Ok(Self {
            name: name.into(),
            params,
            m,
            v,
            step: 0,
            hp,
        })
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub fn set_lr(&mut self, lr: f64) {
        self.hp.lr = lr;
    }

    /// One update from `grads`. Parameters without a gradient keep their
    /// value and moments.
    pub fn step(&mut self, grads: &GradStore) -> Result<()> {
        self.step += 1;
        let AdamParams {
            lr,
            beta1,
            beta2,
            eps,
        } = self.hp;
        let bc1 = 1.0 - beta1.powi(self.step as i32);
        let bc2 = 1.0 - beta2.powi(self.step as i32);
        for (i, (_, var)) in self.params.iter().enumerate() {
            let Some(g) = grads.get(var.as_tensor()) else {
                continue;
            };
            // Gradients may carry their own graph when second-order
            // differentiation is enabled; the moments must not.
            let g = &g.detach();
            let m = ((&self.m[i] * beta1)? + (g * (1.0 - beta1))?)?;
            let v = ((&self.v[i] * beta2)? + (g.sqr()? * (1.0 - beta2))?)?;
            let denom = ((&v / bc2)?.sqrt()? + eps)?;
            let update = ((&m / bc1)? / denom)?;
            var.set(&(var.as_tensor() - (update * lr)?)?)?;
            self.m[i] = m;
            self.v[i] = v;
        }
        Ok(())
    }

    pub fn export(&self, ckpt: &mut Checkpoint) -> Result<()> {
        ckpt.counters
            .push((format!("{}.step", self.name), self.step));
        for (i, (pname, _)) in self.params.iter().enumerate() {
            ckpt.tensors.push(NamedArray::from_tensor(
                format!("{}.m.{pname}", self.name),
                &self.m[i],
            )?);
            ckpt.tensors.push(NamedArray::from_tensor(
                format!("{}.v.{pname}", self.name),
                &self.v[i],
            )?);
        }
        Ok(())
    }

    pub fn restore(&mut self, ckpt: &Checkpoint) -> Result<()> {
        self.step = ckpt
            .counter(&format!("{}.step", self.name))
            .ok_or_else(|| Error::Checkpoint(format!("missing counter `{}.step`", self.name)))?;
        for (i, (pname, var)) in self.params.iter().enumerate() {
            for (slot, buf) in [("m", &mut self.m[i]), ("v", &mut self.v[i])] {
                let key = format!("{}.{slot}.{pname}", self.name);
                let arr = ckpt
                    .tensor(&key)
                    .ok_or_else(|| Error::Checkpoint(format!("missing tensor `{key}`")))?;
                if arr.dims != var.dims() {
                    return Err(Error::Checkpoint(format!("tensor `{key}` has wrong shape")));
                }
                *buf = arr.to_tensor()?;
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use candle_core::Device;

    #[test]
    fn first_step_moves_by_lr_against_gradient_sign() {
        let mut store = ParamStore::new();
        let w = store.constant("w", &[3], 1.0).unwrap();
        let mut opt = Adam::new(
            "opt",
            &store,
            AdamParams {
                lr: 0.1,
                beta1: 0.5,
                beta2: 0.999,
                eps: 1e-8,
            },
        )
        .unwrap();
        let c = Tensor::new(&[2f32, -3.0, 0.5], &Device::Cpu).unwrap();
        let loss = (w.as_tensor() * c).unwrap().sum_all().unwrap();
        opt.step(&loss.backward().unwrap()).unwrap();
        let got = w.as_tensor().to_vec1::<f32>().unwrap();
        for (g, want) in got.iter().zip([0.9f32, 1.1, 0.9]) {
            assert!((g - want).abs() < 1e-5, "{got:?}");
        }
    }
}

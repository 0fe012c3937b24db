//! Evaluates the LSGAN and feature-matching objectives on hand-made logits
//! and features.
//!
//! cargo run --example losses

use candle_core::{Device, Tensor};
use lesionsynth::objectives::{
    feature_matching_layers, lsgan_d_loss, lsgan_g_loss, LossReport, LossWeights,
};
use lesionsynth::synthnet::nn::scalar;

fn map(v: f64) -> lesionsynth::Result<Tensor> {
    Ok(Tensor::full(v as f32, (1, 1, 4, 4), &Device::Cpu)?)
}

fn main() -> lesionsynth::Result<()> {
    let real = [map(0.8)?, map(0.6)?];
    let fake = [map(0.3)?, map(-0.2)?];
    let d = scalar(&lsgan_d_loss(&real, &fake)?)?;
    let g = scalar(&lsgan_g_loss(&fake)?)?;
    println!(
        "d-loss {d:.6} (hand: {:.6})",
        0.5 * (0.04 + 0.16) + 0.5 * (0.09 + 0.04)
    );
    println!("g-loss {g:.6} (hand: {:.6})", 0.49 + 1.44);

    let a = [map(1.0)?, map(2.0)?];
    let b = [map(0.5)?, map(2.5)?];
    let fm = scalar(&feature_matching_layers(&[&a], &[&b])?)?;
    let same = scalar(&feature_matching_layers(&[&a], &[&a])?)?;
    println!("feature matching {fm:.6}, against itself {same}");

    let report = LossReport {
        g_gan: g,
        g_fm: fm,
        d_real: 0.0,
        d_fake: 0.0,
    };
    let w = LossWeights::default();
    println!(
        "g_total with lambda {} = {:.6}",
        w.lambda_fm,
        report.g_total(&w)
    );
    Ok(())
}

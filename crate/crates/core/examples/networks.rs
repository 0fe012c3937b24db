//! Prints the generator topology and checks tensor shapes through the
//! generator and the multi-scale discriminator.
//!
//! cargo run --example networks

use candle_core::{Device, Tensor};
use lesionsynth::synthnet::{
    downsample_pyramid, DiscriminatorConfig, Generator, GeneratorConfig, MultiScaleDiscriminator,
};

fn main() -> lesionsynth::Result<()> {
    let full = Generator::new(&GeneratorConfig::default(), 0)?;
    println!(
        "default generator: {} convolutions, {} parameters",
        full.layer_specs().len(),
        full.params().num_elements()
    );
    for (i, spec) in full.layer_specs().iter().enumerate() {
        println!("  {i:2}: k={} n={} s={}", spec.k, spec.n, spec.s);
    }

    let small = GeneratorConfig {
        base_channels: 8,
        num_downsamples: 3,
        num_residual_blocks: 2,
        ..Default::default()
    };
    let g = Generator::new(&small, 0)?;
    let x = Tensor::randn(0f32, 1.0, (1, 9, 64, 32), &Device::Cpu)?;
    let y = g.forward(&x)?;
    println!("generator {:?} -> {:?}", x.dims(), y.dims());

    let d = MultiScaleDiscriminator::new(
        &DiscriminatorConfig {
            base_channels: 8,
            ..Default::default()
        },
        0,
    )?;
    let pyramid = d.forward(&x, &y)?;
    for (i, scale) in pyramid.scales.iter().enumerate() {
        let dims: Vec<_> = scale.features.iter().map(|f| f.dims().to_vec()).collect();
        println!(
            "scale {i}: features {dims:?}, logits {:?}",
            scale.logits.dims()
        );
    }
    for level in downsample_pyramid(&x, 3)? {
        println!("pyramid level {:?}", level.dims());
    }
    Ok(())
}

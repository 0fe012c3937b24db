//! Translation networks: the global generator and the multi-scale patch
//! discriminator ensemble.

mod discriminator;
mod generator;
pub mod nn;

pub use discriminator::{
    discriminator_forward, downsample_pyramid, DiscriminatorConfig, FeaturePyramid,
    MultiScaleDiscriminator, ScaleOutput,
};
pub use generator::{build_generator, generator_forward, Generator, GeneratorConfig, INIT_STD};
pub use nn::{LayerSpec, ParamStore};

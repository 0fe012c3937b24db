//! Overfits the translation GAN to a single 64×32 (map, photo) pair and prints
//! the feature-matching loss as it falls.

use lesionsynth::synthnet::{DiscriminatorConfig, GeneratorConfig};
use lesionsynth::toy::toy_sample;
use lesionsynth::trainer::{Pix2PixHd, TrainingConfig, TrainingPair};

fn main() -> lesionsynth::Result<()> {
    let steps: u64 = std::env::args()
        .nth(1)
        .and_then(|s| s.parse().ok())
        .unwrap_or(300);
    let cfg = TrainingConfig {
        width: 32,
        height: 64,
        seed: 7,
        generator: GeneratorConfig {
            base_channels: 16,
            num_downsamples: 3,
            num_residual_blocks: 3,
            ..Default::default()
        },
        discriminator: DiscriminatorConfig {
            base_channels: 16,
            ..Default::default()
        },
        ..Default::default()
    };
    let s = toy_sample(0, true, 64, 24, 7)?;
    let img = image::imageops::crop_imm(&s.image, 16, 0, 32, 64).to_image();
    let sem = lesionsynth::mapkit::SemanticLabelMap::new(
        32,
        64,
        (0..64u32)
            .flat_map(|y| (16..48u32).map(move |x| (x, y)))
            .map(|(x, y)| s.semantic.get(x, y))
            .collect(),
    )?;
    let inst = lesionsynth::mapkit::InstanceMap::new(
        32,
        64,
        (0..64u32)
            .flat_map(|y| (16..48u32).map(move |x| (x, y)))
            .map(|(x, y)| s.instance.get(x, y))
            .collect(),
    )?;
    let pair = TrainingPair::from_maps("pair", &sem, Some(&inst), &img, true)?;
    let x = pair.input.unsqueeze(0)?;
    let y = pair.target.unsqueeze(0)?;
    let mut model = Pix2PixHd::new(&cfg)?;
    let t0 = std::time::Instant::now();
    for step in 1..=steps {
        let r = model.train_step(&x, &y)?;
        if step % 10 == 0 {
            println!(
                "step {step:4}  g_gan {:.4}  g_fm {:.4}  d_real {:.4}  d_fake {:.4}  {:.1}s",
                r.g_gan,
                r.g_fm,
                r.d_real,
                r.d_fake,
                t0.elapsed().as_secs_f64()
            );
        }
    }
    Ok(())
}

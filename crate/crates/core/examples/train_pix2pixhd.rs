//! Trains a small translation GAN on toy (map, image) pairs, then shows
//! resumption: dropping the last checkpoint and rerunning continues from the
//! one before, while a changed schedule is refused.
//!
//! cargo run --example train_pix2pixhd -- [checkpoint_dir] [epochs]

use lesionsynth::synthnet::{DiscriminatorConfig, GeneratorConfig};
use lesionsynth::toy::{toy_corpus, ToyParams};
use lesionsynth::trainer::{train, TrainingConfig, TrainingPair};

fn main() -> lesionsynth::Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let mut args = std::env::args().skip(1);
    let dir = args
        .next()
        .unwrap_or_else(|| "target/train_pix2pixhd".into());
    let epochs: u64 = args.next().and_then(|s| s.parse().ok()).unwrap_or(3);

    let corpus = toy_corpus(
        &ToyParams {
            count: 16,
            size: 32,
            superpixels: 16,
            ..Default::default()
        },
        0,
    )?;
    let pairs = corpus
        .iter()
        .map(|s| {
            TrainingPair::from_maps(s.id.clone(), &s.semantic, Some(&s.instance), &s.image, true)
        })
        .collect::<lesionsynth::Result<Vec<_>>>()?;

    let mut cfg = TrainingConfig {
        epochs,
        decay_epochs: epochs / 2,
        width: 32,
        height: 32,
        checkpoint_dir: dir.into(),
        checkpoint_every: 1,
        generator: GeneratorConfig {
            base_channels: 8,
            num_downsamples: 2,
            num_residual_blocks: 2,
            ..Default::default()
        },
        discriminator: DiscriminatorConfig {
            base_channels: 8,
            num_scales: 2,
            num_layers: 2,
            ..Default::default()
        },
        ..Default::default()
    };
    let first = train(&cfg, &pairs)?;
    println!("trained to {}", first.final_checkpoint.display());

    std::fs::remove_file(&first.final_checkpoint).map_err(|e| lesionsynth::Error::Io {
        path: first.final_checkpoint.clone(),
        source: e,
    })?;
    let again = train(&cfg, &pairs)?;
    println!("resumed from {:?}", again.resumed_from);

    cfg.epochs += 1;
    cfg.decay_epochs = cfg.epochs / 2;
    match train(&cfg, &pairs) {
        Ok(out) => println!("resumed from {:?}", out.resumed_from),
        // A longer schedule is a different model; the fingerprint says so.
        Err(e) => println!("resume refused: {e}"),
    }
    Ok(())
}

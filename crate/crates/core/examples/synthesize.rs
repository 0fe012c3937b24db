//! Synthesizes lesion images from toy label maps with a checkpoint written
//! by `train_pix2pixhd` (trains a one-epoch model first if none exists).
//!
//! cargo run --example synthesize -- [checkpoint_dir] [out_dir]

use std::path::PathBuf;

use lesionsynth::synthnet::{DiscriminatorConfig, GeneratorConfig};
use lesionsynth::toy::{toy_corpus, ToyParams};
use lesionsynth::trainer::{
    synthesize, train, write_synthetic, Checkpoint, TrainingConfig, TrainingPair,
};

fn main() -> lesionsynth::Result<()> {
    let mut args = std::env::args().skip(1);
    let dir = PathBuf::from(
        args.next()
            .unwrap_or_else(|| "target/train_pix2pixhd".into()),
    );
    let out = PathBuf::from(args.next().unwrap_or_else(|| "target/synthesize".into()));
    let corpus = toy_corpus(
        &ToyParams {
            count: 4,
            size: 32,
            superpixels: 16,
            ..Default::default()
        },
        42,
    )?;

    let path = match Checkpoint::latest_in(&dir).ok().flatten() {
        Some(p) => p,
        None => {
            let cfg = TrainingConfig {
                epochs: 1,
                decay_epochs: 0,
                width: 32,
                height: 32,
                checkpoint_dir: dir.clone(),
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
            let pairs = corpus
                .iter()
                .map(|s| {
                    TrainingPair::from_maps(
                        s.id.clone(),
                        &s.semantic,
                        Some(&s.instance),
                        &s.image,
                        true,
                    )
                })
                .collect::<lesionsynth::Result<Vec<_>>>()?;
            train(&cfg, &pairs)?.final_checkpoint
        }
    };
    let ckpt = Checkpoint::load(&path)?;
    println!("checkpoint {} ({})", path.display(), ckpt.fingerprint_hex());

    let maps: Vec<_> = corpus
        .iter()
        .map(|s| (s.semantic.clone(), Some(s.instance.clone())))
        .collect();
    let images = synthesize(&ckpt, &maps)?;
    let items: Vec<_> = corpus.iter().map(|s| s.id.clone()).zip(images).collect();
    for p in write_synthetic(&out, &items)? {
        println!("wrote {}", p.display());
    }
    Ok(())
}

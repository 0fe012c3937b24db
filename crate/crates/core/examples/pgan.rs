//! Class-conditional progressive GAN on the toy corpus: prints the fade
//! schedule, grows from 4x4 to 16x16 and samples both classes.
//!
//! cargo run --example pgan -- [checkpoint_dir]

use lesionsynth::proggan::{
    fade_alpha, sample_pgan, train_pgan, ConditionLabel, PganConfig, ResolutionSchedule,
};
use lesionsynth::toy::{labeled, toy_corpus, ToyParams};

fn main() -> lesionsynth::Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let dir = std::env::args()
        .nth(1)
        .unwrap_or_else(|| "target/pgan".into());

    let paper = ResolutionSchedule::default();
    for e in [0, 1, 14, 29, 45] {
        println!(
            "fade alpha at epoch {e:2} of a stage: {:.4}",
            fade_alpha(e, &paper)?
        );
    }

    let cfg = PganConfig {
        latent_dim: 16,
        fmap_base: 64,
        fmap_max: 16,
        batch_size: 8,
        schedule: ResolutionSchedule {
            target_res: 16,
            fade_epochs: 1,
            stable_epochs: 1,
            initial_stable_epochs: 1,
            ..Default::default()
        },
        checkpoint_dir: dir.into(),
        checkpoint_every: 0,
        ..Default::default()
    };
    println!(
        "stages {:?}, {} epochs",
        cfg.schedule.stages(),
        cfg.schedule.total_epochs()
    );
    let corpus = toy_corpus(
        &ToyParams {
            count: 32,
            size: 32,
            superpixels: 8,
            ..Default::default()
        },
        0,
    )?;
    let out = train_pgan(&cfg, &labeled(&corpus))?;
    for label in [ConditionLabel::Benign, ConditionLabel::Melanoma] {
        let imgs = sample_pgan(&out.checkpoint, label, 4, 7)?;
        let mean: f64 = imgs
            .iter()
            .flat_map(|i| {
                i.pixels()
                    .map(|p| p.0.iter().map(|&c| c as f64).sum::<f64>() / 3.0)
            })
            .sum::<f64>()
            / (imgs.len() * 16 * 16) as f64;
        println!(
            "{}: {} samples, mean intensity {mean:.1}",
            label.name(),
            imgs.len()
        );
    }
    Ok(())
}

//! Trains the small CNN on toy lesions with augmentation and scores a held
//! out split with test-time augmentation.
//!
//! cargo run --example classifier -- [epochs] [tta_replicas]

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use lesionsynth::evalharness::{
    auc, tta_predict, AugmentParams, ClassifierConfig, ClassifierRegistry, DEFAULT_CLASSIFIER,
};
use lesionsynth::toy::{labeled, toy_corpus, ToyParams};

fn main() -> lesionsynth::Result<()> {
    let mut args = std::env::args().skip(1);
    let epochs: usize = args.next().and_then(|s| s.parse().ok()).unwrap_or(6);
    let replicas: usize = args.next().and_then(|s| s.parse().ok()).unwrap_or(10);

    let data = labeled(&toy_corpus(&ToyParams::default(), 0)?);
    let (train, test) = data.split_at(140);
    let cfg = ClassifierConfig {
        epochs,
        ..Default::default()
    };
    let mut model = ClassifierRegistry::default().build(DEFAULT_CLASSIFIER, &cfg, 0)?;
    let params = AugmentParams::default();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let refs: Vec<_> = train.iter().collect();
    model.fit(&refs, &params, &mut rng)?;

    let plain = model.predict(&test.iter().map(|t| t.image.clone()).collect::<Vec<_>>())?;
    let tta = test
        .iter()
        .map(|t| tta_predict(model.as_ref(), &t.image, replicas, &params, &mut rng))
        .collect::<lesionsynth::Result<Vec<_>>>()?;
    let labels: Vec<bool> = test.iter().map(|t| t.label.is_melanoma()).collect();
    println!("AUC without TTA {:.4}", auc(&plain, &labels)?);
    println!(
        "AUC with {replicas} TTA replicas {:.4}",
        auc(&tta, &labels)?
    );
    Ok(())
}

//! End-to-end run on the toy corpus: train small generators on the training
//! split, build synthetic pools, then compare training-set compositions.
//!
//! cargo run --example toy_experiment -- [work_dir] [runs] [classifier_epochs]

use std::time::Instant;

use lesionsynth::evalharness::{
    run_experiment, ClassifierRegistry, DatasetSpec, ExperimentConfig, Source,
};
use lesionsynth::toy::{labeled, toy_corpus, toy_pools, ToyParams, ToyPoolOptions};

fn main() -> lesionsynth::Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let mut args = std::env::args().skip(1);
    let work = args
        .next()
        .unwrap_or_else(|| "target/toy_experiment".into());
    let runs: usize = args.next().and_then(|s| s.parse().ok()).unwrap_or(3);
    let mut cfg = ExperimentConfig::default();
    if let Some(e) = args.next().and_then(|s| s.parse().ok()) {
        cfg.classifier_config.epochs = e;
    }

    let t0 = Instant::now();
    let corpus = toy_corpus(&ToyParams::default(), 0)?;
    let (train, test) = corpus.split_at(140);
    println!(
        "corpus: {} train, {} test ({:.1?})",
        train.len(),
        test.len(),
        t0.elapsed()
    );

    let pools = toy_pools(train, &ToyPoolOptions::new(&work))?;
    println!(
        "pools: real {}, instance {}, pgan {} ({:.1?})",
        pools.real.len(),
        pools.instance.len(),
        pools.pgan.len(),
        t0.elapsed()
    );

    let n = train.len();
    let cfg = ExperimentConfig {
        specs: vec![
            DatasetSpec::new("Real", &[(Source::Real, n)])?,
            DatasetSpec::new("Real+Instance", &[(Source::Real, n), (Source::Instance, n)])?,
            DatasetSpec::new("Real+PGAN", &[(Source::Real, n), (Source::Pgan, n)])?,
        ],
        runs,
        reference: Some("Real+Instance".into()),
        ..cfg
    };
    let report = run_experiment(&cfg, &pools, &labeled(test), &ClassifierRegistry::default())?;
    print!("{}", report.to_csv());
    let (csv, json) = report.write(std::path::Path::new(&work))?;
    println!(
        "wrote {} and {} ({:.1?})",
        csv.display(),
        json.display(),
        t0.elapsed()
    );
    Ok(())
}

//! Writes a toy dataset in the challenge file layout, parses a pipeline
//! config that points at it and ingests the tree into a train/test split.
//!
//! cargo run --example ingest_config -- [data_dir]

use std::path::PathBuf;

use lesionsynth::cli::{ingest_dataset, parse_config_str, Split};
use lesionsynth::proggan::parse_label_file;
use lesionsynth::toy::{toy_corpus, write_dataset_tree, ToyParams};
use lesionsynth::trainer::fingerprint_hex;

fn main() -> lesionsynth::Result<()> {
    let root = PathBuf::from(
        std::env::args()
            .nth(1)
            .unwrap_or_else(|| "target/ingest_config".into()),
    );
    let corpus = toy_corpus(
        &ToyParams {
            count: 40,
            size: 32,
            superpixels: 8,
            ..Default::default()
        },
        0,
    )?;
    let labels_path = write_dataset_tree(&corpus, &root, false)?;

    let text = format!(
        "seed = 11\n\n[data]\nroot = {:?}\nlabels = \"labels.csv\"\ntest_fraction = 0.2\n\n[trainer]\nwidth = 32\nheight = 32\n",
        root.display().to_string()
    );
    let cfg = parse_config_str(&text)?;
    println!(
        "config fingerprint {}",
        fingerprint_hex(&cfg.fingerprint()?)
    );
    println!(
        "seeds: trainer {}, pgan {}, eval {}",
        cfg.trainer.seed, cfg.proggan.seed, cfg.evalharness.seed
    );

    let labels = parse_label_file(&lesionsynth::fsutil::read_to_string(&labels_path)?)?;
    let manifest = ingest_dataset(&cfg.data_root()?, cfg.data.test_fraction, Some(&labels))?;
    println!(
        "{} records: {} train, {} test, {} skipped",
        manifest.records.len(),
        manifest.count(Split::Train),
        manifest.count(Split::Test),
        manifest.skipped.len()
    );
    for r in manifest.split(Split::Test).take(3) {
        println!("  test {} ({:?})", r.id, r.label.map(|l| l.name()));
    }

    match parse_config_str("[trainer]\nlearning_rate = -1\n") {
        Err(e) => println!("rejected: {e}"),
        Ok(_) => unreachable!(),
    }
    Ok(())
}

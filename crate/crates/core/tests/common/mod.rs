#![allow(dead_code)]

use std::path::Path;

use lesionsynth::mapkit::Marker;

/// `n` complete records made of empty placeholder files; ingestion only
/// looks at names.
pub fn placeholder_tree(root: &Path, n: usize) {
    std::fs::create_dir_all(root).unwrap();
    for i in 0..n {
        let id = format!("ISIC_{:07}", 10_000 + i);
        let mut names = vec![format!("{id}.jpg"), format!("{id}_segmentation.png")];
        names.extend(
            Marker::ALL
                .iter()
                .map(|m| format!("{id}_attribute_{}.png", m.name())),
        );
        for name in names {
            std::fs::write(root.join(name), b"").unwrap();
        }
    }
}

/// A pipeline config small enough to run every command in seconds.
pub fn tiny_config(data_root: &Path) -> String {
    format!(
        r#"seed = 3

[data]
root = "{root}"
labels = "labels.csv"
test_fraction = 0.25

[mapkit]
superpixels = "auto"

[mapkit.slic]
num_superpixels = 8

[trainer]
epochs = 1
decay_epochs = 0
width = 32
height = 32

[trainer.generator]
base_channels = 4
num_downsamples = 2
num_residual_blocks = 1

[trainer.discriminator]
base_channels = 4
num_scales = 2
num_layers = 2

[proggan]
latent_dim = 8
fmap_base = 32
fmap_max = 8
batch_size = 4

[proggan.schedule]
target_res = 8
fade_epochs = 1
stable_epochs = 1
initial_stable_epochs = 1

[evalharness]
runs = 2
tta_replicas = 2
reference = "Real"

[evalharness.classifier_config]
input_size = 16
width = 2
epochs = 2

[[evalharness.specs]]
name = "Real"
parts = [{{ source = "real", count = 12 }}]

[[evalharness.specs]]
name = "Real+Instance"
parts = [{{ source = "real", count = 12 }}, {{ source = "instance", count = 12 }}]

[[evalharness.specs]]
name = "Real+PGAN"
parts = [{{ source = "real", count = 12 }}, {{ source = "pgan", count = 12 }}]
"#,
        root = data_root.display()
    )
}

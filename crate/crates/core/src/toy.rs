//! Small synthetic dermoscopy-like corpus for demos and end-to-end checks.
//!
//! Every sample is a skin-colored field with one brown elliptical lesion.
//! Melanoma samples carry dark globules inside the lesion; benign samples
//! carry pale milia-like cysts instead. Dots are recorded in the matching
//! attribute mask, so the semantic maps encode the class as well.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use image::{Rgb, RgbImage};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::evalharness::Pools;
use crate::fsutil::{atomic_write, write_png};
use crate::mapkit::{
    build_semantic_map, write_instance_map, AttributeMaskSet, BinaryMask, InstanceMap, Marker,
    SemanticLabelMap, SlicParams, SuperpixelIdCodec,
};
use crate::proggan::{
    format_label_file, ratio_preserving_counts, sample_pgan, train_pgan, ConditionLabel,
    LabeledImage, PganConfig, ResolutionSchedule,
};
use crate::synthnet::{DiscriminatorConfig, GeneratorConfig};
use crate::trainer::{self, TrainingConfig, TrainingPair};

#[derive(Debug, Clone)]
pub struct ToySample {
    pub id: String,
    pub melanoma: bool,
    pub image: RgbImage,
    pub segmentation: BinaryMask,
    pub markers: AttributeMaskSet,
    pub semantic: SemanticLabelMap,
    pub instance: InstanceMap,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ToyParams {
    pub count: usize,
    pub size: u32,
    /// Fraction of samples labelled melanoma.
    pub melanoma_fraction: f64,
    pub superpixels: usize,
}

impl Default for ToyParams {
    fn default() -> Self {
        Self {
            count: 200,
            size: 64,
            melanoma_fraction: 0.5,
            superpixels: 48,
        }
    }
}

fn jitter(rng: &mut ChaCha8Rng, base: [f64; 3], spread: f64) -> [f64; 3] {
    base.map(|c| c + rng.gen_range(-spread..=spread))
}

fn to_rgb(c: [f64; 3]) -> Rgb<u8> {
    Rgb(c.map(|v| v.round().clamp(0.0, 255.0) as u8))
}

/// One sample. Ids are `TOY_<index:07>`.
pub fn toy_sample(
    index: usize,
    melanoma: bool,
    size: u32,
    superpixels: usize,
    seed: u64,
) -> Result<ToySample> {
    if size < 16 {
        return Err(Error::invalid("toy images must be at least 16 pixels wide"));
    }
    let mut rng =
        ChaCha8Rng::seed_from_u64(seed ^ (index as u64).wrapping_mul(0x2545_F491_4F6C_DD1D));
    let s = size as f64;
    let skin = jitter(&mut rng, [215.0, 165.0, 140.0], 15.0);
    let lesion = jitter(&mut rng, [125.0, 75.0, 45.0], 15.0);
    let cx = s / 2.0 + rng.gen_range(-s / 10.0..=s / 10.0);
    let cy = s / 2.0 + rng.gen_range(-s / 10.0..=s / 10.0);
    let rx = rng.gen_range(s * 0.22..=s * 0.32);
    let ry = rng.gen_range(s * 0.22..=s * 0.32);
    let inside = |x: f64, y: f64| ((x - cx) / rx).powi(2) + ((y - cy) / ry).powi(2) <= 1.0;

    let segmentation = BinaryMask::from_fn(size, size, |x, y| inside(x as f64, y as f64));
    let mut image = RgbImage::from_fn(size, size, |x, y| {
        let base = if inside(x as f64, y as f64) {
            lesion
        } else {
            skin
        };
        to_rgb(base)
    });
    for p in image.pixels_mut() {
        for c in p.0.iter_mut() {
            *c = (*c as i32 + rng.gen_range(-6..=6)).clamp(0, 255) as u8;
        }
    }

    let (marker, dot_color) = if melanoma {
        (Marker::Globules, [35.0, 20.0, 20.0])
    } else {
        (Marker::MiliaLikeCyst, [240.0, 235.0, 215.0])
    };
    let mut markers = AttributeMaskSet::empty(size, size);
    let radius = (s / 32.0).max(1.0);
    let dots = rng.gen_range(5..=8);
    for _ in 0..dots {
        let a = rng.gen_range(0.0..std::f64::consts::TAU);
        let r = rng.gen_range(0.0..0.7);
        let (dx, dy) = (cx + r * rx * a.cos(), cy + r * ry * a.sin());
        let color = to_rgb(jitter(&mut rng, dot_color, 10.0));
        for y in 0..size {
            for x in 0..size {
                let d2 = (x as f64 - dx).powi(2) + (y as f64 - dy).powi(2);
                if d2 <= radius * radius && inside(x as f64, y as f64) {
                    image.put_pixel(x, y, color);
                    markers.get_mut(marker).set(x, y, true);
                }
            }
        }
    }

    let semantic = build_semantic_map(&segmentation, &markers)?;
    let instance = SlicParams {
        num_superpixels: superpixels,
        ..Default::default()
    }
    .run(&image)?;
    Ok(ToySample {
        id: format!("TOY_{index:07}"),
        melanoma,
        image,
        segmentation,
        markers,
        semantic,
        instance,
    })
}

/// `params.count` samples; the first `round(count·fraction)` indices after a
/// seeded shuffle are melanoma.
pub fn toy_corpus(params: &ToyParams, seed: u64) -> Result<Vec<ToySample>> {
    if !(0.0..=1.0).contains(&params.melanoma_fraction) {
        return Err(Error::invalid("melanoma_fraction must lie in [0, 1]"));
    }
    let positives = (params.count as f64 * params.melanoma_fraction).round() as usize;
    let mut flags: Vec<bool> = (0..params.count).map(|i| i < positives).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rand::seq::SliceRandom::shuffle(flags.as_mut_slice(), &mut rng);
    flags
        .into_iter()
        .enumerate()
        .map(|(i, m)| toy_sample(i, m, params.size, params.superpixels, seed))
        .collect()
}

/// `ISIC_<digits>` for a toy id `TOY_<digits>`.
pub fn isic_id(toy_id: &str) -> String {
    format!("ISIC_{}", toy_id.trim_start_matches("TOY_"))
}

fn write_mask(mask: &BinaryMask, path: &Path) -> Result<()> {
    let img = image::GrayImage::from_fn(mask.width(), mask.height(), |x, y| {
        image::Luma([if mask.get(x, y) { 255 } else { 0 }])
    });
    write_png(&image::DynamicImage::ImageLuma8(img), path)
}

/// Lays `samples` out as a challenge-style directory: `ISIC_<n>.png`, its
/// `_segmentation` and five `_attribute_<marker>` masks, optionally the
/// `_superpixels` raster, plus a `labels.csv` whose path is returned.
pub fn write_dataset_tree(
    samples: &[ToySample],
    root: &Path,
    superpixels: bool,
) -> Result<PathBuf> {
    let mut labels = BTreeMap::new();
    for s in samples {
        let id = isic_id(&s.id);
        write_png(
            &image::DynamicImage::ImageRgb8(s.image.clone()),
            &root.join(format!("{id}.png")),
        )?;
        write_mask(
            &s.segmentation,
            &root.join(format!("{id}_segmentation.png")),
        )?;
        for (marker, mask) in s.markers.iter() {
            write_mask(
                mask,
                &root.join(format!("{id}_attribute_{}.png", marker.name())),
            )?;
        }
        if superpixels {
            let path = root.join(format!("{id}_superpixels.png"));
            write_instance_map(&s.instance, &SuperpixelIdCodec::default(), &path)?;
        }
        labels.insert(id, ConditionLabel::from_melanoma(s.melanoma));
    }
    let path = root.join("labels.csv");
    atomic_write(&path, format_label_file(&labels).as_bytes())?;
    Ok(path)
}

/// Model sizes for building synthetic pools from a toy training split.
#[derive(Debug, Clone)]
pub struct ToyPoolOptions {
    pub work_dir: PathBuf,
    pub seed: u64,
    pub pix2pixhd_epochs: u64,
    pub pgan_resolution: u32,
    /// Epochs per fade and per stable phase of the progressive schedule.
    pub pgan_phase_epochs: u64,
    /// Also train a semantic-only generator (a second pix2pixHD model).
    pub semantic: bool,
}

impl ToyPoolOptions {
    pub fn new(work_dir: impl Into<PathBuf>) -> Self {
        Self {
            work_dir: work_dir.into(),
            seed: 0,
            pix2pixhd_epochs: 2,
            pgan_resolution: 32,
            pgan_phase_epochs: 2,
            semantic: false,
        }
    }

    pub fn pix2pixhd_config(&self, size: u32, use_boundary: bool) -> TrainingConfig {
        let name = if use_boundary { "instance" } else { "semantic" };
        TrainingConfig {
            epochs: self.pix2pixhd_epochs,
            decay_epochs: self.pix2pixhd_epochs / 2,
            width: size,
            height: size,
            seed: self.seed,
            use_boundary,
            checkpoint_dir: self.work_dir.join(name),
            checkpoint_every: 0,
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
        }
    }

    pub fn pgan_config(&self) -> PganConfig {
        PganConfig {
            latent_dim: 32,
            fmap_base: 256,
            fmap_max: 32,
            batch_size: 8,
            seed: self.seed,
            schedule: ResolutionSchedule {
                target_res: self.pgan_resolution,
                fade_epochs: self.pgan_phase_epochs,
                stable_epochs: self.pgan_phase_epochs,
                initial_stable_epochs: self.pgan_phase_epochs,
                ..Default::default()
            },
            checkpoint_dir: self.work_dir.join("pgan"),
            checkpoint_every: 0,
            ..Default::default()
        }
    }
}

pub fn labeled(samples: &[ToySample]) -> Vec<LabeledImage> {
    samples
        .iter()
        .map(|s| LabeledImage {
            id: s.id.clone(),
            image: s.image.clone(),
            label: ConditionLabel::from_melanoma(s.melanoma),
        })
        .collect()
}

fn pix2pixhd_pool(train: &[ToySample], cfg: &TrainingConfig) -> Result<Vec<LabeledImage>> {
    let pairs = train
        .iter()
        .map(|s| {
            TrainingPair::from_maps(
                s.id.clone(),
                &s.semantic,
                Some(&s.instance),
                &s.image,
                cfg.use_boundary,
            )
        })
        .collect::<Result<Vec<_>>>()?;
    let out = trainer::train(cfg, &pairs)?;
    let maps: Vec<_> = train
        .iter()
        .map(|s| (s.semantic.clone(), Some(s.instance.clone())))
        .collect();
    let images = trainer::synthesize(&out.checkpoint, &maps)?;
    Ok(train
        .iter()
        .zip(images)
        .map(|(s, image)| LabeledImage {
            id: format!("{}_synthetic", s.id),
            image,
            label: ConditionLabel::from_melanoma(s.melanoma),
        })
        .collect())
}

/// Trains small generators on `train` and fills every pool with
/// `train.len()` images: the real split itself, pix2pixHD outputs from each
/// training map (instance and, if enabled, semantic-only), and PGAN samples
/// drawn in the real class ratio.
pub fn toy_pools(train: &[ToySample], opts: &ToyPoolOptions) -> Result<Pools> {
    let size = train
        .first()
        .ok_or_else(|| Error::invalid("toy training split is empty"))?
        .image
        .width();
    let real = labeled(train);
    let instance = pix2pixhd_pool(train, &opts.pix2pixhd_config(size, true))?;
    let semantic = if opts.semantic {
        pix2pixhd_pool(train, &opts.pix2pixhd_config(size, false))?
    } else {
        Vec::new()
    };
    let pgan_out = train_pgan(&opts.pgan_config(), &real)?;
    let classes: Vec<ConditionLabel> = real.iter().map(|r| r.label).collect();
    let (n_benign, n_mel) = ratio_preserving_counts(&classes, real.len());
    let mut pgan = Vec::with_capacity(real.len());
    for (label, n, stream) in [
        (ConditionLabel::Benign, n_benign, 1u64),
        (ConditionLabel::Melanoma, n_mel, 2),
    ] {
        let images = sample_pgan(
            &pgan_out.checkpoint,
            label,
            n,
            opts.seed.wrapping_add(stream),
        )?;
        pgan.extend(
            images
                .into_iter()
                .enumerate()
                .map(|(i, image)| LabeledImage {
                    id: format!("PGAN_{}_{i:05}", label.name()),
                    image,
                    label,
                }),
        );
    }
    Ok(Pools {
        real,
        instance,
        semantic,
        pgan,
    })
}

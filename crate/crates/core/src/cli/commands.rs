use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use image::{imageops, DynamicImage, RgbImage};
use rayon::prelude::*;

use super::config::{PipelineConfig, SuperpixelSource};
use super::ingest::{ingest_dataset, DatasetManifest, ImageRecord, Split};
use crate::error::{Error, Result};
use crate::evalharness::{
    build_report, format_test_manifest, run_all, ClassifierRegistry, Pools, Source, SpecRuns,
    RUNS_JSON,
};
use crate::fsutil::{atomic_write, read_to_string, write_png};
use crate::mapkit::{
    boundary_map, build_semantic_map, letterbox_image, load_mask, load_rgb, read_instance_map,
    read_semantic_map, write_boundary_map, write_instance_map, write_semantic_map,
    AttributeMaskSet, InstanceMap, SemanticLabelMap,
};
use crate::proggan::{
    format_label_file, parse_label_file, ratio_preserving_counts, sample_pgan, square_resize,
    train_pgan, ConditionLabel, LabeledImage, PGAN_CHECKPOINT_KIND,
};
use crate::trainer::{
    self, fit_maps, synthetic_file_name, Checkpoint, PairSource, Pix2PixHd, TrainingPair,
    CHECKPOINT_KIND,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    PrepareMaps,
    TrainPix2PixHd,
    TrainPgan,
    Synthesize,
    Evaluate,
    Report,
}

impl Command {
    pub const ALL: [Command; 6] = [
        Command::PrepareMaps,
        Command::TrainPix2PixHd,
        Command::TrainPgan,
        Command::Synthesize,
        Command::Evaluate,
        Command::Report,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Command::PrepareMaps => "prepare-maps",
            Command::TrainPix2PixHd => "train-pix2pixhd",
            Command::TrainPgan => "train-pgan",
            Command::Synthesize => "synthesize",
            Command::Evaluate => "evaluate",
            Command::Report => "report",
        }
    }
}

impl fmt::Display for Command {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Command {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Command::ALL
            .into_iter()
            .find(|c| c.name() == s)
            .ok_or_else(|| {
                let names: Vec<&str> = Command::ALL.iter().map(|c| c.name()).collect();
                Error::Usage(format!(
                    "unknown command `{s}`; expected one of {}",
                    names.join(", ")
                ))
            })
    }
}

/// Output layout below the `--out` directory.
pub mod layout {
    pub const MANIFEST: &str = "manifest.json";
    pub const TEST_MANIFEST: &str = "test_manifest.csv";
    pub const MAPS: &str = "maps";
    pub const SYNTHETIC: &str = "synthetic";
    pub const PGAN_LABELS: &str = "labels.csv";
    pub const EVALUATION: &str = "evaluation";
}

/// A fully resolved command invocation.
#[derive(Debug, Clone)]
pub struct Invocation {
    pub command: Command,
    pub config: PipelineConfig,
    pub out: PathBuf,
    /// Explicit checkpoint for `synthesize`.
    pub checkpoint: Option<PathBuf>,
}

/// Runs one command to completion.
pub fn dispatch(inv: &Invocation) -> Result<()> {
    let mut cfg = inv.config.clone();
    cfg.resolve_outputs(&inv.out);
    std::fs::create_dir_all(&inv.out).map_err(|e| Error::io(&inv.out, e))?;
    match inv.command {
        Command::PrepareMaps => prepare_maps(&cfg, &inv.out).map(|_| ()),
        Command::TrainPix2PixHd => train_pix2pixhd(&cfg, &inv.out),
        Command::TrainPgan => train_pgan_command(&cfg, &inv.out),
        Command::Synthesize => synthesize_command(&cfg, &inv.out, inv.checkpoint.as_deref()),
        Command::Evaluate => evaluate(&cfg, &inv.out),
        Command::Report => report(&cfg, &inv.out),
    }
}

/// Ingests the configured dataset and records the manifest under `out`.
pub fn load_manifest(cfg: &PipelineConfig, out: &Path) -> Result<DatasetManifest> {
    let root = cfg.data_root()?;
    let labels = match &cfg.data.labels {
        Some(p) => {
            let path = if p.is_absolute() {
                p.clone()
            } else {
                root.join(p)
            };
            Some(parse_label_file(&read_to_string(&path)?)?)
        }
        None => None,
    };
    let manifest = ingest_dataset(&root, cfg.data.test_fraction, labels.as_ref())?;
    log::info!(
        "{} records ({} train, {} test), {} skipped",
        manifest.records.len(),
        manifest.count(Split::Train),
        manifest.count(Split::Test),
        manifest.skipped.len()
    );
    atomic_write(
        &out.join(layout::MANIFEST),
        serde_json::to_string_pretty(&manifest)?.as_bytes(),
    )?;
    let test: Vec<(PathBuf, bool)> = manifest
        .split(Split::Test)
        .filter_map(|r| r.label.map(|l| (r.image.clone(), l.is_melanoma())))
        .collect();
    atomic_write(
        &out.join(layout::TEST_MANIFEST),
        format_test_manifest(&test).as_bytes(),
    )?;
    Ok(manifest)
}

fn map_paths(out: &Path, id: &str) -> [PathBuf; 3] {
    let dir = out.join(layout::MAPS);
    ["semantic", "instance", "boundary"].map(|k| dir.join(format!("{id}_{k}.png")))
}

/// Semantic and instance maps of one record, computed from its masks.
pub fn compute_maps(
    record: &ImageRecord,
    cfg: &PipelineConfig,
) -> Result<(SemanticLabelMap, InstanceMap)> {
    let seg = load_mask(&record.segmentation)?;
    let markers = AttributeMaskSet::new(
        record
            .attributes
            .iter()
            .map(|(m, p)| Ok((*m, load_mask(p)?)))
            .collect::<Result<Vec<_>>>()?,
    )?;
    let semantic = build_semantic_map(&seg, &markers)?;
    let use_archive = match cfg.mapkit.superpixels {
        SuperpixelSource::Slic => false,
        SuperpixelSource::Archive => {
            if record.superpixels.is_none() {
                return Err(Error::invalid(format!(
                    "{} has no superpixel raster",
                    record.id
                )));
            }
            true
        }
        SuperpixelSource::Auto => record.superpixels.is_some(),
    };
    let instance = match (&record.superpixels, use_archive) {
        (Some(p), true) => read_instance_map(p, &cfg.mapkit.codec)?,
        _ => cfg.mapkit.slic.run(&load_rgb(&record.image)?)?,
    };
    if (instance.width(), instance.height()) != (semantic.width(), semantic.height()) {
        return Err(Error::invalid(format!(
            "{}: superpixel map size differs from the masks",
            record.id
        )));
    }
    Ok((semantic, instance))
}

/// Maps written by `prepare-maps` when present, computed otherwise.
pub fn load_maps(
    record: &ImageRecord,
    cfg: &PipelineConfig,
    out: &Path,
) -> Result<(SemanticLabelMap, InstanceMap)> {
    let [sem, inst, _] = map_paths(out, &record.id);
    if sem.exists() && inst.exists() {
        Ok((
            read_semantic_map(&sem)?,
            read_instance_map(&inst, &cfg.mapkit.codec)?,
        ))
    } else {
        compute_maps(record, cfg)
    }
}

/// Writes semantic, instance and boundary PNGs for every record, in
/// parallel. Returns the number of records processed.
pub fn prepare_maps(cfg: &PipelineConfig, out: &Path) -> Result<usize> {
    let manifest = load_manifest(cfg, out)?;
    manifest
        .records
        .par_iter()
        .map(|r| {
            let (semantic, instance) = compute_maps(r, cfg)?;
            let [sem, inst, bnd] = map_paths(out, &r.id);
            write_semantic_map(&semantic, &sem)?;
            write_instance_map(&instance, &cfg.mapkit.codec, &inst)?;
            write_boundary_map(&boundary_map(&instance), &bnd)
        })
        .collect::<Result<Vec<()>>>()?;
    log::info!("wrote maps for {} records", manifest.records.len());
    Ok(manifest.records.len())
}

/// Training pairs decoded from disk on demand.
struct RecordPairs<'a> {
    records: Vec<&'a ImageRecord>,
    cfg: &'a PipelineConfig,
    out: &'a Path,
}

impl PairSource for RecordPairs<'_> {
    fn len(&self) -> usize {
        self.records.len()
    }

    fn pair(&self, index: usize) -> Result<TrainingPair> {
        let r = self.records[index];
        let t = &self.cfg.trainer;
        let (sem, inst) = load_maps(r, self.cfg, self.out)?;
        let (sem, inst) = fit_maps(&sem, Some(&inst), t.width, t.height)?;
        let image = letterbox_image(&load_rgb(&r.image)?, t.width, t.height)?;
        TrainingPair::from_maps(r.id.clone(), &sem, inst.as_ref(), &image, t.use_boundary)
    }
}

fn train_pix2pixhd(cfg: &PipelineConfig, out: &Path) -> Result<()> {
    let manifest = load_manifest(cfg, out)?;
    let source = RecordPairs {
        records: manifest.split(Split::Train).collect(),
        cfg,
        out,
    };
    let outcome = trainer::train(&cfg.trainer, &source)?;
    log::info!("final checkpoint {}", outcome.final_checkpoint.display());
    Ok(())
}

fn labeled_train_images(manifest: &DatasetManifest, res: Option<u32>) -> Result<Vec<LabeledImage>> {
    manifest
        .split(Split::Train)
        .collect::<Vec<_>>()
        .par_iter()
        .map(|r| {
            let label = r.label.ok_or_else(|| {
                Error::invalid(format!("{} has no diagnosis label (set data.labels)", r.id))
            })?;
            let img = load_rgb(&r.image)?;
            Ok(LabeledImage {
                id: r.id.clone(),
                image: match res {
                    Some(res) => square_resize(&img, res),
                    None => img,
                },
                label,
            })
        })
        .collect()
}

fn train_pgan_command(cfg: &PipelineConfig, out: &Path) -> Result<()> {
    let manifest = load_manifest(cfg, out)?;
    let data = labeled_train_images(&manifest, Some(cfg.proggan.schedule.target_res))?;
    let outcome = train_pgan(&cfg.proggan, &data)?;
    log::info!("final checkpoint {}", outcome.final_checkpoint.display());
    Ok(())
}

fn pool_dir(out: &Path, source: Source) -> PathBuf {
    out.join(layout::SYNTHETIC).join(source.name())
}

/// Explicit checkpoint, else the newest one in either training directory.
fn resolve_checkpoint(cfg: &PipelineConfig, explicit: Option<&Path>) -> Result<PathBuf> {
    if let Some(p) = explicit {
        if !p.is_file() {
            return Err(Error::MissingCheckpoint(p.display().to_string()));
        }
        return Ok(p.to_path_buf());
    }
    for dir in [&cfg.trainer.checkpoint_dir, &cfg.proggan.checkpoint_dir] {
        if dir.is_dir() {
            if let Some(p) = Checkpoint::latest_in(dir)? {
                return Ok(p);
            }
        }
    }
    Err(Error::MissingCheckpoint(format!(
        "no --checkpoint given and none found in {} or {}",
        cfg.trainer.checkpoint_dir.display(),
        cfg.proggan.checkpoint_dir.display()
    )))
}

fn synthesize_command(cfg: &PipelineConfig, out: &Path, explicit: Option<&Path>) -> Result<()> {
    let path = resolve_checkpoint(cfg, explicit)?;
    let ckpt = Checkpoint::load(&path)?;
    let manifest = load_manifest(cfg, out)?;
    log::info!("synthesizing with {}", path.display());
    match ckpt.kind.as_str() {
        CHECKPOINT_KIND => {
            let model = Pix2PixHd::from_checkpoint(&ckpt)?;
            let source = if model.config().use_boundary {
                Source::Instance
            } else {
                Source::Semantic
            };
            let dir = pool_dir(out, source);
            for r in manifest.split(Split::Train) {
                let (sem, inst) = load_maps(r, cfg, out)?;
                let img = trainer::synthesize_with(&model, &[(sem, Some(inst))])?.remove(0);
                write_png(
                    &DynamicImage::ImageRgb8(img),
                    &dir.join(synthetic_file_name(&r.id)),
                )?;
            }
            log::info!(
                "wrote {} images to {}",
                manifest.count(Split::Train),
                dir.display()
            );
        }
        PGAN_CHECKPOINT_KIND => {
            let reference: Vec<ConditionLabel> = manifest
                .split(Split::Train)
                .filter_map(|r| r.label)
                .collect();
            if reference.is_empty() {
                return Err(Error::invalid(
                    "PGAN sampling needs labeled training records",
                ));
            }
            let (n_benign, n_mel) = ratio_preserving_counts(&reference, reference.len());
            let dir = pool_dir(out, Source::Pgan);
            let mut labels = BTreeMap::new();
            for (label, n, stream) in [
                (ConditionLabel::Benign, n_benign, 1u64),
                (ConditionLabel::Melanoma, n_mel, 2),
            ] {
                let seed = cfg.proggan.seed.wrapping_add(stream);
                for (i, img) in sample_pgan(&ckpt, label, n, seed)?.into_iter().enumerate() {
                    let id = format!("PGAN_{}_{i:05}", label.name());
                    write_png(
                        &DynamicImage::ImageRgb8(img),
                        &dir.join(format!("{id}.png")),
                    )?;
                    labels.insert(id, label);
                }
            }
            atomic_write(
                &dir.join(layout::PGAN_LABELS),
                format_label_file(&labels).as_bytes(),
            )?;
            log::info!("wrote {} images to {}", labels.len(), dir.display());
        }
        other => {
            return Err(Error::Checkpoint(format!(
                "unknown checkpoint kind `{other}`"
            )))
        }
    }
    Ok(())
}

fn load_for_eval(path: &Path, size: u32) -> Result<RgbImage> {
    let img = load_rgb(path)?;
    Ok(if img.dimensions() == (size, size) {
        img
    } else {
        imageops::resize(&img, size, size, imageops::FilterType::Triangle)
    })
}

/// Pools and test set for `evaluate`. Images are resized to the classifier
/// input size on load to bound memory.
pub fn load_pools(
    cfg: &PipelineConfig,
    manifest: &DatasetManifest,
    out: &Path,
) -> Result<(Pools, Vec<LabeledImage>)> {
    let size = cfg.evalharness.classifier_config.input_size;
    let labeled = |split: Split| -> Result<Vec<LabeledImage>> {
        manifest
            .split(split)
            .filter(|r| r.label.is_some())
            .collect::<Vec<_>>()
            .par_iter()
            .map(|r| {
                Ok(LabeledImage {
                    id: r.id.clone(),
                    image: load_for_eval(&r.image, size)?,
                    label: r.label.expect("filtered"),
                })
            })
            .collect()
    };
    let mut pools = Pools {
        real: labeled(Split::Train)?,
        ..Default::default()
    };
    let needed: Vec<Source> = Source::ALL
        .into_iter()
        .filter(|s| {
            *s != Source::Real
                && cfg
                    .evalharness
                    .specs
                    .iter()
                    .any(|spec| spec.parts.iter().any(|p| p.source == *s))
        })
        .collect();
    for source in needed {
        let dir = pool_dir(out, source);
        let items: Vec<(String, PathBuf, ConditionLabel)> = if source == Source::Pgan {
            let labels = parse_label_file(&read_to_string(&dir.join(layout::PGAN_LABELS))?)?;
            labels
                .into_iter()
                .map(|(id, l)| (id.clone(), dir.join(format!("{id}.png")), l))
                .collect()
        } else {
            manifest
                .split(Split::Train)
                .filter_map(|r| r.label.map(|l| (r, l)))
                .map(|(r, l)| (r.id.clone(), dir.join(synthetic_file_name(&r.id)), l))
                .filter(|(_, p, _)| p.exists())
                .collect()
        };
        *pools.get_mut(source) = items
            .par_iter()
            .map(|(id, path, label)| {
                Ok(LabeledImage {
                    id: id.clone(),
                    image: load_for_eval(path, size)?,
                    label: *label,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        log::info!("{source} pool: {} images", pools.get(source).len());
    }
    Ok((pools, labeled(Split::Test)?))
}

fn evaluate(cfg: &PipelineConfig, out: &Path) -> Result<()> {
    let manifest = load_manifest(cfg, out)?;
    let (pools, test) = load_pools(cfg, &manifest, out)?;
    let runs = run_all(
        &cfg.evalharness,
        &pools,
        &test,
        &ClassifierRegistry::default(),
    )?;
    let dir = out.join(layout::EVALUATION);
    atomic_write(
        &dir.join(RUNS_JSON),
        serde_json::to_string_pretty(&runs)?.as_bytes(),
    )?;
    report(cfg, out)
}

fn report(cfg: &PipelineConfig, out: &Path) -> Result<()> {
    let dir = out.join(layout::EVALUATION);
    let runs: Vec<SpecRuns> = serde_json::from_str(&read_to_string(&dir.join(RUNS_JSON))?)?;
    let report = build_report(&runs, cfg.evalharness.reference.as_deref())?;
    let (csv, json) = report.write(&dir)?;
    print!("{}", report.to_csv());
    log::info!("wrote {} and {}", csv.display(), json.display());
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn command_names_roundtrip() {
        for c in Command::ALL {
            assert_eq!(c.name().parse::<Command>().unwrap(), c);
        }
        assert!(matches!("train".parse::<Command>(), Err(Error::Usage(_))));
    }
}

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evalharness::ExperimentConfig;
use crate::fsutil::read_to_string;
use crate::mapkit::{SlicParams, SuperpixelIdCodec};
use crate::proggan::PganConfig;
use crate::trainer::{fingerprint_of, TrainingConfig};

/// Share of the corpus held out for testing by default (248 of 2,594).
pub const DEFAULT_TEST_FRACTION: f64 = 248.0 / 2594.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataConfig {
    /// Dataset root; falls back to `$LESIONSYNTH_DATA`.
    pub root: Option<PathBuf>,
    /// Optional diagnosis file (see `proggan::parse_label_file`), relative to
    /// the root unless absolute.
    pub labels: Option<PathBuf>,
    pub test_fraction: f64,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            root: None,
            labels: None,
            test_fraction: DEFAULT_TEST_FRACTION,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SuperpixelSource {
    /// Always run SLIC on the image.
    Slic,
    /// Require the archive's `_superpixels.png` raster.
    Archive,
    /// Archive raster when present, SLIC otherwise.
    Auto,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MapkitConfig {
    pub superpixels: SuperpixelSource,
    pub slic: SlicParams,
    pub codec: SuperpixelIdCodec,
}

impl Default for MapkitConfig {
    fn default() -> Self {
        Self {
            superpixels: SuperpixelSource::Slic,
            slic: SlicParams::default(),
            codec: SuperpixelIdCodec::default(),
        }
    }
}

/// Everything a pipeline command needs. Network and loss settings live in
/// `trainer.generator`, `trainer.discriminator` and `trainer.loss`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct PipelineConfig {
    /// When set, replaces the seed of every module.
    pub seed: Option<u64>,
    pub data: DataConfig,
    pub mapkit: MapkitConfig,
    pub trainer: TrainingConfig,
    pub proggan: PganConfig,
    pub evalharness: ExperimentConfig,
}

/// Attributes a module validation error to the offending key when the
/// message starts with one of the section's field names.
fn keyed<T: Serialize>(section: &str, value: &T, err: Error) -> Error {
    let message = match err {
        Error::InvalidArgument(m) => m,
        other => return other,
    };
    let fields: Vec<String> = match serde_json::to_value(value) {
        Ok(serde_json::Value::Object(m)) => m.keys().cloned().collect(),
        _ => Vec::new(),
    };
    let first = message
        .split(|c: char| !(c.is_ascii_alphanumeric() || c == '_'))
        .next()
        .unwrap_or("");
    let key = if fields.iter().any(|f| f == first) {
        format!("{section}.{first}")
    } else {
        section.to_string()
    };
    Error::config(key, message)
}

impl PipelineConfig {
    pub fn apply_seed(&mut self, seed: u64) {
        self.seed = Some(seed);
        self.trainer.seed = seed;
        self.proggan.seed = seed;
        self.evalharness.seed = seed;
    }

    pub fn validate(&self) -> Result<()> {
        let f = self.data.test_fraction;
        if !(f.is_finite() && (0.0..1.0).contains(&f)) {
            return Err(Error::config("data.test_fraction", "must lie in [0, 1)"));
        }
        self.mapkit
            .codec
            .validate()
            .map_err(|e| keyed("mapkit.codec", &self.mapkit.codec, e))?;
        let s = &self.mapkit.slic;
        if s.num_superpixels == 0 {
            return Err(Error::config(
                "mapkit.slic.num_superpixels",
                "must be positive",
            ));
        }
        if !(s.compactness.is_finite() && s.compactness > 0.0) {
            return Err(Error::config("mapkit.slic.compactness", "must be positive"));
        }
        if s.max_iter == 0 {
            return Err(Error::config("mapkit.slic.max_iter", "must be positive"));
        }
        self.trainer
            .validate()
            .map_err(|e| keyed("trainer", &self.trainer, e))?;
        self.proggan
            .validate()
            .map_err(|e| keyed("proggan", &self.proggan, e))?;
        self.evalharness
            .validate()
            .map_err(|e| keyed("evalharness", &self.evalharness, e))
    }

    /// Hash of the canonical JSON form (sorted keys, defaults filled in).
    pub fn fingerprint(&self) -> Result<[u8; 32]> {
        fingerprint_of(self)
    }

    /// Makes relative checkpoint directories relative to `out`.
    pub fn resolve_outputs(&mut self, out: &Path) {
        for dir in [
            &mut self.trainer.checkpoint_dir,
            &mut self.proggan.checkpoint_dir,
        ] {
            if dir.is_relative() {
                *dir = out.join(&*dir);
            }
        }
    }

    /// Dataset root from the config, else from `$LESIONSYNTH_DATA`.
    pub fn data_root(&self) -> Result<PathBuf> {
        if let Some(r) = &self.data.root {
            return Ok(r.clone());
        }
        std::env::var_os(DATA_ENV)
            .map(PathBuf::from)
            .ok_or_else(|| Error::config("data.root", format!("not set and ${DATA_ENV} is unset")))
    }
}

pub const DATA_ENV: &str = "LESIONSYNTH_DATA";

/// Parses a TOML document, applying defaults and validating every section.
pub fn parse_config_str(text: &str) -> Result<PipelineConfig> {
    let de = toml::Deserializer::new(text);
    let mut cfg: PipelineConfig = serde_path_to_error::deserialize(de).map_err(|e| {
        let key = e.path().to_string();
        let key = if key == "." { String::new() } else { key };
        Error::config(key, e.into_inner().message().trim().to_string())
    })?;
    if let Some(seed) = cfg.seed {
        cfg.apply_seed(seed);
    }
    cfg.validate()?;
    Ok(cfg)
}

pub fn parse_config(path: &Path) -> Result<PipelineConfig> {
    parse_config_str(&read_to_string(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_document_is_all_defaults() {
        assert_eq!(parse_config_str("").unwrap(), PipelineConfig::default());
    }

    #[test]
    fn constraint_names_the_key() {
        match parse_config_str("[trainer]\nlearning_rate = -1\n") {
            Err(Error::Config { key, .. }) => assert_eq!(key, "trainer.learning_rate"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn unknown_and_mistyped_keys_name_the_key() {
        match parse_config_str("[trainer]\nlearning_rat = 1\n") {
            Err(Error::Config { key, message }) => {
                assert_eq!(key, "trainer.learning_rat", "{message}");
                assert!(message.contains("learning_rat"));
            }
            other => panic!("{other:?}"),
        }
        match parse_config_str("[proggan]\nlatent_dim = \"big\"\n") {
            Err(Error::Config { key, .. }) => assert_eq!(key, "proggan.latent_dim"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn seed_propagates() {
        let cfg = parse_config_str("seed = 9\n").unwrap();
        assert_eq!(
            (cfg.trainer.seed, cfg.proggan.seed, cfg.evalharness.seed),
            (9, 9, 9)
        );
    }

    #[test]
    fn fingerprint_is_stable() {
        let a = parse_config_str("[trainer]\nepochs = 3\ndecay_epochs = 1\n").unwrap();
        let b = parse_config_str("[trainer]\ndecay_epochs = 1\nepochs = 3\n").unwrap();
        assert_eq!(a.fingerprint().unwrap(), b.fingerprint().unwrap());
        assert_ne!(
            a.fingerprint().unwrap(),
            PipelineConfig::default().fingerprint().unwrap()
        );
    }
}

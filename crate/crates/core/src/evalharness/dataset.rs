use std::fmt;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::proggan::{ratio_preserving_counts, ConditionLabel, LabeledImage};

/// Where a training image comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Source {
    Real,
    /// pix2pixHD output from semantic plus instance maps.
    Instance,
    /// pix2pixHD output from semantic maps alone.
    Semantic,
    Pgan,
}

impl Source {
    pub const ALL: [Source; 4] = [
        Source::Real,
        Source::Instance,
        Source::Semantic,
        Source::Pgan,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Source::Real => "real",
            Source::Instance => "instance",
            Source::Semantic => "semantic",
            Source::Pgan => "pgan",
        }
    }

    fn stream(self) -> u64 {
        self as u64 + 1
    }
}

impl fmt::Display for Source {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SourceCount {
    pub source: Source,
    pub count: usize,
}

/// A named training-set composition.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetSpec {
    pub name: String,
    pub parts: Vec<SourceCount>,
}

impl DatasetSpec {
    pub fn new(name: impl Into<String>, parts: &[(Source, usize)]) -> Result<Self> {
        let spec = Self {
            name: name.into(),
            parts: parts
                .iter()
                .map(|&(source, count)| SourceCount { source, count })
                .collect(),
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.name.trim().is_empty() {
            return Err(Error::invalid("dataset spec needs a name"));
        }
        if self.parts.is_empty() {
            return Err(Error::invalid(format!("spec `{}` has no parts", self.name)));
        }
        for (i, p) in self.parts.iter().enumerate() {
            if p.count == 0 {
                return Err(Error::invalid(format!(
                    "spec `{}`: count for {} must be positive",
                    self.name, p.source
                )));
            }
            if self.parts[..i].iter().any(|q| q.source == p.source) {
                return Err(Error::invalid(format!(
                    "spec `{}` lists {} twice",
                    self.name, p.source
                )));
            }
        }
        Ok(())
    }

    pub fn total(&self) -> usize {
        self.parts.iter().map(|p| p.count).sum()
    }
}

/// The nine training-set compositions compared in the evaluation, each
/// individual set having `n` images, in report order.
pub fn standard_specs(n: usize) -> Vec<DatasetSpec> {
    use Source::*;
    let rows: [(&str, &[(Source, usize)]); 9] = [
        ("Real", &[(Real, n)]),
        ("Instance", &[(Instance, n)]),
        ("Semantic", &[(Semantic, n)]),
        ("PGAN", &[(Pgan, n)]),
        ("Real+Instance", &[(Real, n), (Instance, n)]),
        ("Real+Semantic", &[(Real, n), (Semantic, n)]),
        ("Real+PGAN", &[(Real, n), (Pgan, n)]),
        ("Real+2×PGAN", &[(Real, n), (Pgan, 2 * n)]),
        ("Real+Instance+PGAN", &[(Real, n), (Instance, n), (Pgan, n)]),
    ];
    rows.iter()
        .map(|(name, parts)| DatasetSpec {
            name: name.to_string(),
            parts: parts
                .iter()
                .map(|&(source, count)| SourceCount { source, count })
                .collect(),
        })
        .collect()
}

/// Images available to draw from, per source.
#[derive(Debug, Clone, Default)]
pub struct Pools {
    pub real: Vec<LabeledImage>,
    pub instance: Vec<LabeledImage>,
    pub semantic: Vec<LabeledImage>,
    pub pgan: Vec<LabeledImage>,
}

impl Pools {
    pub fn get(&self, source: Source) -> &[LabeledImage] {
        match source {
            Source::Real => &self.real,
            Source::Instance => &self.instance,
            Source::Semantic => &self.semantic,
            Source::Pgan => &self.pgan,
        }
    }

    pub fn get_mut(&mut self, source: Source) -> &mut Vec<LabeledImage> {
        match source {
            Source::Real => &mut self.real,
            Source::Instance => &mut self.instance,
            Source::Semantic => &mut self.semantic,
            Source::Pgan => &mut self.pgan,
        }
    }
}

fn draw<'a>(
    pool: &[&'a LabeledImage],
    n: usize,
    rng: &mut ChaCha8Rng,
    what: &str,
) -> Result<Vec<&'a LabeledImage>> {
    if n > pool.len() {
        return Err(Error::InsufficientData(format!(
            "{what}: requested {n} images from a pool of {}",
            pool.len()
        )));
    }
    let mut pool = pool.to_vec();
    let (chosen, _) = pool.partial_shuffle(rng, n);
    Ok(chosen.to_vec())
}

/// Draws the images for `spec` without replacement. Each source uses its own
/// random stream derived from `seed`. PGAN draws are split between the two
/// classes in the proportion found in the real pool.
pub fn assemble_training_set<'a>(
    spec: &DatasetSpec,
    pools: &'a Pools,
    seed: u64,
) -> Result<Vec<&'a LabeledImage>> {
    spec.validate()?;
    let mut out = Vec::with_capacity(spec.total());
    for part in &spec.parts {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(part.source.stream());
        let pool: Vec<&LabeledImage> = pools.get(part.source).iter().collect();
        let what = format!("spec `{}`, source {}", spec.name, part.source);
        if part.source == Source::Pgan {
            let reference: Vec<ConditionLabel> = pools.real.iter().map(|i| i.label).collect();
            let (n_benign, n_mel) = ratio_preserving_counts(&reference, part.count);
            let (mel, benign): (Vec<_>, Vec<_>) =
                pool.into_iter().partition(|i| i.label.is_melanoma());
            out.extend(draw(
                &benign,
                n_benign,
                &mut rng,
                &format!("{what} (benign)"),
            )?);
            out.extend(draw(&mel, n_mel, &mut rng, &format!("{what} (melanoma)"))?);
        } else {
            out.extend(draw(&pool, part.count, &mut rng, &what)?);
        }
    }
    Ok(out)
}

/// One line per test image: `path,label` with label 1 for melanoma.
pub fn format_test_manifest(entries: &[(PathBuf, bool)]) -> String {
    let mut out = String::from("path,melanoma\n");
    for (path, mel) in entries {
        out.push_str(&format!("{},{}\n", path.display(), u8::from(*mel)));
    }
    out
}

/// Parses [`format_test_manifest`] output. Relative paths are resolved
/// against `base`.
pub fn parse_test_manifest(text: &str, base: &Path) -> Result<Vec<(PathBuf, bool)>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || (i == 0 && line.starts_with("path")) {
            continue;
        }
        let (path, label) = line.rsplit_once([',', '\t']).ok_or_else(|| {
            Error::invalid(format!("manifest line {}: expected path,label", i + 1))
        })?;
        let mel = match label.trim() {
            "1" => true,
            "0" => false,
            other => {
                return Err(Error::invalid(format!(
                    "manifest line {}: label must be 0 or 1, got `{other}`",
                    i + 1
                )))
            }
        };
        out.push((base.join(path.trim()), mel));
    }
    Ok(out)
}

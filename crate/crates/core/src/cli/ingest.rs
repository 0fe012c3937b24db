//! Discovers ISIC-style records under a dataset root and splits them.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use regex::Regex;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use walkdir::WalkDir;

use crate::error::{Error, Result};
use crate::mapkit::Marker;
use crate::proggan::ConditionLabel;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageRecord {
    /// `ISIC_<digits>`.
    pub id: String,
    pub image: PathBuf,
    pub segmentation: PathBuf,
    pub attributes: BTreeMap<Marker, PathBuf>,
    pub superpixels: Option<PathBuf>,
    pub split: Split,
    pub label: Option<ConditionLabel>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkippedRecord {
    pub id: String,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub root: PathBuf,
    pub records: Vec<ImageRecord>,
    pub skipped: Vec<SkippedRecord>,
}

impl DatasetManifest {
    pub fn split(&self, split: Split) -> impl Iterator<Item = &ImageRecord> {
        self.records.iter().filter(move |r| r.split == split)
    }

    pub fn count(&self, split: Split) -> usize {
        self.split(split).count()
    }
}

#[derive(Default)]
struct Found {
    image: Option<PathBuf>,
    segmentation: Option<PathBuf>,
    superpixels: Option<PathBuf>,
    attributes: BTreeMap<Marker, PathBuf>,
}

/// Number of test records for `n` records at `fraction`, rounded to nearest.
pub fn test_count(n: usize, fraction: f64) -> usize {
    ((n as f64 * fraction).round() as usize).min(n)
}

fn split_key(id: &str) -> [u8; 32] {
    Sha256::digest(id.as_bytes()).into()
}

/// Walks `root` for `ISIC_<id>.{jpg,jpeg,png}`, `ISIC_<id>_segmentation.png`,
/// `ISIC_<id>_attribute_<marker>.png` and `ISIC_<id>_superpixels.png`.
/// Records missing the image, the segmentation or any attribute mask are
/// listed in `skipped`. The `round(N·test_fraction)` records whose id hashes
/// (SHA-256) sort first form the test split.
pub fn ingest_dataset(
    root: &Path,
    test_fraction: f64,
    labels: Option<&BTreeMap<String, ConditionLabel>>,
) -> Result<DatasetManifest> {
    if !root.is_dir() {
        return Err(Error::invalid(format!(
            "dataset root {} is not a directory",
            root.display()
        )));
    }
    let re = Regex::new(
        r"^(ISIC_\d+)(?:_(segmentation|superpixels|attribute_([a-z_]+)))?\.(?i:jpe?g|png)$",
    )
    .expect("static regex");
    let mut found: BTreeMap<String, Found> = BTreeMap::new();
    let mut skipped = Vec::new();
    let mut walk: Vec<PathBuf> = Vec::new();
    for entry in WalkDir::new(root).follow_links(true) {
        let entry =
            entry.map_err(|e| Error::invalid(format!("walking {}: {e}", root.display())))?;
        if entry.file_type().is_file() {
            walk.push(entry.into_path());
        }
    }
    walk.sort();
    for path in walk {
        let Some(name) = path.file_name().and_then(|n| n.to_str()) else {
            continue;
        };
        let Some(c) = re.captures(name) else {
            continue;
        };
        let id = c[1].to_string();
        let slot = found.entry(id.clone()).or_default();
        match (c.get(2).map(|m| m.as_str()), c.get(3).map(|m| m.as_str())) {
            (None, _) => {
                // Prefer the jpg when both encodings exist.
                if slot.image.is_none() || name.to_ascii_lowercase().ends_with("jpg") {
                    slot.image = Some(path);
                }
            }
            (Some("segmentation"), _) => slot.segmentation = Some(path),
            (Some("superpixels"), _) => slot.superpixels = Some(path),
            (Some(_), Some(marker)) => match Marker::from_name(marker) {
                Some(m) => {
                    slot.attributes.insert(m, path);
                }
                None => skipped.push(SkippedRecord {
                    id: id.clone(),
                    reason: format!("unknown attribute `{marker}` in {name}"),
                }),
            },
            _ => {}
        }
    }

    let mut complete = Vec::new();
    for (id, f) in found {
        let mut missing = Vec::new();
        if f.image.is_none() {
            missing.push("image".to_string());
        }
        if f.segmentation.is_none() {
            missing.push("segmentation".to_string());
        }
        for m in Marker::ALL {
            if !f.attributes.contains_key(&m) {
                missing.push(format!("attribute_{}", m.name()));
            }
        }
        if !missing.is_empty() {
            skipped.push(SkippedRecord {
                id,
                reason: format!("missing {}", missing.join(", ")),
            });
            continue;
        }
        complete.push(ImageRecord {
            label: labels.and_then(|l| l.get(&id).copied()),
            image: f.image.expect("checked"),
            segmentation: f.segmentation.expect("checked"),
            attributes: f.attributes,
            superpixels: f.superpixels,
            split: Split::Train,
            id,
        });
    }

    let n_test = test_count(complete.len(), test_fraction);
    let mut by_hash: Vec<usize> = (0..complete.len()).collect();
    by_hash.sort_by_key(|&i| (split_key(&complete[i].id), complete[i].id.clone()));
    for &i in &by_hash[..n_test] {
        complete[i].split = Split::Test;
    }
    if complete.is_empty() {
        log::warn!("no complete records under {}", root.display());
    }
    for s in &skipped {
        log::warn!("skipped {}: {}", s.id, s.reason);
    }
    Ok(DatasetManifest {
        root: root.to_path_buf(),
        records: complete,
        skipped,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn paper_split_sizes() {
        let n_test = test_count(2594, super::super::config::DEFAULT_TEST_FRACTION);
        assert_eq!((2594 - n_test, n_test), (2346, 248));
        assert_eq!(test_count(0, 0.5), 0);
    }

    #[test]
    fn missing_root_is_an_error() {
        assert!(ingest_dataset(Path::new("/definitely/not/here"), 0.1, None).is_err());
    }
}

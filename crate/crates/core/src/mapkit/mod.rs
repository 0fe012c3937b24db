//! Conditioning inputs for the translation network: semantic label maps,
//! superpixel instance maps, their boundary maps and one-hot encodings.
//!
//! Label codes are fixed:
//!
//! | code | class              |
//! |------|--------------------|
//! | 0    | border (letterbox) |
//! | 1    | skin               |
//! | 2    | lesion, no marker  |
//! | 3    | pigment network    |
//! | 4    | negative network   |
//! | 5    | streaks            |
//! | 6    | milia-like cyst    |
//! | 7    | globules           |

mod io;
mod maps;
mod slic;

pub use io::{
    decode_superpixel_png, load_mask, load_rgb, read_boundary_map, read_instance_map,
    read_semantic_map, write_boundary_map, write_instance_map, write_semantic_map,
    SuperpixelIdCodec,
};
pub use maps::{
    boundary_map, build_semantic_map, fresh_instance_id, letterbox, letterbox_geometry,
    letterbox_image, one_hot, LetterboxGeometry,
};
pub use slic::{slic_from_dynamic, slic_superpixels, SlicParams};

use crate::error::{Error, Result};

pub use image::RgbImage;

pub mod labels {
    pub const BORDER: u8 = 0;
    pub const SKIN: u8 = 1;
    pub const LESION: u8 = 2;
    pub const PIGMENT_NETWORK: u8 = 3;
    pub const NEGATIVE_NETWORK: u8 = 4;
    pub const STREAKS: u8 = 5;
    pub const MILIA_LIKE_CYST: u8 = 6;
    pub const GLOBULES: u8 = 7;
    /// Number of semantic classes, border included.
    pub const NUM_LABELS: usize = 8;
}

/// One of the five annotated malignancy markers, in label-code order.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, serde::Serialize, serde::Deserialize,
)]
#[serde(rename_all = "snake_case")]
pub enum Marker {
    PigmentNetwork,
    NegativeNetwork,
    Streaks,
    MiliaLikeCyst,
    Globules,
}

impl Marker {
    pub const ALL: [Marker; 5] = [
        Marker::PigmentNetwork,
        Marker::NegativeNetwork,
        Marker::Streaks,
        Marker::MiliaLikeCyst,
        Marker::Globules,
    ];

    pub fn code(self) -> u8 {
        labels::PIGMENT_NETWORK + self as u8
    }

    /// Name used in archive file names, e.g. `ISIC_0000000_attribute_streaks.png`.
    pub fn name(self) -> &'static str {
        match self {
            Marker::PigmentNetwork => "pigment_network",
            Marker::NegativeNetwork => "negative_network",
            Marker::Streaks => "streaks",
            Marker::MiliaLikeCyst => "milia_like_cyst",
            Marker::Globules => "globules",
        }
    }

    pub fn from_name(name: &str) -> Option<Marker> {
        Marker::ALL.into_iter().find(|m| m.name() == name)
    }
}

/// Binary per-pixel mask (`1` = inside).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinaryMask {
    width: u32,
    height: u32,
    data: Vec<u8>,
}

impl BinaryMask {
    pub fn new(width: u32, height: u32, data: Vec<u8>) -> Result<Self> {
        check_dims(width, height, data.len())?;
        if data.iter().any(|&v| v > 1) {
            return Err(Error::invalid("binary mask values must be 0 or 1"));
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn zeros(width: u32, height: u32) -> Self {
        Self {
            width,
            height,
            data: vec![0; (width * height) as usize],
        }
    }

    pub fn from_fn(width: u32, height: u32, mut f: impl FnMut(u32, u32) -> bool) -> Self {
        let mut data = Vec::with_capacity((width * height) as usize);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y) as u8);
            }
        }
        Self {
            width,
            height,
            data,
        }
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn get(&self, x: u32, y: u32) -> bool {
        self.data[(y * self.width + x) as usize] == 1
    }

    pub fn set(&mut self, x: u32, y: u32, value: bool) {
        self.data[(y * self.width + x) as usize] = value as u8;
    }

    pub fn as_slice(&self) -> &[u8] {
        &self.data
    }

    pub fn count_ones(&self) -> usize {
        self.data.iter().filter(|&&v| v == 1).count()
    }
}

/// The five marker masks of one lesion, stored in code order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AttributeMaskSet {
    masks: [BinaryMask; 5],
}

impl AttributeMaskSet {
    /// Builds the set from `(marker, mask)` pairs given in any order. Every
    /// marker must appear exactly once and all masks must share dimensions.
    pub fn new(entries: impl IntoIterator<Item = (Marker, BinaryMask)>) -> Result<Self> {
        let mut slots: [Option<BinaryMask>; 5] = Default::default();
        for (marker, mask) in entries {
            let slot = &mut slots[marker as usize];
            if slot.is_some() {
                return Err(Error::invalid(format!(
                    "duplicate attribute mask `{}`",
                    marker.name()
                )));
            }
            *slot = Some(mask);
        }
        let mut missing = Vec::new();
        for (i, slot) in slots.iter().enumerate() {
            if slot.is_none() {
                missing.push(Marker::ALL[i].name());
            }
        }
        if !missing.is_empty() {
            return Err(Error::invalid(format!(
                "missing attribute masks: {}",
                missing.join(", ")
            )));
        }
        let masks = slots.map(|m| m.expect("checked above"));
        let (w, h) = (masks[0].width, masks[0].height);
        if masks.iter().any(|m| m.width != w || m.height != h) {
            return Err(Error::invalid("attribute masks differ in dimensions"));
        }
        Ok(Self { masks })
    }

    /// All-empty marker set of the given size.
    pub fn empty(width: u32, height: u32) -> Self {
        Self {
            masks: std::array::from_fn(|_| BinaryMask::zeros(width, height)),
        }
    }

    pub fn get(&self, marker: Marker) -> &BinaryMask {
        &self.masks[marker as usize]
    }

    pub fn get_mut(&mut self, marker: Marker) -> &mut BinaryMask {
        &mut self.masks[marker as usize]
    }

    pub fn width(&self) -> u32 {
        self.masks[0].width
    }

    pub fn height(&self) -> u32 {
        self.masks[0].height
    }

    pub fn iter(&self) -> impl Iterator<Item = (Marker, &BinaryMask)> {
        Marker::ALL.into_iter().zip(self.masks.iter())
    }
}

/// Per-pixel class codes in `0..8`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SemanticLabelMap {
    width: u32,
    height: u32,
    labels: Vec<u8>,
}

impl SemanticLabelMap {
    pub fn new(width: u32, height: u32, labels: Vec<u8>) -> Result<Self> {
        check_dims(width, height, labels.len())?;
        if let Some(bad) = labels.iter().find(|&&l| l as usize >= labels::NUM_LABELS) {
            return Err(Error::invalid(format!("semantic label {bad} out of range")));
        }
        Ok(Self {
            width,
            height,
            labels,
        })
    }

    /// Like [`SemanticLabelMap::new`] but without the label range check, so
    /// that [`one_hot`] can be exercised against arbitrary label counts.
    pub fn from_raw(width: u32, height: u32, labels: Vec<u8>) -> Result<Self> {
        check_dims(width, height, labels.len())?;
        Ok(Self {
            width,
            height,
            labels,
        })
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn get(&self, x: u32, y: u32) -> u8 {
        self.labels[(y * self.width + x) as usize]
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }
}

/// Superpixel (instance) id per pixel.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InstanceMap {
    width: u32,
    height: u32,
    ids: Vec<u32>,
}

impl InstanceMap {
    pub fn new(width: u32, height: u32, ids: Vec<u32>) -> Result<Self> {
        check_dims(width, height, ids.len())?;
        Ok(Self { width, height, ids })
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn get(&self, x: u32, y: u32) -> u32 {
        self.ids[(y * self.width + x) as usize]
    }

    pub fn ids(&self) -> &[u32] {
        &self.ids
    }

    /// Number of distinct ids present.
    pub fn count_instances(&self) -> usize {
        let mut ids = self.ids.clone();
        ids.sort_unstable();
        ids.dedup();
        ids.len()
    }
}

/// Instance-edge mask: `1` where some 4-neighbor carries a different id.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BoundaryMap {
    width: u32,
    height: u32,
    values: Vec<u8>,
}

impl BoundaryMap {
    pub fn new(width: u32, height: u32, values: Vec<u8>) -> Result<Self> {
        check_dims(width, height, values.len())?;
        if values.iter().any(|&v| v > 1) {
            return Err(Error::invalid("boundary values must be 0 or 1"));
        }
        Ok(Self {
            width,
            height,
            values,
        })
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn get(&self, x: u32, y: u32) -> u8 {
        self.values[(y * self.width + x) as usize]
    }

    pub fn values(&self) -> &[u8] {
        &self.values
    }
}

/// Channel-major `C×H×W` indicator tensor fed to the generator.
#[derive(Debug, Clone, PartialEq)]
pub struct OneHotTensor {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub data: Vec<f32>,
}

impl OneHotTensor {
    pub fn get(&self, c: usize, y: usize, x: usize) -> f32 {
        self.data[(c * self.height + y) * self.width + x]
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        (self.channels, self.height, self.width)
    }
}

/// Raster of per-pixel codes that can be letterboxed.
pub trait LabelRaster: Sized {
    type Value: Copy + PartialEq;

    fn width(&self) -> u32;
    fn height(&self) -> u32;
    fn values(&self) -> &[Self::Value];
    fn from_values(width: u32, height: u32, values: Vec<Self::Value>) -> Self;
}

impl LabelRaster for SemanticLabelMap {
    type Value = u8;

    fn width(&self) -> u32 {
        self.width
    }
    fn height(&self) -> u32 {
        self.height
    }
    fn values(&self) -> &[u8] {
        &self.labels
    }
    fn from_values(width: u32, height: u32, labels: Vec<u8>) -> Self {
        Self {
            width,
            height,
            labels,
        }
    }
}

impl LabelRaster for InstanceMap {
    type Value = u32;

    fn width(&self) -> u32 {
        self.width
    }
    fn height(&self) -> u32 {
        self.height
    }
    fn values(&self) -> &[u32] {
        &self.ids
    }
    fn from_values(width: u32, height: u32, ids: Vec<u32>) -> Self {
        Self { width, height, ids }
    }
}

impl LabelRaster for BinaryMask {
    type Value = u8;

    fn width(&self) -> u32 {
        self.width
    }
    fn height(&self) -> u32 {
        self.height
    }
    fn values(&self) -> &[u8] {
        &self.data
    }
    fn from_values(width: u32, height: u32, data: Vec<u8>) -> Self {
        Self {
            width,
            height,
            data,
        }
    }
}

fn check_dims(width: u32, height: u32, len: usize) -> Result<()> {
    if width == 0 || height == 0 {
        return Err(Error::invalid(format!(
            "raster dimensions must be positive, got {width}x{height}"
        )));
    }
    if (width as usize) * (height as usize) != len {
        return Err(Error::invalid(format!(
            "raster of {width}x{height} needs {} values, got {len}",
            width as usize * height as usize
        )));
    }
    Ok(())
}

use std::path::Path;

use image::{GrayImage, Luma, Rgb, RgbImage};
use serde::{Deserialize, Serialize};

use super::{BinaryMask, BoundaryMap, InstanceMap, SemanticLabelMap};
use crate::error::{Error, Result};
use crate::fsutil::{open_image, write_png};

/// Packing of superpixel ids into RGB rasters. `order` lists the channel
/// index (0=R, 1=G, 2=B) holding the least, middle and most significant byte.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SuperpixelIdCodec {
    pub order: [usize; 3],
}

impl Default for SuperpixelIdCodec {
    /// `id = R + 256·G + 65536·B`, as shipped by the ISIC archive.
    fn default() -> Self {
        Self { order: [0, 1, 2] }
    }
}

impl SuperpixelIdCodec {
    pub fn validate(&self) -> Result<()> {
        let mut seen = [false; 3];
        for &c in &self.order {
            if c > 2 || seen[c] {
                return Err(Error::invalid(format!(
                    "superpixel channel order {:?} is not a permutation of 0,1,2",
                    self.order
                )));
            }
            seen[c] = true;
        }
        Ok(())
    }

    pub fn decode(&self, image: &RgbImage) -> InstanceMap {
        let [lo, mid, hi] = self.order;
        let ids = image
            .pixels()
            .map(|p| p[lo] as u32 | (p[mid] as u32) << 8 | (p[hi] as u32) << 16)
            .collect();
        InstanceMap::new(image.width(), image.height(), ids).expect("dimensions from image")
    }

    pub fn encode(&self, map: &InstanceMap) -> Result<RgbImage> {
        if let Some(&id) = map.ids().iter().find(|&&id| id >= 1 << 24) {
            return Err(Error::invalid(format!(
                "instance id {id} does not fit in 24 bits"
            )));
        }
        let [lo, mid, hi] = self.order;
        let w = map.width();
        Ok(RgbImage::from_fn(w, map.height(), |x, y| {
            let id = map.ids()[(y * w + x) as usize];
            let mut px = [0u8; 3];
            px[lo] = id as u8;
            px[mid] = (id >> 8) as u8;
            px[hi] = (id >> 16) as u8;
            Rgb(px)
        }))
    }
}

/// Decodes an archive superpixel raster with the default id packing.
pub fn decode_superpixel_png(image: &RgbImage) -> InstanceMap {
    SuperpixelIdCodec::default().decode(image)
}

pub fn load_rgb(path: &Path) -> Result<RgbImage> {
    Ok(open_image(path)?.to_rgb8())
}

/// Reads an 8-bit mask, thresholding at `> 127`.
pub fn load_mask(path: &Path) -> Result<BinaryMask> {
    let gray = open_image(path)?.to_luma8();
    let data = gray.pixels().map(|p| (p[0] > 127) as u8).collect();
    BinaryMask::new(gray.width(), gray.height(), data)
}

/// Single-channel PNG holding the raw codes 0–7.
pub fn write_semantic_map(map: &SemanticLabelMap, path: &Path) -> Result<()> {
    let img = GrayImage::from_raw(map.width(), map.height(), map.labels().to_vec())
        .expect("buffer matches dimensions");
    write_png(&image::DynamicImage::ImageLuma8(img), path)
}

pub fn read_semantic_map(path: &Path) -> Result<SemanticLabelMap> {
    let gray = open_image(path)?.to_luma8();
    let (w, h) = gray.dimensions();
    SemanticLabelMap::new(w, h, gray.into_raw())
}

pub fn write_instance_map(map: &InstanceMap, codec: &SuperpixelIdCodec, path: &Path) -> Result<()> {
    write_png(&image::DynamicImage::ImageRgb8(codec.encode(map)?), path)
}

pub fn read_instance_map(path: &Path, codec: &SuperpixelIdCodec) -> Result<InstanceMap> {
    Ok(codec.decode(&load_rgb(path)?))
}

/// Binary PNG: 0 or 255.
pub fn write_boundary_map(map: &BoundaryMap, path: &Path) -> Result<()> {
    let w = map.width();
    let img = GrayImage::from_fn(w, map.height(), |x, y| Luma([map.get(x, y) * 255]));
    write_png(&image::DynamicImage::ImageLuma8(img), path)
}

pub fn read_boundary_map(path: &Path) -> Result<BoundaryMap> {
    let mask = load_mask(path)?;
    BoundaryMap::new(mask.width(), mask.height(), mask.as_slice().to_vec())
}

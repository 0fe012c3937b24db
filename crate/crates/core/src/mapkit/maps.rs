use image::{imageops, RgbImage};

use super::{
    labels, AttributeMaskSet, BinaryMask, BoundaryMap, InstanceMap, LabelRaster, OneHotTensor,
    SemanticLabelMap,
};
use crate::error::{Error, Result};

/// Combines a lesion segmentation mask and the five marker masks into a
/// semantic label map.
///
/// Where several markers overlap the lowest code wins. Marker pixels outside
/// the segmentation keep their marker code.
pub fn build_semantic_map(
    seg: &BinaryMask,
    markers: &AttributeMaskSet,
) -> Result<SemanticLabelMap> {
    if seg.width() != markers.width() || seg.height() != markers.height() {
        return Err(Error::invalid(format!(
            "segmentation is {}x{} but attribute masks are {}x{}",
            seg.width(),
            seg.height(),
            markers.width(),
            markers.height()
        )));
    }
    let n = seg.as_slice().len();
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let marker = markers
            .iter()
            .find(|(_, mask)| mask.as_slice()[i] == 1)
            .map(|(m, _)| m.code());
        out.push(match marker {
            Some(code) => code,
            None if seg.as_slice()[i] == 1 => labels::LESION,
            None => labels::SKIN,
        });
    }
    SemanticLabelMap::new(seg.width(), seg.height(), out)
}

/// Placement of scaled content inside a letterbox canvas.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LetterboxGeometry {
    pub content_width: u32,
    pub content_height: u32,
    pub offset_x: u32,
    pub offset_y: u32,
}

/// Computes the aspect-preserving placement of a `width×height` raster on a
/// `target_width×target_height` canvas. The scaled side is rounded half-up;
/// an odd padding pixel goes to the right/bottom.
pub fn letterbox_geometry(
    width: u32,
    height: u32,
    target_width: u32,
    target_height: u32,
) -> Result<LetterboxGeometry> {
    if width == 0 || height == 0 || target_width == 0 || target_height == 0 {
        return Err(Error::invalid("letterbox dimensions must be positive"));
    }
    let (w, h) = (width as u64, height as u64);
    let (tw, th) = (target_width as u64, target_height as u64);
    // s = min(tw/w, th/h), compared exactly as tw*h <= th*w.
    let (cw, ch) = if tw * h <= th * w {
        (tw, ((2 * h * tw + w) / (2 * w)).clamp(1, th))
    } else {
        (((2 * w * th + h) / (2 * h)).clamp(1, tw), th)
    };
    Ok(LetterboxGeometry {
        content_width: cw as u32,
        content_height: ch as u32,
        offset_x: ((tw - cw) / 2) as u32,
        offset_y: ((th - ch) / 2) as u32,
    })
}

/// Nearest-neighbor, aspect-preserving resize onto a canvas filled with
/// `fill` (the border label for semantic maps, a fresh id for instance maps).
pub fn letterbox<M: LabelRaster>(
    map: &M,
    target_width: u32,
    target_height: u32,
    fill: M::Value,
) -> Result<M> {
    let g = letterbox_geometry(map.width(), map.height(), target_width, target_height)?;
    let (w, h) = (map.width() as u64, map.height() as u64);
    let src = map.values();
    let mut out = vec![fill; target_width as usize * target_height as usize];
    let xs: Vec<usize> = (0..g.content_width as u64)
        .map(|dx| (((2 * dx + 1) * w) / (2 * g.content_width as u64)).min(w - 1) as usize)
        .collect();
    for dy in 0..g.content_height as u64 {
        let sy = (((2 * dy + 1) * h) / (2 * g.content_height as u64)).min(h - 1) as usize;
        let row = (dy as usize + g.offset_y as usize) * target_width as usize;
        for (dx, &sx) in xs.iter().enumerate() {
            out[row + g.offset_x as usize + dx] = src[sy * w as usize + sx];
        }
    }
    Ok(M::from_values(target_width, target_height, out))
}

/// Letterboxes a photograph with the same geometry as [`letterbox`], using
/// bilinear resampling and black padding.
pub fn letterbox_image(img: &RgbImage, target_width: u32, target_height: u32) -> Result<RgbImage> {
    let g = letterbox_geometry(img.width(), img.height(), target_width, target_height)?;
    let scaled = if (g.content_width, g.content_height) == img.dimensions() {
        img.clone()
    } else {
        imageops::resize(
            img,
            g.content_width,
            g.content_height,
            imageops::FilterType::Triangle,
        )
    };
    let mut canvas = RgbImage::new(target_width, target_height);
    imageops::replace(&mut canvas, &scaled, g.offset_x as i64, g.offset_y as i64);
    Ok(canvas)
}

/// Smallest id not used by `map`; used as the letterbox fill for instance maps.
pub fn fresh_instance_id(map: &InstanceMap) -> u32 {
    map.ids().iter().copied().max().map_or(0, |m| m + 1)
}

pub fn boundary_map(inst: &InstanceMap) -> BoundaryMap {
    let (w, h) = (inst.width() as usize, inst.height() as usize);
    let ids = inst.ids();
    let mut out = vec![0u8; w * h];
    for y in 0..h {
        for x in 0..w {
            let id = ids[y * w + x];
            let differs = (x > 0 && ids[y * w + x - 1] != id)
                || (x + 1 < w && ids[y * w + x + 1] != id)
                || (y > 0 && ids[(y - 1) * w + x] != id)
                || (y + 1 < h && ids[(y + 1) * w + x] != id);
            out[y * w + x] = differs as u8;
        }
    }
    BoundaryMap::new(inst.width(), inst.height(), out).expect("dimensions copied from input")
}

/// Encodes labels as `num_labels` indicator planes, optionally followed by the
/// boundary plane.
pub fn one_hot(
    map: &SemanticLabelMap,
    num_labels: usize,
    boundary: Option<&BoundaryMap>,
) -> Result<OneHotTensor> {
    let (w, h) = (map.width() as usize, map.height() as usize);
    if let Some(b) = boundary {
        if b.width() != map.width() || b.height() != map.height() {
            return Err(Error::invalid(format!(
                "boundary map is {}x{} but label map is {}x{}",
                b.width(),
                b.height(),
                w,
                h
            )));
        }
    }
    let channels = num_labels + boundary.is_some() as usize;
    let plane = w * h;
    let mut data = vec![0f32; channels * plane];
    for (i, &label) in map.labels().iter().enumerate() {
        if label as usize >= num_labels {
            return Err(Error::invalid(format!(
                "label {label} at pixel {i} is not below num_labels={num_labels}"
            )));
        }
        data[label as usize * plane + i] = 1.0;
    }
    if let Some(b) = boundary {
        for (i, &v) in b.values().iter().enumerate() {
            data[num_labels * plane + i] = v as f32;
        }
    }
    Ok(OneHotTensor {
        channels,
        height: h,
        width: w,
        data,
    })
}

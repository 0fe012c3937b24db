//! Random flips, rotations and color jitter for classifier training and
//! test-time augmentation.

use image::{Rgb, RgbImage};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AugmentParams {
    pub hflip_probability: f64,
    pub vflip_probability: f64,
    /// Rotation angle is uniform in `[0, max_rotation_deg)`.
    pub max_rotation_deg: f64,
    /// Multiplicative factor ranges `[lo, hi]`.
    pub brightness: [f64; 2],
    pub contrast: [f64; 2],
    pub saturation: [f64; 2],
}

impl Default for AugmentParams {
    fn default() -> Self {
        Self {
            hflip_probability: 0.5,
            vflip_probability: 0.5,
            max_rotation_deg: 360.0,
            brightness: [0.9, 1.1],
            contrast: [0.9, 1.1],
            saturation: [0.9, 1.1],
        }
    }
}

impl AugmentParams {
    /// Leaves every image untouched.
    pub fn identity() -> Self {
        Self {
            hflip_probability: 0.0,
            vflip_probability: 0.0,
            max_rotation_deg: 0.0,
            brightness: [1.0, 1.0],
            contrast: [1.0, 1.0],
            saturation: [1.0, 1.0],
        }
    }

    /// Flips only.
    pub fn geometric_flips() -> Self {
        Self {
            hflip_probability: 0.5,
            vflip_probability: 0.5,
            ..Self::identity()
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, p) in [
            ("hflip_probability", self.hflip_probability),
            ("vflip_probability", self.vflip_probability),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::invalid(format!("{name} must lie in [0, 1]")));
            }
        }
        if !(self.max_rotation_deg.is_finite() && (0.0..=360.0).contains(&self.max_rotation_deg)) {
            return Err(Error::invalid("max_rotation_deg must lie in [0, 360]"));
        }
        for (name, [lo, hi]) in [
            ("brightness", self.brightness),
            ("contrast", self.contrast),
            ("saturation", self.saturation),
        ] {
            if !(lo.is_finite() && hi.is_finite() && 0.0 <= lo && lo <= hi) {
                return Err(Error::invalid(format!(
                    "{name} range must satisfy 0 ≤ lo ≤ hi"
                )));
            }
        }
        Ok(())
    }
}

/// Draws from `[lo, hi)`; a collapsed range returns `lo` but still consumes
/// one draw, so the stream stays aligned whatever the configuration.
fn draw(rng: &mut impl Rng, [lo, hi]: [f64; 2]) -> f64 {
    let u: f64 = rng.gen();
    lo + (hi - lo) * u
}

/// Applies one random draw of every transform. Exactly six values are taken
/// from `rng` per call.
pub fn augment(image: &RgbImage, params: &AugmentParams, rng: &mut impl Rng) -> RgbImage {
    let hflip = rng.gen::<f64>() < params.hflip_probability;
    let vflip = rng.gen::<f64>() < params.vflip_probability;
    let angle = draw(rng, [0.0, params.max_rotation_deg]);
    let brightness = draw(rng, params.brightness);
    let contrast = draw(rng, params.contrast);
    let saturation = draw(rng, params.saturation);

    let mut out = image.clone();
    if hflip {
        image::imageops::flip_horizontal_in_place(&mut out);
    }
    if vflip {
        image::imageops::flip_vertical_in_place(&mut out);
    }
    if angle == 0.0 && brightness == 1.0 && contrast == 1.0 && saturation == 1.0 {
        return out;
    }
    let (w, h) = out.dimensions();
    let mut px: Vec<[f32; 3]> = out.pixels().map(|p| p.0.map(f32::from)).collect();
    if angle != 0.0 {
        px = rotate(&px, w as usize, h as usize, angle);
    }
    jitter(
        &mut px,
        brightness as f32,
        contrast as f32,
        saturation as f32,
    );
    RgbImage::from_fn(w, h, |x, y| {
        let p = px[(y * w + x) as usize];
        Rgb(p.map(|v| v.round().clamp(0.0, 255.0) as u8))
    })
}

/// Mirrors a continuous coordinate into `[0, n − 1]` without repeating the
/// edge sample.
fn reflect(u: f64, n: usize) -> f64 {
    if n == 1 {
        return 0.0;
    }
    let last = (n - 1) as f64;
    let m = u.rem_euclid(2.0 * last);
    if m > last {
        2.0 * last - m
    } else {
        m
    }
}

/// Counter-clockwise rotation about the image center, bilinear sampling.
fn rotate(px: &[[f32; 3]], w: usize, h: usize, degrees: f64) -> Vec<[f32; 3]> {
    let (sin, cos) = degrees.to_radians().sin_cos();
    let (cx, cy) = ((w as f64 - 1.0) / 2.0, (h as f64 - 1.0) / 2.0);
    let mut out = vec![[0f32; 3]; w * h];
    for y in 0..h {
        for x in 0..w {
            let (dx, dy) = (x as f64 - cx, y as f64 - cy);
            // Inverse map; image y points down.
            let sx = reflect(cx + cos * dx - sin * dy, w);
            let sy = reflect(cy + sin * dx + cos * dy, h);
            let (x0, y0) = (sx.floor() as usize, sy.floor() as usize);
            let (x1, y1) = ((x0 + 1).min(w - 1), (y0 + 1).min(h - 1));
            let (fx, fy) = ((sx - x0 as f64) as f32, (sy - y0 as f64) as f32);
            let at = |xx: usize, yy: usize| px[yy * w + xx];
            let (a, b, c, d) = (at(x0, y0), at(x1, y0), at(x0, y1), at(x1, y1));
            for k in 0..3 {
                let top = a[k] + (b[k] - a[k]) * fx;
                let bottom = c[k] + (d[k] - c[k]) * fx;
                out[y * w + x][k] = top + (bottom - top) * fy;
            }
        }
    }
    out
}

fn gray(p: &[f32; 3]) -> f32 {
    0.299 * p[0] + 0.587 * p[1] + 0.114 * p[2]
}

fn jitter(px: &mut [[f32; 3]], brightness: f32, contrast: f32, saturation: f32) {
    let clamp = |v: f32| v.clamp(0.0, 255.0);
    if brightness != 1.0 {
        px.iter_mut()
            .for_each(|p| *p = p.map(|v| clamp(v * brightness)));
    }
    if contrast != 1.0 && !px.is_empty() {
        let mean = px.iter().map(gray).sum::<f32>() / px.len() as f32;
        px.iter_mut()
            .for_each(|p| *p = p.map(|v| clamp((v - mean) * contrast + mean)));
    }
    if saturation != 1.0 {
        for p in px.iter_mut() {
            let g = gray(p);
            *p = p.map(|v| clamp(g + (v - g) * saturation));
        }
    }
}

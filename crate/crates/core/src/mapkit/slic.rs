//! SLIC superpixels: k-means over CIELAB color and pixel position, restricted
//! to a local window around every center, followed by a connectivity pass.

use std::collections::VecDeque;

use image::{DynamicImage, RgbImage};
use serde::{Deserialize, Serialize};

use super::InstanceMap;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SlicParams {
    /// Target number of superpixels.
    pub num_superpixels: usize,
    /// Weight of spatial proximity against color proximity.
    pub compactness: f64,
    pub max_iter: usize,
}

impl Default for SlicParams {
    fn default() -> Self {
        Self {
            num_superpixels: 200,
            compactness: 10.0,
            max_iter: 10,
        }
    }
}

impl SlicParams {
    pub fn run(&self, image: &RgbImage) -> Result<InstanceMap> {
        slic_superpixels(image, self.num_superpixels, self.compactness, self.max_iter)
    }
}

/// Accepts only 8-bit RGB rasters.
pub fn slic_from_dynamic(
    image: &DynamicImage,
    k: usize,
    compactness: f64,
    max_iter: usize,
) -> Result<InstanceMap> {
    match image {
        DynamicImage::ImageRgb8(rgb) => slic_superpixels(rgb, k, compactness, max_iter),
        other => Err(Error::invalid(format!(
            "SLIC needs an 8-bit RGB image, got {:?}",
            other.color()
        ))),
    }
}

#[derive(Debug, Clone, Copy)]
struct Center {
    l: f64,
    a: f64,
    b: f64,
    x: f64,
    y: f64,
}

/// Partitions `image` into roughly `k` compact, 4-connected superpixels.
pub fn slic_superpixels(
    image: &RgbImage,
    k: usize,
    compactness: f64,
    max_iter: usize,
) -> Result<InstanceMap> {
    let (w, h) = (image.width() as usize, image.height() as usize);
    let n = w * h;
    if n == 0 {
        return Err(Error::invalid("SLIC input image is empty"));
    }
    if k == 0 || k > n {
        return Err(Error::invalid(format!(
            "superpixel count must be in 1..={n}, got {k}"
        )));
    }
    if !(compactness > 0.0 && compactness.is_finite()) {
        return Err(Error::invalid("compactness must be positive"));
    }
    if max_iter == 0 {
        return Err(Error::invalid("max_iter must be at least 1"));
    }

    let lab = to_lab(image);
    let step = (n as f64 / k as f64).sqrt();
    let mut centers = seed_centers(&lab, w, h, step);

    let spatial_weight = (compactness / step).powi(2);
    let mut labels = vec![usize::MAX; n];
    let mut dist = vec![f64::INFINITY; n];
    for _ in 0..max_iter {
        dist.fill(f64::INFINITY);
        let mut next = vec![usize::MAX; n];
        for (ci, c) in centers.iter().enumerate() {
            let x0 = (c.x - step).floor().max(0.0) as usize;
            let x1 = ((c.x + step).ceil() as usize).min(w - 1);
            let y0 = (c.y - step).floor().max(0.0) as usize;
            let y1 = ((c.y + step).ceil() as usize).min(h - 1);
            for y in y0..=y1 {
                for x in x0..=x1 {
                    let p = y * w + x;
                    let d = distance2(c, &lab[p], x, y, spatial_weight);
                    if d < dist[p] {
                        dist[p] = d;
                        next[p] = ci;
                    }
                }
            }
        }
        // Pixels outside every window fall back to the globally nearest center.
        for p in 0..n {
            if next[p] == usize::MAX {
                let (x, y) = (p % w, p / w);
                next[p] = nearest_center(&centers, &lab[p], x, y, spatial_weight);
            }
        }
        let converged = next == labels;
        labels = next;
        update_centers(&mut centers, &labels, &lab, w);
        if converged {
            break;
        }
    }

    let min_size = ((step * step) / 4.0).floor().max(1.0) as usize;
    let ids = enforce_connectivity(&labels, w, h, min_size);
    InstanceMap::new(w as u32, h as u32, ids)
}

fn distance2(c: &Center, px: &[f64; 3], x: usize, y: usize, spatial_weight: f64) -> f64 {
    let dc = (c.l - px[0]).powi(2) + (c.a - px[1]).powi(2) + (c.b - px[2]).powi(2);
    let ds = (c.x - x as f64).powi(2) + (c.y - y as f64).powi(2);
    dc + ds * spatial_weight
}

fn nearest_center(
    centers: &[Center],
    px: &[f64; 3],
    x: usize,
    y: usize,
    spatial_weight: f64,
) -> usize {
    let mut best = (f64::INFINITY, 0);
    for (i, c) in centers.iter().enumerate() {
        let d = distance2(c, px, x, y, spatial_weight);
        if d < best.0 {
            best = (d, i);
        }
    }
    best.1
}

/// Regular grid with spacing close to `step`, each seed nudged to the
/// lowest-gradient pixel of its 3×3 neighborhood when that is strictly lower.
fn seed_centers(lab: &[[f64; 3]], w: usize, h: usize, step: f64) -> Vec<Center> {
    let nx = ((w as f64 / step).round() as usize).clamp(1, w);
    let ny = ((h as f64 / step).round() as usize).clamp(1, h);
    let (sx, sy) = (w as f64 / nx as f64, h as f64 / ny as f64);
    let grad = |x: usize, y: usize| -> f64 {
        let at = |x: usize, y: usize| &lab[y * w + x];
        let (xl, xr) = (x.saturating_sub(1), (x + 1).min(w - 1));
        let (yu, yd) = (y.saturating_sub(1), (y + 1).min(h - 1));
        (0..3)
            .map(|c| (at(xr, y)[c] - at(xl, y)[c]).powi(2) + (at(x, yd)[c] - at(x, yu)[c]).powi(2))
            .sum()
    };

    let mut centers = Vec::with_capacity(nx * ny);
    for j in 0..ny {
        for i in 0..nx {
            let mut cx = (i as f64 + 0.5) * sx - 0.5;
            let mut cy = (j as f64 + 0.5) * sy - 0.5;
            let px = (cx.round().max(0.0) as usize).min(w - 1);
            let py = (cy.round().max(0.0) as usize).min(h - 1);
            let mut best = (grad(px, py), px, py);
            let mut moved = false;
            for y in py.saturating_sub(1)..=(py + 1).min(h - 1) {
                for x in px.saturating_sub(1)..=(px + 1).min(w - 1) {
                    let g = grad(x, y);
                    if g < best.0 {
                        best = (g, x, y);
                        moved = true;
                    }
                }
            }
            if moved {
                cx = best.1 as f64;
                cy = best.2 as f64;
            }
            let c = lab[best.2 * w + best.1];
            centers.push(Center {
                l: c[0],
                a: c[1],
                b: c[2],
                x: cx,
                y: cy,
            });
        }
    }
    centers
}

fn update_centers(centers: &mut [Center], labels: &[usize], lab: &[[f64; 3]], w: usize) {
    let mut sums = vec![[0f64; 6]; centers.len()];
    for (p, &ci) in labels.iter().enumerate() {
        let s = &mut sums[ci];
        s[0] += lab[p][0];
        s[1] += lab[p][1];
        s[2] += lab[p][2];
        s[3] += (p % w) as f64;
        s[4] += (p / w) as f64;
        s[5] += 1.0;
    }
    for (c, s) in centers.iter_mut().zip(&sums) {
        if s[5] > 0.0 {
            *c = Center {
                l: s[0] / s[5],
                a: s[1] / s[5],
                b: s[2] / s[5],
                x: s[3] / s[5],
                y: s[4] / s[5],
            };
        }
    }
}

/// Splits every cluster into 4-connected components, merges components
/// smaller than `min_size` into their largest neighboring region, and
/// renumbers regions in scan order.
fn enforce_connectivity(labels: &[usize], w: usize, h: usize, min_size: usize) -> Vec<u32> {
    let n = w * h;
    let mut comp = vec![usize::MAX; n];
    let mut sizes = Vec::new();
    let mut queue = VecDeque::new();
    for start in 0..n {
        if comp[start] != usize::MAX {
            continue;
        }
        let id = sizes.len();
        let label = labels[start];
        comp[start] = id;
        queue.push_back(start);
        let mut size = 0;
        while let Some(p) = queue.pop_front() {
            size += 1;
            for q in neighbors4(p, w, h) {
                if comp[q] == usize::MAX && labels[q] == label {
                    comp[q] = id;
                    queue.push_back(q);
                }
            }
        }
        sizes.push(size);
    }

    let ncomp = sizes.len();
    let mut adjacency = vec![Vec::new(); ncomp];
    for p in 0..n {
        for q in neighbors4(p, w, h) {
            let (a, b) = (comp[p], comp[q]);
            if a != b && !adjacency[a].contains(&b) {
                adjacency[a].push(b);
            }
        }
    }

    let mut parent: Vec<usize> = (0..ncomp).collect();
    let mut group_size = sizes.clone();
    let mut order: Vec<usize> = (0..ncomp).filter(|&c| sizes[c] < min_size).collect();
    order.sort_by_key(|&c| (sizes[c], c));
    for c in order {
        let root = find(&mut parent, c);
        if group_size[root] >= min_size {
            continue;
        }
        let mut best: Option<(usize, usize)> = None;
        for &nb in &adjacency[c] {
            let r = find(&mut parent, nb);
            if r == root {
                continue;
            }
            let candidate = (group_size[r], r);
            let better = match best {
                None => true,
                Some((s, br)) => candidate.0 > s || (candidate.0 == s && r < br),
            };
            if better {
                best = Some(candidate);
            }
        }
        if let Some((_, target)) = best {
            parent[root] = target;
            group_size[target] += group_size[root];
        }
    }

    let mut renumber = vec![u32::MAX; ncomp];
    let mut next = 0u32;
    let mut out = Vec::with_capacity(n);
    for &c in comp.iter() {
        let r = find(&mut parent, c);
        if renumber[r] == u32::MAX {
            renumber[r] = next;
            next += 1;
        }
        out.push(renumber[r]);
    }
    out
}

fn find(parent: &mut [usize], mut x: usize) -> usize {
    while parent[x] != x {
        parent[x] = parent[parent[x]];
        x = parent[x];
    }
    x
}

fn neighbors4(p: usize, w: usize, h: usize) -> impl Iterator<Item = usize> {
    let (x, y) = (p % w, p / w);
    [
        (x > 0).then(|| p - 1),
        (x + 1 < w).then(|| p + 1),
        (y > 0).then(|| p - w),
        (y + 1 < h).then(|| p + w),
    ]
    .into_iter()
    .flatten()
}

/// sRGB (D65) to CIELAB.
fn to_lab(image: &RgbImage) -> Vec<[f64; 3]> {
    let linear: Vec<f64> = (0..256)
        .map(|v| {
            let c = v as f64 / 255.0;
            if c <= 0.04045 {
                c / 12.92
            } else {
                ((c + 0.055) / 1.055).powf(2.4)
            }
        })
        .collect();
    let f = |t: f64| {
        const EPS: f64 = 216.0 / 24389.0;
        if t > EPS {
            t.cbrt()
        } else {
            t * (24389.0 / 27.0) / 116.0 + 16.0 / 116.0
        }
    };
    image
        .pixels()
        .map(|p| {
            let (r, g, b) = (
                linear[p[0] as usize],
                linear[p[1] as usize],
                linear[p[2] as usize],
            );
            let x = (0.4124564 * r + 0.3575761 * g + 0.1804375 * b) / 0.95047;
            let y = 0.2126729 * r + 0.7151522 * g + 0.0721750 * b;
            let z = (0.0193339 * r + 0.1191920 * g + 0.9503041 * b) / 1.08883;
            let (fx, fy, fz) = (f(x), f(y), f(z));
            [116.0 * fy - 16.0, 500.0 * (fx - fy), 200.0 * (fy - fz)]
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use image::Rgb;

    #[test]
    fn lab_of_white_and_black() {
        let img = RgbImage::from_fn(
            2,
            1,
            |x, _| if x == 0 { Rgb([255; 3]) } else { Rgb([0; 3]) },
        );
        let lab = to_lab(&img);
        assert!(
            (lab[0][0] - 100.0).abs() < 1e-3 && lab[0][1].abs() < 1e-2 && lab[0][2].abs() < 1e-2
        );
        assert!(lab[1][0].abs() < 1e-9);
    }

    #[test]
    fn single_superpixel_for_k_one() {
        let img = RgbImage::from_fn(13, 7, |x, y| Rgb([(x * 19) as u8, (y * 31) as u8, 90]));
        let map = slic_superpixels(&img, 1, 10.0, 10).unwrap();
        assert!(map.ids().iter().all(|&id| id == 0));
    }

    #[test]
    fn rejects_bad_arguments() {
        let img = RgbImage::new(4, 4);
        assert!(slic_superpixels(&img, 17, 10.0, 5).is_err());
        assert!(slic_superpixels(&img, 0, 10.0, 5).is_err());
        assert!(slic_superpixels(&img, 4, 0.0, 5).is_err());
        assert!(slic_superpixels(&img, 4, 10.0, 0).is_err());
        let gray = DynamicImage::new_luma8(4, 4);
        assert!(matches!(
            slic_from_dynamic(&gray, 4, 10.0, 5),
            Err(Error::InvalidArgument(_))
        ));
    }

    #[test]
    fn small_fragments_are_merged() {
        // A lone pixel of cluster 1 inside cluster 0 must be absorbed.
        let mut labels = vec![0usize; 25];
        labels[12] = 1;
        let out = enforce_connectivity(&labels, 5, 5, 4);
        assert!(out.iter().all(|&id| id == 0));
    }

    #[test]
    fn split_clusters_get_distinct_ids() {
        // Cluster 0 appears as two separated halves.
        let labels = vec![0, 0, 1, 1, 0, 0, 0, 0, 1, 1, 0, 0];
        let out = enforce_connectivity(&labels, 6, 2, 1);
        assert_eq!(out, vec![0, 0, 1, 1, 2, 2, 0, 0, 1, 1, 2, 2]);
    }
}

//! Builds the conditioning inputs for one toy lesion: semantic label map,
//! SLIC superpixels, their boundary map and the one-hot stack, then
//! letterboxes the maps onto a wider canvas. PNGs go to the output directory.
//!
//! cargo run --example label_maps -- [out_dir]

use std::path::PathBuf;

use lesionsynth::mapkit::{
    boundary_map, build_semantic_map, labels, letterbox, letterbox_geometry, one_hot,
    write_boundary_map, write_instance_map, write_semantic_map, SlicParams, SuperpixelIdCodec,
};
use lesionsynth::toy::toy_sample;

fn main() -> lesionsynth::Result<()> {
    let out = PathBuf::from(
        std::env::args()
            .nth(1)
            .unwrap_or_else(|| "target/label_maps".into()),
    );
    let s = toy_sample(0, true, 64, 48, 1)?;

    let semantic = build_semantic_map(&s.segmentation, &s.markers)?;
    let mut counts = [0usize; labels::NUM_LABELS];
    for &c in semantic.labels() {
        counts[c as usize] += 1;
    }
    println!("label histogram (codes 0-7): {counts:?}");

    let instance = SlicParams {
        num_superpixels: 48,
        ..Default::default()
    }
    .run(&s.image)?;
    let boundary = boundary_map(&instance);
    let edge = boundary.values().iter().filter(|&&v| v == 1).count();
    println!(
        "{} superpixels, {edge} boundary pixels",
        instance.count_instances()
    );

    let stack = one_hot(&semantic, labels::NUM_LABELS, Some(&boundary))?;
    println!("one-hot stack {:?}", stack.shape());

    let g = letterbox_geometry(64, 64, 128, 64)?;
    let wide = letterbox(&semantic, 128, 64, labels::BORDER)?;
    println!(
        "letterboxed to {}x{}, content {g:?}",
        wide.width(),
        wide.height()
    );

    let codec = SuperpixelIdCodec::default();
    write_semantic_map(&semantic, &out.join("semantic.png"))?;
    write_semantic_map(&wide, &out.join("semantic_letterboxed.png"))?;
    write_instance_map(&instance, &codec, &out.join("instance.png"))?;
    write_boundary_map(&boundary, &out.join("boundary.png"))?;
    println!("wrote maps to {}", out.display());
    Ok(())
}

//! Shared toy fixtures for the integration suites: a small annotated
//! dataset with the four-class layout the pipeline expects.

#![allow(dead_code)]

use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use sonosynth::io;
use sonosynth::manifest::{write_manifest, ManifestRecord, MaskRef, Provenance};
use sonosynth::mask::{ClassId, LabelMaskSet, Mask};
use sonosynth::{GrayImage, Image};

pub fn rect_mask(w: u32, h: u32, x0: u32, y0: u32, rw: u32, rh: u32) -> Mask {
    Mask::from_fn(w, h, |x, y| {
        x >= x0 && x < x0 + rw && y >= y0 && y < y0 + rh
    })
}

/// One 40x40 annotated record: a lesion containing a locule and a solid
/// area (plus an optional second solid component), with an optional 5x5
/// papillation sitting on the first solid area.
pub fn toy_record(seed: u64, with_papillation: bool) -> (GrayImage, LabelMaskSet) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let lesion = rect_mask(40, 40, 4, 4, 32, 32);
    let locule = rect_mask(40, 40, 6, 6, 10, 10);
    let mut solid = rect_mask(40, 40, 14, 14, 16, 14);
    for (x, y) in rect_mask(40, 40, 6, 30, 9, 5).foreground() {
        solid.set(x, y, true);
    }
    let papillation = if with_papillation {
        rect_mask(40, 40, 22, 18, 5, 5)
    } else {
        Mask::empty(40, 40)
    };

    let image = Image::from_fn(40, 40, |x, y| {
        let base: f64 = if papillation.get(x, y) {
            0.85
        } else if solid.get(x, y) {
            0.55
        } else if locule.get(x, y) {
            0.15
        } else if lesion.get(x, y) {
            0.35
        } else {
            0.2
        };
        (base + rng.gen_range(-0.03..0.03)).clamp(0.0, 1.0)
    })
    .unwrap();

    let masks = LabelMaskSet::from_masks([lesion, locule, solid, papillation]).unwrap();
    (image, masks)
}

/// `n` records, the first `n_papillation` of which carry a papillation.
pub fn toy_dataset(n: usize, n_papillation: usize) -> Vec<(String, GrayImage, LabelMaskSet)> {
    (0..n)
        .map(|i| {
            let (img, masks) = toy_record(1000 + i as u64, i < n_papillation);
            (format!("img{i:02}"), img, masks)
        })
        .collect()
}

/// Write a dataset to `dir` as PNGs plus a manifest; returns the
/// manifest path.
pub fn write_dataset(dir: &Path, dataset: &[(String, GrayImage, LabelMaskSet)]) -> PathBuf {
    std::fs::create_dir_all(dir.join("images")).unwrap();
    std::fs::create_dir_all(dir.join("masks")).unwrap();
    let mut records = Vec::new();
    for (id, image, masks) in dataset {
        let image_rel = PathBuf::from("images").join(format!("{id}.png"));
        let masks_rel = PathBuf::from("masks").join(format!("{id}_labels.png"));
        io::save_image(image, dir.join(&image_rel)).unwrap();
        io::save_masks_packed(masks, dir.join(&masks_rel)).unwrap();
        records.push(ManifestRecord {
            id: id.clone(),
            image: image_rel,
            masks: MaskRef::Packed(masks_rel),
            provenance: Provenance::Real,
            source_target_id: None,
            source_patch_id: None,
            roi: None,
            seed: None,
        });
    }
    let manifest = dir.join("manifest.json");
    write_manifest(&manifest, &records).unwrap();
    manifest
}

/// Quantize-and-reload, so in-memory fixtures see exactly what a
/// PNG round trip would give the pipeline.
pub fn quantized(img: &GrayImage) -> GrayImage {
    Image::from_bytes(img.width(), img.height(), &img.to_bytes()).unwrap()
}

pub fn count_images_with(dataset: &[(String, GrayImage, LabelMaskSet)], class: ClassId) -> usize {
    dataset.iter().filter(|(_, _, m)| m.has_class(class)).count()
}

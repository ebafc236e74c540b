//! Pathology transplant pipeline: extract structure patches from
//! annotated images, pick clinically plausible targets, place each patch
//! over a host structure with the width-fraction offset rule, blend it
//! in, and propagate the ground-truth masks until class-balance targets
//! are met.

use std::collections::{BTreeMap, BTreeSet, HashSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::{Image, Rect};
use crate::mask::{connected_components, ClassId, Component, LabelMaskSet, Mask};
use crate::poisson::{seamless_clone, SolveOptions};
use crate::scalar::Scalar;

/// Side of the host-structure centroid the transplanted structure sat on
/// in its source image.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RelDirection {
    Left,
    Right,
}

impl RelDirection {
    pub fn sign(self) -> i64 {
        match self {
            RelDirection::Left => -1,
            RelDirection::Right => 1,
        }
    }
}

/// Cropped structure fragment with provenance and placement metadata.
#[derive(Debug, Clone)]
pub struct Patch<S> {
    pub image: Image<S>,
    /// The structure's pixels within the crop frame.
    pub mask: Mask,
    pub class: ClassId,
    pub source_id: String,
    pub area: usize,
    pub rel_direction: RelDirection,
    /// Pixels of source context kept around the tight bounding box.
    pub margin: u32,
}

/// Record of a component that could not become a patch.
#[derive(Debug, Clone, Serialize)]
pub struct ExtractionWarning {
    pub source_id: String,
    pub bbox: Rect,
    pub reason: String,
}

/// Class-presence constraints a target image must satisfy.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EligibilityRule {
    required: BTreeSet<ClassId>,
    forbidden: BTreeSet<ClassId>,
}

impl EligibilityRule {
    pub fn new(
        required: impl IntoIterator<Item = ClassId>,
        forbidden: impl IntoIterator<Item = ClassId>,
    ) -> Result<Self> {
        let required: BTreeSet<_> = required.into_iter().collect();
        let forbidden: BTreeSet<_> = forbidden.into_iter().collect();
        if required.intersection(&forbidden).next().is_some() {
            return Err(Error::InvalidArgument(
                "required and forbidden classes overlap".into(),
            ));
        }
        Ok(EligibilityRule {
            required,
            forbidden,
        })
    }

    /// Default plausibility rule for transplanting `class` onto
    /// `host_class`: the host must be present, the transplanted class
    /// absent, and a papillation additionally needs a lesion, locule,
    /// and solid area in the target.
    pub fn for_transplant(class: ClassId, host_class: ClassId) -> Self {
        let mut required = BTreeSet::from([host_class]);
        if class == ClassId::Papillation {
            required.extend([ClassId::Lesion, ClassId::Locule, ClassId::SolidArea]);
        }
        let forbidden = BTreeSet::from([class]);
        EligibilityRule {
            required,
            forbidden,
        }
    }

    pub fn matches(&self, masks: &LabelMaskSet) -> bool {
        self.required.iter().all(|&c| masks.has_class(c))
            && !self.forbidden.iter().any(|&c| masks.has_class(c))
    }
}

/// A resolved placement of one patch into one target image.
#[derive(Debug, Clone)]
pub struct PlacementPlan {
    pub patch_ref: usize,
    pub host_component: Component,
    /// Offset of the patch frame in target coordinates.
    pub dest_offset: (i64, i64),
    /// RNG provenance of the draw that produced this plan.
    pub seed_state: u64,
}

#[derive(Debug, Clone)]
pub struct SynthesisConfig {
    /// Horizontal offset as a fraction of the host bounding-box width.
    pub offset_fraction: f64,
    /// Desired image count per class; classes at or above their target
    /// are left alone.
    pub class_targets: BTreeMap<ClassId, usize>,
    pub rng_seed: u64,
    /// Minimum fraction of the patch foreground that must land inside
    /// the host structure.
    pub min_overlap_fraction: f64,
    pub max_placement_retries: u32,
    /// Class whose components host the transplanted structure.
    pub host_class: ClassId,
    /// Raw copy-paste instead of gradient-domain blending (ablation).
    pub naive_paste: bool,
}

impl Default for SynthesisConfig {
    fn default() -> Self {
        SynthesisConfig {
            offset_fraction: 1.0 / 3.0,
            class_targets: BTreeMap::new(),
            rng_seed: 0,
            min_overlap_fraction: 0.3,
            max_placement_retries: 20,
            host_class: ClassId::SolidArea,
            naive_paste: false,
        }
    }
}

/// Extract one patch per connected component of `class` across the
/// dataset, sorted by area descending.
///
/// The relative direction is judged against the solid-area component
/// with maximal mask overlap, falling back to the nearest centroid.
/// Components that cannot keep `margin` pixels of context, or whose
/// image has no solid area at all, are skipped with a warning record.
pub fn extract_patches<S: Scalar>(
    dataset: &[(String, Image<S>, LabelMaskSet)],
    class: ClassId,
    margin: u32,
) -> (Vec<Patch<S>>, Vec<ExtractionWarning>) {
    let mut patches = Vec::new();
    let mut warnings = Vec::new();

    for (id, image, masks) in dataset {
        let comps = connected_components(masks.mask(class), class);
        if comps.is_empty() {
            continue;
        }
        let solids = connected_components(masks.mask(ClassId::SolidArea), ClassId::SolidArea);
        for comp in comps {
            if solids.is_empty() {
                warnings.push(ExtractionWarning {
                    source_id: id.clone(),
                    bbox: comp.bbox,
                    reason: "no solid area anywhere in the image".into(),
                });
                continue;
            }
            let anchor = pick_anchor(&comp, &solids);
            let rel_direction = if comp.centroid.0 >= anchor.centroid.0 {
                RelDirection::Right
            } else {
                RelDirection::Left
            };

            let bb = comp.bbox;
            let m = margin as i64;
            let x0 = bb.x as i64 - m;
            let y0 = bb.y as i64 - m;
            let x1 = (bb.x + bb.w) as i64 + m;
            let y1 = (bb.y + bb.h) as i64 + m;
            if x0 < 0 || y0 < 0 || x1 > image.width() as i64 || y1 > image.height() as i64 {
                warnings.push(ExtractionWarning {
                    source_id: id.clone(),
                    bbox: bb,
                    reason: format!("cannot keep {margin}px of context inside the image"),
                });
                continue;
            }
            let crop_rect = Rect::new(x0 as u32, y0 as u32, (x1 - x0) as u32, (y1 - y0) as u32);
            let crop = image.crop(crop_rect).expect("crop checked in bounds");
            let mut mask = Mask::empty(crop_rect.w, crop_rect.h);
            for &(px, py) in &comp.pixels {
                mask.set(px - crop_rect.x, py - crop_rect.y, true);
            }
            patches.push(Patch {
                image: crop,
                mask,
                class,
                source_id: id.clone(),
                area: comp.area,
                rel_direction,
                margin,
            });
        }
    }

    patches.sort_by_key(|p| std::cmp::Reverse(p.area));
    (patches, warnings)
}

/// Solid-area component with maximal overlap with the patch component,
/// falling back to the nearest centroid.
fn pick_anchor<'a>(comp: &Component, solids: &'a [Component]) -> &'a Component {
    let overlap = |s: &Component| {
        let set: HashSet<_> = s.pixels.iter().copied().collect();
        comp.pixels.iter().filter(|p| set.contains(p)).count()
    };
    let best = solids.iter().max_by_key(|s| overlap(s)).expect("non-empty");
    if overlap(best) > 0 {
        return best;
    }
    solids
        .iter()
        .min_by(|a, b| {
            let da = centroid_dist2(comp, a);
            let db = centroid_dist2(comp, b);
            da.partial_cmp(&db).unwrap()
        })
        .expect("non-empty")
}

fn centroid_dist2(a: &Component, b: &Component) -> f64 {
    let dx = a.centroid.0 - b.centroid.0;
    let dy = a.centroid.1 - b.centroid.1;
    dx * dx + dy * dy
}

/// Ids of dataset images whose annotations satisfy the rule.
pub fn eligible_targets<S>(
    dataset: &[(String, Image<S>, LabelMaskSet)],
    rule: &EligibilityRule,
) -> Vec<String> {
    dataset
        .iter()
        .filter(|(_, _, masks)| rule.matches(masks))
        .map(|(id, _, _)| id.clone())
        .collect()
}

fn mask_centroid(mask: &Mask) -> (f64, f64) {
    let mut sx = 0.0;
    let mut sy = 0.0;
    let mut n = 0usize;
    for (x, y) in mask.foreground() {
        sx += x as f64;
        sy += y as f64;
        n += 1;
    }
    (sx / n as f64, sy / n as f64)
}

fn placement_valid(
    patch: &Patch<impl Scalar>,
    host: &Component,
    target_w: u32,
    target_h: u32,
    dest: (i64, i64),
    min_overlap: f64,
) -> bool {
    let host_set: HashSet<_> = host.pixels.iter().copied().collect();
    let mut inside_host = 0usize;
    for (px, py) in patch.mask.foreground() {
        let tx = px as i64 + dest.0;
        let ty = py as i64 + dest.1;
        if tx < 1 || ty < 1 || tx >= target_w as i64 - 1 || ty >= target_h as i64 - 1 {
            return false;
        }
        if host_set.contains(&(tx as u32, ty as u32)) {
            inside_host += 1;
        }
    }
    inside_host > 0 && (inside_host as f64 / patch.area as f64) >= min_overlap
}

/// Centered alignment of the patch on a host component plus the
/// horizontal width-fraction shift toward the recorded direction.
pub fn offset_for_host(patch: &Patch<impl Scalar>, host: &Component, offset_fraction: f64) -> (i64, i64) {
    let (pcx, pcy) = mask_centroid(&patch.mask);
    let base_dx = (host.centroid.0 - pcx).round() as i64;
    let base_dy = (host.centroid.1 - pcy).round() as i64;
    let shift = (offset_fraction * host.bbox.w as f64).round() as i64;
    (base_dx + patch.rel_direction.sign() * shift, base_dy)
}

/// Choose a host component and placement for the patch.
///
/// The host is drawn uniformly among the target's host-class components;
/// the patch centroid is aligned to the host centroid and shifted
/// horizontally by `offset_fraction` of the host bounding-box width.
/// Invalid placements are retried up to `max_placement_retries` times,
/// resampling the host and pulling the shift back toward centered
/// alignment.
pub fn plan_placement<S: Scalar>(
    patch: &Patch<S>,
    patch_ref: usize,
    target_masks: &LabelMaskSet,
    config: &SynthesisConfig,
    rng: &mut ChaCha8Rng,
) -> Result<PlacementPlan> {
    let hosts = connected_components(target_masks.mask(config.host_class), config.host_class);
    if hosts.is_empty() {
        return Err(Error::PlacementFailed(0));
    }
    let seed_state = rng.gen::<u64>();
    let (tw, th) = (target_masks.width(), target_masks.height());
    let retries = config.max_placement_retries;

    for attempt in 0..=retries {
        let host = &hosts[rng.gen_range(0..hosts.len())];
        // later attempts nudge the placement back toward the host centroid
        let scale = 1.0 - attempt as f64 / (retries as f64 + 1.0);
        let (pcx, pcy) = mask_centroid(&patch.mask);
        let base_dx = (host.centroid.0 - pcx).round() as i64;
        let base_dy = (host.centroid.1 - pcy).round() as i64;
        let shift = (config.offset_fraction * host.bbox.w as f64 * scale).round() as i64;
        let dest = (base_dx + patch.rel_direction.sign() * shift, base_dy);
        if placement_valid(patch, host, tw, th, dest, config.min_overlap_fraction) {
            return Ok(PlacementPlan {
                patch_ref,
                host_component: host.clone(),
                dest_offset: dest,
                seed_state,
            });
        }
    }
    Err(Error::PlacementFailed(retries))
}

/// Blend a planned patch into a target and propagate its mask.
///
/// The returned rect is the modified region of interest; the transplanted
/// class mask is OR-ed in at the placed location and every other class
/// is untouched.
pub fn synthesize_one<S: Scalar>(
    target: &(Image<S>, LabelMaskSet),
    patch: &Patch<S>,
    plan: &PlacementPlan,
    naive_paste: bool,
    opts: SolveOptions<S>,
) -> Result<(Image<S>, LabelMaskSet, Rect)> {
    let (target_img, target_masks) = target;
    let (dx, dy) = plan.dest_offset;

    let image = if naive_paste {
        let mut out = target_img.clone();
        for (px, py) in patch.mask.foreground() {
            let tx = px as i64 + dx;
            let ty = py as i64 + dy;
            if tx < 1 || ty < 1 || tx >= out.width() as i64 - 1 || ty >= out.height() as i64 - 1 {
                return Err(Error::OmegaTouchesBorder);
            }
            out.set_clamped(tx as u32, ty as u32, patch.image.get(px, py));
        }
        out
    } else {
        seamless_clone(target_img, &patch.image, &patch.mask, (dx, dy), opts)?.0
    };

    let mut masks = target_masks.clone();
    masks.mask_mut(patch.class).or_at(&patch.mask, dx, dy)?;

    let local = patch.mask.tight_bbox().ok_or(Error::EmptyOmega)?;
    let roi = Rect::new(
        (local.x as i64 + dx) as u32,
        (local.y as i64 + dy) as u32,
        local.w,
        local.h,
    );
    Ok((image, masks, roi))
}

/// One emitted synthetic image with provenance.
#[derive(Debug, Clone)]
pub struct SyntheticRecord<S> {
    pub id: String,
    pub image: Image<S>,
    pub masks: LabelMaskSet,
    pub class: ClassId,
    pub source_target_id: String,
    pub source_patch_id: usize,
    pub roi: Rect,
    pub seed: u64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ClassBalance {
    pub class: ClassId,
    pub before: usize,
    pub after: usize,
    pub target: Option<usize>,
    pub reached: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct BalanceReport {
    pub counts: Vec<ClassBalance>,
    /// Classes whose targets could not be met.
    pub unreachable: Vec<ClassId>,
    pub warnings: Vec<String>,
}

fn class_count<S>(
    dataset: &[(String, Image<S>, LabelMaskSet)],
    records: &[SyntheticRecord<S>],
    class: ClassId,
) -> usize {
    dataset
        .iter()
        .filter(|(_, _, m)| m.has_class(class))
        .count()
        + records.iter().filter(|r| r.masks.has_class(class)).count()
}

struct PlannedRecord {
    id: String,
    class: ClassId,
    target_index: usize,
    patch_ref: usize,
    plan: PlacementPlan,
    masks: LabelMaskSet,
    roi: Rect,
    seed: u64,
}

/// Generate synthetic records until every class target is met or no
/// eligible target/patch pair remains.
///
/// Targets are sampled uniformly (seeded) among eligible images, each
/// used at most once per pass; patches are sampled uniformly from the
/// bank. Planning is sequential so the output set depends only on the
/// seed; the expensive blends then run in parallel and are merged back
/// in plan order.
pub fn balance_dataset<S: Scalar>(
    dataset: &[(String, Image<S>, LabelMaskSet)],
    bank: &[Patch<S>],
    config: &SynthesisConfig,
) -> Result<(Vec<SyntheticRecord<S>>, BalanceReport)> {
    let mut planned: Vec<PlannedRecord> = Vec::new();
    let mut warnings = Vec::new();
    let mut unreachable = Vec::new();
    let mut before = BTreeMap::new();
    for class in ClassId::ALL {
        before.insert(class, class_count::<S>(dataset, &[], class));
    }

    let planned_count = |planned: &[PlannedRecord], class: ClassId| {
        dataset
            .iter()
            .filter(|(_, _, m)| m.has_class(class))
            .count()
            + planned.iter().filter(|p| p.masks.has_class(class)).count()
    };

    let mut rng = ChaCha8Rng::seed_from_u64(config.rng_seed);
    let mut record_counter: u64 = 0;

    for class in ClassId::ALL {
        let Some(&target_count) = config.class_targets.get(&class) else {
            continue;
        };
        if planned_count(&planned, class) >= target_count {
            continue;
        }
        let bank_refs: Vec<usize> = bank
            .iter()
            .enumerate()
            .filter(|(_, p)| p.class == class)
            .map(|(i, _)| i)
            .collect();
        if bank_refs.is_empty() {
            warnings.push(format!("no patches of class {} in the bank", class.name()));
            unreachable.push(class);
            continue;
        }
        let rule = EligibilityRule::for_transplant(class, config.host_class);
        let eligible = eligible_targets(dataset, &rule);
        if eligible.is_empty() {
            warnings.push(format!(
                "no eligible target images for class {}",
                class.name()
            ));
            unreachable.push(class);
            continue;
        }

        let mut used_this_pass: HashSet<String> = HashSet::new();
        let mut exhausted: HashSet<String> = HashSet::new();
        let mut progress_this_pass = false;
        while planned_count(&planned, class) < target_count {
            let available: Vec<&String> = eligible
                .iter()
                .filter(|id| !used_this_pass.contains(*id) && !exhausted.contains(*id))
                .collect();
            if available.is_empty() {
                if !progress_this_pass {
                    warnings.push(format!(
                        "target for {} unreachable: no usable target/patch pairs left",
                        class.name()
                    ));
                    unreachable.push(class);
                    break;
                }
                used_this_pass.clear();
                progress_this_pass = false;
                continue;
            }
            let target_id = available[rng.gen_range(0..available.len())].clone();
            let target_index = dataset
                .iter()
                .position(|(id, _, _)| *id == target_id)
                .expect("eligible id comes from the dataset");
            let target_masks = &dataset[target_index].2;

            // try a few patches against this target before giving up on it
            let mut placed = false;
            let record_seed = record_counter;
            let mut record_rng = ChaCha8Rng::seed_from_u64(config.rng_seed);
            record_rng.set_stream(record_counter + 1);
            for _ in 0..bank_refs.len().min(8) {
                let patch_ref = bank_refs[record_rng.gen_range(0..bank_refs.len())];
                let patch = &bank[patch_ref];
                match plan_placement(patch, patch_ref, target_masks, config, &mut record_rng) {
                    Ok(plan) => {
                        let mut masks = target_masks.clone();
                        masks
                            .mask_mut(patch.class)
                            .or_at(&patch.mask, plan.dest_offset.0, plan.dest_offset.1)?;
                        let local = patch.mask.tight_bbox().ok_or(Error::EmptyOmega)?;
                        let roi = Rect::new(
                            (local.x as i64 + plan.dest_offset.0) as u32,
                            (local.y as i64 + plan.dest_offset.1) as u32,
                            local.w,
                            local.h,
                        );
                        planned.push(PlannedRecord {
                            id: format!("syn_{}_{:04}", class.name(), record_counter),
                            class,
                            target_index,
                            patch_ref,
                            plan,
                            masks,
                            roi,
                            seed: record_seed,
                        });
                        record_counter += 1;
                        used_this_pass.insert(target_id.clone());
                        progress_this_pass = true;
                        placed = true;
                        break;
                    }
                    Err(Error::PlacementFailed(_)) => continue,
                    Err(e) => return Err(e),
                }
            }
            if !placed {
                exhausted.insert(target_id);
            }
        }
    }

    // blend in parallel; collect preserves plan order
    let records: Vec<SyntheticRecord<S>> = planned
        .into_par_iter()
        .map(|p| {
            let (_, target_img, target_masks) = &dataset[p.target_index];
            let patch = &bank[p.patch_ref];
            let (image, masks, roi) = synthesize_one(
                &(target_img.clone(), target_masks.clone()),
                patch,
                &p.plan,
                config.naive_paste,
                SolveOptions::default(),
            )?;
            debug_assert_eq!(masks, p.masks);
            debug_assert_eq!(roi, p.roi);
            Ok(SyntheticRecord {
                id: p.id,
                image,
                masks,
                class: p.class,
                source_target_id: dataset[p.target_index].0.clone(),
                source_patch_id: p.patch_ref,
                roi,
                seed: p.seed,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let counts = ClassId::ALL
        .iter()
        .map(|&class| {
            let after = class_count(dataset, &records, class);
            let target = config.class_targets.get(&class).copied();
            ClassBalance {
                class,
                before: before[&class],
                after,
                target,
                reached: target.is_none_or(|t| after >= t),
            }
        })
        .collect();

    Ok((
        records,
        BalanceReport {
            counts,
            unreachable,
            warnings,
        },
    ))
}

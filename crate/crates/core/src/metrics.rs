//! Segmentation evaluation: per-class DSC, surface DSC at a pixel
//! tolerance, HD95, and recall, with the empty-label convention that
//! both-empty pairs score 1 (and HD95 is undefined).

use serde::Serialize;

use crate::error::{Error, Result};
use crate::mask::{boundary_pixels, ClassId, LabelMaskSet, Mask};
use crate::scalar::Scalar;

/// Per-image, per-class metric record.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClassScore<S> {
    pub dsc: S,
    pub sdsc: S,
    pub recall: S,
    /// `None` when either surface is empty.
    pub hd95: Option<S>,
    /// Both ground truth and prediction empty.
    pub empty_pair: bool,
}

fn check_dims(gt: &Mask, pred: &Mask) -> Result<()> {
    if gt.width() != pred.width() || gt.height() != pred.height() {
        return Err(Error::DimensionMismatch(
            "ground truth and prediction rasters differ in size".into(),
        ));
    }
    Ok(())
}

fn intersection_count(gt: &Mask, pred: &Mask) -> usize {
    gt.foreground().filter(|&(x, y)| pred.get(x, y)).count()
}

/// Dice similarity coefficient `2|A∩B| / (|A|+|B|)`; both-empty → 1.
pub fn dice<S: Scalar>(gt: &Mask, pred: &Mask) -> Result<S> {
    check_dims(gt, pred)?;
    let (a, b) = (gt.count(), pred.count());
    if a + b == 0 {
        return Ok(S::one());
    }
    let inter = intersection_count(gt, pred);
    Ok(S::from_usize_lit(2 * inter) / S::from_usize_lit(a + b))
}

/// Recall `|A∩B| / |A|`; both-empty → 1, empty GT with predictions → 0.
pub fn recall<S: Scalar>(gt: &Mask, pred: &Mask) -> Result<S> {
    check_dims(gt, pred)?;
    let a = gt.count();
    if a == 0 {
        return Ok(if pred.is_empty() { S::one() } else { S::zero() });
    }
    Ok(S::from_usize_lit(intersection_count(gt, pred)) / S::from_usize_lit(a))
}

fn min_sq_dist(p: (u32, u32), points: &[(u32, u32)]) -> f64 {
    let mut best = f64::INFINITY;
    for &(qx, qy) in points {
        let dx = p.0 as f64 - qx as f64;
        let dy = p.1 as f64 - qy as f64;
        let d = dx * dx + dy * dy;
        if d < best {
            best = d;
            if best == 0.0 {
                break;
            }
        }
    }
    best
}

/// Surface Dice at tolerance `tau`: the fraction of boundary pixels of
/// each mask lying within Euclidean distance `tau` of the other's
/// boundary. Both-empty → 1; one empty surface → 0.
pub fn surface_dice<S: Scalar>(gt: &Mask, pred: &Mask, tau: S) -> Result<S> {
    check_dims(gt, pred)?;
    let sg = boundary_pixels(gt);
    let sp = boundary_pixels(pred);
    if sg.is_empty() && sp.is_empty() {
        return Ok(S::one());
    }
    if sg.is_empty() || sp.is_empty() {
        return Ok(S::zero());
    }
    let tau2 = (tau * tau).to_f64().unwrap();
    let hit_g = sg.iter().filter(|&&p| min_sq_dist(p, &sp) <= tau2).count();
    let hit_p = sp.iter().filter(|&&p| min_sq_dist(p, &sg) <= tau2).count();
    Ok(S::from_usize_lit(hit_g + hit_p) / S::from_usize_lit(sg.len() + sp.len()))
}

/// 95th percentile, linearly interpolated between order statistics.
fn percentile(sorted: &[f64], q: f64) -> f64 {
    debug_assert!(!sorted.is_empty());
    let rank = q * (sorted.len() - 1) as f64;
    let lo = rank.floor() as usize;
    let frac = rank - lo as f64;
    if lo + 1 < sorted.len() {
        sorted[lo] + frac * (sorted[lo + 1] - sorted[lo])
    } else {
        sorted[lo]
    }
}

/// HD95: 95th percentile of the pooled symmetric boundary-to-boundary
/// distances. `None` when either mask is empty.
pub fn hd95<S: Scalar>(gt: &Mask, pred: &Mask) -> Result<Option<S>> {
    check_dims(gt, pred)?;
    if gt.is_empty() || pred.is_empty() {
        return Ok(None);
    }
    let sg = boundary_pixels(gt);
    let sp = boundary_pixels(pred);
    let mut pooled: Vec<f64> = sg
        .iter()
        .map(|&p| min_sq_dist(p, &sp).sqrt())
        .chain(sp.iter().map(|&p| min_sq_dist(p, &sg).sqrt()))
        .collect();
    pooled.sort_by(|a, b| a.partial_cmp(b).unwrap());
    Ok(Some(S::from_f64_lit(percentile(&pooled, 0.95))))
}

/// Score one ground-truth/prediction mask pair under the empty-label
/// convention.
pub fn score_pair<S: Scalar>(gt: &Mask, pred: &Mask, tau: S) -> Result<ClassScore<S>> {
    check_dims(gt, pred)?;
    let empty_pair = gt.is_empty() && pred.is_empty();
    Ok(ClassScore {
        dsc: dice(gt, pred)?,
        sdsc: surface_dice(gt, pred, tau)?,
        recall: recall(gt, pred)?,
        hd95: hd95(gt, pred)?,
        empty_pair,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct ImageClassScore<S> {
    pub image_id: String,
    pub class: ClassId,
    #[serde(flatten)]
    pub score: ClassScore<S>,
}

#[derive(Debug, Clone, Serialize)]
pub struct SummaryRow<S> {
    pub class: ClassId,
    pub metric: String,
    pub mean: S,
    pub std: S,
    pub n: usize,
    /// For `hd95` rows: how many of the `n` pairs had a defined distance.
    pub n_hd95_defined: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct MetricsReport<S> {
    pub per_image: Vec<ImageClassScore<S>>,
    pub summary: Vec<SummaryRow<S>>,
}

fn mean_std<S: Scalar>(values: &[S]) -> (S, S) {
    let n = values.len();
    if n == 0 {
        return (S::zero(), S::zero());
    }
    let mean = values.iter().copied().sum::<S>() / S::from_usize_lit(n);
    if n < 2 {
        return (mean, S::zero());
    }
    let var = values
        .iter()
        .map(|&v| (v - mean) * (v - mean))
        .sum::<S>()
        / S::from_usize_lit(n - 1);
    (mean, var.sqrt())
}

/// Evaluate prediction masks against ground truth over matching image
/// ids; aggregates are mean ± sample std per class and metric, with
/// undefined HD95 entries excluded from its aggregate and counted.
pub fn evaluate_dataset<S: Scalar>(
    gt: &[(String, LabelMaskSet)],
    pred: &[(String, LabelMaskSet)],
    tau: S,
) -> Result<MetricsReport<S>> {
    let mut per_image = Vec::new();
    for (id, gt_masks) in gt {
        let pred_masks = pred
            .iter()
            .find(|(pid, _)| pid == id)
            .map(|(_, m)| m)
            .ok_or_else(|| Error::IdMismatch(format!("id '{id}' missing from predictions")))?;
        for class in ClassId::ALL {
            let score = score_pair(gt_masks.mask(class), pred_masks.mask(class), tau)?;
            per_image.push(ImageClassScore {
                image_id: id.clone(),
                class,
                score,
            });
        }
    }
    for (id, _) in pred {
        if !gt.iter().any(|(gid, _)| gid == id) {
            return Err(Error::IdMismatch(format!(
                "id '{id}' missing from ground truth"
            )));
        }
    }

    let mut summary = Vec::new();
    for class in ClassId::ALL {
        let rows: Vec<&ImageClassScore<S>> =
            per_image.iter().filter(|r| r.class == class).collect();
        let n = rows.len();
        for (metric, values) in [
            ("dsc", rows.iter().map(|r| r.score.dsc).collect::<Vec<_>>()),
            ("sdsc", rows.iter().map(|r| r.score.sdsc).collect()),
            ("recall", rows.iter().map(|r| r.score.recall).collect()),
        ] {
            let (mean, std) = mean_std(&values);
            summary.push(SummaryRow {
                class,
                metric: metric.into(),
                mean,
                std,
                n,
                n_hd95_defined: n,
            });
        }
        let hd: Vec<S> = rows.iter().filter_map(|r| r.score.hd95).collect();
        let (mean, std) = mean_std(&hd);
        summary.push(SummaryRow {
            class,
            metric: "hd95".into(),
            mean,
            std,
            n,
            n_hd95_defined: hd.len(),
        });
    }

    Ok(MetricsReport { per_image, summary })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn square(w: u32, h: u32, x0: u32, y0: u32, side: u32) -> Mask {
        Mask::from_fn(w, h, |x, y| {
            x >= x0 && x < x0 + side && y >= y0 && y < y0 + side
        })
    }

    fn random_mask(rng: &mut ChaCha8Rng, w: u32, h: u32) -> Mask {
        Mask::from_fn(w, h, |_, _| rng.gen_bool(0.4))
    }

    // Independent all-pairs surface distances used by the SDSC/HD95 oracles.
    fn oracle_surface_distances(from: &Mask, to: &Mask) -> Vec<f64> {
        let sf = boundary_pixels(from);
        let st = boundary_pixels(to);
        sf.iter()
            .map(|&(px, py)| {
                st.iter()
                    .map(|&(qx, qy)| {
                        let (dx, dy) = (px as f64 - qx as f64, py as f64 - qy as f64);
                        (dx * dx + dy * dy).sqrt()
                    })
                    .fold(f64::INFINITY, f64::min)
            })
            .collect()
    }

    #[test]
    fn dice_of_identical_masks_is_one() {
        let m = square(10, 10, 2, 2, 4);
        assert_eq!(dice::<f64>(&m, &m).unwrap(), 1.0);
    }

    #[test]
    fn dice_half_overlap_is_half() {
        // two 4x4 squares sharing half their area
        let a = square(12, 12, 2, 2, 4);
        let b = square(12, 12, 4, 2, 4);
        assert_eq!(dice::<f64>(&a, &b).unwrap(), 0.5);
    }

    #[test]
    fn empty_pair_convention_scores_one() {
        let e = Mask::empty(8, 8);
        assert_eq!(dice::<f64>(&e, &e).unwrap(), 1.0);
        assert_eq!(surface_dice::<f64>(&e, &e, 3.0).unwrap(), 1.0);
        assert_eq!(recall::<f64>(&e, &e).unwrap(), 1.0);
        assert_eq!(hd95::<f64>(&e, &e).unwrap(), None);
        let s = score_pair::<f64>(&e, &e, 3.0).unwrap();
        assert!(s.empty_pair);
    }

    #[test]
    fn empty_gt_with_false_positives_scores_zero() {
        let e = Mask::empty(8, 8);
        let p = square(8, 8, 2, 2, 2);
        let s = score_pair::<f64>(&e, &p, 3.0).unwrap();
        assert_eq!(s.dsc, 0.0);
        assert_eq!(s.sdsc, 0.0);
        assert_eq!(s.recall, 0.0);
        assert_eq!(s.hd95, None);
        assert!(!s.empty_pair);
    }

    #[test]
    fn recall_basics() {
        let gt = square(10, 10, 3, 3, 3);
        let sup = square(10, 10, 2, 2, 6);
        assert_eq!(recall::<f64>(&gt, &sup).unwrap(), 1.0);
        let disjoint = square(10, 10, 7, 7, 2);
        assert_eq!(recall::<f64>(&gt, &disjoint).unwrap(), 0.0);
    }

    #[test]
    fn surface_dice_identical_masks_is_one() {
        let m = square(10, 10, 1, 1, 5);
        for tau in [0.0, 1.0, 5.0] {
            assert_eq!(surface_dice::<f64>(&m, &m, tau).unwrap(), 1.0);
        }
    }

    #[test]
    fn translated_edges_beyond_tolerance_score_low() {
        // long parallel vertical strips 5 px apart, tau = 2: only pixels
        // near the short ends can be within tolerance
        let a = Mask::from_fn(30, 30, |x, _| x == 5);
        let b = Mask::from_fn(30, 30, |x, _| x == 10);
        let s = surface_dice::<f64>(&a, &b, 2.0).unwrap();
        assert_eq!(s, 0.0);
    }

    #[test]
    fn surface_dice_matches_all_pairs_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..10 {
            let a = random_mask(&mut rng, 20, 20);
            let b = random_mask(&mut rng, 20, 20);
            let tau = 3.0;
            let got = surface_dice::<f64>(&a, &b, tau).unwrap();
            let da = oracle_surface_distances(&a, &b);
            let db = oracle_surface_distances(&b, &a);
            if da.is_empty() && db.is_empty() {
                assert_eq!(got, 1.0);
                continue;
            }
            let hits = da.iter().filter(|&&d| d <= tau).count()
                + db.iter().filter(|&&d| d <= tau).count();
            let expect = hits as f64 / (da.len() + db.len()) as f64;
            assert!((got - expect).abs() < 1e-12);
        }
    }

    #[test]
    fn hd95_trivial_cases() {
        let m = square(10, 10, 2, 2, 4);
        assert_eq!(hd95::<f64>(&m, &m).unwrap(), Some(0.0));

        let mut a = Mask::empty(20, 20);
        a.set(2, 5, true);
        let mut b = Mask::empty(20, 20);
        b.set(10, 5, true);
        assert_eq!(hd95::<f64>(&a, &b).unwrap(), Some(8.0));

        assert_eq!(hd95::<f64>(&a, &Mask::empty(20, 20)).unwrap(), None);
    }

    #[test]
    fn hd95_matches_exhaustive_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(22);
        for _ in 0..10 {
            let a = random_mask(&mut rng, 18, 18);
            let b = random_mask(&mut rng, 18, 18);
            if a.is_empty() || b.is_empty() {
                continue;
            }
            let got = hd95::<f64>(&a, &b).unwrap().unwrap();
            let mut pooled = oracle_surface_distances(&a, &b);
            pooled.extend(oracle_surface_distances(&b, &a));
            pooled.sort_by(|x, y| x.partial_cmp(y).unwrap());
            let rank = 0.95 * (pooled.len() - 1) as f64;
            let lo = rank.floor() as usize;
            let expect = if lo + 1 < pooled.len() {
                pooled[lo] + (rank - lo as f64) * (pooled[lo + 1] - pooled[lo])
            } else {
                pooled[lo]
            };
            assert!((got - expect).abs() < 1e-12);
        }
    }

    #[test]
    fn metrics_are_symmetric() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        for _ in 0..5 {
            let a = random_mask(&mut rng, 15, 15);
            let b = random_mask(&mut rng, 15, 15);
            assert_eq!(dice::<f64>(&a, &b).unwrap(), dice::<f64>(&b, &a).unwrap());
            assert_eq!(
                surface_dice::<f64>(&a, &b, 2.0).unwrap(),
                surface_dice::<f64>(&b, &a, 2.0).unwrap()
            );
            assert_eq!(hd95::<f64>(&a, &b).unwrap(), hd95::<f64>(&b, &a).unwrap());
        }
    }

    #[test]
    fn surface_dice_monotone_in_tolerance() {
        let mut rng = ChaCha8Rng::seed_from_u64(24);
        for _ in 0..5 {
            let a = random_mask(&mut rng, 16, 16);
            let b = random_mask(&mut rng, 16, 16);
            let mut prev = -1.0;
            for tau in [0.0, 1.0, 2.0, 3.0, 5.0, 10.0] {
                let s = surface_dice::<f64>(&a, &b, tau).unwrap();
                assert!(s >= prev);
                prev = s;
            }
        }
    }

    #[test]
    fn dimension_mismatch_is_an_error() {
        let a = Mask::empty(4, 4);
        let b = Mask::empty(5, 4);
        assert!(dice::<f64>(&a, &b).is_err());
        assert!(surface_dice::<f64>(&a, &b, 1.0).is_err());
        assert!(hd95::<f64>(&a, &b).is_err());
        assert!(recall::<f64>(&a, &b).is_err());
    }

    #[test]
    fn perfect_predictions_aggregate_to_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(25);
        let mut gt = Vec::new();
        for i in 0..3 {
            let mut set = LabelMaskSet::empty(16, 16);
            for class in ClassId::ALL {
                *set.mask_mut(class) = random_mask(&mut rng, 16, 16);
            }
            gt.push((format!("img{i}"), set));
        }
        let report = evaluate_dataset::<f64>(&gt, &gt, 3.0).unwrap();
        for row in &report.summary {
            match row.metric.as_str() {
                "hd95" => assert_eq!(row.mean, 0.0),
                _ => assert_eq!(row.mean, 1.0),
            }
        }
    }

    #[test]
    fn single_image_aggregate_has_zero_std() {
        let mut set = LabelMaskSet::empty(10, 10);
        *set.mask_mut(ClassId::Lesion) = square(10, 10, 2, 2, 4);
        let gt = vec![("a".to_string(), set.clone())];
        let mut pred_set = LabelMaskSet::empty(10, 10);
        *pred_set.mask_mut(ClassId::Lesion) = square(10, 10, 3, 2, 4);
        let pred = vec![("a".to_string(), pred_set)];
        let report = evaluate_dataset::<f64>(&gt, &pred, 3.0).unwrap();
        for row in &report.summary {
            assert_eq!(row.std, 0.0);
            assert_eq!(row.n, 1);
        }
    }

    #[test]
    fn id_mismatch_is_an_error() {
        let gt = vec![("a".to_string(), LabelMaskSet::empty(4, 4))];
        let pred = vec![("b".to_string(), LabelMaskSet::empty(4, 4))];
        assert!(matches!(
            evaluate_dataset::<f64>(&gt, &pred, 3.0),
            Err(Error::IdMismatch(_))
        ));
    }
}

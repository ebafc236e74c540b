//! On-disk schemas: dataset manifest JSON, patch-bank directories,
//! balance reports, metrics CSVs, and stats JSON.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::Image;
use crate::io;
use crate::mask::{ClassId, LabelMaskSet};
use crate::metrics::MetricsReport;
use crate::scalar::Scalar;
use crate::stats::{paired_t_test, SignificanceTier};
use crate::synth::{Patch, RelDirection, SyntheticRecord};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    Real,
    Synthetic,
}

/// Mask location: a single bit-packed PNG, or one binary PNG per class.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MaskRef {
    Packed(PathBuf),
    PerClass(BTreeMap<String, PathBuf>),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ManifestRecord {
    pub id: String,
    pub image: PathBuf,
    pub masks: MaskRef,
    pub provenance: Provenance,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source_target_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source_patch_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub roi: Option<[u32; 4]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

pub fn load_manifest(path: &Path) -> Result<Vec<ManifestRecord>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Manifest {
        path: path.into(),
        reason: e.to_string(),
    })
}

pub fn write_manifest(path: &Path, records: &[ManifestRecord]) -> Result<()> {
    let text = serde_json::to_string_pretty(records).expect("manifest serializes");
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn resolve(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

pub fn load_record_masks(base: &Path, masks: &MaskRef) -> Result<LabelMaskSet> {
    match masks {
        MaskRef::Packed(p) => io::load_masks_packed(resolve(base, p)),
        MaskRef::PerClass(map) => {
            let mut paths = Vec::new();
            for class in ClassId::ALL {
                let p = map.get(class.name()).ok_or_else(|| Error::Manifest {
                    path: base.into(),
                    reason: format!("missing mask path for class {}", class.name()),
                })?;
                paths.push(resolve(base, p));
            }
            io::load_masks_per_class([
                paths[0].as_path(),
                paths[1].as_path(),
                paths[2].as_path(),
                paths[3].as_path(),
            ])
        }
    }
}

/// Load every record of a manifest into memory, validating that each
/// image and its masks agree on dimensions.
pub fn load_dataset<S: Scalar>(
    manifest_path: &Path,
) -> Result<Vec<(String, Image<S>, LabelMaskSet)>> {
    let records = load_manifest(manifest_path)?;
    let base = manifest_path.parent().unwrap_or(Path::new("."));
    let mut out = Vec::with_capacity(records.len());
    for rec in &records {
        let image: Image<S> = io::load_image(resolve(base, &rec.image))?;
        let masks = load_record_masks(base, &rec.masks)?;
        if masks.width() != image.width() || masks.height() != image.height() {
            return Err(Error::DimensionMismatch(format!(
                "record '{}': image is {}x{} but masks are {}x{}",
                rec.id,
                image.width(),
                image.height(),
                masks.width(),
                masks.height()
            )));
        }
        out.push((rec.id.clone(), image, masks));
    }
    Ok(out)
}

/// Write a synthetic record's image and packed masks under `out_dir`
/// and return its manifest entry (paths relative to `out_dir`).
pub fn write_synthetic_record<S: Scalar>(
    out_dir: &Path,
    rec: &SyntheticRecord<S>,
) -> Result<ManifestRecord> {
    let image_rel = PathBuf::from("images").join(format!("{}.png", rec.id));
    let masks_rel = PathBuf::from("masks").join(format!("{}_labels.png", rec.id));
    io::save_image(&rec.image, out_dir.join(&image_rel))?;
    io::save_masks_packed(&rec.masks, out_dir.join(&masks_rel))?;
    Ok(ManifestRecord {
        id: rec.id.clone(),
        image: image_rel,
        masks: MaskRef::Packed(masks_rel),
        provenance: Provenance::Synthetic,
        source_target_id: Some(rec.source_target_id.clone()),
        source_patch_id: Some(format!("p{:04}", rec.source_patch_id)),
        roi: Some([rec.roi.x, rec.roi.y, rec.roi.w, rec.roi.h]),
        seed: Some(rec.seed),
    })
}

// ---------------------------------------------------------------------
// Patch bank

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PatchMeta {
    pub class: ClassId,
    pub source_id: String,
    pub area: usize,
    pub rel_direction: RelDirection,
    pub margin: u32,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BankEntry {
    pub id: String,
    pub image: PathBuf,
    pub mask: PathBuf,
    #[serde(flatten)]
    pub meta: PatchMeta,
}

/// Write a patch bank: per-patch crop PNG, mask PNG, metadata JSON,
/// plus a `bank.json` index.
pub fn save_bank<S: Scalar>(dir: &Path, patches: &[Patch<S>]) -> Result<Vec<BankEntry>> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut index = Vec::with_capacity(patches.len());
    for (i, patch) in patches.iter().enumerate() {
        let id = format!("p{i:04}");
        let image_rel = PathBuf::from(format!("{id}.png"));
        let mask_rel = PathBuf::from(format!("{id}_mask.png"));
        io::save_image(&patch.image, dir.join(&image_rel))?;
        io::save_mask(&patch.mask, dir.join(&mask_rel))?;
        let entry = BankEntry {
            id: id.clone(),
            image: image_rel,
            mask: mask_rel,
            meta: PatchMeta {
                class: patch.class,
                source_id: patch.source_id.clone(),
                area: patch.area,
                rel_direction: patch.rel_direction,
                margin: patch.margin,
            },
        };
        let meta_path = dir.join(format!("{id}.json"));
        let text = serde_json::to_string_pretty(&entry).expect("bank entry serializes");
        std::fs::write(&meta_path, text).map_err(|e| Error::io(&meta_path, e))?;
        index.push(entry);
    }
    let index_path = dir.join("bank.json");
    let text = serde_json::to_string_pretty(&index).expect("bank index serializes");
    std::fs::write(&index_path, text).map_err(|e| Error::io(&index_path, e))?;
    Ok(index)
}

pub fn load_bank<S: Scalar>(dir: &Path) -> Result<Vec<Patch<S>>> {
    let index_path = dir.join("bank.json");
    let text = std::fs::read_to_string(&index_path).map_err(|e| Error::io(&index_path, e))?;
    let index: Vec<BankEntry> = serde_json::from_str(&text).map_err(|e| Error::Manifest {
        path: index_path.clone(),
        reason: e.to_string(),
    })?;
    let mut patches = Vec::with_capacity(index.len());
    for entry in &index {
        let image = io::load_image(resolve(dir, &entry.image))?;
        let mask = io::load_mask(resolve(dir, &entry.mask))?;
        if entry.meta.area != mask.count() {
            return Err(Error::Manifest {
                path: index_path.clone(),
                reason: format!(
                    "bank entry {}: recorded area {} does not match mask ({})",
                    entry.id,
                    entry.meta.area,
                    mask.count()
                ),
            });
        }
        patches.push(Patch {
            image,
            mask,
            class: entry.meta.class,
            source_id: entry.meta.source_id.clone(),
            area: entry.meta.area,
            rel_direction: entry.meta.rel_direction,
            margin: entry.meta.margin,
        });
    }
    Ok(patches)
}

// ---------------------------------------------------------------------
// Metrics CSVs and stats JSON

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScoreRow {
    pub image_id: String,
    pub class: ClassId,
    pub dsc: f64,
    pub sdsc: f64,
    pub recall: f64,
    pub hd95: Option<f64>,
    pub empty_pair: bool,
}

pub fn write_per_image_csv<S: Scalar>(path: &Path, report: &MetricsReport<S>) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::Manifest {
        path: path.into(),
        reason: e.to_string(),
    })?;
    for rec in &report.per_image {
        let row = ScoreRow {
            image_id: rec.image_id.clone(),
            class: rec.class,
            dsc: rec.score.dsc.to_f64().unwrap(),
            sdsc: rec.score.sdsc.to_f64().unwrap(),
            recall: rec.score.recall.to_f64().unwrap(),
            hd95: rec.score.hd95.map(|v| v.to_f64().unwrap()),
            empty_pair: rec.score.empty_pair,
        };
        w.serialize(row).map_err(|e| Error::Manifest {
            path: path.into(),
            reason: e.to_string(),
        })?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct SummaryCsvRow {
    class: ClassId,
    metric: String,
    mean: f64,
    std: f64,
    n: usize,
    n_hd95_defined: usize,
}

pub fn write_summary_csv<S: Scalar>(path: &Path, report: &MetricsReport<S>) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::Manifest {
        path: path.into(),
        reason: e.to_string(),
    })?;
    for row in &report.summary {
        w.serialize(SummaryCsvRow {
            class: row.class,
            metric: row.metric.clone(),
            mean: row.mean.to_f64().unwrap(),
            std: row.std.to_f64().unwrap(),
            n: row.n,
            n_hd95_defined: row.n_hd95_defined,
        })
        .map_err(|e| Error::Manifest {
            path: path.into(),
            reason: e.to_string(),
        })?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_per_image_csv(path: &Path) -> Result<Vec<ScoreRow>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| Error::Manifest {
        path: path.into(),
        reason: e.to_string(),
    })?;
    r.deserialize()
        .map(|row| {
            row.map_err(|e| Error::Manifest {
                path: path.into(),
                reason: e.to_string(),
            })
        })
        .collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct StatRow {
    pub metric: String,
    pub class: ClassId,
    pub n: usize,
    pub mean_diff: f64,
    pub t: f64,
    pub p: f64,
    pub significance_tier: SignificanceTier,
}

/// Paired t-tests per class for DSC, SDSC, and recall between two
/// per-image score files covering the same (image, class) pairs.
pub fn compare_score_files(a: &[ScoreRow], b: &[ScoreRow]) -> Result<Vec<StatRow>> {
    let key = |r: &ScoreRow| (r.image_id.clone(), r.class);
    let index_b: BTreeMap<_, &ScoreRow> = b.iter().map(|r| (key(r), r)).collect();
    if a.len() != b.len() {
        return Err(Error::IdMismatch(format!(
            "score files have {} vs {} rows",
            a.len(),
            b.len()
        )));
    }

    let mut out = Vec::new();
    for class in ClassId::ALL {
        let rows_a: Vec<&ScoreRow> = a.iter().filter(|r| r.class == class).collect();
        if rows_a.is_empty() {
            continue;
        }
        let mut pairs: Vec<(&ScoreRow, &ScoreRow)> = Vec::with_capacity(rows_a.len());
        for ra in rows_a {
            let rb = index_b
                .get(&key(ra))
                .ok_or_else(|| Error::IdMismatch(format!("'{}' missing from second file", ra.image_id)))?;
            pairs.push((ra, rb));
        }
        for (metric, pick) in [
            ("dsc", (|r: &ScoreRow| r.dsc) as fn(&ScoreRow) -> f64),
            ("sdsc", |r: &ScoreRow| r.sdsc),
            ("recall", |r: &ScoreRow| r.recall),
        ] {
            let va: Vec<f64> = pairs.iter().map(|(ra, _)| pick(ra)).collect();
            let vb: Vec<f64> = pairs.iter().map(|(_, rb)| pick(rb)).collect();
            let result = paired_t_test::<f64>(&va, &vb)?;
            out.push(StatRow {
                metric: metric.into(),
                class,
                n: result.n,
                mean_diff: result.mean_diff,
                t: result.t_statistic,
                p: result.p_value,
                significance_tier: result.significance,
            });
        }
    }
    Ok(out)
}

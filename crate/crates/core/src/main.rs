use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use sonosynth::manifest::{
    self, load_dataset, load_manifest, write_manifest, ManifestRecord, MaskRef, Provenance,
};
use sonosynth::mask::ClassId;
use sonosynth::metrics::evaluate_dataset;
use sonosynth::poisson::{seamless_clone, SolveOptions};
use sonosynth::synth::{balance_dataset, extract_patches, SynthesisConfig};
use sonosynth::{io, Error, GrayImage, Real, Result};

#[derive(Parser)]
#[command(
    name = "sonosynth",
    about = "Synthesize class-balanced annotated ultrasound datasets and evaluate segmentations"
)]
struct Cli {
    /// Seed for all randomness; identical seeds give byte-identical outputs.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Worker threads for blending (default: all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Overwrite existing outputs.
    #[arg(long, global = true)]
    force: bool,
    /// Progress chatter on standard error.
    #[arg(long, global = true)]
    verbose: bool,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Build a patch bank from the annotated dataset.
    Extract {
        #[arg(long)]
        dataset: PathBuf,
        /// Class to extract (lesion, locule, solid_area, papillation).
        #[arg(long)]
        class: String,
        /// Pixels of context kept around each structure.
        #[arg(long, default_value_t = 5)]
        margin: u32,
        #[arg(long)]
        out: PathBuf,
    },
    /// Synthesize images until per-class targets are met.
    Generate {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        bank: PathBuf,
        /// Targets as class=count or class=+delta, comma separated.
        #[arg(long)]
        targets: String,
        #[arg(long)]
        out: PathBuf,
        /// Raw copy-paste instead of gradient-domain blending (ablation).
        #[arg(long)]
        naive_paste: bool,
        /// Class hosting the transplanted structures.
        #[arg(long, default_value = "solid_area")]
        host_class: String,
        /// Horizontal offset as a fraction of the host width.
        #[arg(long, default_value_t = 1.0 / 3.0)]
        offset_fraction: f64,
        /// Minimum fraction of patch pixels inside the host.
        #[arg(long, default_value_t = 0.3)]
        min_overlap: f64,
        #[arg(long, default_value_t = 20)]
        retries: u32,
    },
    /// Blend one source patch into one target image.
    Blend {
        #[arg(long)]
        source: PathBuf,
        #[arg(long)]
        target: PathBuf,
        #[arg(long)]
        mask: PathBuf,
        /// Placement offset "dx,dy" in target pixels.
        #[arg(long, default_value = "0,0")]
        offset: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score predicted segmentations against ground truth.
    Eval {
        #[arg(long)]
        gt: PathBuf,
        #[arg(long)]
        pred: PathBuf,
        /// Surface-DSC tolerance in pixels.
        #[arg(long, default_value_t = 3.0)]
        tolerance: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Paired t-tests between two per-image score files.
    Stats {
        #[arg(long)]
        a: PathBuf,
        #[arg(long)]
        b: PathBuf,
        /// Output JSON path (stdout when omitted).
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn exit_code_for(e: &Error) -> u8 {
    match e {
        Error::Manifest { .. }
        | Error::IdMismatch(_)
        | Error::DimensionMismatch(_)
        | Error::InvalidArgument(_) => 2,
        Error::Io { .. } | Error::BadImage { .. } => 3,
        Error::OutputExists(_) => 4,
        Error::NoEligibleTargets(_) => 5,
        Error::OmegaTouchesBorder => 6,
        _ => 1,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(jobs) = cli.jobs {
        // ignore failure when a pool was already installed (tests)
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global();
    }
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code_for(&e))
        }
    }
}

/// Refuse to write into an existing non-empty directory without --force.
fn guard_dir(dir: &Path, force: bool) -> Result<()> {
    if dir.exists() && !force {
        let non_empty = std::fs::read_dir(dir)
            .map_err(|e| Error::io(dir, e))?
            .next()
            .is_some();
        if non_empty {
            return Err(Error::OutputExists(dir.into()));
        }
    }
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn guard_file(path: &Path, force: bool) -> Result<()> {
    if path.exists() && !force {
        return Err(Error::OutputExists(path.into()));
    }
    Ok(())
}

fn run(cli: &Cli) -> Result<()> {
    match &cli.cmd {
        Cmd::Extract {
            dataset,
            class,
            margin,
            out,
        } => cmd_extract(cli, dataset, class, *margin, out),
        Cmd::Generate {
            dataset,
            bank,
            targets,
            out,
            naive_paste,
            host_class,
            offset_fraction,
            min_overlap,
            retries,
        } => {
            let config = SynthesisConfig {
                offset_fraction: *offset_fraction,
                class_targets: BTreeMap::new(),
                rng_seed: cli.seed,
                min_overlap_fraction: *min_overlap,
                max_placement_retries: *retries,
                host_class: ClassId::parse(host_class)?,
                naive_paste: *naive_paste,
            };
            cmd_generate(cli, dataset, bank, targets, out, config)
        }
        Cmd::Blend {
            source,
            target,
            mask,
            offset,
            out,
        } => cmd_blend(cli, source, target, mask, offset, out),
        Cmd::Eval {
            gt,
            pred,
            tolerance,
            out,
        } => cmd_eval(cli, gt, pred, *tolerance, out),
        Cmd::Stats { a, b, out } => cmd_stats(a, b, out.as_deref()),
    }
}

fn cmd_extract(cli: &Cli, dataset: &Path, class: &str, margin: u32, out: &Path) -> Result<()> {
    let class = ClassId::parse(class)?;
    let data = load_dataset::<Real>(dataset)?;
    let (patches, warnings) = extract_patches(&data, class, margin);
    for w in &warnings {
        eprintln!(
            "warning: skipped {} component at ({},{}): {}",
            class.name(),
            w.bbox.x,
            w.bbox.y,
            w.reason
        );
    }
    if patches.is_empty() {
        eprintln!("warning: no {} components found; bank is empty", class.name());
    }
    guard_dir(out, cli.force)?;
    manifest::save_bank(out, &patches)?;

    println!("patches: {}", patches.len());
    if !patches.is_empty() {
        let areas: Vec<usize> = patches.iter().map(|p| p.area).collect();
        let max = *areas.iter().max().unwrap();
        let min = *areas.iter().min().unwrap();
        println!("area histogram (min {min}, max {max}):");
        let bins = 8usize;
        let width = ((max - min) / bins + 1).max(1);
        for b in 0..bins {
            let lo = min + b * width;
            let hi = lo + width;
            let count = areas.iter().filter(|&&a| a >= lo && a < hi).count();
            if count > 0 {
                println!("  [{lo:>6}, {hi:>6}) {count}");
            }
        }
    }
    Ok(())
}

fn parse_targets(
    spec: &str,
    current: &dyn Fn(ClassId) -> usize,
) -> Result<BTreeMap<ClassId, usize>> {
    let mut out = BTreeMap::new();
    for part in spec.split(',').filter(|s| !s.is_empty()) {
        let (name, value) = part.split_once('=').ok_or_else(|| {
            Error::InvalidArgument(format!("target '{part}' is not class=count"))
        })?;
        let class = ClassId::parse(name.trim())?;
        let value = value.trim();
        let target = if let Some(delta) = value.strip_prefix('+') {
            let delta: usize = delta
                .parse()
                .map_err(|_| Error::InvalidArgument(format!("bad delta in '{part}'")))?;
            current(class) + delta
        } else {
            value
                .parse()
                .map_err(|_| Error::InvalidArgument(format!("bad count in '{part}'")))?
        };
        out.insert(class, target);
    }
    if out.is_empty() {
        return Err(Error::InvalidArgument("no targets given".into()));
    }
    Ok(out)
}

fn cmd_generate(
    cli: &Cli,
    dataset_path: &Path,
    bank_dir: &Path,
    targets: &str,
    out: &Path,
    mut config: SynthesisConfig,
) -> Result<()> {
    let records = load_manifest(dataset_path)?;
    let data = load_dataset::<Real>(dataset_path)?;
    let bank = manifest::load_bank::<Real>(bank_dir)?;

    let count_for =
        |class: ClassId| data.iter().filter(|(_, _, m)| m.has_class(class)).count();
    config.class_targets = parse_targets(targets, &count_for)?;

    // exit 5 when nothing can be synthesized at all
    let mut any_eligible = false;
    let mut any_deficit = false;
    for (&class, &target) in &config.class_targets {
        if count_for(class) >= target {
            continue;
        }
        any_deficit = true;
        let rule =
            sonosynth::synth::EligibilityRule::for_transplant(class, config.host_class);
        if !sonosynth::synth::eligible_targets(&data, &rule).is_empty() {
            any_eligible = true;
        }
    }
    if any_deficit && !any_eligible {
        return Err(Error::NoEligibleTargets(
            config
                .class_targets
                .keys()
                .map(|c| c.name())
                .collect::<Vec<_>>()
                .join(","),
        ));
    }

    if cli.verbose {
        eprintln!("balancing {} classes over {} images", config.class_targets.len(), data.len());
    }
    let (synthetic, report) = balance_dataset(&data, &bank, &config)?;
    if cli.verbose {
        eprintln!("synthesized {} records", synthetic.len());
    }

    guard_dir(out, cli.force)?;
    let mut created: Vec<PathBuf> = Vec::new();
    let result = (|| -> Result<()> {
        for sub in ["images", "masks"] {
            let d = out.join(sub);
            std::fs::create_dir_all(&d).map_err(|e| Error::io(&d, e))?;
        }
        // merged manifest: real records keep their original files
        let base = dataset_path.parent().unwrap_or(Path::new("."));
        let mut merged: Vec<ManifestRecord> = records
            .iter()
            .map(|r| {
                let mut r = r.clone();
                r.image = absolutize(base, &r.image);
                r.masks = match &r.masks {
                    MaskRef::Packed(p) => MaskRef::Packed(absolutize(base, p)),
                    MaskRef::PerClass(m) => MaskRef::PerClass(
                        m.iter()
                            .map(|(k, v)| (k.clone(), absolutize(base, v)))
                            .collect(),
                    ),
                };
                r.provenance = Provenance::Real;
                r
            })
            .collect();
        for rec in &synthetic {
            let entry = manifest::write_synthetic_record(out, rec)?;
            created.push(out.join(&entry.image));
            if let MaskRef::Packed(p) = &entry.masks {
                created.push(out.join(p));
            }
            merged.push(entry);
        }
        let manifest_path = out.join("manifest.json");
        write_manifest(&manifest_path, &merged)?;
        created.push(manifest_path);
        let report_path = out.join("balance_report.json");
        let text = serde_json::to_string_pretty(&report).expect("report serializes");
        std::fs::write(&report_path, text).map_err(|e| Error::io(&report_path, e))?;
        created.push(report_path);
        Ok(())
    })();

    if result.is_err() {
        for p in created {
            let _ = std::fs::remove_file(p);
        }
        return result;
    }

    for row in &report.counts {
        println!(
            "{}: {} -> {}{}",
            row.class.name(),
            row.before,
            row.after,
            row.target
                .map(|t| format!(" (target {t}{})", if row.reached { "" } else { ", unreached" }))
                .unwrap_or_default()
        );
    }
    for w in &report.warnings {
        eprintln!("warning: {w}");
    }
    Ok(())
}

fn absolutize(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

fn cmd_blend(
    cli: &Cli,
    source: &Path,
    target: &Path,
    mask: &Path,
    offset: &str,
    out: &Path,
) -> Result<()> {
    let (dx, dy) = offset
        .split_once(',')
        .and_then(|(a, b)| Some((a.trim().parse::<i64>().ok()?, b.trim().parse::<i64>().ok()?)))
        .ok_or_else(|| Error::InvalidArgument(format!("offset '{offset}' is not dx,dy")))?;
    guard_file(out, cli.force)?;
    let target_img: GrayImage = io::load_image(target)?;
    let source_img: GrayImage = io::load_image(source)?;
    let patch_mask = io::load_mask(mask)?;
    let (blended, report) = seamless_clone(
        &target_img,
        &source_img,
        &patch_mask,
        (dx, dy),
        SolveOptions::default(),
    )?;
    if cli.verbose {
        eprintln!(
            "solved in {} iterations, residual {:.3e}",
            report.iterations, report.residual
        );
    }
    if let Some(parent) = out.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
    }
    io::save_image(&blended, out)
}

fn cmd_eval(cli: &Cli, gt: &Path, pred: &Path, tolerance: f64, out: &Path) -> Result<()> {
    let gt_data = load_dataset::<Real>(gt)?;
    let pred_data = load_dataset::<Real>(pred)?;
    let gt_masks: Vec<_> = gt_data.into_iter().map(|(id, _, m)| (id, m)).collect();
    let pred_masks: Vec<_> = pred_data.into_iter().map(|(id, _, m)| (id, m)).collect();
    let report = evaluate_dataset::<Real>(&gt_masks, &pred_masks, tolerance)?;
    guard_dir(out, cli.force)?;
    manifest::write_per_image_csv(&out.join("per_image.csv"), &report)?;
    manifest::write_summary_csv(&out.join("summary.csv"), &report)?;
    println!("scored {} images across {} classes", gt_masks.len(), ClassId::ALL.len());
    Ok(())
}

fn cmd_stats(a: &Path, b: &Path, out: Option<&Path>) -> Result<()> {
    let rows_a = manifest::read_per_image_csv(a)?;
    let rows_b = manifest::read_per_image_csv(b)?;
    let stats = manifest::compare_score_files(&rows_a, &rows_b)?;
    let text = serde_json::to_string_pretty(&stats).expect("stats serialize");
    match out {
        Some(path) => std::fs::write(path, text).map_err(|e| Error::io(path, e))?,
        None => println!("{text}"),
    }
    Ok(())
}

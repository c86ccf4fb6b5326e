//! Command-line front-end: validation, evaluation, analysis splits,
//! ground-truth augmentation, and synthetic scenario generation.

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use faceval_core::consensus::{self, BoxFusion, ConsensusConfig};
use faceval_core::curves::{summary_table, Curve};
use faceval_core::error::Error as CoreError;
use faceval_core::formats;
use faceval_core::matching::NegativeTag;
use faceval_core::protocol::Split;
use faceval_core::report::{
    evaluate_day_split, evaluate_detection, evaluate_recognition, evaluate_rejections,
};
use faceval_core::synth::{generate_scenario, ScenarioSpec};

/// Environment variable holding the default output directory.
const OUTPUT_DIR_ENV: &str = "FACEVAL_OUTPUT_DIR";

#[derive(Parser)]
#[command(
    name = "faceval",
    version,
    about = "Scores open-set face detection and identification submissions"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum SplitArg {
    Train,
    Validation,
    Test,
}

impl From<SplitArg> for Split {
    fn from(value: SplitArg) -> Split {
        match value {
            SplitArg::Train => Split::Train,
            SplitArg::Validation => Split::Validation,
            SplitArg::Test => Split::Test,
        }
    }
}

#[derive(Args)]
struct OutputArgs {
    /// Directory for emitted files (default: $FACEVAL_OUTPUT_DIR or '.')
    #[arg(long)]
    output_dir: Option<PathBuf>,
    /// Also render SVG plots next to the CSV reports
    #[arg(long)]
    svg: bool,
}

impl OutputArgs {
    fn dir(&self) -> PathBuf {
        self.output_dir.clone().unwrap_or_else(|| {
            std::env::var_os(OUTPUT_DIR_ENV)
                .map(PathBuf::from)
                .unwrap_or_else(|| PathBuf::from("."))
        })
    }
}

#[derive(Args)]
struct EvalArgs {
    /// Evaluator-facing ground-truth manifest (.csv or .json)
    #[arg(long)]
    manifest: PathBuf,
    /// Split of a CSV manifest (JSON manifests embed theirs)
    #[arg(long, value_enum, default_value = "test")]
    split: SplitArg,
    /// Comma-separated false-accept/identification budgets
    #[arg(
        long,
        value_delimiter = ',',
        default_value = "10,100,1000,10000,100000"
    )]
    budgets: Vec<usize>,
    /// Sweep N log-spaced budgets from 1 up to the largest --budgets value
    /// instead of the explicit grid (dense curves for plotting)
    #[arg(long)]
    dense_budgets: Option<usize>,
    /// Worker threads for per-image matching (0 = all cores)
    #[arg(long, default_value_t = 0)]
    workers: usize,
    #[command(flatten)]
    output: OutputArgs,
}

impl EvalArgs {
    fn effective_budgets(&self) -> Vec<usize> {
        match self.dense_budgets {
            Some(points) => {
                let max = self.budgets.last().copied().unwrap_or(100_000);
                faceval_core::curves::log_budget_grid(points, max)
            }
            None => self.budgets.clone(),
        }
    }
}

fn parse_named_path(text: &str) -> Result<(String, PathBuf), String> {
    match text.split_once('=') {
        Some((name, path)) if !name.is_empty() && !path.is_empty() => {
            Ok((name.to_string(), PathBuf::from(path)))
        }
        _ => Err(format!("expected NAME=PATH, got {text:?}")),
    }
}

fn parse_tag(text: &str) -> Result<NegativeTag, String> {
    NegativeTag::from_code(text.trim()).map_err(|e| e.to_string())
}

#[derive(Subcommand)]
enum Command {
    /// Parse and cross-check inputs, printing manifest statistics
    Validate {
        #[arg(long)]
        manifest: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "test")]
        split: SplitArg,
        #[arg(long)]
        detections: Option<PathBuf>,
        #[arg(long)]
        recognitions: Option<PathBuf>,
    },
    /// Score a detection submission: FROC curve over false-accept budgets
    EvalDetect {
        #[command(flatten)]
        eval: EvalArgs,
        /// Detection submission CSV
        #[arg(long)]
        detections: PathBuf,
        /// Base name of the emitted report files
        #[arg(long, default_value = "froc")]
        name: String,
    },
    /// Score a recognition submission: rank-1 open-set DIR curve
    EvalRecognize {
        #[command(flatten)]
        eval: EvalArgs,
        /// Recognition submission CSV
        #[arg(long)]
        recognitions: PathBuf,
        /// Base name of the emitted report files
        #[arg(long, default_value = "dir")]
        name: String,
    },
    /// DIR curves for same-day vs different-day probes, sharing one negative set
    SplitReport {
        #[command(flatten)]
        eval: EvalArgs,
        #[arg(long)]
        recognitions: PathBuf,
        /// Training manifest supplying the per-identity day map
        #[arg(long)]
        train_manifest: PathBuf,
        #[arg(long, value_enum, default_value = "train")]
        train_split: SplitArg,
    },
    /// Correct-rejection curves per false-identification origin
    CrrReport {
        #[command(flatten)]
        eval: EvalArgs,
        #[arg(long)]
        recognitions: PathBuf,
        /// Comma-separated tags: MIT, MNT, FA, U
        #[arg(long, value_delimiter = ',', value_parser = parse_tag, default_value = "MIT,MNT,FA")]
        tags: Vec<NegativeTag>,
        /// Correct-identification count grid (default: 50 points up to the total)
        #[arg(long, value_delimiter = ',')]
        grid: Option<Vec<usize>>,
    },
    /// Augment ground truth from multi-detector consensus and unanimous
    /// recognizer votes
    Augment {
        /// Manifest of the split being augmented
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long, value_enum, default_value = "test")]
        split: SplitArg,
        /// Validation manifest used for threshold calibration
        #[arg(long)]
        val_manifest: PathBuf,
        #[arg(long, value_enum, default_value = "validation")]
        val_split: SplitArg,
        /// Detector submission on the augmented split, repeatable: NAME=PATH
        #[arg(long = "detections", value_parser = parse_named_path, required = true)]
        detections: Vec<(String, PathBuf)>,
        /// The same detectors' submissions on the validation split: NAME=PATH
        #[arg(long = "val-detections", value_parser = parse_named_path, required = true)]
        val_detections: Vec<(String, PathBuf)>,
        /// Recognition submissions for identity voting: NAME=PATH
        #[arg(long = "recognitions", value_parser = parse_named_path)]
        recognitions: Vec<(String, PathBuf)>,
        #[arg(long, default_value_t = 3)]
        min_detectors: usize,
        #[arg(long, default_value_t = 0.25)]
        overlap_iou: f64,
        #[arg(long, default_value_t = 2500)]
        calibration_budget: usize,
        #[arg(long, default_value_t = 1.2)]
        upscale: f64,
        #[arg(long, default_value_t = 3)]
        min_recognizers: usize,
        /// Average boxes as position+size ("center-size") or corners
        #[arg(long, default_value = "center-size")]
        fusion: String,
        /// Worker threads for per-image matching (0 = all cores)
        #[arg(long, default_value_t = 0)]
        workers: usize,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Generate a seeded synthetic challenge in the standard file formats
    Synth {
        #[arg(long)]
        seed: u64,
        #[arg(long, default_value_t = 40)]
        images: usize,
        /// Allow nested and overlapping faces
        #[arg(long)]
        crowded: bool,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Merge per-participant curve CSVs into one results table
    Summarize {
        /// Curve files, repeatable: NAME=PATH
        #[arg(long = "curve", value_parser = parse_named_path, required = true)]
        curves: Vec<(String, PathBuf)>,
        #[command(flatten)]
        output: OutputArgs,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // clap prints help/version through this path too
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            let code = e
                .downcast_ref::<CoreError>()
                .map(CoreError::exit_code)
                .unwrap_or(1);
            ExitCode::from(code as u8)
        }
    }
}

fn in_worker_pool<T>(
    workers: usize,
    job: impl FnOnce() -> anyhow::Result<T> + Send,
) -> anyhow::Result<T>
where
    T: Send,
{
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| anyhow::anyhow!("cannot build worker pool: {e}"))?;
    pool.install(job)
}

fn print_curve(curve: &Curve) {
    println!("{} (denominator {})", curve.kind, curve.denominator);
    println!(
        "{:>10} {:>14} {:>8} {:>10} {:>9}",
        "budget", "threshold", "count", "rate", "saturated"
    );
    for p in &curve.points {
        println!(
            "{:>10} {:>14} {:>8} {:>10.6} {:>9}",
            p.budget, p.threshold, p.positive_count, p.rate, p.saturated
        );
    }
}

fn run(command: Command) -> anyhow::Result<()> {
    match command {
        Command::Validate {
            manifest,
            split,
            detections,
            recognitions,
        } => {
            if manifest.is_none() && detections.is_none() && recognitions.is_none() {
                anyhow::bail!(
                    "nothing to validate: pass --manifest, --detections or --recognitions"
                );
            }
            let loaded_manifest = match &manifest {
                Some(path) => {
                    let m = formats::load_manifest(path, split.into())?;
                    println!("manifest {} is valid", path.display());
                    print!("{}", m.stats());
                    Some(m)
                }
                None => None,
            };
            if let Some(path) = &detections {
                let records = formats::parse_detection_file(path)?;
                println!("detections {}: {} records", path.display(), records.len());
                if let Some(m) = &loaded_manifest {
                    faceval_core::matching::match_detection_records(m, &records)?;
                    println!("detections reference only manifest images");
                }
            }
            if let Some(path) = &recognitions {
                let file = formats::parse_recognition_file(path)?;
                for warning in &file.warnings {
                    eprintln!("warning: {warning}");
                }
                println!(
                    "recognitions {}: {} records, {} warnings",
                    path.display(),
                    file.records.len(),
                    file.warnings.len()
                );
                if let Some(m) = &loaded_manifest {
                    faceval_core::matching::match_recognition_records(m, &file.records)?;
                    println!("recognitions reference only manifest images");
                }
            }
            Ok(())
        }

        Command::EvalDetect {
            eval,
            detections,
            name,
        } => {
            let manifest = formats::load_manifest(&eval.manifest, eval.split.into())?;
            let records = formats::parse_detection_file(&detections)?;
            let budgets = eval.effective_budgets();
            let report = in_worker_pool(eval.workers, || {
                Ok(evaluate_detection(&manifest, &records, &budgets)?)
            })?;
            emit_single_curve(&report.curve, &name, &eval.output)?;
            print_curve(&report.curve);
            for note in &report.notes {
                println!("note: {note}");
            }
            let d = &report.diagnostics;
            println!(
                "records: {} total, {} matched a face, {} duplicate overlaps discarded, {} false accepts",
                d.records_total, d.positives, d.duplicate_overlaps, d.negatives
            );
            Ok(())
        }

        Command::EvalRecognize {
            eval,
            recognitions,
            name,
        } => {
            let manifest = formats::load_manifest(&eval.manifest, eval.split.into())?;
            let file = formats::parse_recognition_file(&recognitions)?;
            for warning in &file.warnings {
                eprintln!("warning: {warning}");
            }
            let budgets = eval.effective_budgets();
            let report = in_worker_pool(eval.workers, || {
                Ok(evaluate_recognition(&manifest, &file.records, &budgets)?)
            })?;
            emit_single_curve(&report.curve, &name, &eval.output)?;
            print_curve(&report.curve);
            for note in &report.notes {
                println!("note: {note}");
            }
            let d = &report.diagnostics;
            println!(
                "records: {} total, {} correct identifications, {} false identifications, \
                 {} wrong known labels, {} known faces rejected, {} correct rejections",
                d.records_total,
                d.positives,
                d.negatives,
                d.wrong_known_label,
                d.known_rejected,
                d.correct_rejections
            );
            Ok(())
        }

        Command::SplitReport {
            eval,
            recognitions,
            train_manifest,
            train_split,
        } => {
            let mut manifest = formats::load_manifest(&eval.manifest, eval.split.into())?;
            let train = formats::load_manifest(&train_manifest, train_split.into())?;
            manifest.attach_training_days(&train);
            let file = formats::parse_recognition_file(&recognitions)?;
            for warning in &file.warnings {
                eprintln!("warning: {warning}");
            }
            let budgets = eval.effective_budgets();
            let report = in_worker_pool(eval.workers, || {
                Ok(evaluate_day_split(&manifest, &file.records, &budgets)?)
            })?;
            println!(
                "same-day faces: {}; different-day faces: {}",
                report.same_day_faces, report.different_day_faces
            );
            let mut curves = BTreeMap::new();
            if let Some(curve) = report.same_day {
                curves.insert("dir-same-day".to_string(), curve);
            }
            if let Some(curve) = report.different_day {
                curves.insert("dir-different-day".to_string(), curve);
            }
            for (name, curve) in &curves {
                println!("== {name}");
                print_curve(curve);
            }
            for note in &report.notes {
                println!("note: {note}");
            }
            let written = formats::emit_report(&curves, None, eval.output.dir(), eval.output.svg)?;
            for path in written {
                println!("wrote {}", path.display());
            }
            Ok(())
        }

        Command::CrrReport {
            eval,
            recognitions,
            tags,
            grid,
        } => {
            let manifest = formats::load_manifest(&eval.manifest, eval.split.into())?;
            let file = formats::parse_recognition_file(&recognitions)?;
            for warning in &file.warnings {
                eprintln!("warning: {warning}");
            }
            let curves = in_worker_pool(eval.workers, || {
                Ok(evaluate_rejections(
                    &manifest,
                    &file.records,
                    &tags,
                    grid.as_deref(),
                )?)
            })?;
            let mut named = BTreeMap::new();
            for (tag, curve) in curves {
                let name = format!("crr-{}", tag.code().to_lowercase());
                println!("== {name}");
                print_curve(&curve);
                named.insert(name, curve);
            }
            let written = formats::emit_report(&named, None, eval.output.dir(), eval.output.svg)?;
            for path in written {
                println!("wrote {}", path.display());
            }
            Ok(())
        }

        Command::Augment {
            manifest,
            split,
            val_manifest,
            val_split,
            detections,
            val_detections,
            recognitions,
            min_detectors,
            overlap_iou,
            calibration_budget,
            upscale,
            min_recognizers,
            fusion,
            workers,
            output,
        } => {
            let config = ConsensusConfig {
                min_detectors,
                overlap_iou,
                calibration_budget,
                upscale_factor: upscale,
                min_agreeing_recognizers: min_recognizers,
                fusion: match fusion.as_str() {
                    "center-size" => BoxFusion::CenterSize,
                    "corners" => BoxFusion::Corners,
                    other => anyhow::bail!("unknown fusion mode {other:?}"),
                },
            };
            let manifest_is_json = manifest.extension().map(|e| e == "json").unwrap_or(false);
            let target = formats::load_manifest(&manifest, split.into())?;
            let validation = formats::load_manifest(&val_manifest, val_split.into())?;
            let mut split_dets = BTreeMap::new();
            for (name, path) in &detections {
                split_dets.insert(name.clone(), formats::parse_detection_file(path)?);
            }
            let mut val_dets = BTreeMap::new();
            for (name, path) in &val_detections {
                val_dets.insert(name.clone(), formats::parse_detection_file(path)?);
            }
            let mut rec_subs = BTreeMap::new();
            for (name, path) in &recognitions {
                let file = formats::parse_recognition_file(path)?;
                for warning in &file.warnings {
                    eprintln!("warning: {warning}");
                }
                rec_subs.insert(name.clone(), file.records);
            }
            let (augmented, audit) = in_worker_pool(workers, || {
                Ok(consensus::run_augmentation(
                    &target,
                    &validation,
                    &val_dets,
                    &split_dets,
                    &rec_subs,
                    &config,
                )?)
            })?;
            let dir = output.dir();
            std::fs::create_dir_all(&dir)
                .map_err(|e| CoreError::io(dir.display().to_string(), e))?;
            let manifest_out = if manifest_is_json {
                dir.join("augmented-manifest.json")
            } else {
                dir.join("augmented-manifest.csv")
            };
            if manifest_is_json {
                formats::write_manifest_json(&augmented, &manifest_out)?;
            } else {
                formats::write_manifest_csv(&augmented, &manifest_out)?;
            }
            let audit_out = dir.join("audit.log");
            formats::write_audit_log(&audit, &audit_out)?;
            println!(
                "faces: {} -> {} (known {} -> {})",
                target.total_faces(),
                augmented.total_faces(),
                target.known_faces(),
                augmented.known_faces()
            );
            println!(
                "added {} boxes, skipped {} duplicates, assigned {} identities, rejected {}",
                audit.added, audit.skipped_duplicates, audit.assigned, audit.rejected_assignments
            );
            println!("wrote {}", manifest_out.display());
            println!("wrote {}", audit_out.display());
            Ok(())
        }

        Command::Synth {
            seed,
            images,
            crowded,
            output,
        } => {
            let mut spec = ScenarioSpec::medium(seed);
            spec.image_count = images;
            spec.crowded = crowded;
            let scenario = generate_scenario(&spec)?;
            let dir = output.dir();
            std::fs::create_dir_all(&dir)
                .map_err(|e| CoreError::io(dir.display().to_string(), e))?;
            formats::write_manifest_csv(&scenario.train, dir.join("train-manifest.csv"))?;
            formats::write_manifest_json(&scenario.eval, dir.join("eval-manifest.json"))?;
            formats::write_manifest_csv(
                &scenario.eval.masked_view(),
                dir.join("eval-manifest-masked.csv"),
            )?;
            for (name, records) in &scenario.detections {
                formats::write_detection_file(records, dir.join(format!("detections-{name}.csv")))?;
            }
            for (name, records) in &scenario.recognitions {
                formats::write_recognition_file(
                    records,
                    dir.join(format!("recognitions-{name}.csv")),
                )?;
            }
            println!(
                "scenario seed {}: {} images, {} faces ({} known), {} detectors, {} recognizers",
                seed,
                scenario.eval.images().len(),
                scenario.eval.total_faces(),
                scenario.eval.known_faces(),
                scenario.detections.len(),
                scenario.recognitions.len()
            );
            println!("wrote scenario files to {}", dir.display());
            Ok(())
        }

        Command::Summarize { curves, output } => {
            let mut loaded = BTreeMap::new();
            for (name, path) in &curves {
                loaded.insert(name.clone(), formats::parse_curve_csv(path)?);
            }
            let table = summary_table(&loaded)?;
            print!("{table}");
            let dir = output.dir();
            std::fs::create_dir_all(&dir)
                .map_err(|e| CoreError::io(dir.display().to_string(), e))?;
            let path = dir.join("summary.csv");
            formats::write_summary_csv(&table, &path)?;
            println!("wrote {}", path.display());
            Ok(())
        }
    }
}

fn emit_single_curve(curve: &Curve, name: &str, output: &OutputArgs) -> anyhow::Result<()> {
    let dir = output.dir();
    std::fs::create_dir_all(&dir).map_err(|e| CoreError::io(dir.display().to_string(), e))?;
    let csv_path = dir.join(format!("{name}.csv"));
    formats::write_curve_csv(curve, &csv_path)?;
    println!("wrote {}", csv_path.display());
    if output.svg {
        let svg_path = dir.join(format!("{name}.svg"));
        formats::write_curve_svg(curve, name, &svg_path)?;
        println!("wrote {}", svg_path.display());
    }
    Ok(())
}

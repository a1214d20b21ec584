//! Command-line front end. Results go to stdout in machine-readable form;
//! diagnostics go to stderr. Exit status: 0 success, 1 partial failure or
//! I/O error, 2 invalid configuration or input format.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::annotation::{AnnotationSet, SegMask};
use crate::corruption::CorruptionKind;
use crate::error::{Error, Result};
use crate::fidelity::{severity_sweep, EmbeddingSet};
use crate::metrics::predictions::{
    read_jsonl, BoxPrediction, ClassPrediction, DetectionPrediction, MaskPrediction, ScalarPrediction,
};
use crate::metrics::{
    accuracy, build_reports, grounding_accuracy, mean_ap, mean_score, miou, record_id, render_report, severity_curves,
    AggregationPolicy, Condition, Detection, ReportFormat, ScoreCell, Task,
};
use crate::pipeline::{generate, ingest, CorruptionChain, DatasetManifest, GenerationPlan, LayoutKind};

#[derive(Debug, Parser)]
#[command(
    name = "reobench",
    version,
    about = "Graded image corruptions and robustness scoring"
)]
pub struct Cli {
    /// More diagnostics on stderr (-v info, -vv debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a corrupted benchmark tree.
    Corrupt(CorruptArgs),
    /// Score a prediction file against ground truth and emit a score cell.
    Score(ScoreArgs),
    /// Render a robustness table from a directory of score cells.
    Report(ReportArgs),
    /// Fréchet distance of per-severity embeddings against a clean set.
    Fidelity(FidelityArgs),
    /// Build a dataset manifest from a directory.
    Manifest(ManifestArgs),
}

#[derive(Debug, Args)]
struct DatasetArgs {
    /// Dataset directory or manifest JSON file.
    #[arg(long)]
    input: PathBuf,
    /// Directory layout when `--input` is a directory (default: detect).
    #[arg(long)]
    layout: Option<String>,
}

#[derive(Debug, Args)]
struct CorruptArgs {
    #[command(flatten)]
    dataset: DatasetArgs,
    #[arg(long)]
    out: PathBuf,
    /// Comma-separated corruption names (default: all twelve).
    #[arg(long, value_delimiter = ',')]
    types: Vec<String>,
    /// Severity range such as `1-5` or a single level.
    #[arg(long)]
    severities: Option<String>,
    /// Compound chain such as `brightness:3,cloud:3,compression:3`; repeatable.
    /// Replaces the type/severity grid.
    #[arg(long)]
    chain: Vec<String>,
    /// Seed for all random streams (default: the manifest's, else a fixed constant).
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, env = "REOBENCH_WORKERS", default_value_t = 0)]
    workers: usize,
    /// Also write re-encoded clean images under `clean/`.
    #[arg(long)]
    include_clean: bool,
}

#[derive(Debug, Args)]
struct ScoreArgs {
    #[arg(long)]
    task: String,
    /// JSON-lines prediction file.
    #[arg(long)]
    predictions: PathBuf,
    /// Ground truth: dataset directory or manifest (optional for captioning/vqa).
    #[arg(long)]
    input: Option<PathBuf>,
    #[arg(long)]
    layout: Option<String>,
    #[arg(long, default_value = "model")]
    model: String,
    /// `clean` or a corruption name.
    #[arg(long, default_value = "clean")]
    corruption: String,
    #[arg(long)]
    severity: Option<u32>,
    /// Number of segmentation classes (default: largest label + 1).
    #[arg(long)]
    num_classes: Option<usize>,
    #[arg(long, default_value_t = 0.5)]
    iou_threshold: f64,
    /// Where to write the score cell JSON.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ReportArgs {
    /// Directory of score cell JSON files (searched recursively).
    #[arg(long)]
    cells: PathBuf,
    #[arg(long, default_value = "csv")]
    format: String,
    #[arg(long, default_value = "mean")]
    aggregation: String,
    /// Comma-separated prevalence weights, one per corruption column.
    #[arg(long, value_delimiter = ',')]
    weights: Vec<f64>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also write per-severity curves as CSV.
    #[arg(long)]
    curves: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct FidelityArgs {
    #[arg(long)]
    clean: PathBuf,
    /// Corrupted embeddings as `SEVERITY=PATH`, or plain paths numbered 1, 2, ...
    #[arg(long, num_args = 1..)]
    corrupted: Vec<String>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ManifestArgs {
    #[command(flatten)]
    dataset: DatasetArgs,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_delimiter = ',')]
    types: Vec<String>,
    #[arg(long)]
    severities: Option<String>,
    #[arg(long)]
    out: Option<PathBuf>,
}

/// A failure with its exit status.
struct Exit {
    code: i32,
    message: String,
}

impl From<Error> for Exit {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::Io { .. } => 1,
            _ => 2,
        };
        Exit {
            code,
            message: e.to_string(),
        }
    }
}

fn config(message: impl Into<String>) -> Exit {
    Exit {
        code: 2,
        message: message.into(),
    }
}

fn parse_severities(s: &str) -> std::result::Result<[u32; 2], Exit> {
    let bad = || config(format!("invalid severity range `{s}` (expected e.g. 1-5 or 3)"));
    let (lo, hi) = match s.split_once('-') {
        Some((a, b)) => (
            a.trim().parse().map_err(|_| bad())?,
            b.trim().parse().map_err(|_| bad())?,
        ),
        None => {
            let v = s.trim().parse().map_err(|_| bad())?;
            (v, v)
        }
    };
    if lo == 0 || hi < lo || hi > 9 {
        return Err(bad());
    }
    Ok([lo, hi])
}

fn load_dataset(args: &DatasetArgs) -> std::result::Result<DatasetManifest, Exit> {
    load_ground_truth(&args.input, args.layout.as_deref())
}

fn load_ground_truth(input: &Path, layout: Option<&str>) -> std::result::Result<DatasetManifest, Exit> {
    if input.is_file() {
        return Ok(DatasetManifest::load(input)?);
    }
    let layout = match layout {
        None | Some("auto") => None,
        Some(l) => Some(l.parse::<LayoutKind>()?),
    };
    Ok(ingest(input, layout)?)
}

fn apply_grid(
    m: &mut DatasetManifest,
    types: &[String],
    severities: Option<&str>,
    seed: Option<u64>,
) -> std::result::Result<(), Exit> {
    if !types.is_empty() {
        m.corruption_grid.kinds = types
            .iter()
            .map(|t| t.parse::<CorruptionKind>())
            .collect::<Result<_>>()?;
    }
    if let Some(s) = severities {
        m.corruption_grid.severities = parse_severities(s)?;
    }
    if let Some(seed) = seed {
        m.seed = seed;
    }
    m.corruption_grid.cells()?;
    Ok(())
}

fn write_out(path: Option<&Path>, text: &str) -> std::result::Result<(), Exit> {
    match path {
        Some(p) => {
            if let Some(parent) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
                fs::create_dir_all(parent).map_err(|e| Exit::from(Error::io(parent, e)))?;
            }
            fs::write(p, text).map_err(|e| Exit::from(Error::io(p, e)))
        }
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn cmd_corrupt(args: CorruptArgs) -> std::result::Result<i32, Exit> {
    let mut manifest = load_dataset(&args.dataset)?;
    apply_grid(&mut manifest, &args.types, args.severities.as_deref(), args.seed)?;
    let mut plan = if args.chain.is_empty() {
        GenerationPlan::from_manifest(manifest, &args.out)?
    } else {
        let chains = args
            .chain
            .iter()
            .map(|c| CorruptionChain::parse(c, manifest.seed))
            .collect::<Result<Vec<_>>>()?;
        GenerationPlan::with_chains(manifest, chains, &args.out)
    };
    plan.include_clean = args.include_clean;
    plan.workers = args.workers;
    eprintln!(
        "generating {} images x {} corruption settings into {}",
        plan.manifest.images.len(),
        plan.chains.len(),
        plan.output_root.display()
    );
    let report = generate(&plan)?;
    for (output, n) in &report.per_output {
        eprintln!("  {output}: {n}");
    }
    for f in &report.failures {
        eprintln!("  failed {} -> {}: {}", f.image_id, f.output, f.message);
    }
    eprintln!("written {}, failed {}", report.written, report.failed);
    println!(
        "{}",
        serde_json::json!({"plan_hash": report.plan_hash, "written": report.written, "failed": report.failed})
    );
    Ok(if report.failed == 0 { 0 } else { 1 })
}

fn score_value(args: &ScoreArgs, task: Task) -> std::result::Result<f64, Exit> {
    let gt = match &args.input {
        Some(p) => Some(load_ground_truth(p, args.layout.as_deref())?),
        None => None,
    };
    let need_gt = || {
        gt.as_ref()
            .ok_or_else(|| config(format!("--input is required for {task}")))
    };
    let annotations = |m: &DatasetManifest| -> std::result::Result<Vec<(String, AnnotationSet)>, Exit> {
        m.images
            .iter()
            .map(|e| {
                let a = m
                    .load_annotation(e)?
                    .ok_or_else(|| config(format!("image `{}` has no annotation", e.id)))?;
                Ok((e.id.clone(), a))
            })
            .collect()
    };
    let pred_dir = args.predictions.parent().map(Path::to_path_buf).unwrap_or_default();
    let value = match task {
        Task::Classification => {
            let preds: BTreeMap<String, String> = read_jsonl::<ClassPrediction>(&args.predictions)?
                .into_iter()
                .map(|p| (p.id, p.label))
                .collect();
            let mut gts = BTreeMap::new();
            for (id, a) in annotations(need_gt()?)? {
                match a {
                    AnnotationSet::ClassLabel { category, .. } => gts.insert(id, category),
                    _ => return Err(config(format!("image `{id}` has no class label"))),
                };
            }
            accuracy(&preds, &gts)?
        }
        Task::Segmentation => {
            let gts: BTreeMap<String, SegMask> = annotations(need_gt()?)?
                .into_iter()
                .map(|(id, a)| match a {
                    AnnotationSet::SegMask(m) => Ok((id, m)),
                    _ => Err(config(format!("image `{id}` has no mask"))),
                })
                .collect::<std::result::Result<_, Exit>>()?;
            let mut preds = BTreeMap::new();
            for p in read_jsonl::<MaskPrediction>(&args.predictions)? {
                let path = if p.mask.is_absolute() {
                    p.mask.clone()
                } else {
                    pred_dir.join(&p.mask)
                };
                preds.insert(p.id, SegMask::load(&path)?);
            }
            if let Some(id) = preds.keys().find(|id| !gts.contains_key(*id)) {
                return Err(Error::IdMismatch(format!("prediction `{id}` has no ground truth")).into());
            }
            if let Some(id) = gts.keys().find(|id| !preds.contains_key(*id)) {
                return Err(Error::IdMismatch(format!("no prediction for `{id}`")).into());
            }
            let num_classes = args.num_classes.unwrap_or_else(|| {
                gts.values()
                    .chain(preds.values())
                    .flat_map(|m| m.classes.iter().copied())
                    .max()
                    .map_or(1, |c| c as usize + 1)
            });
            let pairs: Vec<(&SegMask, &SegMask)> = gts.iter().map(|(id, g)| (&preds[id], g)).collect();
            miou(&pairs, num_classes)?
        }
        Task::Detection => {
            let mut gts = BTreeMap::new();
            for (id, a) in annotations(need_gt()?)? {
                let boxes = match a {
                    AnnotationSet::OrientedBoxes { boxes } => boxes,
                    AnnotationSet::HorizontalBoxes { boxes } => boxes
                        .iter()
                        .map(|b| crate::annotation::OrientedBox {
                            corners: b.corners(),
                            category: b.category.clone(),
                            difficult: false,
                        })
                        .collect(),
                    _ => return Err(config(format!("image `{id}` has no boxes"))),
                };
                gts.insert(id, boxes);
            }
            let detections: Vec<Detection> = read_jsonl::<DetectionPrediction>(&args.predictions)?
                .into_iter()
                .flat_map(|p| {
                    let id = p.id;
                    p.detections.into_iter().map(move |d| Detection {
                        image_id: id.clone(),
                        corners: d.coords.to_region().corners(),
                        category: d.category,
                        confidence: d.confidence,
                    })
                })
                .collect();
            mean_ap(&detections, &gts, args.iou_threshold)?
        }
        Task::Grounding => {
            let mut gts = BTreeMap::new();
            for (id, a) in annotations(need_gt()?)? {
                match a {
                    AnnotationSet::ReferringRecords { records } => {
                        for (i, r) in records.iter().enumerate() {
                            gts.insert(record_id(&id, i, r), r.region.clone());
                        }
                    }
                    _ => return Err(config(format!("image `{id}` has no referring records"))),
                }
            }
            let preds = read_jsonl::<BoxPrediction>(&args.predictions)?
                .into_iter()
                .map(|p| (p.id, p.coords.to_region()))
                .collect();
            grounding_accuracy(&preds, &gts)?
        }
        Task::Captioning | Task::Vqa => {
            let preds = read_jsonl::<ScalarPrediction>(&args.predictions)?;
            if let Some(m) = &gt {
                let ids: std::collections::BTreeSet<&str> = m.images.iter().map(|e| e.id.as_str()).collect();
                if let Some(p) = preds.iter().find(|p| !ids.contains(p.id.as_str())) {
                    return Err(Error::IdMismatch(format!("prediction `{}` has no image", p.id)).into());
                }
            }
            mean_score(&preds.iter().map(|p| p.score).collect::<Vec<_>>())?
        }
    };
    Ok(value)
}

fn cmd_score(args: ScoreArgs) -> std::result::Result<i32, Exit> {
    let task: Task = args.task.parse()?;
    let condition = Condition::try_from(args.corruption.clone())?;
    if let (Condition::Corrupted(k), Some(s)) = (condition, args.severity) {
        crate::corruption::Severity(s).validate(k)?;
    }
    let value = score_value(&args, task)?;
    let cell = ScoreCell {
        model: args.model.clone(),
        condition,
        severity: args.severity,
        metric: task.metric_name().into(),
        value,
        aggregation: None,
    };
    if let Some(out) = &args.out {
        write_out(
            Some(out),
            &(serde_json::to_string_pretty(&cell).map_err(Error::from)? + "\n"),
        )?;
    }
    println!("{value:.2}");
    Ok(0)
}

fn collect_cells(dir: &Path, out: &mut Vec<PathBuf>) -> Result<()> {
    let mut entries: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .map(|d| d.map(|d| d.path()).map_err(|e| Error::io(dir, e)))
        .collect::<Result<_>>()?;
    entries.sort();
    for p in entries {
        if p.is_dir() {
            collect_cells(&p, out)?;
        } else if p.extension().is_some_and(|e| e == "json") {
            out.push(p);
        }
    }
    Ok(())
}

fn cmd_report(args: ReportArgs) -> std::result::Result<i32, Exit> {
    let format: ReportFormat = args.format.parse()?;
    let policy: AggregationPolicy = args.aggregation.parse()?;
    let mut files = Vec::new();
    collect_cells(&args.cells, &mut files)?;
    let cells = files
        .iter()
        .map(|p| {
            let text = fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
            // a file may hold one cell or a list of cells
            serde_json::from_str::<Vec<ScoreCell>>(&text)
                .or_else(|_| serde_json::from_str::<ScoreCell>(&text).map(|c| vec![c]))
                .map_err(|e| Error::Manifest(format!("{}: not a score cell: {e}", p.display())))
        })
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .flatten()
        .collect::<Vec<_>>();
    if cells.is_empty() {
        return Err(config(format!("no score cells found in {}", args.cells.display())));
    }
    let weights = (!args.weights.is_empty()).then_some(args.weights.as_slice());
    let reports = build_reports(&cells, policy, weights)?;
    write_out(args.out.as_deref(), &render_report(&reports, format)?)?;
    if let Some(curves) = &args.curves {
        write_out(Some(curves), &severity_curves(&cells)?)?;
    }
    Ok(0)
}

fn cmd_fidelity(args: FidelityArgs) -> std::result::Result<i32, Exit> {
    let clean = EmbeddingSet::load(&args.clean)?;
    let mut corrupted = Vec::new();
    for (i, spec) in args.corrupted.iter().enumerate() {
        let (sev, path) = match spec.split_once('=') {
            Some((s, p)) => (
                s.parse::<u32>()
                    .map_err(|_| config(format!("bad severity in `{spec}`")))?,
                p,
            ),
            None => (i as u32 + 1, spec.as_str()),
        };
        corrupted.push((sev, EmbeddingSet::load(Path::new(path))?));
    }
    if corrupted.is_empty() {
        return Err(config("no corrupted embedding files given"));
    }
    let sweep = severity_sweep(&clean, &corrupted)?;
    let mut csv = String::from("severity,distance\n");
    for (s, d) in &sweep {
        csv.push_str(&format!("{s},{d}\n"));
    }
    print!("{csv}");
    if let Some(out) = &args.out {
        write_out(Some(out), &csv)?;
    }
    Ok(0)
}

fn cmd_manifest(args: ManifestArgs) -> std::result::Result<i32, Exit> {
    let mut m = load_dataset(&args.dataset)?;
    apply_grid(&mut m, &args.types, args.severities.as_deref(), args.seed)?;
    write_out(args.out.as_deref(), &m.to_json()?)?;
    Ok(0)
}

/// Parses arguments, runs the command and returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .target(env_logger::Target::Stderr)
        .try_init();
    let result = match cli.command {
        Command::Corrupt(a) => cmd_corrupt(a),
        Command::Score(a) => cmd_score(a),
        Command::Report(a) => cmd_report(a),
        Command::Fidelity(a) => cmd_fidelity(a),
        Command::Manifest(a) => cmd_manifest(a),
    };
    let _ = std::io::stdout().flush();
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {}", e.message);
            e.code
        }
    }
}

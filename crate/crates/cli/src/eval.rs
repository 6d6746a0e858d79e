use std::path::{Path, PathBuf};

use clap::Args;
use rayon::prelude::*;
use serde::Serialize;

use orbit_sot_core::evaluation::{
    evaluate, load_annotations, precision_curve, render_table, report_records, success_curve, AnnotationRecord,
    Comparison, EvalResult, Thresholds,
};
use orbit_sot_core::io::{GT_FILE, TARGET_ID};

use crate::error::{write_file, CliError};

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Predicted tracklet CSV, or a directory of <sequence>.csv files.
    #[arg(long)]
    pred: PathBuf,
    /// Ground-truth CSV, or a directory holding <sequence>/gt.csv or <sequence>.csv.
    #[arg(long)]
    gt: PathBuf,
    /// Center-error threshold A in pixels.
    #[arg(long, default_value_t = 5.0)]
    dpr_threshold: f64,
    /// IoU threshold B.
    #[arg(long, default_value_t = 0.5)]
    osr_threshold: f64,
    /// Count frames exactly at a threshold as hits (<= A, >= B).
    #[arg(long)]
    non_strict: bool,
    /// Tracklet id of the target in ground-truth files.
    #[arg(long, default_value_t = TARGET_ID)]
    id: u32,
    /// Write per-sequence records {sequence, dpr, osr, frames} as JSON.
    #[arg(long)]
    json: Option<PathBuf>,
    /// Write precision (0..=50 px) and success (0..=1 in 0.05 steps) curves as JSON.
    #[arg(long)]
    curves: Option<PathBuf>,
    /// Parallel sequences (0 = one per core).
    #[arg(long, default_value_t = 0)]
    jobs: usize,
}

struct Pair {
    sequence: String,
    pred: PathBuf,
    gt: PathBuf,
}

fn pairs(args: &EvalArgs) -> Result<Vec<Pair>, CliError> {
    if !args.pred.is_dir() {
        let sequence = args.pred.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
        let gt = if args.gt.is_dir() { gt_for(&args.gt, &sequence)? } else { args.gt.clone() };
        return Ok(vec![Pair { sequence, pred: args.pred.clone(), gt }]);
    }
    let entries = std::fs::read_dir(&args.pred).map_err(|e| CliError::input(format!("{}: {e}", args.pred.display())))?;
    let mut preds: Vec<PathBuf> = entries
        .filter_map(Result::ok)
        .map(|e| e.path())
        .filter(|p| p.extension().is_some_and(|e| e == "csv") && !p.to_string_lossy().ends_with(".points.csv"))
        .collect();
    preds.sort();
    preds
        .into_iter()
        .map(|pred| {
            let sequence = pred.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
            let gt = if args.gt.is_dir() {
                gt_for(&args.gt, &sequence)?
            } else {
                args.gt.clone()
            };
            Ok(Pair { sequence, pred, gt })
        })
        .collect()
}

fn gt_for(root: &Path, sequence: &str) -> Result<PathBuf, CliError> {
    [root.join(sequence).join(GT_FILE), root.join(format!("{sequence}.csv"))]
        .into_iter()
        .find(|p| p.is_file())
        .ok_or_else(|| CliError::input(format!("{sequence}: no ground truth under {}", root.display())))
}

/// The target tracklet of a prediction file: id 1, or the only tracklet present.
fn pick(path: &Path, id: u32, strict_id: bool) -> Result<Vec<AnnotationRecord>, CliError> {
    let mut all = load_annotations(path).map_err(CliError::input)?;
    if let Some(r) = all.remove(&id) {
        return Ok(r);
    }
    if !strict_id && all.len() == 1 {
        return Ok(all.into_values().next().expect("one tracklet"));
    }
    Err(CliError::input(format!("{}: no tracklet with id {id}", path.display())))
}

fn score(pair: &Pair, args: &EvalArgs, thresholds: &Thresholds) -> Result<EvalResult, CliError> {
    let pred = pick(&pair.pred, TARGET_ID, false)?;
    let gt = pick(&pair.gt, args.id, true)?;
    evaluate(&pair.sequence, &pred, &gt, thresholds).map_err(CliError::input)
}

#[derive(Serialize)]
struct Curves<'a> {
    sequence: &'a str,
    precision: Vec<(f64, f64)>,
    success: Vec<(f64, f64)>,
}

pub fn run(args: EvalArgs) -> Result<(), CliError> {
    let thresholds = Thresholds {
        dpr: args.dpr_threshold,
        osr: args.osr_threshold,
        comparison: if args.non_strict { Comparison::NonStrict } else { Comparison::Strict },
    };
    let pairs = pairs(&args)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(args.jobs)
        .build()
        .map_err(|e| CliError::usage(format!("--jobs: {e}")))?;
    let results = pool.install(|| {
        pairs
            .par_iter()
            .map(|p| score(p, &args, &thresholds))
            .collect::<Result<Vec<_>, _>>()
    })?;

    print!("{}", render_table(&results));
    if let Some(path) = &args.json {
        let json = serde_json::to_string_pretty(&report_records(&results)).expect("records serialize");
        write_file(path, json + "\n")?;
    }
    if let Some(path) = &args.curves {
        let curves: Vec<Curves> = results
            .iter()
            .map(|r| Curves {
                sequence: &r.sequence,
                precision: precision_curve(&r.center_errors, 50, thresholds.comparison),
                success: success_curve(&r.ious, 20, thresholds.comparison),
            })
            .collect();
        write_file(path, serde_json::to_string_pretty(&curves).expect("curves serialize") + "\n")?;
    }
    Ok(())
}

//! Annotation files, DPR/OSR metrics and reports.
//!
//! File format: one CSV line per frame per tracklet, `frame,id,x,y,w,h[,status]`, 1-based
//! frames, no header, LF line endings. `status` is one of `tracked`, `coasted`, `lost`,
//! `gt` and defaults to `gt` when absent.
//!
//! Thresholds are strict by default: a frame counts for DPR when its center error is
//! `< A` and for OSR when its IoU is `> B`. [`Comparison::NonStrict`] uses `<=` / `>=`.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{center_distance, iou, BoundingBox};
use crate::pipeline::{FrameStatus, Tracklet};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{source_name}:{line}: {reason}")]
    Parse {
        source_name: String,
        line: usize,
        reason: String,
    },
    #[error("{source_name}: tracklet {id} frame {frame} appears on lines {first} and {second}")]
    Duplicate {
        source_name: String,
        id: u32,
        frame: usize,
        first: usize,
        second: usize,
    },
    #[error("{source_name}: tracklet {id} jumps from frame {after} to frame {next}")]
    Gap {
        source_name: String,
        id: u32,
        after: usize,
        next: usize,
    },
    #[error("{sequence}: prediction covers frames {pred} but ground truth covers frames {gt}")]
    FrameMismatch {
        sequence: String,
        pred: String,
        gt: String,
    },
    #[error("{0}: no frames to evaluate")]
    Empty(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RecordStatus {
    Tracked,
    Coasted,
    Lost,
    Gt,
}

impl RecordStatus {
    pub fn as_str(&self) -> &'static str {
        match self {
            RecordStatus::Tracked => "tracked",
            RecordStatus::Coasted => "coasted",
            RecordStatus::Lost => "lost",
            RecordStatus::Gt => "gt",
        }
    }
}

impl FromStr for RecordStatus {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "tracked" => Ok(RecordStatus::Tracked),
            "coasted" => Ok(RecordStatus::Coasted),
            "lost" => Ok(RecordStatus::Lost),
            "gt" => Ok(RecordStatus::Gt),
            other => Err(format!("unknown status {other:?}")),
        }
    }
}

impl From<FrameStatus> for RecordStatus {
    fn from(s: FrameStatus) -> Self {
        match s {
            FrameStatus::Tracked => RecordStatus::Tracked,
            FrameStatus::Coasted => RecordStatus::Coasted,
            FrameStatus::Lost => RecordStatus::Lost,
        }
    }
}

/// One line of an annotation or tracklet file. `frame` is zero-based.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AnnotationRecord {
    pub frame: usize,
    pub id: u32,
    pub bbox: BoundingBox,
    pub status: RecordStatus,
}

impl AnnotationRecord {
    /// The CSV line, without the trailing newline.
    pub fn to_csv_line(&self) -> String {
        let [x, y, w, h] = self.bbox.as_array();
        format!("{},{},{x},{y},{w},{h},{}", self.frame + 1, self.id, self.status.as_str())
    }
}

/// Records grouped by tracklet id, each sorted by frame.
pub type Annotations = BTreeMap<u32, Vec<AnnotationRecord>>;

fn parse_line(line: &str) -> Result<AnnotationRecord, String> {
    let fields: Vec<&str> = line.split(',').map(str::trim).collect();
    if fields.len() != 6 && fields.len() != 7 {
        return Err(format!("expected 6 or 7 comma-separated fields, found {}", fields.len()));
    }
    let frame: usize = fields[0].parse().map_err(|_| format!("bad frame number {:?}", fields[0]))?;
    if frame == 0 {
        return Err("frame numbers start at 1".into());
    }
    let id: u32 = fields[1].parse().map_err(|_| format!("bad tracklet id {:?}", fields[1]))?;
    let mut v = [0.0; 4];
    for (slot, (name, text)) in v.iter_mut().zip(["x", "y", "w", "h"].iter().zip(&fields[2..6])) {
        *slot = text.parse::<f64>().map_err(|_| format!("bad {name} value {text:?}"))?;
    }
    let bbox = BoundingBox::new(v[0], v[1], v[2], v[3]).map_err(|e| e.to_string())?;
    let status = match fields.get(6) {
        Some(s) => s.parse()?,
        None => RecordStatus::Gt,
    };
    Ok(AnnotationRecord {
        frame: frame - 1,
        id,
        bbox,
        status,
    })
}

/// Parses annotation text. `source_name` appears in error messages.
pub fn parse_annotations(text: &str, source_name: &str) -> Result<Annotations, EvalError> {
    let mut by_id: BTreeMap<u32, Vec<(AnnotationRecord, usize)>> = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        let rec = parse_line(line).map_err(|reason| EvalError::Parse {
            source_name: source_name.to_owned(),
            line: i + 1,
            reason,
        })?;
        by_id.entry(rec.id).or_default().push((rec, i + 1));
    }
    let mut out = Annotations::new();
    for (id, mut recs) in by_id {
        recs.sort_by_key(|(r, line)| (r.frame, *line));
        for pair in recs.windows(2) {
            let ((a, la), (b, lb)) = (&pair[0], &pair[1]);
            if a.frame == b.frame {
                return Err(EvalError::Duplicate {
                    source_name: source_name.to_owned(),
                    id,
                    frame: a.frame + 1,
                    first: *la,
                    second: *lb,
                });
            }
            if b.frame != a.frame + 1 {
                return Err(EvalError::Gap {
                    source_name: source_name.to_owned(),
                    id,
                    after: a.frame + 1,
                    next: b.frame + 1,
                });
            }
        }
        out.insert(id, recs.into_iter().map(|(r, _)| r).collect());
    }
    Ok(out)
}

pub fn load_annotations(path: &Path) -> Result<Annotations, EvalError> {
    let text = std::fs::read_to_string(path).map_err(|source| EvalError::Io {
        path: path.to_owned(),
        source,
    })?;
    parse_annotations(&text, &path.display().to_string())
}

/// Serializes records, one LF-terminated line each.
pub fn records_to_csv(records: &[AnnotationRecord]) -> String {
    let mut s = String::new();
    for r in records {
        s.push_str(&r.to_csv_line());
        s.push('\n');
    }
    s
}

pub fn tracklet_records(tracklet: &Tracklet, id: u32) -> Vec<AnnotationRecord> {
    tracklet
        .boxes
        .iter()
        .zip(&tracklet.statuses)
        .enumerate()
        .map(|(frame, (b, s))| AnnotationRecord {
            frame,
            id,
            bbox: *b,
            status: (*s).into(),
        })
        .collect()
}

/// Ground-truth records for a box sequence starting at frame 0.
pub fn gt_records(boxes: &[BoundingBox], id: u32) -> Vec<AnnotationRecord> {
    boxes
        .iter()
        .enumerate()
        .map(|(frame, b)| AnnotationRecord {
            frame,
            id,
            bbox: *b,
            status: RecordStatus::Gt,
        })
        .collect()
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Comparison {
    /// `error < A`, `iou > B`.
    #[default]
    Strict,
    /// `error <= A`, `iou >= B`.
    NonStrict,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Thresholds {
    pub dpr: f64,
    pub osr: f64,
    pub comparison: Comparison,
}

impl Default for Thresholds {
    fn default() -> Self {
        Self {
            dpr: 5.0,
            osr: 0.5,
            comparison: Comparison::Strict,
        }
    }
}

fn frame_span(records: &[AnnotationRecord]) -> String {
    match (records.first(), records.last()) {
        (Some(a), Some(b)) => format!("{}..={} ({} records)", a.frame + 1, b.frame + 1, records.len()),
        _ => "none".into(),
    }
}

/// Pairs up prediction and ground-truth boxes frame by frame.
fn paired<'a>(
    sequence: &str,
    pred: &'a [AnnotationRecord],
    gt: &'a [AnnotationRecord],
) -> Result<Vec<(&'a BoundingBox, &'a BoundingBox)>, EvalError> {
    if gt.is_empty() && pred.is_empty() {
        return Err(EvalError::Empty(sequence.to_owned()));
    }
    let same = pred.len() == gt.len() && pred.iter().zip(gt).all(|(p, g)| p.frame == g.frame);
    if !same {
        return Err(EvalError::FrameMismatch {
            sequence: sequence.to_owned(),
            pred: frame_span(pred),
            gt: frame_span(gt),
        });
    }
    Ok(pred.iter().zip(gt).map(|(p, g)| (&p.bbox, &g.bbox)).collect())
}

pub fn center_errors(sequence: &str, pred: &[AnnotationRecord], gt: &[AnnotationRecord]) -> Result<Vec<f64>, EvalError> {
    Ok(paired(sequence, pred, gt)?
        .into_iter()
        .map(|(p, g)| center_distance(p, g))
        .collect())
}

pub fn overlaps(sequence: &str, pred: &[AnnotationRecord], gt: &[AnnotationRecord]) -> Result<Vec<f64>, EvalError> {
    Ok(paired(sequence, pred, gt)?.into_iter().map(|(p, g)| iou(p, g)).collect())
}

fn percentage(hits: usize, total: usize) -> f64 {
    100.0 * hits as f64 / total as f64
}

/// Share of center errors under `a`, in percent.
pub fn dpr_from_errors(errors: &[f64], a: f64, cmp: Comparison) -> f64 {
    let hits = errors
        .iter()
        .filter(|&&e| match cmp {
            Comparison::Strict => e < a,
            Comparison::NonStrict => e <= a,
        })
        .count();
    percentage(hits, errors.len())
}

/// Share of overlaps above `b`, in percent.
pub fn osr_from_overlaps(ious: &[f64], b: f64, cmp: Comparison) -> f64 {
    let hits = ious
        .iter()
        .filter(|&&v| match cmp {
            Comparison::Strict => v > b,
            Comparison::NonStrict => v >= b,
        })
        .count();
    percentage(hits, ious.len())
}

pub fn dpr(sequence: &str, pred: &[AnnotationRecord], gt: &[AnnotationRecord], a: f64, cmp: Comparison) -> Result<f64, EvalError> {
    Ok(dpr_from_errors(&center_errors(sequence, pred, gt)?, a, cmp))
}

pub fn osr(sequence: &str, pred: &[AnnotationRecord], gt: &[AnnotationRecord], b: f64, cmp: Comparison) -> Result<f64, EvalError> {
    Ok(osr_from_overlaps(&overlaps(sequence, pred, gt)?, b, cmp))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalResult {
    pub sequence: String,
    pub dpr: f64,
    pub osr: f64,
    pub frames: usize,
    pub center_errors: Vec<f64>,
    pub ious: Vec<f64>,
    pub statuses: BTreeMap<RecordStatus, usize>,
}

pub fn evaluate(
    sequence: &str,
    pred: &[AnnotationRecord],
    gt: &[AnnotationRecord],
    thresholds: &Thresholds,
) -> Result<EvalResult, EvalError> {
    let errors = center_errors(sequence, pred, gt)?;
    let ious = overlaps(sequence, pred, gt)?;
    let mut statuses = BTreeMap::new();
    for r in pred {
        *statuses.entry(r.status).or_insert(0) += 1;
    }
    Ok(EvalResult {
        sequence: sequence.to_owned(),
        dpr: dpr_from_errors(&errors, thresholds.dpr, thresholds.comparison),
        osr: osr_from_overlaps(&ious, thresholds.osr, thresholds.comparison),
        frames: errors.len(),
        center_errors: errors,
        ious,
        statuses,
    })
}

/// Unweighted mean DPR and OSR across sequences.
pub fn mean_scores(results: &[EvalResult]) -> Option<(f64, f64)> {
    if results.is_empty() {
        return None;
    }
    let n = results.len() as f64;
    Some((
        results.iter().map(|r| r.dpr).sum::<f64>() / n,
        results.iter().map(|r| r.osr).sum::<f64>() / n,
    ))
}

/// Aligned text table: one row per sequence plus a mean row.
pub fn render_table(results: &[EvalResult]) -> String {
    let width = results.iter().map(|r| r.sequence.len()).max().unwrap_or(0).max("sequence".len());
    let mut s = String::new();
    writeln!(s, "{:<width$}  {:>6}  DPR (%) / OSR (%)", "sequence", "frames").unwrap();
    for r in results {
        writeln!(s, "{:<width$}  {:>6}  {:.1} / {:.1}", r.sequence, r.frames, r.dpr, r.osr).unwrap();
    }
    if let Some((d, o)) = mean_scores(results) {
        let frames: usize = results.iter().map(|r| r.frames).sum();
        writeln!(s, "{:<width$}  {:>6}  {d:.1} / {o:.1}", "mean", frames).unwrap();
    }
    s
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRecord {
    pub sequence: String,
    pub dpr: f64,
    pub osr: f64,
    pub frames: usize,
}

pub fn report_records(results: &[EvalResult]) -> Vec<ReportRecord> {
    results
        .iter()
        .map(|r| ReportRecord {
            sequence: r.sequence.clone(),
            dpr: r.dpr,
            osr: r.osr,
            frames: r.frames,
        })
        .collect()
}

/// DPR at every integer threshold `0..=max_px`.
pub fn precision_curve(errors: &[f64], max_px: usize, cmp: Comparison) -> Vec<(f64, f64)> {
    (0..=max_px)
        .map(|a| (a as f64, dpr_from_errors(errors, a as f64, cmp)))
        .collect()
}

/// OSR at `steps + 1` evenly spaced thresholds over `[0, 1]`.
pub fn success_curve(ious: &[f64], steps: usize, cmp: Comparison) -> Vec<(f64, f64)> {
    (0..=steps)
        .map(|i| {
            let b = i as f64 / steps as f64;
            (b, osr_from_overlaps(ious, b, cmp))
        })
        .collect()
}

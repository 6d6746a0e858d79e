use std::collections::BTreeMap;
use std::path::PathBuf;

use clap::Args;

use orbit_sot_core::evaluation::{load_annotations, AnnotationRecord};
use orbit_sot_core::io::{frame_file_name, load_frames_dir, save_frame_png, TARGET_ID};
use orbit_sot_core::Point;

use crate::draw::{gradient, Canvas, GT, POINTS, PRED};
use crate::error::CliError;

#[derive(Debug, Args)]
pub struct VisualizeArgs {
    /// Directory of numbered PNG frames.
    #[arg(long)]
    frames: PathBuf,
    /// Predicted tracklet CSV.
    #[arg(long)]
    tracklet: PathBuf,
    /// Ground-truth CSV; drawn as dashed boxes.
    #[arg(long)]
    gt: Option<PathBuf>,
    /// Tracked points as frame,x,y lines (from `track --points-out`).
    #[arg(long)]
    points: Option<PathBuf>,
    /// Tracklet id of the target in the ground-truth file.
    #[arg(long, default_value_t = TARGET_ID)]
    id: u32,
    /// Output directory for overlay PNGs.
    #[arg(short = 'o', long)]
    output: PathBuf,
}

fn target(path: &PathBuf, id: u32, fallback_to_single: bool) -> Result<Vec<AnnotationRecord>, CliError> {
    let mut all = load_annotations(path).map_err(CliError::input)?;
    match all.remove(&id) {
        Some(r) => Ok(r),
        None if fallback_to_single && all.len() == 1 => Ok(all.into_values().next().expect("one tracklet")),
        None => Err(CliError::input(format!("{}: no tracklet with id {id}", path.display()))),
    }
}

fn load_points(path: &PathBuf) -> Result<BTreeMap<usize, Vec<Point>>, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::input(format!("{}: {e}", path.display())))?;
    let mut out: BTreeMap<usize, Vec<Point>> = BTreeMap::new();
    for (i, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let bad = || CliError::input(format!("{}:{}: expected frame,x,y", path.display(), i + 1));
        let mut it = line.split(',').map(str::trim);
        let frame: usize = it.next().and_then(|v| v.parse().ok()).filter(|&f| f >= 1).ok_or_else(bad)?;
        let x: f64 = it.next().and_then(|v| v.parse().ok()).ok_or_else(bad)?;
        let y: f64 = it.next().and_then(|v| v.parse().ok()).ok_or_else(bad)?;
        if it.next().is_some() {
            return Err(bad());
        }
        out.entry(frame - 1).or_default().push(Point::new(x, y));
    }
    Ok(out)
}

/// Checks that `records` has exactly one entry per video frame.
fn covers(records: &[AnnotationRecord], frames: usize, what: &str) -> Result<(), CliError> {
    let first = records.first().map(|r| r.frame);
    if first == Some(0) && records.len() == frames {
        return Ok(());
    }
    let span = match (records.first(), records.last()) {
        (Some(a), Some(b)) => format!("frames {}..={}", a.frame + 1, b.frame + 1),
        _ => "no frames".into(),
    };
    Err(CliError::input(format!("{what} covers {span} but the video has {frames} frames")))
}

pub fn run(args: VisualizeArgs) -> Result<(), CliError> {
    let video = load_frames_dir(&args.frames).map_err(CliError::input)?;
    let pred = target(&args.tracklet, TARGET_ID, true)?;
    covers(&pred, video.len(), &args.tracklet.display().to_string())?;
    let gt = match &args.gt {
        Some(p) => {
            let gt = target(p, args.id, false)?;
            covers(&gt, video.len(), &p.display().to_string())?;
            Some(gt)
        }
        None => None,
    };
    let points = args.points.as_ref().map(load_points).transpose()?.unwrap_or_default();

    std::fs::create_dir_all(&args.output).map_err(|e| CliError::input(format!("{}: {e}", args.output.display())))?;
    let centers: Vec<Point> = pred.iter().map(|r| r.bbox.center()).collect();
    let last = (video.len() - 1).max(1) as f64;
    for (t, frame) in video.frames.iter().enumerate() {
        let mut canvas = Canvas::from_frame(frame);
        if let Some(gt) = &gt {
            canvas.rect(&gt[t].bbox, GT, Some((3, 2)));
        }
        canvas.rect(&pred[t].bbox, PRED, None);
        for p in points.get(&t).into_iter().flatten() {
            canvas.put(p.x.floor() as i64, p.y.floor() as i64, POINTS);
        }
        for i in 1..=t {
            canvas.line(centers[i - 1], centers[i], gradient(i as f64 / last));
        }
        for (i, c) in centers.iter().enumerate().take(t + 1) {
            canvas.dot(*c, 0, gradient(i as f64 / last));
        }
        let path = args.output.join(frame_file_name(t));
        save_frame_png(&canvas.into_frame(t), &path).map_err(CliError::input)?;
    }
    println!("{} overlays -> {}", video.len(), args.output.display());
    Ok(())
}

//! Keyframe tracking state machine.
//!
//! Frame 0 is segmented from the initial box and `N` points are sampled on the mask.
//! Points are then propagated by the point tracker over chunks of `K + 1` frames
//! (keyframe to keyframe inclusive). At each keyframe every arrived point prompts the
//! segmenter on its own; the per-point masks are summed into a heatmap, the points whose
//! masks cover the heatmap peak are kept, the segmenter is prompted once more with all of
//! them, and a fresh set of `N` points is sampled on the resulting mask.

use rand::{Rng, RngCore};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backends::{BackendError, PointTracker, Prompt, SegmentRequest, Segmenter, TrackRequest};
use crate::config::{ConfigError, InlierRule, IntervalBox, PipelineConfig};
use crate::crop::{crop_resample, crop_transform_for, CropTransform};
use crate::geometry::{bbox_from_points, BoundingBox, Point};
use crate::raster::{aggregate_heatmap, bbox_from_mask, consensus_region, Consensus, Frame, Mask, RasterError, VideoSequence};
use crate::sampling::{sample_points, stream_rng, PointSet, Stream};

/// Minimum box side when boxing a bare point cloud.
pub const POINT_BOX_MIN_DIM: f64 = 2.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FrameStatus {
    Tracked,
    Coasted,
    Lost,
}

impl FrameStatus {
    pub fn as_str(&self) -> &'static str {
        match self {
            FrameStatus::Tracked => "tracked",
            FrameStatus::Coasted => "coasted",
            FrameStatus::Lost => "lost",
        }
    }
}

/// Per-frame boxes for one target.
#[derive(Debug, Clone, PartialEq)]
pub struct Tracklet {
    pub sequence_id: String,
    pub boxes: Vec<BoundingBox>,
    pub statuses: Vec<FrameStatus>,
}

impl Tracklet {
    pub fn len(&self) -> usize {
        self.boxes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.boxes.is_empty()
    }

    fn push(&mut self, b: BoundingBox, s: FrameStatus) {
        self.boxes.push(b);
        self.statuses.push(s);
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitPath {
    /// Points sampled on the box-prompted mask.
    Segmented,
    /// Segmentation came back empty; points drawn uniformly inside the box.
    UniformInBox,
}

/// Which branch a keyframe refresh left through.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RefreshPath {
    Consensus,
    /// Consensus failed; the box around the arrived points produced a mask.
    BoxPrompt,
    /// Every segmentation attempt was empty; arrived points carried over.
    KeptPoints,
}

impl RefreshPath {
    pub fn is_fallback(&self) -> bool {
        *self != RefreshPath::Consensus
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RefreshOutcome {
    pub frame: usize,
    pub path: RefreshPath,
    /// Points prompted individually.
    pub prompted: usize,
    /// Points whose masks were non-empty.
    pub masked: usize,
    pub inliers: usize,
    pub crop_scale: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrackCall {
    pub start: usize,
    pub len: usize,
}

/// What happened during a run, beyond the boxes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub init_path: InitPath,
    /// Crop scale used to segment frame 0 (1 when no crop).
    pub init_crop_scale: f64,
    /// Whether any segmentation went through crop-and-resample.
    pub crop_path: bool,
    pub track_calls: Vec<TrackCall>,
    pub refreshes: Vec<RefreshOutcome>,
}

impl Default for RunReport {
    fn default() -> Self {
        Self {
            init_path: InitPath::Segmented,
            init_crop_scale: 1.0,
            crop_path: false,
            track_calls: Vec::new(),
            refreshes: Vec::new(),
        }
    }
}

impl RunReport {
    pub fn consensus_refreshes(&self) -> usize {
        self.refreshes.iter().filter(|r| !r.path.is_fallback()).count()
    }
}

/// Random streams owned by one tracked sequence.
#[derive(Debug, Clone)]
pub struct RngStreams {
    pub init: ChaCha8Rng,
    pub refresh: ChaCha8Rng,
    pub fallback: ChaCha8Rng,
}

impl RngStreams {
    pub fn new(seed: u64) -> Self {
        Self {
            init: stream_rng(seed, Stream::Init),
            refresh: stream_rng(seed, Stream::Refresh),
            fallback: stream_rng(seed, Stream::Fallback),
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrackerState {
    pub keyframe: usize,
    /// Active points on the current keyframe, in frame coordinates.
    pub points: PointSet,
    /// Mask the active points were sampled from (frame raster), if any.
    pub mask: Option<Mask>,
    /// Box emitted at the current keyframe.
    pub keyframe_box: BoundingBox,
    /// Most recently emitted box.
    pub last_box: BoundingBox,
    pub crop: CropTransform,
    pub degraded_start: bool,
    pub consecutive_fallbacks: usize,
    pub lost: bool,
    pub rng: RngStreams,
}

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("video has no frames")]
    EmptyVideo,
    #[error("initial box {0:?} does not overlap frame 0")]
    InitBoxOutside([f64; 4]),
    #[error("backend failed at frame {frame}: {source}")]
    Backend {
        frame: usize,
        #[source]
        source: BackendError,
    },
}

/// Partial result of a run that stopped early.
#[derive(Debug)]
pub struct RunFailure {
    pub error: RunError,
    pub partial: Tracklet,
    pub report: RunReport,
}

impl std::fmt::Display for RunFailure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{} ({} frames tracked before failure)", self.error, self.partial.len())
    }
}

impl std::error::Error for RunFailure {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        Some(&self.error)
    }
}

#[derive(Debug, Clone)]
pub struct TrackOutput {
    pub tracklet: Tracklet,
    pub report: RunReport,
    /// Visible points per frame.
    pub points: Vec<PointSet>,
}

/// A segmenter and a point tracker used together.
pub struct Backends<S, T> {
    pub segmenter: S,
    pub tracker: T,
}

impl<S: Segmenter, T> Segmenter for Backends<S, T> {
    fn segment(&mut self, req: &SegmentRequest<'_>) -> Result<Mask, BackendError> {
        self.segmenter.segment(req)
    }
}

impl<S, T: PointTracker> PointTracker for Backends<S, T> {
    fn track(&mut self, req: &crate::backends::TrackRequest<'_>) -> Result<crate::backends::Trajectory, BackendError> {
        self.tracker.track(req)
    }
}

fn backend_err(frame: &Frame) -> impl FnOnce(BackendError) -> RunError + '_ {
    move |source| RunError::Backend {
        frame: frame.index(),
        source,
    }
}

/// Maps crop-space points out and clamps them into the frame.
fn to_frame(points: Vec<Point>, t: &CropTransform, frame: &Frame) -> Vec<Point> {
    points
        .into_iter()
        .map(|q| t.map_out(q).clamped(frame.width(), frame.height()))
        .collect()
}

/// Segments frame 0 from `init_box` and samples the first point set.
pub fn initialize<S: Segmenter + ?Sized>(
    frame0: &Frame,
    init_box: &BoundingBox,
    cfg: &PipelineConfig,
    segmenter: &mut S,
    mut rng: RngStreams,
) -> Result<(TrackerState, InitPath), RunError> {
    cfg.validate()?;
    let (sub, t) = crop_resample(frame0, init_box, cfg).map_err(|_| RunError::InitBoxOutside(init_box.as_array()))?;
    let crop_mask = segmenter
        .segment(&SegmentRequest {
            frame: &sub,
            prompt: Prompt::Box(t.map_box_in(init_box)),
        })
        .map_err(backend_err(frame0))?;

    let source_mask = t.mask_to_source(&crop_mask, frame0.width(), frame0.height());
    let (points, mask, path) = if crop_mask.is_blank() || source_mask.is_blank() {
        log::warn!("frame {}: initial segmentation is empty, sampling inside the box", frame0.index());
        let pts = (0..cfg.num_points)
            .map(|_| {
                Point::new(
                    init_box.x() + rng.fallback.random::<f64>() * init_box.w(),
                    init_box.y() + rng.fallback.random::<f64>() * init_box.h(),
                )
                .clamped(frame0.width(), frame0.height())
            })
            .collect();
        (pts, None, InitPath::UniformInBox)
    } else {
        let seed = rng.init.next_u64();
        let pts = sample_points(&crop_mask, cfg.num_points, seed).expect("mask checked non-empty");
        (to_frame(pts, &t, frame0), Some(source_mask), InitPath::Segmented)
    };

    let state = TrackerState {
        keyframe: frame0.index(),
        points: PointSet::new(frame0.index(), points),
        mask,
        keyframe_box: *init_box,
        last_box: *init_box,
        crop: t,
        degraded_start: path == InitPath::UniformInBox,
        consecutive_fallbacks: 0,
        lost: false,
        rng,
    };
    Ok((state, path))
}

/// Per-frame output of [`propagate_chunk`], for every frame after the chunk's first.
#[derive(Debug, Clone, Default)]
pub struct ChunkOutput {
    pub visible: Vec<PointSet>,
    pub boxes: Vec<BoundingBox>,
    pub statuses: Vec<FrameStatus>,
    /// Every tracked position on the last frame, visible or not.
    pub last_positions: Vec<Point>,
}

impl ChunkOutput {
    /// Visible points on the chunk's last frame.
    pub fn arrived(&self) -> Option<&PointSet> {
        self.visible.last()
    }
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        (values[n / 2 - 1] + values[n / 2]) / 2.0
    }
}

/// Tracks the active points through `frames` (the current keyframe first) with one
/// tracker call and emits a box per subsequent frame.
pub fn propagate_chunk<T: PointTracker + ?Sized>(
    frames: &[Frame],
    state: &mut TrackerState,
    cfg: &PipelineConfig,
    tracker: &mut T,
) -> Result<ChunkOutput, RunError> {
    let Some(first) = frames.first() else {
        return Ok(ChunkOutput::default());
    };
    if frames.len() == 1 {
        state.keyframe = first.index();
        return Ok(ChunkOutput {
            last_positions: state.points.points.clone(),
            ..Default::default()
        });
    }
    let traj = tracker
        .track(&TrackRequest {
            frames,
            query_points: &state.points,
        })
        .map_err(backend_err(first))?;

    let mut out = ChunkOutput::default();
    let mut prev = state.last_box;
    let live = if state.lost { FrameStatus::Lost } else { FrameStatus::Tracked };
    for (i, frame) in frames.iter().enumerate().skip(1) {
        let visible = traj.visible_points(i);
        let (b, status) = if visible.is_empty() {
            (prev, FrameStatus::Coasted)
        } else {
            let b = match cfg.interval_box {
                IntervalBox::PointExtent => {
                    bbox_from_points(&visible, POINT_BOX_MIN_DIM).expect("visible points are non-empty")
                }
                IntervalBox::KeyframeShift => {
                    let (mut dx, mut dy): (Vec<f64>, Vec<f64>) = traj.positions[i]
                        .iter()
                        .zip(&traj.positions[0])
                        .zip(&traj.visible[i])
                        .filter(|(_, &v)| v)
                        .map(|((p, q), _)| (p.x - q.x, p.y - q.y))
                        .unzip();
                    state.keyframe_box.translated(median(&mut dx), median(&mut dy))
                }
            };
            (b, live)
        };
        out.visible.push(PointSet::new(frame.index(), visible));
        out.boxes.push(b);
        out.statuses.push(status);
        prev = b;
    }
    out.last_positions = traj.positions.last().cloned().unwrap_or_default();
    state.last_box = prev;
    Ok(out)
}

/// Heatmap consensus over per-point masks and the indices of the inlier masks.
pub fn select_inliers(
    masks: &[Mask],
    width: usize,
    height: usize,
    rule: InlierRule,
) -> Result<(Consensus, Vec<usize>), RasterError> {
    let heat = aggregate_heatmap(width, height, masks)?;
    let consensus = consensus_region(&heat)?;
    let inliers = masks
        .iter()
        .enumerate()
        .filter(|(_, m)| match rule {
            InlierRule::PeakPixel => m.contains_pixel(consensus.peak),
            InlierRule::Region => m.intersects(&consensus.region),
        })
        .map(|(i, _)| i)
        .collect();
    Ok((consensus, inliers))
}

/// Result of one keyframe refresh.
#[derive(Debug, Clone)]
pub struct Refresh {
    pub outcome: RefreshOutcome,
    pub emitted: BoundingBox,
    pub status: FrameStatus,
}

/// Renews the active point set on a keyframe from the points that arrived there.
///
/// `arrived` are the visible arrived points; `all_positions` every tracked position on
/// this frame, used only when nothing else is left.
pub fn keyframe_refresh<S: Segmenter + ?Sized>(
    frame: &Frame,
    arrived: &PointSet,
    all_positions: &[Point],
    state: &mut TrackerState,
    cfg: &PipelineConfig,
    segmenter: &mut S,
) -> Result<Refresh, RunError> {
    let (fw, fh) = frame.dims();
    let (sub, t) = match crop_resample(frame, &state.last_box, cfg) {
        Ok(v) => v,
        Err(_) => crop_resample(frame, &frame.bounds(), cfg).expect("full frame overlaps itself"),
    };

    // (1) one single-point prompt per arrived point
    let mut masked_points = Vec::new();
    let mut masks = Vec::new();
    for p in &arrived.points {
        let q = t.map_in(*p);
        if q.pixel(sub.width(), sub.height()).is_none() {
            continue;
        }
        let m = segmenter
            .segment(&SegmentRequest { frame: &sub, prompt: Prompt::Point(q) })
            .map_err(backend_err(frame))?;
        if !m.is_blank() {
            masked_points.push(q);
            masks.push(m);
        }
    }

    // (2)-(5) heatmap consensus, inliers, one multi-point prompt
    let mut inlier_count = 0;
    let mut renewal: Option<(Mask, RefreshPath)> = None;
    if let Ok((_, inliers)) = select_inliers(&masks, sub.width(), sub.height(), cfg.inlier_rule) {
        inlier_count = inliers.len();
        if !inliers.is_empty() {
            let prompt = Prompt::Points(inliers.iter().map(|&i| masked_points[i]).collect());
            let m = segmenter
                .segment(&SegmentRequest { frame: &sub, prompt })
                .map_err(backend_err(frame))?;
            if !m.is_blank() {
                renewal = Some((m, RefreshPath::Consensus));
            }
        }
    }

    // fallback: one box prompt around the arrived points
    let point_box = bbox_from_points(&arrived.points, POINT_BOX_MIN_DIM).unwrap_or(state.last_box);
    if renewal.is_none() {
        log::debug!("frame {}: no consensus, re-prompting with the point box", frame.index());
        let m = segmenter
            .segment(&SegmentRequest { frame: &sub, prompt: Prompt::Box(t.map_box_in(&point_box)) })
            .map_err(backend_err(frame))?;
        if !m.is_blank() {
            renewal = Some((m, RefreshPath::BoxPrompt));
        }
    }

    let renewed = renewal.and_then(|(crop_mask, path)| {
        let source = t.mask_to_source(&crop_mask, fw, fh);
        let b = bbox_from_mask(&source).ok()?;
        Some((crop_mask, source, b, path))
    });

    let (path, emitted) = match renewed {
        Some((crop_mask, source, b, path)) => {
            // (6) fresh points on the renewed mask
            let rng = if path == RefreshPath::Consensus { &mut state.rng.refresh } else { &mut state.rng.fallback };
            let seed = rng.next_u64();
            let pts = sample_points(&crop_mask, cfg.num_points, seed).expect("mask checked non-empty");
            state.points = PointSet::new(frame.index(), to_frame(pts, &t, frame));
            state.mask = Some(source);
            (path, b)
        }
        None => {
            log::debug!("frame {}: all segmentations empty, keeping tracked points", frame.index());
            let kept = if arrived.is_empty() { all_positions.to_vec() } else { arrived.points.clone() };
            let kept = kept.into_iter().map(|p| p.clamped(fw, fh)).collect();
            state.points = PointSet::new(frame.index(), kept);
            state.mask = None;
            (RefreshPath::KeptPoints, point_box)
        }
    };

    let status = if path.is_fallback() {
        state.consecutive_fallbacks += 1;
        if state.consecutive_fallbacks >= 2 {
            state.lost = true;
            FrameStatus::Lost
        } else {
            FrameStatus::Coasted
        }
    } else {
        state.consecutive_fallbacks = 0;
        state.lost = false;
        FrameStatus::Tracked
    };

    state.keyframe = frame.index();
    state.keyframe_box = emitted;
    state.last_box = emitted;
    // crop decision for the renewed box, used from the next keyframe on
    state.crop = crop_transform_for(fw, fh, &emitted, cfg).unwrap_or(CropTransform::identity(fw, fh));

    Ok(Refresh {
        outcome: RefreshOutcome {
            frame: frame.index(),
            path,
            prompted: arrived.len(),
            masked: masks.len(),
            inliers: inlier_count,
            crop_scale: t.scale,
        },
        emitted,
        status,
    })
}

/// Tracks one target through `video` starting from `init_box` on frame 0.
pub fn track_sequence<B: Segmenter + PointTracker + ?Sized>(
    video: &VideoSequence,
    init_box: &BoundingBox,
    cfg: &PipelineConfig,
    backend: &mut B,
) -> Result<TrackOutput, RunFailure> {
    let mut tracklet = Tracklet {
        sequence_id: video.id.clone(),
        boxes: Vec::with_capacity(video.len()),
        statuses: Vec::with_capacity(video.len()),
    };
    let mut report = RunReport::default();
    let mut points = Vec::with_capacity(video.len());

    macro_rules! bail {
        ($e:expr) => {
            return Err(RunFailure {
                error: $e,
                partial: tracklet,
                report,
            })
        };
    }

    if let Err(e) = cfg.validate() {
        bail!(e.into());
    }
    let Some(frame0) = video.frames.first() else {
        bail!(RunError::EmptyVideo);
    };
    let (mut state, init_path) = match initialize(frame0, init_box, cfg, backend, RngStreams::new(cfg.rng_seed)) {
        Ok(v) => v,
        Err(e) => bail!(e),
    };
    report.init_path = init_path;
    report.init_crop_scale = state.crop.scale;
    report.crop_path = !state.crop.is_identity();
    let init_status = if state.degraded_start { FrameStatus::Coasted } else { FrameStatus::Tracked };
    tracklet.push(*init_box, init_status);
    points.push(state.points.clone());

    let k = cfg.keyframe_interval;
    let last = video.len() - 1;
    let mut keyframe = 0;
    while keyframe < last {
        let end = (keyframe + k).min(last);
        let chunk = &video.frames[keyframe..=end];
        report.track_calls.push(TrackCall {
            start: keyframe,
            len: chunk.len(),
        });
        let out = match propagate_chunk(chunk, &mut state, cfg, backend) {
            Ok(o) => o,
            Err(e) => bail!(e),
        };
        for ((b, s), p) in out.boxes.iter().zip(&out.statuses).zip(&out.visible) {
            tracklet.push(*b, *s);
            points.push(p.clone());
        }
        if end - keyframe < k {
            break;
        }
        let arrived = out.arrived().cloned().unwrap_or_default();
        match keyframe_refresh(&video.frames[end], &arrived, &out.last_positions, &mut state, cfg, backend) {
            Ok(r) => {
                report.crop_path |= r.outcome.crop_scale != 1.0;
                *tracklet.boxes.last_mut().expect("chunk pushed a box") = r.emitted;
                *tracklet.statuses.last_mut().expect("chunk pushed a status") = r.status;
                *points.last_mut().expect("chunk pushed points") = state.points.clone();
                report.refreshes.push(r.outcome);
            }
            Err(e) => bail!(e),
        }
        keyframe = end;
    }

    Ok(TrackOutput {
        tracklet,
        report,
        points,
    })
}

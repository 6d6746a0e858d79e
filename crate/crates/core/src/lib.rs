//! Single-object tracking for small objects in satellite video.
//!
//! A segmenter turns a box into a mask, points sampled on the mask are carried forward by
//! a point tracker, and every `K` frames the points are renewed from a consensus of
//! per-point masks. Backends are pluggable: [`backends::OracleBackend`] answers from
//! simulator ground truth, [`backends::ExternalClient`] talks to a model bridge process.

pub mod backends;
pub mod config;
pub mod crop;
pub mod evaluation;
pub mod geometry;
pub mod io;
pub mod manifest;
pub mod pipeline;
pub mod raster;
pub mod sampling;
pub mod simulator;

pub use backends::{
    open_session, BackendError, BackendSpec, Endpoint, OracleBackend, OracleNoise, PointTracker, Prompt,
    Segmenter, Session, Trajectory,
};
pub use config::{InlierRule, IntervalBox, PipelineConfig};
pub use crop::{crop_resample, CropTransform};
pub use evaluation::{AnnotationRecord, Comparison, EvalResult, Thresholds};
pub use geometry::{bbox_from_points, center_distance, iou, BoundingBox, Point};
pub use manifest::{BackendRecord, RunInputs, RunManifest, RunOutcome};
pub use pipeline::{track_sequence, FrameStatus, RunReport, TrackOutput, Tracklet};
pub use raster::{aggregate_heatmap, bbox_from_mask, consensus_region, Frame, Heatmap, Mask, VideoSequence};
pub use sampling::{sample_points, PointSet};
pub use simulator::{generate, standard_suite, Scene, SceneConfig};

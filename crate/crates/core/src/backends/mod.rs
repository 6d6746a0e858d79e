//! Segmenter and point-tracker backends.
//!
//! The pipeline talks to two opaque models through [`Segmenter`] and [`PointTracker`].
//! [`oracle`] answers from simulator ground truth; [`external`] drives a model bridge
//! process over the length-prefixed JSON protocol in [`protocol`].

use std::path::PathBuf;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{BoundingBox, Point};
use crate::raster::{Frame, Mask};
use crate::sampling::PointSet;
use crate::simulator::GroundTruth;

pub mod external;
pub mod fixture;
pub mod oracle;
pub mod protocol;

pub use external::{Endpoint, ExternalClient};
pub use oracle::{OracleBackend, OracleNoise};

#[derive(Debug, Error)]
pub enum BackendError {
    #[error("backend startup failed ({endpoint}): {detail}")]
    Startup { endpoint: String, detail: String },
    #[error("transport error: {0}")]
    Transport(#[from] std::io::Error),
    #[error("protocol error: {0}")]
    Protocol(String),
    #[error("protocol version mismatch: client speaks {client}, bridge speaks {bridge}")]
    VersionMismatch { client: u32, bridge: u32 },
    #[error("bridge error for request {id}: {message}")]
    Remote { id: u64, message: String },
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("session is closed")]
    Closed,
}

impl BackendError {
    pub fn is_startup(&self) -> bool {
        matches!(self, BackendError::Startup { .. })
    }
}

/// Exactly one kind of segmentation prompt, in the coordinates of the request frame.
#[derive(Debug, Clone, PartialEq)]
pub enum Prompt {
    Box(BoundingBox),
    Point(Point),
    Points(Vec<Point>),
}

#[derive(Debug, Clone)]
pub struct SegmentRequest<'a> {
    pub frame: &'a Frame,
    pub prompt: Prompt,
}

#[derive(Debug, Clone)]
pub struct TrackRequest<'a> {
    /// Consecutive frames; the query points live on the first.
    pub frames: &'a [Frame],
    pub query_points: &'a PointSet,
}

impl TrackRequest<'_> {
    pub fn validate(&self) -> Result<(), BackendError> {
        if self.frames.len() < 2 {
            return Err(BackendError::InvalidRequest(format!(
                "track needs at least 2 frames, got {}",
                self.frames.len()
            )));
        }
        let first = &self.frames[0];
        let bounds = first.bounds();
        for p in &self.query_points.points {
            if !(p.x >= 0.0 && p.y >= 0.0 && p.x <= bounds.w() && p.y <= bounds.h()) {
                return Err(BackendError::InvalidRequest(format!(
                    "query point ({}, {}) outside frame {}",
                    p.x,
                    p.y,
                    first.index()
                )));
            }
        }
        Ok(())
    }
}

/// Per-frame positions of every query point plus visibility.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub positions: Vec<Vec<Point>>,
    pub visible: Vec<Vec<bool>>,
}

impl Trajectory {
    pub fn frame_count(&self) -> usize {
        self.positions.len()
    }

    /// Visible points on frame `i`.
    pub fn visible_points(&self, i: usize) -> Vec<Point> {
        self.positions[i]
            .iter()
            .zip(&self.visible[i])
            .filter(|(_, &v)| v)
            .map(|(p, _)| *p)
            .collect()
    }

    /// Checks the shape against the request and pins frame 0 to the query points.
    pub(crate) fn conform(mut self, req: &TrackRequest<'_>) -> Result<Self, BackendError> {
        let (frames, n) = (req.frames.len(), req.query_points.len());
        let shape_ok = self.positions.len() == frames
            && self.visible.len() == frames
            && self.positions.iter().all(|f| f.len() == n)
            && self.visible.iter().all(|f| f.len() == n);
        if !shape_ok {
            return Err(BackendError::Protocol(format!(
                "trajectory shape does not match request of {frames} frames x {n} points"
            )));
        }
        self.positions[0].clone_from(&req.query_points.points);
        self.visible[0] = vec![true; n];
        Ok(self)
    }
}

pub trait Segmenter {
    /// Returns a mask with the request frame's dimensions; it may be empty.
    fn segment(&mut self, req: &SegmentRequest<'_>) -> Result<Mask, BackendError>;
}

pub trait PointTracker {
    fn track(&mut self, req: &TrackRequest<'_>) -> Result<Trajectory, BackendError>;
}

/// How to reach the models.
#[derive(Debug, Clone)]
pub enum BackendSpec {
    Oracle {
        truth: Arc<GroundTruth>,
        noise: OracleNoise,
    },
    External {
        endpoint: Endpoint,
        session_dir: PathBuf,
    },
}

/// An open backend session serving both segmentation and tracking.
pub enum Session {
    Oracle(OracleBackend),
    External(ExternalClient),
}

pub fn open_session(spec: &BackendSpec) -> Result<Session, BackendError> {
    match spec {
        BackendSpec::Oracle { truth, noise } => {
            Ok(Session::Oracle(OracleBackend::new(truth.clone(), noise.clone())))
        }
        BackendSpec::External {
            endpoint,
            session_dir,
        } => ExternalClient::open(endpoint, session_dir).map(Session::External),
    }
}

impl Session {
    /// Ends the session. Calling it again is a no-op.
    pub fn close(&mut self) -> Result<(), BackendError> {
        match self {
            Session::Oracle(_) => Ok(()),
            Session::External(c) => c.close(),
        }
    }
}

impl Segmenter for Session {
    fn segment(&mut self, req: &SegmentRequest<'_>) -> Result<Mask, BackendError> {
        match self {
            Session::Oracle(o) => o.segment(req),
            Session::External(c) => c.segment(req),
        }
    }
}

impl PointTracker for Session {
    fn track(&mut self, req: &TrackRequest<'_>) -> Result<Trajectory, BackendError> {
        match self {
            Session::Oracle(o) => o.track(req),
            Session::External(c) => c.track(req),
        }
    }
}

impl<S: Segmenter + ?Sized> Segmenter for &mut S {
    fn segment(&mut self, req: &SegmentRequest<'_>) -> Result<Mask, BackendError> {
        (**self).segment(req)
    }
}

impl<T: PointTracker + ?Sized> PointTracker for &mut T {
    fn track(&mut self, req: &TrackRequest<'_>) -> Result<Trajectory, BackendError> {
        (**self).track(req)
    }
}

//! Client side of the model bridge protocol.

use std::collections::HashMap;
use std::fmt;
use std::fs::File;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};
use std::process::{Child, Command, Stdio};

use serde::{Deserialize, Serialize};

use super::protocol::{self, Reply, Request, WirePrompt, PROTOCOL_VERSION};
use super::{BackendError, PointTracker, Prompt, SegmentRequest, Segmenter, TrackRequest, Trajectory};
use crate::geometry::Point;
use crate::io::{frame_file_name, save_frame_png};
use crate::raster::{Frame, Mask, Rle};

const STDERR_LOG: &str = "bridge.stderr.log";

/// Where the bridge lives.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Endpoint {
    /// Spawn a process and speak over its stdin/stdout.
    Spawn { program: String, args: Vec<String> },
    /// Connect to a listening Unix socket.
    Socket { path: PathBuf },
}

impl Endpoint {
    /// Splits a command line on whitespace.
    pub fn from_command_line(cmd: &str) -> Option<Self> {
        let mut parts = cmd.split_whitespace().map(str::to_owned);
        let program = parts.next()?;
        Some(Endpoint::Spawn {
            program,
            args: parts.collect(),
        })
    }
}

impl fmt::Display for Endpoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Endpoint::Spawn { program, args } if args.is_empty() => write!(f, "spawn `{program}`"),
            Endpoint::Spawn { program, args } => write!(f, "spawn `{program} {}`", args.join(" ")),
            Endpoint::Socket { path } => write!(f, "socket {}", path.display()),
        }
    }
}

type FrameKey = (usize, Option<[u64; 5]>);

/// One request/response session with a bridge. Frames are handed over as PNG files in
/// the session directory.
pub struct ExternalClient {
    endpoint: String,
    session_dir: PathBuf,
    reader: Option<Box<dyn Read + Send>>,
    writer: Option<Box<dyn Write + Send>>,
    child: Option<Child>,
    next_id: u64,
    frame_names: HashMap<FrameKey, String>,
    crops_written: usize,
}

impl fmt::Debug for ExternalClient {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ExternalClient")
            .field("endpoint", &self.endpoint)
            .field("session_dir", &self.session_dir)
            .field("next_id", &self.next_id)
            .finish_non_exhaustive()
    }
}

impl ExternalClient {
    /// Connects (or spawns), then performs the hello handshake.
    pub fn open(endpoint: &Endpoint, session_dir: &Path) -> Result<Self, BackendError> {
        let startup = |detail: String| BackendError::Startup {
            endpoint: endpoint.to_string(),
            detail,
        };
        std::fs::create_dir_all(session_dir)
            .map_err(|e| startup(format!("cannot create session dir {}: {e}", session_dir.display())))?;

        let (reader, writer, child): (Box<dyn Read + Send>, Box<dyn Write + Send>, Option<Child>) = match endpoint {
            Endpoint::Spawn { program, args } => {
                let log = File::create(session_dir.join(STDERR_LOG))
                    .map_err(|e| startup(format!("cannot create stderr log: {e}")))?;
                let mut child = Command::new(program)
                    .args(args)
                    .stdin(Stdio::piped())
                    .stdout(Stdio::piped())
                    .stderr(Stdio::from(log))
                    .spawn()
                    .map_err(|e| startup(e.to_string()))?;
                let stdin = child.stdin.take().expect("stdin is piped");
                let stdout = child.stdout.take().expect("stdout is piped");
                (Box::new(stdout), Box::new(stdin), Some(child))
            }
            Endpoint::Socket { path } => {
                #[cfg(unix)]
                {
                    let stream = std::os::unix::net::UnixStream::connect(path).map_err(|e| startup(e.to_string()))?;
                    let read_half = stream.try_clone().map_err(|e| startup(e.to_string()))?;
                    (Box::new(read_half), Box::new(stream), None)
                }
                #[cfg(not(unix))]
                {
                    let _ = path;
                    return Err(startup("unix sockets are not supported on this platform".into()));
                }
            }
        };

        let mut client = Self::from_streams(endpoint.to_string(), reader, writer, session_dir);
        client.child = child;
        match client.handshake() {
            Ok(()) => Ok(client),
            Err(e @ BackendError::VersionMismatch { .. }) => {
                let _ = client.close();
                Err(e)
            }
            Err(e) => {
                let _ = client.close();
                let stderr = std::fs::read_to_string(session_dir.join(STDERR_LOG)).unwrap_or_default();
                let tail: String = stderr.lines().rev().take(5).collect::<Vec<_>>().into_iter().rev().collect::<Vec<_>>().join(" | ");
                let detail = if tail.is_empty() {
                    format!("handshake failed: {e}")
                } else {
                    format!("handshake failed: {e}; bridge stderr: {tail}")
                };
                Err(startup(detail))
            }
        }
    }

    /// Wraps already-connected streams without handshaking.
    pub fn from_streams(
        endpoint: String,
        reader: Box<dyn Read + Send>,
        writer: Box<dyn Write + Send>,
        session_dir: &Path,
    ) -> Self {
        Self {
            endpoint,
            session_dir: session_dir.to_owned(),
            reader: Some(reader),
            writer: Some(writer),
            child: None,
            next_id: 1,
            frame_names: HashMap::new(),
            crops_written: 0,
        }
    }

    pub fn endpoint(&self) -> &str {
        &self.endpoint
    }

    pub fn handshake(&mut self) -> Result<(), BackendError> {
        self.send(&Request::Hello {
            version: PROTOCOL_VERSION,
            session_dir: self.session_dir.to_string_lossy().into_owned(),
        })?;
        match self.receive()? {
            Reply::HelloAck { version, capabilities } => {
                if version != PROTOCOL_VERSION {
                    return Err(BackendError::VersionMismatch {
                        client: PROTOCOL_VERSION,
                        bridge: version,
                    });
                }
                for needed in ["segment", "track"] {
                    if !capabilities.iter().any(|c| c == needed) {
                        return Err(BackendError::Protocol(format!("bridge lacks the {needed:?} capability")));
                    }
                }
                Ok(())
            }
            Reply::Error { message, .. } => Err(BackendError::Protocol(format!("bridge refused hello: {message}"))),
            other => Err(BackendError::Protocol(format!("expected hello_ack, got {other:?}"))),
        }
    }

    fn send(&mut self, msg: &Request) -> Result<(), BackendError> {
        let w = self.writer.as_mut().ok_or(BackendError::Closed)?;
        protocol::send(w.as_mut(), msg)
    }

    fn receive(&mut self) -> Result<Reply, BackendError> {
        let r = self.reader.as_mut().ok_or(BackendError::Closed)?;
        protocol::receive(r.as_mut())
    }

    fn take_id(&mut self) -> u64 {
        let id = self.next_id;
        self.next_id += 1;
        id
    }

    /// Writes `frame` into the session directory once and returns its relative path.
    fn frame_path(&mut self, frame: &Frame) -> Result<String, BackendError> {
        let key: FrameKey = (
            frame.index(),
            frame.crop().map(|t| {
                let [x, y, w, h] = t.source_box.as_array();
                [x.to_bits(), y.to_bits(), w.to_bits(), h.to_bits(), t.scale.to_bits()]
            }),
        );
        if let Some(name) = self.frame_names.get(&key) {
            return Ok(name.clone());
        }
        let name = match key.1 {
            None => frame_file_name(frame.index()),
            Some(_) => {
                self.crops_written += 1;
                format!("{:06}_crop{:04}.png", frame.index() + 1, self.crops_written)
            }
        };
        save_frame_png(frame, &self.session_dir.join(&name))
            .map_err(|e| BackendError::Transport(std::io::Error::other(e.to_string())))?;
        self.frame_names.insert(key, name.clone());
        Ok(name)
    }

    fn expect_reply(&mut self, id: u64) -> Result<Reply, BackendError> {
        let reply = self.receive()?;
        match reply.id() {
            Some(got) if got == id => match reply {
                Reply::Error { id, message } => Err(BackendError::Remote { id, message }),
                r => Ok(r),
            },
            Some(got) => Err(BackendError::Protocol(format!("reply id {got} does not match request id {id}"))),
            None => Err(BackendError::Protocol(format!("unexpected {reply:?} while waiting for reply {id}"))),
        }
    }

    pub fn segment(&mut self, req: &SegmentRequest<'_>) -> Result<Mask, BackendError> {
        let frame = self.frame_path(req.frame)?;
        let prompt = match &req.prompt {
            Prompt::Box(b) => WirePrompt::Box(b.as_array()),
            Prompt::Point(p) => WirePrompt::Point([p.x, p.y]),
            Prompt::Points(ps) => WirePrompt::Points(ps.iter().map(|p| [p.x, p.y]).collect()),
        };
        let id = self.take_id();
        self.send(&Request::Segment { id, frame, prompt })?;
        match self.expect_reply(id)? {
            Reply::Mask { width, height, rle, .. } => {
                if (width, height) != req.frame.dims() {
                    return Err(BackendError::Protocol(format!(
                        "mask is {width}x{height}, frame is {}x{}",
                        req.frame.width(),
                        req.frame.height()
                    )));
                }
                Rle::from_coco_string(&rle, width, height)
                    .and_then(|r| r.decode())
                    .map_err(|e| BackendError::Protocol(e.to_string()))
            }
            other => Err(BackendError::Protocol(format!("expected mask reply, got {other:?}"))),
        }
    }

    pub fn track(&mut self, req: &TrackRequest<'_>) -> Result<Trajectory, BackendError> {
        req.validate()?;
        let frames = req
            .frames
            .iter()
            .map(|f| self.frame_path(f))
            .collect::<Result<Vec<_>, _>>()?;
        let query_points = req.query_points.points.iter().map(|p| [p.x, p.y]).collect();
        let id = self.take_id();
        self.send(&Request::Track { id, frames, query_points })?;
        match self.expect_reply(id)? {
            Reply::Trajectory { positions, visible, .. } => Trajectory {
                positions: positions
                    .into_iter()
                    .map(|row| row.into_iter().map(|[x, y]| Point::new(x, y)).collect())
                    .collect(),
                visible,
            }
            .conform(req),
            other => Err(BackendError::Protocol(format!("expected trajectory reply, got {other:?}"))),
        }
    }

    /// Closes the streams and reaps the bridge process. Safe to call repeatedly.
    pub fn close(&mut self) -> Result<(), BackendError> {
        self.writer = None;
        self.reader = None;
        if let Some(mut child) = self.child.take() {
            child.wait()?;
        }
        Ok(())
    }
}

impl Drop for ExternalClient {
    fn drop(&mut self) {
        self.writer = None;
        self.reader = None;
        if let Some(mut child) = self.child.take() {
            // stdin is closed; a well-behaved bridge exits on EOF
            if child.try_wait().ok().flatten().is_none() {
                let _ = child.kill();
            }
            let _ = child.wait();
        }
    }
}

impl Segmenter for ExternalClient {
    fn segment(&mut self, req: &SegmentRequest<'_>) -> Result<Mask, BackendError> {
        ExternalClient::segment(self, req)
    }
}

impl PointTracker for ExternalClient {
    fn track(&mut self, req: &TrackRequest<'_>) -> Result<Trajectory, BackendError> {
        ExternalClient::track(self, req)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn missing_bridge_names_endpoint() {
        let dir = tempfile::tempdir().unwrap();
        let ep = Endpoint::from_command_line("/nonexistent/orbit-bridge --stub").unwrap();
        let err = ExternalClient::open(&ep, dir.path()).unwrap_err();
        assert!(err.is_startup());
        assert!(err.to_string().contains("/nonexistent/orbit-bridge"), "{err}");
    }

    #[test]
    fn bridge_that_exits_is_startup_error() {
        let dir = tempfile::tempdir().unwrap();
        let ep = Endpoint::Spawn {
            program: "sh".into(),
            args: vec!["-c".into(), "echo no models here >&2; exit 3".into()],
        };
        let err = ExternalClient::open(&ep, dir.path()).unwrap_err();
        assert!(err.is_startup(), "{err}");
        assert!(err.to_string().contains("no models here"), "{err}");
    }

    #[test]
    fn missing_socket_names_path() {
        let dir = tempfile::tempdir().unwrap();
        let sock = dir.path().join("bridge.sock");
        let err = ExternalClient::open(&Endpoint::Socket { path: sock.clone() }, dir.path()).unwrap_err();
        assert!(err.to_string().contains(&sock.display().to_string()), "{err}");
    }

    #[test]
    fn close_is_idempotent() {
        let dir = tempfile::tempdir().unwrap();
        let mut c = ExternalClient::from_streams(
            "test".into(),
            Box::new(std::io::empty()),
            Box::new(std::io::sink()),
            dir.path(),
        );
        c.close().unwrap();
        c.close().unwrap();
        let f = Frame::gray(0, 2, 2, vec![0; 4]).unwrap();
        let err = c.segment(&SegmentRequest { frame: &f, prompt: Prompt::Point(Point::new(1.0, 1.0)) });
        assert!(matches!(err, Err(BackendError::Closed)));
    }
}

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, ValueEnum};
use rayon::prelude::*;

use orbit_sot_core::backends::{open_session, Endpoint, OracleNoise};
use orbit_sot_core::evaluation::{load_annotations, records_to_csv, tracklet_records};
use orbit_sot_core::io::{load_frames_dir, load_scene_config, GT_FILE, SCENE_FILE, TARGET_ID};
use orbit_sot_core::manifest::{BackendRecord, RefreshSummary, RunInputs, RunManifest, RunOutcome, RunTiming};
use orbit_sot_core::pipeline::track_sequence;
use orbit_sot_core::sampling::PointSet;
use orbit_sot_core::simulator::{generate, SceneConfig};
use orbit_sot_core::{BoundingBox, PipelineConfig, VideoSequence};

use crate::error::{write_file, CliError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum BackendKind {
    /// Answers from simulator ground truth.
    Oracle,
    /// A model bridge process speaking the wire protocol.
    External,
}

#[derive(Debug, Args)]
pub struct TrackArgs {
    /// Directory of numbered PNG frames (000001.png, 000002.png, ...).
    #[arg(long)]
    frames: Option<PathBuf>,
    /// Box on the first frame as x,y,w,h. Defaults to the first gt.csv record or the scene truth.
    #[arg(long, value_parser = parse_box)]
    init_box: Option<BoundingBox>,
    #[arg(long, value_enum, default_value_t = BackendKind::Oracle)]
    backend: BackendKind,
    /// Scene description (JSON). Frames are generated from it when --frames is absent.
    #[arg(long)]
    scene: Option<PathBuf>,
    /// Directory of scene directories as written by `simulate --suite`; -o is then a directory.
    #[arg(long, conflicts_with_all = ["frames", "scene", "init_box", "replay", "points_out"])]
    suite: Option<PathBuf>,
    /// Command line that starts the bridge.
    #[arg(long)]
    bridge_cmd: Option<String>,
    /// Unix socket of a running bridge.
    #[arg(long, conflicts_with = "bridge_cmd")]
    socket: Option<PathBuf>,
    /// Directory where frames are staged for the bridge. Defaults to <output>.session.
    #[arg(long)]
    session_dir: Option<PathBuf>,
    /// Keyframe interval.
    #[arg(short = 'K', long = "keyframe-interval")]
    keyframe_interval: Option<usize>,
    /// Points per keyframe.
    #[arg(short = 'N', long = "num-points")]
    num_points: Option<usize>,
    #[arg(long, env = "ORBIT_SOT_SEED")]
    seed: Option<u64>,
    /// TOML file with pipeline settings; flags take precedence.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Oracle point jitter (pixels, standard deviation).
    #[arg(long, default_value_t = 0.0)]
    jitter: f64,
    /// Oracle point dropout probability.
    #[arg(long, default_value_t = 0.0)]
    dropout: f64,
    /// Oracle mask erosion radius.
    #[arg(long, default_value_t = 0)]
    erosion: usize,
    /// Oracle mask dilation radius.
    #[arg(long, default_value_t = 0)]
    dilation: usize,
    /// Seed for oracle noise. Defaults to the run seed.
    #[arg(long)]
    noise_seed: Option<u64>,
    /// Tracklet CSV (or output directory with --suite).
    #[arg(short = 'o', long)]
    output: PathBuf,
    /// Manifest path. Defaults to <output stem>.manifest.json.
    #[arg(long)]
    manifest: Option<PathBuf>,
    /// Also write visible points per frame as frame,x,y lines.
    #[arg(long)]
    points_out: Option<PathBuf>,
    /// Re-run exactly what a manifest describes.
    #[arg(long, conflicts_with_all = ["frames", "scene", "init_box", "config"])]
    replay: Option<PathBuf>,
    /// Parallel sequences with --suite (0 = one per core).
    #[arg(long, default_value_t = 0)]
    jobs: usize,
}

fn parse_box(s: &str) -> Result<BoundingBox, String> {
    s.parse::<BoundingBox>().map_err(|e| e.to_string())
}

/// `dir/stem.suffix` next to `path`.
fn sidecar(path: &Path, suffix: &str) -> PathBuf {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "run".into());
    path.with_file_name(format!("{stem}.{suffix}"))
}

struct Job {
    sequence: String,
    video: VideoSequence,
    init_box: BoundingBox,
    config: PipelineConfig,
    backend: BackendRecord,
    inputs: RunInputs,
    output: PathBuf,
    manifest: PathBuf,
    points: Option<PathBuf>,
}

struct JobSummary {
    sequence: String,
    frames: usize,
    crop_path: bool,
    refreshes: RefreshSummary,
}

fn resolve_config(args: &TrackArgs) -> Result<PipelineConfig, CliError> {
    let mut cfg = match &args.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| CliError::input(format!("{}: {e}", path.display())))?;
            toml::from_str(&text).map_err(|e| CliError::input(format!("{}: {e}", path.display())))?
        }
        None => PipelineConfig::default(),
    };
    if let Some(k) = args.keyframe_interval {
        cfg.keyframe_interval = k;
    }
    if let Some(n) = args.num_points {
        cfg.num_points = n;
    }
    if let Some(seed) = args.seed {
        cfg.rng_seed = seed;
    }
    cfg.validate().map_err(|e| CliError::usage(e.to_string()))?;
    Ok(cfg)
}

fn oracle_noise(args: &TrackArgs, cfg: &PipelineConfig) -> Result<OracleNoise, CliError> {
    if !(args.jitter >= 0.0 && args.jitter.is_finite()) {
        return Err(CliError::usage(format!("--jitter must be >= 0, got {}", args.jitter)));
    }
    if !(0.0..=1.0).contains(&args.dropout) {
        return Err(CliError::usage(format!("--dropout must be in [0, 1], got {}", args.dropout)));
    }
    Ok(OracleNoise {
        jitter_sigma: args.jitter,
        dropout: args.dropout,
        erosion_radius: args.erosion,
        dilation_radius: args.dilation,
        seed: args.noise_seed.unwrap_or(cfg.rng_seed),
    })
}

fn backend_record(
    args: &TrackArgs,
    cfg: &PipelineConfig,
    scene: Option<&SceneConfig>,
    session_dir: PathBuf,
) -> Result<BackendRecord, CliError> {
    match args.backend {
        BackendKind::Oracle => {
            let scene = scene.ok_or_else(|| {
                CliError::usage("the oracle backend needs a scene: pass --scene or a frame directory containing scene.json")
            })?;
            Ok(BackendRecord::Oracle {
                scene: scene.clone(),
                noise: oracle_noise(args, cfg)?,
            })
        }
        BackendKind::External => {
            let endpoint = match (&args.bridge_cmd, &args.socket) {
                (Some(cmd), _) => Endpoint::from_command_line(cmd).ok_or_else(|| CliError::usage("--bridge-cmd is empty"))?,
                (None, Some(path)) => Endpoint::Socket { path: path.clone() },
                (None, None) => return Err(CliError::usage("--backend external needs --bridge-cmd or --socket")),
            };
            Ok(BackendRecord::External { endpoint, session_dir })
        }
    }
}

/// First record of the target tracklet in `dir/gt.csv`, if the file exists.
fn gt_init_box(dir: &Path) -> Result<Option<BoundingBox>, CliError> {
    let path = dir.join(GT_FILE);
    if !path.exists() {
        return Ok(None);
    }
    let gt = load_annotations(&path).map_err(CliError::input)?;
    Ok(gt.get(&TARGET_ID).and_then(|r| r.first()).map(|r| r.bbox))
}

struct JobSource<'a> {
    frames: Option<&'a Path>,
    scene: Option<PathBuf>,
    init_box: Option<BoundingBox>,
    output: PathBuf,
    manifest: PathBuf,
    points: Option<PathBuf>,
    session_dir: PathBuf,
}

fn build_job(args: &TrackArgs, cfg: &PipelineConfig, src: JobSource<'_>) -> Result<Job, CliError> {
    let scene_file = src
        .scene
        .or_else(|| src.frames.map(|d| d.join(SCENE_FILE)).filter(|p| p.exists()));
    let scene_cfg = scene_file
        .as_deref()
        .map(load_scene_config)
        .transpose()
        .map_err(CliError::input)?;

    let mut generated = None;
    let video = match (src.frames, &scene_cfg) {
        (Some(dir), _) => load_frames_dir(dir).map_err(CliError::input)?,
        (None, Some(sc)) => {
            let scene = generate(sc).map_err(CliError::input)?;
            let video = scene.video.clone();
            generated = Some(scene);
            video
        }
        (None, None) => return Err(CliError::usage("pass --frames, --scene, --suite or --replay")),
    };

    let init_box = match (src.init_box, src.frames) {
        (Some(b), _) => b,
        (None, dir) => {
            let from_gt = match dir {
                Some(d) => gt_init_box(d)?,
                None => None,
            };
            match (from_gt, &scene_cfg) {
                (Some(b), _) => b,
                (None, Some(sc)) => match generated.as_ref() {
                    Some(s) => s.init_box(),
                    None => generate(sc).map_err(CliError::input)?.init_box(),
                },
                (None, None) => return Err(CliError::usage("no --init-box given and no gt.csv or scene to take it from")),
            }
        }
    };

    let backend = backend_record(args, cfg, scene_cfg.as_ref(), src.session_dir)?;
    Ok(Job {
        sequence: match (src.frames, &scene_cfg) {
            (None, Some(sc)) => sc.name.clone(),
            _ => video.id.clone(),
        },
        video,
        init_box,
        config: cfg.clone(),
        backend,
        inputs: RunInputs {
            frames: src.frames.map(Path::to_path_buf),
            scene_file,
            init_box: Some(init_box),
        },
        output: src.output,
        manifest: src.manifest,
        points: src.points,
    })
}

fn points_csv(points: &[PointSet]) -> String {
    let mut s = String::new();
    for set in points {
        for p in &set.points {
            writeln!(s, "{},{},{}", set.frame_index + 1, p.x, p.y).unwrap();
        }
    }
    s
}

fn execute(job: &Job) -> Result<JobSummary, CliError> {
    let frame0 = job.video.frames.first().ok_or_else(|| CliError::input("video has no frames"))?;
    if job.init_box.intersection_area(&frame0.bounds()) <= 0.0 {
        return Err(CliError::input(format!(
            "{}: initial box {:?} lies outside the {}x{} frame",
            job.sequence,
            job.init_box.as_array(),
            frame0.width(),
            frame0.height()
        )));
    }
    let (spec, _) = job.backend.to_spec().map_err(CliError::input)?;
    let mut session = open_session(&spec).map_err(|e| {
        if e.is_startup() {
            CliError::startup(format!("{}: backend failed to start: {e}", job.sequence))
        } else {
            CliError::run(format!("{}: {e}", job.sequence))
        }
    })?;

    let start = Instant::now();
    let result = track_sequence(&job.video, &job.init_box, &job.config, &mut session);
    let elapsed = start.elapsed();
    if let Err(e) = session.close() {
        log::warn!("{}: closing backend session: {e}", job.sequence);
    }

    let (tracklet, report, points, outcome, failure) = match result {
        Ok(out) => (out.tracklet, out.report, out.points, RunOutcome::Completed, None),
        Err(f) => {
            let msg = f.to_string();
            (f.partial, f.report, Vec::new(), RunOutcome::Failed { error: msg.clone() }, Some(msg))
        }
    };

    write_file(&job.output, records_to_csv(&tracklet_records(&tracklet, TARGET_ID)))?;
    let manifest = RunManifest::new(
        &job.sequence,
        &job.config,
        job.backend.clone(),
        job.inputs.clone(),
        job.video.len(),
        &report,
        outcome,
    );
    write_file(&job.manifest, manifest.to_json())?;
    let timing = RunTiming {
        sequence: job.sequence.clone(),
        wall_clock_seconds: elapsed.as_secs_f64(),
    };
    write_file(
        &sidecar(&job.output, "timing.json"),
        serde_json::to_string_pretty(&timing).expect("timing serializes") + "\n",
    )?;
    if let Some(p) = &job.points {
        write_file(p, points_csv(&points))?;
    }

    if let Some(msg) = failure {
        return Err(CliError::run(format!(
            "{msg}; partial tracklet written to {}",
            job.output.display()
        )));
    }
    Ok(JobSummary {
        sequence: job.sequence.clone(),
        frames: tracklet.len(),
        crop_path: manifest.crop_path,
        refreshes: manifest.refreshes,
    })
}

fn print_summary(s: &JobSummary, output: &Path) {
    println!(
        "{}: {} frames, {} refreshes ({} consensus){} -> {}",
        s.sequence,
        s.frames,
        s.refreshes.total,
        s.refreshes.consensus,
        if s.crop_path { ", crop path" } else { "" },
        output.display()
    );
}

fn replay(args: &TrackArgs, path: &Path) -> Result<(), CliError> {
    let m = RunManifest::load(path).map_err(|e| CliError::input(format!("{}: {e}", path.display())))?;
    let video = match (&m.inputs.frames, &m.backend) {
        (Some(dir), _) => load_frames_dir(dir).map_err(CliError::input)?,
        (None, BackendRecord::Oracle { scene, .. }) => generate(scene).map_err(CliError::input)?.video,
        (None, BackendRecord::External { .. }) => {
            return Err(CliError::input(format!("{}: manifest records no frame directory", path.display())))
        }
    };
    let init_box = m
        .inputs
        .init_box
        .ok_or_else(|| CliError::input(format!("{}: manifest records no initial box", path.display())))?;
    let job = Job {
        sequence: m.sequence.clone(),
        video,
        init_box,
        config: m.config.clone(),
        backend: m.backend.clone(),
        inputs: m.inputs.clone(),
        manifest: args.manifest.clone().unwrap_or_else(|| sidecar(&args.output, "manifest.json")),
        output: args.output.clone(),
        points: args.points_out.clone(),
    };
    let summary = execute(&job)?;
    print_summary(&summary, &job.output);
    Ok(())
}

fn scene_dirs(root: &Path) -> Result<Vec<PathBuf>, CliError> {
    let entries = std::fs::read_dir(root).map_err(|e| CliError::input(format!("{}: {e}", root.display())))?;
    let mut dirs: Vec<PathBuf> = entries
        .filter_map(Result::ok)
        .map(|e| e.path())
        .filter(|p| p.join("000001.png").is_file())
        .collect();
    dirs.sort();
    if dirs.is_empty() {
        return Err(CliError::input(format!("{}: no scene directories with frames", root.display())));
    }
    Ok(dirs)
}

fn run_suite(args: &TrackArgs, cfg: &PipelineConfig, root: &Path) -> Result<(), CliError> {
    let dirs = scene_dirs(root)?;
    let jobs = dirs
        .iter()
        .map(|dir| {
            let name = dir.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
            let output = args.output.join(format!("{name}.csv"));
            build_job(
                args,
                cfg,
                JobSource {
                    frames: Some(dir),
                    scene: None,
                    init_box: None,
                    manifest: args.output.join(format!("{name}.manifest.json")),
                    points: None,
                    session_dir: match &args.session_dir {
                        Some(d) => d.join(&name),
                        None => sidecar(&output, "session"),
                    },
                    output,
                },
            )
        })
        .collect::<Result<Vec<_>, _>>()?;

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(args.jobs)
        .build()
        .map_err(|e| CliError::usage(format!("--jobs: {e}")))?;
    let results: Vec<Result<JobSummary, CliError>> = pool.install(|| jobs.par_iter().map(execute).collect());

    let mut worst: Option<CliError> = None;
    let mut failed = 0;
    for (job, r) in jobs.iter().zip(results) {
        match r {
            Ok(s) => print_summary(&s, &job.output),
            Err(e) => {
                eprintln!("error: {e}");
                failed += 1;
                if worst.as_ref().map_or(true, |w| e.code > w.code) {
                    worst = Some(e);
                }
            }
        }
    }
    match worst {
        None => Ok(()),
        Some(w) => Err(CliError {
            code: w.code,
            message: format!("{failed} of {} sequences failed", jobs.len()),
        }),
    }
}

pub fn run(args: TrackArgs) -> Result<(), CliError> {
    if let Some(m) = &args.replay {
        return replay(&args, m);
    }
    let cfg = resolve_config(&args)?;
    if let Some(root) = &args.suite {
        return run_suite(&args, &cfg, root);
    }
    let job = build_job(
        &args,
        &cfg,
        JobSource {
            frames: args.frames.as_deref(),
            scene: args.scene.clone(),
            init_box: args.init_box,
            output: args.output.clone(),
            manifest: args.manifest.clone().unwrap_or_else(|| sidecar(&args.output, "manifest.json")),
            points: args.points_out.clone(),
            session_dir: args.session_dir.clone().unwrap_or_else(|| sidecar(&args.output, "session")),
        },
    )?;
    let summary = execute(&job)?;
    print_summary(&summary, &job.output);
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sidecar_names() {
        assert_eq!(sidecar(Path::new("a/out.csv"), "manifest.json"), PathBuf::from("a/out.manifest.json"));
        assert_eq!(sidecar(Path::new("out"), "session"), PathBuf::from("out.session"));
    }

    #[test]
    fn points_lines() {
        let p = PointSet::new(2, vec![orbit_sot_core::Point::new(1.5, 2.0)]);
        assert_eq!(points_csv(&[p]), "3,1.5,2\n");
    }
}

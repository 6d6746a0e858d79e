//! Acceptance suite: one PASS/FAIL line per criterion.

use std::process::ExitCode;
use std::sync::Arc;
use std::time::{Duration, Instant};

use orbit_sot_core::evaluation::{
    dpr, evaluate, gt_records, mean_scores, osr, records_to_csv, tracklet_records, Comparison, EvalResult, Thresholds,
};
use orbit_sot_core::geometry::BoundingBox;
use orbit_sot_core::manifest::{BackendRecord, RunInputs, RunManifest, RunOutcome};
use orbit_sot_core::pipeline::{track_sequence, RefreshPath};
use orbit_sot_core::raster::{aggregate_heatmap, consensus_region, Mask, Pixel, RasterError};
use orbit_sot_core::simulator::{generate, standard_suite, SceneClass};
use orbit_sot_core::{OracleBackend, OracleNoise, PipelineConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const SUITE_SEED: u64 = 7;

struct Outcome {
    name: &'static str,
    passed: bool,
    detail: String,
    elapsed: Duration,
    budget: Option<Duration>,
}

fn check(name: &'static str, budget: Option<Duration>, f: impl FnOnce() -> Result<String, String>) -> Outcome {
    let start = Instant::now();
    let result = f();
    let elapsed = start.elapsed();
    let over = budget.is_some_and(|b| elapsed > b);
    let (passed, mut detail) = match result {
        Ok(d) => (!over, d),
        Err(d) => (false, d),
    };
    if over {
        detail.push_str(&format!("; exceeded {:?} budget", budget.unwrap()));
    }
    Outcome {
        name,
        passed,
        detail,
        elapsed,
        budget,
    }
}

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn bx(x: f64, y: f64, w: f64, h: f64) -> BoundingBox {
    BoundingBox::new(x, y, w, h).unwrap()
}

fn metric_oracles() -> Result<String, String> {
    let s = Comparison::Strict;
    let count = |errors: &[f64], a: f64| 100.0 * errors.iter().filter(|&&e| e < a).count() as f64 / errors.len() as f64;

    let gt = vec![bx(20.0, 20.0, 6.0, 4.0); 10];
    let pred: Vec<_> = (0..10)
        .map(|i| if i < 6 { bx(23.0, 20.0, 6.0, 4.0) } else { bx(20.0, 27.0, 6.0, 4.0) })
        .collect();
    let d = dpr("m", &gt_records(&pred, 1), &gt_records(&gt, 1), 5.0, s).map_err(|e| e.to_string())?;
    let expected = count(&[3.0, 3.0, 3.0, 3.0, 3.0, 3.0, 7.0, 7.0, 7.0, 7.0], 5.0);
    ensure(d == expected && d == 60.0, || format!("6-of-10 DPR = {d}, expected {expected}"))?;

    let off5 = vec![bx(23.0, 24.0, 6.0, 4.0); 10];
    let d = dpr("m", &gt_records(&off5, 1), &gt_records(&gt, 1), 5.0, s).map_err(|e| e.to_string())?;
    ensure(d == 0.0, || format!("DPR with every error exactly 5 = {d}"))?;

    // a 6x4 box against its left 3x4 half: IoU exactly 0.5
    let half = vec![bx(20.0, 20.0, 3.0, 4.0); 10];
    let o = osr("m", &gt_records(&half, 1), &gt_records(&gt, 1), 0.5, s).map_err(|e| e.to_string())?;
    ensure(o == 0.0, || format!("OSR with every IoU exactly 0.5 = {o}"))?;

    // 10x10 reference; widths 8 and 2 give IoU 0.8 and 0.2
    let gt10 = vec![bx(0.0, 0.0, 10.0, 10.0); 6];
    let mixed: Vec<_> = (0..6)
        .map(|i| if i % 2 == 0 { bx(0.0, 0.0, 8.0, 10.0) } else { bx(0.0, 0.0, 2.0, 10.0) })
        .collect();
    let o = osr("m", &gt_records(&mixed, 1), &gt_records(&gt10, 1), 0.5, s).map_err(|e| e.to_string())?;
    ensure(o == 50.0, || format!("half 0.8 / half 0.2 OSR = {o}"))?;

    let d = dpr("m", &gt_records(&gt, 1), &gt_records(&gt, 1), 5.0, s).map_err(|e| e.to_string())?;
    let o = osr("m", &gt_records(&gt, 1), &gt_records(&gt, 1), 0.5, s).map_err(|e| e.to_string())?;
    ensure(d == 100.0 && o == 100.0, || format!("identity gives {d} / {o}"))?;
    Ok("60.0, 0.0, 0.0, 50.0, 100.0/100.0 as counted".into())
}

fn random_mask(rng: &mut ChaCha8Rng, w: usize, h: usize) -> Mask {
    match rng.random_range(0..4) {
        0 => {
            let (c0, r0) = (rng.random_range(0..w), rng.random_range(0..h));
            let (c1, r1) = (rng.random_range(c0..w), rng.random_range(r0..h));
            Mask::from_fn(w, h, |c, r| (c0..=c1).contains(&c) && (r0..=r1).contains(&r))
        }
        1 => {
            let (cx, cy) = (rng.random_range(0.0..w as f64), rng.random_range(0.0..h as f64));
            let rad = rng.random_range(0.5..(w.max(h) as f64 / 2.0).max(1.0));
            Mask::from_fn(w, h, |c, r| {
                let (dx, dy) = (c as f64 + 0.5 - cx, r as f64 + 0.5 - cy);
                dx * dx + dy * dy <= rad * rad
            })
        }
        2 => {
            let density = rng.random_range(0.0..1.0);
            let bits = (0..w * h).map(|_| rng.random_bool(density)).collect();
            Mask::from_bits(w, h, bits).unwrap()
        }
        _ => Mask::new(w, h),
    }
}

/// Labels every above-threshold pixel with the smallest index in its 4-connected component
/// by relaxing to a fixpoint, then keeps the component holding the peak.
fn flood_fill_oracle(counts: &[u32], w: usize, h: usize) -> Option<(Pixel, u32, Vec<bool>)> {
    let max = *counts.iter().max()?;
    if max == 0 {
        return None;
    }
    let peak = counts.iter().position(|&c| c == max).unwrap();
    let threshold = max / 2 + max % 2;
    let mut label: Vec<Option<usize>> = (0..w * h).map(|i| (counts[i] >= threshold).then_some(i)).collect();
    loop {
        let mut changed = false;
        for row in 0..h {
            for col in 0..w {
                let i = row * w + col;
                let Some(mut best) = label[i] else { continue };
                let neighbours = [
                    (col > 0).then(|| i - 1),
                    (col + 1 < w).then(|| i + 1),
                    (row > 0).then(|| i - w),
                    (row + 1 < h).then(|| i + w),
                ];
                for j in neighbours.into_iter().flatten() {
                    if let Some(l) = label[j] {
                        best = best.min(l);
                    }
                }
                if Some(best) != label[i] {
                    label[i] = Some(best);
                    changed = true;
                }
            }
        }
        if !changed {
            break;
        }
    }
    let region = label.iter().map(|l| l.is_some() && *l == label[peak]).collect();
    Some((Pixel::new(peak % w, peak / w), max, region))
}

fn heatmap_equivalence() -> Result<String, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let mut empty_cases = 0;
    for case in 0..500 {
        let (w, h) = (rng.random_range(1..=64), rng.random_range(1..=64));
        let k = rng.random_range(0..=10);
        let masks: Vec<Mask> = (0..k).map(|_| random_mask(&mut rng, w, h)).collect();

        let heat = aggregate_heatmap(w, h, &masks).map_err(|e| e.to_string())?;
        let naive: Vec<u32> = (0..w * h)
            .map(|i| masks.iter().filter(|m| m.get(i % w, i / w)).count() as u32)
            .collect();
        ensure(heat.counts() == naive.as_slice(), || format!("case {case}: heatmap differs from naive count"))?;

        match (consensus_region(&heat), flood_fill_oracle(&naive, w, h)) {
            (Err(RasterError::NoConsensus), None) => empty_cases += 1,
            (Ok(c), Some((peak, max, region))) => {
                ensure(c.peak == peak && c.peak_count == max, || {
                    format!("case {case}: peak {:?}/{} vs oracle {peak:?}/{max}", c.peak, c.peak_count)
                })?;
                ensure(c.region.bits() == region.as_slice(), || format!("case {case}: region differs from oracle"))?;
            }
            (got, want) => return Err(format!("case {case}: got {got:?}, oracle {:?}", want.map(|w| w.0))),
        }
    }
    Ok(format!("500 mask sets bit-exact ({empty_cases} all-zero)"))
}

struct SuiteRun {
    results: Vec<EvalResult>,
    csvs: Vec<String>,
    manifests: Vec<String>,
    keyframe_mismatches: Vec<String>,
    refreshes: usize,
    consensus_refreshes: usize,
    crop_flags: Vec<(String, f64, bool)>,
}

fn run_suite(noise: &OracleNoise) -> Result<SuiteRun, String> {
    let cfg = PipelineConfig {
        rng_seed: SUITE_SEED,
        ..PipelineConfig::default()
    };
    let mut run = SuiteRun {
        results: vec![],
        csvs: vec![],
        manifests: vec![],
        keyframe_mismatches: vec![],
        refreshes: 0,
        consensus_refreshes: 0,
        crop_flags: vec![],
    };
    for sc in standard_suite(SUITE_SEED) {
        let scene = generate(&sc).map_err(|e| e.to_string())?;
        let mut oracle = OracleBackend::new(Arc::new(scene.truth.clone()), noise.clone());
        let out = track_sequence(&scene.video, &scene.init_box(), &cfg, &mut oracle).map_err(|e| e.to_string())?;

        for kf in (0..scene.video.len()).step_by(cfg.keyframe_interval) {
            if out.tracklet.boxes[kf] != scene.truth.target.boxes[kf] {
                run.keyframe_mismatches.push(format!(
                    "{} frame {kf}: {:?} vs {:?}",
                    sc.name, out.tracklet.boxes[kf], scene.truth.target.boxes[kf]
                ));
            }
        }
        run.refreshes += out.report.refreshes.len();
        run.consensus_refreshes += out.report.refreshes.iter().filter(|r| r.path == RefreshPath::Consensus).count();

        let pred = tracklet_records(&out.tracklet, 1);
        let gt = gt_records(&scene.truth.target.boxes, 1);
        run.results.push(evaluate(&sc.name, &pred, &gt, &Thresholds::default()).map_err(|e| e.to_string())?);
        run.csvs.push(records_to_csv(&pred));
        let manifest = RunManifest::new(
            &sc.name,
            &cfg,
            BackendRecord::oracle(&scene, noise),
            RunInputs {
                init_box: Some(scene.init_box()),
                ..Default::default()
            },
            scene.video.len(),
            &out.report,
            RunOutcome::Completed,
        );
        run.crop_flags.push((sc.name.clone(), sc.object.width.min(sc.object.height), manifest.crop_path));
        run.manifests.push(manifest.to_json());
    }
    Ok(run)
}

fn oracle_exactness() -> Result<String, String> {
    let run = run_suite(&OracleNoise::default())?;
    let (d, o) = mean_scores(&run.results).ok_or("empty suite")?;
    let keyframes = run.results.len() * 3;
    ensure(run.keyframe_mismatches.is_empty(), || {
        format!("{} keyframe boxes differ from GT, first: {}", run.keyframe_mismatches.len(), run.keyframe_mismatches[0])
    })?;
    ensure(d >= 95.0 && o >= 90.0, || format!("suite DPR@5 {d:.2}% (need >= 95), OSR@0.5 {o:.2}% (need >= 90)"))?;
    Ok(format!("{keyframes}/{keyframes} keyframe boxes exact; DPR@5 {d:.2}%, OSR@0.5 {o:.2}%"))
}

fn robustness() -> Result<String, String> {
    let noise = OracleNoise {
        jitter_sigma: 1.0,
        dropout: 0.2,
        erosion_radius: 1,
        seed: SUITE_SEED,
        ..OracleNoise::default()
    };
    let run = run_suite(&noise)?;
    let (d, _) = mean_scores(&run.results).ok_or("empty suite")?;
    let share = 100.0 * run.consensus_refreshes as f64 / run.refreshes as f64;
    let msg = format!(
        "DPR@5 {d:.2}% (need >= 80); consensus refreshes {}/{} = {share:.1}% (need >= 90)",
        run.consensus_refreshes, run.refreshes
    );
    ensure(d >= 80.0 && share >= 90.0, || msg.clone())?;
    Ok(msg)
}

fn determinism() -> Result<String, String> {
    let noise = OracleNoise {
        jitter_sigma: 1.0,
        dropout: 0.2,
        erosion_radius: 1,
        seed: SUITE_SEED,
        ..OracleNoise::default()
    };
    let mut compared = 0;
    for n in [OracleNoise::default(), noise] {
        let (a, b) = (run_suite(&n)?, run_suite(&n)?);
        for (i, (x, y)) in a.csvs.iter().zip(&b.csvs).enumerate() {
            ensure(x == y, || format!("tracklet CSV {i} differs between runs"))?;
        }
        for (i, (x, y)) in a.manifests.iter().zip(&b.manifests).enumerate() {
            ensure(x == y, || format!("manifest {i} differs between runs"))?;
        }
        compared += a.csvs.len() + a.manifests.len();
    }
    Ok(format!("{compared} files byte-identical across repeated runs (noiseless and noisy)"))
}

fn crop_path() -> Result<String, String> {
    let run = run_suite(&OracleNoise::default())?;
    let small: Vec<_> = run.crop_flags.iter().filter(|(_, min_dim, _)| *min_dim < 32.0).collect();
    ensure(!small.is_empty(), || "suite has no scene under 32 px".into())?;
    let missing: Vec<_> = small.iter().filter(|(_, _, flag)| !flag).map(|(n, _, _)| n.as_str()).collect();
    ensure(missing.is_empty(), || format!("no crop flag on {missing:?}"))?;
    let tiny = SceneClass::TinyFast.name();
    let tiny_exact = run.results.iter().filter(|r| r.sequence.starts_with(tiny)).count();
    ensure(run.keyframe_mismatches.is_empty(), || format!("keyframe mismatch: {}", run.keyframe_mismatches[0]))?;
    Ok(format!(
        "{} scenes under 32 px flagged crop_path, keyframes exact ({tiny_exact} {tiny} scenes included)",
        small.len()
    ))
}

fn default_configuration() -> Result<String, String> {
    let cfg = PipelineConfig::default();
    let t = Thresholds::default();
    ensure(cfg.keyframe_interval == 20 && cfg.num_points == 20, || format!("K={} N={}", cfg.keyframe_interval, cfg.num_points))?;
    ensure(cfg.dpr_threshold == 5.0 && cfg.osr_threshold == 0.5, || {
        format!("A={} B={}", cfg.dpr_threshold, cfg.osr_threshold)
    })?;
    ensure(t.dpr == 5.0 && t.osr == 0.5 && t.comparison == Comparison::Strict, || format!("{t:?}"))?;
    Ok("K=20 N=20 A=5 B=0.5 strict; VISO benchmark scores need the real dataset and models, not checked here".into())
}

fn main() -> ExitCode {
    let budget = |s| Some(Duration::from_secs(s));
    let outcomes = [
        check("metric oracles", budget(1), metric_oracles),
        check("heatmap/consensus equivalence", budget(10), heatmap_equivalence),
        check("oracle end-to-end exactness", budget(60), oracle_exactness),
        check("robustness under oracle noise", budget(60), robustness),
        check("determinism", None, determinism),
        check("crop/resample path", None, crop_path),
        check("default configuration", None, default_configuration),
    ];
    let mut failed = 0;
    for o in &outcomes {
        let verdict = if o.passed { "PASS" } else { "FAIL" };
        let budget = o.budget.map(|b| format!(" / {}s", b.as_secs())).unwrap_or_default();
        println!("{verdict} {} [{:.2}s{budget}]: {}", o.name, o.elapsed.as_secs_f64(), o.detail);
        failed += usize::from(!o.passed);
    }
    println!("{} passed, {failed} failed", outcomes.len() - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}

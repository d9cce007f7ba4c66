use std::io::Write;
use std::path::{Path, PathBuf};

use accid_core::digital_twin::{build_tracks_with, FrameSnapshot};
use accid_core::event_pipeline::{
    run_pipeline, DetectionEvent, Detector, ReplayDetector, StubDetector,
};
use accid_core::openlabel::{self, merge_snapshots, AnnotationFile};
use accid_core::reporting::{bench, compute_stats, score_by_kind, score_events, ClassificationMetrics};
use accid_core::scenario_gen::{self, export, GroundTruth, ScenarioKind, ScenarioSpec};
use anyhow::Context;
use serde_json::json;

use crate::config::{self, read_file, Effective};
use crate::{invalid, usage, BenchArgs, Cli, Command, DetectArgs, DetectorChoice, ScoreArgs, SimulateArgs, StatsArgs, ValidateArgs};

struct Ctx {
    cfg: Effective,
    verbosity: i8,
}

impl Ctx {
    fn info(&self, msg: impl AsRef<str>) {
        if self.verbosity >= 0 {
            eprintln!("{}", msg.as_ref());
        }
    }

    fn debug(&self, msg: impl AsRef<str>) {
        if self.verbosity >= 1 {
            eprintln!("{}", msg.as_ref());
        }
    }
}

pub fn run(cli: Cli) -> anyhow::Result<u8> {
    let g = cli.global;
    let cfg = config::resolve(
        g.config.as_deref(),
        g.rules.as_deref(),
        g.lanes.as_deref(),
        g.threads.map(|t| t as usize),
    )?;
    if let Some(n) = cfg.threads {
        // A second build in the same process fails harmlessly.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    let ctx = Ctx {
        cfg,
        verbosity: if g.quiet { -1 } else { g.verbose as i8 },
    };
    match cli.command {
        Command::Validate(a) => validate(&ctx, a),
        Command::Detect(a) => detect(&ctx, a),
        Command::Stats(a) => stats(&ctx, a),
        Command::Score(a) => score(&ctx, a),
        Command::Simulate(a) => simulate(&ctx, a),
        Command::Bench(a) => run_bench(&ctx, a),
    }
}

/// Writes to `path`, or standard output when absent.
fn emit(path: Option<&Path>, body: &str) -> anyhow::Result<()> {
    match path {
        Some(p) => std::fs::write(p, body).with_context(|| format!("writing {}", p.display())),
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(body.as_bytes())?;
            out.flush()?;
            Ok(())
        }
    }
}

fn load_annotation(path: &Path) -> anyhow::Result<AnnotationFile> {
    let bytes = read_file(path)?;
    openlabel::parse(&bytes).map_err(|e| invalid(format!("{}: {e}", path.display())))
}

fn load_frames(paths: &[PathBuf]) -> anyhow::Result<Vec<FrameSnapshot>> {
    let files = paths
        .iter()
        .map(|p| load_annotation(p))
        .collect::<anyhow::Result<Vec<_>>>()?;
    Ok(merge_snapshots(&files))
}

fn load_truth(path: &Path) -> anyhow::Result<GroundTruth> {
    let bytes = read_file(path)?;
    GroundTruth::from_json(&bytes).map_err(|e| invalid(format!("{}: {e}", path.display())))
}

fn validate(ctx: &Ctx, a: ValidateArgs) -> anyhow::Result<u8> {
    for p in &a.inputs {
        if !p.is_file() {
            return Err(usage(format!("file not found: {}", p.display())));
        }
    }
    let mut failed = false;
    let mut entries = Vec::new();
    for p in &a.inputs {
        let bytes = read_file(p)?;
        match openlabel::parse(&bytes) {
            Err(e) => {
                failed = true;
                eprintln!("{}: {e}", p.display());
                entries.push(json!({
                    "path": p.display().to_string(),
                    "parsed": false,
                    "error": e.to_string(),
                    "field": e.path(),
                }));
            }
            Ok(file) => {
                let report = openlabel::validate(&file, &ctx.cfg.validation);
                for f in &report.violations {
                    eprintln!("{}: violation: {}", p.display(), f.detail);
                }
                for f in &report.warnings {
                    ctx.debug(format!("{}: warning: {}", p.display(), f.detail));
                }
                if !report.is_clean() {
                    failed = true;
                }
                ctx.info(format!(
                    "{}: {} frames, {} violations, {} warnings",
                    p.display(),
                    file.frames.len(),
                    report.violations.len(),
                    report.warnings.len()
                ));
                entries.push(json!({
                    "path": p.display().to_string(),
                    "parsed": true,
                    "frames": file.frames.len(),
                    "objects": file.object_count(),
                    "report": report,
                }));
            }
        }
    }
    let mut body = serde_json::to_string_pretty(&json!({ "files": entries }))?;
    body.push('\n');
    emit(a.out.as_deref(), &body)?;
    Ok(u8::from(failed))
}

fn detect(ctx: &Ctx, a: DetectArgs) -> anyhow::Result<u8> {
    let detector: Option<Box<dyn Detector>> = match a.detector {
        DetectorChoice::None => None,
        DetectorChoice::Stub => {
            let t = a
                .truth
                .as_deref()
                .ok_or_else(|| usage("`--detector stub` needs `--truth`"))?;
            Some(Box::new(StubDetector::new(&load_truth(t)?)))
        }
        DetectorChoice::Replay => {
            let d = a
                .detections
                .as_deref()
                .ok_or_else(|| usage("`--detector replay` needs `--detections`"))?;
            let bytes = read_file(d)?;
            let r = ReplayDetector::from_json(&bytes)
                .map_err(|e| invalid(format!("{}: {e}", d.display())))?;
            Some(Box::new(r))
        }
    };
    let frames = load_frames(&a.inputs)?;
    let mut pcfg = ctx.cfg.pipeline.clone();
    pcfg.keep_trace = a.trace.is_some();
    let out = run_pipeline(&frames, &ctx.cfg.lanes, &ctx.cfg.rules, &pcfg, detector.as_deref())
        .map_err(|e| invalid(e.to_string()))?;
    for w in &out.warnings {
        eprintln!("warning: {w}");
    }
    ctx.info(format!("{} frames, {} events", frames.len(), out.events.len()));
    emit(a.out.as_deref(), &out.events_json())?;
    if let Some(t) = &a.trace {
        let mut body = serde_json::to_string(&out.trace)?;
        body.push('\n');
        emit(Some(t), &body)?;
    }
    Ok(0)
}

fn stats(ctx: &Ctx, a: StatsArgs) -> anyhow::Result<u8> {
    let frames = load_frames(&a.inputs)?;
    let tracks = build_tracks_with(&frames, &ctx.cfg.pipeline.kinematics)
        .map_err(|e| invalid(e.to_string()))?;
    let report = compute_stats(tracks.values(), &ctx.cfg.lanes, &ctx.cfg.stats);
    ctx.info(format!(
        "{} tracks, {:.3} km",
        report.unique_vehicle_count, report.total_track_length_km
    ));
    emit(a.out.as_deref(), &report.to_json())?;
    if let Some(c) = &a.csv {
        emit(Some(c), &report.to_csv())?;
    }
    Ok(0)
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.6}")).unwrap_or_default()
}

fn metrics_row(scope: &str, m: &ClassificationMetrics) -> String {
    format!(
        "{scope},{},{},{},{},{},{}\n",
        m.true_positives,
        m.false_positives,
        m.false_negatives,
        opt(m.precision),
        opt(m.recall),
        opt(m.f1)
    )
}

fn score(ctx: &Ctx, a: ScoreArgs) -> anyhow::Result<u8> {
    let bytes = read_file(&a.events)?;
    let events: Vec<DetectionEvent> = serde_json::from_slice(&bytes)
        .map_err(|e| invalid(format!("{}: {e}", a.events.display())))?;
    let truth = load_truth(&a.truth)?;
    let overall = score_events(&events, &truth.events);
    let by_kind = score_by_kind(&events, &truth.events);
    ctx.info(format!(
        "tp {} fp {} fn {}",
        overall.true_positives, overall.false_positives, overall.false_negatives
    ));
    let mut body = serde_json::to_string_pretty(&json!({ "overall": overall, "by_kind": by_kind }))?;
    body.push('\n');
    emit(a.out.as_deref(), &body)?;
    if let Some(c) = &a.csv {
        let mut csv = String::from("scope,true_positives,false_positives,false_negatives,precision,recall,f1\n");
        csv.push_str(&metrics_row("all", &overall));
        for (k, m) in &by_kind {
            csv.push_str(&metrics_row(k.as_str(), m));
        }
        emit(Some(c), &csv)?;
    }
    Ok(0)
}

/// `dir/s.ol` with `cam_2` gives `dir/s.cam_2.ol`.
fn with_infix(path: &Path, infix: &str) -> PathBuf {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    let name = match path.extension() {
        Some(ext) => format!("{stem}.{infix}.{}", ext.to_string_lossy()),
        None => format!("{stem}.{infix}"),
    };
    path.with_file_name(name)
}

fn truth_path(out: &Path) -> PathBuf {
    let stem = out.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    out.with_file_name(format!("{stem}.truth.json"))
}

fn simulate(ctx: &Ctx, a: SimulateArgs) -> anyhow::Result<u8> {
    let mut spec = match &a.spec {
        Some(p) => ScenarioSpec::from_json(&read_file(p)?)
            .map_err(|e| invalid(format!("{}: {e}", p.display())))?,
        None => ScenarioSpec::default(),
    };
    if let Some(k) = &a.kind {
        spec.kind = k.parse::<ScenarioKind>().map_err(|e| {
            let names: Vec<&str> = ScenarioKind::ALL.iter().map(|k| k.as_str()).collect();
            usage(format!("{e}; expected one of {}", names.join(", ")))
        })?;
    }
    if let Some(d) = a.duration {
        spec.duration_s = d;
    }
    if let Some(v) = a.vehicles {
        spec.vehicle_count = v;
    }
    if let Some(s) = a.seed {
        spec.seed = s;
    }
    if let Some(s) = a.sensors {
        spec.sensors = s;
    }
    if let Some(n) = a.noise {
        spec.noise_sigma_m = n;
    }
    if let Some(d) = a.dropout {
        spec.dropout = d;
    }
    let scenario = scenario_gen::generate_on(&spec, &ctx.cfg.lanes).map_err(|e| usage(e.to_string()))?;
    let exported = export(&scenario);
    if exported.files.len() == 1 {
        emit(Some(&a.out), &String::from_utf8(openlabel::serialize(&exported.files[0].1))?)?;
        ctx.debug(format!("wrote {}", a.out.display()));
    } else {
        for (sensor, file) in &exported.files {
            let p = with_infix(&a.out, sensor);
            emit(Some(&p), &String::from_utf8(openlabel::serialize(file))?)?;
            ctx.debug(format!("wrote {}", p.display()));
        }
    }
    let tp = a.truth.clone().unwrap_or_else(|| truth_path(&a.out));
    emit(Some(&tp), &exported.truth_json)?;
    ctx.info(format!(
        "{} frames, {} sensors, {} truth events",
        scenario.frames.len(),
        exported.files.len(),
        scenario.truth.events.len()
    ));
    Ok(0)
}

fn run_bench(ctx: &Ctx, a: BenchArgs) -> anyhow::Result<u8> {
    let (frames, truth) = if a.inputs.is_empty() {
        let mut spec = ScenarioSpec::new(ScenarioKind::NormalFlow, a.seed);
        spec.duration_s = a.frames as f64 / spec.frame_rate_hz;
        spec.vehicle_count = a.vehicles;
        let sc = scenario_gen::generate_on(&spec, &ctx.cfg.lanes).map_err(|e| usage(e.to_string()))?;
        (sc.frames, Some(sc.truth))
    } else {
        let truth = a.truth.as_deref().map(load_truth).transpose()?;
        (load_frames(&a.inputs)?, truth)
    };
    let stub = if a.with_detector {
        let t = truth.ok_or_else(|| usage("`--with-detector` on files needs `--truth`"))?;
        Some(StubDetector::new(&t))
    } else {
        None
    };
    let mut pcfg = ctx.cfg.pipeline.clone();
    pcfg.keep_trace = false;
    let report = bench(
        &frames,
        &ctx.cfg.lanes,
        &ctx.cfg.rules,
        &pcfg,
        stub.as_ref().map(|s| s as &dyn Detector),
    )
    .map_err(|e| invalid(e.to_string()))?;
    ctx.info(format!(
        "{} frames in {:.3} s ({} fps)",
        report.frames,
        report.total_s,
        opt(report.frames_per_second)
    ));
    let mut body = serde_json::to_string_pretty(&report)?;
    body.push('\n');
    emit(a.out.as_deref(), &body)?;
    Ok(0)
}

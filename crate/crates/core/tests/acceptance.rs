//! Acceptance suite. Runs every criterion, prints one line each and exits
//! non-zero when any of them fails.

use std::collections::BTreeMap;
use std::panic::{self, AssertUnwindSafe};
use std::time::Instant;

use accid_core::digital_twin::{
    estimate_acceleration, heading_deviation, FrameSnapshot, ObjectState, Track, TrackKey,
};
use accid_core::event_pipeline::{
    confirm, run_pipeline, Candidate, ConfirmParams, Confirmer, EventKind, PipelineConfig,
    StubDetector,
};
use accid_core::lane_model::{Direction, LaneMap};
use accid_core::openlabel::{parse, serialize};
use accid_core::reporting::{
    compute_stats, score_by_kind, score_events, ClassificationMetrics, Histogram, StatsConfig,
};
use accid_core::rule_engine::{evaluate_rules, FrameContext, RuleConfig};
use accid_core::scenario_gen::{export, generate, ScenarioKind, ScenarioSpec, TruthEvent};
use accid_core::Category;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;

fn check(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn state(track: &str, cat: Category, frame: u64, x: f64, y: f64, len: f64) -> ObjectState {
    ObjectState {
        track_id: track.to_string(),
        category: cat,
        frame_index: frame,
        timestamp: frame as f64 / 25.0,
        position: [x, y, 0.8],
        dimensions: [len, 1.9, 1.6],
        yaw: 0.0,
        sensor_id: "cam_1".to_string(),
        num_points: None,
        label_speed_kmh: None,
        speed_mps: None,
        lane_id: None,
    }
}

// Lane centre offsets on the default map, from its published widths.
fn lane_center_y(lane: i32) -> f64 {
    let k = lane.abs() as f64;
    let off = if lane.abs() <= 6 {
        1.0 + (k - 0.5) * 3.5
    } else {
        1.0 + 6.0 * 3.5 + 1.5
    };
    if lane > 0 {
        -off
    } else {
        off
    }
}

// ---------------------------------------------------------------- 1

fn rule_fidelity() -> Outcome {
    let map = LaneMap::default_highway();
    let cfg = RuleConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut contexts = 0;
    let mut candidates = 0;
    let mut leads = 0;
    let mut true_counts = [0usize; 6];
    let sparse_lanes = [1, 2, -1, 7];
    let dense_lanes = [1, -1];
    while contexts < 1000 {
        let n = 10;
        // Every other frame packs short vehicles into one carriageway so
        // that all six predicates hold together often enough to matter.
        let dense = rng.gen_bool(0.5);
        let (lanes, span, max_len): (&[i32], u32, f64) = if dense {
            (&dense_lanes, 60, 6.0)
        } else {
            (&sparse_lanes, 150, 18.0)
        };
        // (lane, station on a 1/64 m grid, speed, length, category)
        let objs: Vec<(i32, f64, f64, f64, Category)> = (0..n)
            .map(|_| {
                let cat = if rng.gen_bool(0.1) {
                    [Category::Pedestrian, Category::Bicycle][rng.gen_range(0..2)]
                } else {
                    [Category::Car, Category::Truck, Category::Bus, Category::Motorcycle][rng.gen_range(0..4)]
                };
                let s = rng.gen_range(0..span * 64) as f64 / 64.0;
                // dense frames mix slow traffic with a few fast closers
                let v: f64 = if dense {
                    if rng.gen_bool(0.3) {
                        rng.gen_range(30.0..45.0)
                    } else {
                        rng.gen_range(0.0..15.0)
                    }
                } else {
                    rng.gen_range(0.0..45.0)
                };
                (lanes[rng.gen_range(0..lanes.len())], s, v, rng.gen_range(3.0..max_len), cat)
            })
            .collect();
        let states: Vec<ObjectState> = objs
            .iter()
            .enumerate()
            .map(|(i, &(lane, s, v, len, cat))| {
                let x = if lane > 0 { 400.0 + s } else { 600.0 - s };
                let lat = rng.gen_range(-1.0..1.0);
                let mut st = state(&format!("{i}"), cat, 0, x, lane_center_y(lane) + lat, len);
                st.speed_mps = Some(v);
                st
            })
            .collect();
        let refs: Vec<&ObjectState> = states.iter().collect();
        let got = evaluate_rules(&FrameContext::build(&refs, &map, &cfg), &cfg);

        for (i, &(lane, s, v, len, cat)) in objs.iter().enumerate() {
            contexts += 1;
            let rv = &got[&format!("{i}")];
            let vehicle = !matches!(cat, Category::Pedestrian | Category::Bicycle);
            let ahead: Vec<usize> = (0..n)
                .filter(|&j| {
                    let (lj, sj, _, _, cj) = objs[j];
                    j != i && lj == lane && sj > s && !matches!(cj, Category::Pedestrian | Category::Bicycle)
                })
                .collect();
            let lead = ahead
                .iter()
                .copied()
                .min_by(|&a, &b| objs[a].1.total_cmp(&objs[b].1).then(a.cmp(&b)));
            let expected: [bool; 7] = match (vehicle, lead) {
                (false, _) => [false; 7],
                (true, None) => [v >= 15.0 / 3.6, false, false, false, false, false, false],
                (true, Some(l)) => {
                    leads += 1;
                    let (_, sl, vl, ll, _) = objs[l];
                    let gap = ((sl - s) - (len + ll) / 2.0).max(0.0);
                    let r1 = v >= 15.0 / 3.6;
                    let r2 = v > vl;
                    let r3 = ahead.iter().all(|&j| v >= objs[j].2);
                    let r4 = gap >= 2.0;
                    let r5 = gap < ((v - vl) * 3.6 / 30.0).powi(2);
                    let r6 = v > vl && gap / (v - vl) <= 1.5;
                    [r1, r2, r3, r4, r5, r6, r1 && r2 && r3 && r4 && r5 && r6]
                }
            };
            let actual = [rv.r1, rv.r2, rv.r3, rv.r4, rv.r5, rv.r6, rv.accident_candidate];
            check(actual == expected, || {
                format!("context {contexts}: vehicle {i} got {actual:?}, oracle {expected:?}")
            })?;
            candidates += usize::from(expected[6]);
            for (c, &b) in true_counts.iter_mut().zip(&expected[..6]) {
                *c += usize::from(b);
            }
        }
    }
    check(candidates > 0, || "no accident candidate exercised".into())?;
    check(true_counts.iter().all(|&c| c > 0 && c < contexts), || format!("degenerate {true_counts:?}"))?;
    Ok(format!(
        "{contexts} contexts, {leads} with a lead, r1..r6 true {true_counts:?}, {candidates} accident candidates, 0 mismatches"
    ))
}

// ---------------------------------------------------------------- 2

fn brute_force_confirm(seq: &[Option<f64>]) -> Vec<([u64; 2], f64)> {
    let mut out = Vec::new();
    let mut i = 0;
    while i < seq.len() {
        if seq[i].is_none() {
            i += 1;
            continue;
        }
        let start = i;
        while i < seq.len() && seq[i].is_some() {
            i += 1;
        }
        let run: Vec<f64> = seq[start..i].iter().map(|c| c.unwrap()).collect();
        let qualifies = run.windows(3).any(|w| w.iter().all(|&c| c > 0.8));
        if qualifies {
            let best = run.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            out.push(([start as u64, (i - 1) as u64], best));
        }
    }
    out
}

fn confirmation_logic() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut events = 0;
    for n in 0..10_000 {
        let len = rng.gen_range(0..60);
        let seq: Vec<Option<f64>> = (0..len)
            .map(|_| {
                if rng.gen_bool(0.15) {
                    None
                } else if rng.gen_bool(0.05) {
                    Some(0.8)
                } else if rng.gen_bool(0.6) {
                    Some(rng.gen_range(0.8..=1.0))
                } else {
                    Some(rng.gen_range(0.0..1.0))
                }
            })
            .collect();
        let cands: Vec<Candidate> = seq
            .iter()
            .enumerate()
            .filter_map(|(f, c)| {
                c.map(|conf| Candidate {
                    frame_index: f as u64,
                    confidence: conf,
                    track_ids: Vec::new(),
                    location: [0.0, 0.0],
                })
            })
            .collect();
        let got: Vec<([u64; 2], f64)> = confirm(&cands, ConfirmParams::learning())
            .into_iter()
            .map(|r| (r.frame_span, r.confidence))
            .collect();
        let mut streaming = Confirmer::new(ConfirmParams::learning());
        let mut streamed: Vec<([u64; 2], f64)> = cands
            .iter()
            .filter_map(|c| streaming.push(c))
            .map(|r| (r.frame_span, r.confidence))
            .collect();
        streamed.extend(streaming.finish().map(|r| (r.frame_span, r.confidence)));
        let oracle = brute_force_confirm(&seq);
        check(got == oracle, || format!("sequence {n}: {seq:?}\n got {got:?}\n oracle {oracle:?}"))?;
        check(streamed == oracle, || format!("sequence {n}: streaming {streamed:?} vs {oracle:?}"))?;
        events += oracle.len();
    }
    Ok(format!("10000 sequences, {events} confirmed events, batch and streaming agree"))
}

// ---------------------------------------------------------------- 3

fn end_to_end() -> Outcome {
    let start = Instant::now();
    let map = LaneMap::default_highway();
    let rules = RuleConfig::default();
    let pcfg = PipelineConfig { keep_trace: false, ..Default::default() };
    let kinds = [
        ScenarioKind::RearEnd,
        ScenarioKind::BreakdownShoulder,
        ScenarioKind::StandingInLane,
        ScenarioKind::Tailgate,
        ScenarioKind::NormalFlow,
    ];
    let mut per_kind: BTreeMap<ScenarioKind, (Vec<_>, Vec<TruthEvent>)> = BTreeMap::new();
    let mut normal_accidents = 0;
    for &kind in &kinds {
        for seed in 0..10u64 {
            let sc = generate(&ScenarioSpec::new(kind, 1000 + seed)).map_err(|e| e.to_string())?;
            let stub = StubDetector::new(&sc.truth);
            let out = run_pipeline(&sc.frames, &map, &rules, &pcfg, Some(&stub)).map_err(|e| e.to_string())?;
            if kind == ScenarioKind::NormalFlow {
                normal_accidents += out.count(EventKind::Accident);
            }
            let entry = per_kind.entry(kind).or_default();
            entry.0.extend(out.events);
            entry.1.extend(sc.truth.events);
        }
    }
    let elapsed = start.elapsed().as_secs_f64();
    let gate = [
        (ScenarioKind::RearEnd, EventKind::Accident),
        (ScenarioKind::BreakdownShoulder, EventKind::BreakdownShoulder),
        (ScenarioKind::StandingInLane, EventKind::StandingInDrivingLane),
    ];
    let mut summary = Vec::new();
    for (sk, ek) in gate {
        let (pred, truth) = &per_kind[&sk];
        let by = score_by_kind(pred, truth);
        let m = by.get(&ek).ok_or_else(|| format!("{sk}: no {} events at all", ek.as_str()))?;
        let recall = m.recall.unwrap_or(0.0);
        check(m.true_positives + m.false_negatives == 10, || {
            format!("{sk}: expected 10 {} truth events, found {}", ek.as_str(), m.true_positives + m.false_negatives)
        })?;
        check(recall >= 0.9, || format!("{sk}: {} recall {recall:.3}", ek.as_str()))?;
        summary.push(format!("{sk} {} recall {recall:.2}", ek.as_str()));
    }
    let (pred, truth) = &per_kind[&ScenarioKind::Tailgate];
    let tail = score_by_kind(pred, truth);
    if let Some(m) = tail.get(&EventKind::Tailgating) {
        summary.push(format!("tailgate recall {:.2}", m.recall.unwrap_or(0.0)));
    }
    check(normal_accidents == 0, || format!("{normal_accidents} accident events on normal_flow"))?;
    check(elapsed < 60.0, || format!("took {elapsed:.1} s"))?;
    Ok(format!("{}; 0 accidents on normal_flow; {elapsed:.1} s", summary.join(", ")))
}

// ---------------------------------------------------------------- 4

fn metric_arithmetic() -> Outcome {
    let m = ClassificationMetrics::from_counts(116, 4, 0);
    let p = m.precision.ok_or("precision undefined")?;
    check(format!("{:.2}", 100.0 * p) == "96.67", || format!("precision {p}"))?;

    // The same count through event matching: 116 hits and 4 predictions
    // that overlap nothing.
    let truth: Vec<(EventKind, [u64; 2])> = (0..116).map(|k| (EventKind::Accident, [k * 100, k * 100 + 10])).collect();
    let mut pred: Vec<(EventKind, [u64; 2])> = (0..116).map(|k| (EventKind::Accident, [k * 100 + 5, k * 100 + 20])).collect();
    pred.extend((0..4).map(|k| (EventKind::Accident, [k * 100 + 50, k * 100 + 60])));
    let s = score_events(&pred, &truth);
    check((s.true_positives, s.false_positives, s.false_negatives) == (116, 4, 0), || format!("{s:?}"))?;
    check(s.precision == m.precision, || format!("{s:?}"))?;

    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for _ in 0..100 {
        let (tp, fp, fn_) = (rng.gen_range(0..500u64), rng.gen_range(0..500u64), rng.gen_range(0..500u64));
        let m = ClassificationMetrics::from_counts(tp, fp, fn_);
        if tp + fp > 0 {
            check(m.precision == Some(tp as f64 / (tp + fp) as f64), || format!("{m:?}"))?;
        }
        if tp + fn_ > 0 {
            check(m.recall == Some(tp as f64 / (tp + fn_) as f64), || format!("{m:?}"))?;
        }
        if let (Some(p), Some(r)) = (m.precision, m.recall) {
            if p + r > 0.0 {
                check(m.f1 == Some(2.0 * p * r / (p + r)), || format!("{m:?}"))?;
                let counts = 2.0 * tp as f64 / (2 * tp + fp + fn_) as f64;
                check((m.f1.unwrap() - counts).abs() < 1e-12, || format!("{m:?}"))?;
            }
        }
    }
    Ok(format!("precision {:.2}%, F1 identity on 100 count triples", 100.0 * p))
}

// ---------------------------------------------------------------- 5

fn programmed_track(positions: &[(f64, f64)]) -> Track {
    let states = positions
        .iter()
        .enumerate()
        .map(|(k, &(x, y))| state("1", Category::Car, k as u64, x, y, 4.5))
        .collect();
    Track::new(TrackKey::new("cam_1", "1"), states)
}

fn kinematics() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let v: f64 = rng.gen_range(0.5..50.0);
        let th: f64 = rng.gen_range(-3.1..3.1);
        let (x0, y0) = (rng.gen_range(-100.0..100.0), rng.gen_range(-100.0..100.0));
        let pos: Vec<(f64, f64)> = (0..100)
            .map(|k| {
                let t = k as f64 / 25.0;
                (x0 + v * t * th.cos(), y0 + v * t * th.sin())
            })
            .collect();
        let track = programmed_track(&pos);
        for &s in &track.speed {
            worst = worst.max((s - v).abs() / v);
        }
    }
    check(worst <= 1e-9, || format!("constant-velocity relative error {worst:e}"))?;

    // 30 m/s, braking at -6 m/s^2 from t = 2 s to t = 5 s, then constant.
    let x_at = |t: f64| -> f64 {
        if t < 2.0 {
            30.0 * t
        } else if t < 5.0 {
            let u = t - 2.0;
            60.0 + 30.0 * u - 3.0 * u * u
        } else {
            60.0 + 90.0 - 27.0 + 12.0 * (t - 5.0)
        }
    };
    let pos: Vec<(f64, f64)> = (0..200).map(|k| (x_at(k as f64 / 25.0), 0.0)).collect();
    let track = programmed_track(&pos);
    let mut worst_a = 0.0f64;
    for i in 60..=115 {
        let a = track.acceleration[i];
        let e = estimate_acceleration(&track, i).map_err(|e| e.to_string())?;
        worst_a = worst_a.max((a + 6.0).abs()).max((e + 6.0).abs());
    }
    check(worst_a <= 0.5, || format!("braking error {worst_a}"))?;

    let pos: Vec<(f64, f64)> = (0..150)
        .map(|k| {
            let t = k as f64 / 25.0;
            (25.0 * t, 3.0 * (0.8 * t).sin())
        })
        .collect();
    let base = programmed_track(&pos);
    let mut worst_h = 0.0f64;
    for _ in 0..20 {
        let th: f64 = rng.gen_range(-3.1..3.1);
        let (cx, cy) = (rng.gen_range(-50.0..50.0), rng.gen_range(-50.0..50.0));
        let rotated: Vec<(f64, f64)> = pos
            .iter()
            .map(|&(x, y)| {
                let (dx, dy) = (x - cx, y - cy);
                (cx + dx * th.cos() - dy * th.sin(), cy + dx * th.sin() + dy * th.cos())
            })
            .collect();
        let rot = programmed_track(&rotated);
        for i in 12..150 {
            let a = heading_deviation(&base, i, 12).map_err(|e| e.to_string())?;
            let b = heading_deviation(&rot, i, 12).map_err(|e| e.to_string())?;
            worst_h = worst_h.max((a - b).abs());
        }
    }
    check(worst_h <= 1e-9, || format!("heading deviation changed by {worst_h:e} deg"))?;
    Ok(format!(
        "speed rel. error {worst:.1e}, braking error {worst_a:.3} m/s2, heading drift {worst_h:.1e} deg"
    ))
}

// ---------------------------------------------------------------- 6

fn throughput() -> Outcome {
    let mut spec = ScenarioSpec::new(ScenarioKind::NormalFlow, 6);
    spec.duration_s = 900.0;
    spec.vehicle_count = 24;
    let sc = generate(&spec).map_err(|e| e.to_string())?;
    let frames: &[FrameSnapshot] = &sc.frames;
    let objects: usize = frames.iter().map(|f| f.objects.len()).sum();
    let per_frame = objects as f64 / frames.len() as f64;
    check(frames.len() == 22_500, || format!("{} frames", frames.len()))?;
    check((20.0..=28.0).contains(&per_frame), || format!("{per_frame:.1} objects per frame"))?;
    let cfg = PipelineConfig { keep_trace: false, ..Default::default() };
    let start = Instant::now();
    run_pipeline(frames, &LaneMap::default_highway(), &RuleConfig::default(), &cfg, None)
        .map_err(|e| e.to_string())?;
    let secs = start.elapsed().as_secs_f64();
    let fps = frames.len() as f64 / secs;
    check(fps >= 25.0, || format!("{fps:.1} frames/s"))?;
    Ok(format!(
        "22500 frames, {per_frame:.1} objects/frame, {secs:.2} s, {fps:.0} frames/s"
    ))
}

// ---------------------------------------------------------------- 7

fn round_trip() -> Outcome {
    let mut files = 0;
    let mut objects = 0;
    let mut seed = 0u64;
    while files < 200 {
        let kind = ScenarioKind::ALL[(seed % 8) as usize];
        let mut spec = ScenarioSpec::new(kind, seed);
        spec.duration_s = 2.0 + (seed % 4) as f64;
        spec.sensors = 1 + (seed % 3) as usize;
        spec.dropout = if seed.is_multiple_of(2) { 0.0 } else { 0.1 };
        spec.vehicle_count = 5 + (seed % 20) as usize;
        let sc = generate(&spec).map_err(|e| e.to_string())?;
        for (sensor, file) in export(&sc).files {
            if files == 200 {
                break;
            }
            let bytes = serialize(&file);
            let back = parse(&bytes).map_err(|e| format!("seed {seed} {sensor}: {e}"))?;
            check(back == file, || format!("seed {seed} {sensor}: parsed file differs"))?;
            check(serialize(&back) == bytes, || format!("seed {seed} {sensor}: bytes differ"))?;
            files += 1;
            objects += file.object_count();
        }
        seed += 1;
    }
    Ok(format!("{files} files, {objects} objects, 0 diffs"))
}

// ---------------------------------------------------------------- 8

struct Spec {
    sensor: String,
    id: String,
    cat: Category,
    lane: Option<i32>,
    states: Vec<(u64, f64, f64)>,
}

fn random_track(rng: &mut ChaCha8Rng, id: usize) -> Spec {
    let cat = Category::ALL[rng.gen_range(0..6)];
    let lane = if rng.gen_bool(0.1) {
        None
    } else {
        let k = rng.gen_range(1..=7);
        Some(if rng.gen_bool(0.5) { k } else { -k })
    };
    let y = lane.map_or(80.0, lane_center_y) + rng.gen_range(-0.8..0.8);
    let sign = if lane.unwrap_or(1) > 0 { 1.0 } else { -1.0 };
    let n = rng.gen_range(1..400);
    let v: f64 = if rng.gen_bool(0.2) { rng.gen_range(0.0..1.0) } else { rng.gen_range(3.0..45.0) };
    // optionally stops dead after `stop` states
    let stop = rng.gen_bool(0.4).then(|| rng.gen_range(0..n));
    let jitter = if rng.gen_bool(0.3) { 0.03 } else { 0.0 };
    let x0 = if sign > 0.0 { 10.0 } else { 990.0 };
    let f0 = rng.gen_range(0..40u64);
    let mut x = x0;
    let states = (0..n)
        .map(|k| {
            if stop.is_none_or(|s| k < s) && k > 0 {
                x += sign * v / 25.0;
            }
            let jx = rng.gen_range(-jitter..=jitter);
            let jy = rng.gen_range(-jitter..=jitter);
            (f0 + k as u64, x + jx, y + jy)
        })
        .collect();
    Spec {
        sensor: format!("cam_{}", 1 + id % 2),
        id: format!("{id}"),
        cat,
        lane,
        states,
    }
}

fn to_track(s: &Spec) -> Track {
    let states = s
        .states
        .iter()
        .map(|&(f, x, y)| {
            let mut st = state(&s.id, s.cat, f, x, y, 4.5);
            st.sensor_id = s.sensor.clone();
            st
        })
        .collect();
    Track::new(TrackKey::new(&s.sensor, &s.id), states)
}

fn ts(frame: u64) -> f64 {
    frame as f64 / 25.0
}

fn oracle_speeds(pts: &[(u64, f64, f64)]) -> Vec<f64> {
    let n = pts.len();
    if n < 2 {
        return vec![0.0; n];
    }
    (0..n)
        .map(|i| {
            let (a, b) = (pts[i.saturating_sub(1)], pts[(i + 1).min(n - 1)]);
            let (dx, dy) = (b.1 - a.1, b.2 - a.2);
            (dx * dx + dy * dy).sqrt() / (ts(b.0) - ts(a.0))
        })
        .collect()
}

fn oracle_standing(pts: &[(u64, f64, f64)]) -> Vec<bool> {
    let n = pts.len();
    let slow: Vec<bool> = (0..n)
        .map(|i| {
            if n < 2 {
                return false;
            }
            let (a, b) = (pts[i.saturating_sub(12)], pts[(i + 12).min(n - 1)]);
            let (dx, dy) = (b.1 - a.1, b.2 - a.2);
            (dx * dx + dy * dy).sqrt() / (ts(b.0) - ts(a.0)) < 2.0 / 3.6
        })
        .collect();
    (0..n)
        .map(|i| {
            if !slow[i] {
                return false;
            }
            let mut j = i;
            while j > 0 && slow[j - 1] {
                j -= 1;
            }
            ts(pts[i].0) - ts(pts[j].0) >= 5.0 - 1e-9
        })
        .collect()
}

fn hist(width: f64, values: impl IntoIterator<Item = f64>) -> Vec<u64> {
    let mut counts: Vec<u64> = Vec::new();
    for v in values {
        let k = (v / width).floor() as usize;
        if counts.len() <= k {
            counts.resize(k + 1, 0);
        }
        counts[k] += 1;
    }
    counts
}

fn statistics_oracle() -> Outcome {
    let map = LaneMap::default_highway();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut tracks_seen = 0;
    for set in 0..20 {
        let specs: Vec<Spec> = (0..rng.gen_range(1..12)).map(|i| random_track(&mut rng, i)).collect();
        let tracks: Vec<Track> = specs.iter().map(to_track).collect();
        let origin = [rng.gen_range(0.0..200.0), rng.gen_range(-20.0..20.0)];
        let cfg = StatsConfig {
            sensor_origin: Some(origin),
            ..StatsConfig::default()
        };
        let r = compute_stats(&tracks, &map, &cfg);
        let ctx = |what: &str| format!("set {set}: {what}");
        tracks_seen += specs.len();

        check(r.unique_vehicle_count == specs.len() as u64, || ctx("unique count"))?;
        let mut classes: BTreeMap<Category, u64> = BTreeMap::new();
        let mut lanes: BTreeMap<i32, u64> = BTreeMap::new();
        let mut off = 0u64;
        let mut lengths = Vec::new();
        let mut total_um = 0u128;
        let mut per_frame: BTreeMap<(String, u64), u64> = BTreeMap::new();
        let mut dists = Vec::new();
        let mut speed_sum: BTreeMap<Category, (u64, u128, f64)> = BTreeMap::new();
        let mut dir_tracks: BTreeMap<Direction, (u64, u64, f64)> = BTreeMap::new();
        let (mut stand_drive, mut stand_shoulder, mut breakdowns) = (0u64, 0u64, 0u64);
        for s in &specs {
            *classes.entry(s.cat).or_default() += 1;
            let len: f64 = s
                .states
                .windows(2)
                .map(|w| ((w[1].1 - w[0].1).powi(2) + (w[1].2 - w[0].2).powi(2)).sqrt())
                .sum();
            lengths.push(len);
            total_um += (len * 1e6).round() as u128;
            let speeds = oracle_speeds(&s.states);
            let entry = speed_sum.entry(s.cat).or_insert((0, 0, 0.0));
            let mut sum = 0u128;
            for &v in &speeds {
                let kmh = v * 3.6;
                entry.0 += 1;
                entry.1 += (kmh * 1e6).round() as u128;
                entry.2 = entry.2.max(kmh);
                sum += (kmh * 1e6).round() as u128;
            }
            for &(f, x, y) in &s.states {
                *per_frame.entry((s.sensor.clone(), f)).or_default() += 1;
                dists.push(((x - origin[0]).powi(2) + (y - origin[1]).powi(2)).sqrt());
                match s.lane {
                    Some(l) => *lanes.entry(l).or_default() += 1,
                    None => off += 1,
                }
            }
            if let Some(l) = s.lane {
                let d = if l > 0 { Direction::North } else { Direction::South };
                let e = dir_tracks.entry(d).or_insert((0, 0, 0.0));
                e.2 = speeds.iter().fold(e.2, |m, &v| m.max(v * 3.6));
                let vehicle = !matches!(s.cat, Category::Pedestrian | Category::Bicycle);
                if vehicle {
                    e.0 += 1;
                    let mean = sum as f64 / 1e6 / speeds.len() as f64;
                    if d == Direction::South && mean > 120.0 {
                        e.1 += 1;
                    }
                }
            }
            if !matches!(s.cat, Category::Pedestrian | Category::Bicycle) {
                let standing = oracle_standing(&s.states);
                if standing.iter().any(|&b| b) {
                    match s.lane {
                        Some(7) | Some(-7) => stand_shoulder += 1,
                        Some(_) => stand_drive += 1,
                        None => {}
                    }
                }
                for i in 0..standing.len() {
                    let rising = standing[i] && (i == 0 || !standing[i - 1]);
                    if rising && speeds[..=i].iter().any(|&v| v >= 15.0 / 3.6) {
                        breakdowns += 1;
                    }
                }
            }
        }
        check(r.per_class_counts == classes, || ctx("classes"))?;
        check(r.per_lane_counts == lanes, || ctx("lanes"))?;
        check(r.off_map_labels == off, || ctx("off-map labels"))?;
        let eq_hist = |h: &Histogram, w: f64, v: Vec<u64>| h.bucket_width == w && h.counts == v;
        check(eq_hist(&r.track_length_histogram, 25.0, hist(25.0, lengths.iter().copied())), || ctx("track lengths"))?;
        check(r.total_track_length_um == total_um, || ctx("total length"))?;
        check(r.total_track_length_km == total_um as f64 / 1e9, || ctx("total km"))?;
        check(
            eq_hist(&r.labels_per_frame_histogram, 5.0, hist(5.0, per_frame.values().map(|&n| n as f64))),
            || ctx("labels per frame"),
        )?;
        check(eq_hist(&r.labeling_distance_histogram, 20.0, hist(20.0, dists.iter().copied())), || ctx("distances"))?;
        check(r.speed_stats.len() == speed_sum.len(), || ctx("speed classes"))?;
        for (c, (n, sum, max)) in &speed_sum {
            let a = &r.speed_stats[c];
            check(a.count == *n && a.sum_micro_kmh == *sum && a.max_kmh == *max, || {
                ctx(&format!("speeds of {c:?}: {a:?} vs ({n}, {sum}, {max})"))
            })?;
        }
        for d in [Direction::North, Direction::South] {
            let (n, fast, max) = dir_tracks.get(&d).copied().unwrap_or((0, 0, 0.0));
            let got = &r.directions[&d];
            check(got.tracks == n && got.speeding_tracks == fast && got.max_speed_kmh == max, || {
                ctx(&format!("{d:?}: {got:?} vs ({n}, {fast}, {max})"))
            })?;
        }
        check(r.speeding_fraction(Direction::North).is_none(), || ctx("north has no limit"))?;
        check(r.standing_counts.driving_lane == stand_drive, || ctx("standing in lane"))?;
        check(r.standing_counts.shoulder == stand_shoulder, || ctx("standing on shoulder"))?;
        check(r.breakdown_count == breakdowns, || ctx(&format!("breakdowns {} vs {breakdowns}", r.breakdown_count)))?;
    }
    Ok(format!("20 sets, {tracks_seen} tracks, every field matches"))
}

// ----------------------------------------------------------------

type Criterion = (&'static str, fn() -> Outcome);

fn main() {
    let criteria: [Criterion; 8] = [
        ("rule fidelity", rule_fidelity),
        ("confirmation logic", confirmation_logic),
        ("end-to-end detection", end_to_end),
        ("metric arithmetic", metric_arithmetic),
        ("kinematics", kinematics),
        ("throughput", throughput),
        ("parser round trip", round_trip),
        ("statistics oracle", statistics_oracle),
    ];
    panic::set_hook(Box::new(|_| {}));
    let mut failed = 0;
    for (k, (name, f)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let result = panic::catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panic".into());
            Err(format!("panicked: {msg}"))
        });
        let secs = start.elapsed().as_secs_f64();
        match result {
            Ok(detail) => println!("[PASS] {} {name}: {detail} ({secs:.1} s)", k + 1),
            Err(why) => {
                failed += 1;
                println!("[FAIL] {} {name}: {why} ({secs:.1} s)", k + 1);
            }
        }
    }
    println!("acceptance: {} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}

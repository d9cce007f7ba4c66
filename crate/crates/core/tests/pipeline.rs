use accid_core::digital_twin::FrameSnapshot;
use accid_core::event_pipeline::{
    run_pipeline, Detector, EventKind, EventSource, PipelineConfig, PipelineOutput, ReplayDetector,
    StubDetector,
};
use accid_core::lane_model::LaneMap;
use accid_core::openlabel::{merge_snapshots, parse, serialize};
use accid_core::reporting::{bench, score_events};
use accid_core::rule_engine::RuleConfig;
use accid_core::scenario_gen::{export, generate, Scenario, ScenarioKind, ScenarioSpec};

fn scene(kind: ScenarioKind, seed: u64) -> Scenario {
    generate(&ScenarioSpec::new(kind, seed)).unwrap()
}

fn detect(frames: &[FrameSnapshot], detector: Option<&dyn Detector>) -> PipelineOutput {
    run_pipeline(
        frames,
        &LaneMap::default_highway(),
        &RuleConfig::default(),
        &PipelineConfig::default(),
        detector,
    )
    .unwrap()
}

#[test]
fn each_scripted_kind_yields_its_event() {
    let cases = [
        (ScenarioKind::RearEnd, EventKind::Accident),
        (ScenarioKind::LaneChangeCollision, EventKind::Accident),
        (ScenarioKind::BreakdownShoulder, EventKind::BreakdownShoulder),
        (ScenarioKind::StandingInLane, EventKind::StandingInDrivingLane),
        (ScenarioKind::Tailgate, EventKind::Tailgating),
        (ScenarioKind::Speeding, EventKind::Speeding),
        (ScenarioKind::HardBrake, EventKind::HardDecel),
    ];
    for (kind, event) in cases {
        for seed in [3, 4] {
            let sc = scene(kind, seed);
            let out = detect(&sc.frames, None);
            let pred: Vec<_> = out.events.iter().filter(|e| e.kind == event).cloned().collect();
            let truth: Vec<_> = sc.truth.events.iter().filter(|e| e.kind == event).cloned().collect();
            assert!(!truth.is_empty(), "{kind}: no {event:?} in truth");
            let m = score_events(&pred, &truth);
            assert_eq!(m.false_negatives, 0, "{kind} seed {seed}: {m:?}\n{:#?}", out.events);
        }
    }
}

#[test]
fn files_on_disk_give_the_same_events_as_memory() {
    let mut spec = ScenarioSpec::new(ScenarioKind::RearEnd, 9);
    spec.sensors = 2;
    spec.dropout = 0.05;
    let sc = generate(&spec).unwrap();
    let files: Vec<_> = export(&sc)
        .files
        .into_iter()
        .map(|(_, f)| parse(&serialize(&f)).unwrap())
        .collect();
    let from_files = merge_snapshots(&files);
    let a = detect(&sc.frames, None);
    let b = detect(&from_files, None);
    assert_eq!(a.events, b.events);
    assert_eq!(a.count(EventKind::Accident), 1);
}

#[test]
fn results_do_not_depend_on_thread_count() {
    let sc = scene(ScenarioKind::LaneChangeCollision, 5);
    let stub = StubDetector::new(&sc.truth);
    let run = |threads: usize| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| detect(&sc.frames, Some(&stub)))
    };
    let one = run(1);
    assert_eq!(one, run(4));
    assert_eq!(one.events_json(), run(3).events_json());
}

#[test]
fn replayed_detections_validate_rule_events() {
    let sc = scene(ScenarioKind::RearEnd, 2);
    let truth = &sc.truth.events.iter().find(|e| e.kind == EventKind::Accident).unwrap();
    let [a, b] = truth.frame_span;
    let records: Vec<serde_json::Value> = (a..=b)
        .map(|f| {
            serde_json::json!({
                "frame_index": f, "sensor_id": "cam_1", "class": "accident",
                "confidence": 0.93, "x": truth.onset[0], "y": truth.onset[1]
            })
        })
        .collect();
    let replay = ReplayDetector::from_json(serde_json::to_string(&records).unwrap().as_bytes()).unwrap();
    let out = detect(&sc.frames, Some(&replay));
    let acc: Vec<_> = out.events.iter().filter(|e| e.kind == EventKind::Accident).collect();
    assert_eq!(acc.len(), 1, "{acc:#?}");
    assert!(acc[0].validated);
    assert_eq!(acc[0].detector_confidence, Some(0.93));
    assert_eq!(acc[0].source, EventSource::RuleBased);
}

#[test]
fn replay_rejects_bad_confidence() {
    let bad = br#"[{"frame_index": 1, "sensor_id": "cam_1", "class": "fire", "confidence": 1.5}]"#;
    assert!(ReplayDetector::from_json(bad).is_err());
    assert!(ReplayDetector::from_json(b"{}").is_err());
}

#[test]
fn normal_flow_is_quiet_across_seeds() {
    for seed in 20..25 {
        let sc = scene(ScenarioKind::NormalFlow, seed);
        let stub = StubDetector::new(&sc.truth);
        let out = detect(&sc.frames, Some(&stub));
        assert_eq!(out.count(EventKind::Accident), 0, "seed {seed}");
        assert_eq!(out.count(EventKind::StandingInDrivingLane), 0, "seed {seed}");
        assert_eq!(out.count(EventKind::BreakdownShoulder), 0, "seed {seed}");
    }
}

#[test]
fn bench_reports_one_run_of_the_pipeline() {
    let sc = scene(ScenarioKind::RearEnd, 1);
    let r = bench(
        &sc.frames,
        &LaneMap::default_highway(),
        &RuleConfig::default(),
        &PipelineConfig::default(),
        None,
    )
    .unwrap();
    assert_eq!(r.frames, sc.frames.len());
    assert_eq!(r.events, detect(&sc.frames, None).events.len());
    assert!(!r.detector);
}

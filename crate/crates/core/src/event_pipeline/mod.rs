//! From frames to confirmed, camera-fused detection events.
//!
//! The chain per sensor is kinematics, lane assignment, lead search, rule
//! evaluation and maneuver classification. Rule candidates become events
//! through [`confirm`]; on frames with an accident candidate the external
//! detector is queried, and its confirmed detections validate the rule
//! events they overlap. Finally [`fuse_cameras`] merges what several
//! cameras saw.

mod confirm;
mod detector;
mod fuse;

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::digital_twin::{
    build_tracks_with, window_speed, FrameSnapshot, KinematicsConfig, ObjectState, Track, TwinError,
};
use crate::lane_model::LaneMap;
use crate::rule_engine::{
    classify_maneuvers, classify_scenario, evaluate_vehicle, ttc, FrameContext, ManeuverInput,
    RuleConfig, RuleConfigError, RuleVector, ScenarioLabel,
};

pub use confirm::{confirm, Candidate, ConfirmParams, ConfirmedRun, Confirmer};
pub use detector::{
    DetectionClass, Detector, DetectorError, ExternalDetection, ReplayDetector, ReplayRecord,
    StubDetector,
};
pub use fuse::{fuse_cameras, FuseConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    Accident,
    BreakdownShoulder,
    StandingInDrivingLane,
    Speeding,
    Tailgating,
    HardDecel,
    HeadingSwerve,
}

impl EventKind {
    pub const ALL: [EventKind; 7] = [
        EventKind::Accident,
        EventKind::BreakdownShoulder,
        EventKind::StandingInDrivingLane,
        EventKind::Speeding,
        EventKind::Tailgating,
        EventKind::HardDecel,
        EventKind::HeadingSwerve,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            EventKind::Accident => "accident",
            EventKind::BreakdownShoulder => "breakdown_shoulder",
            EventKind::StandingInDrivingLane => "standing_in_driving_lane",
            EventKind::Speeding => "speeding",
            EventKind::Tailgating => "tailgating",
            EventKind::HardDecel => "hard_decel",
            EventKind::HeadingSwerve => "heading_swerve",
        }
    }
}

impl fmt::Display for EventKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown event kind `{0}`")]
pub struct UnknownEventKind(pub String);

impl FromStr for EventKind {
    type Err = UnknownEventKind;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        EventKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| UnknownEventKind(s.to_string()))
    }
}

impl From<ScenarioLabel> for EventKind {
    fn from(l: ScenarioLabel) -> Self {
        match l {
            ScenarioLabel::StandingInDrivingLane => EventKind::StandingInDrivingLane,
            ScenarioLabel::BreakdownShoulder => EventKind::BreakdownShoulder,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventSource {
    RuleBased,
    LearningBased,
    Fused,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionEvent {
    pub event_id: String,
    pub kind: EventKind,
    /// Sorted, without duplicates.
    pub track_ids: Vec<String>,
    /// Inclusive first and last frame.
    pub frame_span: [u64; 2],
    pub confidence: f64,
    pub source: EventSource,
    /// Ground position at onset.
    pub location: [f64; 2],
    /// Contributing sensors, sorted.
    pub sensors: Vec<String>,
    /// A confirmed learning-based detection overlapped this rule event.
    #[serde(default)]
    pub validated: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detector_confidence: Option<f64>,
}

impl DetectionEvent {
    pub(crate) fn sort_key(&self) -> (u64, EventKind, &[String], &[String], u64) {
        (
            self.frame_span[0],
            self.kind,
            &self.track_ids,
            &self.sensors,
            self.frame_span[1],
        )
    }

    pub fn overlaps(&self, span: [u64; 2]) -> bool {
        self.frame_span[0] <= span[1] && span[0] <= self.frame_span[1]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub kinematics: KinematicsConfig,
    pub learning: ConfirmParams,
    pub rba_min_frames: usize,
    /// Frames without a rule candidate after which a rule event closes.
    pub gap_frames: u64,
    pub fuse: FuseConfig,
    /// Detections further than this from every track stay unassociated.
    pub association_radius_m: f64,
    /// Emit events for standing, speeding, tailgating and the other
    /// maneuver flags besides accidents.
    pub maneuver_events: bool,
    pub keep_trace: bool,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            kinematics: KinematicsConfig::default(),
            learning: ConfirmParams::learning(),
            rba_min_frames: 1,
            gap_frames: 5,
            fuse: FuseConfig::default(),
            association_radius_m: 3.0,
            maneuver_events: true,
            keep_trace: true,
        }
    }
}

impl PipelineConfig {
    fn rule_params(&self) -> ConfirmParams {
        ConfirmParams::rule(self.rba_min_frames, self.gap_frames)
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum PipelineError {
    #[error(transparent)]
    Twin(#[from] TwinError),
    #[error(transparent)]
    Rules(#[from] RuleConfigError),
}

/// Audit record of one vehicle in one frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceEntry {
    pub sensor_id: String,
    pub track_id: String,
    pub speed_mps: f64,
    pub lane_id: Option<i32>,
    pub lead_id: Option<String>,
    pub gap_m: Option<f64>,
    /// From windowed speeds; `None` when not closing on the lead.
    pub ttc_s: Option<f64>,
    pub rules: RuleVector,
    pub scenario: Option<ScenarioLabel>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameTrace {
    pub frame_index: u64,
    pub entries: Vec<TraceEntry>,
    /// Sensors for which the detector was queried on this frame.
    pub detector_queries: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct PipelineOutput {
    pub events: Vec<DetectionEvent>,
    pub trace: Vec<FrameTrace>,
    pub warnings: Vec<String>,
}

impl PipelineOutput {
    pub fn count(&self, kind: EventKind) -> usize {
        self.events.iter().filter(|e| e.kind == kind).count()
    }

    pub fn events_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(&self.events).expect("events serialize");
        s.push('\n');
        s
    }
}

/// Rule results for one state.
#[derive(Debug, Clone)]
struct Eval {
    track: usize,
    state: usize,
    lane_id: Option<i32>,
    lead: Option<(usize, f64)>,
    /// From windowed speeds; drives the tailgating test.
    ttc_s: f64,
    close_r5: bool,
    rules: RuleVector,
}

/// Nearest object within `radius` of `p`.
pub fn associate(p: [f64; 2], objects: &[&ObjectState], radius: f64) -> Option<usize> {
    objects
        .iter()
        .enumerate()
        .map(|(i, o)| (i, (o.position[0] - p[0]).hypot(o.position[1] - p[1])))
        .filter(|&(_, d)| d <= radius)
        .min_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)))
        .map(|(i, _)| i)
}

type StreamKey = (String, String, EventKind);

/// Runs the full chain. Without a detector only rule-based events are
/// produced; a failing detector degrades to the same with a warning.
pub fn run_pipeline(
    frames: &[FrameSnapshot],
    lane_map: &LaneMap,
    rule_cfg: &RuleConfig,
    cfg: &PipelineConfig,
    detector: Option<&dyn Detector>,
) -> Result<PipelineOutput, PipelineError> {
    rule_cfg.check()?;
    let tracks: Vec<Track> = build_tracks_with(frames, &cfg.kinematics)?
        .into_values()
        .collect();
    let mut warnings = Vec::new();
    for t in &tracks {
        if t.long_gaps > 0 {
            warnings.push(format!(
                "track {} has {} gap(s) longer than {} frames",
                t.key, t.long_gaps, cfg.kinematics.max_gap_frames
            ));
        }
    }

    let position: HashMap<u64, usize> = frames
        .iter()
        .enumerate()
        .map(|(i, f)| (f.frame_index, i))
        .collect();
    // per frame: (track, state), ordered by sensor then track id
    let mut members: Vec<Vec<(usize, usize)>> = vec![Vec::new(); frames.len()];
    for (ti, t) in tracks.iter().enumerate() {
        for (si, s) in t.states.iter().enumerate() {
            members[position[&s.frame_index]].push((ti, si));
        }
    }
    let state = |(ti, si): (usize, usize)| &tracks[ti].states[si];

    let half = (rule_cfg.maneuver_window_frames / 2).max(1);
    let mut evals: Vec<Vec<Eval>> = members
        .par_iter()
        .map(|m| {
            let mut out = Vec::with_capacity(m.len());
            for group in m.chunk_by(|a, b| state(*a).sensor_id == state(*b).sensor_id) {
                let objects: Vec<&ObjectState> = group.iter().map(|&k| state(k)).collect();
                let ctx = FrameContext::build(&objects, lane_map, rule_cfg);
                for (k, v) in ctx.vehicles.iter().enumerate() {
                    let rules = evaluate_vehicle(v, rule_cfg);
                    let lead = ctx.occupancy.lead_of(&objects, k);
                    // Closing speeds at tailgating distances are far below the
                    // frame-to-frame speed jitter, so the windowed estimate is used.
                    let (ttc_s, close_r5) = match lead {
                        Some((j, gap)) => {
                            let smooth = |(ti, si): (usize, usize)| {
                                window_speed(&tracks[ti], si, half).unwrap_or(tracks[ti].speed[si])
                            };
                            let (vf, vl) = (smooth(group[k]), smooth(group[j]));
                            let dv = rule_cfg.gap_rule_velocity_units.from_mps(vf - vl);
                            (ttc(gap, vf, vl), gap < (dv / 30.0).powi(2))
                        }
                        None => (f64::INFINITY, false),
                    };
                    out.push(Eval {
                        track: group[k].0,
                        state: group[k].1,
                        lane_id: v.lane_id,
                        lead: lead.map(|(j, gap)| (group[j].0, gap)),
                        ttc_s,
                        close_r5,
                        rules,
                    });
                }
            }
            out
        })
        .collect();

    // per-track series for the maneuver classifier
    let mut lane_ids: Vec<Vec<Option<i32>>> = tracks.iter().map(|t| vec![None; t.len()]).collect();
    let mut ttcs: Vec<Vec<f64>> = tracks.iter().map(|t| vec![f64::INFINITY; t.len()]).collect();
    let mut r5s: Vec<Vec<bool>> = tracks.iter().map(|t| vec![false; t.len()]).collect();
    for e in evals.iter().flatten() {
        lane_ids[e.track][e.state] = e.lane_id;
        ttcs[e.track][e.state] = e.ttc_s;
        r5s[e.track][e.state] = e.close_r5;
    }
    let maneuvers: Vec<_> = tracks
        .par_iter()
        .enumerate()
        .map(|(ti, t)| {
            let vehicle = !rule_cfg.lead.vehicles_only || t.category().is_vehicle();
            if !vehicle {
                return vec![Default::default(); t.len()];
            }
            classify_maneuvers(
                ManeuverInput {
                    track: t,
                    lane_ids: &lane_ids[ti],
                    ttc_s: &ttcs[ti],
                    r5: &r5s[ti],
                },
                rule_cfg,
            )
        })
        .collect();
    for e in evals.iter_mut().flatten() {
        e.rules.maneuvers = maneuvers[e.track][e.state];
    }

    // candidate streams, filled in frame order
    let mut streams: BTreeMap<StreamKey, Vec<Candidate>> = BTreeMap::new();
    let mut queries: Vec<(usize, String)> = Vec::new();
    for (fi, frame_evals) in evals.iter().enumerate() {
        let mut queried: BTreeSet<&str> = BTreeSet::new();
        for e in frame_evals {
            let t = &tracks[e.track];
            let s = &t.states[e.state];
            let mut push = |kind: EventKind, with_lead: bool| {
                let mut ids = vec![s.track_id.clone()];
                if let (true, Some((lead, _))) = (with_lead, e.lead) {
                    ids.push(tracks[lead].track_id().to_string());
                }
                streams
                    .entry((s.sensor_id.clone(), s.track_id.clone(), kind))
                    .or_default()
                    .push(Candidate {
                        frame_index: s.frame_index,
                        confidence: 1.0,
                        track_ids: ids,
                        location: [s.position[0], s.position[1]],
                    });
            };
            if e.rules.accident_candidate {
                push(EventKind::Accident, true);
                queried.insert(&s.sensor_id);
            }
            if cfg.maneuver_events {
                let m = e.rules.maneuvers;
                let lane_kind = e.lane_id.and_then(|l| lane_map.kind_of(l));
                if let Some(label) = classify_scenario(m.standing, lane_kind) {
                    push(label.into(), false);
                }
                if m.speeding {
                    push(EventKind::Speeding, false);
                }
                if m.tailgating {
                    push(EventKind::Tailgating, true);
                }
                if m.hard_decel {
                    push(EventKind::HardDecel, false);
                }
                if m.heading_swerve {
                    push(EventKind::HeadingSwerve, false);
                }
            }
        }
        queries.extend(queried.into_iter().map(|s| (fi, s.to_string())));
    }

    let mut events: Vec<DetectionEvent> = Vec::new();
    let rule_params = cfg.rule_params();
    for ((sensor, _, kind), cands) in &streams {
        for run in confirm(cands, rule_params) {
            events.push(DetectionEvent {
                event_id: String::new(),
                kind: *kind,
                track_ids: run.track_ids.into_iter().collect(),
                frame_span: run.frame_span,
                confidence: 1.0,
                source: EventSource::RuleBased,
                location: run.location,
                sensors: vec![sensor.clone()],
                validated: false,
                detector_confidence: None,
            });
        }
    }

    if let Some(det) = detector {
        match query_detector(det, frames, &members, &tracks, &queries, &evals, cfg) {
            Ok(lba) => merge_validations(&mut events, lba),
            Err(e) => warnings.push(format!(
                "detector failed ({e}); continuing with rule-based events only"
            )),
        }
    }

    let mut events = fuse_cameras(events, &cfg.fuse);
    events.sort_by(|a, b| a.sort_key().cmp(&b.sort_key()));
    for (i, e) in events.iter_mut().enumerate() {
        e.event_id = format!("E{:06}", i + 1);
    }

    let trace = if cfg.keep_trace {
        let mut queried_at: BTreeMap<usize, Vec<String>> = BTreeMap::new();
        for (fi, s) in &queries {
            if detector.is_some() {
                queried_at.entry(*fi).or_default().push(s.clone());
            }
        }
        evals
            .iter()
            .enumerate()
            .map(|(fi, fe)| FrameTrace {
                frame_index: frames[fi].frame_index,
                entries: fe
                    .iter()
                    .map(|e| {
                        let s = &tracks[e.track].states[e.state];
                        let lane_kind = e.lane_id.and_then(|l| lane_map.kind_of(l));
                        TraceEntry {
                            sensor_id: s.sensor_id.clone(),
                            track_id: s.track_id.clone(),
                            speed_mps: s.speed_mps.unwrap_or(0.0),
                            lane_id: e.lane_id,
                            lead_id: e.lead.map(|(l, _)| tracks[l].track_id().to_string()),
                            gap_m: e.lead.map(|(_, g)| g),
                            ttc_s: e.ttc_s.is_finite().then_some(e.ttc_s),
                            rules: e.rules,
                            scenario: classify_scenario(e.rules.maneuvers.standing, lane_kind),
                        }
                    })
                    .collect(),
                detector_queries: queried_at.remove(&fi).unwrap_or_default(),
            })
            .collect()
    } else {
        Vec::new()
    };

    Ok(PipelineOutput {
        events,
        trace,
        warnings,
    })
}

/// Queries the detector on the gated frames and confirms its incident
/// detections per sensor.
fn query_detector(
    det: &dyn Detector,
    frames: &[FrameSnapshot],
    members: &[Vec<(usize, usize)>],
    tracks: &[Track],
    queries: &[(usize, String)],
    evals: &[Vec<Eval>],
    cfg: &PipelineConfig,
) -> Result<Vec<DetectionEvent>, DetectorError> {
    let answers: Vec<Result<Candidate, DetectorError>> = queries
        .par_iter()
        .map(|(fi, sensor)| {
            let objects: Vec<&ObjectState> = members[*fi]
                .iter()
                .map(|&(ti, si)| &tracks[ti].states[si])
                .filter(|s| &s.sensor_id == sensor)
                .collect();
            let frame_index = frames[*fi].frame_index;
            let detections = det.detect(sensor, frame_index, &objects)?;
            let mut best: Option<&ExternalDetection> = None;
            for d in &detections {
                d.check()?;
                if d.class_label.is_incident() && best.is_none_or(|b| d.confidence > b.confidence) {
                    best = Some(d);
                }
            }
            // fallback location: the first rule candidate of this sensor
            let follower = evals[*fi]
                .iter()
                .map(|e| &tracks[e.track].states[e.state])
                .zip(evals[*fi].iter())
                .find(|(s, e)| &s.sensor_id == sensor && e.rules.accident_candidate)
                .map(|(s, _)| [s.position[0], s.position[1]])
                .unwrap_or([0.0, 0.0]);
            Ok(match best {
                None => Candidate {
                    frame_index,
                    confidence: 0.0,
                    track_ids: Vec::new(),
                    location: follower,
                },
                Some(d) => {
                    let (ids, location) = match d.ground_position {
                        Some(p) => (
                            associate(p, &objects, cfg.association_radius_m)
                                .map(|i| vec![objects[i].track_id.clone()])
                                .unwrap_or_default(),
                            p,
                        ),
                        None => (Vec::new(), follower),
                    };
                    Candidate {
                        frame_index,
                        confidence: d.confidence,
                        track_ids: ids,
                        location,
                    }
                }
            })
        })
        .collect();

    let mut per_sensor: BTreeMap<String, Vec<Candidate>> = BTreeMap::new();
    for ((_, sensor), a) in queries.iter().zip(answers) {
        let c = a?;
        if c.confidence > 0.0 {
            per_sensor.entry(sensor.clone()).or_default().push(c);
        }
    }
    let mut out = Vec::new();
    for (sensor, cands) in per_sensor {
        for run in confirm(&cands, cfg.learning) {
            out.push(DetectionEvent {
                event_id: String::new(),
                kind: EventKind::Accident,
                track_ids: run.track_ids.into_iter().collect(),
                frame_span: run.frame_span,
                confidence: run.confidence,
                source: EventSource::LearningBased,
                location: run.location,
                sensors: vec![sensor.clone()],
                validated: false,
                detector_confidence: Some(run.confidence),
            });
        }
    }
    Ok(out)
}

/// A learning-based event validates the rule-based accident events of the
/// same sensor that it overlaps in time and shares a track with. Learning
/// events that validate nothing are kept as they are.
fn merge_validations(events: &mut Vec<DetectionEvent>, lba: Vec<DetectionEvent>) {
    let mut unmatched = Vec::new();
    for l in lba {
        let mut matched = false;
        for e in events.iter_mut() {
            let same = e.kind == EventKind::Accident
                && e.source == EventSource::RuleBased
                && e.sensors == l.sensors
                && e.overlaps(l.frame_span)
                && (l.track_ids.is_empty() || l.track_ids.iter().any(|t| e.track_ids.contains(t)));
            if same {
                matched = true;
                e.validated = true;
                e.detector_confidence = Some(
                    e.detector_confidence
                        .map_or(l.confidence, |c| c.max(l.confidence)),
                );
            }
        }
        if !matched {
            unmatched.push(l);
        }
    }
    events.extend(unmatched);
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario_gen::{generate, ScenarioKind, ScenarioSpec};

    fn run(kind: ScenarioKind, seed: u64, sensors: usize, with_stub: bool) -> (PipelineOutput, crate::scenario_gen::Scenario) {
        let mut spec = ScenarioSpec::new(kind, seed);
        spec.sensors = sensors;
        let sc = generate(&spec).unwrap();
        let stub = StubDetector::new(&sc.truth);
        let det: Option<&dyn Detector> = if with_stub { Some(&stub) } else { None };
        let out = run_pipeline(
            &sc.frames,
            &LaneMap::default_highway(),
            &RuleConfig::default(),
            &PipelineConfig::default(),
            det,
        )
        .unwrap();
        (out, sc)
    }

    #[test]
    fn event_kind_names_round_trip() {
        for k in EventKind::ALL {
            assert_eq!(k.as_str().parse::<EventKind>().unwrap(), k);
            let json = serde_json::to_string(&k).unwrap();
            assert_eq!(json, format!("\"{}\"", k.as_str()));
        }
    }

    #[test]
    fn rear_end_gives_validated_accident_overlapping_truth() {
        let (out, sc) = run(ScenarioKind::RearEnd, 7, 1, true);
        let acc: Vec<_> = out.events.iter().filter(|e| e.kind == EventKind::Accident).collect();
        assert_eq!(acc.len(), 1, "{:#?}", acc);
        let truth = sc.truth.events.iter().find(|e| e.kind == EventKind::Accident).unwrap();
        assert!(acc[0].overlaps(truth.frame_span));
        assert!(acc[0].validated);
        assert_eq!(acc[0].track_ids, vec!["1", "2"]);
        assert!(out.warnings.is_empty(), "{:?}", out.warnings);
    }

    #[test]
    fn rear_end_two_cameras_fuse() {
        let (out, _) = run(ScenarioKind::RearEnd, 7, 2, true);
        let acc: Vec<_> = out.events.iter().filter(|e| e.kind == EventKind::Accident).collect();
        assert_eq!(acc.len(), 1, "{:#?}", acc);
        assert_eq!(acc[0].source, EventSource::Fused);
        assert_eq!(acc[0].sensors, vec!["cam_1", "cam_2"]);
    }

    #[test]
    fn normal_flow_has_no_accidents() {
        let (out, _) = run(ScenarioKind::NormalFlow, 7, 1, true);
        assert_eq!(out.count(EventKind::Accident), 0);
        assert!(out.trace.iter().all(|f| f.detector_queries.is_empty()));
    }

    #[test]
    fn breakdown_on_shoulder() {
        let (out, _) = run(ScenarioKind::BreakdownShoulder, 3, 1, true);
        assert_eq!(out.count(EventKind::BreakdownShoulder), 1, "{:#?}", out.events);
        assert_eq!(out.count(EventKind::Accident), 0);
    }

    #[test]
    fn detector_only_queried_on_candidate_frames() {
        let (out, _) = run(ScenarioKind::RearEnd, 9, 1, true);
        for f in &out.trace {
            let has_candidate = f.entries.iter().any(|e| e.rules.accident_candidate);
            assert_eq!(has_candidate, !f.detector_queries.is_empty(), "frame {}", f.frame_index);
        }
    }

    #[test]
    fn failing_detector_degrades_with_warning() {
        struct Broken;
        impl Detector for Broken {
            fn detect(&self, _: &str, _: u64, _: &[&ObjectState]) -> Result<Vec<ExternalDetection>, DetectorError> {
                Err(DetectorError::Unavailable("offline".into()))
            }
        }
        let sc = generate(&ScenarioSpec::new(ScenarioKind::RearEnd, 7)).unwrap();
        let out = run_pipeline(
            &sc.frames,
            &LaneMap::default_highway(),
            &RuleConfig::default(),
            &PipelineConfig::default(),
            Some(&Broken),
        )
        .unwrap();
        assert_eq!(out.count(EventKind::Accident), 1);
        assert!(out.events.iter().all(|e| !e.validated));
        assert_eq!(out.warnings.len(), 1);
    }

    #[test]
    fn deterministic_output() {
        let (a, _) = run(ScenarioKind::RearEnd, 4, 2, true);
        let (b, _) = run(ScenarioKind::RearEnd, 4, 2, true);
        assert_eq!(a.events_json(), b.events_json());
    }

    #[test]
    fn event_tracks_exist_within_span() {
        let (out, sc) = run(ScenarioKind::LaneChangeCollision, 5, 2, true);
        for e in &out.events {
            for id in &e.track_ids {
                let seen = sc.frames.iter().any(|f| {
                    f.frame_index >= e.frame_span[0]
                        && f.frame_index <= e.frame_span[1]
                        && f.objects.iter().any(|o| &o.track_id == id)
                });
                assert!(seen, "{id} not in {:?}", e.frame_span);
            }
        }
    }

    #[test]
    fn association_picks_nearest_within_radius() {
        let mk = |x: f64| ObjectState {
            track_id: format!("{x}"),
            category: crate::Category::Car,
            frame_index: 0,
            timestamp: 0.0,
            position: [x, 0.0, 0.0],
            dimensions: [4.0, 2.0, 1.5],
            yaw: 0.0,
            sensor_id: "c".into(),
            num_points: None,
            label_speed_kmh: None,
            speed_mps: None,
            lane_id: None,
        };
        let (a, b) = (mk(0.0), mk(2.5));
        let objs = vec![&a, &b];
        assert_eq!(associate([2.0, 0.0], &objs, 3.0), Some(1));
        assert_eq!(associate([10.0, 0.0], &objs, 3.0), None);
    }
}

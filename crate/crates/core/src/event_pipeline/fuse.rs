use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::{DetectionEvent, EventSource};
use crate::geometry::dist2d;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FuseConfig {
    pub fuse_radius_m: f64,
    pub fuse_window_frames: u64,
}

impl Default for FuseConfig {
    fn default() -> Self {
        FuseConfig {
            fuse_radius_m: 5.0,
            fuse_window_frames: 12,
        }
    }
}

fn compatible(a: &DetectionEvent, b: &DetectionEvent, cfg: &FuseConfig) -> bool {
    a.kind == b.kind
        && a.sensors.iter().all(|s| !b.sensors.contains(s))
        && a.frame_span[0].abs_diff(b.frame_span[0]) <= cfg.fuse_window_frames
        && dist2d(
            (a.location[0], a.location[1]),
            (b.location[0], b.location[1]),
        ) <= cfg.fuse_radius_m
}

/// Merges events of the same kind seen by different sensors.
///
/// Clusters use complete linkage: an event joins a cluster only if it is
/// within radius and window of every member and comes from a sensor the
/// cluster has not seen yet. Events are visited in onset order, so the
/// result does not depend on input order beyond ties.
pub fn fuse_cameras(events: Vec<DetectionEvent>, cfg: &FuseConfig) -> Vec<DetectionEvent> {
    let mut events = events;
    events.sort_by(|a, b| a.sort_key().cmp(&b.sort_key()));
    let mut clusters: Vec<Vec<DetectionEvent>> = Vec::new();
    for e in events {
        let slot = clusters
            .iter()
            .position(|c| c.iter().all(|m| compatible(m, &e, cfg)));
        match slot {
            Some(k) => clusters[k].push(e),
            None => clusters.push(vec![e]),
        }
    }
    clusters.into_iter().map(merge_cluster).collect()
}

fn merge_cluster(mut members: Vec<DetectionEvent>) -> DetectionEvent {
    if members.len() == 1 {
        return members.pop().expect("non-empty");
    }
    let n = members.len() as f64;
    let first = &members[0];
    let mut out = DetectionEvent {
        event_id: String::new(),
        kind: first.kind,
        track_ids: Vec::new(),
        frame_span: first.frame_span,
        confidence: 0.0,
        source: EventSource::Fused,
        location: [0.0, 0.0],
        sensors: Vec::new(),
        validated: false,
        detector_confidence: None,
    };
    let mut tracks = BTreeSet::new();
    let mut sensors = BTreeSet::new();
    for m in &members {
        out.frame_span[0] = out.frame_span[0].min(m.frame_span[0]);
        out.frame_span[1] = out.frame_span[1].max(m.frame_span[1]);
        out.confidence = out.confidence.max(m.confidence);
        out.location[0] += m.location[0] / n;
        out.location[1] += m.location[1] / n;
        out.validated |= m.validated;
        out.detector_confidence = match (out.detector_confidence, m.detector_confidence) {
            (Some(a), Some(b)) => Some(a.max(b)),
            (a, b) => a.or(b),
        };
        tracks.extend(m.track_ids.iter().cloned());
        sensors.extend(m.sensors.iter().cloned());
    }
    out.track_ids = tracks.into_iter().collect();
    out.sensors = sensors.into_iter().collect();
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::event_pipeline::EventKind;

    fn ev(sensor: &str, onset: u64, x: f64, conf: f64) -> DetectionEvent {
        DetectionEvent {
            event_id: String::new(),
            kind: EventKind::Accident,
            track_ids: vec!["1".into()],
            frame_span: [onset, onset + 10],
            confidence: conf,
            source: EventSource::RuleBased,
            location: [x, 0.0],
            sensors: vec![sensor.into()],
            validated: false,
            detector_confidence: None,
        }
    }

    #[test]
    fn same_accident_two_cameras_fuses() {
        let out = fuse_cameras(
            vec![ev("cam_1", 100, 0.0, 1.0), ev("cam_2", 104, 1.0, 0.9)],
            &FuseConfig::default(),
        );
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].source, EventSource::Fused);
        assert_eq!(out[0].frame_span, [100, 114]);
        assert_eq!(out[0].confidence, 1.0);
        assert_eq!(out[0].sensors, vec!["cam_1", "cam_2"]);
    }

    #[test]
    fn far_apart_stays_separate() {
        let out = fuse_cameras(
            vec![ev("cam_1", 100, 0.0, 1.0), ev("cam_2", 100, 200.0, 1.0)],
            &FuseConfig::default(),
        );
        assert_eq!(out.len(), 2);
        assert!(out.iter().all(|e| e.source == EventSource::RuleBased));
    }

    #[test]
    fn single_camera_passes_through() {
        let e = ev("cam_1", 5, 0.0, 0.95);
        let out = fuse_cameras(vec![e.clone()], &FuseConfig::default());
        assert_eq!(out, vec![e]);
    }

    #[test]
    fn same_sensor_never_fuses_and_window_applies() {
        let out = fuse_cameras(
            vec![ev("cam_1", 100, 0.0, 1.0), ev("cam_1", 101, 0.0, 1.0)],
            &FuseConfig::default(),
        );
        assert_eq!(out.len(), 2);
        let out = fuse_cameras(
            vec![ev("cam_1", 100, 0.0, 1.0), ev("cam_2", 113, 0.0, 1.0)],
            &FuseConfig::default(),
        );
        assert_eq!(out.len(), 2);
    }

    #[test]
    fn complete_linkage_blocks_chains() {
        // cam_1 at 0 m, cam_2 at 4 m, cam_3 at 8 m: 3 is within 5 m of 2 only
        let out = fuse_cameras(
            vec![
                ev("cam_1", 0, 0.0, 1.0),
                ev("cam_2", 0, 4.0, 1.0),
                ev("cam_3", 0, 8.0, 1.0),
            ],
            &FuseConfig::default(),
        );
        assert_eq!(out.len(), 2);
    }
}

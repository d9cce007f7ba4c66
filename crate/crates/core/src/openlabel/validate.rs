use std::collections::{BTreeMap, HashSet};

use serde::{Deserialize, Serialize};

use super::AnnotationFile;
use crate::geometry::dist2d;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ValidationConfig {
    /// Largest plausible ground-plane displacement per elapsed frame.
    pub jump_threshold_m: f64,
    pub nominal_frame_rate_hz: f64,
    /// Relative deviation from the nominal frame gap that is tolerated.
    pub frame_gap_tolerance: f64,
    /// Occlusion gaps longer than this many frames produce a warning.
    pub max_gap_frames: u64,
}

impl Default for ValidationConfig {
    fn default() -> Self {
        ValidationConfig {
            jump_threshold_m: 10.0,
            nominal_frame_rate_hz: 25.0,
            frame_gap_tolerance: 0.10,
            max_gap_frames: 25,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FindingKind {
    PositionJump,
    DuplicateId,
    FrameRate,
    TrackGap,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Finding {
    pub track_id: Option<String>,
    pub frame_index: u64,
    pub kind: FindingKind,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ValidationReport {
    pub violations: Vec<Finding>,
    pub warnings: Vec<Finding>,
}

impl ValidationReport {
    pub fn is_clean(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn count(&self, kind: FindingKind) -> usize {
        self.violations
            .iter()
            .chain(&self.warnings)
            .filter(|f| f.kind == kind)
            .count()
    }
}

type LastSeen = (u64, (f64, f64));

/// Continuity, duplicate-ID and frame-rate checks. Report-only; the input is
/// never modified.
pub fn validate(file: &AnnotationFile, cfg: &ValidationConfig) -> ValidationReport {
    let mut report = ValidationReport::default();
    let nominal_gap = 1.0 / cfg.nominal_frame_rate_hz;

    for pair in file.frames.windows(2) {
        let (a, b) = (&pair[0], &pair[1]);
        let steps = (b.frame_index - a.frame_index) as f64;
        let gap = (b.timestamp - a.timestamp) / steps;
        if (gap - nominal_gap).abs() > cfg.frame_gap_tolerance * nominal_gap {
            report.warnings.push(Finding {
                track_id: None,
                frame_index: b.frame_index,
                kind: FindingKind::FrameRate,
                detail: format!(
                    "inter-frame gap {gap:.4} s deviates from nominal {nominal_gap:.4} s"
                ),
            });
        }
    }

    // (sensor, track) -> last (frame index, ground position)
    let mut last_seen: BTreeMap<(&str, &str), LastSeen> = BTreeMap::new();
    for frame in &file.frames {
        let mut seen: HashSet<(&str, &str)> = HashSet::new();
        for obj in &frame.objects {
            let key = (obj.attributes.sensor_id.as_str(), obj.track_id.as_str());
            if !seen.insert(key) {
                report.violations.push(Finding {
                    track_id: Some(obj.track_id.clone()),
                    frame_index: frame.frame_index,
                    kind: FindingKind::DuplicateId,
                    detail: format!("track appears twice for sensor `{}`", key.0),
                });
                continue;
            }
            let pos = (obj.cuboid.x, obj.cuboid.y);
            if let Some((prev_frame, prev_pos)) = last_seen.insert(key, (frame.frame_index, pos)) {
                let elapsed = frame.frame_index - prev_frame;
                let per_frame = dist2d(pos, prev_pos) / elapsed as f64;
                if per_frame > cfg.jump_threshold_m {
                    report.violations.push(Finding {
                        track_id: Some(obj.track_id.clone()),
                        frame_index: frame.frame_index,
                        kind: FindingKind::PositionJump,
                        detail: format!(
                            "moved {:.3} m over {elapsed} frame(s) since frame {prev_frame}",
                            dist2d(pos, prev_pos)
                        ),
                    });
                }
                if elapsed - 1 > cfg.max_gap_frames {
                    report.warnings.push(Finding {
                        track_id: Some(obj.track_id.clone()),
                        frame_index: frame.frame_index,
                        kind: FindingKind::TrackGap,
                        detail: format!("missing for {} frames", elapsed - 1),
                    });
                }
            }
        }
    }
    report
}

//! Learning-based detector interface and the two shipped implementations.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::EventKind;
use crate::digital_twin::ObjectState;
use crate::scenario_gen::GroundTruth;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DetectionClass {
    Accident,
    Overturned,
    Fire,
    Normal,
}

impl DetectionClass {
    /// Every class except `normal` signals an incident.
    pub fn is_incident(self) -> bool {
        self != DetectionClass::Normal
    }

    pub fn as_str(self) -> &'static str {
        match self {
            DetectionClass::Accident => "accident",
            DetectionClass::Overturned => "overturned",
            DetectionClass::Fire => "fire",
            DetectionClass::Normal => "normal",
        }
    }
}

impl FromStr for DetectionClass {
    type Err = DetectorError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "accident" => Ok(DetectionClass::Accident),
            "overturned" => Ok(DetectionClass::Overturned),
            "fire" => Ok(DetectionClass::Fire),
            "normal" => Ok(DetectionClass::Normal),
            other => Err(DetectorError::Format(format!("unknown class `{other}`"))),
        }
    }
}

impl fmt::Display for DetectionClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExternalDetection {
    pub sensor_id: String,
    pub frame_index: u64,
    pub class_label: DetectionClass,
    pub confidence: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ground_position: Option<[f64; 2]>,
    /// Pixel box `[u, v, w, h]`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub box2d: Option<[f64; 4]>,
}

impl ExternalDetection {
    pub fn check(&self) -> Result<(), DetectorError> {
        if !(0.0..=1.0).contains(&self.confidence) {
            return Err(DetectorError::Confidence {
                frame_index: self.frame_index,
                value: self.confidence,
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum DetectorError {
    #[error("detection file: {0}")]
    Format(String),
    #[error("confidence {value} outside [0, 1] at frame {frame_index}")]
    Confidence { frame_index: u64, value: f64 },
    #[error("detector unavailable: {0}")]
    Unavailable(String),
}

/// Per-frame query interface. `objects` are the states one sensor reports
/// for the frame.
pub trait Detector: Send + Sync {
    fn detect(
        &self,
        sensor_id: &str,
        frame_index: u64,
        objects: &[&ObjectState],
    ) -> Result<Vec<ExternalDetection>, DetectorError>;
}

/// Deterministic stand-in for an image classifier: reports an accident on
/// every frame inside a ground-truth accident span, placed on the first
/// involved track that the sensor sees.
#[derive(Debug, Clone)]
pub struct StubDetector {
    spans: Vec<([u64; 2], Vec<String>, [f64; 2])>,
    pub confidence: f64,
    /// Half-width of the uniform confidence noise.
    pub noise: f64,
    pub seed: u64,
}

impl StubDetector {
    pub fn new(truth: &GroundTruth) -> Self {
        StubDetector {
            spans: truth
                .events
                .iter()
                .filter(|e| e.kind == EventKind::Accident)
                .map(|e| (e.frame_span, e.track_ids.clone(), e.onset))
                .collect(),
            confidence: 0.9,
            noise: 0.05,
            seed: 0,
        }
    }

    pub fn with_noise(mut self, confidence: f64, noise: f64, seed: u64) -> Self {
        self.confidence = confidence;
        self.noise = noise;
        self.seed = seed;
        self
    }

    fn jitter(&self, sensor_id: &str, frame_index: u64) -> f64 {
        if self.noise <= 0.0 {
            return 0.0;
        }
        // FNV-1a over the query so that results do not depend on query order
        let mut h: u64 = 0xcbf2_9ce4_8422_2325 ^ self.seed;
        for b in sensor_id.bytes().chain(frame_index.to_le_bytes()) {
            h ^= u64::from(b);
            h = h.wrapping_mul(0x0000_0100_0000_01b3);
        }
        ChaCha8Rng::seed_from_u64(h).gen_range(-self.noise..=self.noise)
    }
}

impl Detector for StubDetector {
    fn detect(
        &self,
        sensor_id: &str,
        frame_index: u64,
        objects: &[&ObjectState],
    ) -> Result<Vec<ExternalDetection>, DetectorError> {
        let mut out = Vec::new();
        for (span, tracks, onset) in &self.spans {
            if frame_index < span[0] || frame_index > span[1] {
                continue;
            }
            let position = tracks
                .iter()
                .find_map(|id| objects.iter().find(|o| &o.track_id == id))
                .map(|o| [o.position[0], o.position[1]])
                .unwrap_or(*onset);
            out.push(ExternalDetection {
                sensor_id: sensor_id.to_string(),
                frame_index,
                class_label: DetectionClass::Accident,
                confidence: (self.confidence + self.jitter(sensor_id, frame_index)).clamp(0.0, 1.0),
                ground_position: Some(position),
                box2d: None,
            });
        }
        Ok(out)
    }
}

/// One line of a replay file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplayRecord {
    pub frame_index: u64,
    pub sensor_id: String,
    pub class: DetectionClass,
    pub confidence: f64,
    #[serde(default)]
    pub x: Option<f64>,
    #[serde(default)]
    pub y: Option<f64>,
}

/// Replays pre-computed detections from a JSON array of [`ReplayRecord`]s.
#[derive(Debug, Clone, Default)]
pub struct ReplayDetector {
    by_query: BTreeMap<(String, u64), Vec<ExternalDetection>>,
}

impl ReplayDetector {
    pub fn from_records(records: Vec<ReplayRecord>) -> Result<Self, DetectorError> {
        let mut by_query: BTreeMap<(String, u64), Vec<ExternalDetection>> = BTreeMap::new();
        for r in records {
            let det = ExternalDetection {
                sensor_id: r.sensor_id.clone(),
                frame_index: r.frame_index,
                class_label: r.class,
                confidence: r.confidence,
                ground_position: r.x.zip(r.y).map(|(x, y)| [x, y]),
                box2d: None,
            };
            det.check()?;
            by_query.entry((r.sensor_id, r.frame_index)).or_default().push(det);
        }
        Ok(ReplayDetector { by_query })
    }

    pub fn from_json(bytes: &[u8]) -> Result<Self, DetectorError> {
        let records: Vec<ReplayRecord> =
            serde_json::from_slice(bytes).map_err(|e| DetectorError::Format(e.to_string()))?;
        ReplayDetector::from_records(records)
    }

    pub fn len(&self) -> usize {
        self.by_query.values().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.by_query.is_empty()
    }
}

impl Detector for ReplayDetector {
    fn detect(
        &self,
        sensor_id: &str,
        frame_index: u64,
        _objects: &[&ObjectState],
    ) -> Result<Vec<ExternalDetection>, DetectorError> {
        Ok(self
            .by_query
            .get(&(sensor_id.to_string(), frame_index))
            .cloned()
            .unwrap_or_default())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario_gen::TruthEvent;

    fn truth() -> GroundTruth {
        GroundTruth {
            events: vec![TruthEvent {
                kind: EventKind::Accident,
                track_ids: vec!["1".into(), "2".into()],
                frame_span: [10, 20],
                onset: [5.0, 6.0],
            }],
        }
    }

    #[test]
    fn stub_fires_only_inside_span() {
        let d = StubDetector::new(&truth());
        assert!(d.detect("cam_1", 9, &[]).unwrap().is_empty());
        let hits = d.detect("cam_1", 10, &[]).unwrap();
        assert_eq!(hits.len(), 1);
        assert_eq!(hits[0].ground_position, Some([5.0, 6.0]));
        assert!((0.85..=0.95).contains(&hits[0].confidence));
        assert_eq!(d.detect("cam_1", 10, &[]).unwrap(), hits);
    }

    #[test]
    fn stub_without_noise_is_exact() {
        let d = StubDetector::new(&truth()).with_noise(0.9, 0.0, 0);
        assert_eq!(d.detect("cam_2", 15, &[]).unwrap()[0].confidence, 0.9);
    }

    #[test]
    fn replay_reads_records() {
        let json = br#"[
            {"frame_index": 3, "sensor_id": "cam_1", "class": "fire", "confidence": 0.95, "x": 1.0, "y": 2.0},
            {"frame_index": 3, "sensor_id": "cam_1", "class": "normal", "confidence": 0.4}
        ]"#;
        let d = ReplayDetector::from_json(json).unwrap();
        assert_eq!(d.len(), 2);
        let hits = d.detect("cam_1", 3, &[]).unwrap();
        assert_eq!(hits[0].class_label, DetectionClass::Fire);
        assert_eq!(hits[0].ground_position, Some([1.0, 2.0]));
        assert_eq!(hits[1].ground_position, None);
        assert!(d.detect("cam_2", 3, &[]).unwrap().is_empty());
    }

    #[test]
    fn replay_rejects_bad_confidence() {
        let json = br#"[{"frame_index": 0, "sensor_id": "c", "class": "accident", "confidence": 1.5}]"#;
        assert!(matches!(
            ReplayDetector::from_json(json),
            Err(DetectorError::Confidence { .. })
        ));
        assert!(ReplayDetector::from_json(b"{").is_err());
    }
}

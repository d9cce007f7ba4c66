use crate::digital_twin::FrameSnapshot;
use crate::openlabel::AnnotationFile;

use super::Scenario;

/// One annotation file per sensor plus the truth document.
#[derive(Debug, Clone, PartialEq)]
pub struct ExportedScenario {
    /// `(sensor_id, file)` in sensor order.
    pub files: Vec<(String, AnnotationFile)>,
    pub truth_json: String,
}

impl ExportedScenario {
    /// All sensors in a single file. Track IDs repeat across sensors, which
    /// the format allows since objects are keyed per sensor.
    pub fn combined(scenario: &Scenario) -> AnnotationFile {
        AnnotationFile::from_snapshots(&scenario.frames)
    }
}

/// Splits the scene per sensor. Frames without any object for a sensor are
/// still written so that every file covers the full duration.
pub fn export(scenario: &Scenario) -> ExportedScenario {
    let files = scenario
        .sensor_ids()
        .into_iter()
        .map(|sensor| {
            let frames: Vec<FrameSnapshot> = scenario
                .frames
                .iter()
                .map(|f| FrameSnapshot {
                    frame_index: f.frame_index,
                    timestamp: f.timestamp,
                    objects: f
                        .objects
                        .iter()
                        .filter(|o| o.sensor_id == sensor)
                        .cloned()
                        .collect(),
                })
                .collect();
            let file = AnnotationFile::from_snapshots(&frames);
            (sensor, file)
        })
        .collect();
    ExportedScenario {
        files,
        truth_json: scenario.truth.to_json(),
    }
}

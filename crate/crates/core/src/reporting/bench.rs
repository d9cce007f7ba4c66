use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::digital_twin::FrameSnapshot;
use crate::event_pipeline::{run_pipeline, Detector, PipelineConfig, PipelineError};
use crate::lane_model::LaneMap;
use crate::rule_engine::RuleConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub frames: usize,
    pub objects: usize,
    pub events: usize,
    pub total_s: f64,
    /// `None` for an empty sequence.
    pub frames_per_second: Option<f64>,
    pub ms_per_frame: Option<f64>,
    pub detector: bool,
}

/// Wall-clock timing of [`run_pipeline`] over an in-memory sequence.
pub fn bench(
    frames: &[FrameSnapshot],
    lane_map: &LaneMap,
    rule_cfg: &RuleConfig,
    cfg: &PipelineConfig,
    detector: Option<&dyn Detector>,
) -> Result<BenchReport, PipelineError> {
    let start = Instant::now();
    let out = run_pipeline(frames, lane_map, rule_cfg, cfg, detector)?;
    let total_s = start.elapsed().as_secs_f64();
    let n = frames.len();
    let timed = n > 0 && total_s > 0.0;
    Ok(BenchReport {
        frames: n,
        objects: frames.iter().map(|f| f.objects.len()).sum(),
        events: out.events.len(),
        total_s,
        frames_per_second: timed.then(|| n as f64 / total_s),
        ms_per_frame: timed.then(|| 1000.0 * total_s / n as f64),
        detector: detector.is_some(),
    })
}

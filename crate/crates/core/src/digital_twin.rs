//! Per-track trajectories and their kinematics.
//!
//! Kinematics live on the ground plane: `z` is carried along but ignored for
//! speed, heading and acceleration.

use std::collections::BTreeMap;
use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::category::Category;
use crate::geometry::angle_diff;

/// One tracked participant at one frame, in the road frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectState {
    pub track_id: String,
    pub category: Category,
    pub frame_index: u64,
    pub timestamp: f64,
    /// x, y, z in metres.
    pub position: [f64; 3],
    /// length, width, height in metres.
    pub dimensions: [f64; 3],
    /// Radians in `(-pi, pi]`.
    pub yaw: f64,
    pub sensor_id: String,
    pub num_points: Option<u64>,
    /// Speed attribute carried by the label, if any.
    pub label_speed_kmh: Option<f64>,
    /// Filled from the owning track's kinematics.
    pub speed_mps: Option<f64>,
    /// Filled by lane assignment.
    pub lane_id: Option<i32>,
}

impl ObjectState {
    pub fn ground(&self) -> (f64, f64) {
        (self.position[0], self.position[1])
    }

    pub fn length(&self) -> f64 {
        self.dimensions[0]
    }

    pub fn key(&self) -> TrackKey {
        TrackKey::new(&self.sensor_id, &self.track_id)
    }
}

/// All states observed at one timestamp.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameSnapshot {
    pub frame_index: u64,
    pub timestamp: f64,
    pub objects: Vec<ObjectState>,
}

impl FrameSnapshot {
    pub fn sensors(&self) -> Vec<&str> {
        let mut s: Vec<&str> = self.objects.iter().map(|o| o.sensor_id.as_str()).collect();
        s.sort_unstable();
        s.dedup();
        s
    }
}

/// Track identity. Track IDs are only unique per sensor stream, so a track
/// is addressed by both.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct TrackKey {
    pub sensor_id: String,
    pub track_id: String,
}

impl TrackKey {
    pub fn new(sensor_id: &str, track_id: &str) -> Self {
        TrackKey {
            sensor_id: sensor_id.to_string(),
            track_id: track_id.to_string(),
        }
    }
}

impl fmt::Display for TrackKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.sensor_id, self.track_id)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrackGap {
    /// Index of the state after which frames are missing.
    pub after_state: usize,
    pub missing_frames: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct KinematicsConfig {
    /// Centred moving-average window applied to acceleration.
    pub accel_window_frames: usize,
    /// Gaps longer than this are flagged as `long_gaps`.
    pub max_gap_frames: u64,
    /// Use the label's `speed_kmh` attribute instead of recomputing speed.
    pub trust_label_speed: bool,
}

impl Default for KinematicsConfig {
    fn default() -> Self {
        KinematicsConfig {
            accel_window_frames: 5,
            max_gap_frames: 25,
            trust_label_speed: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum TwinError {
    #[error("track {key} has two states at frame {frame_index}")]
    DuplicateState { key: TrackKey, frame_index: u64 },
    #[error("track {key} goes back in time at frame {frame_index}")]
    OutOfOrder { key: TrackKey, frame_index: u64 },
    #[error("need at least {needed} states, track has {have}")]
    InsufficientStates { needed: usize, have: usize },
    #[error("index {index} out of range for track of length {len}")]
    IndexOutOfRange { index: usize, len: usize },
}

/// Time-ordered states of one track plus derived per-state kinematics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Track {
    pub key: TrackKey,
    pub states: Vec<ObjectState>,
    /// Ground-plane speed, m/s.
    pub speed: Vec<f64>,
    /// Motion heading, radians.
    pub heading: Vec<f64>,
    /// Signed longitudinal acceleration, m/s^2; negative means braking.
    pub acceleration: Vec<f64>,
    pub gaps: Vec<TrackGap>,
    /// Gaps exceeding `max_gap_frames`.
    pub long_gaps: usize,
}

impl Track {
    pub fn new(key: TrackKey, states: Vec<ObjectState>) -> Self {
        let mut t = Track {
            key,
            states,
            speed: Vec::new(),
            heading: Vec::new(),
            acceleration: Vec::new(),
            gaps: Vec::new(),
            long_gaps: 0,
        };
        t.derive(&KinematicsConfig::default());
        t
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn track_id(&self) -> &str {
        &self.key.track_id
    }

    pub fn category(&self) -> Category {
        self.states[0].category
    }

    pub fn index_of_frame(&self, frame_index: u64) -> Option<usize> {
        self.states
            .binary_search_by_key(&frame_index, |s| s.frame_index)
            .ok()
    }

    /// Ground-plane path length in metres.
    pub fn path_length(&self) -> f64 {
        self.states
            .windows(2)
            .map(|w| crate::geometry::dist2d(w[0].ground(), w[1].ground()))
            .sum()
    }

    /// Recomputes derived arrays and gap list.
    pub fn derive(&mut self, cfg: &KinematicsConfig) {
        let n = self.states.len();
        self.gaps = self
            .states
            .windows(2)
            .enumerate()
            .filter_map(|(i, w)| {
                let missing = w[1].frame_index - w[0].frame_index - 1;
                (missing > 0).then_some(TrackGap {
                    after_state: i,
                    missing_frames: missing,
                })
            })
            .collect();
        self.long_gaps = self
            .gaps
            .iter()
            .filter(|g| g.missing_frames > cfg.max_gap_frames)
            .count();

        if n < 2 {
            self.speed = vec![0.0; n];
            self.heading = self.states.iter().map(|s| s.yaw).collect();
            self.acceleration = vec![0.0; n];
        } else {
            let samples = motion_samples(&self.states, 1);
            self.heading = samples.iter().map(|m| m.heading).collect();
            let mut speed: Vec<f64> = samples.iter().map(|m| m.speed).collect();
            if cfg.trust_label_speed {
                for (v, s) in speed.iter_mut().zip(&self.states) {
                    if let Some(kmh) = s.label_speed_kmh {
                        *v = kmh / 3.6;
                    }
                }
            }
            let times: Vec<f64> = samples.iter().map(|m| m.time).collect();
            self.acceleration = acceleration_series(&speed, &times, cfg.accel_window_frames);
            self.speed = speed;
        }
        for (s, v) in self.states.iter_mut().zip(&self.speed) {
            s.speed_mps = Some(*v);
        }
    }
}

/// Ground-plane motion estimated from a position difference.
#[derive(Debug, Clone, Copy)]
struct Motion {
    speed: f64,
    heading: f64,
    /// Time the difference quotient is centred on.
    time: f64,
}

/// Difference quotient between states `i - half` and `i + half`, clamped
/// to the track so that the ends fall back to one-sided differences.
fn motion_at(states: &[ObjectState], i: usize, half: usize) -> Motion {
    let lo = i.saturating_sub(half);
    let hi = (i + half).min(states.len() - 1);
    let (a, b) = (&states[lo], &states[hi]);
    let dx = b.position[0] - a.position[0];
    let dy = b.position[1] - a.position[1];
    let dt = b.timestamp - a.timestamp;
    let dist = (dx * dx + dy * dy).sqrt();
    Motion {
        speed: dist / dt,
        heading: if dist > 1e-9 { dy.atan2(dx) } else { states[i].yaw },
        time: 0.5 * (a.timestamp + b.timestamp),
    }
}

fn motion_samples(states: &[ObjectState], half: usize) -> Vec<Motion> {
    (0..states.len()).map(|i| motion_at(states, i, half)).collect()
}

/// Central difference of `speed` over the sample times, averaged over a
/// centred window; ends replicate the nearest interior values.
fn acceleration_series(speed: &[f64], times: &[f64], window: usize) -> Vec<f64> {
    let n = speed.len();
    if n < 3 {
        return vec![0.0; n];
    }
    let raw: Vec<f64> = (1..n - 1)
        .map(|i| (speed[i + 1] - speed[i - 1]) / (times[i + 1] - times[i - 1]))
        .collect();
    // raw[k] belongs to state k + 1
    let half = window.max(1) / 2;
    (0..n)
        .map(|i| {
            let lo = i.saturating_sub(half).max(1);
            let hi = (i + half).min(n - 2);
            let (lo, hi) = if lo > hi {
                // window lies entirely outside the interior
                let c = i.clamp(1, n - 2);
                (c, c)
            } else {
                (lo, hi)
            };
            let slice = &raw[lo - 1..hi];
            slice.iter().sum::<f64>() / slice.len() as f64
        })
        .collect()
}

fn check_index(track: &Track, index: usize) -> Result<(), TwinError> {
    if index >= track.len() {
        return Err(TwinError::IndexOutOfRange {
            index,
            len: track.len(),
        });
    }
    Ok(())
}

/// Ground-plane speed in m/s: central difference, one-sided at the ends.
pub fn estimate_speed(track: &Track, index: usize) -> Result<f64, TwinError> {
    window_speed(track, index, 1)
}

/// Speed from the displacement between states `index - half` and
/// `index + half`. Wider windows suppress label jitter.
pub fn window_speed(track: &Track, index: usize, half: usize) -> Result<f64, TwinError> {
    if track.len() < 2 {
        return Err(TwinError::InsufficientStates {
            needed: 2,
            have: track.len(),
        });
    }
    check_index(track, index)?;
    Ok(motion_at(&track.states, index, half.max(1)).speed)
}

/// Acceleration from two window speeds `half` states either side of
/// `index`. Exact for constant acceleration, and far less sensitive to
/// position jitter than the frame-to-frame estimate.
pub fn window_acceleration(track: &Track, index: usize, half: usize) -> Result<f64, TwinError> {
    if track.len() < 3 {
        return Err(TwinError::InsufficientStates {
            needed: 3,
            have: track.len(),
        });
    }
    check_index(track, index)?;
    let half = half.max(1);
    let lo = index.saturating_sub(half);
    let hi = (index + half).min(track.len() - 1);
    let a = motion_at(&track.states, lo, half);
    let b = motion_at(&track.states, hi, half);
    let dt = b.time - a.time;
    Ok(if dt > 0.0 { (b.speed - a.speed) / dt } else { 0.0 })
}

/// Smoothed longitudinal acceleration with the default 5-frame window.
pub fn estimate_acceleration(track: &Track, index: usize) -> Result<f64, TwinError> {
    estimate_acceleration_with(track, index, KinematicsConfig::default().accel_window_frames)
}

pub fn estimate_acceleration_with(
    track: &Track,
    index: usize,
    window: usize,
) -> Result<f64, TwinError> {
    if track.len() < 3 {
        return Err(TwinError::InsufficientStates {
            needed: 3,
            have: track.len(),
        });
    }
    check_index(track, index)?;
    let samples = motion_samples(&track.states, 1);
    let speed: Vec<f64> = samples.iter().map(|m| m.speed).collect();
    let times: Vec<f64> = samples.iter().map(|m| m.time).collect();
    Ok(acceleration_series(&speed, &times, window)[index])
}

/// Angle in degrees, within `[0, 180]`, between the motion heading at
/// `index` and the one `window` states earlier.
pub fn heading_deviation(track: &Track, index: usize, window: usize) -> Result<f64, TwinError> {
    let window = window.max(2);
    if track.len() < window + 1 || index < window {
        return Err(TwinError::InsufficientStates {
            needed: window + 1,
            have: track.len().min(index + 1),
        });
    }
    check_index(track, index)?;
    let now = motion_at(&track.states, index, 1).heading;
    let before = motion_at(&track.states, index - window, 1).heading;
    Ok(angle_diff(now, before).to_degrees())
}

/// Groups states into tracks with default kinematics settings.
pub fn build_tracks(frames: &[FrameSnapshot]) -> Result<BTreeMap<TrackKey, Track>, TwinError> {
    build_tracks_with(frames, &KinematicsConfig::default())
}

pub fn build_tracks_with(
    frames: &[FrameSnapshot],
    cfg: &KinematicsConfig,
) -> Result<BTreeMap<TrackKey, Track>, TwinError> {
    let mut grouped: BTreeMap<TrackKey, Vec<ObjectState>> = BTreeMap::new();
    for frame in frames {
        for obj in &frame.objects {
            let states = grouped.entry(obj.key()).or_default();
            if let Some(last) = states.last() {
                if last.frame_index == frame.frame_index || last.timestamp == frame.timestamp {
                    return Err(TwinError::DuplicateState {
                        key: obj.key(),
                        frame_index: frame.frame_index,
                    });
                }
                if last.frame_index > frame.frame_index || last.timestamp > frame.timestamp {
                    return Err(TwinError::OutOfOrder {
                        key: obj.key(),
                        frame_index: frame.frame_index,
                    });
                }
            }
            let mut s = obj.clone();
            s.frame_index = frame.frame_index;
            s.timestamp = frame.timestamp;
            states.push(s);
        }
    }
    let mut tracks: Vec<Track> = grouped
        .into_iter()
        .map(|(key, states)| Track {
            key,
            states,
            speed: Vec::new(),
            heading: Vec::new(),
            acceleration: Vec::new(),
            gaps: Vec::new(),
            long_gaps: 0,
        })
        .collect();
    tracks.par_iter_mut().for_each(|t| t.derive(cfg));
    Ok(tracks.into_iter().map(|t| (t.key.clone(), t)).collect())
}

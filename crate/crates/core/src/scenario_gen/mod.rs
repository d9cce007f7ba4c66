//! Seeded synthetic highway scenes with ground-truth event labels.
//!
//! Every vehicle follows a programmed plan: a lane, a starting station, a
//! [`SpeedProfile`] and optionally one lane change. A vehicle is visible
//! while its station lies on the lane. Ground truth is derived from the
//! noise-free plans, so it can serve as an oracle for the detection chain.

mod export;
mod profile;

use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::category::Category;
use crate::digital_twin::{FrameSnapshot, ObjectState};
use crate::event_pipeline::EventKind;
use crate::geometry::{quantize6, quantize_angle6};
use crate::lane_model::{bumper_gap, Direction, LaneKind, LaneMap};
use crate::rule_engine::{classify_scenario, ttc, RuleConfig, ScenarioLabel};

pub use export::{export, ExportedScenario};
pub use profile::{PathSample, Phase, ProfileSample, ProgrammedPath, SpeedProfile, Turn};

/// Deceleration assumed when deciding that a collision can no longer be
/// avoided; the ground-truth accident span starts there.
pub const EMERGENCY_DECEL_MPS2: f64 = 8.0;
/// Deceleration of both vehicles after an impact.
pub const POST_IMPACT_DECEL_MPS2: f64 = 7.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScenarioKind {
    NormalFlow,
    RearEnd,
    BreakdownShoulder,
    StandingInLane,
    Tailgate,
    LaneChangeCollision,
    Speeding,
    HardBrake,
}

impl ScenarioKind {
    pub const ALL: [ScenarioKind; 8] = [
        ScenarioKind::NormalFlow,
        ScenarioKind::RearEnd,
        ScenarioKind::BreakdownShoulder,
        ScenarioKind::StandingInLane,
        ScenarioKind::Tailgate,
        ScenarioKind::LaneChangeCollision,
        ScenarioKind::Speeding,
        ScenarioKind::HardBrake,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ScenarioKind::NormalFlow => "normal_flow",
            ScenarioKind::RearEnd => "rear_end",
            ScenarioKind::BreakdownShoulder => "breakdown_shoulder",
            ScenarioKind::StandingInLane => "standing_in_lane",
            ScenarioKind::Tailgate => "tailgate",
            ScenarioKind::LaneChangeCollision => "lane_change_collision",
            ScenarioKind::Speeding => "speeding",
            ScenarioKind::HardBrake => "hard_brake",
        }
    }
}

impl fmt::Display for ScenarioKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown scenario kind `{0}`")]
pub struct UnknownScenarioKind(pub String);

impl FromStr for ScenarioKind {
    type Err = UnknownScenarioKind;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ScenarioKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| UnknownScenarioKind(s.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScenarioSpec {
    pub kind: ScenarioKind,
    pub duration_s: f64,
    pub frame_rate_hz: f64,
    /// Background vehicles visible at any one time, approximately.
    pub vehicle_count: usize,
    pub seed: u64,
    /// Standard deviation of the ground-plane position jitter.
    pub noise_sigma_m: f64,
    /// Number of cameras; each sees the full scene with its own noise.
    pub sensors: usize,
    /// Probability that a sensor misses an object in a frame.
    pub dropout: f64,
    /// Speed of the striking vehicle in collision scenarios.
    pub approach_speed_kmh: f64,
}

impl Default for ScenarioSpec {
    fn default() -> Self {
        ScenarioSpec {
            kind: ScenarioKind::NormalFlow,
            duration_s: 20.0,
            frame_rate_hz: 25.0,
            vehicle_count: 20,
            seed: 0,
            noise_sigma_m: 0.05,
            sensors: 1,
            dropout: 0.0,
            approach_speed_kmh: 180.0,
        }
    }
}

impl ScenarioSpec {
    pub fn new(kind: ScenarioKind, seed: u64) -> Self {
        ScenarioSpec {
            kind,
            seed,
            ..Default::default()
        }
    }

    pub fn frame_count(&self) -> u64 {
        (self.duration_s * self.frame_rate_hz).round() as u64
    }

    pub fn check(&self) -> Result<(), SpecError> {
        for (name, v) in [
            ("duration_s", self.duration_s),
            ("frame_rate_hz", self.frame_rate_hz),
            ("approach_speed_kmh", self.approach_speed_kmh),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(SpecError::NotPositive(name));
            }
        }
        if !(self.noise_sigma_m >= 0.0 && self.noise_sigma_m.is_finite()) {
            return Err(SpecError::NegativeNoise(self.noise_sigma_m));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(SpecError::Dropout(self.dropout));
        }
        if self.sensors == 0 {
            return Err(SpecError::NotPositive("sensors"));
        }
        if self.frame_count() == 0 {
            return Err(SpecError::NoFrames);
        }
        Ok(())
    }

    pub fn from_json(bytes: &[u8]) -> Result<Self, SpecError> {
        let spec: ScenarioSpec =
            serde_json::from_slice(bytes).map_err(|e| SpecError::Format(e.to_string()))?;
        spec.check()?;
        Ok(spec)
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SpecError {
    #[error("scenario spec is not valid JSON: {0}")]
    Format(String),
    #[error("`{0}` must be positive")]
    NotPositive(&'static str),
    #[error("noise sigma must be non-negative, got {0}")]
    NegativeNoise(f64),
    #[error("dropout must lie in [0, 1), got {0}")]
    Dropout(f64),
    #[error("duration and frame rate yield no frames")]
    NoFrames,
    #[error("lane map has no lane {0}, which this scenario needs")]
    MissingLane(i32),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthEvent {
    pub kind: EventKind,
    pub track_ids: Vec<String>,
    pub frame_span: [u64; 2],
    pub onset: [f64; 2],
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct GroundTruth {
    pub events: Vec<TruthEvent>,
}

impl GroundTruth {
    pub fn count(&self, kind: EventKind) -> usize {
        self.events.iter().filter(|e| e.kind == kind).count()
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("truth serializes");
        s.push('\n');
        s
    }

    pub fn from_json(bytes: &[u8]) -> Result<Self, serde_json::Error> {
        serde_json::from_slice(bytes)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub spec: ScenarioSpec,
    pub frames: Vec<FrameSnapshot>,
    pub truth: GroundTruth,
}

impl Scenario {
    pub fn sensor_ids(&self) -> Vec<String> {
        sensor_ids(self.spec.sensors)
    }
}

pub fn sensor_ids(n: usize) -> Vec<String> {
    (1..=n).map(|k| format!("cam_{k}")).collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct LaneChange {
    start: f64,
    duration: f64,
    to_lane: i32,
}

impl LaneChange {
    /// Lateral progress in [0, 1] and its time derivative.
    fn progress(&self, t: f64) -> (f64, f64) {
        use std::f64::consts::PI;
        if t <= self.start {
            (0.0, 0.0)
        } else if t >= self.start + self.duration {
            (1.0, 0.0)
        } else {
            let u = (t - self.start) / self.duration;
            (
                0.5 * (1.0 - (PI * u).cos()),
                0.5 * PI * (PI * u).sin() / self.duration,
            )
        }
    }
}

#[derive(Debug, Clone)]
struct Actor {
    track_id: String,
    category: Category,
    dims: [f64; 3],
    lane: i32,
    station0: f64,
    profile: SpeedProfile,
    lane_change: Option<LaneChange>,
}

#[derive(Debug, Clone, Copy)]
struct Pose {
    position: [f64; 2],
    yaw: f64,
    station: f64,
    speed: f64,
    accel: f64,
    lane: i32,
}

impl Actor {
    fn pose(&self, map: &LaneMap, t: f64) -> Option<Pose> {
        let lane = map.lane(self.lane)?;
        let ps = self.profile.sample(t);
        let s = self.station0 + ps.distance;
        if s < 0.0 || s > lane.length() {
            return None;
        }
        let base = lane.point_at(s, 0.0);
        let dir = lane.direction_at(s);
        let mut vel = [dir[0] * ps.speed, dir[1] * ps.speed];
        let mut position = base;
        let mut lane_now = self.lane;
        if let Some(lc) = self.lane_change {
            let target = map.lane(lc.to_lane)?.point_at(s, 0.0);
            let (w, dw) = lc.progress(t);
            let off = [target[0] - base[0], target[1] - base[1]];
            position = [base[0] + w * off[0], base[1] + w * off[1]];
            vel = [vel[0] + dw * off[0], vel[1] + dw * off[1]];
            if w >= 0.5 {
                lane_now = lc.to_lane;
            }
        }
        let moving = vel[0].hypot(vel[1]) > 1e-9;
        let yaw = if moving {
            vel[1].atan2(vel[0])
        } else {
            dir[1].atan2(dir[0])
        };
        Some(Pose {
            position,
            yaw,
            station: s,
            speed: ps.speed,
            accel: ps.accel,
            lane: lane_now,
        })
    }

    fn length(&self) -> f64 {
        self.dims[0]
    }
}

fn nominal_dims(category: Category) -> [f64; 3] {
    match category {
        Category::Car => [4.6, 1.9, 1.5],
        Category::Truck => [12.0, 2.5, 3.6],
        Category::Bus => [13.0, 2.55, 3.2],
        Category::Motorcycle => [2.2, 0.8, 1.4],
        Category::Bicycle => [1.8, 0.6, 1.7],
        Category::Pedestrian => [0.6, 0.6, 1.75],
    }
}

fn mass_kg(category: Category) -> f64 {
    match category {
        Category::Truck | Category::Bus => 3500.0,
        Category::Motorcycle => 250.0,
        _ => 1500.0,
    }
}

fn jittered_dims(category: Category, rng: &mut ChaCha8Rng) -> [f64; 3] {
    let d = nominal_dims(category);
    let f = rng.gen_range(0.95..1.05);
    [quantize6(d[0] * f), quantize6(d[1] * f), quantize6(d[2] * f)]
}

fn background_category(rng: &mut ChaCha8Rng) -> Category {
    let u: f64 = rng.gen();
    if u < 0.75 {
        Category::Car
    } else if u < 0.90 {
        Category::Truck
    } else if u < 0.94 {
        Category::Bus
    } else {
        Category::Motorcycle
    }
}

/// Accident known from the script: tracks and time of first contact.
#[derive(Debug, Clone)]
struct ScriptedCrash {
    striker: usize,
    struck: usize,
    contact_t: f64,
    closing_speed: f64,
    rest_t: f64,
}

struct Script {
    actors: Vec<Actor>,
    reserved: Vec<i32>,
    crashes: Vec<ScriptedCrash>,
}

fn require_lane(map: &LaneMap, id: i32) -> Result<f64, SpecError> {
    map.lane(id).map(|l| l.length()).ok_or(SpecError::MissingLane(id))
}

/// Profile of a vehicle that is hit or hits at `t` and then both share the
/// momentum-conserving speed until they brake to rest.
fn impact_profile(before: SpeedProfile, t: f64, common_speed: f64) -> SpeedProfile {
    let mut phases = before.phases().to_vec();
    phases.retain(|p| p.start < t);
    phases.push(Phase {
        start: t,
        accel: -POST_IMPACT_DECEL_MPS2,
        reset_speed: Some(common_speed),
    });
    SpeedProfile::new(before.initial_speed, phases)
}

fn scripted(spec: &ScenarioSpec, map: &LaneMap, rng: &mut ChaCha8Rng) -> Result<Script, SpecError> {
    let mut actors = Vec::new();
    let mut crashes = Vec::new();
    let mut actor = |category: Category, lane: i32, station0: f64, profile: SpeedProfile| Actor {
        track_id: String::new(),
        category,
        dims: jittered_dims(category, rng),
        lane,
        station0,
        profile,
        lane_change: None,
    };
    let dur = spec.duration_s;
    let reserved = match spec.kind {
        ScenarioKind::NormalFlow => vec![],
        ScenarioKind::RearEnd => {
            let len = require_lane(map, -1)?;
            let v = spec.approach_speed_kmh / 3.6;
            let t_c = 0.4 * dur;
            let mut van = actor(Category::Truck, -1, 0.7 * len, SpeedProfile::constant(0.0));
            let mut car = actor(Category::Car, -1, 0.0, SpeedProfile::constant(v));
            car.station0 = van.station0 - 0.5 * (van.length() + car.length()) - v * t_c;
            let (m1, m2) = (mass_kg(car.category), mass_kg(van.category));
            let common = v * m1 / (m1 + m2);
            car.profile = impact_profile(car.profile, t_c, common);
            van.profile = impact_profile(van.profile, t_c, common);
            crashes.push(ScriptedCrash {
                striker: 0,
                struck: 1,
                contact_t: t_c,
                closing_speed: v,
                rest_t: t_c + common / POST_IMPACT_DECEL_MPS2,
            });
            actors.push(car);
            actors.push(van);
            vec![-1]
        }
        ScenarioKind::BreakdownShoulder => {
            let len = require_lane(map, -6)?;
            require_lane(map, -7)?;
            let mut car = actor(
                Category::Car,
                -6,
                0.2 * len,
                SpeedProfile::constant(25.0).then(0.5, -4.0),
            );
            car.lane_change = Some(LaneChange {
                start: 0.5,
                duration: 2.5,
                to_lane: -7,
            });
            actors.push(car);
            vec![-6, -7]
        }
        ScenarioKind::StandingInLane => {
            let len = require_lane(map, -2)?;
            actors.push(actor(
                Category::Car,
                -2,
                0.3 * len,
                SpeedProfile::constant(22.0).then(0.5, -4.0),
            ));
            vec![-2]
        }
        ScenarioKind::Tailgate => {
            require_lane(map, 2)?;
            let (v_lead, v_follow, gap0, gap_end, brake) = (30.0, 33.0, 20.0, 0.5, 1.0);
            let mut lead = actor(Category::Car, 2, 0.0, SpeedProfile::constant(v_lead));
            let mut follow = actor(Category::Car, 2, 0.0, SpeedProfile::constant(v_follow));
            lead.station0 = 0.5 * (lead.length() + follow.length()) + gap0 + 1.0;
            follow.station0 = 1.0;
            // Close in, then ease off gently enough that the time to
            // collision stays under the threshold for about two seconds
            // before settling at `gap_end`.
            let dv = v_follow - v_lead;
            let t_brake = (gap0 - gap_end - dv * dv / (2.0 * brake)) / dv;
            follow.profile = SpeedProfile::constant(v_follow)
                .then(t_brake, -brake)
                .then(t_brake + dv / brake, 0.0);
            actors.push(follow);
            actors.push(lead);
            vec![2]
        }
        ScenarioKind::LaneChangeCollision => {
            require_lane(map, 2)?;
            require_lane(map, 3)?;
            let (v_lead, v_fast) = (22.0, spec.approach_speed_kmh.min(144.0) / 3.6);
            let t_c = 0.4 * dur;
            let mut lead = actor(Category::Car, 2, 0.0, SpeedProfile::constant(v_lead));
            let mut fast = actor(Category::Car, 3, 0.0, SpeedProfile::constant(v_fast));
            lead.station0 = 0.5 * (lead.length() + fast.length()) + 1.0 + (v_fast - v_lead) * t_c;
            fast.station0 = 1.0;
            fast.lane_change = Some(LaneChange {
                start: t_c - 2.0,
                duration: 1.5,
                to_lane: 2,
            });
            let common = 0.5 * (v_fast + v_lead);
            fast.profile = impact_profile(fast.profile, t_c, common);
            lead.profile = impact_profile(lead.profile, t_c, common);
            crashes.push(ScriptedCrash {
                striker: 0,
                struck: 1,
                contact_t: t_c,
                closing_speed: v_fast - v_lead,
                rest_t: t_c + common / POST_IMPACT_DECEL_MPS2,
            });
            actors.push(fast);
            actors.push(lead);
            vec![2, 3]
        }
        ScenarioKind::Speeding => {
            require_lane(map, -3)?;
            actors.push(actor(Category::Car, -3, 0.0, SpeedProfile::constant(150.0 / 3.6)));
            vec![-3]
        }
        ScenarioKind::HardBrake => {
            require_lane(map, 4)?;
            actors.push(actor(
                Category::Car,
                4,
                0.0,
                SpeedProfile::constant(30.0).then(3.0, -6.0).then(6.0, 0.0),
            ));
            vec![4]
        }
    };
    Ok(Script {
        actors,
        reserved,
        crashes,
    })
}

/// Evenly spaced constant-speed traffic on every unreserved driving lane.
fn background(
    spec: &ScenarioSpec,
    map: &LaneMap,
    reserved: &[i32],
    rng: &mut ChaCha8Rng,
) -> Vec<Actor> {
    let mut lanes: Vec<i32> = map
        .lanes
        .iter()
        .filter(|l| l.kind == LaneKind::Driving && !reserved.contains(&l.lane_id))
        .map(|l| l.lane_id)
        .collect();
    lanes.sort_unstable();
    if lanes.is_empty() || spec.vehicle_count == 0 {
        return Vec::new();
    }
    let base = spec.vehicle_count / lanes.len();
    let mut extra: Vec<i32> = lanes.clone();
    extra.shuffle(rng);
    extra.truncate(spec.vehicle_count % lanes.len());

    let mut out = Vec::new();
    for &lane_id in &lanes {
        let n = base + usize::from(extra.contains(&lane_id));
        if n == 0 {
            continue;
        }
        let lane = map.lane(lane_id).expect("listed lane exists");
        let kmh = match Direction::of_lane(lane_id) {
            Direction::North => rng.gen_range(90.0..150.0),
            Direction::South => rng.gen_range(75.0..105.0),
        };
        let v = quantize6(kmh / 3.6);
        let len = lane.length();
        let spacing = (len / n as f64).max(v * 1.0).max(25.0);
        let phase = rng.gen_range(0.0..spacing);
        let k_min = -((phase + v * spec.duration_s) / spacing).ceil() as i64;
        let k_max = ((len - phase) / spacing).floor() as i64;
        for k in k_min..=k_max {
            let s0 = phase + k as f64 * spacing;
            if s0 > len || s0 + v * spec.duration_s < 0.0 {
                continue;
            }
            let category = background_category(rng);
            out.push(Actor {
                track_id: String::new(),
                category,
                dims: jittered_dims(category, rng),
                lane: lane_id,
                station0: s0,
                profile: SpeedProfile::constant(v),
                lane_change: None,
            });
        }
    }
    out
}

/// Generates a scenario on the default highway map.
pub fn generate(spec: &ScenarioSpec) -> Result<Scenario, SpecError> {
    generate_on(spec, &LaneMap::default_highway())
}

pub fn generate_on(spec: &ScenarioSpec, map: &LaneMap) -> Result<Scenario, SpecError> {
    spec.check()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let script = scripted(spec, map, &mut rng)?;
    let mut actors = script.actors;
    actors.extend(background(spec, map, &script.reserved, &mut rng));
    for (k, a) in actors.iter_mut().enumerate() {
        a.track_id = (k + 1).to_string();
    }

    let sensors = sensor_ids(spec.sensors);
    let origin = map.default_sensor_origin();
    let noise = (spec.noise_sigma_m > 0.0)
        .then(|| Normal::new(0.0, spec.noise_sigma_m).expect("sigma checked"));
    let n_frames = spec.frame_count();
    let times: Vec<f64> = (0..n_frames)
        .map(|k| quantize6(k as f64 / spec.frame_rate_hz))
        .collect();

    let mut frames = Vec::with_capacity(n_frames as usize);
    let mut poses: Vec<Vec<Option<Pose>>> = vec![Vec::with_capacity(n_frames as usize); actors.len()];
    for (k, &t) in times.iter().enumerate() {
        let mut objects = Vec::new();
        for (a, actor) in actors.iter().enumerate() {
            let pose = actor.pose(map, t);
            poses[a].push(pose);
            let Some(p) = pose else { continue };
            for sensor in &sensors {
                if spec.dropout > 0.0 && rng.gen::<f64>() < spec.dropout {
                    continue;
                }
                let (nx, ny) = match &noise {
                    Some(d) => (d.sample(&mut rng), d.sample(&mut rng)),
                    None => (0.0, 0.0),
                };
                let (x, y) = (p.position[0] + nx, p.position[1] + ny);
                let range = (x - origin.0).hypot(y - origin.1);
                objects.push(ObjectState {
                    track_id: actor.track_id.clone(),
                    category: actor.category,
                    frame_index: k as u64,
                    timestamp: t,
                    position: [quantize6(x), quantize6(y), quantize6(0.5 * actor.dims[2])],
                    dimensions: actor.dims,
                    yaw: quantize_angle6(p.yaw),
                    sensor_id: sensor.clone(),
                    num_points: Some((20_000.0 / (1.0 + range)).round() as u64),
                    label_speed_kmh: Some(quantize6(p.speed * 3.6)),
                    speed_mps: None,
                    lane_id: None,
                });
            }
        }
        // canonical file order, so that export and parse give back the same
        objects.sort_by(|a, b| (&a.track_id, &a.sensor_id).cmp(&(&b.track_id, &b.sensor_id)));
        frames.push(FrameSnapshot {
            frame_index: k as u64,
            timestamp: t,
            objects,
        });
    }

    let truth = derive_truth(spec, map, &actors, &poses, &times, &script.crashes);
    Ok(Scenario {
        spec: spec.clone(),
        frames,
        truth,
    })
}

/// Maximal runs of `true` as inclusive index pairs.
fn runs(flags: &[bool]) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    let mut start = None;
    for (i, &f) in flags.iter().enumerate() {
        match (f, start) {
            (true, None) => start = Some(i),
            (false, Some(s)) => {
                out.push((s, i - 1));
                start = None;
            }
            _ => {}
        }
    }
    if let Some(s) = start {
        out.push((s, flags.len() - 1));
    }
    out
}

const TIME_EPS: f64 = 1e-9;

fn derive_truth(
    spec: &ScenarioSpec,
    map: &LaneMap,
    actors: &[Actor],
    poses: &[Vec<Option<Pose>>],
    times: &[f64],
    crashes: &[ScriptedCrash],
) -> GroundTruth {
    let cfg = RuleConfig::default();
    let n = times.len();
    let dt = 1.0 / spec.frame_rate_hz;
    let mut events = Vec::new();
    let onset = |a: usize, k: usize| -> [f64; 2] {
        let p = poses[a][k].expect("flagged frames are visible");
        [quantize6(p.position[0]), quantize6(p.position[1])]
    };

    for c in crashes {
        let first_t = c.contact_t - c.closing_speed / (2.0 * EMERGENCY_DECEL_MPS2);
        let first = ((first_t * spec.frame_rate_hz).ceil().max(0.0)) as usize;
        let last = ((c.rest_t * spec.frame_rate_hz).ceil() as usize).min(n - 1);
        if first > last || first >= n {
            continue;
        }
        let Some(k0) = (first..=last).find(|&k| poses[c.striker][k].is_some()) else {
            continue;
        };
        events.push(TruthEvent {
            kind: EventKind::Accident,
            track_ids: vec![actors[c.striker].track_id.clone(), actors[c.struck].track_id.clone()],
            frame_span: [first as u64, last as u64],
            onset: onset(c.striker, k0),
        });
    }

    let standing_mps = cfg.standing_speed_kmh / 3.6;
    for (a, actor) in actors.iter().enumerate() {
        let mut standing = vec![None; n];
        let mut speeding = vec![false; n];
        let mut hard = vec![false; n];
        let mut since: Option<f64> = None;
        for k in 0..n {
            let Some(p) = poses[a][k] else {
                since = None;
                continue;
            };
            let t = times[k];
            since = if p.speed < standing_mps { since.or(Some(t)) } else { None };
            if since.is_some_and(|s| t - s >= cfg.standing_duration_s - TIME_EPS) {
                standing[k] = classify_scenario(true, map.kind_of(p.lane));
            }
            if let Some(limit) = cfg.speed_limit_kmh(Direction::of_lane(p.lane)) {
                speeding[k] = p.speed * 3.6 > limit;
            }
            let dropped = k > 0
                && poses[a][k - 1].is_some_and(|q| (p.speed - q.speed) / dt <= -cfg.decel_thresh_mps2);
            hard[k] = (p.speed > 0.0 && p.accel <= -cfg.decel_thresh_mps2) || dropped;
        }
        for label in [ScenarioLabel::StandingInDrivingLane, ScenarioLabel::BreakdownShoulder] {
            let flags: Vec<bool> = standing.iter().map(|s| *s == Some(label)).collect();
            let kind = match label {
                ScenarioLabel::StandingInDrivingLane => EventKind::StandingInDrivingLane,
                ScenarioLabel::BreakdownShoulder => EventKind::BreakdownShoulder,
            };
            for (s, e) in runs(&flags) {
                events.push(single(kind, actor, s, e, onset(a, s)));
            }
        }
        for (s, e) in runs(&speeding) {
            events.push(single(EventKind::Speeding, actor, s, e, onset(a, s)));
        }
        for (s, e) in runs(&hard) {
            events.push(single(EventKind::HardDecel, actor, s, e, onset(a, s)));
        }
    }

    events.extend(tailgating_truth(actors, poses, times, &cfg));
    events.sort_by(|a, b| {
        (a.frame_span, a.kind, &a.track_ids).cmp(&(b.frame_span, b.kind, &b.track_ids))
    });
    GroundTruth { events }
}

fn single(kind: EventKind, actor: &Actor, s: usize, e: usize, onset: [f64; 2]) -> TruthEvent {
    TruthEvent {
        kind,
        track_ids: vec![actor.track_id.clone()],
        frame_span: [s as u64, e as u64],
        onset,
    }
}

/// Noise-free car-following check: closing with a short time to collision
/// but not yet inside the braking-distance margin, held for the configured
/// duration.
fn tailgating_truth(
    actors: &[Actor],
    poses: &[Vec<Option<Pose>>],
    times: &[f64],
    cfg: &RuleConfig,
) -> Vec<TruthEvent> {
    let n = times.len();
    let mut close: Vec<Vec<Option<usize>>> = vec![vec![None; n]; actors.len()];
    for k in 0..n {
        let mut by_lane: std::collections::BTreeMap<i32, Vec<usize>> = Default::default();
        for (a, p) in poses.iter().enumerate() {
            if let Some(p) = p[k] {
                by_lane.entry(p.lane).or_default().push(a);
            }
        }
        for members in by_lane.values_mut() {
            members.sort_by(|&x, &y| {
                let (sx, sy) = (poses[x][k].unwrap().station, poses[y][k].unwrap().station);
                sx.total_cmp(&sy).then(x.cmp(&y))
            });
            for w in members.windows(2) {
                let (f, l) = (w[0], w[1]);
                let (pf, pl) = (poses[f][k].unwrap(), poses[l][k].unwrap());
                if pl.station <= pf.station {
                    continue;
                }
                let gap = bumper_gap(pl.station - pf.station, actors[f].length(), actors[l].length());
                let dv_kmh = cfg.gap_rule_velocity_units.from_mps(pf.speed - pl.speed);
                let r5 = gap < (dv_kmh / 30.0).powi(2);
                if ttc(gap, pf.speed, pl.speed) <= cfg.ttc_thresh_s && !r5 {
                    close[f][k] = Some(l);
                }
            }
        }
    }
    let mut out = Vec::new();
    for (f, per_frame) in close.iter().enumerate() {
        let mut flags = vec![false; n];
        let mut since: Option<f64> = None;
        for k in 0..n {
            since = if per_frame[k].is_some() { since.or(Some(times[k])) } else { None };
            flags[k] = since.is_some_and(|s| times[k] - s >= cfg.tailgate_duration_s - TIME_EPS);
        }
        for (s, e) in runs(&flags) {
            let lead = per_frame[s].expect("flagged frames have a lead");
            let p = poses[f][s].unwrap();
            out.push(TruthEvent {
                kind: EventKind::Tailgating,
                track_ids: vec![actors[f].track_id.clone(), actors[lead].track_id.clone()],
                frame_span: [s as u64, e as u64],
                onset: [quantize6(p.position[0]), quantize6(p.position[1])],
            });
        }
    }
    out
}

/// Noise-free single-track sequence sampled from a programmed path, for
/// kinematics checks. Values are not rounded.
pub fn sample_path(
    path: &ProgrammedPath,
    frame_count: usize,
    frame_rate_hz: f64,
    track_id: &str,
) -> Vec<FrameSnapshot> {
    (0..frame_count)
        .map(|k| {
            let t = k as f64 / frame_rate_hz;
            let s = path.sample(t);
            FrameSnapshot {
                frame_index: k as u64,
                timestamp: t,
                objects: vec![ObjectState {
                    track_id: track_id.to_string(),
                    category: Category::Car,
                    frame_index: k as u64,
                    timestamp: t,
                    position: [s.position.0, s.position.1, 0.75],
                    dimensions: nominal_dims(Category::Car),
                    yaw: s.heading,
                    sensor_id: "cam_1".into(),
                    num_points: None,
                    label_speed_kmh: None,
                    speed_mps: None,
                    lane_id: None,
                }],
            }
        })
        .collect()
}

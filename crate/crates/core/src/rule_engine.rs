//! Car-following accident rules, maneuver flags and scenario labels.
//!
//! A vehicle `i` with lead vehicle `lead` is an accident candidate when all
//! six conditions hold at once:
//!
//! 1. `v_i >= v_min` (15 km/h by default),
//! 2. `v_i > v_lead`,
//! 3. `v_i >= v_j` for every same-lane vehicle `j` ahead of `i`,
//! 4. `gap` compared against `d_thresh` (`>=` by default, see [`Comparator`]),
//! 5. `gap < ((v_i - v_lead) / 30)^2` with velocities in [`VelocityUnits`],
//! 6. `ttc <= ttc_thresh`.
//!
//! Vehicles without a lead fail rules 2 to 6. Pedestrians and bicycles are
//! exempt from the rules entirely.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::category::Category;
use crate::digital_twin::{
    heading_deviation, window_acceleration, window_speed, ObjectState, Track,
};
use crate::lane_model::{Direction, LaneKind, LaneMap, LaneOccupancy, LeadOptions};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VelocityUnits {
    Kmh,
    Mps,
}

impl VelocityUnits {
    pub fn from_mps(self, v: f64) -> f64 {
        match self {
            VelocityUnits::Kmh => v * 3.6,
            VelocityUnits::Mps => v,
        }
    }
}

/// Direction of the gap/`d_thresh` comparison in rule 4.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Comparator {
    Geq,
    Leq,
}

impl Comparator {
    pub fn holds(self, lhs: f64, rhs: f64) -> bool {
        match self {
            Comparator::Geq => lhs >= rhs,
            Comparator::Leq => lhs <= rhs,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RuleConfig {
    pub v_min_mps: f64,
    pub d_thresh_m: f64,
    pub ttc_thresh_s: f64,
    pub decel_thresh_mps2: f64,
    pub heading_dev_deg: f64,
    pub heading_window_frames: usize,
    pub standing_speed_kmh: f64,
    pub standing_duration_s: f64,
    /// Displacement window used for the standing test; single-frame
    /// differences are dominated by label jitter at walking speeds.
    pub standing_speed_window_frames: usize,
    /// Window for the speed and acceleration estimates behind the speeding
    /// and hard-deceleration flags.
    pub maneuver_window_frames: usize,
    pub speed_limit_south_kmh: Option<f64>,
    pub speed_limit_north_kmh: Option<f64>,
    pub gap_rule_velocity_units: VelocityUnits,
    pub rule4_comparator: Comparator,
    pub tailgate_duration_s: f64,
    pub lead: LeadOptions,
}

impl Default for RuleConfig {
    fn default() -> Self {
        RuleConfig {
            v_min_mps: 15.0 / 3.6,
            d_thresh_m: 2.0,
            ttc_thresh_s: 1.5,
            decel_thresh_mps2: 5.0,
            heading_dev_deg: 30.0,
            heading_window_frames: 12,
            standing_speed_kmh: 2.0,
            standing_duration_s: 5.0,
            standing_speed_window_frames: 25,
            maneuver_window_frames: 25,
            speed_limit_south_kmh: Some(120.0),
            speed_limit_north_kmh: None,
            gap_rule_velocity_units: VelocityUnits::Kmh,
            rule4_comparator: Comparator::Geq,
            tailgate_duration_s: 1.0,
            lead: LeadOptions::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum RuleConfigError {
    #[error("rule config is not valid JSON: {0}")]
    Format(String),
    #[error("`{0}` must be positive")]
    NotPositive(&'static str),
}

impl RuleConfig {
    pub fn from_json(bytes: &[u8]) -> Result<Self, RuleConfigError> {
        let cfg: RuleConfig =
            serde_json::from_slice(bytes).map_err(|e| RuleConfigError::Format(e.to_string()))?;
        cfg.check()?;
        Ok(cfg)
    }

    pub fn check(&self) -> Result<(), RuleConfigError> {
        let positive = [
            ("v_min_mps", self.v_min_mps),
            ("d_thresh_m", self.d_thresh_m),
            ("ttc_thresh_s", self.ttc_thresh_s),
            ("decel_thresh_mps2", self.decel_thresh_mps2),
            ("heading_dev_deg", self.heading_dev_deg),
            ("standing_speed_kmh", self.standing_speed_kmh),
            ("standing_duration_s", self.standing_duration_s),
            ("tailgate_duration_s", self.tailgate_duration_s),
            ("speed_limit_south_kmh", self.speed_limit_south_kmh.unwrap_or(1.0)),
            ("speed_limit_north_kmh", self.speed_limit_north_kmh.unwrap_or(1.0)),
        ];
        for (name, v) in positive {
            if v.is_nan() || v <= 0.0 {
                return Err(RuleConfigError::NotPositive(name));
            }
        }
        if self.heading_window_frames == 0 {
            return Err(RuleConfigError::NotPositive("heading_window_frames"));
        }
        if self.standing_speed_window_frames == 0 {
            return Err(RuleConfigError::NotPositive("standing_speed_window_frames"));
        }
        if self.maneuver_window_frames == 0 {
            return Err(RuleConfigError::NotPositive("maneuver_window_frames"));
        }
        Ok(())
    }

    pub fn speed_limit_kmh(&self, dir: Direction) -> Option<f64> {
        match dir {
            Direction::North => self.speed_limit_north_kmh,
            Direction::South => self.speed_limit_south_kmh,
        }
    }
}

/// Time to collision under constant speeds; `+inf` when not closing.
pub fn ttc(gap_m: f64, v_follower_mps: f64, v_lead_mps: f64) -> f64 {
    if v_follower_mps > v_lead_mps {
        gap_m / (v_follower_mps - v_lead_mps)
    } else {
        f64::INFINITY
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LeadContext {
    pub track_id: String,
    pub speed_mps: f64,
    pub gap_m: f64,
}

/// Everything the rules need to know about one vehicle in one frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VehicleContext {
    pub track_id: String,
    pub category: Category,
    pub speed_mps: f64,
    pub lane_id: Option<i32>,
    pub lead: Option<LeadContext>,
    /// Speeds of all same-lane vehicles ahead, nearest first.
    pub ahead_speeds: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ManeuverFlags {
    pub hard_decel: bool,
    pub heading_swerve: bool,
    pub standing: bool,
    pub speeding: bool,
    pub tailgating: bool,
}

impl ManeuverFlags {
    pub fn any(&self) -> bool {
        self.hard_decel || self.heading_swerve || self.standing || self.speeding || self.tailgating
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct RuleVector {
    pub r1: bool,
    pub r2: bool,
    pub r3: bool,
    pub r4: bool,
    pub r5: bool,
    pub r6: bool,
    pub accident_candidate: bool,
    pub maneuvers: ManeuverFlags,
}

impl RuleVector {
    pub fn rules(&self) -> [bool; 6] {
        [self.r1, self.r2, self.r3, self.r4, self.r5, self.r6]
    }
}

/// Rules for one vehicle. Maneuver flags are left unset; they come from
/// [`classify_maneuvers`].
pub fn evaluate_vehicle(ctx: &VehicleContext, cfg: &RuleConfig) -> RuleVector {
    let exempt = cfg.lead.vehicles_only && !ctx.category.is_vehicle();
    if exempt {
        return RuleVector::default();
    }
    let v = ctx.speed_mps;
    let r1 = v >= cfg.v_min_mps;
    let Some(lead) = &ctx.lead else {
        return RuleVector {
            r1,
            ..Default::default()
        };
    };
    let r2 = v > lead.speed_mps;
    let r3 = ctx.ahead_speeds.iter().all(|&vj| v >= vj);
    let r4 = cfg.rule4_comparator.holds(lead.gap_m, cfg.d_thresh_m);
    let dv = cfg.gap_rule_velocity_units.from_mps(v - lead.speed_mps);
    let r5 = lead.gap_m < (dv / 30.0).powi(2);
    let r6 = ttc(lead.gap_m, v, lead.speed_mps) <= cfg.ttc_thresh_s;
    RuleVector {
        r1,
        r2,
        r3,
        r4,
        r5,
        r6,
        accident_candidate: r1 && r2 && r3 && r4 && r5 && r6,
        maneuvers: ManeuverFlags::default(),
    }
}

/// Per-frame rule input for all objects of one sensor.
#[derive(Debug, Clone)]
pub struct FrameContext {
    pub vehicles: Vec<VehicleContext>,
    pub occupancy: LaneOccupancy,
}

impl FrameContext {
    /// Builds contexts from states whose `speed_mps` is already filled in.
    /// States are expected to come from a single sensor.
    pub fn build(objects: &[&ObjectState], map: &LaneMap, cfg: &RuleConfig) -> Self {
        let occupancy = LaneOccupancy::build(objects, map, cfg.lead);
        let speed = |i: usize| objects[i].speed_mps.unwrap_or(0.0);
        let vehicles = objects
            .iter()
            .enumerate()
            .map(|(i, o)| {
                let ahead = occupancy.ahead_of(i);
                let lead = occupancy.lead_of(objects, i).map(|(l, gap)| LeadContext {
                    track_id: objects[l].track_id.clone(),
                    speed_mps: speed(l),
                    gap_m: gap,
                });
                VehicleContext {
                    track_id: o.track_id.clone(),
                    category: o.category,
                    speed_mps: speed(i),
                    lane_id: occupancy.positions[i].map(|p| p.lane_id),
                    lead,
                    ahead_speeds: ahead.iter().map(|&j| speed(j)).collect(),
                }
            })
            .collect();
        FrameContext {
            vehicles,
            occupancy,
        }
    }
}

pub fn evaluate_rules(frame: &FrameContext, cfg: &RuleConfig) -> BTreeMap<String, RuleVector> {
    frame
        .vehicles
        .iter()
        .map(|v| (v.track_id.clone(), evaluate_vehicle(v, cfg)))
        .collect()
}

// absorbs rounding in timestamp differences such as 1.4 - 0.4
const TIME_EPS: f64 = 1e-9;

/// Per-state inputs for maneuver classification besides the track itself.
/// `ttc_s` and `r5` may be empty when no lead information exists.
#[derive(Debug, Clone, Copy)]
pub struct ManeuverInput<'a> {
    pub track: &'a Track,
    pub lane_ids: &'a [Option<i32>],
    pub ttc_s: &'a [f64],
    pub r5: &'a [bool],
}

/// Per-state maneuver flags for one track.
///
/// `standing` and `tailgating` need their condition to hold continuously;
/// they switch on once the run has lasted the configured duration. The
/// swerve test is only applied while the vehicle moves at least `v_min`,
/// since a motion heading is meaningless at rest.
pub fn classify_maneuvers(input: ManeuverInput<'_>, cfg: &RuleConfig) -> Vec<ManeuverFlags> {
    let track = input.track;
    let n = track.len();
    let mut out = vec![ManeuverFlags::default(); n];
    if n == 0 {
        return out;
    }
    let standing_half = (cfg.standing_speed_window_frames / 2).max(1);
    let standing_mps = cfg.standing_speed_kmh / 3.6;
    let maneuver_half = (cfg.maneuver_window_frames / 2).max(1);
    let mut standing_since: Option<f64> = None;
    let mut tailgate_since: Option<f64> = None;

    for (i, flags) in out.iter_mut().enumerate() {
        let t = track.states[i].timestamp;
        let v = track.speed[i];

        flags.hard_decel = window_acceleration(track, i, maneuver_half)
            .is_ok_and(|a| a <= -cfg.decel_thresh_mps2);

        let w = cfg.heading_window_frames;
        if i >= w && v >= cfg.v_min_mps && track.speed[i - w] >= cfg.v_min_mps {
            if let Ok(dev) = heading_deviation(track, i, w) {
                flags.heading_swerve = dev > cfg.heading_dev_deg;
            }
        }

        let slow = match window_speed(track, i, standing_half) {
            Ok(ws) => ws < standing_mps,
            Err(_) => false,
        };
        standing_since = if slow { standing_since.or(Some(t)) } else { None };
        flags.standing = standing_since.is_some_and(|s| t - s >= cfg.standing_duration_s - TIME_EPS);

        let lane = input.lane_ids.get(i).copied().flatten();
        if let Some(limit) = lane.and_then(|l| cfg.speed_limit_kmh(Direction::of_lane(l))) {
            let vs = window_speed(track, i, maneuver_half).unwrap_or(v);
            flags.speeding = vs * 3.6 > limit;
        }

        let close = input.ttc_s.get(i).is_some_and(|&x| x <= cfg.ttc_thresh_s)
            && !input.r5.get(i).copied().unwrap_or(false);
        tailgate_since = if close { tailgate_since.or(Some(t)) } else { None };
        flags.tailgating = tailgate_since.is_some_and(|s| t - s >= cfg.tailgate_duration_s - TIME_EPS);
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScenarioLabel {
    StandingInDrivingLane,
    BreakdownShoulder,
}

/// Exit lanes count as driving lanes; off-road vehicles get no label.
pub fn classify_scenario(standing: bool, lane_kind: Option<LaneKind>) -> Option<ScenarioLabel> {
    if !standing {
        return None;
    }
    match lane_kind? {
        LaneKind::Driving | LaneKind::Exit => Some(ScenarioLabel::StandingInDrivingLane),
        LaneKind::Shoulder => Some(ScenarioLabel::BreakdownShoulder),
    }
}

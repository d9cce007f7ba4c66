//! Lane geometry, lane assignment and lead-vehicle search.
//!
//! Lane IDs are signed: positive lanes carry northbound traffic, negative
//! lanes southbound. In the default map `|id| = 1` is the lane next to the
//! median and `|id| = 6` the outermost driving lane; `|id| = 7` is the hard
//! shoulder. Every centerline is ordered along its travel direction, so the
//! arc-length station grows in the direction of travel.

use std::collections::{BTreeMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::digital_twin::{FrameSnapshot, ObjectState};

pub const DEFAULT_LANE_WIDTH_M: f64 = 3.5;
pub const DEFAULT_SHOULDER_WIDTH_M: f64 = 3.0;
pub const DEFAULT_LENGTH_M: f64 = 1000.0;
pub const DEFAULT_MEDIAN_M: f64 = 2.0;
pub const DEFAULT_SLACK_M: f64 = 0.3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LaneKind {
    Driving,
    Shoulder,
    Exit,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    North,
    South,
}

impl Direction {
    pub fn of_lane(lane_id: i32) -> Direction {
        if lane_id > 0 {
            Direction::North
        } else {
            Direction::South
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Lane {
    #[serde(rename = "id")]
    pub lane_id: i32,
    pub kind: LaneKind,
    pub width: f64,
    /// Polyline in travel order.
    pub centerline: Vec<[f64; 2]>,
    #[serde(skip)]
    cumulative: Vec<f64>,
}

impl Lane {
    pub fn new(lane_id: i32, kind: LaneKind, width: f64, centerline: Vec<[f64; 2]>) -> Self {
        let mut lane = Lane {
            lane_id,
            kind,
            width,
            centerline,
            cumulative: Vec::new(),
        };
        lane.index();
        lane
    }

    fn index(&mut self) {
        let mut acc = 0.0;
        self.cumulative = std::iter::once(0.0)
            .chain(self.centerline.windows(2).map(|w| {
                acc += seg_len(w[0], w[1]);
                acc
            }))
            .collect();
    }

    pub fn direction(&self) -> Direction {
        Direction::of_lane(self.lane_id)
    }

    pub fn length(&self) -> f64 {
        self.cumulative.last().copied().unwrap_or(0.0)
    }

    /// Unit travel direction of each polyline segment.
    pub fn travel_directions(&self) -> Vec<[f64; 2]> {
        self.centerline
            .windows(2)
            .map(|w| {
                let l = seg_len(w[0], w[1]);
                [(w[1][0] - w[0][0]) / l, (w[1][1] - w[0][1]) / l]
            })
            .collect()
    }

    /// Point on the centerline at `station` metres from its start, shifted
    /// by `lateral` metres to the left of the travel direction.
    pub fn point_at(&self, station: f64, lateral: f64) -> [f64; 2] {
        let n = self.centerline.len();
        let seg = match self.cumulative.iter().position(|&c| c > station) {
            Some(0) => 0,
            Some(k) => k - 1,
            None => n - 2,
        };
        let (a, b) = (self.centerline[seg], self.centerline[seg + 1]);
        let l = seg_len(a, b);
        let (ux, uy) = ((b[0] - a[0]) / l, (b[1] - a[1]) / l);
        let along = station - self.cumulative[seg];
        [
            a[0] + ux * along - uy * lateral,
            a[1] + uy * along + ux * lateral,
        ]
    }

    /// Unit travel direction at `station`.
    pub fn direction_at(&self, station: f64) -> [f64; 2] {
        let seg = match self.cumulative.iter().position(|&c| c > station) {
            Some(0) => 0,
            Some(k) => k - 1,
            None => self.centerline.len() - 2,
        };
        let (a, b) = (self.centerline[seg], self.centerline[seg + 1]);
        let l = seg_len(a, b);
        [(b[0] - a[0]) / l, (b[1] - a[1]) / l]
    }

    /// Nearest-point projection onto the centerline.
    pub fn project(&self, p: (f64, f64)) -> Projection {
        let mut best = Projection {
            distance: f64::INFINITY,
            station: 0.0,
            lateral: 0.0,
        };
        for (k, w) in self.centerline.windows(2).enumerate() {
            let (a, b) = (w[0], w[1]);
            let l = seg_len(a, b);
            let (ux, uy) = ((b[0] - a[0]) / l, (b[1] - a[1]) / l);
            let (rx, ry) = (p.0 - a[0], p.1 - a[1]);
            let along = (rx * ux + ry * uy).clamp(0.0, l);
            let (cx, cy) = (a[0] + ux * along, a[1] + uy * along);
            let (dx, dy) = (p.0 - cx, p.1 - cy);
            let d = (dx * dx + dy * dy).sqrt();
            if d < best.distance {
                best = Projection {
                    distance: d,
                    station: self.cumulative[k] + along,
                    lateral: ux * ry - uy * rx,
                };
            }
        }
        best
    }
}

fn seg_len(a: [f64; 2], b: [f64; 2]) -> f64 {
    let (dx, dy) = (b[0] - a[0], b[1] - a[1]);
    (dx * dx + dy * dy).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Projection {
    /// Distance to the nearest centerline point.
    pub distance: f64,
    /// Arc length along the centerline, in travel direction.
    pub station: f64,
    /// Signed offset, positive to the left of travel.
    pub lateral: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LanePosition {
    pub lane_id: i32,
    pub kind: LaneKind,
    pub station: f64,
    pub lateral: f64,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum LaneMapError {
    #[error("lane map is not valid JSON: {0}")]
    Format(String),
    #[error("lane id 0 is reserved")]
    ZeroId,
    #[error("duplicate lane id {0}")]
    DuplicateId(i32),
    #[error("lane {0} has non-positive width")]
    BadWidth(i32),
    #[error("lane {0} needs at least two distinct centerline points")]
    BadCenterline(i32),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LaneMap {
    pub lanes: Vec<Lane>,
    /// Extra lateral tolerance beyond half the lane width.
    #[serde(default = "default_slack")]
    pub slack_m: f64,
}

fn default_slack() -> f64 {
    DEFAULT_SLACK_M
}

impl Default for LaneMap {
    fn default() -> Self {
        LaneMap::default_highway()
    }
}

impl LaneMap {
    pub fn new(lanes: Vec<Lane>) -> Result<Self, LaneMapError> {
        let map = LaneMap {
            lanes,
            slack_m: DEFAULT_SLACK_M,
        };
        map.check()?;
        Ok(map)
    }

    /// Straight 1 km dual carriageway: six driving lanes per direction plus
    /// a shoulder on each side, northbound travelling towards +x.
    pub fn default_highway() -> Self {
        let half_median = DEFAULT_MEDIAN_M / 2.0;
        let mut lanes = Vec::new();
        for k in 1..=7 {
            let (kind, width, offset) = if k <= 6 {
                (
                    LaneKind::Driving,
                    DEFAULT_LANE_WIDTH_M,
                    half_median + (k as f64 - 0.5) * DEFAULT_LANE_WIDTH_M,
                )
            } else {
                (
                    LaneKind::Shoulder,
                    DEFAULT_SHOULDER_WIDTH_M,
                    half_median + 6.0 * DEFAULT_LANE_WIDTH_M + DEFAULT_SHOULDER_WIDTH_M / 2.0,
                )
            };
            lanes.push(Lane::new(
                k,
                kind,
                width,
                vec![[0.0, -offset], [DEFAULT_LENGTH_M, -offset]],
            ));
            lanes.push(Lane::new(
                -k,
                kind,
                width,
                vec![[DEFAULT_LENGTH_M, offset], [0.0, offset]],
            ));
        }
        lanes.sort_by_key(|l| l.lane_id);
        LaneMap {
            lanes,
            slack_m: DEFAULT_SLACK_M,
        }
    }

    pub fn from_json(bytes: &[u8]) -> Result<Self, LaneMapError> {
        let mut map: LaneMap =
            serde_json::from_slice(bytes).map_err(|e| LaneMapError::Format(e.to_string()))?;
        for lane in &mut map.lanes {
            lane.index();
        }
        map.check()?;
        Ok(map)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("lane map serializes") + "\n"
    }

    fn check(&self) -> Result<(), LaneMapError> {
        let mut ids = HashSet::new();
        for lane in &self.lanes {
            if lane.lane_id == 0 {
                return Err(LaneMapError::ZeroId);
            }
            if !ids.insert(lane.lane_id) {
                return Err(LaneMapError::DuplicateId(lane.lane_id));
            }
            if lane.width.is_nan() || lane.width <= 0.0 {
                return Err(LaneMapError::BadWidth(lane.lane_id));
            }
            if lane.centerline.len() < 2
                || lane.centerline.windows(2).any(|w| seg_len(w[0], w[1]) == 0.0)
            {
                return Err(LaneMapError::BadCenterline(lane.lane_id));
            }
        }
        Ok(())
    }

    pub fn lane(&self, lane_id: i32) -> Option<&Lane> {
        self.lanes.iter().find(|l| l.lane_id == lane_id)
    }

    pub fn kind_of(&self, lane_id: i32) -> Option<LaneKind> {
        self.lane(lane_id).map(|l| l.kind)
    }

    /// Axis-aligned bounds `(min_x, min_y, max_x, max_y)` of all centerlines.
    pub fn extent(&self) -> (f64, f64, f64, f64) {
        let mut b = (f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY);
        for p in self.lanes.iter().flat_map(|l| &l.centerline) {
            b.0 = b.0.min(p[0]);
            b.1 = b.1.min(p[1]);
            b.2 = b.2.max(p[0]);
            b.3 = b.3.max(p[1]);
        }
        b
    }

    /// Middle of the low-x edge of the extent.
    pub fn default_sensor_origin(&self) -> (f64, f64) {
        let (x0, y0, _, y1) = self.extent();
        (x0, 0.5 * (y0 + y1))
    }

    pub fn translated(&self, dx: f64, dy: f64) -> LaneMap {
        self.mapped(|p| [p[0] + dx, p[1] + dy])
    }

    /// Rotated by `theta` radians about the origin.
    pub fn rotated(&self, theta: f64) -> LaneMap {
        let (s, c) = theta.sin_cos();
        self.mapped(|p| [c * p[0] - s * p[1], s * p[0] + c * p[1]])
    }

    fn mapped(&self, f: impl Fn([f64; 2]) -> [f64; 2]) -> LaneMap {
        LaneMap {
            lanes: self
                .lanes
                .iter()
                .map(|l| Lane::new(l.lane_id, l.kind, l.width, l.centerline.iter().map(|&p| f(p)).collect()))
                .collect(),
            slack_m: self.slack_m,
        }
    }

    /// Lane whose centerline is nearest, provided the point lies within
    /// half the lane width plus slack. Exact ties go to the smaller `|id|`.
    pub fn locate(&self, p: (f64, f64)) -> Option<LanePosition> {
        let mut best: Option<(f64, &Lane, Projection)> = None;
        for lane in &self.lanes {
            let proj = lane.project(p);
            if proj.distance > lane.width / 2.0 + self.slack_m {
                continue;
            }
            let better = match &best {
                None => true,
                Some((d, b, _)) => {
                    proj.distance < *d
                        || (proj.distance == *d
                            && (lane.lane_id.abs(), lane.lane_id) < (b.lane_id.abs(), b.lane_id))
                }
            };
            if better {
                best = Some((proj.distance, lane, proj));
            }
        }
        best.map(|(_, lane, proj)| LanePosition {
            lane_id: lane.lane_id,
            kind: lane.kind,
            station: proj.station,
            lateral: proj.lateral,
        })
    }
}

pub fn assign_lane(position: (f64, f64), lane_map: &LaneMap) -> Option<i32> {
    lane_map.locate(position).map(|p| p.lane_id)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LeadInfo {
    pub follower_id: String,
    pub lead_id: String,
    /// Bumper-to-bumper distance, clamped at zero.
    pub gap_m: f64,
    pub lane_id: i32,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LeadOptions {
    /// Only motor vehicles can be leads or followers.
    pub vehicles_only: bool,
}

impl Default for LeadOptions {
    fn default() -> Self {
        LeadOptions { vehicles_only: true }
    }
}

/// Bumper-to-bumper gap between a follower and a vehicle ahead.
pub fn bumper_gap(station_gap: f64, follower_len: f64, lead_len: f64) -> f64 {
    (station_gap - 0.5 * (follower_len + lead_len)).max(0.0)
}

/// Lane occupancy of one frame for one sensor: objects grouped per lane and
/// sorted by station.
#[derive(Debug, Clone)]
pub struct LaneOccupancy {
    /// Per object (same order as the input slice).
    pub positions: Vec<Option<LanePosition>>,
    /// lane id -> object indices sorted by increasing station.
    pub lanes: BTreeMap<i32, Vec<usize>>,
}

impl LaneOccupancy {
    pub fn build(objects: &[&ObjectState], map: &LaneMap, opts: LeadOptions) -> Self {
        let positions: Vec<Option<LanePosition>> =
            objects.iter().map(|o| map.locate(o.ground())).collect();
        let mut lanes: BTreeMap<i32, Vec<usize>> = BTreeMap::new();
        for (i, pos) in positions.iter().enumerate() {
            if let Some(p) = pos {
                if !opts.vehicles_only || objects[i].category.is_vehicle() {
                    lanes.entry(p.lane_id).or_default().push(i);
                }
            }
        }
        for members in lanes.values_mut() {
            members.sort_by(|&a, &b| {
                let (sa, sb) = (positions[a].unwrap().station, positions[b].unwrap().station);
                sa.total_cmp(&sb).then(a.cmp(&b))
            });
        }
        LaneOccupancy { positions, lanes }
    }

    /// Object indices strictly ahead of `i` in its lane, nearest first.
    pub fn ahead_of(&self, i: usize) -> &[usize] {
        let Some(pos) = self.positions[i] else {
            return &[];
        };
        let Some(members) = self.lanes.get(&pos.lane_id) else {
            return &[];
        };
        let Some(rank) = members.iter().position(|&m| m == i) else {
            return &[];
        };
        let first_ahead = members[rank + 1..]
            .iter()
            .position(|&m| self.positions[m].unwrap().station > pos.station)
            .map_or(members.len(), |k| rank + 1 + k);
        &members[first_ahead..]
    }

    /// Nearest object ahead and the bumper gap to it.
    pub fn lead_of(&self, objects: &[&ObjectState], i: usize) -> Option<(usize, f64)> {
        let &lead = self.ahead_of(i).first()?;
        let ds = self.positions[lead].unwrap().station - self.positions[i].unwrap().station;
        Some((lead, bumper_gap(ds, objects[i].length(), objects[lead].length())))
    }
}

/// Lead vehicle of `follower_id` in `frame`. When several sensors report
/// the follower, the first occurrence decides which sensor's view is used.
pub fn find_lead(
    frame: &FrameSnapshot,
    follower_id: &str,
    lane_map: &LaneMap,
    opts: LeadOptions,
) -> Option<LeadInfo> {
    let follower = frame.objects.iter().find(|o| o.track_id == follower_id)?;
    let objects: Vec<&ObjectState> = frame
        .objects
        .iter()
        .filter(|o| o.sensor_id == follower.sensor_id)
        .collect();
    let occ = LaneOccupancy::build(&objects, lane_map, opts);
    let i = objects.iter().position(|o| o.track_id == follower_id)?;
    let (lead, gap) = occ.lead_of(&objects, i)?;
    Some(LeadInfo {
        follower_id: follower_id.to_string(),
        lead_id: objects[lead].track_id.clone(),
        gap_m: gap,
        lane_id: occ.positions[i]?.lane_id,
    })
}

/// Symmetric matrix of ground-plane centroid distances, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceMatrix {
    n: usize,
    values: Vec<f64>,
}

impl DistanceMatrix {
    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.n + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.n..(i + 1) * self.n]
    }
}

pub fn distance_matrix(frame: &FrameSnapshot) -> DistanceMatrix {
    let pts: Vec<(f64, f64)> = frame.objects.iter().map(|o| o.ground()).collect();
    distance_matrix_of(&pts)
}

pub fn distance_matrix_of(pts: &[(f64, f64)]) -> DistanceMatrix {
    let n = pts.len();
    let mut values = vec![0.0; n * n];
    for i in 0..n {
        for j in i + 1..n {
            let dx = pts[i].0 - pts[j].0;
            let dy = pts[i].1 - pts[j].1;
            let d = (dx * dx + dy * dy).sqrt();
            values[i * n + j] = d;
            values[j * n + i] = d;
        }
    }
    DistanceMatrix { n, values }
}

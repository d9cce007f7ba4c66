//! Dataset statistics over built tracks.
//!
//! Every aggregate is kept in a form that adds up exactly: counts are
//! integers, sums of lengths and speeds are fixed-point integers and maxima
//! are plain maxima. Reports of disjoint track sets therefore merge into the
//! report of their union, independent of order.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::category::Category;
use crate::digital_twin::Track;
use crate::lane_model::{assign_lane, Direction, LaneKind, LaneMap};
use crate::rule_engine::{classify_maneuvers, ManeuverInput, RuleConfig};

/// Fixed-point scale for length and speed sums (micro-units).
const MICRO: f64 = 1e6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StatsConfig {
    pub track_length_bucket_m: f64,
    pub distance_bucket_m: f64,
    pub labels_bucket: u64,
    /// Origin for labeling distances; the lane map's default when unset.
    pub sensor_origin: Option<[f64; 2]>,
    pub rules: RuleConfig,
}

impl Default for StatsConfig {
    fn default() -> Self {
        StatsConfig {
            track_length_bucket_m: 25.0,
            distance_bucket_m: 20.0,
            labels_bucket: 5,
            sensor_origin: None,
            rules: RuleConfig::default(),
        }
    }
}

/// Fixed-width histogram starting at zero; bucket `k` holds `[k w, (k+1) w)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub bucket_width: f64,
    pub counts: Vec<u64>,
}

impl Histogram {
    pub fn new(bucket_width: f64) -> Self {
        Histogram {
            bucket_width,
            counts: Vec::new(),
        }
    }

    pub fn bucket_of(&self, value: f64) -> usize {
        (value.max(0.0) / self.bucket_width).floor() as usize
    }

    pub fn add(&mut self, value: f64) {
        let k = self.bucket_of(value);
        self.add_to_bucket(k, 1);
    }

    fn add_to_bucket(&mut self, k: usize, n: u64) {
        if self.counts.len() <= k {
            self.counts.resize(k + 1, 0);
        }
        self.counts[k] += n;
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn merge(&mut self, other: &Histogram) {
        for (k, &n) in other.counts.iter().enumerate() {
            if n > 0 {
                self.add_to_bucket(k, n);
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct SpeedAggregate {
    pub count: u64,
    /// Sum of speeds in micro-km/h.
    pub sum_micro_kmh: u128,
    pub max_kmh: f64,
}

impl SpeedAggregate {
    pub fn add(&mut self, kmh: f64) {
        self.count += 1;
        self.sum_micro_kmh += (kmh * MICRO).round() as u128;
        self.max_kmh = self.max_kmh.max(kmh);
    }

    pub fn mean_kmh(&self) -> Option<f64> {
        (self.count > 0).then(|| self.sum_micro_kmh as f64 / MICRO / self.count as f64)
    }

    pub fn merge(&mut self, o: &SpeedAggregate) {
        self.count += o.count;
        self.sum_micro_kmh += o.sum_micro_kmh;
        self.max_kmh = self.max_kmh.max(o.max_kmh);
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct DirectionStats {
    /// Vehicle tracks whose predominant lanes lie in this direction.
    pub tracks: u64,
    /// Of those, tracks whose mean speed exceeds the limit.
    pub speeding_tracks: u64,
    pub limit_kmh: Option<f64>,
    pub max_speed_kmh: f64,
}

impl DirectionStats {
    /// `None` without a limit or without tracks.
    pub fn speeding_fraction(&self) -> Option<f64> {
        self.limit_kmh?;
        (self.tracks > 0).then(|| self.speeding_tracks as f64 / self.tracks as f64)
    }

    fn merge(&mut self, o: &DirectionStats) {
        self.tracks += o.tracks;
        self.speeding_tracks += o.speeding_tracks;
        self.limit_kmh = self.limit_kmh.or(o.limit_kmh);
        self.max_speed_kmh = self.max_speed_kmh.max(o.max_speed_kmh);
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct StandingCounts {
    /// Tracks standing at some point in a driving or exit lane.
    pub driving_lane: u64,
    /// Tracks standing at some point on a shoulder.
    pub shoulder: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatsReport {
    /// Number of tracks; every tracked road user counts once per sensor.
    pub unique_vehicle_count: u64,
    pub per_class_counts: BTreeMap<Category, u64>,
    /// Labels (states) per lane; off-map labels are not counted.
    pub per_lane_counts: BTreeMap<i32, u64>,
    pub off_map_labels: u64,
    pub track_length_histogram: Histogram,
    /// Sum of path lengths in micrometres.
    pub total_track_length_um: u128,
    pub total_track_length_km: f64,
    pub labels_per_frame_histogram: Histogram,
    pub labeling_distance_histogram: Histogram,
    pub speed_stats: BTreeMap<Category, SpeedAggregate>,
    pub directions: BTreeMap<Direction, DirectionStats>,
    pub standing_counts: StandingCounts,
    /// Standing episodes of vehicles that were seen moving before.
    pub breakdown_count: u64,
    /// (sensor, frame) -> labels; the labels-per-frame histogram is built
    /// from it so that reports over shared frames merge correctly.
    #[serde(skip)]
    labels_per_frame: BTreeMap<(String, u64), u64>,
}

impl StatsReport {
    fn empty(cfg: &StatsConfig) -> Self {
        let mut directions = BTreeMap::new();
        for d in [Direction::North, Direction::South] {
            directions.insert(
                d,
                DirectionStats {
                    limit_kmh: cfg.rules.speed_limit_kmh(d),
                    ..Default::default()
                },
            );
        }
        StatsReport {
            unique_vehicle_count: 0,
            per_class_counts: BTreeMap::new(),
            per_lane_counts: BTreeMap::new(),
            off_map_labels: 0,
            track_length_histogram: Histogram::new(cfg.track_length_bucket_m),
            total_track_length_um: 0,
            total_track_length_km: 0.0,
            labels_per_frame_histogram: Histogram::new(cfg.labels_bucket as f64),
            labeling_distance_histogram: Histogram::new(cfg.distance_bucket_m),
            speed_stats: BTreeMap::new(),
            directions,
            standing_counts: StandingCounts::default(),
            breakdown_count: 0,
            labels_per_frame: BTreeMap::new(),
        }
    }

    fn finish(&mut self) {
        self.total_track_length_km = self.total_track_length_um as f64 / 1e9;
        let mut h = Histogram::new(self.labels_per_frame_histogram.bucket_width);
        for &n in self.labels_per_frame.values() {
            h.add(n as f64);
        }
        self.labels_per_frame_histogram = h;
    }

    /// Combines reports built with the same configuration.
    pub fn merge(&mut self, o: &StatsReport) {
        self.unique_vehicle_count += o.unique_vehicle_count;
        for (k, v) in &o.per_class_counts {
            *self.per_class_counts.entry(*k).or_default() += v;
        }
        for (k, v) in &o.per_lane_counts {
            *self.per_lane_counts.entry(*k).or_default() += v;
        }
        self.off_map_labels += o.off_map_labels;
        self.track_length_histogram.merge(&o.track_length_histogram);
        self.total_track_length_um += o.total_track_length_um;
        self.labeling_distance_histogram
            .merge(&o.labeling_distance_histogram);
        for (k, v) in &o.speed_stats {
            self.speed_stats.entry(*k).or_default().merge(v);
        }
        for (k, v) in &o.directions {
            self.directions.entry(*k).or_default().merge(v);
        }
        self.standing_counts.driving_lane += o.standing_counts.driving_lane;
        self.standing_counts.shoulder += o.standing_counts.shoulder;
        self.breakdown_count += o.breakdown_count;
        for (k, v) in &o.labels_per_frame {
            *self.labels_per_frame.entry(k.clone()).or_default() += v;
        }
        self.finish();
    }

    pub fn speeding_fraction(&self, d: Direction) -> Option<f64> {
        self.directions.get(&d)?.speeding_fraction()
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    /// Long-format CSV with columns `metric,key,value`. Histogram keys are
    /// the lower bucket bound.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("metric,key,value\n");
        let mut row = |m: &str, k: &str, v: String| {
            out.push_str(&format!("{m},{k},{v}\n"));
        };
        row("unique_vehicle_count", "", self.unique_vehicle_count.to_string());
        for (c, n) in &self.per_class_counts {
            row("class_count", c.as_str(), n.to_string());
        }
        for (l, n) in &self.per_lane_counts {
            row("lane_count", &l.to_string(), n.to_string());
        }
        row("off_map_labels", "", self.off_map_labels.to_string());
        row("total_track_length_km", "", format!("{:.6}", self.total_track_length_km));
        for (name, h) in [
            ("track_length_m", &self.track_length_histogram),
            ("labels_per_frame", &self.labels_per_frame_histogram),
            ("labeling_distance_m", &self.labeling_distance_histogram),
        ] {
            for (k, n) in h.counts.iter().enumerate() {
                row(name, &format!("{}", k as f64 * h.bucket_width), n.to_string());
            }
        }
        for (c, s) in &self.speed_stats {
            if let Some(mean) = s.mean_kmh() {
                row("mean_speed_kmh", c.as_str(), format!("{mean:.6}"));
            }
            row("max_speed_kmh", c.as_str(), format!("{:.6}", s.max_kmh));
        }
        for (d, s) in &self.directions {
            let name = match d {
                Direction::North => "north",
                Direction::South => "south",
            };
            row("direction_tracks", name, s.tracks.to_string());
            row("direction_max_speed_kmh", name, format!("{:.6}", s.max_speed_kmh));
            if let Some(f) = s.speeding_fraction() {
                row("speeding_fraction", name, format!("{f:.6}"));
            }
        }
        row("standing_driving_lane", "", self.standing_counts.driving_lane.to_string());
        row("standing_shoulder", "", self.standing_counts.shoulder.to_string());
        row("breakdown_count", "", self.breakdown_count.to_string());
        out
    }
}

pub fn compute_stats<'a, I>(tracks: I, lane_map: &LaneMap, cfg: &StatsConfig) -> StatsReport
where
    I: IntoIterator<Item = &'a Track>,
{
    let origin = cfg
        .sensor_origin
        .unwrap_or_else(|| {
            let o = lane_map.default_sensor_origin();
            [o.0, o.1]
        });
    let mut r = StatsReport::empty(cfg);
    for t in tracks {
        add_track(&mut r, t, lane_map, origin, cfg);
    }
    r.finish();
    r
}

fn add_track(r: &mut StatsReport, t: &Track, map: &LaneMap, origin: [f64; 2], cfg: &StatsConfig) {
    if t.is_empty() {
        return;
    }
    r.unique_vehicle_count += 1;
    *r.per_class_counts.entry(t.category()).or_default() += 1;
    let length = t.path_length();
    r.track_length_histogram.add(length);
    r.total_track_length_um += (length * MICRO).round() as u128;

    let lanes: Vec<Option<i32>> = t.states.iter().map(|s| assign_lane(s.ground(), map)).collect();
    let (mut north, mut south) = (0u64, 0u64);
    let mut speeds = SpeedAggregate::default();
    let mut dir_max: BTreeMap<Direction, f64> = BTreeMap::new();
    for (i, s) in t.states.iter().enumerate() {
        *r.labels_per_frame
            .entry((s.sensor_id.clone(), s.frame_index))
            .or_default() += 1;
        let (x, y) = s.ground();
        r.labeling_distance_histogram
            .add((x - origin[0]).hypot(y - origin[1]));
        let kmh = t.speed.get(i).copied().unwrap_or(0.0) * 3.6;
        speeds.add(kmh);
        match lanes[i] {
            Some(l) => {
                *r.per_lane_counts.entry(l).or_default() += 1;
                let d = Direction::of_lane(l);
                match d {
                    Direction::North => north += 1,
                    Direction::South => south += 1,
                }
                let m = dir_max.entry(d).or_insert(0.0);
                *m = m.max(kmh);
            }
            None => r.off_map_labels += 1,
        }
    }
    r.speed_stats.entry(t.category()).or_default().merge(&speeds);
    for (d, m) in dir_max {
        let e = r.directions.entry(d).or_default();
        e.max_speed_kmh = e.max_speed_kmh.max(m);
    }

    if !t.category().is_vehicle() {
        return;
    }
    if north + south > 0 {
        let d = if north > south {
            Direction::North
        } else {
            Direction::South
        };
        let e = r.directions.entry(d).or_default();
        e.tracks += 1;
        let mean = speeds.mean_kmh().unwrap_or(0.0);
        if e.limit_kmh.is_some_and(|lim| mean > lim) {
            e.speeding_tracks += 1;
        }
    }

    let flags = classify_maneuvers(
        ManeuverInput {
            track: t,
            lane_ids: &lanes,
            ttc_s: &[],
            r5: &[],
        },
        &cfg.rules,
    );
    let mut kinds = BTreeSet::new();
    let mut moved = false;
    let mut prev_standing = false;
    for (i, f) in flags.iter().enumerate() {
        if t.speed[i] >= cfg.rules.v_min_mps {
            moved = true;
        }
        if f.standing {
            if let Some(k) = lanes[i].and_then(|l| map.kind_of(l)) {
                kinds.insert(k);
            }
            if !prev_standing && moved {
                r.breakdown_count += 1;
            }
        }
        prev_standing = f.standing;
    }
    if kinds.contains(&LaneKind::Shoulder) {
        r.standing_counts.shoulder += 1;
    }
    if kinds.contains(&LaneKind::Driving) || kinds.contains(&LaneKind::Exit) {
        r.standing_counts.driving_lane += 1;
    }
}

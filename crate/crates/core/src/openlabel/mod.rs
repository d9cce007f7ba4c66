//! OpenLABEL-subset annotation files.
//!
//! Document layout (UTF-8 JSON):
//!
//! ```text
//! {
//!   "openlabel": {
//!     "metadata": { "schema_version": "1.0.0", "coordinate_system": "road" },
//!     "frames": {
//!       "<frame index>": {
//!         "timestamp": <seconds>,
//!         "objects": {
//!           "<track id>": {
//!             "category": "car" | "truck" | "bus" | "motorcycle" | "bicycle" | "pedestrian",
//!             "cuboid": [x, y, z, length, width, height, yaw],
//!             "box2d": [u, v, w, h],                       // optional
//!             "attributes": {
//!               "sensor_id": "<string>",
//!               "speed_kmh": <number>,                     // optional
//!               "num_points": <integer >= 0>,              // optional
//!               "track_history": [[x, y, z], ...]          // optional
//!             }
//!           }
//!         }
//!       }
//!     }
//!   }
//! }
//! ```
//!
//! Frames must appear in strictly increasing index and timestamp order.
//! Keys the schema does not know are kept in `extensions` maps and written
//! back out on serialization. The same track key may appear more than once
//! inside a frame when the entries come from different sensors.

mod node;
mod validate;

use std::collections::BTreeMap;
use std::io;

use serde::ser::{SerializeMap, SerializeSeq, Serializer};
use serde::Serialize;
use serde_json::ser::Formatter;
use serde_json::Value;

use crate::category::Category;
use crate::digital_twin::{FrameSnapshot, ObjectState};
use crate::geometry::normalize_angle;
use node::Node;

pub use validate::{validate, Finding, FindingKind, ValidationConfig, ValidationReport};

pub const SCHEMA_VERSION: &str = "1.0.0";
pub const ROAD_FRAME: &str = "road";

#[derive(Debug, thiserror::Error)]
pub enum ParseError {
    #[error("malformed document: {0}")]
    Syntax(#[from] serde_json::Error),
    #[error("schema error at `{path}`: {message}")]
    Schema { path: String, message: String },
    #[error("order error at `{path}`: {message}")]
    Order { path: String, message: String },
    #[error("category error at `{path}`: unknown class `{value}`")]
    Category { path: String, value: String },
}

impl ParseError {
    fn schema(path: &str, message: impl Into<String>) -> Self {
        ParseError::Schema {
            path: path.to_string(),
            message: message.into(),
        }
    }

    /// Dotted path of the offending field, when the error has one.
    pub fn path(&self) -> Option<&str> {
        match self {
            ParseError::Syntax(_) => None,
            ParseError::Schema { path, .. }
            | ParseError::Order { path, .. }
            | ParseError::Category { path, .. } => Some(path),
        }
    }
}

pub type Extensions = BTreeMap<String, Value>;

#[derive(Debug, Clone, PartialEq)]
pub struct Metadata {
    pub schema_version: String,
    pub coordinate_system: String,
    pub extensions: Extensions,
}

impl Default for Metadata {
    fn default() -> Self {
        Metadata {
            schema_version: SCHEMA_VERSION.to_string(),
            coordinate_system: ROAD_FRAME.to_string(),
            extensions: Extensions::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct AnnotationFile {
    pub metadata: Metadata,
    pub frames: Vec<FrameRecord>,
    /// Unknown keys inside the `openlabel` object.
    pub extensions: Extensions,
    /// Unknown keys next to `openlabel` at the document root.
    pub root_extensions: Extensions,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrameRecord {
    pub frame_index: u64,
    pub timestamp: f64,
    pub objects: Vec<ObjectAnnotation>,
    pub extensions: Extensions,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Cuboid {
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub length: f64,
    pub width: f64,
    pub height: f64,
    pub yaw: f64,
}

impl Cuboid {
    fn to_array(self) -> [f64; 7] {
        [
            self.x,
            self.y,
            self.z,
            self.length,
            self.width,
            self.height,
            self.yaw,
        ]
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Box2d {
    pub u: f64,
    pub v: f64,
    pub w: f64,
    pub h: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Attributes {
    pub sensor_id: String,
    pub speed_kmh: Option<f64>,
    pub num_points: Option<u64>,
    pub track_history: Option<Vec<[f64; 3]>>,
    pub extensions: Extensions,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ObjectAnnotation {
    pub track_id: String,
    pub category: Category,
    pub cuboid: Cuboid,
    pub box2d: Option<Box2d>,
    pub attributes: Attributes,
    pub extensions: Extensions,
}

// ---------------------------------------------------------------------------
// parsing

/// Parses and validates a document. Structural problems are errors;
/// continuity and frame-rate problems are left to [`validate`].
pub fn parse(bytes: &[u8]) -> Result<AnnotationFile, ParseError> {
    let root: Node = serde_json::from_slice(bytes)?;
    let mut root = Fields::new(root, "")?;
    let openlabel = root.require("openlabel")?;
    let root_extensions = root.into_extensions();

    let mut ol = Fields::new(openlabel, "openlabel")?;
    let metadata = match ol.take("metadata") {
        Some(node) => parse_metadata(node)?,
        None => Metadata::default(),
    };
    let frames_node = ol.require("frames")?;
    let extensions = ol.into_extensions();

    let frames_path = "openlabel.frames";
    let Node::Object(entries) = frames_node else {
        return Err(ParseError::schema(
            frames_path,
            format!("expected object, found {}", frames_node.type_name()),
        ));
    };

    let mut frames: Vec<FrameRecord> = Vec::with_capacity(entries.len());
    for (key, node) in entries {
        let path = format!("{frames_path}.{key}");
        let frame_index: u64 = key
            .parse()
            .map_err(|_| ParseError::schema(&path, "frame key must be a non-negative integer"))?;
        let frame = parse_frame(frame_index, node, &path)?;
        if let Some(prev) = frames.last() {
            if frame.frame_index <= prev.frame_index {
                return Err(ParseError::Order {
                    path,
                    message: format!(
                        "frame index {} follows {}",
                        frame.frame_index, prev.frame_index
                    ),
                });
            }
            if frame.timestamp <= prev.timestamp {
                return Err(ParseError::Order {
                    path: format!("{path}.timestamp"),
                    message: format!(
                        "timestamp {} does not exceed previous {}",
                        frame.timestamp, prev.timestamp
                    ),
                });
            }
        }
        frames.push(frame);
    }

    Ok(AnnotationFile {
        metadata,
        frames,
        extensions,
        root_extensions,
    })
}

fn parse_metadata(node: Node) -> Result<Metadata, ParseError> {
    let mut f = Fields::new(node, "openlabel.metadata")?;
    let schema_version = match f.take("schema_version") {
        Some(n) => f.string(n, "schema_version")?,
        None => SCHEMA_VERSION.to_string(),
    };
    let coordinate_system = match f.take("coordinate_system") {
        Some(n) => f.string(n, "coordinate_system")?,
        None => ROAD_FRAME.to_string(),
    };
    Ok(Metadata {
        schema_version,
        coordinate_system,
        extensions: f.into_extensions(),
    })
}

fn parse_frame(frame_index: u64, node: Node, path: &str) -> Result<FrameRecord, ParseError> {
    let mut f = Fields::new(node, path)?;
    let ts_node = f.require("timestamp")?;
    let timestamp = f.number(ts_node, "timestamp")?;
    let objects = match f.take("objects") {
        None => Vec::new(),
        Some(Node::Object(entries)) => {
            let mut out = Vec::with_capacity(entries.len());
            for (track_id, obj) in entries {
                let opath = format!("{path}.objects.{track_id}");
                out.push(parse_object(track_id, obj, &opath)?);
            }
            out
        }
        Some(other) => {
            return Err(ParseError::schema(
                &format!("{path}.objects"),
                format!("expected object, found {}", other.type_name()),
            ))
        }
    };
    Ok(FrameRecord {
        frame_index,
        timestamp,
        objects,
        extensions: f.into_extensions(),
    })
}

fn parse_object(track_id: String, node: Node, path: &str) -> Result<ObjectAnnotation, ParseError> {
    let mut f = Fields::new(node, path)?;

    let cat_node = f.require("category")?;
    let cat = f.string(cat_node, "category")?;
    let category: Category = cat.parse().map_err(|_| ParseError::Category {
        path: format!("{path}.category"),
        value: cat.clone(),
    })?;

    let cuboid_node = f.require("cuboid")?;
    let c = f.numbers::<7>(cuboid_node, "cuboid")?;
    let cuboid = Cuboid {
        x: c[0],
        y: c[1],
        z: c[2],
        length: c[3],
        width: c[4],
        height: c[5],
        yaw: c[6],
    };
    for (name, v) in [
        ("length", cuboid.length),
        ("width", cuboid.width),
        ("height", cuboid.height),
    ] {
        if v <= 0.0 {
            return Err(ParseError::schema(
                &format!("{path}.cuboid"),
                format!("{name} must be positive, got {v}"),
            ));
        }
    }

    let box2d = match f.take("box2d") {
        Some(Node::Null) | None => None,
        Some(n) => {
            let b = f.numbers::<4>(n, "box2d")?;
            Some(Box2d {
                u: b[0],
                v: b[1],
                w: b[2],
                h: b[3],
            })
        }
    };

    let attr_node = f.require("attributes")?;
    let attributes = parse_attributes(attr_node, &format!("{path}.attributes"))?;

    Ok(ObjectAnnotation {
        track_id,
        category,
        cuboid,
        box2d,
        attributes,
        extensions: f.into_extensions(),
    })
}

fn parse_attributes(node: Node, path: &str) -> Result<Attributes, ParseError> {
    let mut f = Fields::new(node, path)?;
    let sensor_node = f.require("sensor_id")?;
    let sensor_id = f.string(sensor_node, "sensor_id")?;
    let speed_kmh = match f.take("speed_kmh") {
        Some(Node::Null) | None => None,
        Some(n) => Some(f.number(n, "speed_kmh")?),
    };
    let num_points = match f.take("num_points") {
        Some(Node::Null) | None => None,
        Some(Node::Number(n)) if n.is_u64() => n.as_u64(),
        Some(other) => {
            return Err(ParseError::schema(
                &format!("{path}.num_points"),
                format!("expected non-negative integer, found {}", describe(&other)),
            ))
        }
    };
    let track_history = match f.take("track_history") {
        Some(Node::Null) | None => None,
        Some(Node::Array(items)) => {
            let mut pts = Vec::with_capacity(items.len());
            for (i, item) in items.into_iter().enumerate() {
                pts.push(f.numbers::<3>(item, &format!("track_history[{i}]"))?);
            }
            Some(pts)
        }
        Some(other) => {
            return Err(ParseError::schema(
                &format!("{path}.track_history"),
                format!("expected array, found {}", other.type_name()),
            ))
        }
    };
    Ok(Attributes {
        sensor_id,
        speed_kmh,
        num_points,
        track_history,
        extensions: f.into_extensions(),
    })
}

fn describe(node: &Node) -> String {
    match node {
        Node::Number(n) => format!("number {n}"),
        other => other.type_name().to_string(),
    }
}

/// Field cursor over one JSON object. Known keys are taken out; whatever is
/// left becomes the extension map.
struct Fields {
    entries: Vec<(String, Node)>,
    path: String,
}

impl Fields {
    fn new(node: Node, path: &str) -> Result<Self, ParseError> {
        match node {
            Node::Object(entries) => Ok(Fields {
                entries,
                path: path.to_string(),
            }),
            other => Err(ParseError::schema(
                if path.is_empty() { "<root>" } else { path },
                format!("expected object, found {}", other.type_name()),
            )),
        }
    }

    fn child(&self, key: &str) -> String {
        if self.path.is_empty() {
            key.to_string()
        } else {
            format!("{}.{key}", self.path)
        }
    }

    fn take(&mut self, key: &str) -> Option<Node> {
        let pos = self.entries.iter().position(|(k, _)| k == key)?;
        Some(self.entries.remove(pos).1)
    }

    fn require(&mut self, key: &str) -> Result<Node, ParseError> {
        self.take(key)
            .ok_or_else(|| ParseError::schema(&self.child(key), "missing required field"))
    }

    fn string(&self, node: Node, key: &str) -> Result<String, ParseError> {
        match node {
            Node::String(s) => Ok(s),
            other => Err(ParseError::schema(
                &self.child(key),
                format!("expected string, found {}", describe(&other)),
            )),
        }
    }

    fn number(&self, node: Node, key: &str) -> Result<f64, ParseError> {
        match &node {
            Node::Number(n) => n.as_f64().ok_or_else(|| {
                ParseError::schema(&self.child(key), "number out of range")
            }),
            other => Err(ParseError::schema(
                &self.child(key),
                format!("expected number, found {}", describe(other)),
            )),
        }
    }

    fn numbers<const N: usize>(&self, node: Node, key: &str) -> Result<[f64; N], ParseError> {
        let bad = |found: String| {
            ParseError::schema(
                &self.child(key),
                format!("expected array of {N} numbers, found {found}"),
            )
        };
        let Node::Array(items) = node else {
            return Err(bad(node.type_name().to_string()));
        };
        if items.len() != N {
            return Err(bad(format!("{} elements", items.len())));
        }
        let mut out = [0.0; N];
        for (slot, item) in out.iter_mut().zip(items) {
            match item {
                Node::Number(n) => *slot = n.as_f64().ok_or_else(|| bad("huge number".into()))?,
                other => return Err(bad(format!("a {} element", other.type_name()))),
            }
        }
        Ok(out)
    }

    fn into_extensions(self) -> Extensions {
        self.entries
            .into_iter()
            .map(|(k, v)| (k, v.into_value()))
            .collect()
    }
}

// ---------------------------------------------------------------------------
// serialization

/// Writes floats with exactly six decimals; everything else as compact JSON.
struct FixedSixFormatter;

impl Formatter for FixedSixFormatter {
    fn write_f64<W: ?Sized + io::Write>(&mut self, writer: &mut W, value: f64) -> io::Result<()> {
        let s = format!("{value:.6}");
        if s == "-0.000000" {
            writer.write_all(b"0.000000")
        } else {
            writer.write_all(s.as_bytes())
        }
    }

    fn write_f32<W: ?Sized + io::Write>(&mut self, writer: &mut W, value: f32) -> io::Result<()> {
        self.write_f64(writer, f64::from(value))
    }
}

/// Canonical bytes: keys sorted, frames in index order, floats at six
/// decimals, no insignificant whitespace, trailing newline.
pub fn serialize(file: &AnnotationFile) -> Vec<u8> {
    let mut out = Vec::new();
    write_to(file, &mut out).expect("writing to a Vec cannot fail");
    out
}

pub fn write_to<W: io::Write>(file: &AnnotationFile, mut w: W) -> io::Result<()> {
    {
        let mut ser = serde_json::Serializer::with_formatter(&mut w, FixedSixFormatter);
        Doc(file)
            .serialize(&mut ser)
            .map_err(io::Error::other)?;
    }
    w.write_all(b"\n")
}

/// A value slot in a key-sorted map.
enum Slot<'a> {
    Str(&'a str),
    F64(f64),
    U64(u64),
    Floats(&'a [f64]),
    History(&'a [[f64; 3]]),
    Ext(&'a Value),
    Attributes(&'a Attributes),
    Frames(&'a [FrameRecord]),
    Objects(&'a [ObjectAnnotation]),
    Object(&'a ObjectAnnotation),
    Frame(&'a FrameRecord),
    Metadata(&'a Metadata),
    OpenLabel(&'a AnnotationFile),
}

impl Serialize for Slot<'_> {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match *self {
            Slot::Str(v) => s.serialize_str(v),
            Slot::F64(v) => s.serialize_f64(v),
            Slot::U64(v) => s.serialize_u64(v),
            Slot::Floats(v) => {
                let mut seq = s.serialize_seq(Some(v.len()))?;
                for x in v {
                    seq.serialize_element(x)?;
                }
                seq.end()
            }
            Slot::History(v) => {
                let mut seq = s.serialize_seq(Some(v.len()))?;
                for p in v {
                    seq.serialize_element(&Slot::Floats(p))?;
                }
                seq.end()
            }
            Slot::Ext(v) => v.serialize(s),
            Slot::Attributes(a) => {
                let mut m = sorted(&a.extensions);
                m.insert("sensor_id", Slot::Str(&a.sensor_id));
                if let Some(v) = a.speed_kmh {
                    m.insert("speed_kmh", Slot::F64(v));
                }
                if let Some(v) = a.num_points {
                    m.insert("num_points", Slot::U64(v));
                }
                if let Some(h) = &a.track_history {
                    m.insert("track_history", Slot::History(h));
                }
                write_map(s, m)
            }
            Slot::Frames(frames) => {
                let mut order: Vec<&FrameRecord> = frames.iter().collect();
                order.sort_by_key(|f| f.frame_index);
                let mut map = s.serialize_map(Some(order.len()))?;
                for f in order {
                    map.serialize_entry(&f.frame_index.to_string(), &Slot::Frame(f))?;
                }
                map.end()
            }
            Slot::Objects(objects) => {
                let mut order: Vec<&ObjectAnnotation> = objects.iter().collect();
                order.sort_by(|a, b| {
                    a.track_id
                        .cmp(&b.track_id)
                        .then_with(|| a.attributes.sensor_id.cmp(&b.attributes.sensor_id))
                });
                let mut map = s.serialize_map(Some(order.len()))?;
                for o in order {
                    map.serialize_entry(&o.track_id, &Slot::Object(o))?;
                }
                map.end()
            }
            Slot::Object(o) => {
                let cuboid = o.cuboid.to_array();
                let boxed = o.box2d.map(|b| [b.u, b.v, b.w, b.h]);
                let mut m = sorted(&o.extensions);
                m.insert("category", Slot::Str(o.category.as_str()));
                m.insert("attributes", Slot::Attributes(&o.attributes));
                m.insert("cuboid", Slot::Floats(&cuboid));
                if let Some(b) = &boxed {
                    m.insert("box2d", Slot::Floats(b));
                }
                write_map(s, m)
            }
            Slot::Frame(f) => {
                let mut m = sorted(&f.extensions);
                m.insert("timestamp", Slot::F64(f.timestamp));
                m.insert("objects", Slot::Objects(&f.objects));
                write_map(s, m)
            }
            Slot::Metadata(md) => {
                let mut m = sorted(&md.extensions);
                m.insert("schema_version", Slot::Str(&md.schema_version));
                m.insert("coordinate_system", Slot::Str(&md.coordinate_system));
                write_map(s, m)
            }
            Slot::OpenLabel(file) => {
                let mut m = sorted(&file.extensions);
                m.insert("metadata", Slot::Metadata(&file.metadata));
                m.insert("frames", Slot::Frames(&file.frames));
                write_map(s, m)
            }
        }
    }
}

fn sorted(ext: &Extensions) -> BTreeMap<&str, Slot<'_>> {
    ext.iter().map(|(k, v)| (k.as_str(), Slot::Ext(v))).collect()
}

fn write_map<S: Serializer>(s: S, m: BTreeMap<&str, Slot<'_>>) -> Result<S::Ok, S::Error> {
    let mut map = s.serialize_map(Some(m.len()))?;
    for (k, v) in &m {
        map.serialize_entry(k, v)?;
    }
    map.end()
}

struct Doc<'a>(&'a AnnotationFile);

impl Serialize for Doc<'_> {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        let mut m = sorted(&self.0.root_extensions);
        m.insert("openlabel", Slot::OpenLabel(self.0));
        write_map(s, m)
    }
}

// ---------------------------------------------------------------------------
// conversion to and from engine snapshots

impl ObjectAnnotation {
    pub fn to_state(&self, frame_index: u64, timestamp: f64) -> ObjectState {
        let c = &self.cuboid;
        ObjectState {
            track_id: self.track_id.clone(),
            category: self.category,
            frame_index,
            timestamp,
            position: [c.x, c.y, c.z],
            dimensions: [c.length, c.width, c.height],
            yaw: normalize_angle(c.yaw),
            sensor_id: self.attributes.sensor_id.clone(),
            num_points: self.attributes.num_points,
            label_speed_kmh: self.attributes.speed_kmh,
            speed_mps: None,
            lane_id: None,
        }
    }

    pub fn from_state(state: &ObjectState) -> Self {
        ObjectAnnotation {
            track_id: state.track_id.clone(),
            category: state.category,
            cuboid: Cuboid {
                x: state.position[0],
                y: state.position[1],
                z: state.position[2],
                length: state.dimensions[0],
                width: state.dimensions[1],
                height: state.dimensions[2],
                yaw: state.yaw,
            },
            box2d: None,
            attributes: Attributes {
                sensor_id: state.sensor_id.clone(),
                speed_kmh: state.label_speed_kmh,
                num_points: state.num_points,
                track_history: None,
                extensions: Extensions::new(),
            },
            extensions: Extensions::new(),
        }
    }
}

impl AnnotationFile {
    pub fn to_snapshots(&self) -> Vec<FrameSnapshot> {
        self.frames
            .iter()
            .map(|f| FrameSnapshot {
                frame_index: f.frame_index,
                timestamp: f.timestamp,
                objects: f
                    .objects
                    .iter()
                    .map(|o| o.to_state(f.frame_index, f.timestamp))
                    .collect(),
            })
            .collect()
    }

    pub fn from_snapshots(frames: &[FrameSnapshot]) -> Self {
        AnnotationFile {
            frames: frames
                .iter()
                .map(|f| FrameRecord {
                    frame_index: f.frame_index,
                    timestamp: f.timestamp,
                    objects: f.objects.iter().map(ObjectAnnotation::from_state).collect(),
                    extensions: Extensions::new(),
                })
                .collect(),
            ..Default::default()
        }
    }

    pub fn object_count(&self) -> usize {
        self.frames.iter().map(|f| f.objects.len()).sum()
    }
}

/// Joins per-sensor annotation files into one snapshot sequence keyed by
/// frame index. Timestamps of the first file seen for a frame win.
pub fn merge_snapshots(files: &[AnnotationFile]) -> Vec<FrameSnapshot> {
    let mut by_index: BTreeMap<u64, FrameSnapshot> = BTreeMap::new();
    for file in files {
        for snap in file.to_snapshots() {
            by_index
                .entry(snap.frame_index)
                .and_modify(|s| s.objects.extend(snap.objects.iter().cloned()))
                .or_insert(snap);
        }
    }
    by_index.into_values().collect()
}

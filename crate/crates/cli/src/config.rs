//! Config file handling. Precedence is flags, then the config file, then
//! built-in defaults.

use std::path::{Path, PathBuf};

use accid_core::event_pipeline::PipelineConfig;
use accid_core::lane_model::LaneMap;
use accid_core::openlabel::ValidationConfig;
use accid_core::reporting::StatsConfig;
use accid_core::rule_engine::RuleConfig;
use anyhow::Context;
use serde_json::Value;

use crate::{invalid, usage};

/// Every section is optional. `lanes` and `rules` may also be file paths
/// (relative to the config file) or the word `default`.
#[derive(Debug, Clone, Default)]
pub struct FileConfig {
    pub rules: Option<RuleConfig>,
    pub lanes: Option<LaneMap>,
    pub pipeline: Option<PipelineConfig>,
    pub validation: Option<ValidationConfig>,
    pub stats: Option<StatsConfig>,
    pub threads: Option<usize>,
}

#[derive(Debug, Clone)]
pub struct Effective {
    pub rules: RuleConfig,
    pub lanes: LaneMap,
    pub pipeline: PipelineConfig,
    pub validation: ValidationConfig,
    pub stats: StatsConfig,
    pub threads: Option<usize>,
}

pub fn read_file(path: &Path) -> anyhow::Result<Vec<u8>> {
    if !path.is_file() {
        return Err(usage(format!("file not found: {}", path.display())));
    }
    std::fs::read(path).with_context(|| format!("reading {}", path.display()))
}

fn section<T: serde::de::DeserializeOwned>(v: &Value, name: &str, origin: &Path) -> anyhow::Result<Option<T>> {
    match v.get(name) {
        None | Some(Value::Null) => Ok(None),
        Some(s) => serde_json::from_value(s.clone())
            .map(Some)
            .map_err(|e| invalid(format!("{}: section `{name}`: {e}", origin.display()))),
    }
}

/// Resolves `"default"`, a path string, or an inline object.
fn by_reference(v: &Value, name: &str, base: &Path) -> anyhow::Result<Option<Value>> {
    match v.get(name) {
        None | Some(Value::Null) => Ok(None),
        Some(Value::String(s)) if s == "default" => Ok(None),
        Some(Value::String(s)) => {
            let bytes = read_file(&base.join(s))?;
            let inner = serde_json::from_slice(&bytes)
                .map_err(|e| invalid(format!("{s}: {e}")))?;
            Ok(Some(inner))
        }
        Some(other) => Ok(Some(other.clone())),
    }
}

impl FileConfig {
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let bytes = read_file(path)?;
        let v: Value = serde_json::from_slice(&bytes)
            .map_err(|e| invalid(format!("{}: {e}", path.display())))?;
        if !v.is_object() {
            return Err(invalid(format!("{}: expected a JSON object", path.display())));
        }
        let base = path.parent().unwrap_or(Path::new("."));
        let rules = match by_reference(&v, "rules", base)? {
            Some(r) => Some(parse_rules(&serde_json::to_vec(&r)?, path)?),
            None => None,
        };
        let lanes = match by_reference(&v, "lanes", base)? {
            Some(l) => Some(parse_lanes(&serde_json::to_vec(&l)?, path)?),
            None => None,
        };
        let threads = match v.get("threads") {
            None | Some(Value::Null) => None,
            Some(t) => Some(
                t.as_u64()
                    .filter(|&n| n > 0)
                    .ok_or_else(|| invalid("`threads` must be a positive integer"))?
                    as usize,
            ),
        };
        Ok(FileConfig {
            rules,
            lanes,
            pipeline: section(&v, "pipeline", path)?,
            validation: section(&v, "validation", path)?,
            stats: section(&v, "stats", path)?,
            threads,
        })
    }
}

fn parse_rules(bytes: &[u8], origin: &Path) -> anyhow::Result<RuleConfig> {
    RuleConfig::from_json(bytes).map_err(|e| invalid(format!("{}: {e}", origin.display())))
}

fn parse_lanes(bytes: &[u8], origin: &Path) -> anyhow::Result<LaneMap> {
    LaneMap::from_json(bytes).map_err(|e| invalid(format!("{}: {e}", origin.display())))
}

/// `default` or a JSON file.
pub fn rules_arg(arg: &str) -> anyhow::Result<RuleConfig> {
    if arg == "default" {
        return Ok(RuleConfig::default());
    }
    let p = PathBuf::from(arg);
    parse_rules(&read_file(&p)?, &p)
}

/// `default` or a JSON file.
pub fn lanes_arg(arg: &str) -> anyhow::Result<LaneMap> {
    if arg == "default" {
        return Ok(LaneMap::default_highway());
    }
    let p = PathBuf::from(arg);
    parse_lanes(&read_file(&p)?, &p)
}

pub fn resolve(
    config: Option<&Path>,
    rules: Option<&str>,
    lanes: Option<&str>,
    threads: Option<usize>,
) -> anyhow::Result<Effective> {
    let file = match config {
        Some(p) => FileConfig::load(p)?,
        None => FileConfig::default(),
    };
    let rules = match rules {
        Some(r) => rules_arg(r)?,
        None => file.rules.unwrap_or_default(),
    };
    let lanes = match lanes {
        Some(l) => lanes_arg(l)?,
        None => file.lanes.unwrap_or_else(LaneMap::default_highway),
    };
    let mut stats = file.stats.unwrap_or_default();
    stats.rules = rules.clone();
    Ok(Effective {
        rules,
        lanes,
        pipeline: file.pipeline.unwrap_or_default(),
        validation: file.validation.unwrap_or_default(),
        stats,
        threads: threads.or(file.threads),
    })
}

//! Pipeline configuration files, `key=value` overrides and the table of
//! defaults.

use std::path::Path;

use serde_json::{Map, Value};
use thiserror::Error;

use crate::graph::PipelineConfig;

pub const CONFIG_SCHEMA: &str = "config/1";

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("{path}: {reason}")]
    Parse { path: String, reason: String },
    #[error("unknown config key {0:?}")]
    UnknownKey(String),
    #[error("override {0:?} is not of the form key=value")]
    BadOverride(String),
    #[error("{0}")]
    Invalid(String),
}

/// `(key, unit, meaning)` for every leaf of [`PipelineConfig`].
pub const KEYS: &[(&str, &str, &str)] = &[
    ("min_instance_points", "points", "instances with fewer labeled points are ignored"),
    ("voxel_size", "m", "per-keyframe voxel size before plane fitting"),
    ("max_range", "m", "points farther from the camera are ignored"),
    ("ransac.inlier_threshold", "m", "RANSAC inlier distance"),
    ("ransac.max_iterations", "count", "RANSAC hypothesis cap"),
    ("ransac.min_inlier_ratio", "fraction", "share of an instance the plane must explain"),
    ("ransac.rng_seed", "-", "base seed for per-instance RANSAC streams"),
    ("merge.angle", "rad", "max observation-to-entity plane angle"),
    ("merge.offset", "m", "max observation-to-entity plane distance"),
    ("merge.bbox_gap", "m", "max in-plane gap between bounding boxes"),
    ("merge.map_voxel", "m", "voxel size of accumulated entity clouds"),
    ("doors.tau_theta", "rad", "door/wall angle below which a door is closed"),
    ("doors.tau_d", "m", "door/wall offset below which a door is closed"),
    ("doors.association_radius", "m", "max door-centroid distance to its wall plane"),
    ("doors.association_max_angle", "rad", "max door/wall angle for association"),
    ("passages.d_max", "m", "keyframes farther from a wall are ignored for traversal"),
    ("passages.window", "keyframes", "at most one traversal per wall in this many keyframes"),
    ("passages.cell_size", "m", "wall raster cell size"),
    ("passages.tau_rho", "points/cell", "cells below this support are empty"),
    ("passages.min_gap_w", "m", "narrowest accepted opening"),
    ("passages.max_gap_w", "m", "widest accepted opening"),
    ("passages.min_gap_h", "m", "lowest accepted opening"),
    ("passages.max_gap_h", "m", "tallest accepted opening"),
    ("passages.door_proximity", "m", "max door distance for doorway classification"),
    ("passages.dedupe_radius", "m", "candidates closer than this on one wall are fused"),
    ("passages.default_extent", "[m, m]", "width and height of door-less traversal passages"),
    ("passages.gap_check_interval", "keyframes", "passage detection period"),
    ("passages.crossing_margin", "m", "crossings must lie this close to the mapped wall"),
    ("passages.min_gap_inliers", "points", "walls with fewer inliers skip gap analysis"),
    ("passages.enable_traversal", "bool", "run trajectory-crossing detection"),
    ("passages.enable_gap", "bool", "run wall-gap detection"),
    ("connectivity.probe_offset", "m", "probe distance on each side of a passage"),
    ("connectivity.max_seed_distance", "m", "probes farther from every room seed get no room"),
    ("prior.match_radius", "m", "max distance for matching detected and planned passages"),
    ("prior.align_tol", "m", "matched pairs farther apart are misaligned"),
];

fn leaves(prefix: &str, v: &Value, out: &mut Vec<(String, Value)>) {
    match v {
        Value::Object(m) => {
            for (k, child) in m {
                let key = if prefix.is_empty() {
                    k.clone()
                } else {
                    format!("{prefix}.{k}")
                };
                leaves(&key, child, out);
            }
        }
        _ => out.push((prefix.to_string(), v.clone())),
    }
}

/// Flattened `(key, default)` pairs of the default configuration.
pub fn default_leaves() -> Vec<(String, Value)> {
    let mut out = Vec::new();
    let v = serde_json::to_value(PipelineConfig::default()).expect("config serializes");
    leaves("", &v, &mut out);
    out
}

/// The defaults table as printed by `--help`.
pub fn defaults_table() -> String {
    let leaves = default_leaves();
    let width = KEYS.iter().map(|k| k.0.len()).max().unwrap_or(0);
    let mut out = String::from("Configuration keys (default, unit):\n");
    for (key, unit, meaning) in KEYS {
        let default = leaves
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.to_string())
            .unwrap_or_default();
        out.push_str(&format!("  {key:<width$}  {default:<20} {unit:<12} {meaning}\n"));
    }
    out
}

/// Recursively overlays `patch` onto `base`.
fn merge(base: &mut Value, patch: Value) {
    match (base, patch) {
        (Value::Object(b), Value::Object(p)) => {
            for (k, v) in p {
                match b.get_mut(&k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}

/// Applies one `key=value` override. The value is read as JSON when it
/// parses, otherwise as a string.
pub fn apply_override(config: &mut Value, assignment: &str) -> Result<(), ConfigError> {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| ConfigError::BadOverride(assignment.to_string()))?;
    let key = key.trim();
    if !KEYS.iter().any(|k| k.0 == key) {
        return Err(ConfigError::UnknownKey(key.to_string()));
    }
    let value = serde_json::from_str(raw.trim()).unwrap_or_else(|_| Value::String(raw.to_string()));
    let mut slot = config;
    for part in key.split('.') {
        slot = slot
            .as_object_mut()
            .and_then(|m| m.get_mut(part))
            .ok_or_else(|| ConfigError::UnknownKey(key.to_string()))?;
    }
    *slot = value;
    Ok(())
}

/// Defaults, overlaid with the config file (if any) and then the overrides,
/// validated.
pub fn load_config(path: Option<&Path>, overrides: &[String]) -> Result<PipelineConfig, ConfigError> {
    let mut value = serde_json::to_value(PipelineConfig::default()).expect("config serializes");
    let shown = path.map_or_else(|| "<overrides>".to_string(), |p| p.display().to_string());
    if let Some(path) = path {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: shown.clone(),
            source,
        })?;
        let mut file: Value = serde_json::from_str(&text).map_err(|e| ConfigError::Parse {
            path: shown.clone(),
            reason: e.to_string(),
        })?;
        let obj: &mut Map<String, Value> = file.as_object_mut().ok_or_else(|| ConfigError::Parse {
            path: shown.clone(),
            reason: "expected a JSON object".into(),
        })?;
        if let Some(schema) = obj.remove("schema") {
            if schema.as_str() != Some(CONFIG_SCHEMA) {
                return Err(ConfigError::Parse {
                    path: shown,
                    reason: format!("schema {schema}, expected {CONFIG_SCHEMA:?}"),
                });
            }
        }
        merge(&mut value, file);
    }
    for o in overrides {
        apply_override(&mut value, o)?;
    }
    let config: PipelineConfig = serde_json::from_value(value).map_err(|e| ConfigError::Parse {
        path: shown,
        reason: e.to_string(),
    })?;
    config.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
    Ok(config)
}

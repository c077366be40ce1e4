//! The incremental scene graph and the per-keyframe pipeline that builds it.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::bim::PriorConfig;
use crate::entities::{
    consolidate_doors, consolidate_walls, refresh_doors, update_door_map, update_wall_map, Door, DoorState, DoorThresholds,
    MergeConfig, PlaneObservation, Wall,
};
use crate::geom::{
    downsample_and_range_filter, fit_plane_ransac, Point3, PointCloud, RansacConfig,
};
use crate::ingest::{
    partition_class, KeyFrame, LabeledPointCloud, PoseSample, SemanticClass, SemanticLabel,
};
use crate::passage::{
    detect_passages, fuse_passages, passage_from_closed_door, Passage, PassageConfig,
};

pub const GRAPH_SCHEMA: &str = "sgraph/1";
pub const ROOMS_SCHEMA: &str = "rooms/1";

#[derive(Debug, Error)]
pub enum GraphError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("parse error: {0}")]
    Parse(String),
    #[error("schema {found:?}, expected {expected:?}")]
    SchemaVersionMismatch { found: String, expected: String },
    #[error("{entity} id {id} is referenced but does not exist")]
    DanglingReference { entity: &'static str, id: u32 },
    #[error("invariant violated: {0}")]
    Invariant(String),
    #[error("keyframe {id} is not after the last processed keyframe {last}")]
    OutOfOrder { id: u64, last: u64 },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}

/// A room given as free-space seed points.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RoomRegion {
    pub id: u32,
    pub label: String,
    pub seeds: Vec<Point3>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConnectivityEdge {
    pub passage_id: u32,
    /// Always the smaller of the two room ids.
    pub room_a: u32,
    pub room_b: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConnectivityConfig {
    /// Probe distance on either side of a passage (m).
    pub probe_offset: f64,
    /// A probe belongs to no room when every seed is farther (m).
    pub max_seed_distance: f64,
}

impl Default for ConnectivityConfig {
    fn default() -> Self {
        Self {
            probe_offset: 0.8,
            max_seed_distance: 4.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    /// Instances with fewer labeled points are ignored.
    pub min_instance_points: usize,
    /// Per-frame voxel size before plane fitting (m).
    pub voxel_size: f64,
    /// Points farther from the camera are ignored (m).
    pub max_range: f64,
    pub ransac: RansacConfig,
    pub merge: MergeConfig,
    pub doors: DoorThresholds,
    pub passages: PassageConfig,
    pub connectivity: ConnectivityConfig,
    pub prior: PriorConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            min_instance_points: 50,
            voxel_size: 0.05,
            max_range: 8.0,
            ransac: RansacConfig::default(),
            merge: MergeConfig::default(),
            doors: DoorThresholds::default(),
            passages: PassageConfig::default(),
            connectivity: ConnectivityConfig::default(),
            prior: PriorConfig::default(),
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<(), GraphError> {
        let bad = GraphError::InvalidConfig;
        if self.min_instance_points < 3 {
            return Err(bad("min_instance_points must be at least 3".into()));
        }
        if !(self.voxel_size > 0.0 && self.max_range > 0.0) {
            return Err(bad("voxel_size and max_range must be positive".into()));
        }
        self.ransac.validate().map_err(|e| bad(e.to_string()))?;
        let m = &self.merge;
        if !(m.angle > 0.0 && m.offset > 0.0 && m.bbox_gap >= 0.0 && m.map_voxel > 0.0) {
            return Err(bad("merge thresholds must be positive".into()));
        }
        self.doors.validate().map_err(bad)?;
        self.passages.validate().map_err(bad)?;
        let c = &self.connectivity;
        if !(c.probe_offset > 0.0 && c.max_seed_distance > 0.0) {
            return Err(bad("connectivity distances must be positive".into()));
        }
        self.prior.validate().map_err(bad)?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneGraph {
    pub schema: String,
    /// Chained SHA-256 over the processed keyframes, hex encoded.
    pub source_digest: String,
    pub config: PipelineConfig,
    pub trajectory: Vec<PoseSample>,
    pub walls: Vec<Wall>,
    pub doors: Vec<Door>,
    pub passages: Vec<Passage>,
    /// Passages instantiated at doors seen closed; kept once observed.
    pub closed_door_evidence: Vec<Passage>,
    pub rooms: Vec<RoomRegion>,
    pub edges: Vec<ConnectivityEdge>,
}

impl SceneGraph {
    pub fn new(config: PipelineConfig) -> Self {
        Self {
            schema: GRAPH_SCHEMA.to_string(),
            source_digest: String::new(),
            config,
            trajectory: Vec::new(),
            walls: Vec::new(),
            doors: Vec::new(),
            passages: Vec::new(),
            closed_door_evidence: Vec::new(),
            rooms: Vec::new(),
            edges: Vec::new(),
        }
    }

    pub fn wall(&self, id: u32) -> Option<&Wall> {
        self.walls.iter().find(|w| w.id == id)
    }

    /// Cross-references and per-entity invariants.
    pub fn check_integrity(&self) -> Result<(), GraphError> {
        fn unique<'a>(entity: &str, ids: impl Iterator<Item = &'a u32>) -> Result<BTreeSet<u32>, GraphError> {
            let mut set = BTreeSet::new();
            for id in ids {
                if !set.insert(*id) {
                    return Err(GraphError::Invariant(format!("duplicate {entity} id {id}")));
                }
            }
            Ok(set)
        }
        let walls = unique("wall", self.walls.iter().map(|w| &w.id))?;
        let doors = unique("door", self.doors.iter().map(|d| &d.id))?;
        let passages = unique("passage", self.passages.iter().map(|p| &p.id))?;
        let rooms = unique("room", self.rooms.iter().map(|r| &r.id))?;
        let need = |set: &BTreeSet<u32>, entity: &'static str, id: u32| {
            if set.contains(&id) {
                Ok(())
            } else {
                Err(GraphError::DanglingReference { entity, id })
            }
        };
        for d in &self.doors {
            if let Some(w) = d.supporting_wall {
                need(&walls, "wall", w)?;
            }
            if d.state != DoorState::Unknown && d.supporting_wall.is_none() {
                return Err(GraphError::Invariant(format!(
                    "door {} is {:?} without a supporting wall",
                    d.id, d.state
                )));
            }
        }
        for p in self.passages.iter().chain(&self.closed_door_evidence) {
            need(&walls, "wall", p.wall_id)?;
            if let Some(d) = p.associated_door {
                need(&doors, "door", d)?;
            }
            let wall = self.wall(p.wall_id).expect("checked");
            p.validate(&wall.plane).map_err(GraphError::Invariant)?;
        }
        for r in &self.rooms {
            if r.seeds.is_empty() {
                return Err(GraphError::Invariant(format!("room {} has no seed", r.id)));
            }
        }
        for e in &self.edges {
            need(&passages, "passage", e.passage_id)?;
            need(&rooms, "room", e.room_a)?;
            need(&rooms, "room", e.room_b)?;
            if e.room_a >= e.room_b {
                return Err(GraphError::Invariant(format!(
                    "edge for passage {} must have room_a < room_b",
                    e.passage_id
                )));
            }
        }
        Ok(())
    }

    /// Accumulated wall and door inliers, labeled by class and entity id.
    pub fn map_cloud(&self) -> LabeledPointCloud {
        let mut out = LabeledPointCloud::default();
        for w in &self.walls {
            for p in &w.inliers {
                out.push(*p, SemanticLabel::new(SemanticClass::Wall, w.id));
            }
        }
        for d in &self.doors {
            for p in &d.inliers {
                out.push(*p, SemanticLabel::new(SemanticClass::Door, d.id));
            }
        }
        out
    }
}

/// Room of the nearest seed within `max_dist`; ties go to the lower id.
fn room_at(p: &Point3, rooms: &[RoomRegion], max_dist: f64) -> Option<u32> {
    rooms
        .iter()
        .flat_map(|r| r.seeds.iter().map(move |s| ((s - p).norm(), r.id)))
        .filter(|(d, _)| *d <= max_dist)
        .min_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)))
        .map(|(_, id)| id)
}

/// Rooms joined by each passage, probed on both sides of its wall.
pub fn derive_connectivity(graph: &SceneGraph) -> Vec<ConnectivityEdge> {
    let cfg = &graph.config.connectivity;
    if graph.rooms.is_empty() {
        return Vec::new();
    }
    let mut edges: Vec<ConnectivityEdge> = graph
        .passages
        .iter()
        .filter_map(|p| {
            let n = graph.wall(p.wall_id)?.plane.normal().into_inner() * cfg.probe_offset;
            let a = room_at(&(p.centroid + n), &graph.rooms, cfg.max_seed_distance)?;
            let b = room_at(&(p.centroid - n), &graph.rooms, cfg.max_seed_distance)?;
            (a != b).then(|| ConnectivityEdge {
                passage_id: p.id,
                room_a: a.min(b),
                room_b: a.max(b),
            })
        })
        .collect();
    edges.sort();
    edges
}

/// A recoverable problem met while processing a keyframe.
#[derive(Debug, Clone, PartialEq)]
pub struct Warning {
    pub keyframe: u64,
    pub message: String,
}

impl fmt::Display for Warning {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "keyframe {}: {}", self.keyframe, self.message)
    }
}

/// Drives the per-keyframe pipeline over a scene graph.
#[derive(Debug, Clone)]
pub struct Pipeline {
    graph: SceneGraph,
    /// Traversal and gap candidates from the last detection pass.
    candidates: Vec<Passage>,
    processed: usize,
}

fn instance_seed(base: u64, kf: u64, class: SemanticClass, instance: u32) -> u64 {
    let mut h = Sha256::new();
    h.update(base.to_le_bytes());
    h.update(kf.to_le_bytes());
    h.update([class.id()]);
    h.update(instance.to_le_bytes());
    let d = h.finalize();
    u64::from_le_bytes(d[..8].try_into().expect("8 bytes"))
}

impl Pipeline {
    pub fn new(config: PipelineConfig) -> Result<Self, GraphError> {
        config.validate()?;
        Ok(Self {
            graph: SceneGraph::new(config),
            candidates: Vec::new(),
            processed: 0,
        })
    }

    pub fn with_rooms(mut self, rooms: Vec<RoomRegion>) -> Self {
        self.graph.rooms = rooms;
        self
    }

    pub fn graph(&self) -> &SceneGraph {
        &self.graph
    }

    /// Fits planes to every Wall and Door instance of the keyframe.
    fn observe(
        &self,
        kf: &KeyFrame,
        cloud: &LabeledPointCloud,
        class: SemanticClass,
        warnings: &mut Vec<Warning>,
    ) -> Vec<PlaneObservation> {
        let cfg = &self.graph.config;
        let center = kf.pose.center;
        let part = partition_class(cloud, class, cfg.min_instance_points);
        let fits: Vec<Result<PlaneObservation, String>> = part
            .kept
            .par_iter()
            .map(|(inst, pts)| {
                let reduced = downsample_and_range_filter(pts, cfg.voxel_size, cfg.max_range, &center);
                if reduced.len() < 3 {
                    return Err(format!("{class:?} instance {inst}: too few points in range"));
                }
                let ransac = RansacConfig {
                    rng_seed: instance_seed(cfg.ransac.rng_seed, kf.id, class, *inst),
                    ..cfg.ransac
                };
                let fit = fit_plane_ransac(&reduced, &ransac)
                    .map_err(|e| format!("{class:?} instance {inst}: {e}"))?;
                let points: PointCloud = fit.inliers.iter().map(|&i| reduced.points[i]).collect();
                Ok(PlaneObservation {
                    plane: fit.plane,
                    points,
                })
            })
            .collect();
        fits.into_iter()
            .filter_map(|r| {
                r.map_err(|message| {
                    warnings.push(Warning {
                        keyframe: kf.id,
                        message,
                    })
                })
                .ok()
            })
            .collect()
    }

    /// Integrates one keyframe. Entity-level failures become warnings.
    pub fn process_keyframe(&mut self, kf: &KeyFrame) -> Result<Vec<Warning>, GraphError> {
        if let Some(last) = self.graph.trajectory.last() {
            if kf.id <= last.id {
                return Err(GraphError::OutOfOrder {
                    id: kf.id,
                    last: last.id,
                });
            }
        }
        let mut warnings = Vec::new();
        let cloud = kf.cloud_in_map();
        let wall_obs = self.observe(kf, &cloud, SemanticClass::Wall, &mut warnings);
        let door_obs = self.observe(kf, &cloud, SemanticClass::Door, &mut warnings);

        let cfg = self.graph.config;
        for obs in &wall_obs {
            update_wall_map(&mut self.graph.walls, obs, kf.id, &cfg.merge);
        }
        for obs in &door_obs {
            update_door_map(&mut self.graph.doors, obs, kf.id, &cfg.merge);
        }
        self.consolidate();
        refresh_doors(&mut self.graph.doors, &self.graph.walls, &cfg.doors);
        self.update_closed_door_evidence(kf.id, &mut warnings);

        let mut h = Sha256::new();
        h.update(self.graph.source_digest.as_bytes());
        kf.digest_into(&mut h);
        self.graph.source_digest = hex::encode(h.finalize());
        self.graph.trajectory.push(kf.pose_sample());
        self.processed += 1;

        if self.processed % cfg.passages.gap_check_interval == 0 {
            self.detect(kf.id);
        }
        self.refuse(kf.id, &mut warnings);
        Ok(warnings)
    }

    /// Merges entities that have grown into each other and rewrites the ids
    /// held by evidence and cached candidates.
    fn consolidate(&mut self) {
        let cfg = self.graph.config.merge;
        let walls = consolidate_walls(&mut self.graph.walls, &cfg);
        let doors = consolidate_doors(&mut self.graph.doors, &cfg);
        if walls.is_empty() && doors.is_empty() {
            return;
        }
        let remap = |map: &[(u32, u32)], id: u32| map.iter().fold(id, |id, &(from, to)| if id == from { to } else { id });
        let fix = |p: &mut Passage| {
            p.wall_id = remap(&walls, p.wall_id);
            p.associated_door = p.associated_door.map(|d| remap(&doors, d));
        };
        self.candidates.iter_mut().for_each(fix);
        let mut evidence: BTreeMap<u32, Passage> = BTreeMap::new();
        for mut p in self.graph.closed_door_evidence.drain(..) {
            fix(&mut p);
            let door = p.associated_door.expect("closed-door evidence has a door");
            evidence.entry(door).or_insert(p);
        }
        self.graph.closed_door_evidence = evidence.into_values().collect();
    }

    fn update_closed_door_evidence(&mut self, kf_id: u64, warnings: &mut Vec<Warning>) {
        let mut evidence: BTreeMap<u32, Passage> = self
            .graph
            .closed_door_evidence
            .drain(..)
            .map(|p| (p.associated_door.expect("closed-door evidence has a door"), p))
            .collect();
        for door in &self.graph.doors {
            let (DoorState::Closed, Some(wid)) = (door.state, door.supporting_wall) else {
                continue;
            };
            let wall = self.graph.wall(wid).expect("associated wall exists");
            match passage_from_closed_door(door, wall) {
                Ok(p) => {
                    evidence.insert(door.id, p);
                }
                Err(e) => warnings.push(Warning {
                    keyframe: kf_id,
                    message: e.to_string(),
                }),
            }
        }
        self.graph.closed_door_evidence = evidence.into_values().collect();
    }

    fn detect(&mut self, kf_id: u64) {
        let g = &self.graph;
        let det = detect_passages(
            &g.walls,
            &g.doors,
            &g.trajectory,
            &g.closed_door_evidence,
            &g.config.passages,
        );
        for e in det.skipped {
            log::debug!("keyframe {kf_id}: gap analysis skipped: {e}");
        }
        self.candidates = det.candidates;
    }

    /// Fuses the current evidence and drops passages that violate their
    /// invariants against the current wall planes.
    fn refuse(&mut self, kf_id: u64, warnings: &mut Vec<Warning>) {
        let mut all = self.graph.closed_door_evidence.clone();
        all.extend(self.candidates.iter().cloned());
        let fused = fuse_passages(&all, &self.graph.config.passages);
        let mut kept = Vec::with_capacity(fused.len());
        for p in fused {
            let plane = self.graph.wall(p.wall_id).map(|w| w.plane);
            match plane.map(|pl| p.validate(&pl)) {
                Some(Ok(())) => kept.push(p),
                Some(Err(m)) => warnings.push(Warning {
                    keyframe: kf_id,
                    message: format!("dropped {m}"),
                }),
                None => warnings.push(Warning {
                    keyframe: kf_id,
                    message: format!("dropped passage on missing wall {}", p.wall_id),
                }),
            }
        }
        for (i, p) in kept.iter_mut().enumerate() {
            p.id = i as u32;
        }
        self.graph.passages = kept;
        self.graph.edges.clear();
    }

    /// Runs a final detection pass and derives room connectivity.
    pub fn finalize(mut self) -> (SceneGraph, Vec<Warning>) {
        let mut warnings = Vec::new();
        let last = self.graph.trajectory.last().map_or(0, |p| p.id);
        self.detect(last);
        self.refuse(last, &mut warnings);
        self.graph.edges = derive_connectivity(&self.graph);
        (self.graph, warnings)
    }

    /// Processes a whole sequence and finalizes.
    pub fn run(
        config: PipelineConfig,
        rooms: Vec<RoomRegion>,
        frames: &[KeyFrame],
    ) -> Result<(SceneGraph, Vec<Warning>), GraphError> {
        let mut p = Pipeline::new(config)?.with_rooms(rooms);
        let mut warnings = Vec::new();
        for kf in frames {
            warnings.extend(p.process_keyframe(kf)?);
        }
        let (g, w) = p.finalize();
        warnings.extend(w);
        Ok((g, warnings))
    }
}

fn check_schema(value: &serde_json::Value, expected: &str) -> Result<(), GraphError> {
    let found = value.get("schema").and_then(|s| s.as_str()).unwrap_or("");
    if found != expected {
        return Err(GraphError::SchemaVersionMismatch {
            found: found.to_string(),
            expected: expected.to_string(),
        });
    }
    Ok(())
}

pub fn save_graph(graph: &SceneGraph) -> String {
    serde_json::to_string_pretty(graph).expect("graph serializes") + "\n"
}

pub fn load_graph(text: &str) -> Result<SceneGraph, GraphError> {
    let value: serde_json::Value =
        serde_json::from_str(text).map_err(|e| GraphError::Parse(e.to_string()))?;
    check_schema(&value, GRAPH_SCHEMA)?;
    let graph: SceneGraph =
        serde_json::from_value(value).map_err(|e| GraphError::Parse(e.to_string()))?;
    graph.check_integrity()?;
    Ok(graph)
}

pub fn write_graph(path: &Path, graph: &SceneGraph) -> Result<(), GraphError> {
    std::fs::write(path, save_graph(graph)).map_err(|source| GraphError::Io {
        path: path.display().to_string(),
        source,
    })
}

pub fn read_graph(path: &Path) -> Result<SceneGraph, GraphError> {
    let text = std::fs::read_to_string(path).map_err(|source| GraphError::Io {
        path: path.display().to_string(),
        source,
    })?;
    load_graph(&text)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RoomsFile {
    pub schema: String,
    pub rooms: Vec<RoomRegion>,
}

pub fn save_rooms(rooms: &[RoomRegion]) -> String {
    let file = RoomsFile {
        schema: ROOMS_SCHEMA.to_string(),
        rooms: rooms.to_vec(),
    };
    serde_json::to_string_pretty(&file).expect("rooms serialize") + "\n"
}

pub fn load_rooms(text: &str) -> Result<Vec<RoomRegion>, GraphError> {
    let value: serde_json::Value =
        serde_json::from_str(text).map_err(|e| GraphError::Parse(e.to_string()))?;
    check_schema(&value, ROOMS_SCHEMA)?;
    let file: RoomsFile =
        serde_json::from_value(value).map_err(|e| GraphError::Parse(e.to_string()))?;
    let mut ids = BTreeSet::new();
    for r in &file.rooms {
        if r.seeds.is_empty() {
            return Err(GraphError::Invariant(format!("room {} has no seed", r.id)));
        }
        if !ids.insert(r.id) {
            return Err(GraphError::Invariant(format!("duplicate room id {}", r.id)));
        }
    }
    Ok(file.rooms)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::entities::tests::observation_x;
    use crate::entities::InPlaneBox;
    use crate::ingest::{level_camera_pose, CameraPose};
    use crate::passage::{Extent, PassageKind, Provenance};

    fn wall_at_x(id: u32, x: f64) -> Wall {
        let mut walls = Vec::new();
        update_wall_map(&mut walls, &observation_x(x, 0.0, 4.0, 2.5), 0, &MergeConfig::default());
        let mut w = walls.remove(0);
        w.id = id;
        w
    }

    fn passage_on(wall: u32, c: [f64; 3]) -> Passage {
        Passage {
            id: 0,
            wall_id: wall,
            centroid: Point3::new(c[0], c[1], c[2]),
            extent: Extent::new(0.9, 2.0),
            kind: PassageKind::Unknown,
            provenance: Provenance::Gap,
            associated_door: None,
            confidence: 0.7,
        }
    }

    fn room(id: u32, label: &str, seed: [f64; 3]) -> RoomRegion {
        RoomRegion {
            id,
            label: label.into(),
            seeds: vec![Point3::new(seed[0], seed[1], seed[2])],
        }
    }

    fn sample_graph() -> SceneGraph {
        let mut g = SceneGraph::new(PipelineConfig::default());
        g.walls = vec![wall_at_x(0, 0.0), wall_at_x(1, 5.0)];
        g.doors = vec![Door {
            id: 0,
            plane: g.walls[0].plane,
            inliers: vec![Point3::new(0.02, 1.0, 1.0)],
            support: vec![1],
            observing_keyframes: vec![0],
            bbox: InPlaneBox { across: [0.0, 0.9], up: [0.0, 2.0] },
            centroid: Point3::new(0.02, 1.0, 1.0),
            supporting_wall: Some(0),
            state: DoorState::Closed,
        }];
        let mut p = passage_on(1, [5.0, 2.0, 1.0]);
        p.id = 0;
        g.passages = vec![p];
        g.rooms = vec![room(0, "A", [2.5, 2.0, 1.0]), room(1, "B", [7.5, 2.0, 1.0])];
        g
    }

    #[test]
    fn connectivity_examples() {
        let mut g = sample_graph();
        g.rooms = vec![room(0, "A", [3.0, 2.0, 1.0]), room(1, "B", [7.0, 2.0, 1.0])];
        assert_eq!(
            derive_connectivity(&g),
            vec![ConnectivityEdge { passage_id: 0, room_a: 0, room_b: 1 }]
        );
        // exterior wall: both probes resolve to the same room, or to none
        g.passages = vec![passage_on(0, [0.0, 2.0, 1.0])];
        assert!(derive_connectivity(&g).is_empty());
        g.rooms.clear();
        assert!(derive_connectivity(&g).is_empty());
    }

    #[test]
    fn graph_round_trip() {
        let empty = SceneGraph::new(PipelineConfig::default());
        assert_eq!(load_graph(&save_graph(&empty)).unwrap(), empty);
        let mut g = sample_graph();
        g.edges = derive_connectivity(&g);
        let back = load_graph(&save_graph(&g)).unwrap();
        assert_eq!(back, g);
        assert_eq!(save_graph(&back), save_graph(&g));
    }

    #[test]
    fn dangling_and_schema_errors() {
        let mut g = sample_graph();
        g.passages[0].wall_id = 99;
        assert!(matches!(
            load_graph(&save_graph(&g)),
            Err(GraphError::DanglingReference { entity: "wall", id: 99 })
        ));
        let text = save_graph(&sample_graph()).replace("sgraph/1", "sgraph/2");
        assert!(matches!(load_graph(&text), Err(GraphError::SchemaVersionMismatch { .. })));
        let text = save_graph(&sample_graph()).replacen("{", "{\n  \"future\": 1,", 1);
        let err = load_graph(&text).unwrap_err();
        assert!(err.to_string().contains("future"), "{err}");
    }

    #[test]
    fn rooms_file_round_trip() {
        let rooms = vec![room(0, "A", [1.0, 2.0, 1.0])];
        assert_eq!(load_rooms(&save_rooms(&rooms)).unwrap(), rooms);
        assert!(load_rooms("{\"schema\":\"rooms/1\",\"rooms\":[{\"id\":0,\"label\":\"x\",\"seeds\":[]}]}").is_err());
    }

    fn frame_with_wall(id: u64) -> KeyFrame {
        // camera 2 m in front of the wall x = 0, looking along -x
        let pose = level_camera_pose(Point3::new(2.0, 0.0, 1.0), std::f64::consts::PI);
        let mut cloud = LabeledPointCloud::default();
        let mut k = 0;
        for i in 0..60 {
            for j in 0..40 {
                let p = Point3::new(0.0, -1.5 + i as f64 * 0.05 + 0.01, j as f64 * 0.05 + 0.01);
                let noise = ((k * 7919) % 13) as f64 * 1e-4;
                k += 1;
                let p = Point3::new(p.x + noise, p.y, p.z);
                cloud.push(pose.to_camera(&p), SemanticLabel::new(SemanticClass::Wall, 1));
            }
        }
        KeyFrame { id, timestamp: id as f64, pose, cloud }
    }

    #[test]
    fn one_wall_keyframe() {
        let mut p = Pipeline::new(PipelineConfig::default()).unwrap();
        let w = p.process_keyframe(&frame_with_wall(0)).unwrap();
        assert!(w.is_empty(), "{w:?}");
        assert_eq!(p.graph().walls.len(), 1);
        assert!(p.graph().passages.is_empty());
        let wall = &p.graph().walls[0];
        assert!(wall.plane.signed_distance(&Point3::origin()).abs() < 0.01);
        assert!(p.graph().check_integrity().is_ok());
    }

    #[test]
    fn empty_keyframe_only_updates_bookkeeping() {
        let mut p = Pipeline::new(PipelineConfig::default()).unwrap();
        p.process_keyframe(&frame_with_wall(0)).unwrap();
        let before = p.graph().clone();
        let empty = KeyFrame {
            id: 1,
            timestamp: 1.0,
            pose: CameraPose::new(nalgebra::Rotation3::identity(), Point3::origin()),
            cloud: LabeledPointCloud::default(),
        };
        p.process_keyframe(&empty).unwrap();
        let after = p.graph();
        assert_eq!(after.walls, before.walls);
        assert_eq!(after.doors, before.doors);
        assert_eq!(after.passages, before.passages);
        assert_eq!(after.trajectory.len(), 2);
        assert_ne!(after.source_digest, before.source_digest);
        assert!(matches!(
            p.process_keyframe(&empty),
            Err(GraphError::OutOfOrder { id: 1, last: 1 })
        ));
    }

    #[test]
    fn invalid_config_is_rejected() {
        let mut cfg = PipelineConfig::default();
        cfg.doors.tau_theta = 0.0;
        assert!(matches!(Pipeline::new(cfg), Err(GraphError::InvalidConfig(_))));
    }
}

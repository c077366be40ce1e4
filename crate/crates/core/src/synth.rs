//! Synthetic indoor scenes with ground truth, and scoring against it.
//!
//! Walls are vertical rectangles standing on a floor segment. Each keyframe
//! resamples every surface at a fixed density and keeps the points inside
//! the camera frustum. There is no occlusion between surfaces; instead,
//! objects standing against a wall (cabinets, posters) cut their footprint
//! out of the wall's samples.

use std::path::Path;

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::assign::min_cost_assignment;
use crate::entities::DoorState;
use crate::geom::{Point3, PlaneParams};
use crate::graph::{save_rooms, RoomRegion};
use crate::ingest::{
    level_camera_pose, save_sequence, CameraPose, IngestError, KeyFrame, LabeledPointCloud,
    SemanticClass, SemanticLabel,
};
use crate::passage::{Extent, Passage, PassageKind};

pub const SCENE_SCHEMA: &str = "scene/1";
pub const TRUTH_SCHEMA: &str = "truth/1";

/// Instance ids given to points whose label was flipped start here.
const NOISE_INSTANCE_BASE: u32 = 1_000_000;

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid scene: {0}")]
    InvalidSpec(String),
    #[error("{path}: {reason}")]
    Parse { path: String, reason: String },
    #[error("{path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error(transparent)]
    Ingest(#[from] IngestError),
}

fn invalid(reason: impl Into<String>) -> SynthError {
    SynthError::InvalidSpec(reason.into())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OpeningSpec {
    /// Distance from the wall start to the opening's near edge (m).
    pub offset: f64,
    pub width: f64,
    pub height: f64,
    /// Height of the opening's lower edge above the wall base (m).
    #[serde(default)]
    pub sill: f64,
    /// Truth kind; defaults to doorway when a door is mounted, else unknown.
    #[serde(default)]
    pub kind: Option<PassageKind>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WallSpec {
    pub id: u32,
    /// Floor segment `[x, y]` endpoints (m).
    pub start: [f64; 2],
    pub end: [f64; 2],
    #[serde(default)]
    pub base: f64,
    pub height: f64,
    #[serde(default)]
    pub openings: Vec<OpeningSpec>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LeafState {
    Closed,
    Open,
}

/// A door leaf in one of a wall's openings, hinged at the opening's near
/// edge.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DoorSpec {
    pub wall: u32,
    /// Index into the wall's openings.
    pub opening: usize,
    pub state: LeafState,
    /// Opening angle of an open leaf (degrees).
    #[serde(default = "default_swing")]
    pub swing_deg: f64,
    /// Offset of a closed leaf from the wall plane (m).
    #[serde(default = "default_proud")]
    pub proud: f64,
    /// `1` for the side the wall's left normal points to, `-1` for the other.
    #[serde(default = "default_side")]
    pub side: f64,
}

fn default_swing() -> f64 {
    90.0
}

fn default_proud() -> f64 {
    0.03
}

fn default_side() -> f64 {
    1.0
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ConfounderKind {
    Cabinet,
    Poster,
}

/// An object against a wall that hides part of it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfounderSpec {
    pub kind: ConfounderKind,
    pub wall: u32,
    pub offset: f64,
    pub width: f64,
    pub height: f64,
    /// Lower edge above the wall base (m).
    #[serde(default)]
    pub elevation: f64,
    /// Distance of the visible face from the wall (m).
    #[serde(default = "default_depth")]
    pub depth: f64,
    #[serde(default = "default_side")]
    pub side: f64,
}

fn default_depth() -> f64 {
    0.01
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Waypoint {
    pub position: [f64; 3],
    /// Turn a full circle here.
    #[serde(default)]
    pub scan: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrajectorySpec {
    pub waypoints: Vec<Waypoint>,
    /// Keyframe spacing while walking (m).
    pub step: f64,
    /// Heading increment while scanning (degrees).
    pub scan_step_deg: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CameraSpec {
    pub hfov_deg: f64,
    pub vfov_deg: f64,
    pub min_range: f64,
    pub max_range: f64,
}

impl Default for CameraSpec {
    fn default() -> Self {
        Self {
            hfov_deg: 90.0,
            vfov_deg: 80.0,
            min_range: 0.3,
            max_range: 8.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneSpec {
    pub walls: Vec<WallSpec>,
    #[serde(default)]
    pub doors: Vec<DoorSpec>,
    #[serde(default)]
    pub confounders: Vec<ConfounderSpec>,
    #[serde(default)]
    pub rooms: Vec<RoomRegion>,
    pub trajectory: TrajectorySpec,
    #[serde(default)]
    pub camera: CameraSpec,
    /// Samples per square meter of surface, per keyframe.
    pub density: f64,
    /// Standard deviation of isotropic point noise (m).
    pub noise_sigma: f64,
    /// Fraction of points given a random wrong class.
    #[serde(default)]
    pub label_noise: f64,
    pub rng_seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TruthPassage {
    pub id: u32,
    pub wall: u32,
    pub centroid: Point3,
    pub extent: Extent,
    pub kind: PassageKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TruthDoor {
    pub id: u32,
    pub wall: u32,
    pub state: DoorState,
    pub centroid: Point3,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TruthWall {
    pub id: u32,
    pub plane: PlaneParams,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GroundTruth {
    pub schema: String,
    pub passages: Vec<TruthPassage>,
    pub doors: Vec<TruthDoor>,
    pub rooms: Vec<RoomRegion>,
    pub walls: Vec<TruthWall>,
}

/// Frame of a wall: `t` along the floor segment, `n` its left normal.
struct WallGeom {
    start: Point3,
    t: Vector3<f64>,
    n: Vector3<f64>,
    length: f64,
}

impl WallGeom {
    fn new(w: &WallSpec) -> Self {
        let start = Point3::new(w.start[0], w.start[1], w.base);
        let d = Vector3::new(w.end[0] - w.start[0], w.end[1] - w.start[1], 0.0);
        let length = d.norm();
        let t = d / length;
        Self {
            start,
            t,
            n: Vector3::new(-t.y, t.x, 0.0),
            length,
        }
    }

    fn at(&self, s: f64, z: f64) -> Point3 {
        self.start + self.t * s + Vector3::z() * z
    }
}

/// A sampled rectangle `origin + a·u + b·v`, `a ∈ [0, ua]`, `b ∈ [0, vb]`.
struct Surface {
    origin: Point3,
    u: Vector3<f64>,
    v: Vector3<f64>,
    ua: f64,
    vb: f64,
    /// Excluded `[a0, a1, b0, b1]` rectangles.
    holes: Vec<[f64; 4]>,
    label: SemanticLabel,
}

impl SceneSpec {
    pub fn validate(&self) -> Result<(), SynthError> {
        let finite = |v: &[f64]| v.iter().all(|x| x.is_finite());
        let mut ids = std::collections::BTreeSet::new();
        for w in &self.walls {
            if !ids.insert(w.id) {
                return Err(invalid(format!("duplicate wall id {}", w.id)));
            }
            if !finite(&[w.start[0], w.start[1], w.end[0], w.end[1], w.base, w.height]) {
                return Err(invalid(format!("wall {}: non-finite geometry", w.id)));
            }
            let length = (w.end[0] - w.start[0]).hypot(w.end[1] - w.start[1]);
            if !(length > 0.0 && w.height > 0.0) {
                return Err(invalid(format!("wall {}: zero length or height", w.id)));
            }
            for (i, o) in w.openings.iter().enumerate() {
                let inside = o.offset >= 0.0
                    && o.width > 0.0
                    && o.height > 0.0
                    && o.sill >= 0.0
                    && o.offset + o.width <= length
                    && o.sill + o.height <= w.height;
                if !inside {
                    return Err(invalid(format!("wall {}: opening {i} lies outside the wall", w.id)));
                }
            }
        }
        let wall = |id: u32| self.walls.iter().find(|w| w.id == id);
        for (i, d) in self.doors.iter().enumerate() {
            let w = wall(d.wall).ok_or_else(|| invalid(format!("door {i}: no wall {}", d.wall)))?;
            if d.opening >= w.openings.len() {
                return Err(invalid(format!("door {i}: wall {} has no opening {}", d.wall, d.opening)));
            }
            if !(d.side == 1.0 || d.side == -1.0) || !(d.proud >= 0.0) || !d.swing_deg.is_finite() {
                return Err(invalid(format!("door {i}: side must be 1 or -1, proud >= 0")));
            }
            if self.doors[..i].iter().any(|o| o.wall == d.wall && o.opening == d.opening) {
                return Err(invalid(format!("door {i}: opening already has a door")));
            }
        }
        for (i, c) in self.confounders.iter().enumerate() {
            let w = wall(c.wall).ok_or_else(|| invalid(format!("confounder {i}: no wall {}", c.wall)))?;
            let length = WallGeom::new(w).length;
            let inside = c.offset >= 0.0
                && c.width > 0.0
                && c.height > 0.0
                && c.elevation >= 0.0
                && c.offset + c.width <= length
                && c.elevation + c.height <= w.height;
            if !inside || !(c.depth > 0.0) || !(c.side == 1.0 || c.side == -1.0) {
                return Err(invalid(format!("confounder {i} lies outside wall {}", c.wall)));
            }
        }
        for r in &self.rooms {
            if r.seeds.is_empty() {
                return Err(invalid(format!("room {} has no seed", r.id)));
            }
        }
        let t = &self.trajectory;
        if t.waypoints.is_empty() || !t.waypoints.iter().all(|w| finite(&w.position)) {
            return Err(invalid("trajectory needs finite waypoints"));
        }
        if !(t.step > 0.0 && t.scan_step_deg > 0.0 && t.scan_step_deg <= 360.0) {
            return Err(invalid("trajectory step and scan_step_deg must be positive"));
        }
        let c = &self.camera;
        let fov_ok = |f: f64| f > 0.0 && f < 180.0;
        if !(fov_ok(c.hfov_deg) && fov_ok(c.vfov_deg) && c.min_range >= 0.0 && c.max_range > c.min_range) {
            return Err(invalid("camera needs fov in (0, 180) and 0 <= min_range < max_range"));
        }
        if !(self.density > 0.0 && self.noise_sigma >= 0.0 && (0.0..=1.0).contains(&self.label_noise)) {
            return Err(invalid("density must be positive, noise_sigma >= 0, label_noise in [0, 1]"));
        }
        Ok(())
    }

    fn door_for(&self, wall: u32, opening: usize) -> Option<&DoorSpec> {
        self.doors.iter().find(|d| d.wall == wall && d.opening == opening)
    }

    fn surfaces(&self) -> Vec<Surface> {
        let mut out = Vec::new();
        for w in &self.walls {
            let g = WallGeom::new(w);
            let mut holes: Vec<[f64; 4]> = w
                .openings
                .iter()
                .map(|o| [o.offset, o.offset + o.width, o.sill, o.sill + o.height])
                .collect();
            holes.extend(
                self.confounders
                    .iter()
                    .filter(|c| c.wall == w.id)
                    .map(|c| [c.offset, c.offset + c.width, c.elevation, c.elevation + c.height]),
            );
            out.push(Surface {
                origin: g.start,
                u: g.t,
                v: Vector3::z(),
                ua: g.length,
                vb: w.height,
                holes,
                label: SemanticLabel::new(SemanticClass::Wall, w.id + 1),
            });
        }
        for (i, d) in self.doors.iter().enumerate() {
            let w = self.walls.iter().find(|w| w.id == d.wall).expect("validated");
            let o = &w.openings[d.opening];
            let g = WallGeom::new(w);
            let hinge = g.at(o.offset, o.sill);
            let (origin, u) = match d.state {
                LeafState::Closed => (hinge + g.n * (d.side * d.proud), g.t),
                LeafState::Open => {
                    let a = d.swing_deg.to_radians();
                    (hinge, g.t * a.cos() + g.n * (d.side * a.sin()))
                }
            };
            out.push(Surface {
                origin,
                u,
                v: Vector3::z(),
                ua: o.width,
                vb: o.height,
                holes: Vec::new(),
                label: SemanticLabel::new(SemanticClass::Door, 10_000 + i as u32),
            });
        }
        for (i, c) in self.confounders.iter().enumerate() {
            let w = self.walls.iter().find(|w| w.id == c.wall).expect("validated");
            let g = WallGeom::new(w);
            out.push(Surface {
                origin: g.at(c.offset, c.elevation) + g.n * (c.side * c.depth),
                u: g.t,
                v: Vector3::z(),
                ua: c.width,
                vb: c.height,
                holes: Vec::new(),
                label: SemanticLabel::new(SemanticClass::Other, 20_000 + i as u32),
            });
        }
        out
    }

    /// Camera poses along the waypoints.
    pub fn poses(&self) -> Vec<CameraPose> {
        let t = &self.trajectory;
        let p = |w: &Waypoint| Point3::new(w.position[0], w.position[1], w.position[2]);
        let heading_to = |a: &Point3, b: &Point3| (b.y - a.y).atan2(b.x - a.x);
        let mut out = Vec::new();
        let mut heading = match t.waypoints.get(1) {
            Some(next) => heading_to(&p(&t.waypoints[0]), &p(next)),
            None => 0.0,
        };
        for (i, w) in t.waypoints.iter().enumerate() {
            let here = p(w);
            if i > 0 {
                let prev = p(&t.waypoints[i - 1]);
                let length = (here - prev).norm();
                if length > 0.0 {
                    heading = heading_to(&prev, &here);
                    let dir = (here - prev) / length;
                    let mut k = 1;
                    while (k as f64) * t.step < length - 1e-9 {
                        out.push(level_camera_pose(prev + dir * (k as f64 * t.step), heading));
                        k += 1;
                    }
                }
            }
            if w.scan {
                let n = (360.0 / t.scan_step_deg).round().max(1.0) as usize;
                for j in 0..n {
                    out.push(level_camera_pose(here, heading + (j as f64 * t.scan_step_deg).to_radians()));
                }
            } else {
                out.push(level_camera_pose(here, heading));
            }
        }
        out
    }

    pub fn truth(&self) -> GroundTruth {
        let mut passages = Vec::new();
        let mut walls = Vec::new();
        for w in &self.walls {
            let g = WallGeom::new(w);
            walls.push(TruthWall {
                id: w.id,
                plane: PlaneParams::from_point_normal(&g.start, g.n).expect("unit normal"),
            });
            for (i, o) in w.openings.iter().enumerate() {
                let door = self.door_for(w.id, i);
                let kind = o.kind.unwrap_or(if door.is_some() {
                    PassageKind::Doorway
                } else {
                    PassageKind::Unknown
                });
                passages.push(TruthPassage {
                    id: passages.len() as u32,
                    wall: w.id,
                    centroid: g.at(o.offset + o.width / 2.0, o.sill + o.height / 2.0),
                    extent: Extent::new(o.width, o.height),
                    kind,
                });
            }
        }
        let doors = self
            .doors
            .iter()
            .enumerate()
            .map(|(i, d)| {
                let w = self.walls.iter().find(|w| w.id == d.wall).expect("validated");
                let o = &w.openings[d.opening];
                let g = WallGeom::new(w);
                let (state, centroid) = match d.state {
                    LeafState::Closed => (
                        DoorState::Closed,
                        g.at(o.offset + o.width / 2.0, o.sill + o.height / 2.0) + g.n * (d.side * d.proud),
                    ),
                    LeafState::Open => {
                        let a = d.swing_deg.to_radians();
                        let u = g.t * a.cos() + g.n * (d.side * a.sin());
                        (
                            DoorState::Open,
                            g.at(o.offset, o.sill + o.height / 2.0) + u * (o.width / 2.0),
                        )
                    }
                };
                TruthDoor {
                    id: i as u32,
                    wall: d.wall,
                    state,
                    centroid,
                }
            })
            .collect();
        GroundTruth {
            schema: TRUTH_SCHEMA.to_string(),
            passages,
            doors,
            rooms: self.rooms.clone(),
            walls,
        }
    }
}

fn in_frustum(p_cam: &Point3, cam: &CameraSpec) -> bool {
    let r = p_cam.coords.norm();
    p_cam.z > 0.0
        && r >= cam.min_range
        && r <= cam.max_range
        && p_cam.x.atan2(p_cam.z).abs() <= cam.hfov_deg.to_radians() / 2.0
        && p_cam.y.atan2(p_cam.z).abs() <= cam.vfov_deg.to_radians() / 2.0
}

fn sample_frame(spec: &SceneSpec, surfaces: &[Surface], index: usize, pose: &CameraPose) -> KeyFrame {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.rng_seed);
    rng.set_stream(index as u64);
    let noise = Normal::new(0.0, spec.noise_sigma).expect("validated sigma");
    let mut cloud = LabeledPointCloud::default();
    let mut next_noise_instance = NOISE_INSTANCE_BASE;
    for s in surfaces {
        let n = (spec.density * s.ua * s.vb).round() as usize;
        for _ in 0..n {
            let a = rng.random::<f64>() * s.ua;
            let b = rng.random::<f64>() * s.vb;
            if s.holes.iter().any(|h| a > h[0] && a < h[1] && b > h[2] && b < h[3]) {
                continue;
            }
            let world = s.origin + s.u * a + s.v * b;
            let cam = pose.to_camera(&world);
            if !in_frustum(&cam, &spec.camera) {
                continue;
            }
            let jitter = Vector3::new(noise.sample(&mut rng), noise.sample(&mut rng), noise.sample(&mut rng));
            let mut label = s.label;
            if rng.random::<f64>() < spec.label_noise {
                let others: Vec<SemanticClass> =
                    SemanticClass::ALL.iter().copied().filter(|c| *c != label.class).collect();
                label = SemanticLabel::new(others[rng.random_range(0..others.len())], next_noise_instance);
                next_noise_instance += 1;
            }
            cloud.push(pose.to_camera(&(world + jitter)), label);
        }
    }
    KeyFrame {
        id: index as u64,
        timestamp: index as f64 * 0.1,
        pose: *pose,
        cloud,
    }
}

/// Keyframes (points in the camera frame) and ground truth for a scene.
/// Deterministic for a fixed `rng_seed`; frames are sampled in parallel
/// from per-frame random streams.
pub fn generate(spec: &SceneSpec) -> Result<(Vec<KeyFrame>, GroundTruth), SynthError> {
    spec.validate()?;
    let surfaces = spec.surfaces();
    let frames = spec
        .poses()
        .par_iter()
        .enumerate()
        .map(|(i, pose)| sample_frame(spec, &surfaces, i, pose))
        .collect();
    Ok((frames, spec.truth()))
}

/// Writes the dataset, `truth.json` and `rooms.json` into `dir`.
pub fn write_dataset(dir: &Path, frames: &[KeyFrame], truth: &GroundTruth) -> Result<(), SynthError> {
    save_sequence(dir, frames)?;
    let io = |path: &Path| {
        let shown = path.display().to_string();
        move |source| SynthError::Io { path: shown, source }
    };
    let truth_path = dir.join("truth.json");
    let text = serde_json::to_string_pretty(truth).expect("truth serializes") + "\n";
    std::fs::write(&truth_path, text).map_err(io(&truth_path))?;
    let rooms_path = dir.join("rooms.json");
    std::fs::write(&rooms_path, save_rooms(&truth.rooms)).map_err(io(&rooms_path))?;
    Ok(())
}

fn read_versioned(path: &Path, schema: &str) -> Result<serde_json::Value, SynthError> {
    let shown = path.display().to_string();
    let text = std::fs::read_to_string(path).map_err(|source| SynthError::Io {
        path: shown.clone(),
        source,
    })?;
    let value: serde_json::Value = serde_json::from_str(&text).map_err(|e| SynthError::Parse {
        path: shown.clone(),
        reason: e.to_string(),
    })?;
    let found = value.get("schema").and_then(|s| s.as_str()).unwrap_or("");
    if found != schema {
        return Err(SynthError::Parse {
            path: shown,
            reason: format!("schema {found:?}, expected {schema:?}"),
        });
    }
    Ok(value)
}

pub fn load_truth(path: &Path) -> Result<GroundTruth, SynthError> {
    let value = read_versioned(path, TRUTH_SCHEMA)?;
    serde_json::from_value(value).map_err(|e| SynthError::Parse {
        path: path.display().to_string(),
        reason: e.to_string(),
    })
}

pub fn load_scene(path: &Path) -> Result<SceneSpec, SynthError> {
    let mut value = read_versioned(path, SCENE_SCHEMA)?;
    value.as_object_mut().expect("object has schema").remove("schema");
    serde_json::from_value(value).map_err(|e| SynthError::Parse {
        path: path.display().to_string(),
        reason: e.to_string(),
    })
}

pub fn scene_to_string(spec: &SceneSpec) -> String {
    let mut value = serde_json::to_value(spec).expect("scene serializes");
    value
        .as_object_mut()
        .expect("struct")
        .insert("schema".into(), SCENE_SCHEMA.into());
    serde_json::to_string_pretty(&value).expect("json") + "\n"
}

/// Three rooms in a row (A, B, C; 5 m × 4 m each, walls 2.5 m high):
/// a closed door in the exterior wall of A, a bare doorway between A and
/// B, a doorway with a leaf swung open between B and C, a cabinet against
/// the north wall of B and a poster on the floor against the south wall
/// of C. The camera scans each room from its center and walks through both
/// doorways.
pub fn office() -> SceneSpec {
    let wall = |id, start: [f64; 2], end: [f64; 2], openings| WallSpec {
        id,
        start,
        end,
        base: 0.0,
        height: 2.5,
        openings,
    };
    let opening = |offset, width, height| OpeningSpec {
        offset,
        width,
        height,
        sill: 0.0,
        kind: None,
    };
    let seed = |x: f64| vec![Point3::new(x, 2.0, 1.0)];
    SceneSpec {
        walls: vec![
            wall(0, [0.0, 0.0], [15.0, 0.0], vec![]),
            wall(1, [0.0, 4.0], [15.0, 4.0], vec![]),
            wall(2, [0.0, 0.0], [0.0, 4.0], vec![opening(1.5, 0.9, 2.1)]),
            wall(3, [5.0, 0.0], [5.0, 4.0], vec![opening(1.55, 0.9, 2.0)]),
            wall(4, [10.0, 0.0], [10.0, 4.0], vec![opening(1.55, 0.9, 2.0)]),
            wall(5, [15.0, 0.0], [15.0, 4.0], vec![]),
        ],
        doors: vec![
            DoorSpec {
                wall: 2,
                opening: 0,
                state: LeafState::Closed,
                swing_deg: 0.0,
                proud: 0.03,
                side: -1.0,
            },
            DoorSpec {
                wall: 4,
                opening: 0,
                state: LeafState::Open,
                swing_deg: 90.0,
                proud: 0.0,
                side: -1.0,
            },
        ],
        confounders: vec![
            ConfounderSpec {
                kind: ConfounderKind::Cabinet,
                wall: 1,
                offset: 7.0,
                width: 1.0,
                height: 1.2,
                elevation: 0.0,
                depth: 0.45,
                side: -1.0,
            },
            ConfounderSpec {
                kind: ConfounderKind::Poster,
                wall: 0,
                offset: 12.0,
                width: 0.8,
                height: 0.6,
                elevation: 0.0,
                depth: 0.01,
                side: 1.0,
            },
        ],
        rooms: vec![
            RoomRegion { id: 0, label: "A".into(), seeds: seed(2.5) },
            RoomRegion { id: 1, label: "B".into(), seeds: seed(7.5) },
            RoomRegion { id: 2, label: "C".into(), seeds: seed(12.5) },
        ],
        trajectory: TrajectorySpec {
            waypoints: [2.5, 7.5, 12.5]
                .iter()
                .map(|&x| Waypoint { position: [x, 2.0, 1.0], scan: true })
                .collect(),
            step: 0.3,
            scan_step_deg: 10.0,
        },
        camera: CameraSpec::default(),
        density: 85.0,
        noise_sigma: 0.01,
        label_noise: 0.01,
        rng_seed: 7,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub detected: usize,
    pub truth: usize,
    pub matched: usize,
    pub precision: f64,
    pub recall: f64,
    /// Mean over matched pairs (m); 0 when nothing matched.
    pub mean_centroid_error: f64,
    pub max_centroid_error: f64,
    /// Fraction of matched pairs with equal kinds; 1 when nothing matched.
    pub kind_accuracy: f64,
    /// `(detected id, truth id, centroid error)` by truth id.
    pub pairs: Vec<(u32, u32, f64)>,
}

impl Metrics {
    /// Flat `key=value` lines.
    pub fn report(&self) -> String {
        format!(
            "detected={}\ntruth={}\nmatched={}\nprecision={:.6}\nrecall={:.6}\nmean_centroid_error={:.6}\nmax_centroid_error={:.6}\nkind_accuracy={:.6}\n",
            self.detected,
            self.truth,
            self.matched,
            self.precision,
            self.recall,
            self.mean_centroid_error,
            self.max_centroid_error,
            self.kind_accuracy
        )
    }
}

/// One-to-one matching of detected to true passages within `match_radius`
/// (most pairs, then least total distance).
pub fn score(detected: &[Passage], truth: &GroundTruth, match_radius: f64) -> Metrics {
    let mut det: Vec<&Passage> = detected.iter().collect();
    det.sort_by_key(|p| p.id);
    let mut tru: Vec<&TruthPassage> = truth.passages.iter().collect();
    tru.sort_by_key(|p| p.id);
    let big = (det.len().min(tru.len()) as f64 + 1.0) * match_radius + 1.0;
    let cost: Vec<Vec<f64>> = tru
        .iter()
        .map(|t| {
            det.iter()
                .map(|d| {
                    let e = (d.centroid - t.centroid).norm();
                    if e <= match_radius {
                        e
                    } else {
                        big
                    }
                })
                .collect()
        })
        .collect();
    let mut pairs = Vec::new();
    let mut kinds_ok = 0;
    if !det.is_empty() {
        for (ti, a) in min_cost_assignment(&cost).iter().enumerate() {
            if let Some(di) = *a {
                if cost[ti][di] < big {
                    pairs.push((det[di].id, tru[ti].id, cost[ti][di]));
                    kinds_ok += usize::from(det[di].kind == tru[ti].kind);
                }
            }
        }
    }
    let matched = pairs.len();
    let ratio = |num: usize, den: usize| if den == 0 { 1.0 } else { num as f64 / den as f64 };
    Metrics {
        detected: det.len(),
        truth: tru.len(),
        matched,
        precision: ratio(matched, det.len()),
        recall: ratio(matched, tru.len()),
        mean_centroid_error: if matched == 0 {
            0.0
        } else {
            pairs.iter().map(|p| p.2).sum::<f64>() / matched as f64
        },
        max_centroid_error: pairs.iter().map(|p| p.2).fold(0.0, f64::max),
        kind_accuracy: ratio(kinds_ok, matched),
        pairs,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::passage::Provenance;
    use proptest::prelude::*;

    fn single_wall(openings: Vec<OpeningSpec>) -> SceneSpec {
        SceneSpec {
            walls: vec![WallSpec {
                id: 0,
                start: [0.0, 0.0],
                end: [4.0, 0.0],
                base: 0.0,
                height: 2.5,
                openings,
            }],
            doors: vec![],
            confounders: vec![],
            rooms: vec![],
            trajectory: TrajectorySpec {
                waypoints: vec![
                    Waypoint { position: [2.0, 3.0, 1.2], scan: false },
                    Waypoint { position: [2.0, 2.5, 1.2], scan: false },
                ],
                step: 0.25,
                scan_step_deg: 10.0,
            },
            camera: CameraSpec::default(),
            density: 400.0,
            noise_sigma: 0.0,
            label_noise: 0.0,
            rng_seed: 1,
        }
    }

    fn world_points(kf: &KeyFrame) -> Vec<Point3> {
        kf.cloud.points().iter().map(|p| kf.pose.to_global(p)).collect()
    }

    #[test]
    fn wall_is_covered_at_density() {
        let (frames, _) = generate(&single_wall(vec![])).unwrap();
        let total: usize = frames.iter().map(|f| f.cloud.len()).sum();
        assert!(total >= 3600, "{total}");
        // the camera looks along -y at the whole wall
        assert!(frames.iter().all(|f| f.cloud.len() > 3000));
    }

    #[test]
    fn openings_stay_empty_without_noise() {
        let o = OpeningSpec { offset: 1.0, width: 0.9, height: 2.0, sill: 0.0, kind: None };
        let (frames, truth) = generate(&single_wall(vec![o])).unwrap();
        for f in &frames {
            for p in world_points(f) {
                assert!(!(p.x > 1.0 && p.x < 1.9 && p.z < 2.0), "{p:?}");
            }
        }
        assert_eq!(truth.passages.len(), 1);
        assert!((truth.passages[0].centroid - Point3::new(1.45, 0.0, 1.0)).norm() < 1e-12);
    }

    #[test]
    fn generation_is_deterministic() {
        let spec = office();
        let (a, ta) = generate(&spec).unwrap();
        let (b, tb) = generate(&spec).unwrap();
        assert_eq!(a, b);
        assert_eq!(ta, tb);
        let dir = tempfile::tempdir().unwrap();
        let (d1, d2) = (dir.path().join("a"), dir.path().join("b"));
        write_dataset(&d1, &a, &ta).unwrap();
        write_dataset(&d2, &b, &tb).unwrap();
        fn files(root: &Path, dir: &Path, out: &mut Vec<std::path::PathBuf>) {
            for entry in std::fs::read_dir(dir).unwrap() {
                let path = entry.unwrap().path();
                if path.is_dir() {
                    files(root, &path, out);
                } else {
                    out.push(path.strip_prefix(root).unwrap().to_path_buf());
                }
            }
        }
        let mut listing = Vec::new();
        files(&d1, &d1, &mut listing);
        assert!(listing.len() > 3);
        for rel in listing {
            assert_eq!(std::fs::read(d1.join(&rel)).unwrap(), std::fs::read(d2.join(&rel)).unwrap());
        }
    }

    #[test]
    fn invalid_specs() {
        let o = OpeningSpec { offset: 3.5, width: 0.9, height: 2.0, sill: 0.0, kind: None };
        let err = generate(&single_wall(vec![o])).unwrap_err();
        assert!(err.to_string().contains("outside"), "{err}");
        let mut s = single_wall(vec![]);
        s.density = 0.0;
        assert!(matches!(generate(&s), Err(SynthError::InvalidSpec(_))));
    }

    #[test]
    fn scene_file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("scene.json");
        std::fs::write(&path, scene_to_string(&office())).unwrap();
        assert_eq!(load_scene(&path).unwrap(), office());
    }

    #[test]
    fn office_truth_and_frame_size() {
        let spec = office();
        let truth = spec.truth();
        assert_eq!(truth.passages.len(), 3);
        assert_eq!(truth.doors[0].state, DoorState::Closed);
        let (frames, _) = generate(&spec).unwrap();
        let mut sizes: Vec<usize> = frames.iter().map(|f| f.cloud.len()).collect();
        sizes.sort_unstable();
        let median = sizes[sizes.len() / 2];
        assert!((1200..=3500).contains(&median), "median frame size {median}");
    }

    fn det(id: u32, c: Point3, kind: PassageKind) -> Passage {
        Passage {
            id,
            wall_id: 0,
            centroid: c,
            extent: Extent::new(0.9, 2.0),
            kind,
            provenance: Provenance::Gap,
            associated_door: None,
            confidence: 0.7,
        }
    }

    #[test]
    fn score_examples() {
        let truth = office().truth();
        let perfect: Vec<Passage> = truth
            .passages
            .iter()
            .map(|t| det(t.id, t.centroid, t.kind))
            .collect();
        let m = score(&perfect[..2], &GroundTruth { passages: truth.passages[..2].to_vec(), ..truth.clone() }, 0.5);
        assert_eq!((m.precision, m.recall), (1.0, 1.0));
        let m = score(&perfect[..1], &GroundTruth { passages: truth.passages[..2].to_vec(), ..truth.clone() }, 0.5);
        assert_eq!((m.precision, m.recall), (1.0, 0.5));
        let m = score(&[], &truth, 0.5);
        assert_eq!((m.precision, m.recall), (1.0, 0.0));
        assert!(m.report().contains("recall=0.000000"));
    }

    proptest! {
        #[test]
        fn score_ignores_detection_order(shift in 0usize..5, offsets in proptest::collection::vec(-0.6..0.6f64, 5)) {
            let truth = office().truth();
            let dets: Vec<Passage> = offsets
                .iter()
                .enumerate()
                .map(|(i, o)| {
                    let t = &truth.passages[i % truth.passages.len()];
                    det(i as u32, t.centroid + Vector3::new(0.0, *o, 0.0), t.kind)
                })
                .collect();
            let mut rotated = dets.clone();
            rotated.rotate_left(shift);
            prop_assert_eq!(score(&dets, &truth, 0.5), score(&rotated, &truth, 0.5));
        }
    }
}

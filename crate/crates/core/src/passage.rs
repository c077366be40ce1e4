//! Passage detection on mapped walls.
//!
//! Two independent sources of evidence produce passage candidates:
//!
//! * **Traversal**: the camera trajectory crosses a wall plane between two
//!   consecutive keyframes that are both close to the wall. The crossing
//!   point is the zero of the linearly interpolated signed distance.
//! * **Gap**: the wall's accumulated inliers are rasterized in the wall's own
//!   2D frame; 4-connected runs of low-density cells that are enclosed by
//!   wall (or reach the floor) are candidate openings, validated by size and
//!   by proximity to a detected door.
//!
//! Closed doors add a third, direct source. [`fuse_passages`] merges
//! candidates that describe the same opening.

use std::collections::VecDeque;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::entities::{Door, DoorState, InPlaneBox, InPlaneFrame, Wall};
use crate::geom::{Point3, PlaneParams};
use crate::ingest::PoseSample;

pub const CONFIDENCE_CLOSED_DOOR: f64 = 0.9;
pub const CONFIDENCE_GAP: f64 = 0.7;
pub const CONFIDENCE_TRAVERSAL_DOORWAY: f64 = 0.7;
pub const CONFIDENCE_TRAVERSAL: f64 = 0.5;

/// Max distance of a passage centroid from its wall plane.
pub const MAX_CENTROID_WALL_DISTANCE: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PassageError {
    #[error("wall {wall_id} has {inliers} inliers, {required} needed for gap analysis")]
    InsufficientCoverage {
        wall_id: u32,
        inliers: usize,
        required: usize,
    },
    #[error("entity {wall_id} is horizontal, not a wall")]
    HorizontalPlane { wall_id: u32 },
    #[error("door {door_id} is {state:?}, a closed door with a supporting wall is required")]
    InvalidState { door_id: u32, state: DoorState },
    #[error("door {door_id} references wall {wall_id}, which is not the wall given")]
    WallMismatch { door_id: u32, wall_id: u32 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PassageKind {
    Unknown,
    Archway,
    Doorway,
}

impl PassageKind {
    fn specificity(self) -> u8 {
        match self {
            Self::Unknown => 0,
            Self::Archway => 1,
            Self::Doorway => 2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    Traversal,
    Gap,
    ClosedDoor,
}

impl Provenance {
    /// How much the source's geometry is trusted.
    fn priority(self) -> u8 {
        match self {
            Self::Traversal => 0,
            Self::Gap => 1,
            Self::ClosedDoor => 2,
        }
    }
}

/// Width and height in meters, serialized as `[width, height]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 2]", into = "[f64; 2]")]
pub struct Extent {
    pub width: f64,
    pub height: f64,
}

impl Extent {
    pub fn new(width: f64, height: f64) -> Self {
        Self { width, height }
    }
}

impl From<[f64; 2]> for Extent {
    fn from(v: [f64; 2]) -> Self {
        Self::new(v[0], v[1])
    }
}

impl From<Extent> for [f64; 2] {
    fn from(e: Extent) -> Self {
        [e.width, e.height]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Passage {
    pub id: u32,
    pub wall_id: u32,
    pub centroid: Point3,
    pub extent: Extent,
    pub kind: PassageKind,
    pub provenance: Provenance,
    pub associated_door: Option<u32>,
    pub confidence: f64,
}

impl Passage {
    /// Checks the passage's own invariants against its wall plane.
    pub fn validate(&self, wall_plane: &PlaneParams) -> Result<(), String> {
        if !(self.extent.width > 0.0 && self.extent.height > 0.0) {
            return Err(format!("passage {}: non-positive extent", self.id));
        }
        let dist = wall_plane.signed_distance(&self.centroid).abs();
        if !(dist <= MAX_CENTROID_WALL_DISTANCE) {
            return Err(format!(
                "passage {}: centroid {dist:.3} m from wall {}",
                self.id, self.wall_id
            ));
        }
        if self.kind == PassageKind::Doorway
            && self.associated_door.is_none()
            && self.provenance != Provenance::ClosedDoor
        {
            return Err(format!("passage {}: doorway without door evidence", self.id));
        }
        if !(0.0..=1.0).contains(&self.confidence) {
            return Err(format!("passage {}: confidence out of range", self.id));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PassageConfig {
    /// Keyframes farther than this from a wall plane are ignored (m).
    pub d_max: f64,
    /// Sliding window length for traversal consistency (keyframes).
    pub window: usize,
    /// Raster cell size of the wall parameterization (m).
    pub cell_size: f64,
    /// Cells with fewer points are empty (points per cell).
    pub tau_rho: u32,
    pub min_gap_w: f64,
    pub max_gap_w: f64,
    pub min_gap_h: f64,
    pub max_gap_h: f64,
    /// Max door-centroid distance for doorway classification (m).
    pub door_proximity: f64,
    /// Candidates on one wall closer than this are fused (m).
    pub dedupe_radius: f64,
    /// Extent of traversal passages without a nearby door (m, m).
    pub default_extent: Extent,
    /// Run passage detection every this many keyframes.
    pub gap_check_interval: usize,
    /// Crossings must fall within the wall's box grown by this margin (m).
    pub crossing_margin: f64,
    /// Minimum wall inliers before gap analysis is attempted.
    pub min_gap_inliers: usize,
    pub enable_traversal: bool,
    pub enable_gap: bool,
}

impl Default for PassageConfig {
    fn default() -> Self {
        Self {
            d_max: 1.0,
            window: 10,
            cell_size: 0.10,
            tau_rho: 3,
            min_gap_w: 0.6,
            max_gap_w: 2.5,
            min_gap_h: 1.6,
            max_gap_h: 3.0,
            door_proximity: 0.5,
            dedupe_radius: 0.5,
            default_extent: Extent::new(1.5, 2.0),
            gap_check_interval: 10,
            crossing_margin: 0.25,
            min_gap_inliers: 100,
            enable_traversal: true,
            enable_gap: true,
        }
    }
}

impl PassageConfig {
    pub fn validate(&self) -> Result<(), String> {
        let positive = [
            ("d_max", self.d_max),
            ("cell_size", self.cell_size),
            ("min_gap_w", self.min_gap_w),
            ("max_gap_w", self.max_gap_w),
            ("min_gap_h", self.min_gap_h),
            ("max_gap_h", self.max_gap_h),
            ("door_proximity", self.door_proximity),
            ("dedupe_radius", self.dedupe_radius),
            ("default_extent.width", self.default_extent.width),
            ("default_extent.height", self.default_extent.height),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(format!("passages.{name} must be positive, got {v}"));
            }
        }
        if !(self.crossing_margin >= 0.0) {
            return Err("passages.crossing_margin must be non-negative".into());
        }
        if self.window < 2 || self.tau_rho < 1 || self.gap_check_interval < 1 {
            return Err(
                "passages.window must be >= 2, tau_rho and gap_check_interval >= 1".into(),
            );
        }
        if self.min_gap_w >= self.max_gap_w || self.min_gap_h >= self.max_gap_h {
            return Err("passages gap bounds need min < max".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraversalEvent {
    pub wall_id: u32,
    pub kf_before: u64,
    pub kf_after: u64,
    pub s_before: f64,
    pub s_after: f64,
    /// Interpolation parameter of the crossing along `c_before → c_after`.
    pub lambda: f64,
    pub crossing: Point3,
}

/// Wall-plane crossings of the trajectory.
///
/// A consecutive keyframe pair produces an event when both camera centers
/// are within `d_max` of the plane and on opposite sides of it, and the
/// interpolated crossing lies on the mapped part of the wall. Among events
/// that fit in one window of `window` keyframes only the one with the
/// smallest `|s_before| + |s_after|` is kept.
pub fn detect_traversal_events(
    wall: &Wall,
    trajectory: &[PoseSample],
    cfg: &PassageConfig,
) -> Vec<TraversalEvent> {
    let frame = wall.frame();
    let mut raw: Vec<(usize, TraversalEvent)> = Vec::new();
    for (i, pair) in trajectory.windows(2).enumerate() {
        let (c0, c1) = (pair[0].center(), pair[1].center());
        let s0 = wall.plane.signed_distance(&c0);
        let s1 = wall.plane.signed_distance(&c1);
        if !(s0.abs() < cfg.d_max && s1.abs() < cfg.d_max && s0 * s1 < 0.0) {
            continue;
        }
        let lambda = s0.abs() / (s0.abs() + s1.abs());
        let crossing = c0 + (c1 - c0) * lambda;
        let (a, u) = frame.coords(&crossing);
        if !wall.bbox.contains(a, u, cfg.crossing_margin) {
            continue;
        }
        raw.push((
            i,
            TraversalEvent {
                wall_id: wall.id,
                kf_before: pair[0].id,
                kf_after: pair[1].id,
                s_before: s0,
                s_after: s1,
                lambda,
                crossing,
            },
        ));
    }
    let score = |e: &TraversalEvent| e.s_before.abs() + e.s_after.abs();
    let mut order: Vec<usize> = (0..raw.len()).collect();
    order.sort_by(|&x, &y| {
        let (ex, ey) = (&raw[x].1, &raw[y].1);
        score(ex)
            .total_cmp(&score(ey))
            .then_with(|| cmp_point(&ex.crossing, &ey.crossing))
    });
    // Pairs (i, i+1) and (j, j+1) share a window when j + 1 - i < window.
    let mut kept: Vec<usize> = Vec::new();
    for k in order {
        let i = raw[k].0;
        if kept.iter().all(|&o| raw[o].0.abs_diff(i) + 2 > cfg.window) {
            kept.push(k);
        }
    }
    kept.sort_unstable();
    kept.into_iter().map(|k| raw[k].1.clone()).collect()
}

fn cmp_point(a: &Point3, b: &Point3) -> std::cmp::Ordering {
    a.x.total_cmp(&b.x)
        .then(a.y.total_cmp(&b.y))
        .then(a.z.total_cmp(&b.z))
}

/// A connected set of under-supported cells in a wall raster.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapRegion {
    pub wall_id: u32,
    /// `[column, row]` raster indices, row 0 at the bottom, sorted.
    pub cells: Vec<[u32; 2]>,
    /// `(across, up)` in the wall frame (m).
    pub centroid_2d: [f64; 2],
    pub extent_2d: Extent,
    /// Back-projected centroid on the wall plane.
    pub centroid: Point3,
    /// The region reaches the lowest occupied raster row.
    pub touches_floor: bool,
}

/// Density raster of a wall in its `(across, up)` frame.
#[derive(Debug, Clone)]
pub struct WallRaster {
    pub origin: [f64; 2],
    pub cell: f64,
    pub cols: usize,
    pub rows: usize,
    pub counts: Vec<u32>,
}

impl WallRaster {
    /// Rasterizes `points`, each counted `weights[i]` times (once if absent).
    pub fn build(
        frame: &InPlaneFrame,
        points: &[Point3],
        weights: Option<&[u32]>,
        cell: f64,
    ) -> Option<Self> {
        let bbox = InPlaneBox::from_points(frame, points.iter())?;
        let dims = |span: f64| ((span / cell - 1e-9).ceil() as usize).max(1);
        let cols = dims(bbox.width());
        let rows = dims(bbox.height());
        let mut counts = vec![0u32; cols * rows];
        for (i, p) in points.iter().enumerate() {
            let (a, u) = frame.coords(p);
            let c = (((a - bbox.across[0]) / cell).floor() as usize).min(cols - 1);
            let r = (((u - bbox.up[0]) / cell).floor() as usize).min(rows - 1);
            counts[r * cols + c] += weights.map_or(1, |w| w[i]);
        }
        Some(Self {
            origin: [bbox.across[0], bbox.up[0]],
            cell,
            cols,
            rows,
            counts,
        })
    }

    pub fn count(&self, col: usize, row: usize) -> u32 {
        self.counts[row * self.cols + col]
    }
}

/// Candidate openings of a wall.
///
/// Each accumulated inlier counts with its support, the number of
/// observations merged into it. Cells below `tau_rho` are empty. Rows below
/// the lowest occupied row are outside the wall. A 4-connected empty
/// component is a candidate unless it touches the left, right or top raster
/// border; components reaching the lowest occupied row are flagged
/// `touches_floor`.
pub fn detect_gap_regions(wall: &Wall, cfg: &PassageConfig) -> Result<Vec<GapRegion>, PassageError> {
    if wall.inliers.len() < cfg.min_gap_inliers {
        return Err(PassageError::InsufficientCoverage {
            wall_id: wall.id,
            inliers: wall.inliers.len(),
            required: cfg.min_gap_inliers,
        });
    }
    let frame = wall.frame();
    if frame.horizontal {
        return Err(PassageError::HorizontalPlane { wall_id: wall.id });
    }
    let raster = WallRaster::build(&frame, &wall.inliers, Some(&wall.support), cfg.cell_size)
        .expect("non-empty");
    let (cols, rows) = (raster.cols, raster.rows);
    let occupied = |c: usize, r: usize| raster.count(c, r) >= cfg.tau_rho;
    let Some(bottom) = (0..rows).find(|&r| (0..cols).any(|c| occupied(c, r))) else {
        return Ok(Vec::new());
    };

    let mut seen = vec![false; cols * rows];
    let mut regions = Vec::new();
    for r0 in bottom..rows {
        for c0 in 0..cols {
            if seen[r0 * cols + c0] || occupied(c0, r0) {
                continue;
            }
            let mut cells = Vec::new();
            let mut queue = VecDeque::from([(c0, r0)]);
            seen[r0 * cols + c0] = true;
            while let Some((c, r)) = queue.pop_front() {
                cells.push([c as u32, r as u32]);
                let mut visit = |nc: usize, nr: usize| {
                    if nr >= bottom && !seen[nr * cols + nc] && !occupied(nc, nr) {
                        seen[nr * cols + nc] = true;
                        queue.push_back((nc, nr));
                    }
                };
                if c > 0 {
                    visit(c - 1, r);
                }
                if c + 1 < cols {
                    visit(c + 1, r);
                }
                if r > 0 {
                    visit(c, r - 1);
                }
                if r + 1 < rows {
                    visit(c, r + 1);
                }
            }
            let open_border = cells.iter().any(|&[c, r]| {
                c == 0 || c as usize == cols - 1 || r as usize == rows - 1
            });
            if open_border {
                continue;
            }
            cells.sort_unstable_by_key(|&[c, r]| (r, c));
            regions.push(region_from_cells(wall.id, &frame, &raster, bottom, cells));
        }
    }
    Ok(regions)
}

fn region_from_cells(
    wall_id: u32,
    frame: &InPlaneFrame,
    raster: &WallRaster,
    bottom: usize,
    cells: Vec<[u32; 2]>,
) -> GapRegion {
    let n = cells.len() as f64;
    let (mut sa, mut su) = (0.0, 0.0);
    let (mut cmin, mut cmax, mut rmin, mut rmax) = (u32::MAX, 0, u32::MAX, 0);
    for &[c, r] in &cells {
        sa += raster.origin[0] + (c as f64 + 0.5) * raster.cell;
        su += raster.origin[1] + (r as f64 + 0.5) * raster.cell;
        cmin = cmin.min(c);
        cmax = cmax.max(c);
        rmin = rmin.min(r);
        rmax = rmax.max(r);
    }
    let centroid_2d = [sa / n, su / n];
    GapRegion {
        wall_id,
        touches_floor: rmin as usize == bottom,
        centroid: frame.lift(centroid_2d[0], centroid_2d[1]),
        centroid_2d,
        extent_2d: Extent::new(
            (cmax - cmin + 1) as f64 * raster.cell,
            (rmax - rmin + 1) as f64 * raster.cell,
        ),
        cells,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "decision")]
pub enum GapDecision {
    Accept {
        kind: PassageKind,
        door: Option<u32>,
    },
    Reject,
    Defer,
}

fn nearest_door<'a>(point: &Point3, doors: &'a [Door], radius: f64) -> Option<&'a Door> {
    doors
        .iter()
        .map(|d| ((d.centroid - point).norm(), d))
        .filter(|(dist, _)| *dist <= radius)
        .min_by(|a, b| a.0.total_cmp(&b.0).then(a.1.id.cmp(&b.1.id)))
        .map(|(_, d)| d)
}

/// Decides what a gap region is.
///
/// * Reject: width outside `[min_gap_w, max_gap_w]` or height above
///   `max_gap_h`, or a floor-reaching gap too low to walk through
///   (furniture or clutter against the wall).
/// * Accept(Doorway): passable size with a door centroid within
///   `door_proximity`.
/// * Accept(Unknown): passable size, no door, reaches the floor.
/// * Defer: interior regions without a door (window-like, or the upper part
///   of an opening whose lower part is still occluded).
pub fn validate_gap(region: &GapRegion, doors: &[Door], cfg: &PassageConfig) -> GapDecision {
    let Extent { width, height } = region.extent_2d;
    if width < cfg.min_gap_w || width > cfg.max_gap_w || height > cfg.max_gap_h {
        return GapDecision::Reject;
    }
    if height >= cfg.min_gap_h {
        if let Some(door) = nearest_door(&region.centroid, doors, cfg.door_proximity) {
            return GapDecision::Accept {
                kind: PassageKind::Doorway,
                door: Some(door.id),
            };
        }
        if region.touches_floor {
            return GapDecision::Accept {
                kind: PassageKind::Unknown,
                door: None,
            };
        }
        return GapDecision::Defer;
    }
    if region.touches_floor {
        GapDecision::Reject
    } else {
        GapDecision::Defer
    }
}

/// Passage for an accepted gap.
pub fn passage_from_gap(region: &GapRegion, decision: &GapDecision) -> Option<Passage> {
    let GapDecision::Accept { kind, door } = *decision else {
        return None;
    };
    Some(Passage {
        id: 0,
        wall_id: region.wall_id,
        centroid: region.centroid,
        extent: region.extent_2d,
        kind,
        provenance: Provenance::Gap,
        associated_door: door,
        confidence: CONFIDENCE_GAP,
    })
}

/// Doorway passage at a closed door, on its supporting wall.
pub fn passage_from_closed_door(door: &Door, wall: &Wall) -> Result<Passage, PassageError> {
    let wall_id = match (door.state, door.supporting_wall) {
        (DoorState::Closed, Some(w)) => w,
        (state, _) => {
            return Err(PassageError::InvalidState {
                door_id: door.id,
                state,
            })
        }
    };
    if wall_id != wall.id {
        return Err(PassageError::WallMismatch {
            door_id: door.id,
            wall_id,
        });
    }
    let frame = wall.frame();
    let bbox = InPlaneBox::from_points(&frame, door.inliers.iter()).unwrap_or(door.bbox);
    Ok(Passage {
        id: 0,
        wall_id,
        centroid: wall.plane.project(&door.centroid),
        extent: Extent::new(bbox.width(), bbox.height()),
        kind: PassageKind::Doorway,
        provenance: Provenance::ClosedDoor,
        associated_door: Some(door.id),
        confidence: CONFIDENCE_CLOSED_DOOR,
    })
}

/// Passage at a traversal crossing: a doorway sized like the nearest door
/// within `door_proximity`, otherwise `Unknown` with the default extent.
pub fn classify_traversal_passage(
    event: &TraversalEvent,
    doors: &[Door],
    cfg: &PassageConfig,
) -> Passage {
    let base = Passage {
        id: 0,
        wall_id: event.wall_id,
        centroid: event.crossing,
        extent: cfg.default_extent,
        kind: PassageKind::Unknown,
        provenance: Provenance::Traversal,
        associated_door: None,
        confidence: CONFIDENCE_TRAVERSAL,
    };
    match nearest_door(&event.crossing, doors, cfg.door_proximity) {
        Some(door) => Passage {
            extent: Extent::new(door.bbox.width(), door.bbox.height()),
            kind: PassageKind::Doorway,
            associated_door: Some(door.id),
            confidence: CONFIDENCE_TRAVERSAL_DOORWAY,
            ..base
        },
        None => base,
    }
}

fn passage_order(a: &Passage, b: &Passage) -> std::cmp::Ordering {
    a.wall_id
        .cmp(&b.wall_id)
        .then_with(|| cmp_point(&a.centroid, &b.centroid))
        .then(b.provenance.cmp(&a.provenance))
        .then(b.kind.cmp(&a.kind))
        .then(b.confidence.total_cmp(&a.confidence))
        .then(a.associated_door.cmp(&b.associated_door))
}

fn merge_cluster(members: &[&Passage]) -> Passage {
    if members.len() == 1 {
        return members[0].clone();
    }
    let kind = members
        .iter()
        .map(|p| p.kind)
        .max_by_key(|k| k.specificity())
        .expect("non-empty");
    // members are in `passage_order`, so the first maximum is deterministic
    let pick = |key: &dyn Fn(&Passage) -> (u8, f64)| -> usize {
        let mut best = 0;
        for (i, p) in members.iter().enumerate().skip(1) {
            let (kb, cb) = key(members[best]);
            let (kp, cp) = key(p);
            if kp > kb || (kp == kb && cp > cb) {
                best = i;
            }
        }
        best
    };
    let geometric = members[pick(&|p| (p.provenance.priority(), p.confidence))];
    let weight: f64 = members.iter().map(|p| p.confidence).sum();
    let centroid = if weight > 0.0 {
        let s = members
            .iter()
            .fold(nalgebra::Vector3::zeros(), |acc, p| acc + p.centroid.coords * p.confidence);
        Point3::from(s / weight)
    } else {
        let s = members
            .iter()
            .fold(nalgebra::Vector3::zeros(), |acc, p| acc + p.centroid.coords);
        Point3::from(s / members.len() as f64)
    };
    let associated_door = members
        .iter()
        .filter(|p| p.associated_door.is_some())
        .max_by(|a, b| {
            a.confidence
                .total_cmp(&b.confidence)
                .then(a.provenance.priority().cmp(&b.provenance.priority()))
        })
        .and_then(|p| p.associated_door);
    let miss: f64 = members.iter().map(|p| 1.0 - p.confidence).product();
    Passage {
        id: 0,
        wall_id: members[0].wall_id,
        centroid,
        extent: geometric.extent,
        kind,
        provenance: geometric.provenance,
        associated_door,
        confidence: 1.0 - miss,
    }
}

/// One round of single-linkage clustering per wall. Returns `None` when
/// nothing merged.
fn fuse_once(sorted: &[Passage], radius: f64) -> Option<Vec<Passage>> {
    let n = sorted.len();
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(parent: &mut [usize], mut i: usize) -> usize {
        while parent[i] != i {
            parent[i] = parent[parent[i]];
            i = parent[i];
        }
        i
    }
    let mut merged_any = false;
    for i in 0..n {
        for j in i + 1..n {
            if sorted[i].wall_id != sorted[j].wall_id {
                continue;
            }
            if (sorted[i].centroid - sorted[j].centroid).norm() <= radius {
                let (ri, rj) = (find(&mut parent, i), find(&mut parent, j));
                if ri != rj {
                    parent[ri.max(rj)] = ri.min(rj);
                    merged_any = true;
                }
            }
        }
    }
    if !merged_any {
        return None;
    }
    let mut clusters: Vec<Vec<&Passage>> = Vec::new();
    let mut slot = vec![usize::MAX; n];
    for i in 0..n {
        let root = find(&mut parent, i);
        if slot[root] == usize::MAX {
            slot[root] = clusters.len();
            clusters.push(Vec::new());
        }
        clusters[slot[root]].push(&sorted[i]);
    }
    Some(clusters.iter().map(|c| merge_cluster(c)).collect())
}

/// Merges candidates on the same wall whose centroids are within
/// `dedupe_radius`, repeating until no two passages on a wall are that
/// close. Ids are reassigned in a canonical order, so the result does not
/// depend on the input order.
pub fn fuse_passages(candidates: &[Passage], cfg: &PassageConfig) -> Vec<Passage> {
    let mut current: Vec<Passage> = candidates.to_vec();
    current.sort_by(passage_order);
    while let Some(next) = fuse_once(&current, cfg.dedupe_radius) {
        current = next;
        current.sort_by(passage_order);
    }
    for (i, p) in current.iter_mut().enumerate() {
        p.id = i as u32;
    }
    current
}

/// Everything one detection pass produced.
#[derive(Debug, Clone, Default)]
pub struct PassageDetection {
    pub passages: Vec<Passage>,
    /// Traversal and gap candidates before fusion.
    pub candidates: Vec<Passage>,
    pub events: Vec<TraversalEvent>,
    pub gaps: Vec<(GapRegion, GapDecision)>,
    /// Walls skipped by gap analysis and why.
    pub skipped: Vec<PassageError>,
}

/// Runs both strategies on every wall (in parallel) and fuses their
/// candidates with the closed-door evidence.
pub fn detect_passages(
    walls: &[Wall],
    doors: &[Door],
    trajectory: &[PoseSample],
    closed_door_passages: &[Passage],
    cfg: &PassageConfig,
) -> PassageDetection {
    struct PerWall {
        events: Vec<TraversalEvent>,
        gaps: Vec<(GapRegion, GapDecision)>,
        skipped: Option<PassageError>,
    }
    let per_wall: Vec<PerWall> = walls
        .par_iter()
        .map(|wall| {
            if wall.frame().horizontal {
                return PerWall {
                    events: Vec::new(),
                    gaps: Vec::new(),
                    skipped: Some(PassageError::HorizontalPlane { wall_id: wall.id }),
                };
            }
            let events = if cfg.enable_traversal {
                detect_traversal_events(wall, trajectory, cfg)
            } else {
                Vec::new()
            };
            let (gaps, skipped) = if cfg.enable_gap {
                match detect_gap_regions(wall, cfg) {
                    Ok(regions) => (
                        regions
                            .into_iter()
                            .map(|r| {
                                let d = validate_gap(&r, doors, cfg);
                                (r, d)
                            })
                            .collect(),
                        None,
                    ),
                    Err(e) => (Vec::new(), Some(e)),
                }
            } else {
                (Vec::new(), None)
            };
            PerWall {
                events,
                gaps,
                skipped,
            }
        })
        .collect();

    let mut out = PassageDetection::default();
    for w in per_wall {
        for e in &w.events {
            out.candidates.push(classify_traversal_passage(e, doors, cfg));
        }
        for (r, d) in &w.gaps {
            out.candidates.extend(passage_from_gap(r, d));
        }
        out.events.extend(w.events);
        out.gaps.extend(w.gaps);
        out.skipped.extend(w.skipped);
    }
    let mut all = closed_door_passages.to_vec();
    all.extend(out.candidates.iter().cloned());
    out.passages = fuse_passages(&all, cfg);
    out
}

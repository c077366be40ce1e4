//! Wall and door maps built from per-keyframe plane observations, door-to-wall
//! association and the coplanarity test that decides whether a door is
//! closed.

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::geom::{
    fit_plane_least_squares, plane_angle, Point3, PlaneParams, PointCloud, VoxelAccumulator,
};

/// Normals closer than this to the vertical axis belong to floors or
/// ceilings, not walls.
pub const HORIZONTAL_PLANE_LIMIT_DEG: f64 = 5.0;

/// Orthonormal in-plane basis of a plane.
///
/// `up` is the global +z axis projected into the plane and `across = n × up`,
/// so for a vertical wall "height" runs along `up` and "width" along
/// `across`. Planes within 5° of horizontal fall back to projecting +x and
/// are flagged `horizontal`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InPlaneFrame {
    pub normal: Vector3<f64>,
    pub offset: f64,
    pub across: Vector3<f64>,
    pub up: Vector3<f64>,
    pub horizontal: bool,
}

impl InPlaneFrame {
    pub fn for_plane(plane: &PlaneParams) -> Self {
        let n = plane.normal().into_inner();
        let z = Vector3::z();
        let horizontal = n.dot(&z).abs() > HORIZONTAL_PLANE_LIMIT_DEG.to_radians().cos();
        let g = if horizontal {
            if n.x.abs() < 0.9 {
                Vector3::x()
            } else {
                Vector3::y()
            }
        } else {
            z
        };
        let up = (g - n * g.dot(&n)).normalize();
        let across = n.cross(&up);
        Self {
            normal: n,
            offset: plane.offset(),
            across,
            up,
            horizontal,
        }
    }

    /// `(across, up)` coordinates of the projection of `p`.
    pub fn coords(&self, p: &Point3) -> (f64, f64) {
        (self.across.dot(&p.coords), self.up.dot(&p.coords))
    }

    /// Point on the plane with in-plane coordinates `(a, b)`.
    pub fn lift(&self, a: f64, b: f64) -> Point3 {
        Point3::from(self.across * a + self.up * b - self.normal * self.offset)
    }
}

/// Axis-aligned box in a plane's `(across, up)` coordinates, meters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InPlaneBox {
    pub across: [f64; 2],
    pub up: [f64; 2],
}

impl InPlaneBox {
    pub fn from_points<'a>(
        frame: &InPlaneFrame,
        points: impl IntoIterator<Item = &'a Point3>,
    ) -> Option<Self> {
        let mut it = points.into_iter();
        let first = frame.coords(it.next()?);
        let mut b = Self {
            across: [first.0, first.0],
            up: [first.1, first.1],
        };
        for p in it {
            let (a, u) = frame.coords(p);
            b.across = [b.across[0].min(a), b.across[1].max(a)];
            b.up = [b.up[0].min(u), b.up[1].max(u)];
        }
        Some(b)
    }

    pub fn width(&self) -> f64 {
        self.across[1] - self.across[0]
    }

    pub fn height(&self) -> f64 {
        self.up[1] - self.up[0]
    }

    /// Separation along each axis, zero when the intervals overlap.
    pub fn gap_to(&self, other: &InPlaneBox) -> (f64, f64) {
        let gap = |a: [f64; 2], b: [f64; 2]| (b[0] - a[1]).max(a[0] - b[1]).max(0.0);
        (gap(self.across, other.across), gap(self.up, other.up))
    }

    pub fn contains(&self, a: f64, u: f64, margin: f64) -> bool {
        a >= self.across[0] - margin
            && a <= self.across[1] + margin
            && u >= self.up[0] - margin
            && u <= self.up[1] + margin
    }
}

/// A plane estimated from one keyframe, with its inliers in the map frame.
#[derive(Debug, Clone, PartialEq)]
pub struct PlaneObservation {
    pub plane: PlaneParams,
    pub points: PointCloud,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MergeConfig {
    /// Max angle between an observation and a mapped entity (rad).
    pub angle: f64,
    /// Max plane offset difference (m).
    pub offset: f64,
    /// Max in-plane separation of the bounding boxes (m).
    pub bbox_gap: f64,
    /// Voxel size of the accumulated entity clouds (m).
    pub map_voxel: f64,
}

impl Default for MergeConfig {
    fn default() -> Self {
        Self {
            angle: 5f64.to_radians(),
            offset: 0.10,
            bbox_gap: 0.3,
            map_voxel: 0.05,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Wall {
    pub id: u32,
    pub plane: PlaneParams,
    /// Accumulated voxel centroids in the map frame.
    pub inliers: Vec<Point3>,
    /// Number of observations merged into each inlier.
    pub support: Vec<u32>,
    pub observing_keyframes: Vec<u64>,
    pub bbox: InPlaneBox,
}

impl Wall {
    pub fn frame(&self) -> InPlaneFrame {
        InPlaneFrame::for_plane(&self.plane)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DoorState {
    Closed,
    Open,
    Unknown,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Door {
    pub id: u32,
    pub plane: PlaneParams,
    pub inliers: Vec<Point3>,
    pub support: Vec<u32>,
    pub observing_keyframes: Vec<u64>,
    pub bbox: InPlaneBox,
    pub centroid: Point3,
    pub supporting_wall: Option<u32>,
    pub state: DoorState,
}

impl Door {
    pub fn frame(&self) -> InPlaneFrame {
        InPlaneFrame::for_plane(&self.plane)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DoorThresholds {
    /// Angular coplanarity threshold (rad).
    pub tau_theta: f64,
    /// Offset coplanarity threshold (m).
    pub tau_d: f64,
    /// Max door-centroid distance to a supporting wall plane (m).
    pub association_radius: f64,
    /// Max door-to-wall plane angle for association (rad).
    pub association_max_angle: f64,
}

impl Default for DoorThresholds {
    fn default() -> Self {
        Self {
            tau_theta: 10f64.to_radians(),
            tau_d: 0.08,
            association_radius: 0.3,
            association_max_angle: 45f64.to_radians(),
        }
    }
}

impl DoorThresholds {
    pub fn validate(&self) -> Result<(), String> {
        for (name, v) in [
            ("tau_theta", self.tau_theta),
            ("tau_d", self.tau_d),
            ("association_radius", self.association_radius),
            ("association_max_angle", self.association_max_angle),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(format!("doors.{name} must be positive, got {v}"));
            }
        }
        Ok(())
    }
}

/// What happened to an observation when it was inserted into a map.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MapUpdate {
    Merged(u32),
    Created(u32),
}

impl MapUpdate {
    pub fn id(self) -> u32 {
        match self {
            Self::Merged(id) | Self::Created(id) => id,
        }
    }
}

/// Picks the entity an observation should merge into: smallest offset
/// difference, then smallest angle, then lowest id. The offset difference is
/// the entity plane's distance at the observation centroid, which equals the
/// Hessian offset difference for parallel planes but does not grow with the
/// distance from the origin when the planes are slightly tilted.
fn merge_target<'a>(
    entities: impl Iterator<Item = (u32, &'a PlaneParams)>,
    obs: &PlaneObservation,
    cfg: &MergeConfig,
) -> Option<u32> {
    let center = obs.points.centroid()?;
    let mut best: Option<(f64, f64, u32)> = None;
    for (id, plane) in entities {
        let angle = plane_angle(plane, &obs.plane);
        let dd = plane.signed_distance(&center).abs();
        if !(angle < cfg.angle && dd < cfg.offset) {
            continue;
        }
        let key = (dd, angle, id);
        if best.map_or(true, |b| key < b) {
            best = Some(key);
        }
    }
    best.map(|b| b.2)
}

fn boxes_close(plane: &PlaneParams, bbox: &InPlaneBox, obs: &PlaneObservation, cfg: &MergeConfig) -> bool {
    let frame = InPlaneFrame::for_plane(plane);
    match InPlaneBox::from_points(&frame, obs.points.iter()) {
        Some(ob) => {
            let (ga, gu) = bbox.gap_to(&ob);
            ga <= cfg.bbox_gap && gu <= cfg.bbox_gap
        }
        None => false,
    }
}

/// Merges weighted points into an accumulated entity cloud, refits the
/// plane over the union and drops points left outside the merge offset.
fn absorb(
    plane: &mut PlaneParams,
    inliers: &mut Vec<Point3>,
    support: &mut Vec<u32>,
    bbox: &mut InPlaneBox,
    points: impl IntoIterator<Item = (Point3, u32)>,
    cfg: &MergeConfig,
) {
    let mut acc = VoxelAccumulator::from_parts(
        cfg.map_voxel,
        std::mem::take(inliers),
        std::mem::take(support),
    );
    for (p, w) in points {
        acc.insert_weighted(p, w);
    }
    if let Ok(refit) = fit_plane_least_squares(acc.points()) {
        *plane = refit;
    }
    let fitted = *plane;
    acc.retain(|p| fitted.signed_distance(p).abs() <= cfg.offset);
    let (pts, sup) = acc.into_parts();
    *inliers = pts;
    *support = sup;
    if let Some(b) = InPlaneBox::from_points(&InPlaneFrame::for_plane(plane), inliers.iter()) {
        *bbox = b;
    }
}

fn seed_cloud(obs: &PlaneObservation, cfg: &MergeConfig) -> (Vec<Point3>, Vec<u32>) {
    let mut acc = VoxelAccumulator::new(cfg.map_voxel);
    for p in obs.points.iter() {
        acc.insert(*p);
    }
    acc.into_parts()
}

fn push_keyframe(list: &mut Vec<u64>, kf_id: u64) {
    if list.last() != Some(&kf_id) {
        list.push(kf_id);
    }
}

/// Inserts a wall observation (map frame) into the wall map.
///
/// The observation merges into an existing wall when the planes are within
/// `cfg.angle` and `cfg.offset` and their in-plane boxes are within
/// `cfg.bbox_gap`; otherwise it becomes a new wall with the next free id.
pub fn update_wall_map(
    walls: &mut Vec<Wall>,
    obs: &PlaneObservation,
    kf_id: u64,
    cfg: &MergeConfig,
) -> MapUpdate {
    let target = merge_target(
        walls
            .iter()
            .filter(|w| boxes_close(&w.plane, &w.bbox, obs, cfg))
            .map(|w| (w.id, &w.plane)),
        obs,
        cfg,
    );
    if let Some(id) = target {
        let w = walls.iter_mut().find(|w| w.id == id).expect("target exists");
        absorb(&mut w.plane, &mut w.inliers, &mut w.support, &mut w.bbox, obs.points.iter().map(|p| (*p, 1)), cfg);
        push_keyframe(&mut w.observing_keyframes, kf_id);
        return MapUpdate::Merged(id);
    }
    let id = walls.iter().map(|w| w.id + 1).max().unwrap_or(0);
    let (inliers, support) = seed_cloud(obs, cfg);
    let frame = InPlaneFrame::for_plane(&obs.plane);
    let bbox = InPlaneBox::from_points(&frame, inliers.iter()).unwrap_or(InPlaneBox {
        across: [0.0, 0.0],
        up: [0.0, 0.0],
    });
    walls.push(Wall {
        id,
        plane: obs.plane,
        inliers,
        support,
        observing_keyframes: vec![kf_id],
        bbox,
    });
    MapUpdate::Created(id)
}

/// Door counterpart of [`update_wall_map`]. New doors start `Unknown`
/// until [`refresh_doors`] associates them.
pub fn update_door_map(
    doors: &mut Vec<Door>,
    obs: &PlaneObservation,
    kf_id: u64,
    cfg: &MergeConfig,
) -> MapUpdate {
    let target = merge_target(
        doors
            .iter()
            .filter(|d| boxes_close(&d.plane, &d.bbox, obs, cfg))
            .map(|d| (d.id, &d.plane)),
        obs,
        cfg,
    );
    if let Some(id) = target {
        let d = doors.iter_mut().find(|d| d.id == id).expect("target exists");
        absorb(&mut d.plane, &mut d.inliers, &mut d.support, &mut d.bbox, obs.points.iter().map(|p| (*p, 1)), cfg);
        d.centroid = crate::geom::centroid(&d.inliers).unwrap_or(d.centroid);
        push_keyframe(&mut d.observing_keyframes, kf_id);
        return MapUpdate::Merged(id);
    }
    let id = doors.iter().map(|d| d.id + 1).max().unwrap_or(0);
    let (inliers, support) = seed_cloud(obs, cfg);
    let frame = InPlaneFrame::for_plane(&obs.plane);
    let bbox = InPlaneBox::from_points(&frame, inliers.iter()).unwrap_or(InPlaneBox {
        across: [0.0, 0.0],
        up: [0.0, 0.0],
    });
    let centroid = crate::geom::centroid(&inliers).unwrap_or_else(Point3::origin);
    doors.push(Door {
        id,
        plane: obs.plane,
        inliers,
        support,
        observing_keyframes: vec![kf_id],
        bbox,
        centroid,
        supporting_wall: None,
        state: DoorState::Unknown,
    });
    MapUpdate::Created(id)
}

/// Accumulated planar entity, shared by walls and doors for consolidation.
trait MapEntity {
    fn id(&self) -> u32;
    fn plane(&self) -> &PlaneParams;
    fn inliers(&self) -> &[Point3];
    fn bbox(&self) -> &InPlaneBox;
    fn absorb_entity(&mut self, other: Self, cfg: &MergeConfig);
}

macro_rules! map_entity {
    ($t:ty, $after:expr) => {
        impl MapEntity for $t {
            fn id(&self) -> u32 {
                self.id
            }
            fn plane(&self) -> &PlaneParams {
                &self.plane
            }
            fn inliers(&self) -> &[Point3] {
                &self.inliers
            }
            fn bbox(&self) -> &InPlaneBox {
                &self.bbox
            }
            fn absorb_entity(&mut self, other: Self, cfg: &MergeConfig) {
                let points = other.inliers.into_iter().zip(other.support);
                absorb(&mut self.plane, &mut self.inliers, &mut self.support, &mut self.bbox, points, cfg);
                self.observing_keyframes.extend(other.observing_keyframes);
                self.observing_keyframes.sort_unstable();
                self.observing_keyframes.dedup();
                let after: fn(&mut Self) = $after;
                after(self);
            }
        }
    };
}

map_entity!(Wall, |_| {});
map_entity!(Door, |d| d.centroid = crate::geom::centroid(&d.inliers).unwrap_or(d.centroid));

/// Whether two mapped entities pass the same angle, offset and box tests as
/// an observation merging into an entity. The offset test is symmetric.
fn entities_mergeable<E: MapEntity>(a: &E, ca: &Point3, b: &E, cb: &Point3, cfg: &MergeConfig) -> bool {
    if plane_angle(a.plane(), b.plane()) >= cfg.angle
        || a.plane().signed_distance(cb).abs() >= cfg.offset
        || b.plane().signed_distance(ca).abs() >= cfg.offset
    {
        return false;
    }
    let frame = InPlaneFrame::for_plane(a.plane());
    match InPlaneBox::from_points(&frame, b.inliers().iter()) {
        Some(bb) => {
            let (ga, gu) = a.bbox().gap_to(&bb);
            ga <= cfg.bbox_gap && gu <= cfg.bbox_gap
        }
        None => false,
    }
}

fn consolidate<E: MapEntity>(list: &mut Vec<E>, cfg: &MergeConfig) -> Vec<(u32, u32)> {
    let mut merged = Vec::new();
    loop {
        let centroids: Vec<Option<Point3>> = list.iter().map(|e| crate::geom::centroid(e.inliers())).collect();
        let mut pair = None;
        'search: for i in 0..list.len() {
            for j in i + 1..list.len() {
                if let (Some(ci), Some(cj)) = (&centroids[i], &centroids[j]) {
                    if entities_mergeable(&list[i], ci, &list[j], cj, cfg) {
                        pair = Some((i, j));
                        break 'search;
                    }
                }
            }
        }
        let Some((i, j)) = pair else { break };
        let (keep, drop) = if list[i].id() < list[j].id() { (i, j) } else { (j, i) };
        let gone = list.remove(drop);
        let keep = if drop < keep { keep - 1 } else { keep };
        merged.push((gone.id(), list[keep].id()));
        list[keep].absorb_entity(gone, cfg);
    }
    merged
}

/// Merges walls that have grown into each other: pairs passing the merge
/// tests collapse into the lower id until no pair does. Returns the
/// `(absorbed, kept)` ids in merge order; apply them in sequence to remap
/// references.
pub fn consolidate_walls(walls: &mut Vec<Wall>, cfg: &MergeConfig) -> Vec<(u32, u32)> {
    consolidate(walls, cfg)
}

/// Door counterpart of [`consolidate_walls`]. Association and state are
/// left for [`refresh_doors`].
pub fn consolidate_doors(doors: &mut Vec<Door>, cfg: &MergeConfig) -> Vec<(u32, u32)> {
    consolidate(doors, cfg)
}

/// The wall whose plane is closest to the door centroid, among walls
/// within `association_max_angle` of the door plane and closer than
/// `association_radius`. Ties go to the lower wall id.
pub fn associate_door_to_wall(door: &Door, walls: &[Wall], th: &DoorThresholds) -> Option<u32> {
    walls
        .iter()
        .filter(|w| plane_angle(&w.plane, &door.plane) < th.association_max_angle)
        .map(|w| (w.plane.signed_distance(&door.centroid).abs(), w.id))
        .filter(|(dist, _)| *dist < th.association_radius)
        .min_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)))
        .map(|(_, id)| id)
}

/// Closed iff the door plane is within `tau_theta` of the wall plane and
/// their offsets differ by less than `tau_d` (both strict). The offset test
/// is only evaluated once the angle test has passed.
pub fn classify_door_state(
    door_plane: &PlaneParams,
    wall_plane: &PlaneParams,
    th: &DoorThresholds,
) -> DoorState {
    if plane_angle(door_plane, wall_plane) < th.tau_theta
        && door_plane.offset_difference(wall_plane) < th.tau_d
    {
        DoorState::Closed
    } else {
        DoorState::Open
    }
}

/// Re-associates every door with the current wall map and reclassifies it.
/// Doors without a supporting wall are kept as `Unknown`.
pub fn refresh_doors(doors: &mut [Door], walls: &[Wall], th: &DoorThresholds) {
    for door in doors.iter_mut() {
        door.supporting_wall = associate_door_to_wall(door, walls, th);
        door.state = match door.supporting_wall {
            Some(wid) => {
                let wall = walls.iter().find(|w| w.id == wid).expect("associated wall exists");
                classify_door_state(&door.plane, &wall.plane, th)
            }
            None => DoorState::Unknown,
        };
    }
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use nalgebra::{Isometry3, Translation3, UnitQuaternion};
    use proptest::prelude::*;

    /// Grid of points on the vertical rectangle `x = x0`, `y ∈ [y0, y1]`,
    /// `z ∈ [0, h]`.
    pub(crate) fn wall_points_x(x0: f64, y0: f64, y1: f64, h: f64, step: f64) -> PointCloud {
        let mut pts = Vec::new();
        let ny = ((y1 - y0) / step).round() as usize;
        let nz = (h / step).round() as usize;
        for i in 0..=ny {
            for k in 0..=nz {
                // offset keeps samples away from voxel boundaries
                pts.push(Point3::new(x0, y0 + 0.01 + i as f64 * step, 0.01 + k as f64 * step));
            }
        }
        PointCloud::new(pts)
    }

    pub(crate) fn observation_x(x0: f64, y0: f64, y1: f64, h: f64) -> PlaneObservation {
        PlaneObservation {
            plane: PlaneParams::new(Vector3::x(), -x0).unwrap(),
            points: wall_points_x(x0, y0, y1, h, 0.05),
        }
    }

    fn plane(n: [f64; 3], d: f64) -> PlaneParams {
        PlaneParams::new(Vector3::from(n), d).unwrap()
    }

    fn door_at(centroid: Point3, plane: PlaneParams) -> Door {
        Door {
            id: 0,
            plane,
            inliers: vec![centroid],
            support: vec![1],
            observing_keyframes: vec![0],
            bbox: InPlaneBox {
                across: [0.0, 0.9],
                up: [0.0, 2.0],
            },
            centroid,
            supporting_wall: None,
            state: DoorState::Unknown,
        }
    }

    #[test]
    fn first_observation_creates_wall() {
        let mut walls = Vec::new();
        let obs = observation_x(2.0, 0.0, 4.0, 2.5);
        assert_eq!(update_wall_map(&mut walls, &obs, 0, &MergeConfig::default()), MapUpdate::Created(0));
        assert_eq!(walls.len(), 1);
        assert_eq!(walls[0].inliers.len(), obs.points.len());
        assert_eq!(walls[0].observing_keyframes, vec![0]);
    }

    #[test]
    fn repeated_observation_merges() {
        let cfg = MergeConfig::default();
        let mut walls = Vec::new();
        let obs = observation_x(2.0, 0.0, 4.0, 2.5);
        update_wall_map(&mut walls, &obs, 0, &cfg);
        let before = walls[0].inliers.len();
        assert_eq!(update_wall_map(&mut walls, &obs, 1, &cfg), MapUpdate::Merged(0));
        assert_eq!(walls.len(), 1);
        assert_eq!(walls[0].inliers.len(), before);
        assert!(walls[0].support.iter().all(|&s| s == 2));
        assert_eq!(walls[0].observing_keyframes, vec![0, 1]);
        // Adjacent segment of the same plane extends the wall.
        update_wall_map(&mut walls, &observation_x(2.0, 4.1, 6.0, 2.5), 2, &cfg);
        assert_eq!(walls.len(), 1);
        assert!(walls[0].bbox.width() > 5.9);
    }

    #[test]
    fn bridged_walls_consolidate() {
        let cfg = MergeConfig::default();
        let mut walls = Vec::new();
        update_wall_map(&mut walls, &observation_x(2.0, 0.0, 1.5, 2.5), 0, &cfg);
        update_wall_map(&mut walls, &observation_x(2.0, 2.5, 4.0, 2.5), 1, &cfg);
        update_wall_map(&mut walls, &observation_x(5.0, 0.0, 4.0, 2.5), 2, &cfg);
        assert_eq!(walls.len(), 3);
        assert!(consolidate_walls(&mut walls, &cfg).is_empty());
        // The bridge merges into one side only; consolidation joins the rest.
        let bridge = update_wall_map(&mut walls, &observation_x(2.0, 1.2, 2.8, 2.5), 3, &cfg);
        assert!(matches!(bridge, MapUpdate::Merged(_)));
        assert_eq!(walls.len(), 3);
        assert_eq!(consolidate_walls(&mut walls, &cfg), vec![(1, 0)]);
        assert_eq!(walls.len(), 2);
        let w = &walls[0];
        assert_eq!(w.id, 0);
        assert_eq!(w.observing_keyframes, vec![0, 1, 3]);
        assert!(w.bbox.width() > 3.9, "{:?}", w.bbox);
        assert_eq!(w.inliers.len(), w.support.len());
        assert!(w.inliers.iter().all(|p| (p.x - 2.0).abs() < 1e-9));
        assert_eq!(walls[1].id, 2);
    }

    #[test]
    fn doors_consolidate_and_keep_centroid() {
        let cfg = MergeConfig::default();
        let mut doors = Vec::new();
        update_door_map(&mut doors, &observation_x(1.0, 0.0, 0.3, 2.0), 0, &cfg);
        update_door_map(&mut doors, &observation_x(1.0, 0.7, 0.9, 2.0), 1, &cfg);
        assert_eq!(doors.len(), 2);
        update_door_map(&mut doors, &observation_x(1.0, 0.25, 0.75, 2.0), 2, &cfg);
        assert_eq!(consolidate_doors(&mut doors, &cfg), vec![(1, 0)]);
        let d = &doors[0];
        let oracle = crate::geom::centroid(&d.inliers).unwrap();
        assert!((d.centroid - oracle).norm() < 1e-12);
    }

    #[test]
    fn parallel_planes_stay_separate() {
        let cfg = MergeConfig::default();
        let mut walls = Vec::new();
        update_wall_map(&mut walls, &observation_x(2.0, 0.0, 4.0, 2.5), 0, &cfg);
        update_wall_map(&mut walls, &observation_x(4.0, 0.0, 4.0, 2.5), 0, &cfg);
        assert_eq!(walls.len(), 2);
        // Same plane but far along it: distinct wall too.
        update_wall_map(&mut walls, &observation_x(2.0, 10.0, 12.0, 2.5), 1, &cfg);
        assert_eq!(walls.len(), 3);
    }

    #[test]
    fn resubmitting_own_inliers_keeps_wall_count() {
        let cfg = MergeConfig::default();
        let mut walls = Vec::new();
        update_wall_map(&mut walls, &observation_x(2.0, 0.0, 4.0, 2.5), 0, &cfg);
        update_wall_map(&mut walls, &observation_x(5.0, 0.0, 4.0, 2.5), 0, &cfg);
        for w in walls.clone() {
            let obs = PlaneObservation {
                plane: w.plane,
                points: PointCloud::new(w.inliers.clone()),
            };
            update_wall_map(&mut walls, &obs, 1, &cfg);
        }
        assert_eq!(walls.len(), 2);
        for w in &walls {
            assert!(w.inliers.iter().all(|p| w.plane.signed_distance(p).abs() <= cfg.offset));
        }
    }

    #[test]
    fn door_association_examples() {
        let th = DoorThresholds::default();
        let mut walls = Vec::new();
        let cfg = MergeConfig::default();
        update_wall_map(&mut walls, &observation_x(0.0, 0.0, 4.0, 2.5), 0, &cfg);
        update_wall_map(&mut walls, &observation_x(1.52, 0.0, 4.0, 2.5), 0, &cfg);
        let door = door_at(Point3::new(0.02, 2.0, 1.0), plane([1.0, 0.0, 0.0], -0.02));
        assert_eq!(associate_door_to_wall(&door, &walls, &th), Some(0));

        let far = door_at(Point3::new(0.76, 2.0, 1.0), plane([1.0, 0.0, 0.0], -0.76));
        assert_eq!(associate_door_to_wall(&far, &walls, &th), None);

        let mut tie_walls = Vec::new();
        update_wall_map(&mut tie_walls, &observation_x(0.0, 0.0, 4.0, 2.5), 0, &cfg);
        update_wall_map(&mut tie_walls, &observation_x(0.2, 0.0, 4.0, 2.5), 0, &cfg);
        let mid = door_at(Point3::new(0.1, 2.0, 1.0), plane([1.0, 0.0, 0.0], -0.1));
        assert_eq!(associate_door_to_wall(&mid, &tie_walls, &th), Some(0));
    }

    #[test]
    fn door_state_examples() {
        let th = DoorThresholds::default();
        let wall = plane([1.0, 0.0, 0.0], 2.02);
        assert_eq!(classify_door_state(&plane([1.0, 0.0, 0.0], 2.00), &wall, &th), DoorState::Closed);
        let rotated = plane([1.0, 1.0, 0.0], 2.0);
        assert_eq!(classify_door_state(&rotated, &wall, &th), DoorState::Open);
        assert_eq!(classify_door_state(&plane([1.0, 0.0, 0.0], 2.52), &wall, &th), DoorState::Open);
        // equality is not strictly below the threshold
        let th_eq = DoorThresholds { tau_d: 0.5, ..th };
        let a = plane([1.0, 0.0, 0.0], 0.0);
        let b = plane([1.0, 0.0, 0.0], 0.5);
        assert_eq!(classify_door_state(&a, &b, &th_eq), DoorState::Open);
    }

    #[test]
    fn refresh_marks_lonely_doors_unknown() {
        let mut doors = vec![door_at(Point3::new(9.0, 9.0, 1.0), plane([1.0, 0.0, 0.0], -9.0))];
        let mut walls = Vec::new();
        update_wall_map(&mut walls, &observation_x(0.0, 0.0, 4.0, 2.5), 0, &MergeConfig::default());
        refresh_doors(&mut doors, &walls, &DoorThresholds::default());
        assert_eq!(doors[0].state, DoorState::Unknown);
        assert_eq!(doors[0].supporting_wall, None);
    }

    #[test]
    fn frame_round_trip() {
        let p = plane([0.3, 1.0, 0.0], -2.0);
        let f = InPlaneFrame::for_plane(&p);
        assert!(!f.horizontal);
        assert!((f.up - Vector3::z()).norm() < 1e-12);
        let q = f.lift(1.2, 0.7);
        assert!(p.signed_distance(&q).abs() < 1e-12);
        let (a, b) = f.coords(&q);
        assert!((a - 1.2).abs() < 1e-12 && (b - 0.7).abs() < 1e-12);
        assert!(InPlaneFrame::for_plane(&plane([0.0, 0.02, 1.0], 0.0)).horizontal);
    }

    fn arb_plane() -> impl Strategy<Value = PlaneParams> {
        (-1.0..1.0f64, -1.0..1.0f64, -1.0..1.0f64, -5.0..5.0f64)
            .prop_filter("normal", |(x, y, z, _)| x * x + y * y + z * z > 1e-2)
            .prop_map(|(x, y, z, d)| PlaneParams::new(Vector3::new(x, y, z), d).unwrap())
    }

    proptest! {
        #[test]
        fn classification_is_symmetric(a in arb_plane(), b in arb_plane()) {
            let th = DoorThresholds::default();
            prop_assert_eq!(classify_door_state(&a, &b, &th), classify_door_state(&b, &a, &th));
        }

        #[test]
        fn classification_is_rotation_invariant(
            wall in arb_plane(),
            tilt in -0.3..0.3f64,
            shift in -0.15..0.15f64,
            yaw in -3.1..3.1f64, roll in -1.0..1.0f64, pitch in -1.0..1.0f64,
        ) {
            let th = DoorThresholds::default();
            let axis = nalgebra::Unit::new_normalize(wall.normal().cross(&Vector3::new(0.2, 0.9, 0.4)));
            let n = nalgebra::Rotation3::from_axis_angle(&axis, tilt) * wall.normal().into_inner();
            let door = PlaneParams::new(n, wall.offset() + shift).unwrap();
            prop_assume!((plane_angle(&door, &wall) - th.tau_theta).abs() > 1e-9);
            prop_assume!((door.offset_difference(&wall) - th.tau_d).abs() > 1e-9);
            let iso = Isometry3::rotation(UnitQuaternion::from_euler_angles(roll, pitch, yaw).scaled_axis());
            let before = classify_door_state(&door, &wall, &th);
            let after = classify_door_state(&door.transformed(&iso), &wall.transformed(&iso), &th);
            prop_assert_eq!(before, after);
        }

        // With a relative tilt the offset difference is frame dependent, so
        // translations are only checked for parallel door and wall planes.
        #[test]
        fn classification_is_rigid_invariant_for_parallel_planes(
            wall in arb_plane(),
            shift in -0.15..0.15f64,
            yaw in -3.1..3.1f64, roll in -1.0..1.0f64,
            t in (-10.0..10.0f64, -10.0..10.0f64, -10.0..10.0f64),
        ) {
            let th = DoorThresholds::default();
            let door = PlaneParams::new(wall.normal().into_inner(), wall.offset() + shift).unwrap();
            prop_assume!((shift.abs() - th.tau_d).abs() > 1e-9);
            let iso = Isometry3::from_parts(Translation3::new(t.0, t.1, t.2),
                UnitQuaternion::from_euler_angles(roll, 0.3, yaw));
            let before = classify_door_state(&door, &wall, &th);
            let after = classify_door_state(&door.transformed(&iso), &wall.transformed(&iso), &th);
            prop_assert_eq!(before, after);
        }
    }
}

//! Points, planes, voxel downsampling and robust plane fitting.
//!
//! Planes are stored in Hessian normal form `n·p + d = 0` with a unit normal
//! and a canonical orientation: the normal component with the largest
//! magnitude is non-negative (ties resolved towards the lowest axis index).
//! Every constructor canonicalizes, so two estimates of the same physical
//! plane can be compared offset-to-offset.

use std::collections::HashMap;

use nalgebra::{DMatrix, Isometry3, Matrix3, SymmetricEigen, Unit, Vector3};
use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// A point in the global map frame, in meters.
pub type Point3 = nalgebra::Point3<f64>;

/// A unit-length direction.
pub type UnitVec3 = Unit<Vector3<f64>>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GeomError {
    #[error("degenerate input: {0}")]
    DegenerateInput(String),
    #[error("no consensus: best hypothesis reached {best} inliers, {required} required")]
    NoConsensus { best: usize, required: usize },
    #[error("invalid plane: {0}")]
    InvalidPlane(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}

/// An ordered list of finite points.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PointCloud {
    pub points: Vec<Point3>,
}

impl PointCloud {
    pub fn new(points: Vec<Point3>) -> Self {
        Self { points }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Point3> {
        self.points.iter()
    }

    /// Arithmetic mean of the points, `None` when empty.
    pub fn centroid(&self) -> Option<Point3> {
        centroid(&self.points)
    }

    pub fn transformed(&self, iso: &Isometry3<f64>) -> Self {
        Self::new(self.points.iter().map(|p| iso * p).collect())
    }
}

impl From<Vec<Point3>> for PointCloud {
    fn from(points: Vec<Point3>) -> Self {
        Self::new(points)
    }
}

impl FromIterator<Point3> for PointCloud {
    fn from_iter<I: IntoIterator<Item = Point3>>(iter: I) -> Self {
        Self::new(iter.into_iter().collect())
    }
}

pub fn centroid(points: &[Point3]) -> Option<Point3> {
    if points.is_empty() {
        return None;
    }
    let sum = points
        .iter()
        .fold(Vector3::zeros(), |acc, p| acc + p.coords);
    Some(Point3::from(sum / points.len() as f64))
}

/// Plane `normal·p + offset = 0` in canonical orientation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlaneParams {
    normal: UnitVec3,
    offset: f64,
}

impl PlaneParams {
    /// Builds a plane from a (not necessarily unit) normal and offset of
    /// `normal·p + offset = 0`. Both are rescaled by the normal's length.
    pub fn new(normal: Vector3<f64>, offset: f64) -> Result<Self, GeomError> {
        if !normal.iter().all(|c| c.is_finite()) || !offset.is_finite() {
            return Err(GeomError::InvalidPlane("non-finite parameters".into()));
        }
        let norm = normal.norm();
        if norm < 1e-12 {
            return Err(GeomError::InvalidPlane("zero-length normal".into()));
        }
        Ok(Self {
            normal: Unit::new_unchecked(normal / norm),
            offset: offset / norm,
        }
        .canonicalize())
    }

    /// Plane through `point` with the given normal direction.
    pub fn from_point_normal(point: &Point3, normal: Vector3<f64>) -> Result<Self, GeomError> {
        let norm = normal.norm();
        if norm < 1e-12 {
            return Err(GeomError::InvalidPlane("zero-length normal".into()));
        }
        let n = normal / norm;
        Self::new(n, -n.dot(&point.coords))
    }

    /// Plane through three points, `None` if they are (nearly) collinear.
    pub fn from_points(a: &Point3, b: &Point3, c: &Point3) -> Option<Self> {
        let n = (b - a).cross(&(c - a));
        let scale = (b - a).norm() * (c - a).norm();
        if n.norm() <= 1e-12 * scale.max(f64::MIN_POSITIVE) {
            return None;
        }
        Self::from_point_normal(a, n).ok()
    }

    /// Rebuilds a plane from stored `[nx, ny, nz, d]` without renormalizing
    /// when the normal is already unit within 1e-9, so stored planes load
    /// bit-exactly.
    pub fn from_array(v: [f64; 4]) -> Result<Self, GeomError> {
        let n = Vector3::new(v[0], v[1], v[2]);
        if !v.iter().all(|c| c.is_finite()) {
            return Err(GeomError::InvalidPlane("non-finite parameters".into()));
        }
        if (n.norm() - 1.0).abs() > 1e-9 {
            return Err(GeomError::InvalidPlane(format!(
                "normal length {} is not unit",
                n.norm()
            )));
        }
        Ok(Self {
            normal: Unit::new_unchecked(n),
            offset: v[3],
        }
        .canonicalize())
    }

    pub fn to_array(&self) -> [f64; 4] {
        [self.normal.x, self.normal.y, self.normal.z, self.offset]
    }

    pub fn normal(&self) -> &UnitVec3 {
        &self.normal
    }

    pub fn offset(&self) -> f64 {
        self.offset
    }

    /// Flips `(n, d)` to `(-n, -d)` when the dominant normal component is
    /// negative. Signed zeros are cleared.
    pub fn canonicalize(self) -> Self {
        let n = self.normal.into_inner();
        let mut dominant = 0;
        for i in 1..3 {
            if n[i].abs() > n[dominant].abs() {
                dominant = i;
            }
        }
        let s = if n[dominant] < 0.0 { -1.0 } else { 1.0 };
        Self {
            normal: Unit::new_unchecked(n.map(|c| s * c + 0.0)),
            offset: s * self.offset + 0.0,
        }
    }

    pub fn is_canonical(&self) -> bool {
        self.canonicalize() == *self
    }

    pub fn signed_distance(&self, p: &Point3) -> f64 {
        point_plane_signed_distance(p, self)
    }

    /// Orthogonal projection of `p` onto the plane.
    pub fn project(&self, p: &Point3) -> Point3 {
        p - self.normal.into_inner() * self.signed_distance(p)
    }

    /// Mirror image of `p` through the plane.
    pub fn reflect(&self, p: &Point3) -> Point3 {
        p - self.normal.into_inner() * (2.0 * self.signed_distance(p))
    }

    /// The same physical plane expressed after moving the world by `iso`.
    pub fn transformed(&self, iso: &Isometry3<f64>) -> Self {
        let n = iso.rotation * self.normal.into_inner();
        let offset = self.offset - n.dot(&iso.translation.vector);
        Self {
            normal: Unit::new_unchecked(n),
            offset,
        }
        .canonicalize()
    }

    /// `|d_a - d_b|` after orienting `b`'s normal to agree with `a`'s.
    ///
    /// Under canonical orientation this is the plain offset difference; the
    /// flip only matters for normals whose dominant axis differs.
    pub fn offset_difference(&self, other: &PlaneParams) -> f64 {
        if self.normal.dot(&other.normal) >= 0.0 {
            (self.offset - other.offset).abs()
        } else {
            (self.offset + other.offset).abs()
        }
    }
}

impl Serialize for PlaneParams {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        self.to_array().serialize(s)
    }
}

impl<'de> Deserialize<'de> for PlaneParams {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let v = <[f64; 4]>::deserialize(d)?;
        Self::from_array(v).map_err(serde::de::Error::custom)
    }
}

/// `n·p + d`; positive on the side the normal points to.
pub fn point_plane_signed_distance(p: &Point3, plane: &PlaneParams) -> f64 {
    plane.normal.dot(&p.coords) + plane.offset
}

/// Angle between two planes in `[0, π/2]`, ignoring normal orientation.
pub fn plane_angle(a: &PlaneParams, b: &PlaneParams) -> f64 {
    a.normal.dot(&b.normal).abs().clamp(0.0, 1.0).acos()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RansacConfig {
    /// Inlier distance threshold (m).
    pub inlier_threshold: f64,
    pub max_iterations: u32,
    /// Fraction of the cloud the winning hypothesis must explain.
    pub min_inlier_ratio: f64,
    pub rng_seed: u64,
}

impl Default for RansacConfig {
    fn default() -> Self {
        Self {
            inlier_threshold: 0.03,
            max_iterations: 200,
            min_inlier_ratio: 0.5,
            rng_seed: 42,
        }
    }
}

impl RansacConfig {
    pub fn validate(&self) -> Result<(), GeomError> {
        if !(self.inlier_threshold > 0.0) {
            return Err(GeomError::InvalidConfig(
                "inlier_threshold must be > 0".into(),
            ));
        }
        if self.max_iterations < 1 {
            return Err(GeomError::InvalidConfig("max_iterations must be >= 1".into()));
        }
        if !(self.min_inlier_ratio > 0.0 && self.min_inlier_ratio <= 1.0) {
            return Err(GeomError::InvalidConfig(
                "min_inlier_ratio must lie in (0, 1]".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlaneFit {
    pub plane: PlaneParams,
    /// Indices into the input cloud, ascending.
    pub inliers: Vec<usize>,
}

/// Total-least-squares plane through `points`: the normal is the direction of
/// least variance of the centered points.
pub fn fit_plane_least_squares(points: &[Point3]) -> Result<PlaneParams, GeomError> {
    let c = centroid(points).ok_or_else(|| GeomError::DegenerateInput("empty cloud".into()))?;
    let (eig, _) = covariance_eigen(points, &c);
    let idx = eig.eigenvalues.imin();
    let n = eig.eigenvectors.column(idx).into_owned();
    PlaneParams::from_point_normal(&c, n)
}

fn covariance_eigen(points: &[Point3], c: &Point3) -> (SymmetricEigen<f64, nalgebra::U3>, f64) {
    let mut cov = Matrix3::zeros();
    for p in points {
        let d = p - c;
        cov += d * d.transpose();
    }
    cov /= points.len() as f64;
    let trace = cov.trace();
    (SymmetricEigen::new(cov), trace)
}

/// Returns an error when the points do not span a plane.
fn check_spans_plane(points: &[Point3]) -> Result<(), GeomError> {
    if points.len() < 3 {
        return Err(GeomError::DegenerateInput(format!(
            "{} points, at least 3 required",
            points.len()
        )));
    }
    let c = centroid(points).expect("non-empty");
    let (eig, trace) = covariance_eigen(points, &c);
    let mut ev: Vec<f64> = eig.eigenvalues.iter().copied().collect();
    ev.sort_by(f64::total_cmp);
    if trace <= 0.0 || ev[1] <= 1e-12 * trace {
        return Err(GeomError::DegenerateInput(
            "points are coincident or collinear".into(),
        ));
    }
    Ok(())
}

fn collect_inliers(points: &[Point3], plane: &PlaneParams, eps: f64) -> Vec<usize> {
    points
        .iter()
        .enumerate()
        .filter(|(_, p)| plane.signed_distance(p).abs() <= eps)
        .map(|(i, _)| i)
        .collect()
}

fn count_inliers(points: &[Point3], plane: &PlaneParams, eps: f64) -> usize {
    points
        .iter()
        .filter(|p| plane.signed_distance(p).abs() <= eps)
        .count()
}

/// RANSAC plane estimation with 3-point hypotheses followed by a
/// least-squares refit on the consensus set.
///
/// The refit is repeated until the inlier set is stable, so the returned
/// inliers are exactly the points within `inlier_threshold` of the returned
/// plane. Deterministic for a fixed `rng_seed`.
pub fn fit_plane_ransac(cloud: &PointCloud, cfg: &RansacConfig) -> Result<PlaneFit, GeomError> {
    cfg.validate()?;
    let points = &cloud.points;
    check_spans_plane(points)?;
    let n = points.len();
    let eps = cfg.inlier_threshold;
    let required = ((cfg.min_inlier_ratio * n as f64).ceil() as usize).clamp(3, n);

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.rng_seed);
    let mut best: Option<(PlaneParams, usize)> = None;
    let mut needed_iterations = cfg.max_iterations as f64;
    let mut it = 0u32;
    while (it as f64) < needed_iterations.min(cfg.max_iterations as f64) {
        it += 1;
        let sample = index::sample(&mut rng, n, 3);
        let (a, b, c) = (
            &points[sample.index(0)],
            &points[sample.index(1)],
            &points[sample.index(2)],
        );
        let Some(plane) = PlaneParams::from_points(a, b, c) else {
            continue;
        };
        let count = count_inliers(points, &plane, eps);
        if best.map_or(true, |(_, bc)| count > bc) {
            best = Some((plane, count));
            // Adaptive stopping for 99.9% confidence of an all-inlier sample.
            let w = count as f64 / n as f64;
            let p_good = w * w * w;
            needed_iterations = if p_good >= 1.0 - 1e-12 {
                0.0
            } else {
                (1e-3f64).ln() / (1.0 - p_good).ln()
            };
        }
    }

    let Some((hypothesis, best_count)) = best else {
        return Err(GeomError::NoConsensus {
            best: 0,
            required,
        });
    };
    if best_count < required {
        return Err(GeomError::NoConsensus {
            best: best_count,
            required,
        });
    }

    let mut inliers = collect_inliers(points, &hypothesis, eps);
    let mut refined = None;
    for _ in 0..10 {
        let subset: Vec<Point3> = inliers.iter().map(|&i| points[i]).collect();
        let Ok(plane) = fit_plane_least_squares(&subset) else {
            break;
        };
        let next = collect_inliers(points, &plane, eps);
        let stable = next == inliers;
        refined = Some((plane, next.clone()));
        inliers = next;
        if stable || inliers.len() < 3 {
            break;
        }
    }
    match refined {
        Some((plane, inliers)) if inliers.len() >= required => Ok(PlaneFit { plane, inliers }),
        _ => Ok(PlaneFit {
            plane: hypothesis,
            inliers: collect_inliers(points, &hypothesis, eps),
        }),
    }
}

/// Total-least-squares plane computed through an SVD of the centered point
/// matrix. Numerically independent of [`fit_plane_least_squares`].
pub fn fit_plane_svd(points: &[Point3]) -> Result<PlaneParams, GeomError> {
    let c = centroid(points).ok_or_else(|| GeomError::DegenerateInput("empty cloud".into()))?;
    let m = DMatrix::from_fn(points.len(), 3, |r, k| points[r][k] - c[k]);
    let svd = m.svd(false, true);
    let v_t = svd
        .v_t
        .ok_or_else(|| GeomError::DegenerateInput("svd failed".into()))?;
    let idx = svd.singular_values.imin();
    let n = Vector3::new(v_t[(idx, 0)], v_t[(idx, 1)], v_t[(idx, 2)]);
    PlaneParams::from_point_normal(&c, n)
}

pub(crate) fn voxel_key(p: &Point3, voxel: f64) -> [i64; 3] {
    [
        (p.x / voxel).floor() as i64,
        (p.y / voxel).floor() as i64,
        (p.z / voxel).floor() as i64,
    ]
}

/// Keeps one running-mean point per occupied voxel, in first-seen order.
#[derive(Debug, Clone)]
pub struct VoxelAccumulator {
    voxel: f64,
    index: HashMap<[i64; 3], usize>,
    points: Vec<Point3>,
    support: Vec<u32>,
}

impl VoxelAccumulator {
    pub fn new(voxel: f64) -> Self {
        Self {
            voxel,
            index: HashMap::new(),
            points: Vec::new(),
            support: Vec::new(),
        }
    }

    /// Rebuilds the accumulator from stored centroids and their support.
    pub fn from_parts(voxel: f64, points: Vec<Point3>, support: Vec<u32>) -> Self {
        let index = points
            .iter()
            .enumerate()
            .map(|(i, p)| (voxel_key(p, voxel), i))
            .collect();
        Self {
            voxel,
            index,
            points,
            support,
        }
    }

    pub fn insert(&mut self, p: Point3) {
        self.insert_weighted(p, 1);
    }

    pub fn insert_weighted(&mut self, p: Point3, weight: u32) {
        let key = voxel_key(&p, self.voxel);
        match self.index.get(&key) {
            Some(&i) => {
                let n = self.support[i] as f64;
                let w = weight as f64;
                let c = self.points[i];
                self.points[i] = c + (p - c) * (w / (n + w));
                self.support[i] += weight;
            }
            None => {
                self.index.insert(key, self.points.len());
                self.points.push(p);
                self.support.push(weight);
            }
        }
    }

    /// Drops every entry failing `keep`, preserving order.
    pub fn retain(&mut self, mut keep: impl FnMut(&Point3) -> bool) {
        let mut points = Vec::with_capacity(self.points.len());
        let mut support = Vec::with_capacity(self.support.len());
        for (p, s) in self.points.iter().zip(&self.support) {
            if keep(p) {
                points.push(*p);
                support.push(*s);
            }
        }
        *self = Self::from_parts(self.voxel, points, support);
    }

    pub fn points(&self) -> &[Point3] {
        &self.points
    }

    pub fn support(&self) -> &[u32] {
        &self.support
    }

    pub fn into_parts(self) -> (Vec<Point3>, Vec<u32>) {
        (self.points, self.support)
    }
}

/// Voxel-centroid downsampling restricted to points within `max_range` of
/// `origin`. Output order follows the first point seen in each voxel.
pub fn downsample_and_range_filter(
    cloud: &PointCloud,
    voxel: f64,
    max_range: f64,
    origin: &Point3,
) -> PointCloud {
    let mut sums: Vec<(Vector3<f64>, usize)> = Vec::new();
    let mut index: HashMap<[i64; 3], usize> = HashMap::new();
    let max_sq = max_range * max_range;
    for p in cloud.iter() {
        if (p - origin).norm_squared() > max_sq {
            continue;
        }
        let key = voxel_key(p, voxel);
        let slot = *index.entry(key).or_insert_with(|| {
            sums.push((Vector3::zeros(), 0));
            sums.len() - 1
        });
        sums[slot].0 += p.coords;
        sums[slot].1 += 1;
    }
    sums.into_iter()
        .map(|(s, c)| Point3::from(s / c as f64))
        .collect()
}

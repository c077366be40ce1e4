//! Keyframe datasets: manifest, pose files and labeled `.sply` clouds.
//!
//! Layout of a sequence directory:
//!
//! ```text
//! manifest.json   {"version":1,"frames":[{"id":0,"timestamp":0.0,"pose":"poses/0.txt","cloud":"clouds/0.sply"}]}
//! poses/<id>.txt  12 numbers, row-major 3x4 [R|t], camera-to-global
//! clouds/<id>.sply
//! ```
//!
//! Cloud points are stored in the camera frame; [`KeyFrame::cloud_in_map`]
//! moves them into the global frame with the keyframe pose.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::{Isometry3, Matrix3, Rotation3, Translation3, UnitQuaternion, Vector3};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::geom::{Point3, PointCloud};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const MANIFEST_VERSION: u32 = 1;

/// Orthogonality error above which a pose is rejected.
pub const POSE_RIGIDITY_TOLERANCE: f64 = 1e-3;

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("sequence manifest not found: {0}")]
    ManifestMissing(PathBuf),
    #[error("invalid manifest {path}: {reason}")]
    InvalidManifest { path: PathBuf, reason: String },
    #[error("malformed frame {id}: {reason}")]
    MalformedFrame { id: u64, reason: String },
    #[error("pose of frame {id} is not a rigid rotation (orthogonality error {error:.3e})")]
    PoseNotRigid { id: u64, error: f64 },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SemanticClass {
    Other,
    Wall,
    Door,
    Ground,
}

impl SemanticClass {
    pub const ALL: [SemanticClass; 4] = [Self::Other, Self::Wall, Self::Door, Self::Ground];

    pub fn id(self) -> u8 {
        match self {
            Self::Other => 0,
            Self::Wall => 1,
            Self::Door => 2,
            Self::Ground => 3,
        }
    }

    pub fn from_id(id: u8) -> Option<Self> {
        Self::ALL.into_iter().find(|c| c.id() == id)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct SemanticLabel {
    pub class: SemanticClass,
    /// 0 means "no instance".
    pub instance: u32,
}

impl SemanticLabel {
    pub fn new(class: SemanticClass, instance: u32) -> Self {
        Self { class, instance }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct LabeledPointCloud {
    points: PointCloud,
    labels: Vec<SemanticLabel>,
}

impl LabeledPointCloud {
    /// Panics if the lengths differ.
    pub fn new(points: PointCloud, labels: Vec<SemanticLabel>) -> Self {
        assert_eq!(points.len(), labels.len(), "one label per point");
        Self { points, labels }
    }

    pub fn points(&self) -> &PointCloud {
        &self.points
    }

    pub fn labels(&self) -> &[SemanticLabel] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn push(&mut self, p: Point3, label: SemanticLabel) {
        self.points.points.push(p);
        self.labels.push(label);
    }

    pub fn transformed(&self, iso: &Isometry3<f64>) -> Self {
        Self {
            points: self.points.transformed(iso),
            labels: self.labels.clone(),
        }
    }
}

/// Camera-to-global rigid transform; `center` is the camera center `c_t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CameraPose {
    pub rotation: Rotation3<f64>,
    pub center: Point3,
}

impl CameraPose {
    pub fn new(rotation: Rotation3<f64>, center: Point3) -> Self {
        Self { rotation, center }
    }

    /// Validates a raw 3x3 rotation: rejected when `max|RᵀR − I|` exceeds
    /// 1e-3 or the determinant is negative, projected onto the nearest
    /// rotation when the error is above 1e-12, used verbatim otherwise.
    pub fn from_matrix(m: Matrix3<f64>, center: Point3) -> Result<Self, f64> {
        let err = orthogonality_error(&m);
        if !err.is_finite() || err > POSE_RIGIDITY_TOLERANCE || m.determinant() <= 0.0 {
            return Err(err);
        }
        let rotation = if err > 1e-12 {
            nearest_rotation(&m)
        } else {
            Rotation3::from_matrix_unchecked(m)
        };
        Ok(Self { rotation, center })
    }

    pub fn isometry(&self) -> Isometry3<f64> {
        Isometry3::from_parts(
            Translation3::from(self.center.coords),
            UnitQuaternion::from_rotation_matrix(&self.rotation),
        )
    }

    /// Row-major 3x4 `[R|t]`.
    pub fn to_rows(&self) -> [f64; 12] {
        let r = self.rotation.matrix();
        let t = self.center;
        [
            r[(0, 0)], r[(0, 1)], r[(0, 2)], t.x,
            r[(1, 0)], r[(1, 1)], r[(1, 2)], t.y,
            r[(2, 0)], r[(2, 1)], r[(2, 2)], t.z,
        ]
    }

    pub fn from_rows(v: &[f64; 12]) -> Result<Self, f64> {
        let m = Matrix3::new(v[0], v[1], v[2], v[4], v[5], v[6], v[8], v[9], v[10]);
        Self::from_matrix(m, Point3::new(v[3], v[7], v[11]))
    }

    /// Camera-to-global: maps a camera-frame point into the map.
    pub fn to_global(&self, p: &Point3) -> Point3 {
        self.rotation * p + self.center.coords
    }

    pub fn to_camera(&self, p: &Point3) -> Point3 {
        Point3::from(self.rotation.inverse() * (p - self.center))
    }
}

impl Serialize for CameraPose {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        self.to_rows().serialize(s)
    }
}

impl<'de> Deserialize<'de> for CameraPose {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let v = <[f64; 12]>::deserialize(d)?;
        Self::from_rows(&v).map_err(|e| {
            serde::de::Error::custom(format!("pose is not rigid (orthogonality error {e:.3e})"))
        })
    }
}

fn orthogonality_error(m: &Matrix3<f64>) -> f64 {
    (m.transpose() * m - Matrix3::identity()).amax()
}

fn nearest_rotation(m: &Matrix3<f64>) -> Rotation3<f64> {
    let svd = m.svd(true, true);
    let u = svd.u.expect("u requested");
    let v_t = svd.v_t.expect("v_t requested");
    let mut r = u * v_t;
    if r.determinant() < 0.0 {
        let mut u = u;
        u.column_mut(2).neg_mut();
        r = u * v_t;
    }
    Rotation3::from_matrix_unchecked(r)
}

/// Pose-only view of a keyframe, used for trajectory reasoning.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PoseSample {
    pub id: u64,
    pub timestamp: f64,
    pub pose: CameraPose,
}

impl PoseSample {
    pub fn center(&self) -> Point3 {
        self.pose.center
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KeyFrame {
    pub id: u64,
    pub timestamp: f64,
    pub pose: CameraPose,
    /// Points in the camera frame.
    pub cloud: LabeledPointCloud,
}

impl KeyFrame {
    pub fn pose_sample(&self) -> PoseSample {
        PoseSample {
            id: self.id,
            timestamp: self.timestamp,
            pose: self.pose,
        }
    }

    pub fn cloud_in_map(&self) -> LabeledPointCloud {
        self.cloud.transformed(&self.pose.isometry())
    }

    /// Feeds the frame's content into a digest, in a fixed byte layout.
    pub fn digest_into(&self, h: &mut Sha256) {
        h.update(self.id.to_le_bytes());
        h.update(self.timestamp.to_le_bytes());
        for v in self.pose.to_rows() {
            h.update(v.to_le_bytes());
        }
        h.update((self.cloud.len() as u64).to_le_bytes());
        for (p, l) in self.cloud.points().iter().zip(self.cloud.labels()) {
            h.update(p.x.to_le_bytes());
            h.update(p.y.to_le_bytes());
            h.update(p.z.to_le_bytes());
            h.update([l.class.id()]);
            h.update(l.instance.to_le_bytes());
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub version: u32,
    pub frames: Vec<ManifestEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestEntry {
    pub id: u64,
    pub timestamp: f64,
    pub pose: String,
    pub cloud: String,
}

fn read_to_string(path: &Path) -> Result<String, IngestError> {
    fs::read_to_string(path).map_err(|source| IngestError::Io {
        path: path.to_owned(),
        source,
    })
}

fn write_file(path: &Path, contents: &str) -> Result<(), IngestError> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|source| IngestError::Io {
            path: parent.to_owned(),
            source,
        })?;
    }
    fs::write(path, contents).map_err(|source| IngestError::Io {
        path: path.to_owned(),
        source,
    })
}

pub fn read_manifest(dir: &Path) -> Result<Manifest, IngestError> {
    let path = dir.join(MANIFEST_FILE);
    if !path.is_file() {
        return Err(IngestError::ManifestMissing(path));
    }
    let text = read_to_string(&path)?;
    let manifest: Manifest =
        serde_json::from_str(&text).map_err(|e| IngestError::InvalidManifest {
            path: path.clone(),
            reason: e.to_string(),
        })?;
    if manifest.version != MANIFEST_VERSION {
        return Err(IngestError::InvalidManifest {
            path,
            reason: format!(
                "unsupported version {} (expected {MANIFEST_VERSION})",
                manifest.version
            ),
        });
    }
    Ok(manifest)
}

/// Parses a pose file: 12 whitespace-separated numbers.
pub fn parse_pose(text: &str) -> Result<[f64; 12], String> {
    let values: Vec<f64> = text
        .split_whitespace()
        .map(|t| t.parse::<f64>().map_err(|e| format!("bad number {t:?}: {e}")))
        .collect::<Result<_, _>>()?;
    if values.len() != 12 {
        return Err(format!("expected 12 numbers, found {}", values.len()));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err("non-finite pose entry".into());
    }
    Ok(values.try_into().expect("length checked"))
}

pub fn format_pose(pose: &CameraPose) -> String {
    let r = pose.to_rows();
    let mut s = String::new();
    for row in r.chunks(4) {
        let line: Vec<String> = row.iter().map(|v| format!("{v:?}")).collect();
        s.push_str(&line.join(" "));
        s.push('\n');
    }
    s
}

/// Parses an `.sply` document. Errors carry 1-based line numbers.
pub fn parse_sply(text: &str) -> Result<LabeledPointCloud, String> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, l)) if l.trim() == "sply 1" => {}
        Some((_, l)) => return Err(format!("line 1: expected header `sply 1`, found {l:?}")),
        None => return Err("empty file".into()),
    }
    let count: usize = match lines.next() {
        Some((_, l)) => {
            let mut it = l.split_whitespace();
            match (it.next(), it.next(), it.next()) {
                (Some("count"), Some(n), None) => n
                    .parse()
                    .map_err(|e| format!("line 2: bad count {n:?}: {e}"))?,
                _ => return Err(format!("line 2: expected `count N`, found {l:?}")),
            }
        }
        None => return Err("line 2: missing `count N`".into()),
    };
    let mut cloud = LabeledPointCloud::default();
    for (i, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let lineno = i + 1;
        if cloud.len() == count {
            return Err(format!("line {lineno}: more than {count} points"));
        }
        let tok: Vec<&str> = line.split_whitespace().collect();
        if tok.len() != 5 {
            return Err(format!("line {lineno}: expected 5 fields, found {}", tok.len()));
        }
        let coord = |s: &str| -> Result<f64, String> {
            let v: f64 = s
                .parse()
                .map_err(|e| format!("line {lineno}: bad coordinate {s:?}: {e}"))?;
            if v.is_finite() {
                Ok(v)
            } else {
                Err(format!("line {lineno}: non-finite coordinate"))
            }
        };
        let p = Point3::new(coord(tok[0])?, coord(tok[1])?, coord(tok[2])?);
        let class_id: u8 = tok[3]
            .parse()
            .map_err(|e| format!("line {lineno}: bad class id {:?}: {e}", tok[3]))?;
        let class = SemanticClass::from_id(class_id)
            .ok_or_else(|| format!("line {lineno}: unknown class id {class_id}"))?;
        let instance: u32 = tok[4]
            .parse()
            .map_err(|e| format!("line {lineno}: bad instance id {:?}: {e}", tok[4]))?;
        cloud.push(p, SemanticLabel::new(class, instance));
    }
    if cloud.len() != count {
        return Err(format!("declared {count} points, found {}", cloud.len()));
    }
    Ok(cloud)
}

pub fn format_sply(cloud: &LabeledPointCloud) -> String {
    let mut s = String::with_capacity(32 + cloud.len() * 48);
    s.push_str("sply 1\n");
    let _ = writeln!(s, "count {}", cloud.len());
    for (p, l) in cloud.points().iter().zip(cloud.labels()) {
        let _ = writeln!(s, "{:?} {:?} {:?} {} {}", p.x, p.y, p.z, l.class.id(), l.instance);
    }
    s
}

fn load_frame(dir: &Path, entry: &ManifestEntry) -> Result<KeyFrame, IngestError> {
    let id = entry.id;
    let malformed = |reason: String| IngestError::MalformedFrame { id, reason };
    let pose_path = dir.join(&entry.pose);
    let pose_text = fs::read_to_string(&pose_path)
        .map_err(|e| malformed(format!("{}: {e}", pose_path.display())))?;
    let rows = parse_pose(&pose_text).map_err(|r| malformed(format!("{}: {r}", pose_path.display())))?;
    let pose = CameraPose::from_rows(&rows).map_err(|error| IngestError::PoseNotRigid { id, error })?;
    let cloud_path = dir.join(&entry.cloud);
    let cloud_text = fs::read_to_string(&cloud_path)
        .map_err(|e| malformed(format!("{}: {e}", cloud_path.display())))?;
    let cloud = parse_sply(&cloud_text).map_err(|r| malformed(format!("{}: {r}", cloud_path.display())))?;
    if !entry.timestamp.is_finite() {
        return Err(malformed("non-finite timestamp".into()));
    }
    Ok(KeyFrame {
        id,
        timestamp: entry.timestamp,
        pose,
        cloud,
    })
}

/// Loads every frame listed in `dir/manifest.json`, ordered by id.
/// Frames are parsed in parallel.
pub fn load_sequence(dir: &Path) -> Result<Vec<KeyFrame>, IngestError> {
    let manifest = read_manifest(dir)?;
    let mut frames: Vec<KeyFrame> = manifest
        .frames
        .par_iter()
        .map(|e| load_frame(dir, e))
        .collect::<Result<_, _>>()?;
    frames.sort_by_key(|f| f.id);
    for pair in frames.windows(2) {
        if pair[0].id == pair[1].id {
            return Err(IngestError::MalformedFrame {
                id: pair[1].id,
                reason: "duplicate frame id".into(),
            });
        }
        if pair[1].timestamp < pair[0].timestamp {
            return Err(IngestError::MalformedFrame {
                id: pair[1].id,
                reason: "timestamp decreases along the sequence".into(),
            });
        }
    }
    Ok(frames)
}

/// Writes frames in the layout [`load_sequence`] reads.
pub fn save_sequence(dir: &Path, frames: &[KeyFrame]) -> Result<(), IngestError> {
    let mut manifest = Manifest {
        version: MANIFEST_VERSION,
        frames: Vec::with_capacity(frames.len()),
    };
    for f in frames {
        let pose = format!("poses/{}.txt", f.id);
        let cloud = format!("clouds/{}.sply", f.id);
        write_file(&dir.join(&pose), &format_pose(&f.pose))?;
        write_file(&dir.join(&cloud), &format_sply(&f.cloud))?;
        manifest.frames.push(ManifestEntry {
            id: f.id,
            timestamp: f.timestamp,
            pose,
            cloud,
        });
    }
    let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    write_file(&dir.join(MANIFEST_FILE), &(text + "\n"))
}

/// Points of one class split by instance id.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ClassPartition {
    /// Instances with at least the minimum point count, by ascending id.
    pub kept: Vec<(u32, PointCloud)>,
    /// Instances below the minimum, by ascending id.
    pub dropped: Vec<(u32, PointCloud)>,
}

pub fn partition_class(
    cloud: &LabeledPointCloud,
    class: SemanticClass,
    min_points: usize,
) -> ClassPartition {
    let mut groups: std::collections::BTreeMap<u32, Vec<Point3>> = Default::default();
    for (p, l) in cloud.points().iter().zip(cloud.labels()) {
        if l.class == class {
            groups.entry(l.instance).or_default().push(*p);
        }
    }
    let mut out = ClassPartition::default();
    for (id, pts) in groups {
        if pts.len() >= min_points {
            out.kept.push((id, PointCloud::new(pts)));
        } else {
            out.dropped.push((id, PointCloud::new(pts)));
        }
    }
    out
}

/// Instance subsets of `class` in the keyframe's own (camera) frame,
/// dropping instances with fewer than `min_points` points.
pub fn extract_class_subset(
    kf: &KeyFrame,
    class: SemanticClass,
    min_points: usize,
) -> Vec<(u32, PointCloud)> {
    partition_class(&kf.cloud, class, min_points).kept
}

/// A yaw-only camera pose looking along `heading` (radians about +z) with
/// the optical axis horizontal: camera x right, y down, z forward.
pub fn level_camera_pose(center: Point3, heading: f64) -> CameraPose {
    let forward = Vector3::new(heading.cos(), heading.sin(), 0.0);
    let right = Vector3::new(heading.sin(), -heading.cos(), 0.0);
    let down = Vector3::new(0.0, 0.0, -1.0);
    let m = Matrix3::from_columns(&[right, down, forward]);
    CameraPose::new(Rotation3::from_matrix_unchecked(m), center)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn frame(id: u64, n_wall: usize) -> KeyFrame {
        let mut cloud = LabeledPointCloud::default();
        for i in 0..n_wall {
            cloud.push(
                Point3::new(0.1 * i as f64, 0.25, 1.0 / 3.0),
                SemanticLabel::new(SemanticClass::Wall, 1),
            );
        }
        KeyFrame {
            id,
            timestamp: id as f64 * 0.5,
            pose: level_camera_pose(Point3::new(id as f64, 0.3, 1.0), 0.7 * id as f64),
            cloud,
        }
    }

    #[test]
    fn three_frames_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let frames: Vec<KeyFrame> = (0..3).map(|i| frame(i, 10 + i as usize)).collect();
        save_sequence(dir.path(), &frames).unwrap();
        let loaded = load_sequence(dir.path()).unwrap();
        assert_eq!(loaded.iter().map(|f| f.id).collect::<Vec<_>>(), vec![0, 1, 2]);
        for (a, b) in frames.iter().zip(&loaded) {
            assert_eq!(a.cloud, b.cloud);
            for (x, y) in a.pose.to_rows().iter().zip(b.pose.to_rows()) {
                assert!((x - y).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn missing_cloud_file_is_malformed_frame() {
        let dir = tempfile::tempdir().unwrap();
        save_sequence(dir.path(), &[frame(0, 3)]).unwrap();
        fs::remove_file(dir.path().join("clouds/0.sply")).unwrap();
        assert!(matches!(
            load_sequence(dir.path()),
            Err(IngestError::MalformedFrame { id: 0, .. })
        ));
    }

    #[test]
    fn empty_manifest_gives_empty_sequence() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join(MANIFEST_FILE), r#"{"version":1,"frames":[]}"#).unwrap();
        assert!(load_sequence(dir.path()).unwrap().is_empty());
    }

    #[test]
    fn missing_manifest() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(
            load_sequence(dir.path()),
            Err(IngestError::ManifestMissing(_))
        ));
    }

    #[test]
    fn non_rigid_pose_rejected() {
        let dir = tempfile::tempdir().unwrap();
        save_sequence(dir.path(), &[frame(0, 3)]).unwrap();
        fs::write(
            dir.path().join("poses/0.txt"),
            "1 0 0 0\n0 1.01 0 0\n0 0 1 0\n",
        )
        .unwrap();
        assert!(matches!(
            load_sequence(dir.path()),
            Err(IngestError::PoseNotRigid { id: 0, .. })
        ));
        // A reflection is never a pose.
        assert!(CameraPose::from_matrix(Matrix3::from_diagonal(&Vector3::new(1.0, 1.0, -1.0)), Point3::origin()).is_err());
    }

    #[test]
    fn slightly_rounded_pose_is_reorthonormalized() {
        let m = Matrix3::new(1.0, 0.0002, 0.0, -0.0002, 1.0, 0.0, 0.0, 0.0, 1.0);
        let pose = CameraPose::from_matrix(m, Point3::origin()).unwrap();
        let r = pose.rotation.matrix();
        assert!(orthogonality_error(r) < 1e-12);
        assert!((r.determinant() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn sply_errors_name_the_line() {
        let err = parse_sply("sply 1\ncount 2\n0 0 0 1 1\n0 0 x 1 1\n").unwrap_err();
        assert!(err.starts_with("line 4"), "{err}");
        let err = parse_sply("sply 1\ncount 2\n0 0 0 9 1\n").unwrap_err();
        assert!(err.contains("unknown class"), "{err}");
        assert!(parse_sply("ply\n").is_err());
        assert!(parse_sply("sply 1\ncount 2\n0 0 0 1 1\n").is_err());
    }

    #[test]
    fn class_subset_examples() {
        let mut kf = frame(0, 0);
        for i in 0..400 {
            kf.cloud.push(Point3::new(i as f64, 0.0, 0.0), SemanticLabel::new(SemanticClass::Wall, 1));
        }
        for i in 0..120 {
            kf.cloud.push(Point3::new(i as f64, 1.0, 0.0), SemanticLabel::new(SemanticClass::Door, 7));
        }
        for i in 0..30 {
            kf.cloud.push(Point3::new(i as f64, 2.0, 0.0), SemanticLabel::new(SemanticClass::Door, 8));
        }
        let walls = extract_class_subset(&kf, SemanticClass::Wall, 50);
        assert_eq!(walls.len(), 1);
        assert_eq!(walls[0].0, 1);
        assert_eq!(walls[0].1.len(), 400);
        let doors = extract_class_subset(&kf, SemanticClass::Door, 50);
        assert_eq!(doors.len(), 1);
        assert_eq!((doors[0].0, doors[0].1.len()), (7, 120));
        assert!(extract_class_subset(&kf, SemanticClass::Ground, 50).is_empty());
    }

    #[test]
    fn level_pose_is_rotation() {
        let p = level_camera_pose(Point3::new(1.0, 2.0, 1.0), 1.1);
        assert!(orthogonality_error(p.rotation.matrix()) < 1e-12);
        assert!((p.rotation.matrix().determinant() - 1.0).abs() < 1e-12);
        let ahead = p.to_global(&Point3::new(0.0, 0.0, 2.0));
        assert!((ahead - Point3::new(1.0 + 2.0 * 1.1f64.cos(), 2.0 + 2.0 * 1.1f64.sin(), 1.0)).norm() < 1e-12);
    }

    proptest! {
        #[test]
        fn partition_covers_every_class_point(
            labels in proptest::collection::vec((0u8..4, 0u32..5), 0..300),
            min_points in 0usize..40,
        ) {
            let mut cloud = LabeledPointCloud::default();
            for (i, (c, inst)) in labels.iter().enumerate() {
                cloud.push(Point3::new(i as f64, 0.0, 0.0),
                    SemanticLabel::new(SemanticClass::from_id(*c).unwrap(), *inst));
            }
            for class in SemanticClass::ALL {
                let part = partition_class(&cloud, class, min_points);
                let mut got: Vec<f64> = part.kept.iter().chain(&part.dropped)
                    .flat_map(|(_, pc)| pc.iter().map(|p| p.x)).collect();
                got.sort_by(f64::total_cmp);
                let want: Vec<f64> = cloud.points().iter().zip(cloud.labels())
                    .filter(|(_, l)| l.class == class).map(|(p, _)| p.x).collect();
                prop_assert_eq!(got, want);
                prop_assert!(part.kept.iter().all(|(_, pc)| pc.len() >= min_points));
                prop_assert!(part.dropped.iter().all(|(_, pc)| pc.len() < min_points));
            }
        }

        #[test]
        fn sply_round_trips_bit_exactly(
            pts in proptest::collection::vec((-1e3..1e3f64, -1e3..1e3f64, -1e3..1e3f64, 0u8..4, any::<u32>()), 0..50)
        ) {
            let mut cloud = LabeledPointCloud::default();
            for (x, y, z, c, i) in pts {
                cloud.push(Point3::new(x, y, z), SemanticLabel::new(SemanticClass::from_id(c).unwrap(), i));
            }
            let back = parse_sply(&format_sply(&cloud)).unwrap();
            prop_assert_eq!(back, cloud);
        }
    }
}

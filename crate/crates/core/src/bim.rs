//! Checking detected passages against an as-planned building model.
//!
//! The planned passages are expected in the map frame. Matching is a
//! one-to-one assignment that first maximizes the number of pairs within
//! `match_radius` and then minimizes their summed centroid distance.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::assign::min_cost_assignment;
use crate::geom::Point3;
use crate::passage::{Extent, Passage, PassageKind};

pub const PRIOR_SCHEMA: &str = "bimprior/1";

/// Confidence of a passage confirmed by the prior.
pub const PRIOR_CONFIDENCE: f64 = 0.95;

#[derive(Debug, Error)]
pub enum BimError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("{path}: {reason}")]
    Parse { path: String, reason: String },
    #[error("{path}: schema {found:?}, expected {expected:?}")]
    SchemaVersionMismatch {
        path: String,
        found: String,
        expected: String,
    },
    #[error("planned passage {id}: {reason}")]
    InvalidPlanned { id: u32, reason: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlannedPassage {
    pub id: u32,
    pub centroid: Point3,
    pub extent: Extent,
    pub kind: PassageKind,
}

impl PlannedPassage {
    pub fn validate(&self) -> Result<(), BimError> {
        let e = self.extent;
        if !(e.width > 0.0 && e.height > 0.0) {
            return Err(BimError::InvalidPlanned {
                id: self.id,
                reason: "extent must be positive".into(),
            });
        }
        if !self.centroid.coords.iter().all(|v| v.is_finite()) {
            return Err(BimError::InvalidPlanned {
                id: self.id,
                reason: "centroid must be finite".into(),
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MatchedPair {
    pub detected: u32,
    pub planned: u32,
    /// Centroid distance (m).
    pub centroid_error: f64,
    /// Largest absolute width or height difference (m).
    pub extent_error: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    /// Sorted by planned id.
    pub matched: Vec<MatchedPair>,
    pub missing: Vec<u32>,
    pub spurious: Vec<u32>,
    /// Matched pairs with centroid error above `align_tol`.
    pub misaligned: Vec<MatchedPair>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PriorConfig {
    /// Pairs farther apart never match (m).
    pub match_radius: f64,
    /// Matched pairs farther apart are misaligned (m).
    pub align_tol: f64,
}

impl Default for PriorConfig {
    fn default() -> Self {
        Self {
            match_radius: 0.5,
            align_tol: 0.15,
        }
    }
}

impl PriorConfig {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.align_tol > 0.0 && self.match_radius > self.align_tol) {
            return Err("prior needs match_radius > align_tol > 0".into());
        }
        Ok(())
    }
}

/// Matches detected against planned passages.
pub fn validate_against_prior(
    detected: &[Passage],
    planned: &[PlannedPassage],
    cfg: &PriorConfig,
) -> ValidationReport {
    let mut det: Vec<&Passage> = detected.iter().collect();
    det.sort_by_key(|p| p.id);
    let mut plan: Vec<&PlannedPassage> = planned.iter().collect();
    plan.sort_by_key(|p| p.id);

    let mut report = ValidationReport::default();
    if det.is_empty() || plan.is_empty() {
        report.missing = plan.iter().map(|p| p.id).collect();
        report.spurious = det.iter().map(|p| p.id).collect();
        return report;
    }

    // Any feasible pair must beat every infeasible one, whatever the rest.
    let big = (det.len().min(plan.len()) as f64 + 1.0) * cfg.match_radius + 1.0;
    let dist = |d: &Passage, p: &PlannedPassage| (d.centroid - p.centroid).norm();
    let cost: Vec<Vec<f64>> = plan
        .iter()
        .map(|p| {
            det.iter()
                .map(|d| {
                    let e = dist(d, p);
                    if e <= cfg.match_radius {
                        e
                    } else {
                        big
                    }
                })
                .collect()
        })
        .collect();
    let assignment = min_cost_assignment(&cost);

    let mut used = vec![false; det.len()];
    for (pi, a) in assignment.iter().enumerate() {
        let p = plan[pi];
        match *a {
            Some(di) if cost[pi][di] < big => {
                used[di] = true;
                let d = det[di];
                let pair = MatchedPair {
                    detected: d.id,
                    planned: p.id,
                    centroid_error: dist(d, p),
                    extent_error: (d.extent.width - p.extent.width)
                        .abs()
                        .max((d.extent.height - p.extent.height).abs()),
                };
                if pair.centroid_error > cfg.align_tol {
                    report.misaligned.push(pair);
                }
                report.matched.push(pair);
            }
            _ => report.missing.push(p.id),
        }
    }
    report.spurious = det
        .iter()
        .zip(&used)
        .filter(|(_, u)| !**u)
        .map(|(d, _)| d.id)
        .collect();
    report
}

/// Adopts planned kinds for matched `Unknown` passages and raises the
/// confidence of every matched passage to at least [`PRIOR_CONFIDENCE`].
pub fn upgrade_kinds_from_prior(
    detected: &[Passage],
    report: &ValidationReport,
    planned: &[PlannedPassage],
) -> Vec<Passage> {
    detected
        .iter()
        .map(|d| {
            let Some(pair) = report.matched.iter().find(|m| m.detected == d.id) else {
                return d.clone();
            };
            let mut out = d.clone();
            if let Some(p) = planned.iter().find(|p| p.id == pair.planned) {
                // a doorway needs door evidence; without it the kind stays open
                let door_ok = p.kind != PassageKind::Doorway || d.associated_door.is_some();
                if d.kind == PassageKind::Unknown && door_ok {
                    out.kind = p.kind;
                }
            }
            out.confidence = out.confidence.max(PRIOR_CONFIDENCE);
            out
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PriorFile {
    pub schema: String,
    pub passages: Vec<PlannedPassage>,
}

pub fn load_prior(path: &Path) -> Result<Vec<PlannedPassage>, BimError> {
    let shown = path.display().to_string();
    let text = std::fs::read_to_string(path).map_err(|source| BimError::Io {
        path: shown.clone(),
        source,
    })?;
    let value: serde_json::Value = serde_json::from_str(&text).map_err(|e| BimError::Parse {
        path: shown.clone(),
        reason: e.to_string(),
    })?;
    let found = value.get("schema").and_then(|s| s.as_str()).unwrap_or("");
    if found != PRIOR_SCHEMA {
        return Err(BimError::SchemaVersionMismatch {
            path: shown,
            found: found.to_string(),
            expected: PRIOR_SCHEMA.to_string(),
        });
    }
    let file: PriorFile = serde_json::from_value(value).map_err(|e| BimError::Parse {
        path: shown,
        reason: e.to_string(),
    })?;
    let mut seen = std::collections::BTreeSet::new();
    for p in &file.passages {
        p.validate()?;
        if !seen.insert(p.id) {
            return Err(BimError::InvalidPlanned {
                id: p.id,
                reason: "duplicate id".into(),
            });
        }
    }
    Ok(file.passages)
}

pub fn save_prior(path: &Path, planned: &[PlannedPassage]) -> Result<(), BimError> {
    let file = PriorFile {
        schema: PRIOR_SCHEMA.to_string(),
        passages: planned.to_vec(),
    };
    let text = serde_json::to_string_pretty(&file).expect("serializable");
    std::fs::write(path, text + "\n").map_err(|source| BimError::Io {
        path: path.display().to_string(),
        source,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::passage::Provenance;
    use proptest::prelude::*;

    fn det(id: u32, c: [f64; 3], kind: PassageKind) -> Passage {
        Passage {
            id,
            wall_id: 0,
            centroid: Point3::new(c[0], c[1], c[2]),
            extent: Extent::new(0.9, 2.0),
            kind,
            provenance: Provenance::Gap,
            associated_door: (kind == PassageKind::Doorway).then_some(0),
            confidence: 0.7,
        }
    }

    fn plan(id: u32, c: [f64; 3], kind: PassageKind) -> PlannedPassage {
        PlannedPassage {
            id,
            centroid: Point3::new(c[0], c[1], c[2]),
            extent: Extent::new(0.9, 2.1),
            kind,
        }
    }

    #[test]
    fn examples() {
        let cfg = PriorConfig::default();
        let r = validate_against_prior(
            &[det(0, [0.05, 0.0, 1.0], PassageKind::Unknown)],
            &[plan(7, [0.0, 0.0, 1.0], PassageKind::Doorway)],
            &cfg,
        );
        assert_eq!(r.matched.len(), 1);
        assert!((r.matched[0].centroid_error - 0.05).abs() < 1e-12);
        assert!((r.matched[0].extent_error - 0.1).abs() < 1e-12);
        assert!(r.misaligned.is_empty());

        let r = validate_against_prior(
            &[det(0, [0.3, 0.0, 1.0], PassageKind::Unknown)],
            &[plan(7, [0.0, 0.0, 1.0], PassageKind::Doorway), plan(8, [5.0, 0.0, 1.0], PassageKind::Doorway)],
            &cfg,
        );
        assert_eq!(r.matched.len(), 1);
        assert_eq!(r.misaligned.len(), 1);
        assert_eq!(r.missing, vec![8]);
        assert!(r.spurious.is_empty());
    }

    #[test]
    fn prefers_more_matches_over_shorter_total() {
        // greedy nearest would pair d0-p0 and leave p1 unmatched
        let cfg = PriorConfig::default();
        let r = validate_against_prior(
            &[det(0, [0.0, 0.0, 1.0], PassageKind::Unknown), det(1, [0.0, 0.8, 1.0], PassageKind::Unknown)],
            &[plan(0, [0.0, 0.4, 1.0], PassageKind::Unknown), plan(1, [0.0, -0.1, 1.0], PassageKind::Unknown)],
            &cfg,
        );
        assert_eq!(r.matched.len(), 2);
        assert!(r.missing.is_empty() && r.spurious.is_empty());
    }

    #[test]
    fn upgrade_examples() {
        let cfg = PriorConfig::default();
        let detected = [
            det(0, [0.0, 0.0, 1.0], PassageKind::Unknown),
            det(1, [3.0, 0.0, 1.0], PassageKind::Doorway),
            det(2, [9.0, 0.0, 1.0], PassageKind::Unknown),
        ];
        let planned = [
            plan(0, [0.0, 0.1, 1.0], PassageKind::Archway),
            plan(1, [3.0, 0.0, 1.0], PassageKind::Doorway),
        ];
        let r = validate_against_prior(&detected, &planned, &cfg);
        let up = upgrade_kinds_from_prior(&detected, &r, &planned);
        assert_eq!(up[0].kind, PassageKind::Archway);
        assert_eq!(up[1].kind, PassageKind::Doorway);
        assert!(up[1].confidence >= 0.95);
        assert_eq!(up[2], detected[2]);
    }

    #[test]
    fn prior_file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("prior.json");
        let planned = vec![plan(3, [1.0, 2.0, 1.05], PassageKind::Doorway)];
        save_prior(&path, &planned).unwrap();
        assert_eq!(load_prior(&path).unwrap(), planned);
        let text = std::fs::read_to_string(&path).unwrap().replace("bimprior/1", "bimprior/2");
        std::fs::write(&path, text).unwrap();
        assert!(matches!(load_prior(&path), Err(BimError::SchemaVersionMismatch { .. })));
        save_prior(&path, &[planned[0].clone(), planned[0].clone()]).unwrap();
        assert!(matches!(load_prior(&path), Err(BimError::InvalidPlanned { id: 3, .. })));
    }

    fn arb_points(max: usize) -> impl Strategy<Value = Vec<[f64; 3]>> {
        proptest::collection::vec((0.0..3.0f64, 0.0..3.0f64, 0.5..1.5f64).prop_map(|(x, y, z)| [x, y, z]), 0..max)
    }

    fn categories(r: &ValidationReport) -> (Vec<(u32, u32)>, Vec<u32>, Vec<u32>) {
        let mut m: Vec<(u32, u32)> = r.matched.iter().map(|p| (p.detected, p.planned)).collect();
        m.sort_unstable();
        let (mut a, mut b) = (r.missing.clone(), r.spurious.clone());
        a.sort_unstable();
        b.sort_unstable();
        (m, a, b)
    }

    proptest! {
        #[test]
        fn report_properties(ds in arb_points(7), ps in arb_points(7), radius in 0.2..1.0f64, shrink in 0.1..1.0f64) {
            let detected: Vec<Passage> = ds.iter().enumerate().map(|(i, c)| det(i as u32, *c, PassageKind::Unknown)).collect();
            let planned: Vec<PlannedPassage> = ps.iter().enumerate().map(|(i, c)| plan(i as u32 + 100, *c, PassageKind::Doorway)).collect();
            let cfg = PriorConfig { match_radius: radius, align_tol: radius / 2.0 };
            let r = validate_against_prior(&detected, &planned, &cfg);
            prop_assert_eq!(r.matched.len() + r.missing.len(), planned.len());
            prop_assert_eq!(r.matched.len() + r.spurious.len(), detected.len());
            for m in &r.matched {
                prop_assert!(m.centroid_error <= radius);
            }

            let mut d2 = detected.clone();
            d2.reverse();
            let mut p2 = planned.clone();
            p2.rotate_left(planned.len() / 2);
            let r2 = validate_against_prior(&d2, &p2, &cfg);
            prop_assert_eq!(categories(&r), categories(&r2));

            let smaller = PriorConfig { match_radius: radius * shrink, align_tol: radius * shrink / 2.0 };
            let r3 = validate_against_prior(&detected, &planned, &smaller);
            prop_assert!(r3.matched.len() <= r.matched.len());
        }
    }
}

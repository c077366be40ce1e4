//! The graph document layout is pinned by a golden file. Set
//! `PASSMAP_UPDATE_GOLDEN=1` to rewrite it after an intentional change.

use std::path::PathBuf;

use passage_map::entities::{Door, DoorState, InPlaneBox, Wall};
use passage_map::geom::{PlaneParams, Point3};
use passage_map::graph::{derive_connectivity, load_graph, save_graph, PipelineConfig, RoomRegion, SceneGraph};
use passage_map::ingest::{CameraPose, PoseSample};
use passage_map::passage::{Extent, Passage, PassageKind, Provenance};

fn wall(id: u32, x: f64) -> Wall {
    Wall {
        id,
        plane: PlaneParams::new(nalgebra::Vector3::x(), -x).unwrap(),
        inliers: vec![Point3::new(x, 0.5, 0.5), Point3::new(x, 3.5, 2.0)],
        support: vec![2, 1],
        observing_keyframes: vec![0, 1],
        bbox: InPlaneBox {
            across: [-3.5, -0.5],
            up: [0.5, 2.0],
        },
    }
}

fn small_graph() -> SceneGraph {
    let mut g = SceneGraph::new(PipelineConfig::default());
    g.source_digest = "00".repeat(32);
    g.trajectory = vec![
        PoseSample {
            id: 0,
            timestamp: 0.0,
            pose: CameraPose::new(nalgebra::Rotation3::identity(), Point3::new(2.5, 2.0, 1.2)),
        },
        PoseSample {
            id: 1,
            timestamp: 0.5,
            pose: CameraPose::new(nalgebra::Rotation3::identity(), Point3::new(7.5, 2.0, 1.2)),
        },
    ];
    g.walls = vec![wall(0, 0.0), wall(1, 5.0)];
    g.doors = vec![Door {
        id: 0,
        plane: g.walls[0].plane,
        inliers: vec![Point3::new(0.02, 1.5, 1.0)],
        support: vec![3],
        observing_keyframes: vec![0],
        bbox: InPlaneBox {
            across: [-1.95, -1.05],
            up: [0.0, 2.0],
        },
        centroid: Point3::new(0.02, 1.5, 1.0),
        supporting_wall: Some(0),
        state: DoorState::Closed,
    }];
    let closed = Passage {
        id: 0,
        wall_id: 0,
        centroid: Point3::new(0.0, 1.5, 1.0),
        extent: Extent::new(0.9, 2.0),
        kind: PassageKind::Doorway,
        provenance: Provenance::ClosedDoor,
        associated_door: Some(0),
        confidence: 0.9,
    };
    let open = Passage {
        id: 1,
        wall_id: 1,
        centroid: Point3::new(5.0, 2.0, 1.0),
        extent: Extent::new(1.0, 2.0),
        kind: PassageKind::Unknown,
        provenance: Provenance::Gap,
        associated_door: None,
        confidence: 0.85,
    };
    g.closed_door_evidence = vec![closed.clone()];
    g.passages = vec![closed, open];
    g.rooms = vec![
        RoomRegion {
            id: 0,
            label: "A".into(),
            seeds: vec![Point3::new(2.5, 2.0, 1.0)],
        },
        RoomRegion {
            id: 1,
            label: "B".into(),
            seeds: vec![Point3::new(7.5, 2.0, 1.0)],
        },
    ];
    g.edges = derive_connectivity(&g);
    g
}

#[test]
fn graph_document_matches_golden_file() {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/data/sgraph_small.json");
    let g = small_graph();
    g.check_integrity().unwrap();
    assert_eq!(g.edges.len(), 1);
    let text = save_graph(&g);
    if std::env::var_os("PASSMAP_UPDATE_GOLDEN").is_some() {
        std::fs::write(&path, &text).unwrap();
    }
    let golden = std::fs::read_to_string(&path).unwrap();
    assert_eq!(text, golden);
    assert_eq!(load_graph(&golden).unwrap(), g);
}

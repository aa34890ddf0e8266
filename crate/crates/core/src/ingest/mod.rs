//! Solid interchange JSON, procedural solids and dataset manifests.

mod dataset;
mod procedural;

pub use dataset::{
    generate_dataset, load_dataset_dir, parse_kind_mix, DatasetEntry, DatasetManifest, KindMix,
};
pub use procedural::{generate_procedural, GroundTruth, ProceduralKind, ProceduralParams, Shape};

use serde::{Deserialize, Serialize};
use serde_json::error::Category;
use thiserror::Error;

use crate::model::{EdgeGeom, FaceGeom, ModelError, Point3, SolidModel, FACE_SAMPLES, GRID};

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("malformed JSON: {0}")]
    Parse(String),
    #[error("schema violation: {0}")]
    Schema(String),
    #[error("invalid solid: {0}")]
    Invariant(#[from] ModelError),
    #[error("bad procedural parameters: {0}")]
    Param(String),
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl IngestError {
    pub(crate) fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        IngestError::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }
}

/// On-disk edge record.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EdgeRecord {
    pub polyline: Vec<Point3>,
    pub face_a: usize,
    pub face_b: usize,
}

/// On-disk solid record. The `vertices`, `edge_vertices` and `loops` fields
/// are only written for reconstructed models.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SolidRecord {
    pub faces: Vec<Vec<Vec<Point3>>>,
    pub edges: Vec<EdgeRecord>,
    pub class_label: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub vertices: Option<Vec<Point3>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub edge_vertices: Option<Vec<[usize; 2]>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub loops: Option<Vec<Vec<Vec<usize>>>>,
}

impl SolidRecord {
    pub fn from_solid(solid: &SolidModel) -> Self {
        Self {
            faces: solid
                .faces
                .iter()
                .map(|f| f.rows().map(|r| r.to_vec()).collect())
                .collect(),
            edges: solid
                .edges
                .iter()
                .map(|e| EdgeRecord {
                    polyline: e.polyline().to_vec(),
                    face_a: e.face_a,
                    face_b: e.face_b,
                })
                .collect(),
            class_label: solid.class_label,
            vertices: None,
            edge_vertices: None,
            loops: None,
        }
    }

    pub fn into_solid(self, n_max: usize) -> Result<SolidModel, IngestError> {
        let mut faces = Vec::with_capacity(self.faces.len());
        for (i, rows) in self.faces.into_iter().enumerate() {
            if rows.len() != GRID || rows.iter().any(|r| r.len() != GRID) {
                return Err(IngestError::Schema(format!(
                    "face {i} is not a {GRID}x{GRID} grid"
                )));
            }
            let grid: Vec<Point3> = rows.into_iter().flatten().collect();
            debug_assert_eq!(grid.len(), FACE_SAMPLES);
            faces.push(FaceGeom::new(grid)?);
        }
        let mut edges = Vec::with_capacity(self.edges.len());
        for (i, e) in self.edges.into_iter().enumerate() {
            if e.polyline.len() != GRID {
                return Err(IngestError::Schema(format!(
                    "edge {i} polyline has {} points, expected {GRID}",
                    e.polyline.len()
                )));
            }
            edges.push(EdgeGeom::new(e.polyline, e.face_a, e.face_b)?);
        }
        Ok(SolidModel::new(faces, edges, self.class_label, n_max)?)
    }
}

fn classify(e: serde_json::Error) -> IngestError {
    match e.classify() {
        Category::Data => IngestError::Schema(e.to_string()),
        _ => IngestError::Parse(e.to_string()),
    }
}

pub fn load_solid(bytes: &[u8], n_max: usize) -> Result<SolidModel, IngestError> {
    let rec: SolidRecord = serde_json::from_slice(bytes).map_err(classify)?;
    rec.into_solid(n_max)
}

pub fn save_solid(solid: &SolidModel) -> Vec<u8> {
    serde_json::to_vec(&SolidRecord::from_solid(solid)).expect("solid records always serialize")
}

pub fn load_solid_file(path: &std::path::Path, n_max: usize) -> Result<SolidModel, IngestError> {
    let bytes = std::fs::read(path).map_err(|e| IngestError::io(path, e))?;
    load_solid(&bytes, n_max)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cube() -> SolidModel {
        generate_procedural(&ProceduralParams::new(Shape::Box { size: [1.0; 3] }), 0)
            .unwrap()
            .0
    }

    #[test]
    fn cube_round_trip() {
        let c = cube();
        let back = load_solid(&save_solid(&c), 50).unwrap();
        assert_eq!(back.faces.len(), 6);
        assert_eq!(back.edges.len(), 12);
        assert_eq!(back, c);
    }

    #[test]
    fn class_label_survives() {
        let mut c = cube();
        c.class_label = Some(3);
        assert_eq!(load_solid(&save_solid(&c), 50).unwrap().class_label, Some(3));
    }

    #[test]
    fn jittered_prism_round_trip_is_bit_exact() {
        let p = ProceduralParams {
            jitter: 0.1,
            ..ProceduralParams::new(Shape::NPrism {
                sides: 48,
                radius: 0.7,
                height: 0.9,
            })
        };
        let (s, gt) = generate_procedural(&p, 11).unwrap();
        assert_eq!(gt.faces, 50);
        let back = load_solid(&save_solid(&s), 50).unwrap();
        assert_eq!(back, s);
        assert_eq!(back.adjacency(), s.adjacency());
    }

    #[test]
    fn short_polyline_is_schema_error() {
        let mut rec = SolidRecord::from_solid(&cube());
        rec.edges[0].polyline.pop();
        let bytes = serde_json::to_vec(&rec).unwrap();
        assert!(matches!(load_solid(&bytes, 50), Err(IngestError::Schema(_))));
    }

    #[test]
    fn self_loop_is_invariant_error() {
        let mut rec = SolidRecord::from_solid(&cube());
        rec.edges[0].face_b = rec.edges[0].face_a;
        let bytes = serde_json::to_vec(&rec).unwrap();
        assert!(matches!(
            load_solid(&bytes, 50),
            Err(IngestError::Invariant(ModelError::SelfLoopEdge(0)))
        ));
    }

    #[test]
    fn bad_face_ref_and_face_limit() {
        let mut rec = SolidRecord::from_solid(&cube());
        rec.edges[3].face_a = 9;
        let bytes = serde_json::to_vec(&rec).unwrap();
        assert!(matches!(
            load_solid(&bytes, 50),
            Err(IngestError::Invariant(ModelError::BadFaceRef { .. }))
        ));
        let bytes = save_solid(&cube());
        assert!(matches!(
            load_solid(&bytes, 5),
            Err(IngestError::Invariant(ModelError::TooManyFaces { .. }))
        ));
    }

    #[test]
    fn malformed_and_missing_fields() {
        assert!(matches!(load_solid(b"{\"faces\": [", 50), Err(IngestError::Parse(_))));
        assert!(matches!(load_solid(b"{\"faces\": []}", 50), Err(IngestError::Schema(_))));
    }
}

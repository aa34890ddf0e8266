//! Token sequences back to solids: block parsing, geometry recovery,
//! vertex clustering and structural validity.

mod parse;
mod union_find;
mod validity;
mod vertices;


pub use parse::{parse_sequence, EdgeBlock, FaceBlock, ParseError, ParsedBlocks, Prefix};
pub use union_find::UnionFind;
pub use validity::{check_validity, decode_and_check, DetokConfig, ValidityReport};
pub use vertices::{reconstruct_vertices, VertexSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::codebook::{Codebook, CodebookError, Decoded, PrimitiveKind};
use crate::ingest::{EdgeRecord, SolidRecord};
use crate::model::{face_adjacency, Adjacency, Bbox, EdgeGeom, FaceGeom, ModelError, Point3, SolidModel, GRID};
use crate::position::{detokenize_bbox, QuantConfig, QuantError};
use crate::sequence::VocabLayout;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DetokError {
    #[error(transparent)]
    Parse(#[from] ParseError),
    #[error(transparent)]
    Codebook(#[from] CodebookError),
    #[error(transparent)]
    Quant(#[from] QuantError),
}

/// Coded findings from reconstruction and validity checks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "code")]
pub enum Diagnostic {
    Grammar { error: ParseError },
    UnmatchedEndpoint { edge: usize, end: usize, face: usize },
    OpenLoop { face: usize, edges: Vec<usize> },
    DegenerateEdge { edge: usize },
    CollapsedEdge { edge: usize },
    IsolatedFace { face: usize },
    NonFiniteGeometry { primitive: String },
    OutsideBbox { primitive: String, excess: f64 },
    EulerMismatch { v: usize, e: usize, f: usize, chi: i64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct RecFace {
    /// Face-index token that labelled this face.
    pub index: u32,
    pub bbox: Bbox,
    pub grid: Vec<Point3>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RecEdge {
    /// Positions of the two faces in [`ReconstructedModel::faces`].
    pub faces: [usize; 2],
    pub bbox: Bbox,
    pub polyline: Vec<Point3>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReconstructedModel {
    pub faces: Vec<RecFace>,
    pub edges: Vec<RecEdge>,
    pub class_label: Option<u32>,
    pub vertices: Vec<Point3>,
    pub edge_vertices: Vec<[usize; 2]>,
    pub loops: Vec<Vec<Vec<usize>>>,
}

impl ReconstructedModel {
    /// Geometry of `solid` taken as if it had been decoded losslessly.
    pub fn from_solid(solid: &SolidModel) -> Self {
        Self {
            faces: solid
                .faces
                .iter()
                .enumerate()
                .map(|(i, f)| RecFace {
                    index: i as u32,
                    bbox: f.bbox(),
                    grid: f.samples().to_vec(),
                })
                .collect(),
            edges: solid
                .edges
                .iter()
                .map(|e| RecEdge {
                    faces: [e.face_a, e.face_b],
                    bbox: e.bbox(),
                    polyline: e.polyline().to_vec(),
                })
                .collect(),
            class_label: solid.class_label,
            vertices: Vec::new(),
            edge_vertices: Vec::new(),
            loops: Vec::new(),
        }
    }

    pub fn adjacency(&self) -> Adjacency {
        face_adjacency(self.faces.len(), self.edges.iter().map(|e| (e.faces[0], e.faces[1])))
    }

    pub fn attach(&mut self, v: &VertexSet) {
        self.vertices = v.vertices.clone();
        self.edge_vertices = v.edge_vertices.clone();
        self.loops = v.loops.clone();
    }

    /// Interchange record including the vertex extension when present.
    pub fn to_record(&self) -> SolidRecord {
        let has_vertices = !self.vertices.is_empty();
        SolidRecord {
            faces: self.faces.iter().map(|f| f.grid.chunks(GRID).map(|r| r.to_vec()).collect()).collect(),
            edges: self
                .edges
                .iter()
                .map(|e| EdgeRecord {
                    polyline: e.polyline.clone(),
                    face_a: e.faces[0],
                    face_b: e.faces[1],
                })
                .collect(),
            class_label: self.class_label,
            vertices: has_vertices.then(|| self.vertices.clone()),
            edge_vertices: has_vertices.then(|| self.edge_vertices.clone()),
            loops: has_vertices.then(|| self.loops.clone()),
        }
    }

    pub fn to_solid(&self, n_max: usize) -> Result<SolidModel, ModelError> {
        let faces = self
            .faces
            .iter()
            .map(|f| FaceGeom::new(f.grid.clone()))
            .collect::<Result<Vec<_>, _>>()?;
        let edges = self
            .edges
            .iter()
            .map(|e| EdgeGeom::new(e.polyline.clone(), e.faces[0], e.faces[1]))
            .collect::<Result<Vec<_>, _>>()?;
        SolidModel::new(faces, edges, self.class_label, n_max)
    }

    /// Every decoded sample of faces and edges.
    pub fn points(&self) -> impl Iterator<Item = &Point3> {
        self.faces
            .iter()
            .flat_map(|f| f.grid.iter())
            .chain(self.edges.iter().flat_map(|e| e.polyline.iter()))
    }
}

/// Geometry and adjacency from parsed blocks. Vertices are left empty.
pub fn detokenize(
    parsed: &ParsedBlocks,
    codebook: &Codebook,
    layout: &VocabLayout,
) -> Result<ReconstructedModel, DetokError> {
    let q = QuantConfig::new(layout.levels)?;
    let mut faces = Vec::with_capacity(parsed.faces.len());
    for fb in &parsed.faces {
        let Decoded::Face(grid) = codebook.decode(&fb.geo, PrimitiveKind::Face)? else {
            unreachable!("face decode yields a grid")
        };
        faces.push(RecFace {
            index: fb.index,
            bbox: detokenize_bbox(&fb.pos, q)?,
            grid,
        });
    }
    let mut edges = Vec::with_capacity(parsed.edges.len());
    for eb in &parsed.edges {
        let Decoded::Edge(polyline) = codebook.decode(&eb.geo, PrimitiveKind::Edge)? else {
            unreachable!("edge decode yields a polyline")
        };
        let pos = |idx: u32| parsed.face_position(idx).expect("parser checked face references");
        edges.push(RecEdge {
            faces: [pos(eb.faces[0]), pos(eb.faces[1])],
            bbox: detokenize_bbox(&eb.pos, q)?,
            polyline,
        });
    }
    Ok(ReconstructedModel {
        faces,
        edges,
        class_label: parsed.class_label(),
        vertices: Vec::new(),
        edge_vertices: Vec::new(),
        loops: Vec::new(),
    })
}

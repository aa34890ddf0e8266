use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::order::{order_edges, order_faces, positions, EdgeStrategy, FaceStrategy};
use super::vocab::VocabLayout;
use crate::codebook::{encode_edge, encode_face, Codebook, CodebookError};
use crate::model::{SolidModel, GRID};
use crate::position::{tokenize_bbox, QuantConfig, QuantError};
use crate::util::derive_seed;

/// Tokens per face block: 6 position, 4 geometry, 1 face index.
pub const FACE_BLOCK: usize = 11;
/// Tokens per edge block: 2 face index, 6 position, 4 geometry.
pub const EDGE_BLOCK: usize = 12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TokenizeError {
    #[error("solid has {faces} faces but the layout allows {n_max}")]
    TooManyFaces { faces: usize, n_max: usize },
    #[error("re-index offset {r} must be below n_max = {n_max}")]
    BadOffset { r: u32, n_max: u32 },
    #[error("coordinate {value} lies outside [-1, 1]")]
    CoordOutOfRange { value: f64 },
    #[error("class-conditional tokenization needs a class label")]
    MissingClassLabel,
    #[error("class label {label} is outside the layout's {n_classes} classes")]
    ClassOutOfRange { label: u32, n_classes: u32 },
    #[error("codebook has {found} codewords, layout expects {expected}")]
    CodebookSize { expected: usize, found: usize },
    #[error(transparent)]
    Codebook(#[from] CodebookError),
    #[error(transparent)]
    Quant(#[from] QuantError),
}

/// How the face-index offset `r` is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Reindex {
    /// Uniform in `[0, n_max)`, drawn from the tokenization seed.
    Random,
    Fixed(u32),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenizeOptions {
    pub face_strategy: FaceStrategy,
    pub edge_strategy: EdgeStrategy,
    pub reindex: Reindex,
    /// Replace START with the solid's class token.
    pub class_conditional: bool,
    /// Reject coordinates outside [-1, 1] instead of clipping them.
    pub strict: bool,
}

impl Default for TokenizeOptions {
    fn default() -> Self {
        Self {
            face_strategy: FaceStrategy::Dfs,
            edge_strategy: EdgeStrategy::MaxIdxA,
            reindex: Reindex::Random,
            class_conditional: false,
            strict: true,
        }
    }
}

impl TokenizeOptions {
    /// DFS faces, MAX-IDX-A edges, `r = 0`.
    pub fn canonical() -> Self {
        Self {
            reindex: Reindex::Fixed(0),
            ..Self::default()
        }
    }
}

/// A flat token sequence.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TokenSeq(pub Vec<u32>);

impl TokenSeq {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[u32] {
        &self.0
    }

    /// `11 F + 12 E + 3`.
    pub fn expected_len(faces: usize, edges: usize) -> usize {
        FACE_BLOCK * faces + EDGE_BLOCK * edges + 3
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Tokenized {
    pub seq: TokenSeq,
    pub r: u32,
    pub face_order: Vec<usize>,
    pub edge_order: Vec<usize>,
}

/// Face-index token value of each sequence position: `(i + r) mod n_max`.
pub fn reindex(face_count: usize, r: u32, n_max: u32) -> Result<Vec<u32>, TokenizeError> {
    if face_count > n_max as usize {
        return Err(TokenizeError::TooManyFaces {
            faces: face_count,
            n_max: n_max as usize,
        });
    }
    if r >= n_max {
        return Err(TokenizeError::BadOffset { r, n_max });
    }
    Ok((0..face_count as u32).map(|i| (i + r) % n_max).collect())
}

pub fn draw_offset(seed: u64, n_max: u32) -> u32 {
    ChaCha8Rng::seed_from_u64(derive_seed(seed, 1)).random_range(0..n_max)
}

pub fn tokenize_solid(
    solid: &SolidModel,
    codebook: &Codebook,
    layout: &VocabLayout,
    opts: &TokenizeOptions,
    seed: u64,
) -> Result<Tokenized, TokenizeError> {
    let nf = solid.faces.len();
    if nf > layout.n_max as usize {
        return Err(TokenizeError::TooManyFaces {
            faces: nf,
            n_max: layout.n_max as usize,
        });
    }
    if codebook.size() != layout.n_geo as usize {
        return Err(TokenizeError::CodebookSize {
            expected: layout.n_geo as usize,
            found: codebook.size(),
        });
    }
    if opts.strict {
        if let Some(p) = solid.all_points().find(|p| p.to_array().iter().any(|v| v.abs() > 1.0)) {
            let value = p.to_array().into_iter().find(|v| v.abs() > 1.0).unwrap();
            return Err(TokenizeError::CoordOutOfRange { value });
        }
    }
    let prefix = if opts.class_conditional {
        let label = solid.class_label.ok_or(TokenizeError::MissingClassLabel)?;
        layout
            .class_token(label)
            .ok_or(TokenizeError::ClassOutOfRange {
                label,
                n_classes: layout.n_classes,
            })?
    } else {
        layout.start()
    };

    let face_order = order_faces(solid, opts.face_strategy, seed);
    let pos = positions(&face_order);
    let edge_order = order_edges(solid, &pos, opts.edge_strategy, seed);
    let r = match opts.reindex {
        Reindex::Random => draw_offset(seed, layout.n_max),
        Reindex::Fixed(r) => r,
    };
    let labels = reindex(nf, r, layout.n_max)?;
    let q = QuantConfig::new(layout.levels)?;

    let mut out = Vec::with_capacity(TokenSeq::expected_len(nf, solid.edges.len()));
    out.push(prefix);
    for &f in &face_order {
        let face = &solid.faces[f];
        out.extend(tokenize_bbox(&face.bbox(), q)?.map(|k| k + layout.o_pos()));
        out.extend(codebook.quantize(&encode_face(face)?)?.map(|g| g + layout.o_geo()));
        out.push(labels[pos[f]]);
    }
    out.push(layout.sep());
    for &e in &edge_order {
        let edge = &solid.edges[e];
        debug_assert_eq!(edge.polyline().len(), GRID);
        let (pa, pb) = (pos[edge.face_a], pos[edge.face_b]);
        out.push(labels[pa.min(pb)]);
        out.push(labels[pa.max(pb)]);
        out.extend(tokenize_bbox(&edge.bbox(), q)?.map(|k| k + layout.o_pos()));
        out.extend(codebook.quantize(&encode_edge(edge)?)?.map(|g| g + layout.o_geo()));
    }
    out.push(layout.end());
    Ok(Tokenized {
        seq: TokenSeq(out),
        r,
        face_order,
        edge_order,
    })
}

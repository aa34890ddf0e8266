//! Geometry tokens: a face grid (or a broadcast edge) is cut into a 2×2
//! arrangement of 16×16 patches, and each patch is replaced by the index
//! of its nearest codeword.

mod io;
mod train;

pub use io::CodebookMeta;
pub use train::{collect_patches, distinct_patches, train_codebook, CodebookTrainConfig, RestartConfig, TrainReport};

use std::collections::HashMap;

use thiserror::Error;

use crate::model::{EdgeGeom, FaceGeom, ModelError, Point3, FACE_SAMPLES, GRID};

/// Side length of one patch in grid samples.
pub const PATCH: usize = GRID / 2;
/// Length of a flattened patch vector.
pub const PATCH_DIM: usize = PATCH * PATCH * 3;
/// Geometry tokens per face or edge.
pub const TOKENS_PER_PRIMITIVE: usize = 4;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CodebookError {
    #[error("codebook is empty")]
    EmptyCodebook,
    #[error("training set is empty")]
    EmptyDataset,
    #[error("geometry token {index} out of range for codebook of size {size}")]
    IndexOutOfRange { index: u32, size: usize },
    #[error("patch has dimension {found}, codebook expects {expected}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error(transparent)]
    Geometry(#[from] ModelError),
    #[error("bad codebook file: {0}")]
    Format(String),
}

/// Four flattened patches in (0,0), (0,1), (1,0), (1,1) order.
#[derive(Debug, Clone, PartialEq)]
pub struct PatchLatent {
    pub patches: [Vec<f32>; 4],
}

impl PatchLatent {
    pub fn iter(&self) -> impl Iterator<Item = &[f32]> {
        self.patches.iter().map(|p| p.as_slice())
    }
}

/// Maps a 32×32 sample grid into patch space and back. The identity
/// patcher is the only built-in implementation; a learned encoder can be
/// dropped in behind this trait.
pub trait PatchEncoder {
    fn encode(&self, grid: &[Point3]) -> Result<PatchLatent, CodebookError>;
    fn decode(&self, latent: &PatchLatent) -> Vec<Point3>;
}

#[derive(Debug, Clone, Copy, Default)]
pub struct IdentityPatcher;

impl PatchEncoder for IdentityPatcher {
    fn encode(&self, grid: &[Point3]) -> Result<PatchLatent, CodebookError> {
        if grid.len() != FACE_SAMPLES {
            return Err(ModelError::WrongSampleCount {
                expected: FACE_SAMPLES,
                found: grid.len(),
            }
            .into());
        }
        if grid.iter().any(|p| !p.is_finite()) {
            return Err(ModelError::NonFiniteGeometry.into());
        }
        let patch = |pu: usize, pv: usize| {
            let mut out = Vec::with_capacity(PATCH_DIM);
            for i in 0..PATCH {
                for j in 0..PATCH {
                    let p = grid[(pu * PATCH + i) * GRID + pv * PATCH + j];
                    out.extend([p.x as f32, p.y as f32, p.z as f32]);
                }
            }
            out
        };
        Ok(PatchLatent {
            patches: [patch(0, 0), patch(0, 1), patch(1, 0), patch(1, 1)],
        })
    }

    fn decode(&self, latent: &PatchLatent) -> Vec<Point3> {
        let mut grid = vec![Point3::default(); FACE_SAMPLES];
        for (k, patch) in latent.patches.iter().enumerate() {
            let (pu, pv) = (k / 2, k % 2);
            for i in 0..PATCH {
                for j in 0..PATCH {
                    let o = (i * PATCH + j) * 3;
                    grid[(pu * PATCH + i) * GRID + pv * PATCH + j] = Point3::new(
                        patch[o] as f64,
                        patch[o + 1] as f64,
                        patch[o + 2] as f64,
                    );
                }
            }
        }
        grid
    }
}

pub fn encode_face(face: &FaceGeom) -> Result<PatchLatent, CodebookError> {
    IdentityPatcher.encode(face.samples())
}

/// Repeats the 32-point curve along V: `grid[u][v] = polyline[u]`.
pub fn broadcast_edge(edge: &EdgeGeom) -> Vec<Point3> {
    broadcast_polyline(edge.polyline())
}

pub fn broadcast_polyline(polyline: &[Point3]) -> Vec<Point3> {
    polyline
        .iter()
        .flat_map(|p| std::iter::repeat_n(*p, GRID))
        .collect()
}

/// Averages each row of a broadcast grid back into one curve sample.
pub fn collapse_edge(grid: &[Point3]) -> Vec<Point3> {
    grid.chunks(GRID)
        .map(|row| {
            // offsets from the first sample keep constant rows exact
            let base = row[0];
            let s = row.iter().fold(Point3::default(), |a, p| a.add(p.sub(base)));
            base.add(s.scale(1.0 / row.len() as f64))
        })
        .collect()
}

pub fn encode_edge(edge: &EdgeGeom) -> Result<PatchLatent, CodebookError> {
    IdentityPatcher.encode(&broadcast_edge(edge))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PrimitiveKind {
    Face,
    Edge,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Decoded {
    Face(Vec<Point3>),
    Edge(Vec<Point3>),
}

/// A set of codewords in patch space plus how often each was selected.
#[derive(Debug, Clone, PartialEq)]
pub struct Codebook {
    dim: usize,
    codewords: Vec<f32>,
    pub usage_counts: Vec<u64>,
    exact: ExactIndex,
}

/// Lowest index of every codeword, keyed by its bits with `-0.0` folded
/// into `0.0`. Built on first lookup, dropped whenever a codeword moves.
#[derive(Default, Clone)]
struct ExactIndex(std::sync::OnceLock<HashMap<Vec<u32>, u32>>);

impl PartialEq for ExactIndex {
    fn eq(&self, _: &Self) -> bool {
        true
    }
}

impl std::fmt::Debug for ExactIndex {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str("ExactIndex")
    }
}

fn exact_key(v: &[f32]) -> Vec<u32> {
    v.iter().map(|x| (x + 0.0).to_bits()).collect()
}

/// Squared distance with early exit once `bound` is exceeded.
#[inline]
fn dist2_bounded(a: &[f32], b: &[f32], bound: f32) -> f32 {
    let mut acc = 0.0f32;
    for (ca, cb) in a.chunks(96).zip(b.chunks(96)) {
        let mut s = 0.0f32;
        for (x, y) in ca.iter().zip(cb) {
            let d = x - y;
            s += d * d;
        }
        acc += s;
        if acc > bound {
            return acc;
        }
    }
    acc
}

impl Codebook {
    pub fn new(dim: usize, codewords: Vec<Vec<f32>>) -> Result<Self, CodebookError> {
        if codewords.is_empty() {
            return Err(CodebookError::EmptyCodebook);
        }
        let mut flat = Vec::with_capacity(dim * codewords.len());
        for c in &codewords {
            if c.len() != dim {
                return Err(CodebookError::DimensionMismatch {
                    expected: dim,
                    found: c.len(),
                });
            }
            if c.iter().any(|v| !v.is_finite()) {
                return Err(CodebookError::Format("non-finite codeword".into()));
            }
            flat.extend_from_slice(c);
        }
        Ok(Self {
            dim,
            usage_counts: vec![0; codewords.len()],
            codewords: flat,
            exact: ExactIndex::default(),
        })
    }

    pub fn size(&self) -> usize {
        self.usage_counts.len()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn codeword(&self, i: usize) -> &[f32] {
        &self.codewords[i * self.dim..(i + 1) * self.dim]
    }

    pub(crate) fn codeword_mut(&mut self, i: usize) -> &mut [f32] {
        self.exact = ExactIndex::default();
        &mut self.codewords[i * self.dim..(i + 1) * self.dim]
    }

    pub(crate) fn raw(&self) -> &[f32] {
        &self.codewords
    }

    /// Index and squared distance of the nearest codeword; ties go to the
    /// lowest index.
    pub fn nearest(&self, v: &[f32]) -> (u32, f32) {
        debug_assert_eq!(v.len(), self.dim);
        let index = self.exact.0.get_or_init(|| {
            let mut m = HashMap::new();
            for (i, c) in self.codewords.chunks_exact(self.dim).enumerate() {
                m.entry(exact_key(c)).or_insert(i as u32);
            }
            m
        });
        if let Some(&i) = index.get(&exact_key(v)) {
            return (i, 0.0);
        }
        let mut best = (0u32, f32::INFINITY);
        for (i, c) in self.codewords.chunks_exact(self.dim).enumerate() {
            let d = dist2_bounded(v, c, best.1);
            if d < best.1 {
                best = (i as u32, d);
            }
        }
        best
    }

    fn check_dim(&self, latent: &PatchLatent) -> Result<(), CodebookError> {
        for p in latent.iter() {
            if p.len() != self.dim {
                return Err(CodebookError::DimensionMismatch {
                    expected: self.dim,
                    found: p.len(),
                });
            }
        }
        Ok(())
    }

    /// Nearest-codeword indices for the four patches. Does not touch usage.
    pub fn quantize(&self, latent: &PatchLatent) -> Result<[u32; 4], CodebookError> {
        if self.size() == 0 {
            return Err(CodebookError::EmptyCodebook);
        }
        self.check_dim(latent)?;
        let mut out = [0u32; 4];
        for (k, p) in latent.iter().enumerate() {
            // broadcast edges repeat patches along V
            out[k] = if k % 2 == 1 && p == latent.patches[k - 1].as_slice() {
                out[k - 1]
            } else {
                self.nearest(p).0
            };
        }
        Ok(out)
    }

    /// [`Codebook::quantize`] that also increments the usage counts.
    pub fn quantize_tracked(&mut self, latent: &PatchLatent) -> Result<[u32; 4], CodebookError> {
        let t = self.quantize(latent)?;
        for &i in &t {
            self.usage_counts[i as usize] += 1;
        }
        Ok(t)
    }

    pub fn latent_of(&self, tokens: &[u32; 4]) -> Result<PatchLatent, CodebookError> {
        let get = |i: u32| -> Result<Vec<f32>, CodebookError> {
            if (i as usize) >= self.size() {
                return Err(CodebookError::IndexOutOfRange {
                    index: i,
                    size: self.size(),
                });
            }
            Ok(self.codeword(i as usize).to_vec())
        };
        Ok(PatchLatent {
            patches: [get(tokens[0])?, get(tokens[1])?, get(tokens[2])?, get(tokens[3])?],
        })
    }

    /// Reassembles the four codewords into a grid; edges are collapsed
    /// along V into a 32-point polyline.
    pub fn decode(&self, tokens: &[u32; 4], kind: PrimitiveKind) -> Result<Decoded, CodebookError> {
        if self.dim != PATCH_DIM {
            return Err(CodebookError::DimensionMismatch {
                expected: PATCH_DIM,
                found: self.dim,
            });
        }
        let grid = IdentityPatcher.decode(&self.latent_of(tokens)?);
        Ok(match kind {
            PrimitiveKind::Face => Decoded::Face(grid),
            PrimitiveKind::Edge => Decoded::Edge(collapse_edge(&grid)),
        })
    }

    /// Fraction of codewords with a nonzero usage count.
    pub fn utilization(&self) -> f64 {
        let used = self.usage_counts.iter().filter(|&&c| c > 0).count();
        used as f64 / self.size() as f64
    }

    pub fn reset_usage(&mut self) {
        self.usage_counts.iter_mut().for_each(|c| *c = 0);
    }

    /// Hash over codeword bits only (usage counts excluded).
    pub fn content_hash(&self) -> String {
        let mut bytes = Vec::with_capacity(8 + self.codewords.len() * 4);
        bytes.extend((self.size() as u32).to_le_bytes());
        bytes.extend((self.dim as u32).to_le_bytes());
        for v in &self.codewords {
            bytes.extend(v.to_le_bytes());
        }
        crate::util::short_hash(&bytes)
    }

    /// Squared error of quantizing `v`.
    pub fn error(&self, v: &[f32]) -> f32 {
        self.nearest(v).1
    }
}

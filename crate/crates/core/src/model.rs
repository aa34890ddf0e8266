//! B-rep domain types: sampled faces and edges, bounding boxes and
//! face adjacency.
//!
//! Vertices are never stored on a [`SolidModel`]; they are implied by edge
//! endpoints and recovered after decoding (see [`crate::detok`]).

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Samples per side of a face grid and per edge polyline.
pub const GRID: usize = 32;
/// Number of samples in a face grid.
pub const FACE_SAMPLES: usize = GRID * GRID;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("geometry contains a non-finite coordinate")]
    NonFiniteGeometry,
    #[error("geometry has no samples")]
    EmptyGeometry,
    #[error("expected {expected} samples, found {found}")]
    WrongSampleCount { expected: usize, found: usize },
    #[error("edge {edge} references face {face}, but the solid has {faces} faces")]
    BadFaceRef { edge: usize, face: usize, faces: usize },
    #[error("edge {0} borders the same face on both sides")]
    SelfLoopEdge(usize),
    #[error("edge {0} has coincident endpoints")]
    DegenerateEdge(usize),
    #[error("solid has {faces} faces, more than the limit of {limit}")]
    TooManyFaces { faces: usize, limit: usize },
}

/// A point in normalized model units.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(from = "[f64; 3]", into = "[f64; 3]")]
pub struct Point3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Point3 {
    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }

    pub fn to_array(self) -> [f64; 3] {
        [self.x, self.y, self.z]
    }

    pub fn dist2(&self, other: &Point3) -> f64 {
        let dx = self.x - other.x;
        let dy = self.y - other.y;
        let dz = self.z - other.z;
        dx * dx + dy * dy + dz * dz
    }

    pub fn dist(&self, other: &Point3) -> f64 {
        self.dist2(other).sqrt()
    }

    pub fn add(self, o: Point3) -> Point3 {
        Point3::new(self.x + o.x, self.y + o.y, self.z + o.z)
    }

    pub fn sub(self, o: Point3) -> Point3 {
        Point3::new(self.x - o.x, self.y - o.y, self.z - o.z)
    }

    pub fn scale(self, s: f64) -> Point3 {
        Point3::new(self.x * s, self.y * s, self.z * s)
    }

    pub fn cross(self, o: Point3) -> Point3 {
        Point3::new(
            self.y * o.z - self.z * o.y,
            self.z * o.x - self.x * o.z,
            self.x * o.y - self.y * o.x,
        )
    }

    pub fn norm(self) -> f64 {
        (self.x * self.x + self.y * self.y + self.z * self.z).sqrt()
    }

    /// Linear interpolation `self + t (other - self)`.
    pub fn lerp(self, other: Point3, t: f64) -> Point3 {
        self.add(other.sub(self).scale(t))
    }

    /// Lexicographic key on (z, y, x).
    pub fn zyx_cmp(&self, other: &Point3) -> std::cmp::Ordering {
        self.z
            .total_cmp(&other.z)
            .then(self.y.total_cmp(&other.y))
            .then(self.x.total_cmp(&other.x))
    }
}

impl From<[f64; 3]> for Point3 {
    fn from(a: [f64; 3]) -> Self {
        Point3::new(a[0], a[1], a[2])
    }
}

impl From<Point3> for [f64; 3] {
    fn from(p: Point3) -> Self {
        p.to_array()
    }
}

/// Axis-aligned box `[x_min, y_min, z_min, x_max, y_max, z_max]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Bbox(pub [f64; 6]);

impl Bbox {
    pub fn min(&self) -> Point3 {
        Point3::new(self.0[0], self.0[1], self.0[2])
    }

    pub fn max(&self) -> Point3 {
        Point3::new(self.0[3], self.0[4], self.0[5])
    }

    pub fn center(&self) -> Point3 {
        self.min().lerp(self.max(), 0.5)
    }

    /// Whether `p` lies inside the box grown by `tol` on every side.
    pub fn contains(&self, p: &Point3, tol: f64) -> bool {
        let c = p.to_array();
        (0..3).all(|a| c[a] >= self.0[a] - tol && c[a] <= self.0[a + 3] + tol)
    }

    pub fn of_points<'a>(points: impl IntoIterator<Item = &'a Point3>) -> Result<Bbox, ModelError> {
        let mut lo = [f64::INFINITY; 3];
        let mut hi = [f64::NEG_INFINITY; 3];
        let mut any = false;
        for p in points {
            if !p.is_finite() {
                return Err(ModelError::NonFiniteGeometry);
            }
            any = true;
            for (a, v) in p.to_array().into_iter().enumerate() {
                lo[a] = lo[a].min(v);
                hi[a] = hi[a].max(v);
            }
        }
        if !any {
            return Err(ModelError::EmptyGeometry);
        }
        Ok(Bbox([lo[0], lo[1], lo[2], hi[0], hi[1], hi[2]]))
    }
}

/// A face sampled on a regular 32×32 UV grid, stored row-major
/// (`grid[u * 32 + v]`).
#[derive(Debug, Clone, PartialEq)]
pub struct FaceGeom {
    grid: Vec<Point3>,
}

impl FaceGeom {
    pub fn new(grid: Vec<Point3>) -> Result<Self, ModelError> {
        if grid.len() != FACE_SAMPLES {
            return Err(ModelError::WrongSampleCount {
                expected: FACE_SAMPLES,
                found: grid.len(),
            });
        }
        if grid.iter().any(|p| !p.is_finite()) {
            return Err(ModelError::NonFiniteGeometry);
        }
        Ok(Self { grid })
    }

    /// Builds a grid by evaluating `f(u, v)` at corner-inclusive uniform
    /// parameters `u, v ∈ {0, 1/31, …, 1}`.
    pub fn from_fn(mut f: impl FnMut(f64, f64) -> Point3) -> Result<Self, ModelError> {
        let step = 1.0 / (GRID - 1) as f64;
        let mut grid = Vec::with_capacity(FACE_SAMPLES);
        for i in 0..GRID {
            for j in 0..GRID {
                grid.push(f(i as f64 * step, j as f64 * step));
            }
        }
        Self::new(grid)
    }

    pub fn samples(&self) -> &[Point3] {
        &self.grid
    }

    pub fn at(&self, u: usize, v: usize) -> Point3 {
        self.grid[u * GRID + v]
    }

    pub fn centroid(&self) -> Point3 {
        centroid(&self.grid)
    }

    pub fn bbox(&self) -> Bbox {
        Bbox::of_points(&self.grid).expect("face grids are finite and non-empty")
    }

    /// Rows of the grid, each 32 points along V.
    pub fn rows(&self) -> impl Iterator<Item = &[Point3]> {
        self.grid.chunks(GRID)
    }
}

/// An edge sampled at 32 points along its curve, bordering two faces.
#[derive(Debug, Clone, PartialEq)]
pub struct EdgeGeom {
    polyline: Vec<Point3>,
    pub face_a: usize,
    pub face_b: usize,
}

impl EdgeGeom {
    pub fn new(polyline: Vec<Point3>, face_a: usize, face_b: usize) -> Result<Self, ModelError> {
        if polyline.len() != GRID {
            return Err(ModelError::WrongSampleCount {
                expected: GRID,
                found: polyline.len(),
            });
        }
        if polyline.iter().any(|p| !p.is_finite()) {
            return Err(ModelError::NonFiniteGeometry);
        }
        Ok(Self {
            polyline,
            face_a,
            face_b,
        })
    }

    /// Samples `f(t)` at `t ∈ {0, 1/31, …, 1}`.
    pub fn from_fn(
        mut f: impl FnMut(f64) -> Point3,
        face_a: usize,
        face_b: usize,
    ) -> Result<Self, ModelError> {
        let step = 1.0 / (GRID - 1) as f64;
        let polyline = (0..GRID).map(|i| f(i as f64 * step)).collect();
        Self::new(polyline, face_a, face_b)
    }

    pub fn polyline(&self) -> &[Point3] {
        &self.polyline
    }

    pub fn start(&self) -> Point3 {
        self.polyline[0]
    }

    pub fn end(&self) -> Point3 {
        self.polyline[GRID - 1]
    }

    pub fn faces(&self) -> (usize, usize) {
        (self.face_a, self.face_b)
    }

    pub fn bbox(&self) -> Bbox {
        Bbox::of_points(&self.polyline).expect("edge polylines are finite and non-empty")
    }
}

/// Geometry that a bounding box can be computed for.
pub enum Geom<'a> {
    Face(&'a FaceGeom),
    Edge(&'a EdgeGeom),
    Points(&'a [Point3]),
}

/// Componentwise min/max over the samples of `geom`.
pub fn compute_bbox(geom: Geom<'_>) -> Result<Bbox, ModelError> {
    match geom {
        Geom::Face(f) => Bbox::of_points(f.samples()),
        Geom::Edge(e) => Bbox::of_points(e.polyline()),
        Geom::Points(p) => Bbox::of_points(p),
    }
}

pub fn centroid(points: &[Point3]) -> Point3 {
    let n = points.len().max(1) as f64;
    let s = points
        .iter()
        .fold(Point3::default(), |acc, p| acc.add(*p));
    s.scale(1.0 / n)
}

/// A boundary-representation solid: sampled faces, sampled edges and the
/// face pair each edge separates.
#[derive(Debug, Clone, PartialEq)]
pub struct SolidModel {
    pub faces: Vec<FaceGeom>,
    pub edges: Vec<EdgeGeom>,
    pub class_label: Option<u32>,
}

impl SolidModel {
    /// Checks face references and the seam rule. `n_max` bounds the face count.
    pub fn new(
        faces: Vec<FaceGeom>,
        edges: Vec<EdgeGeom>,
        class_label: Option<u32>,
        n_max: usize,
    ) -> Result<Self, ModelError> {
        let solid = Self {
            faces,
            edges,
            class_label,
        };
        solid.validate(n_max)?;
        Ok(solid)
    }

    pub fn validate(&self, n_max: usize) -> Result<(), ModelError> {
        if self.faces.len() > n_max {
            return Err(ModelError::TooManyFaces {
                faces: self.faces.len(),
                limit: n_max,
            });
        }
        let nf = self.faces.len();
        for (i, e) in self.edges.iter().enumerate() {
            for face in [e.face_a, e.face_b] {
                if face >= nf {
                    return Err(ModelError::BadFaceRef {
                        edge: i,
                        face,
                        faces: nf,
                    });
                }
            }
            if e.face_a == e.face_b {
                return Err(ModelError::SelfLoopEdge(i));
            }
            if e.start().dist(&e.end()) <= 1e-9 {
                return Err(ModelError::DegenerateEdge(i));
            }
        }
        Ok(())
    }

    pub fn adjacency(&self) -> Adjacency {
        face_adjacency(self.faces.len(), self.edges.iter().map(|e| e.faces()))
    }

    /// All sample coordinates of faces and edges.
    pub fn all_points(&self) -> impl Iterator<Item = &Point3> {
        self.faces
            .iter()
            .flat_map(|f| f.samples().iter())
            .chain(self.edges.iter().flat_map(|e| e.polyline().iter()))
    }
}

/// Face-face adjacency and per-face edge degree.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Adjacency {
    pub neighbors: Vec<BTreeSet<usize>>,
    /// Number of incident edges per face (multi-edges counted separately).
    pub degree: Vec<usize>,
}

impl Adjacency {
    pub fn face_count(&self) -> usize {
        self.degree.len()
    }

    /// Connected components, each sorted ascending, ordered by smallest member.
    pub fn components(&self) -> Vec<Vec<usize>> {
        let n = self.face_count();
        let mut seen = vec![false; n];
        let mut out = Vec::new();
        for s in 0..n {
            if seen[s] {
                continue;
            }
            let mut comp = vec![s];
            seen[s] = true;
            let mut i = 0;
            while i < comp.len() {
                let f = comp[i];
                for &g in &self.neighbors[f] {
                    if !seen[g] {
                        seen[g] = true;
                        comp.push(g);
                    }
                }
                i += 1;
            }
            comp.sort_unstable();
            out.push(comp);
        }
        out
    }

    pub fn is_connected(&self) -> bool {
        self.components().len() <= 1
    }
}

/// Builds adjacency from the face pairs of every edge.
pub fn face_adjacency(
    face_count: usize,
    edge_faces: impl IntoIterator<Item = (usize, usize)>,
) -> Adjacency {
    let mut neighbors = vec![BTreeSet::new(); face_count];
    let mut degree = vec![0; face_count];
    for (a, b) in edge_faces {
        neighbors[a].insert(b);
        neighbors[b].insert(a);
        degree[a] += 1;
        degree[b] += 1;
    }
    Adjacency { neighbors, degree }
}

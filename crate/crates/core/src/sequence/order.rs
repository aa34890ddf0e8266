//! Face and edge orderings.
//!
//! Every strategy returns a permutation. Ties are broken by face centroid
//! in (z, y, x) order and then by original index, so orderings are fully
//! deterministic for a given seed.

use std::cmp::Ordering;
use std::collections::VecDeque;
use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, SymmetricEigen};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::model::{face_adjacency, Adjacency, Point3, SolidModel};

/// Read-only topology needed to order a solid's faces and edges.
pub trait TopologyView {
    fn face_count(&self) -> usize;
    fn edge_count(&self) -> usize;
    fn edge_faces(&self, edge: usize) -> (usize, usize);
    fn face_centroid(&self, face: usize) -> Point3;
    /// Any key that orders edges the way their bounding boxes compare
    /// lexicographically.
    fn edge_bbox_key(&self, edge: usize) -> [f64; 6];

    fn adjacency(&self) -> Adjacency {
        face_adjacency(
            self.face_count(),
            (0..self.edge_count()).map(|e| self.edge_faces(e)),
        )
    }
}

impl TopologyView for SolidModel {
    fn face_count(&self) -> usize {
        self.faces.len()
    }

    fn edge_count(&self) -> usize {
        self.edges.len()
    }

    fn edge_faces(&self, edge: usize) -> (usize, usize) {
        self.edges[edge].faces()
    }

    fn face_centroid(&self, face: usize) -> Point3 {
        self.faces[face].centroid()
    }

    fn edge_bbox_key(&self, edge: usize) -> [f64; 6] {
        self.edges[edge].bbox().0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum FaceStrategy {
    #[serde(rename = "DFS")]
    Dfs,
    #[serde(rename = "BFS")]
    Bfs,
    #[serde(rename = "RAND")]
    Rand,
    #[serde(rename = "ZYX")]
    Zyx,
    #[serde(rename = "DEG-A")]
    DegA,
    #[serde(rename = "SS")]
    Ss,
}

impl FaceStrategy {
    pub const ALL: [FaceStrategy; 6] = [
        FaceStrategy::Rand,
        FaceStrategy::Zyx,
        FaceStrategy::DegA,
        FaceStrategy::Ss,
        FaceStrategy::Bfs,
        FaceStrategy::Dfs,
    ];

    pub fn name(self) -> &'static str {
        match self {
            FaceStrategy::Dfs => "DFS",
            FaceStrategy::Bfs => "BFS",
            FaceStrategy::Rand => "RAND",
            FaceStrategy::Zyx => "ZYX",
            FaceStrategy::DegA => "DEG-A",
            FaceStrategy::Ss => "SS",
        }
    }
}

impl fmt::Display for FaceStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for FaceStrategy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let up = s.to_ascii_uppercase().replace('_', "-");
        Self::ALL
            .into_iter()
            .find(|k| k.name() == up || (up == "DEGA" && *k == FaceStrategy::DegA))
            .ok_or_else(|| format!("unknown face strategy `{s}`"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum EdgeStrategy {
    #[serde(rename = "MAX-IDX-A")]
    MaxIdxA,
    #[serde(rename = "RAND")]
    Rand,
}

impl EdgeStrategy {
    pub fn name(self) -> &'static str {
        match self {
            EdgeStrategy::MaxIdxA => "MAX-IDX-A",
            EdgeStrategy::Rand => "RAND",
        }
    }
}

impl fmt::Display for EdgeStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for EdgeStrategy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_uppercase().replace('_', "-").as_str() {
            "MAX-IDX-A" | "MAXIDXA" => Ok(EdgeStrategy::MaxIdxA),
            "RAND" => Ok(EdgeStrategy::Rand),
            _ => Err(format!("unknown edge strategy `{s}`")),
        }
    }
}

struct Keys {
    adj: Adjacency,
    edges: Vec<(usize, usize)>,
    centroids: Vec<Point3>,
}

impl Keys {
    fn new(view: &impl TopologyView) -> Self {
        Self {
            adj: view.adjacency(),
            edges: (0..view.edge_count()).map(|e| view.edge_faces(e)).collect(),
            centroids: (0..view.face_count()).map(|f| view.face_centroid(f)).collect(),
        }
    }

    /// Centroid-ZYX then index.
    fn tie(&self, a: usize, b: usize) -> Ordering {
        self.centroids[a].zyx_cmp(&self.centroids[b]).then(a.cmp(&b))
    }

    /// Lowest degree first, then the tie chain.
    fn low_degree_first(&self, a: usize, b: usize) -> Ordering {
        self.adj.degree[a].cmp(&self.adj.degree[b]).then(self.tie(a, b))
    }

    /// Highest degree first, then the tie chain.
    fn high_degree_first(&self, a: usize, b: usize) -> Ordering {
        self.adj.degree[b].cmp(&self.adj.degree[a]).then(self.tie(a, b))
    }

    /// Components with their start face, by descending max degree.
    fn components(&self) -> Vec<(usize, Vec<usize>)> {
        let mut comps: Vec<(usize, Vec<usize>)> = self
            .adj
            .components()
            .into_iter()
            .map(|c| {
                let start = *c
                    .iter()
                    .min_by(|&&a, &&b| self.high_degree_first(a, b))
                    .expect("components are non-empty");
                (start, c)
            })
            .collect();
        comps.sort_by(|a, b| self.high_degree_first(a.0, b.0));
        comps
    }

    fn sorted_unvisited(&self, f: usize, visited: &[bool]) -> Vec<usize> {
        let mut nb: Vec<usize> = self.adj.neighbors[f]
            .iter()
            .copied()
            .filter(|&g| !visited[g])
            .collect();
        nb.sort_by(|&a, &b| self.low_degree_first(a, b));
        nb
    }
}

fn dfs(keys: &Keys) -> Vec<usize> {
    let n = keys.adj.face_count();
    let mut visited = vec![false; n];
    let mut out = Vec::with_capacity(n);
    for (start, _) in keys.components() {
        let mut stack = vec![start];
        while let Some(f) = stack.pop() {
            if visited[f] {
                continue;
            }
            visited[f] = true;
            out.push(f);
            // lowest-degree neighbor ends on top of the stack
            stack.extend(keys.sorted_unvisited(f, &visited).into_iter().rev());
        }
    }
    out
}

fn bfs(keys: &Keys) -> Vec<usize> {
    let n = keys.adj.face_count();
    let mut visited = vec![false; n];
    let mut out = Vec::with_capacity(n);
    for (start, _) in keys.components() {
        let mut queue = VecDeque::from([start]);
        visited[start] = true;
        while let Some(f) = queue.pop_front() {
            out.push(f);
            for g in keys.sorted_unvisited(f, &visited) {
                visited[g] = true;
                queue.push_back(g);
            }
        }
    }
    out
}

/// Ascending Fiedler-vector coordinate per component. The eigenvector sign
/// is fixed so that the component's start face is non-positive.
fn spectral(keys: &Keys) -> Vec<usize> {
    let mut out = Vec::with_capacity(keys.adj.face_count());
    for (start, comp) in keys.components() {
        let m = comp.len();
        if m <= 2 {
            let mut c = comp.clone();
            c.sort_by(|&a, &b| keys.high_degree_first(a, b));
            out.extend(c);
            continue;
        }
        let local = |f: usize| comp.binary_search(&f).expect("face in component");
        // weighted Laplacian: multi-edges count with their multiplicity
        let mut lap = DMatrix::<f64>::zeros(m, m);
        for &(a, b) in &keys.edges {
            if comp.binary_search(&a).is_err() {
                continue;
            }
            let (i, j) = (local(a), local(b));
            lap[(i, i)] += 1.0;
            lap[(j, j)] += 1.0;
            lap[(i, j)] -= 1.0;
            lap[(j, i)] -= 1.0;
        }
        let eig = SymmetricEigen::new(lap);
        let mut idx: Vec<usize> = (0..m).collect();
        idx.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]).then(a.cmp(&b)));
        let mut v: Vec<f64> = eig.eigenvectors.column(idx[1]).iter().copied().collect();
        let s = v[local(start)];
        let flip = if s.abs() > 1e-12 {
            s > 0.0
        } else {
            let mut by_key = comp.clone();
            by_key.sort_by(|&a, &b| keys.high_degree_first(a, b));
            by_key
                .iter()
                .map(|&f| v[local(f)])
                .find(|x| x.abs() > 1e-12)
                .is_some_and(|x| x > 0.0)
        };
        if flip {
            v.iter_mut().for_each(|x| *x = -*x);
        }
        let coord: Vec<i64> = v.iter().map(|x| (x * 1e9).round() as i64).collect();
        let mut c = comp.clone();
        c.sort_by(|&a, &b| {
            coord[local(a)]
                .cmp(&coord[local(b)])
                .then(keys.tie(a, b))
        });
        out.extend(c);
    }
    out
}

/// Face visiting order. `seed` only matters for [`FaceStrategy::Rand`].
pub fn order_faces(view: &impl TopologyView, strategy: FaceStrategy, seed: u64) -> Vec<usize> {
    let n = view.face_count();
    if n == 0 {
        return Vec::new();
    }
    let keys = Keys::new(view);
    match strategy {
        FaceStrategy::Dfs => dfs(&keys),
        FaceStrategy::Bfs => bfs(&keys),
        FaceStrategy::Zyx => {
            let mut v: Vec<usize> = (0..n).collect();
            v.sort_by(|&a, &b| keys.tie(a, b));
            v
        }
        FaceStrategy::DegA => {
            let mut v: Vec<usize> = (0..n).collect();
            v.sort_by(|&a, &b| keys.low_degree_first(a, b));
            v
        }
        FaceStrategy::Ss => spectral(&keys),
        FaceStrategy::Rand => {
            let mut v: Vec<usize> = (0..n).collect();
            v.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
            v
        }
    }
}

/// Position of each face in `order`.
pub fn positions(order: &[usize]) -> Vec<usize> {
    let mut pos = vec![0; order.len()];
    for (i, &f) in order.iter().enumerate() {
        pos[f] = i;
    }
    pos
}

/// Edge order. MAX-IDX-A sorts by the larger face position, then the
/// smaller, then bounding box, then index.
pub fn order_edges(
    view: &impl TopologyView,
    face_positions: &[usize],
    strategy: EdgeStrategy,
    seed: u64,
) -> Vec<usize> {
    let mut v: Vec<usize> = (0..view.edge_count()).collect();
    match strategy {
        EdgeStrategy::MaxIdxA => {
            let key = |e: usize| {
                let (a, b) = view.edge_faces(e);
                let (pa, pb) = (face_positions[a], face_positions[b]);
                (pa.max(pb), pa.min(pb))
            };
            v.sort_by(|&a, &b| {
                key(a)
                    .cmp(&key(b))
                    .then_with(|| {
                        let (ka, kb) = (view.edge_bbox_key(a), view.edge_bbox_key(b));
                        ka.iter()
                            .zip(kb.iter())
                            .map(|(x, y)| x.total_cmp(y))
                            .find(|o| o.is_ne())
                            .unwrap_or(Ordering::Equal)
                    })
                    .then(a.cmp(&b))
            });
        }
        EdgeStrategy::Rand => {
            // independent stream from the face shuffle
            v.shuffle(&mut ChaCha8Rng::seed_from_u64(crate::util::derive_seed(seed, 2)));
        }
    }
    v
}

use std::cmp::Ordering;

use super::union_find::UnionFind;
use super::{Diagnostic, ReconstructedModel};
use crate::model::Point3;

/// Endpoint node of edge `e`, end `k` (0 = first sample, 1 = last).
fn node(e: usize, k: usize) -> usize {
    2 * e + k
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct VertexSet {
    pub vertices: Vec<Point3>,
    pub edge_vertices: Vec<[usize; 2]>,
    /// Per face, each loop as the edge indices in walking order.
    pub loops: Vec<Vec<Vec<usize>>>,
    pub diagnostics: Vec<Diagnostic>,
}

fn point_cmp(a: &Point3, b: &Point3) -> Ordering {
    a.x.total_cmp(&b.x)
        .then(a.y.total_cmp(&b.y))
        .then(a.z.total_cmp(&b.z))
}

/// Clusters edge endpoints into vertices. Within every face, endpoint pairs
/// from distinct edges are merged greedily by ascending distance when both
/// ends are still unmatched in that face and lie within `tau`. Merges
/// accumulate in one global union-find, and each vertex is the centroid of
/// its cluster.
pub fn reconstruct_vertices(model: &ReconstructedModel, tau: f64) -> VertexSet {
    let ne = model.edges.len();
    let nf = model.faces.len();
    let ends: Vec<Point3> = model
        .edges
        .iter()
        .flat_map(|e| [e.polyline[0], *e.polyline.last().expect("edges are non-empty")])
        .collect();
    let mut diagnostics = Vec::new();
    for e in 0..ne {
        if ends[node(e, 0)].dist(&ends[node(e, 1)]) <= 1e-9 {
            diagnostics.push(Diagnostic::DegenerateEdge { edge: e });
        }
    }

    let mut incident: Vec<Vec<usize>> = vec![Vec::new(); nf];
    for (e, edge) in model.edges.iter().enumerate() {
        for f in edge.faces {
            incident[f].push(e);
        }
    }

    let mut uf = UnionFind::new(2 * ne);
    let mut partners: Vec<Vec<Option<usize>>> = Vec::with_capacity(nf);
    for (f, edges) in incident.iter().enumerate() {
        let nodes: Vec<usize> = edges.iter().flat_map(|&e| [node(e, 0), node(e, 1)]).collect();
        let mut pairs: Vec<(f64, usize, usize)> = Vec::new();
        for (i, &p) in nodes.iter().enumerate() {
            for &q in &nodes[i + 1..] {
                if p / 2 == q / 2 {
                    continue;
                }
                let d = ends[p].dist(&ends[q]);
                if d <= tau {
                    // orient each pair by coordinates so ties do not depend on edge order
                    let (a, b) = match point_cmp(&ends[p], &ends[q]) {
                        Ordering::Greater => (q, p),
                        _ => (p, q),
                    };
                    pairs.push((d, a, b));
                }
            }
        }
        pairs.sort_by(|x, y| {
            x.0.total_cmp(&y.0)
                .then_with(|| point_cmp(&ends[x.1], &ends[y.1]))
                .then_with(|| point_cmp(&ends[x.2], &ends[y.2]))
                .then(x.1.cmp(&y.1))
                .then(x.2.cmp(&y.2))
        });
        let mut partner: Vec<Option<usize>> = vec![None; 2 * ne];
        for (_, a, b) in pairs {
            if partner[a].is_none() && partner[b].is_none() {
                partner[a] = Some(b);
                partner[b] = Some(a);
                uf.union(a, b);
            }
        }
        for &p in &nodes {
            if partner[p].is_none() {
                diagnostics.push(Diagnostic::UnmatchedEndpoint {
                    edge: p / 2,
                    end: p % 2,
                    face: f,
                });
            }
        }
        partners.push(partner);
    }

    let (labels, nv) = uf.labels();
    let mut members: Vec<Vec<Point3>> = vec![Vec::new(); nv];
    for (n, p) in ends.iter().enumerate() {
        members[labels[n]].push(*p);
    }
    // summing in coordinate order keeps centroids independent of edge order
    let vertices = members
        .into_iter()
        .map(|mut pts| {
            pts.sort_by(point_cmp);
            let s = pts.iter().fold(Point3::default(), |a, p| a.add(*p));
            s.scale(1.0 / pts.len() as f64)
        })
        .collect();
    let edge_vertices: Vec<[usize; 2]> = (0..ne)
        .map(|e| [labels[node(e, 0)], labels[node(e, 1)]])
        .collect();
    for (e, ev) in edge_vertices.iter().enumerate() {
        if ev[0] == ev[1] {
            diagnostics.push(Diagnostic::CollapsedEdge { edge: e });
        }
    }

    let mut loops = Vec::with_capacity(nf);
    for (f, edges) in incident.iter().enumerate() {
        let partner = &partners[f];
        let mut used = vec![false; ne];
        let mut face_loops = Vec::new();
        for &e in edges {
            if used[e] {
                continue;
            }
            used[e] = true;
            let mut cycle = vec![e];
            let start = node(e, 0);
            let mut cur = node(e, 1);
            let closed = loop {
                match partner[cur] {
                    None => break false,
                    Some(q) if q == start => break true,
                    Some(q) => {
                        let next = q / 2;
                        if used[next] {
                            break false;
                        }
                        used[next] = true;
                        cycle.push(next);
                        cur = q ^ 1;
                    }
                }
            };
            if !closed {
                diagnostics.push(Diagnostic::OpenLoop { face: f, edges: cycle.clone() });
            }
            face_loops.push(cycle);
        }
        loops.push(face_loops);
    }

    VertexSet {
        vertices,
        edge_vertices,
        loops,
        diagnostics,
    }
}

//! Closed-form solids with known combinatorics.
//!
//! Every solid here is genus 0, so `V - E + F = 2`. Prismatic solids are
//! built from a star-shaped polygon cap extruded along z; the cylinder is
//! split along two seams so each edge borders two distinct faces.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::IngestError;
use crate::model::{EdgeGeom, FaceGeom, Point3, SolidModel};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProceduralKind {
    Box,
    NPrism,
    CylinderApprox,
    LBracket,
}

impl ProceduralKind {
    pub const ALL: [ProceduralKind; 4] = [
        ProceduralKind::Box,
        ProceduralKind::NPrism,
        ProceduralKind::CylinderApprox,
        ProceduralKind::LBracket,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ProceduralKind::Box => "box",
            ProceduralKind::NPrism => "n_prism",
            ProceduralKind::CylinderApprox => "cylinder_approx",
            ProceduralKind::LBracket => "l_bracket",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.name() == s)
    }

    /// Class label used for class-conditional corpora.
    pub fn class_label(self) -> u32 {
        self as u32
    }

    /// Samples parameters from the documented ranges:
    /// box sides in [0.4, 1.6]; prism sides in [3, 8], radius in
    /// [0.3, 0.9], height in [0.4, 1.6]; cylinder likewise; bracket
    /// footprint in [0.8, 1.6], arm thickness 25–60% of the footprint,
    /// height in [0.3, 1.4].
    pub fn random_params(self, rng: &mut impl Rng) -> ProceduralParams {
        let shape = match self {
            ProceduralKind::Box => Shape::Box {
                size: [
                    rng.random_range(0.4..1.6),
                    rng.random_range(0.4..1.6),
                    rng.random_range(0.4..1.6),
                ],
            },
            ProceduralKind::NPrism => Shape::NPrism {
                sides: rng.random_range(3..=8),
                radius: rng.random_range(0.3..0.9),
                height: rng.random_range(0.4..1.6),
            },
            ProceduralKind::CylinderApprox => Shape::CylinderApprox {
                radius: rng.random_range(0.3..0.9),
                height: rng.random_range(0.4..1.6),
            },
            ProceduralKind::LBracket => {
                let width = rng.random_range(0.8..1.6);
                let depth = rng.random_range(0.8..1.6);
                let t: f64 = rng.random_range(0.25..0.6);
                Shape::LBracket {
                    width,
                    depth,
                    thickness: t * width.min(depth),
                    height: rng.random_range(0.3..1.4),
                }
            }
        };
        ProceduralParams::new(shape)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Shape {
    Box {
        size: [f64; 3],
    },
    NPrism {
        sides: usize,
        radius: f64,
        height: f64,
    },
    CylinderApprox {
        radius: f64,
        height: f64,
    },
    /// L-shaped footprint in xy: a `width × depth` rectangle with the
    /// `(width - thickness) × (depth - thickness)` corner removed.
    LBracket {
        width: f64,
        depth: f64,
        thickness: f64,
        height: f64,
    },
}

impl Shape {
    pub fn kind(&self) -> ProceduralKind {
        match self {
            Shape::Box { .. } => ProceduralKind::Box,
            Shape::NPrism { .. } => ProceduralKind::NPrism,
            Shape::CylinderApprox { .. } => ProceduralKind::CylinderApprox,
            Shape::LBracket { .. } => ProceduralKind::LBracket,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProceduralParams {
    pub shape: Shape,
    pub center: [f64; 3],
    /// Relative amplitude of seeded perturbations applied to the shape's
    /// dimensions and absolute amplitude for the center offset.
    pub jitter: f64,
}

impl ProceduralParams {
    pub fn new(shape: Shape) -> Self {
        Self {
            shape,
            center: [0.0; 3],
            jitter: 0.0,
        }
    }
}

/// Combinatorics of a generated solid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub vertices: usize,
    pub edges: usize,
    pub faces: usize,
}

impl GroundTruth {
    pub fn euler(&self) -> i64 {
        self.vertices as i64 - self.edges as i64 + self.faces as i64
    }
}

fn param_err(msg: impl Into<String>) -> IngestError {
    IngestError::Param(msg.into())
}

pub fn generate_procedural(
    params: &ProceduralParams,
    seed: u64,
) -> Result<(SolidModel, GroundTruth), IngestError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let j = params.jitter;
    if !(0.0..0.5).contains(&j) {
        return Err(param_err("jitter must be in [0, 0.5)"));
    }
    let mut wiggle = |x: f64| x * (1.0 + j * rng.random_range(-1.0..=1.0));
    let shape = match params.shape.clone() {
        Shape::Box { size } => Shape::Box {
            size: size.map(&mut wiggle),
        },
        Shape::NPrism {
            sides,
            radius,
            height,
        } => Shape::NPrism {
            sides,
            radius: wiggle(radius),
            height: wiggle(height),
        },
        Shape::CylinderApprox { radius, height } => Shape::CylinderApprox {
            radius: wiggle(radius),
            height: wiggle(height),
        },
        Shape::LBracket {
            width,
            depth,
            thickness,
            height,
        } => Shape::LBracket {
            width: wiggle(width),
            depth: wiggle(depth),
            thickness: wiggle(thickness),
            height: wiggle(height),
        },
    };
    let c = params.center;
    let center = Point3::new(
        c[0] + j * rng.random_range(-1.0..=1.0),
        c[1] + j * rng.random_range(-1.0..=1.0),
        c[2] + j * rng.random_range(-1.0..=1.0),
    );

    let label = Some(shape.kind().class_label());
    let (mut solid, gt) = match shape {
        Shape::Box { size } => {
            if size.iter().any(|&s| s <= 1e-3) {
                return Err(param_err("box sides must be positive"));
            }
            let (hx, hy) = (size[0] / 2.0, size[1] / 2.0);
            let poly = vec![(-hx, -hy), (hx, -hy), (hx, hy), (-hx, hy)];
            extruded(&poly, (0.0, 0.0), size[2], center)?
        }
        Shape::NPrism {
            sides,
            radius,
            height,
        } => {
            if sides < 3 {
                return Err(param_err("a prism needs at least 3 sides"));
            }
            if radius <= 1e-3 || height <= 1e-3 {
                return Err(param_err("prism radius and height must be positive"));
            }
            let poly: Vec<(f64, f64)> = (0..sides)
                .map(|i| {
                    let a = 2.0 * PI * i as f64 / sides as f64;
                    (radius * a.cos(), radius * a.sin())
                })
                .collect();
            extruded(&poly, (0.0, 0.0), height, center)?
        }
        Shape::CylinderApprox { radius, height } => {
            if radius <= 1e-3 || height <= 1e-3 {
                return Err(param_err("cylinder radius and height must be positive"));
            }
            cylinder(radius, height, center)?
        }
        Shape::LBracket {
            width,
            depth,
            thickness,
            height,
        } => {
            if thickness <= 1e-3 || thickness >= width.min(depth) - 1e-3 || height <= 1e-3 {
                return Err(param_err(
                    "bracket thickness must be positive and thinner than both arms",
                ));
            }
            let (x0, y0) = (-width / 2.0, -depth / 2.0);
            let poly = vec![
                (x0, y0),
                (x0 + width, y0),
                (x0 + width, y0 + thickness),
                (x0 + thickness, y0 + thickness),
                (x0 + thickness, y0 + depth),
                (x0, y0 + depth),
            ];
            // the square where both arms overlap sees the whole footprint
            let kernel = (x0 + thickness / 2.0, y0 + thickness / 2.0);
            extruded(&poly, kernel, height, center)?
        }
    };
    solid.class_label = label;
    if solid
        .all_points()
        .any(|p| p.to_array().iter().any(|v| v.abs() >= 1.0))
    {
        return Err(param_err("solid does not fit strictly inside [-1, 1]^3"));
    }
    Ok((solid, gt))
}

/// Cap grid over a polygon. Quads are sampled bilinearly, other polygons
/// radially from a kernel point.
fn cap_face(poly: &[Point3], kernel: Point3) -> Result<FaceGeom, IngestError> {
    let face = if poly.len() == 4 {
        FaceGeom::from_fn(|u, v| poly[0].lerp(poly[1], v).lerp(poly[3].lerp(poly[2], v), u))
    } else {
        let n = poly.len();
        FaceGeom::from_fn(|u, v| {
            let s = v * n as f64;
            let side = (s.floor() as usize).min(n - 1);
            let b = poly[side].lerp(poly[(side + 1) % n], s - side as f64);
            kernel.lerp(b, u)
        })
    };
    Ok(face?)
}

fn extruded(
    poly: &[(f64, f64)],
    kernel: (f64, f64),
    height: f64,
    center: Point3,
) -> Result<(SolidModel, GroundTruth), IngestError> {
    let n = poly.len();
    let (z0, z1) = (center.z - height / 2.0, center.z + height / 2.0);
    let at = |i: usize, z: f64| Point3::new(center.x + poly[i % n].0, center.y + poly[i % n].1, z);
    let kern = |z: f64| Point3::new(center.x + kernel.0, center.y + kernel.1, z);

    let bottom: Vec<Point3> = (0..n).map(|i| at(i, z0)).collect();
    let top: Vec<Point3> = (0..n).map(|i| at(i, z1)).collect();
    let mut faces = vec![cap_face(&bottom, kern(z0))?, cap_face(&top, kern(z1))?];
    for i in 0..n {
        let (a, b) = (at(i, z0), at(i + 1, z0));
        let (a1, b1) = (at(i, z1), at(i + 1, z1));
        faces.push(FaceGeom::from_fn(|u, v| a.lerp(b, v).lerp(a1.lerp(b1, v), u))?);
    }
    let side = |i: usize| 2 + i % n;
    let mut edges = Vec::with_capacity(3 * n);
    for i in 0..n {
        let (a, b) = (at(i, z0), at(i + 1, z0));
        edges.push(EdgeGeom::from_fn(|t| a.lerp(b, t), 0, side(i))?);
    }
    for i in 0..n {
        let (a, b) = (at(i, z1), at(i + 1, z1));
        edges.push(EdgeGeom::from_fn(|t| a.lerp(b, t), 1, side(i))?);
    }
    for i in 0..n {
        let (a, b) = (at(i, z0), at(i, z1));
        edges.push(EdgeGeom::from_fn(|t| a.lerp(b, t), side(i + n - 1), side(i))?);
    }
    let gt = GroundTruth {
        vertices: 2 * n,
        edges: 3 * n,
        faces: n + 2,
    };
    Ok((
        SolidModel {
            faces,
            edges,
            class_label: None,
        },
        gt,
    ))
}

fn cylinder(radius: f64, height: f64, c: Point3) -> Result<(SolidModel, GroundTruth), IngestError> {
    let (z0, z1) = (c.z - height / 2.0, c.z + height / 2.0);
    let rim = |theta: f64, z: f64| {
        Point3::new(c.x + radius * theta.cos(), c.y + radius * theta.sin(), z)
    };
    let disc = |z: f64| {
        FaceGeom::from_fn(|u, v| Point3::new(c.x, c.y, z).lerp(rim(2.0 * PI * v, z), u))
    };
    let half = |from: f64| {
        FaceGeom::from_fn(|u, v| {
            let theta = from + PI * v;
            rim(theta, z0 + u * (z1 - z0))
        })
    };
    let faces = vec![disc(z0)?, disc(z1)?, half(0.0)?, half(PI)?];
    let arc = |from: f64, z: f64, cap: usize, lateral: usize| {
        EdgeGeom::from_fn(|t| rim(from + PI * t, z), cap, lateral)
    };
    let seam = |theta: f64| EdgeGeom::from_fn(|t| rim(theta, z0 + t * (z1 - z0)), 2, 3);
    let edges = vec![
        arc(0.0, z0, 0, 2)?,
        arc(PI, z0, 0, 3)?,
        arc(0.0, z1, 1, 2)?,
        arc(PI, z1, 1, 3)?,
        seam(0.0)?,
        seam(PI)?,
    ];
    Ok((
        SolidModel {
            faces,
            edges,
            class_label: None,
        },
        GroundTruth {
            vertices: 4,
            edges: 6,
            faces: 4,
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gen(shape: Shape) -> (SolidModel, GroundTruth) {
        generate_procedural(&ProceduralParams::new(shape), 0).unwrap()
    }

    #[test]
    fn box_counts() {
        let (s, gt) = gen(Shape::Box { size: [1.0; 3] });
        assert_eq!((s.faces.len(), s.edges.len()), (6, 12));
        assert_eq!(gt, GroundTruth { vertices: 8, edges: 12, faces: 6 });
        assert_eq!(gt.euler(), 2);
        assert!(s.adjacency().degree.iter().all(|&d| d == 4));
        assert!(s.adjacency().neighbors.iter().all(|n| n.len() == 4));
    }

    #[test]
    fn hexagonal_prism_counts() {
        let (s, gt) = gen(Shape::NPrism { sides: 6, radius: 0.5, height: 0.8 });
        assert_eq!(gt, GroundTruth { vertices: 12, edges: 18, faces: 8 });
        assert_eq!((s.faces.len(), s.edges.len()), (8, 18));
        assert_eq!(gt.euler(), 2);
    }

    #[test]
    fn cylinder_is_seam_split() {
        let (s, gt) = gen(Shape::CylinderApprox { radius: 0.5, height: 1.0 });
        assert_eq!(gt.euler(), 2);
        assert_eq!((s.faces.len(), s.edges.len()), (4, 6));
        for e in &s.edges {
            assert_ne!(e.face_a, e.face_b);
            assert!(e.start().dist(&e.end()) > 0.1);
        }
        // the two lateral halves share both seams
        assert_eq!(s.adjacency().degree[2], 4);
        assert_eq!(s.adjacency().neighbors[2].len(), 3);
    }

    #[test]
    fn bracket_counts() {
        let (s, gt) = gen(Shape::LBracket {
            width: 1.2,
            depth: 1.0,
            thickness: 0.3,
            height: 0.5,
        });
        assert_eq!(gt, GroundTruth { vertices: 12, edges: 18, faces: 8 });
        assert_eq!(s.edges.len(), 18);
    }

    #[test]
    fn edges_follow_face_boundaries() {
        // every edge endpoint lies on a corner of the polygon frame
        let (s, _) = gen(Shape::Box { size: [1.0, 0.5, 0.25] });
        for e in &s.edges {
            for p in [e.start(), e.end()] {
                assert!((p.x.abs() - 0.5).abs() < 1e-12);
                assert!((p.y.abs() - 0.25).abs() < 1e-12);
                assert!((p.z.abs() - 0.125).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn deterministic_and_inside() {
        for kind in ProceduralKind::ALL {
            for seed in 0..20 {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let mut p = kind.random_params(&mut rng);
                p.jitter = 0.05;
                let a = generate_procedural(&p, seed).unwrap();
                let b = generate_procedural(&p, seed).unwrap();
                assert_eq!(a, b);
                assert!(a.0.all_points().all(|q| q.to_array().iter().all(|v| v.abs() < 1.0)));
                assert_eq!(a.1.euler(), 2);
                a.0.validate(50).unwrap();
            }
        }
    }

    #[test]
    fn degenerate_parameters() {
        let bad = [
            Shape::Box { size: [0.0, 1.0, 1.0] },
            Shape::NPrism { sides: 2, radius: 0.5, height: 0.5 },
            Shape::CylinderApprox { radius: 0.5, height: 0.0 },
            Shape::LBracket { width: 1.0, depth: 1.0, thickness: 1.0, height: 0.5 },
            Shape::Box { size: [2.5, 1.0, 1.0] },
        ];
        for s in bad {
            assert!(matches!(
                generate_procedural(&ProceduralParams::new(s), 0),
                Err(IngestError::Param(_))
            ));
        }
    }
}

//! Point clouds sampled from decoded models and the distances between them.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::MetricsError;
use crate::detok::ReconstructedModel;
use crate::model::{Point3, GRID};

fn tri_area(a: Point3, b: Point3, c: Point3) -> f64 {
    0.5 * b.sub(a).cross(c.sub(a)).norm()
}

fn quad_area(g: &[Point3], u: usize, v: usize) -> f64 {
    let p = |i: usize, j: usize| g[i * GRID + j];
    tri_area(p(u, v), p(u + 1, v), p(u, v + 1)) + tri_area(p(u + 1, v + 1), p(u, v + 1), p(u + 1, v))
}

/// `n` surface points. Faces are picked in proportion to the area of their
/// UV-grid quads, then a quad uniformly, then a bilinear point inside it.
pub fn sample_points(model: &ReconstructedModel, n: usize, seed: u64) -> Result<Vec<Point3>, MetricsError> {
    let q = GRID - 1;
    let areas: Vec<f64> = model
        .faces
        .iter()
        .map(|f| {
            if f.grid.len() != GRID * GRID {
                return 0.0;
            }
            let a: f64 = (0..q).flat_map(|u| (0..q).map(move |v| (u, v))).map(|(u, v)| quad_area(&f.grid, u, v)).sum();
            if a.is_finite() { a } else { 0.0 }
        })
        .collect();
    let total: f64 = areas.iter().sum();
    if !(total > 0.0) {
        return Err(MetricsError::EmptyModel);
    }
    let mut cum = Vec::with_capacity(areas.len());
    let mut acc = 0.0;
    for a in &areas {
        acc += a;
        cum.push(acc);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        let x = rng.random::<f64>() * total;
        let f = cum.partition_point(|&c| c <= x).min(areas.len() - 1);
        let g = &model.faces[f].grid;
        let (u, v) = (rng.random_range(0..q), rng.random_range(0..q));
        let (s, t): (f64, f64) = (rng.random(), rng.random());
        let p = |i: usize, j: usize| g[i * GRID + j];
        let a = p(u, v).lerp(p(u + 1, v), s);
        let b = p(u, v + 1).lerp(p(u + 1, v + 1), s);
        out.push(a.lerp(b, t));
    }
    Ok(out)
}

fn mean_nn(a: &[Point3], b: &[Point3]) -> f64 {
    a.iter()
        .map(|p| b.iter().map(|q| p.dist2(q)).fold(f64::INFINITY, f64::min))
        .sum::<f64>()
        / a.len() as f64
}

/// Sum of the two mean squared nearest-neighbor distances.
pub fn chamfer(a: &[Point3], b: &[Point3]) -> Result<f64, MetricsError> {
    if a.is_empty() || b.is_empty() {
        return Err(MetricsError::EmptyCloud);
    }
    Ok(mean_nn(a, b) + mean_nn(b, a))
}

/// `cd[i][j] = chamfer(gen[i], ref[j])`.
pub fn chamfer_matrix(gen: &[Vec<Point3>], refs: &[Vec<Point3>]) -> Result<Vec<Vec<f64>>, MetricsError> {
    if gen.is_empty() || refs.is_empty() {
        return Err(MetricsError::EmptySet);
    }
    gen.par_iter()
        .map(|g| refs.iter().map(|r| chamfer(g, r)).collect())
        .collect()
}

/// Percentage of references that are the nearest reference of some
/// generated cloud.
pub fn coverage_from(cd: &[Vec<f64>], n_ref: usize) -> f64 {
    let mut hit = vec![false; n_ref];
    for row in cd {
        let best = row
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.total_cmp(b.1).then(a.0.cmp(&b.0)))
            .map(|(j, _)| j);
        if let Some(j) = best {
            hit[j] = true;
        }
    }
    100.0 * hit.iter().filter(|&&h| h).count() as f64 / n_ref as f64
}

/// Mean over references of the distance to the closest generated cloud.
pub fn mmd_from(cd: &[Vec<f64>], n_ref: usize) -> f64 {
    (0..n_ref)
        .map(|j| cd.iter().map(|row| row[j]).fold(f64::INFINITY, f64::min))
        .sum::<f64>()
        / n_ref as f64
}

pub fn coverage(gen: &[Vec<Point3>], refs: &[Vec<Point3>]) -> Result<f64, MetricsError> {
    Ok(coverage_from(&chamfer_matrix(gen, refs)?, refs.len()))
}

pub fn mmd(gen: &[Vec<Point3>], refs: &[Vec<Point3>]) -> Result<f64, MetricsError> {
    Ok(mmd_from(&chamfer_matrix(gen, refs)?, refs.len()))
}

fn histogram(clouds: &[Vec<Point3>], res: usize) -> Vec<f64> {
    let mut h = vec![0.0; res * res * res];
    let cell = |c: f64| (((c + 1.0) * 0.5 * res as f64).floor().max(0.0) as usize).min(res - 1);
    let mut n = 0usize;
    for p in clouds.iter().flatten() {
        let [x, y, z] = p.to_array();
        h[(cell(x) * res + cell(y)) * res + cell(z)] += 1.0;
        n += 1;
    }
    h.iter_mut().for_each(|v| *v /= n as f64);
    h
}

/// Jensen-Shannon divergence (natural log) of pooled occupancy histograms
/// over a `res³` voxelization of `[-1, 1]³`.
pub fn jsd(gen: &[Vec<Point3>], refs: &[Vec<Point3>], res: usize) -> Result<f64, MetricsError> {
    if res == 0 {
        return Err(MetricsError::BadGrid);
    }
    if gen.iter().all(|c| c.is_empty()) || refs.iter().all(|c| c.is_empty()) {
        return Err(MetricsError::EmptyCloud);
    }
    let (p, q) = (histogram(gen, res), histogram(refs, res));
    let mut d = 0.0;
    for (&a, &b) in p.iter().zip(&q) {
        let m = 0.5 * (a + b);
        if a > 0.0 {
            d += 0.5 * a * (a / m).ln();
        }
        if b > 0.0 {
            d += 0.5 * b * (b / m).ln();
        }
    }
    Ok(d.max(0.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::{generate_procedural, ProceduralParams, Shape};
    use proptest::prelude::*;

    fn cube() -> ReconstructedModel {
        let s = generate_procedural(&ProceduralParams::new(Shape::Box { size: [1.0; 3] }), 0).unwrap().0;
        ReconstructedModel::from_solid(&s)
    }

    fn pt(x: f64, y: f64, z: f64) -> Point3 {
        Point3::new(x, y, z)
    }

    #[test]
    fn cube_points_lie_on_the_surface() {
        let m = cube();
        let b = crate::model::Bbox::of_points(m.points()).unwrap();
        let pts = sample_points(&m, 3000, 1).unwrap();
        for p in &pts {
            let c = p.to_array();
            let on_face = (0..3).any(|a| (c[a] - b.0[a]).abs() < 1e-9 || (c[a] - b.0[a + 3]).abs() < 1e-9);
            assert!(on_face && b.contains(p, 1e-9), "{p:?}");
        }
        assert_eq!(pts, sample_points(&m, 3000, 1).unwrap());
    }

    #[test]
    fn equal_faces_get_equal_shares() {
        let m = cube();
        let pts = sample_points(&m, 6000, 2).unwrap();
        let b = crate::model::Bbox::of_points(m.points()).unwrap();
        let mut counts = [0usize; 6];
        for p in &pts {
            let c = p.to_array();
            let k = (0..6).find(|&k| (c[k % 3] - b.0[k]).abs() < 1e-9).unwrap();
            counts[k] += 1;
        }
        // each share within 5% of n, and no bias detectable by chi-square (df 5, p = 0.001)
        for c in counts {
            assert!((700..=1300).contains(&c), "{counts:?}");
        }
        let chi2: f64 = counts.iter().map(|&c| (c as f64 - 1000.0).powi(2) / 1000.0).sum();
        assert!(chi2 < 20.52, "{counts:?} chi2 {chi2}");
    }

    #[test]
    fn zero_area_model_is_rejected() {
        let mut m = cube();
        m.faces.truncate(1);
        let p = m.faces[0].grid[0];
        m.faces[0].grid.iter_mut().for_each(|q| *q = p);
        assert_eq!(sample_points(&m, 10, 0), Err(MetricsError::EmptyModel));
    }

    #[test]
    fn chamfer_values() {
        let a = vec![pt(0.0, 0.0, 0.0)];
        let b = vec![pt(1.0, 0.0, 0.0)];
        assert_eq!(chamfer(&a, &b).unwrap(), 2.0);
        // A = {0, 2} on x, B = {0}: A→B mean (0 + 4)/2 = 2, B→A 0
        let a2 = vec![pt(0.0, 0.0, 0.0), pt(2.0, 0.0, 0.0)];
        assert_eq!(chamfer(&a2, &a).unwrap(), 2.0);
        assert_eq!(chamfer(&a2, &a2).unwrap(), 0.0);
        assert_eq!(chamfer(&[], &a), Err(MetricsError::EmptyCloud));
    }

    #[test]
    fn set_metrics_on_small_sets() {
        let c = |x: f64| vec![pt(x, 0.0, 0.0), pt(x, 0.5, 0.0)];
        let refs = vec![c(0.0), c(0.5), c(-0.5)];
        assert_eq!(coverage(&refs, &refs).unwrap(), 100.0);
        assert_eq!(mmd(&refs, &refs).unwrap(), 0.0);
        assert_eq!(jsd(&refs, &refs, 28).unwrap(), 0.0);
        // identical generated clouds match a single reference
        let same = vec![c(0.1); 4];
        assert!(coverage(&same, &refs).unwrap() <= 100.0 / 3.0 + 1e-12);
        // one generated cloud at equal distance from every reference
        let ring = vec![vec![pt(0.0, 0.0, 0.0)]];
        let refs2 = vec![vec![pt(1.0, 0.0, 0.0)], vec![pt(0.0, -1.0, 0.0)], vec![pt(0.0, 0.0, 1.0)]];
        assert!((mmd(&ring, &refs2).unwrap() - 2.0).abs() < 1e-12);
    }

    #[test]
    fn jsd_disjoint_is_ln2() {
        let a = vec![vec![pt(-0.99, -0.99, -0.99); 5]];
        let b = vec![vec![pt(0.99, 0.99, 0.99); 3]];
        assert!((jsd(&a, &b, 28).unwrap() - std::f64::consts::LN_2).abs() < 1e-9);
        assert!((jsd(&b, &a, 28).unwrap() - std::f64::consts::LN_2).abs() < 1e-9);
        assert_eq!(jsd(&a, &b, 0), Err(MetricsError::BadGrid));
    }

    fn cloud() -> impl Strategy<Value = Vec<Point3>> {
        prop::collection::vec((-1.0..1.0f64, -1.0..1.0f64, -1.0..1.0f64).prop_map(|(x, y, z)| pt(x, y, z)), 1..12)
    }

    proptest! {
        #[test]
        fn chamfer_symmetric_and_permutation_invariant(a in cloud(), b in cloud()) {
            let d = chamfer(&a, &b).unwrap();
            prop_assert!(d >= 0.0);
            prop_assert!((d - chamfer(&b, &a).unwrap()).abs() < 1e-12);
            let mut r = a.clone();
            r.reverse();
            prop_assert!((d - chamfer(&r, &b).unwrap()).abs() < 1e-12);
        }

        #[test]
        fn set_metric_ranges(gen in prop::collection::vec(cloud(), 1..5), refs in prop::collection::vec(cloud(), 1..5)) {
            let c = coverage(&gen, &refs).unwrap();
            prop_assert!((0.0..=100.0).contains(&c));
            prop_assert!(c <= 100.0 * gen.len() as f64 / refs.len() as f64 + 1e-9);
            prop_assert!(mmd(&gen, &refs).unwrap() >= 0.0);
            let j = jsd(&gen, &refs, 28).unwrap();
            prop_assert!((0.0..=std::f64::consts::LN_2 + 1e-12).contains(&j));
            prop_assert!((j - jsd(&refs, &gen, 28).unwrap()).abs() < 1e-12);
            let mut rev = gen.clone();
            rev.reverse();
            prop_assert!((mmd(&gen, &refs).unwrap() - mmd(&rev, &refs).unwrap()).abs() < 1e-12);
        }
    }
}

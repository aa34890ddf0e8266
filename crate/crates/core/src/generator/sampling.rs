use rand::Rng;

use super::GenError;

/// Tokens kept by top-p filtering with their renormalized probabilities,
/// most probable first. Ties are ordered by token id.
pub fn nucleus_support(dist: &[f64], p: f64) -> Result<Vec<(u32, f64)>, GenError> {
    if !(p > 0.0 && p <= 1.0) {
        return Err(GenError::BadTopP(p));
    }
    let total: f64 = dist.iter().filter(|x| **x > 0.0).sum();
    if !(total > 0.0 && total.is_finite()) {
        return Err(GenError::DegenerateDistribution);
    }
    let mut ids: Vec<u32> = (0..dist.len() as u32).filter(|&i| dist[i as usize] > 0.0).collect();
    let order = |a: &u32, b: &u32| {
        dist[*b as usize]
            .total_cmp(&dist[*a as usize])
            .then(a.cmp(b))
    };
    if p == 1.0 {
        ids.sort_by(order);
        return Ok(ids.iter().map(|&i| (i, dist[i as usize] / total)).collect());
    }
    let target = p * total;
    // grow a sorted head until it holds enough mass; avoids sorting the whole vocabulary
    let mut m = 64.min(ids.len());
    loop {
        if m < ids.len() {
            ids.select_nth_unstable_by(m - 1, order);
        }
        ids[..m].sort_by(order);
        let mut cum = 0.0;
        for (k, &i) in ids[..m].iter().enumerate() {
            cum += dist[i as usize];
            if cum >= target || k + 1 == ids.len() {
                return Ok(ids[..=k]
                    .iter()
                    .map(|&i| (i, dist[i as usize] / cum))
                    .collect());
            }
        }
        m = (2 * m).min(ids.len());
    }
}

pub fn nucleus_sample(dist: &[f64], p: f64, rng: &mut impl Rng) -> Result<u32, GenError> {
    let support = nucleus_support(dist, p)?;
    let u: f64 = rng.random();
    let mut cum = 0.0;
    for &(t, q) in &support {
        cum += q;
        if u < cum {
            return Ok(t);
        }
    }
    Ok(support.last().expect("support is non-empty").0)
}

//! Mini-batch k-means over patch vectors with dead-codeword restart.
//!
//! After every epoch, codewords selected fewer than `threshold` times in
//! that epoch are re-seeded from a reservoir of features seen during the
//! epoch. Codewords at or above the threshold are left untouched.

use std::collections::HashSet;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{encode_edge, encode_face, Codebook, CodebookError};
use crate::model::SolidModel;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RestartConfig {
    /// Minimum per-epoch usage a codeword needs to survive.
    pub threshold: u64,
    pub pool_size: usize,
}

impl Default for RestartConfig {
    fn default() -> Self {
        Self {
            threshold: 1,
            pool_size: 8192,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CodebookTrainConfig {
    pub n_geo: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub restart: Option<RestartConfig>,
    /// Fraction of patches held out for validation. With 0 the validation
    /// error is measured on the whole training set.
    pub holdout_fraction: f64,
}

impl Default for CodebookTrainConfig {
    fn default() -> Self {
        Self {
            n_geo: 4096,
            epochs: 10,
            batch_size: 1024,
            restart: Some(RestartConfig::default()),
            holdout_fraction: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    /// Mean squared error per coordinate on the validation patches.
    pub initial_mse: f64,
    pub final_mse: f64,
    pub epoch_mse: Vec<f64>,
    pub restarts_per_epoch: Vec<usize>,
    /// Largest absolute coordinate error on the validation patches.
    pub max_abs_error: f64,
    pub utilization: f64,
    pub distinct_patches: usize,
}

/// Every patch of every face and broadcast edge, in solid order.
pub fn collect_patches(solids: &[SolidModel]) -> Result<Vec<Vec<f32>>, CodebookError> {
    let per_solid: Result<Vec<Vec<Vec<f32>>>, CodebookError> = solids
        .par_iter()
        .map(|s| {
            let mut out = Vec::with_capacity(4 * (s.faces.len() + s.edges.len()));
            for f in &s.faces {
                out.extend(encode_face(f)?.patches);
            }
            for e in &s.edges {
                out.extend(encode_edge(e)?.patches);
            }
            Ok(out)
        })
        .collect();
    Ok(per_solid?.into_iter().flatten().collect())
}

/// Bitwise-distinct patches in first-appearance order.
pub fn distinct_patches(data: &[Vec<f32>]) -> Vec<Vec<f32>> {
    let mut seen = HashSet::new();
    data.iter().filter(|v| seen.insert(bits(v))).cloned().collect()
}

fn bits(v: &[f32]) -> Vec<u32> {
    v.iter().map(|x| x.to_bits()).collect()
}

fn assign(cb: &Codebook, data: &[&[f32]]) -> Vec<(u32, f32)> {
    data.par_iter().map(|v| cb.nearest(v)).collect()
}

fn mse(cb: &Codebook, data: &[&[f32]]) -> f64 {
    if data.is_empty() {
        return 0.0;
    }
    let total: f64 = assign(cb, data).iter().map(|&(_, d)| d as f64).sum();
    total / (data.len() * cb.dim()) as f64
}

pub fn train_codebook(
    data: &[Vec<f32>],
    cfg: &CodebookTrainConfig,
    seed: u64,
) -> Result<(Codebook, TrainReport), CodebookError> {
    if data.is_empty() {
        return Err(CodebookError::EmptyDataset);
    }
    if cfg.n_geo == 0 {
        return Err(CodebookError::EmptyCodebook);
    }
    let dim = data[0].len();
    if let Some(bad) = data.iter().find(|v| v.len() != dim) {
        return Err(CodebookError::DimensionMismatch {
            expected: dim,
            found: bad.len(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let mut order: Vec<usize> = (0..data.len()).collect();
    order.shuffle(&mut rng);
    let n_hold = ((data.len() as f64) * cfg.holdout_fraction.clamp(0.0, 0.9)).round() as usize;
    let (hold_idx, train_idx) = order.split_at(n_hold);
    let train: Vec<&[f32]> = train_idx.iter().map(|&i| data[i].as_slice()).collect();
    let val: Vec<&[f32]> = if hold_idx.is_empty() {
        train.clone()
    } else {
        hold_idx.iter().map(|&i| data[i].as_slice()).collect()
    };

    // Forgy initialization over distinct patches; remaining slots repeat
    // data points and stay dormant until restarted.
    let mut seen = HashSet::new();
    let mut init: Vec<Vec<f32>> = Vec::with_capacity(cfg.n_geo);
    for v in &train {
        if init.len() == cfg.n_geo {
            break;
        }
        if seen.insert(bits(v)) {
            init.push(v.to_vec());
        }
    }
    let distinct = {
        let mut all = seen;
        for v in &train {
            all.insert(bits(v));
        }
        all.len()
    };
    while init.len() < cfg.n_geo {
        init.push(train[rng.random_range(0..train.len())].to_vec());
    }
    let mut cb = Codebook::new(dim, init)?;

    let initial_mse = mse(&cb, &val);
    let mut counts = vec![0u64; cb.size()];
    let mut epoch_mse = Vec::with_capacity(cfg.epochs);
    let mut restarts_per_epoch = Vec::with_capacity(cfg.epochs);
    let mut best = (initial_mse, cb.clone());
    let batch = cfg.batch_size.max(1);
    let mut stream: Vec<usize> = (0..train.len()).collect();

    for _ in 0..cfg.epochs {
        stream.shuffle(&mut rng);
        let mut usage = vec![0u64; cb.size()];
        let pool_cap = cfg.restart.map_or(0, |r| r.pool_size.max(1));
        let mut pool: Vec<usize> = Vec::with_capacity(pool_cap);
        let mut seen_in_epoch = 0usize;

        for chunk in stream.chunks(batch) {
            let vecs: Vec<&[f32]> = chunk.iter().map(|&i| train[i]).collect();
            let assigned = assign(&cb, &vecs);
            for (&i, &(c, _)) in chunk.iter().zip(&assigned) {
                let c = c as usize;
                usage[c] += 1;
                counts[c] += 1;
                let eta = 1.0 / counts[c] as f32;
                for (w, x) in cb.codeword_mut(c).iter_mut().zip(train[i]) {
                    *w += eta * (x - *w);
                }
                if pool_cap > 0 {
                    seen_in_epoch += 1;
                    if pool.len() < pool_cap {
                        pool.push(i);
                    } else {
                        let j = rng.random_range(0..seen_in_epoch);
                        if j < pool_cap {
                            pool[j] = i;
                        }
                    }
                }
            }
        }

        let mut restarted = 0;
        if let Some(r) = cfg.restart {
            for c in 0..cb.size() {
                if usage[c] < r.threshold && !pool.is_empty() {
                    let src = train[pool[rng.random_range(0..pool.len())]];
                    cb.codeword_mut(c).copy_from_slice(src);
                    counts[c] = 0;
                    restarted += 1;
                }
            }
        }
        restarts_per_epoch.push(restarted);
        let e = mse(&cb, &val);
        epoch_mse.push(e);
        if e <= best.0 {
            best = (e, cb.clone());
        }
    }

    // keep the checkpoint with the lowest validation error
    let (final_mse, mut cb) = best;
    cb.reset_usage();
    let all: Vec<&[f32]> = data.iter().map(|v| v.as_slice()).collect();
    for (c, _) in assign(&cb, &all) {
        cb.usage_counts[c as usize] += 1;
    }
    let max_abs_error = val
        .par_iter()
        .map(|v| {
            let c = cb.codeword(cb.nearest(v).0 as usize);
            v.iter()
                .zip(c)
                .map(|(a, b)| (a - b).abs() as f64)
                .fold(0.0, f64::max)
        })
        .reduce(|| 0.0, f64::max);
    let report = TrainReport {
        initial_mse,
        final_mse,
        epoch_mse,
        restarts_per_epoch,
        max_abs_error,
        utilization: cb.utilization(),
        distinct_patches: distinct,
    };
    Ok((cb, report))
}

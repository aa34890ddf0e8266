//! Distributional and structural metrics over generated sequences.

mod cloud;
mod hash;

pub use cloud::{chamfer, chamfer_matrix, coverage, coverage_from, jsd, mmd, mmd_from, sample_points};
pub use hash::{
    canonical_hash, canonical_tokens, grammar_rate, novelty_uniqueness, validity_rate, validity_reports,
};

use std::collections::HashSet;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::codebook::Codebook;
use crate::detok::{decode_and_check, DetokConfig};
use crate::model::Point3;
use crate::sequence::VocabLayout;
use crate::util::derive_seed;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricsError {
    #[error("model has no surface area to sample")]
    EmptyModel,
    #[error("point cloud is empty")]
    EmptyCloud,
    #[error("cloud set is empty")]
    EmptySet,
    #[error("voxel grid resolution must be positive")]
    BadGrid,
    #[error("no reference sequence decodes to a valid model")]
    NoReference,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalConfig {
    pub n_points: usize,
    pub grid_res: usize,
    pub seed: u64,
    pub detok: DetokConfig,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self { n_points: 2000, grid_res: 28, seed: 0, detok: DetokConfig::default() }
    }
}

/// Raw metric values; MMD and JSD are scaled only for display.
/// Distributional metrics are `None` when no generated sample is valid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub cov_percent: f64,
    pub mmd: Option<f64>,
    pub jsd: Option<f64>,
    pub novel_percent: f64,
    pub unique_percent: f64,
    pub valid_percent: f64,
    pub grammar_percent: f64,
    pub n_generated: usize,
    pub n_valid: usize,
    pub n_reference: usize,
}

/// Cloud seed derived from the canonical hash, so a sequence gets the
/// same cloud wherever it appears in either set.
fn cloud_seed(seed: u64, hash: &str) -> u64 {
    derive_seed(seed, u64::from_str_radix(&hash[..16], 16).expect("hashes are hex"))
}

fn valid_clouds(
    seqs: &[Vec<u32>],
    codebook: &Codebook,
    layout: &VocabLayout,
    cfg: &EvalConfig,
) -> (Vec<bool>, Vec<Vec<Point3>>) {
    let per: Vec<(bool, Option<Vec<Point3>>)> = seqs
        .par_iter()
        .map(|s| {
            let (model, report) = decode_and_check(s, codebook, layout, &cfg.detok);
            let cloud = match (model, report.valid()) {
                (Some(m), true) => sample_points(&m, cfg.n_points, cloud_seed(cfg.seed, &canonical_hash(s, layout))).ok(),
                _ => None,
            };
            (report.valid(), cloud)
        })
        .collect();
    let valid = per.iter().map(|p| p.0).collect();
    (valid, per.into_iter().filter_map(|p| p.1).collect())
}

pub fn evaluate(
    gen: &[Vec<u32>],
    refs: &[Vec<u32>],
    train_hashes: &HashSet<String>,
    codebook: &Codebook,
    layout: &VocabLayout,
    cfg: &EvalConfig,
) -> Result<EvalReport, MetricsError> {
    if gen.is_empty() {
        return Err(MetricsError::EmptySet);
    }
    let (_, ref_clouds) = valid_clouds(refs, codebook, layout, cfg);
    if ref_clouds.is_empty() {
        return Err(MetricsError::NoReference);
    }
    let (valid, gen_clouds) = valid_clouds(gen, codebook, layout, cfg);
    let (cov, mmd, jsd) = if gen_clouds.is_empty() {
        (0.0, None, None)
    } else {
        let cd = chamfer_matrix(&gen_clouds, &ref_clouds)?;
        (
            coverage_from(&cd, ref_clouds.len()),
            Some(mmd_from(&cd, ref_clouds.len())),
            Some(jsd(&gen_clouds, &ref_clouds, cfg.grid_res)?),
        )
    };
    let hashes: Vec<String> = gen.iter().map(|s| canonical_hash(s, layout)).collect();
    let (novel, unique) = novelty_uniqueness(&hashes, train_hashes);
    let n_valid = valid.iter().filter(|&&v| v).count();
    Ok(EvalReport {
        cov_percent: cov,
        mmd,
        jsd,
        novel_percent: novel,
        unique_percent: unique,
        valid_percent: 100.0 * n_valid as f64 / gen.len() as f64,
        grammar_percent: grammar_rate(gen, layout),
        n_generated: gen.len(),
        n_valid,
        n_reference: ref_clouds.len(),
    })
}

impl EvalReport {
    pub fn header() -> String {
        format!(
            "{:<12} {:>8} {:>8} {:>8} {:>8} {:>8} {:>8}\n",
            "Method", "COV↑", "MMD↓", "JSD↓", "Novel↑", "Unique↑", "Valid↑"
        )
    }

    /// One table row; MMD and JSD are multiplied by 100.
    pub fn row(&self, label: &str) -> String {
        let opt = |v: Option<f64>| v.map_or("-".to_string(), |x| format!("{:.3}", 100.0 * x));
        format!(
            "{:<12} {:>8.2} {:>8} {:>8} {:>8.2} {:>8.2} {:>8.2}\n",
            label,
            self.cov_percent,
            opt(self.mmd),
            opt(self.jsd),
            self.novel_percent,
            self.unique_percent,
            self.valid_percent,
        )
    }

    pub fn table(&self, label: &str) -> String {
        Self::header() + &self.row(label)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codebook::{collect_patches, distinct_patches, PATCH_DIM};
    use crate::ingest::{generate_procedural, ProceduralParams, Shape};
    use crate::sequence::{tokenize_solid, TokenizeOptions};

    #[test]
    fn self_evaluation_is_perfect() {
        let solids: Vec<_> = [3, 4, 6]
            .iter()
            .map(|&n| {
                let shape = Shape::NPrism { sides: n, radius: 0.5, height: 0.6 };
                generate_procedural(&ProceduralParams::new(shape), n as u64).unwrap().0
            })
            .collect();
        let words = distinct_patches(&collect_patches(&solids).unwrap());
        let layout = VocabLayout { n_max: 50, n_geo: words.len() as u32, levels: 2048, n_classes: 0 };
        let cb = Codebook::new(PATCH_DIM, words).unwrap();
        let seqs: Vec<Vec<u32>> = solids
            .iter()
            .enumerate()
            .map(|(i, s)| tokenize_solid(s, &cb, &layout, &TokenizeOptions::default(), i as u64).unwrap().seq.0)
            .collect();
        let cfg = EvalConfig { n_points: 300, ..Default::default() };
        let train: HashSet<String> = seqs.iter().map(|s| canonical_hash(s, &layout)).collect();
        let mut shuffled = seqs.clone();
        shuffled.rotate_left(1);
        let r = evaluate(&shuffled, &seqs, &train, &cb, &layout, &cfg).unwrap();
        assert_eq!(r.cov_percent, 100.0);
        assert!(r.mmd.unwrap().abs() < 1e-9 && r.jsd.unwrap().abs() < 1e-9);
        assert_eq!((r.novel_percent, r.unique_percent, r.valid_percent), (0.0, 100.0, 100.0));
        assert!(r.table("self").contains("COV"));
    }
}

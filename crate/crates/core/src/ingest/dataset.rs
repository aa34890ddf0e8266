use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::procedural::{generate_procedural, GroundTruth, ProceduralKind};
use super::{load_solid_file, save_solid, IngestError};
use crate::model::SolidModel;
use crate::util::derive_seed;

/// Relative weights of each procedural kind in a corpus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KindMix(pub Vec<(ProceduralKind, f64)>);

impl KindMix {
    fn pick(&self, rng: &mut impl Rng) -> ProceduralKind {
        let total: f64 = self.0.iter().map(|(_, w)| w).sum();
        let mut x = rng.random::<f64>() * total;
        for &(k, w) in &self.0 {
            if x < w {
                return k;
            }
            x -= w;
        }
        self.0.last().expect("mix is never empty").0
    }
}

/// Parses `box:0.4,n_prism:0.4,l_bracket:0.2`.
pub fn parse_kind_mix(s: &str) -> Result<KindMix, IngestError> {
    let mut out = Vec::new();
    for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        let (name, weight) = part
            .split_once(':')
            .ok_or_else(|| IngestError::Param(format!("expected kind:weight, got `{part}`")))?;
        let kind = ProceduralKind::from_name(name.trim())
            .ok_or_else(|| IngestError::Param(format!("unknown solid kind `{name}`")))?;
        let w: f64 = weight
            .trim()
            .parse()
            .map_err(|_| IngestError::Param(format!("bad weight `{weight}`")))?;
        if !(w >= 0.0 && w.is_finite()) {
            return Err(IngestError::Param(format!("bad weight `{weight}`")));
        }
        out.push((kind, w));
    }
    if out.is_empty() || out.iter().map(|(_, w)| w).sum::<f64>() <= 0.0 {
        return Err(IngestError::Param("kind mix has no positive weight".into()));
    }
    Ok(KindMix(out))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetEntry {
    pub path: String,
    pub kind: ProceduralKind,
    pub class_label: Option<u32>,
    pub face_count: usize,
    pub edge_count: usize,
    pub vertex_count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub seed: u64,
    pub count: usize,
    pub jitter: f64,
    pub kind_mix: KindMix,
    pub entries: Vec<DatasetEntry>,
    pub tool_version: String,
    pub config_hash: String,
}

/// Generates `count` solids. Entry `i` depends only on `(seed, i)`.
pub fn generate_dataset(
    mix: &KindMix,
    count: usize,
    seed: u64,
    jitter: f64,
) -> Result<Vec<(SolidModel, GroundTruth, ProceduralKind)>, IngestError> {
    (0..count)
        .into_par_iter()
        .map(|i| {
            let s = derive_seed(seed, i as u64);
            let mut rng = ChaCha8Rng::seed_from_u64(s);
            let kind = mix.pick(&mut rng);
            let mut params = kind.random_params(&mut rng);
            params.jitter = jitter;
            let (solid, gt) = generate_procedural(&params, s)?;
            Ok((solid, gt, kind))
        })
        .collect()
}

impl DatasetManifest {
    /// Writes every solid as `solid_NNNNN.json` plus `manifest.json` into `dir`.
    pub fn write(
        dir: &Path,
        solids: &[(SolidModel, GroundTruth, ProceduralKind)],
        mix: &KindMix,
        seed: u64,
        jitter: f64,
        config_hash: &str,
    ) -> Result<DatasetManifest, IngestError> {
        std::fs::create_dir_all(dir).map_err(|e| IngestError::io(dir, e))?;
        let mut entries = Vec::with_capacity(solids.len());
        for (i, (solid, gt, kind)) in solids.iter().enumerate() {
            let name = format!("solid_{i:05}.json");
            let path = dir.join(&name);
            std::fs::write(&path, save_solid(solid)).map_err(|e| IngestError::io(&path, e))?;
            entries.push(DatasetEntry {
                path: name,
                kind: *kind,
                class_label: solid.class_label,
                face_count: solid.faces.len(),
                edge_count: solid.edges.len(),
                vertex_count: gt.vertices,
            });
        }
        let manifest = DatasetManifest {
            seed,
            count: solids.len(),
            jitter,
            kind_mix: mix.clone(),
            entries,
            tool_version: crate::TOOL_VERSION.to_string(),
            config_hash: config_hash.to_string(),
        };
        manifest.validate(usize::MAX)?;
        let path = dir.join("manifest.json");
        let bytes = serde_json::to_vec_pretty(&manifest).expect("manifest serializes");
        std::fs::write(&path, bytes).map_err(|e| IngestError::io(&path, e))?;
        Ok(manifest)
    }

    pub fn read(dir: &Path) -> Result<DatasetManifest, IngestError> {
        let path = dir.join("manifest.json");
        let bytes = std::fs::read(&path).map_err(|e| IngestError::io(&path, e))?;
        serde_json::from_slice(&bytes).map_err(|e| IngestError::Schema(e.to_string()))
    }

    pub fn validate(&self, n_max: usize) -> Result<(), IngestError> {
        let mut seen = BTreeSet::new();
        for e in &self.entries {
            if !seen.insert(&e.path) {
                return Err(IngestError::Schema(format!("duplicate path {}", e.path)));
            }
            if e.face_count > n_max {
                return Err(IngestError::Schema(format!(
                    "{} has {} faces, limit {n_max}",
                    e.path, e.face_count
                )));
            }
        }
        Ok(())
    }
}

/// Loads the solids of a dataset directory: the manifest order when one is
/// present, otherwise every `*.json` file sorted by name.
pub fn load_dataset_dir(dir: &Path, n_max: usize) -> Result<Vec<(PathBuf, SolidModel)>, IngestError> {
    let paths: Vec<PathBuf> = if dir.join("manifest.json").exists() {
        let m = DatasetManifest::read(dir)?;
        m.validate(n_max)?;
        m.entries.iter().map(|e| dir.join(&e.path)).collect()
    } else {
        let mut v: Vec<PathBuf> = std::fs::read_dir(dir)
            .map_err(|e| IngestError::io(dir, e))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "json"))
            .collect();
        v.sort();
        v
    };
    paths
        .into_par_iter()
        .map(|p| {
            let s = load_solid_file(&p, n_max)?;
            Ok((p, s))
        })
        .collect()
}

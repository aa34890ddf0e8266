use serde::{Deserialize, Serialize};

use super::{detokenize, parse_sequence, reconstruct_vertices, Diagnostic, ReconstructedModel};
use crate::codebook::Codebook;
use crate::model::Bbox;
use crate::sequence::VocabLayout;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DetokConfig {
    /// Endpoint merge distance.
    pub tau_merge: f64,
    /// Codebook reconstruction allowance added to the bbox containment test.
    pub eps_cb: f64,
}

impl Default for DetokConfig {
    fn default() -> Self {
        Self {
            tau_merge: 0.1,
            eps_cb: 0.05,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidityReport {
    pub grammar_ok: bool,
    pub topology_ok: bool,
    pub geometry_ok: bool,
    pub euler_ok: bool,
    /// Genus implied by `V - E + F = 2 - 2g` when that has a solution.
    pub genus: Option<i64>,
    pub counts: Option<[usize; 3]>,
    pub diagnostics: Vec<Diagnostic>,
}

impl ValidityReport {
    pub fn valid(&self) -> bool {
        self.grammar_ok && self.topology_ok && self.geometry_ok && self.euler_ok
    }

    fn rejected(diagnostics: Vec<Diagnostic>, grammar_ok: bool) -> Self {
        Self {
            grammar_ok,
            topology_ok: false,
            geometry_ok: false,
            euler_ok: false,
            genus: None,
            counts: None,
            diagnostics,
        }
    }
}

fn outside(b: &Bbox, pts: &[crate::model::Point3], tol: f64) -> Option<f64> {
    let mut worst: f64 = 0.0;
    for p in pts {
        let (lo, hi) = (b.min().to_array(), b.max().to_array());
        for (k, v) in p.to_array().into_iter().enumerate() {
            worst = worst.max(lo[k] - v).max(v - hi[k]);
        }
    }
    (worst > tol).then_some(worst)
}

/// Structural checks on a model whose vertices were reconstructed with
/// diagnostics `found`.
pub fn check_validity(
    model: &ReconstructedModel,
    found: &[Diagnostic],
    layout: &VocabLayout,
    cfg: &DetokConfig,
) -> ValidityReport {
    let mut diagnostics = found.to_vec();
    let nf = model.faces.len();
    if nf > 1 {
        let adj = model.adjacency();
        for f in 0..nf {
            if adj.degree[f] == 0 {
                diagnostics.push(Diagnostic::IsolatedFace { face: f });
            }
        }
    }
    let topology_ok = diagnostics.iter().all(|d| {
        !matches!(
            d,
            Diagnostic::UnmatchedEndpoint { .. }
                | Diagnostic::OpenLoop { .. }
                | Diagnostic::DegenerateEdge { .. }
                | Diagnostic::CollapsedEdge { .. }
                | Diagnostic::IsolatedFace { .. }
        )
    });

    let tol = cfg.eps_cb + 2.0 / (layout.levels as f64 - 1.0);
    let mut geometry_ok = true;
    let prims = model
        .faces
        .iter()
        .enumerate()
        .map(|(i, f)| (format!("face {i}"), &f.bbox, f.grid.as_slice()))
        .chain(
            model
                .edges
                .iter()
                .enumerate()
                .map(|(i, e)| (format!("edge {i}"), &e.bbox, e.polyline.as_slice())),
        );
    for (name, bbox, pts) in prims {
        if pts.iter().any(|p| !p.is_finite()) {
            geometry_ok = false;
            diagnostics.push(Diagnostic::NonFiniteGeometry { primitive: name });
        } else if let Some(excess) = outside(bbox, pts, tol) {
            geometry_ok = false;
            diagnostics.push(Diagnostic::OutsideBbox { primitive: name, excess });
        }
    }

    let (v, e) = (model.vertices.len(), model.edges.len());
    let chi = v as i64 - e as i64 + nf as i64;
    let genus = (chi <= 2 && chi % 2 == 0).then_some((2 - chi) / 2);
    if genus.is_none() {
        diagnostics.push(Diagnostic::EulerMismatch { v, e, f: nf, chi });
    }
    ValidityReport {
        grammar_ok: true,
        topology_ok,
        geometry_ok,
        euler_ok: genus.is_some(),
        genus,
        counts: Some([v, e, nf]),
        diagnostics,
    }
}

/// Parse, detokenize, cluster vertices and check, never failing. The model
/// is returned whenever parsing and decoding succeeded.
pub fn decode_and_check(
    toks: &[u32],
    codebook: &Codebook,
    layout: &VocabLayout,
    cfg: &DetokConfig,
) -> (Option<ReconstructedModel>, ValidityReport) {
    let parsed = match parse_sequence(toks, layout) {
        Ok(p) => p,
        Err(error) => return (None, ValidityReport::rejected(vec![Diagnostic::Grammar { error }], false)),
    };
    let mut model = match detokenize(&parsed, codebook, layout) {
        Ok(m) => m,
        Err(e) => {
            let d = Diagnostic::NonFiniteGeometry { primitive: e.to_string() };
            return (None, ValidityReport::rejected(vec![d], true));
        }
    };
    let vs = reconstruct_vertices(&model, cfg.tau_merge);
    model.attach(&vs);
    let report = check_validity(&model, &vs.diagnostics, layout, cfg);
    (Some(model), report)
}

//! Canonical sequence hashing, novelty, uniqueness and validity rates.

use std::collections::HashSet;

use rayon::prelude::*;

use crate::codebook::Codebook;
use crate::detok::{decode_and_check, parse_sequence, DetokConfig, ParsedBlocks, Prefix, ValidityReport};
use crate::model::Point3;
use crate::sequence::{order_edges, order_faces, positions, EdgeStrategy, FaceStrategy, TopologyView, VocabLayout};
use crate::util::sha256_hex;

/// Parsed blocks seen as topology. Centroids are bounding-box centers in
/// quantized units, which order faces exactly as dequantized centers would.
struct BlockView<'a> {
    blocks: &'a ParsedBlocks,
    edge_faces: Vec<(usize, usize)>,
}

impl TopologyView for BlockView<'_> {
    fn face_count(&self) -> usize {
        self.blocks.faces.len()
    }

    fn edge_count(&self) -> usize {
        self.blocks.edges.len()
    }

    fn edge_faces(&self, edge: usize) -> (usize, usize) {
        self.edge_faces[edge]
    }

    fn face_centroid(&self, face: usize) -> Point3 {
        let p = self.blocks.faces[face].pos.map(f64::from);
        Point3::new((p[0] + p[3]) / 2.0, (p[1] + p[4]) / 2.0, (p[2] + p[5]) / 2.0)
    }

    fn edge_bbox_key(&self, edge: usize) -> [f64; 6] {
        self.blocks.edges[edge].pos.map(f64::from)
    }
}

/// Re-serializes parsed blocks in canonical form: DFS faces, MAX-IDX-A
/// edges and face labels starting at zero.
pub fn canonical_tokens(blocks: &ParsedBlocks, layout: &VocabLayout) -> Vec<u32> {
    let edge_faces = blocks
        .edges
        .iter()
        .map(|e| {
            let p = |i| blocks.face_position(i).expect("parsed edges reference parsed faces");
            (p(e.faces[0]), p(e.faces[1]))
        })
        .collect();
    let view = BlockView { blocks, edge_faces };
    let order = order_faces(&view, FaceStrategy::Dfs, 0);
    let pos = positions(&order);
    let edges = order_edges(&view, &pos, EdgeStrategy::MaxIdxA, 0);
    let mut out = Vec::with_capacity(3 + 11 * order.len() + 12 * edges.len());
    out.push(match blocks.prefix {
        Prefix::Start => layout.start(),
        Prefix::Class(c) => layout.class_token(c).expect("parsed class tokens are in range"),
    });
    for (i, &f) in order.iter().enumerate() {
        let b = &blocks.faces[f];
        out.extend(b.pos.map(|k| k + layout.o_pos()));
        out.extend(b.geo.map(|g| g + layout.o_geo()));
        out.push(i as u32);
    }
    out.push(layout.sep());
    for &e in &edges {
        let (a, b) = view.edge_faces[e];
        let (pa, pb) = (pos[a], pos[b]);
        out.push(pa.min(pb) as u32);
        out.push(pa.max(pb) as u32);
        out.extend(blocks.edges[e].pos.map(|k| k + layout.o_pos()));
        out.extend(blocks.edges[e].geo.map(|g| g + layout.o_geo()));
    }
    out.push(layout.end());
    out
}

fn digest(tag: &[u8], toks: &[u32]) -> String {
    let mut bytes = tag.to_vec();
    bytes.extend(toks.iter().flat_map(|t| t.to_le_bytes()));
    sha256_hex(&bytes)
}

/// SHA-256 of the canonical form. Sequences that do not parse are hashed
/// verbatim under a separate tag.
pub fn canonical_hash(toks: &[u32], layout: &VocabLayout) -> String {
    match parse_sequence(toks, layout) {
        Ok(b) => digest(b"canon\0", &canonical_tokens(&b, layout)),
        Err(_) => digest(b"raw\0", toks),
    }
}

/// `(novel %, unique %)` of generated hashes against a training set.
pub fn novelty_uniqueness(gen_hashes: &[String], train_hashes: &HashSet<String>) -> (f64, f64) {
    if gen_hashes.is_empty() {
        return (0.0, 0.0);
    }
    let n = gen_hashes.len() as f64;
    let novel = gen_hashes.iter().filter(|h| !train_hashes.contains(*h)).count() as f64;
    let distinct: HashSet<&String> = gen_hashes.iter().collect();
    (100.0 * novel / n, 100.0 * distinct.len() as f64 / n)
}

/// Validity report of every sequence, in input order.
pub fn validity_reports(
    seqs: &[Vec<u32>],
    codebook: &Codebook,
    layout: &VocabLayout,
    cfg: &DetokConfig,
) -> Vec<ValidityReport> {
    seqs.par_iter()
        .map(|s| decode_and_check(s, codebook, layout, cfg).1)
        .collect()
}

/// Percentage of sequences passing every validity check.
pub fn validity_rate(seqs: &[Vec<u32>], codebook: &Codebook, layout: &VocabLayout, cfg: &DetokConfig) -> f64 {
    if seqs.is_empty() {
        return 0.0;
    }
    let ok = validity_reports(seqs, codebook, layout, cfg).iter().filter(|r| r.valid()).count();
    100.0 * ok as f64 / seqs.len() as f64
}

/// Percentage of sequences accepted by the block grammar.
pub fn grammar_rate(seqs: &[Vec<u32>], layout: &VocabLayout) -> f64 {
    if seqs.is_empty() {
        return 0.0;
    }
    let ok = seqs.iter().filter(|s| parse_sequence(s, layout).is_ok()).count();
    100.0 * ok as f64 / seqs.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codebook::{distinct_patches, Codebook, PATCH_DIM};
    use crate::ingest::{generate_procedural, ProceduralParams, Shape};
    use crate::model::SolidModel;
    use crate::sequence::{tokenize_solid, Reindex, TokenizeOptions};

    fn setup(solid: &SolidModel) -> (Codebook, VocabLayout) {
        let patches = crate::codebook::collect_patches(std::slice::from_ref(solid)).unwrap();
        let words = distinct_patches(&patches);
        let layout = VocabLayout { n_max: 50, n_geo: words.len() as u32, levels: 2048, n_classes: 0 };
        (Codebook::new(PATCH_DIM, words).unwrap(), layout)
    }

    fn prism() -> SolidModel {
        let shape = Shape::NPrism { sides: 5, radius: 0.6, height: 0.8 };
        generate_procedural(&ProceduralParams::new(shape), 3).unwrap().0
    }

    #[test]
    fn hash_ignores_offset_and_ordering() {
        let s = prism();
        let (cb, layout) = setup(&s);
        let tok = |face_strategy, r| {
            let opts = TokenizeOptions { face_strategy, reindex: Reindex::Fixed(r), ..TokenizeOptions::canonical() };
            tokenize_solid(&s, &cb, &layout, &opts, 11).unwrap().seq.0
        };
        let base = tok(FaceStrategy::Dfs, 0);
        let h = canonical_hash(&base, &layout);
        for r in [1, 17, 49] {
            assert_eq!(canonical_hash(&tok(FaceStrategy::Dfs, r), &layout), h);
        }
        for st in [FaceStrategy::Bfs, FaceStrategy::Zyx, FaceStrategy::Rand] {
            assert_eq!(canonical_hash(&tok(st, 5), &layout), h, "{st}");
        }
        // canonical tokens of the canonical tokenization are unchanged
        let blocks = parse_sequence(&base, &layout).unwrap();
        assert_eq!(canonical_tokens(&blocks, &layout), base);
        // a different solid hashes differently; garbage still hashes
        let mut other = base.clone();
        other[1] += 1;
        assert_ne!(canonical_hash(&other, &layout), h);
        assert_eq!(canonical_hash(&[1, 2, 3], &layout).len(), 64);
    }

    #[test]
    fn novelty_and_uniqueness() {
        let train: HashSet<String> = ["a", "b"].iter().map(|s| s.to_string()).collect();
        let g = |v: &[&str]| v.iter().map(|s| s.to_string()).collect::<Vec<_>>();
        assert_eq!(novelty_uniqueness(&g(&["a", "b", "a"]), &train).0, 0.0);
        let (n, u) = novelty_uniqueness(&g(&["c", "c", "c", "c"]), &train);
        assert_eq!((n, u), (100.0, 25.0));
    }

    #[test]
    fn validity_of_fixtures_and_garbage() {
        let s = prism();
        let (cb, layout) = setup(&s);
        let cfg = DetokConfig::default();
        let good: Vec<Vec<u32>> = (0..5)
            .map(|seed| tokenize_solid(&s, &cb, &layout, &TokenizeOptions::default(), seed).unwrap().seq.0)
            .collect();
        assert_eq!(validity_rate(&good, &cb, &layout, &cfg), 100.0);
        let truncated: Vec<Vec<u32>> = good.iter().map(|t| t[..t.len() / 2].to_vec()).collect();
        assert_eq!(validity_rate(&truncated, &cb, &layout, &cfg), 0.0);
        let v = layout.vocab_size();
        let mut x = 12345u64;
        let garbage: Vec<Vec<u32>> = (0..50)
            .map(|_| {
                (0..100)
                    .map(|_| {
                        x = crate::util::derive_seed(x, 1);
                        (x % v as u64) as u32
                    })
                    .collect()
            })
            .collect();
        assert_eq!(grammar_rate(&garbage, &layout), 0.0);
    }
}

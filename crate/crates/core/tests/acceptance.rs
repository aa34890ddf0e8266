//! Acceptance suite: one test per criterion, each printing a PASS/FAIL line.
//!
//! Run with `cargo test --release --test acceptance`.

use std::collections::HashSet;
use std::io::Write;
use std::panic::{catch_unwind, resume_unwind, AssertUnwindSafe};
use std::path::Path;
use std::time::Instant;

use proptest::prelude::*;
use proptest::test_runner::{Config as PropConfig, TestRunner};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use brepseq::cli;
use brepseq::codebook::{collect_patches, distinct_patches, train_codebook, Codebook, CodebookTrainConfig, PATCH_DIM};
use brepseq::config::{Config, ModelKind};
use brepseq::detok::{decode_and_check, DetokConfig, ReconstructedModel};
use brepseq::generator::{
    generate_batch, NGramModel, NextTokenModel, Optimizer, SamplerConfig, TrainOptions, Transformer, TransformerConfig,
};
use brepseq::ingest::{generate_dataset, generate_procedural, parse_kind_mix, GroundTruth, ProceduralParams, Shape};
use brepseq::metrics::{
    canonical_hash, chamfer, coverage, grammar_rate, jsd, mmd, novelty_uniqueness, sample_points, validity_rate,
};
use brepseq::model::{Point3, SolidModel};
use brepseq::position::{dequantize_coord, quantize_coord, QuantConfig};
use brepseq::sequence::{
    order_edges, order_faces, positions, tokenize_solid, EdgeStrategy, FaceStrategy, Reindex, Segment, TokenSeq,
    TokenizeOptions, VocabLayout,
};

/// Largest bbox round-trip error at L = 2048.
const BBOX_TOL: f64 = 4.8852e-4;

/// Runs one criterion, prints its verdict past the test harness capture and
/// fails the test on `Err` or panic.
fn criterion(n: u32, name: &str, body: impl FnOnce() -> Result<String, String>) {
    let t0 = Instant::now();
    let outcome = catch_unwind(AssertUnwindSafe(body));
    let secs = t0.elapsed().as_secs_f64();
    let (verdict, detail) = match &outcome {
        Ok(Ok(d)) => ("PASS", d.clone()),
        Ok(Err(d)) => ("FAIL", d.clone()),
        Err(_) => ("FAIL", "panicked".to_string()),
    };
    let _ = writeln!(std::io::stderr(), "[{verdict}] criterion {n:>2} {name}: {detail} ({secs:.1} s)");
    match outcome {
        Ok(Ok(_)) => {}
        Ok(Err(d)) => panic!("criterion {n} failed: {d}"),
        Err(p) => resume_unwind(p),
    }
}

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn fixtures() -> Vec<(String, SolidModel, GroundTruth)> {
    let mut shapes = vec![("box".to_string(), Shape::Box { size: [1.0, 1.3, 0.7] })];
    for sides in 3..=8 {
        shapes.push((format!("n_prism({sides})"), Shape::NPrism { sides, radius: 0.7, height: 0.9 }));
    }
    shapes.push((
        "l_bracket".into(),
        Shape::LBracket { width: 1.2, depth: 1.0, thickness: 0.35, height: 0.8 },
    ));
    shapes.push(("cylinder_approx".into(), Shape::CylinderApprox { radius: 0.6, height: 1.1 }));
    shapes
        .into_iter()
        .enumerate()
        .map(|(i, (name, shape))| {
            let (s, gt) = generate_procedural(&ProceduralParams::new(shape), i as u64).unwrap();
            (name, s, gt)
        })
        .collect()
}

/// Codebook holding every distinct patch of `solids`, so geometry is exact.
fn exact_codebook(solids: &[SolidModel], n_max: u32, levels: u32) -> (Codebook, VocabLayout) {
    let words = distinct_patches(&collect_patches(solids).unwrap());
    let layout = VocabLayout { n_max, n_geo: words.len() as u32, levels, n_classes: 0 };
    (Codebook::new(PATCH_DIM, words).unwrap(), layout)
}

fn boxes(count: usize, seed: u64) -> Vec<SolidModel> {
    generate_dataset(&parse_kind_mix("box:1").unwrap(), count, seed, 0.05)
        .unwrap()
        .into_iter()
        .map(|s| s.0)
        .collect()
}

fn tokenize_all(solids: &[SolidModel], cb: &Codebook, layout: &VocabLayout, opts: &TokenizeOptions) -> Vec<TokenSeq> {
    solids
        .iter()
        .enumerate()
        .map(|(i, s)| tokenize_solid(s, cb, layout, opts, i as u64).unwrap().seq)
        .collect()
}

fn sample_rates(m: &dyn NextTokenModel, layout: &VocabLayout, top_p: f64, max_len: usize) -> Vec<Vec<u32>> {
    let sc = SamplerConfig { top_p, max_len, seed: 17 };
    generate_batch(m, &[layout.start()], layout.end(), &sc, 200)
        .unwrap()
        .into_iter()
        .map(|g| g.seq.0)
        .collect()
}

#[test]
fn c01_position_quantizer_error_bound() {
    criterion(1, "position quantizer", || {
        let q = QuantConfig::new(2048).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut worst: f64 = 0.0;
        for _ in 0..100_000 {
            let b: f64 = rng.random_range(-1.0..=1.0);
            let back = dequantize_coord(quantize_coord(b, q).unwrap(), q).unwrap();
            worst = worst.max((back - b).abs());
        }
        ensure(worst <= BBOX_TOL, || format!("max error {worst:.6e} above {BBOX_TOL:e}"))?;

        // exhaustive at L = 8: every level survives the round trip and every
        // input lands on a nearest level
        let q8 = QuantConfig::new(8).unwrap();
        let levels: Vec<f64> = (0..8).map(|k| -1.0 + 2.0 * k as f64 / 7.0).collect();
        for k in 0..8 {
            let v = dequantize_coord(k, q8).unwrap();
            ensure((v - levels[k as usize]).abs() < 1e-15, || format!("level {k} decodes to {v}"))?;
            ensure(quantize_coord(v, q8).unwrap() == k, || format!("level {k} does not round-trip"))?;
        }
        let mut worst8: f64 = 0.0;
        for i in 0..=7000 {
            let b = -1.0 + 2.0 * i as f64 / 7000.0;
            let k = quantize_coord(b, q8).unwrap() as usize;
            let best = levels.iter().map(|l| (l - b).abs()).fold(f64::INFINITY, f64::min);
            ensure((levels[k] - b).abs() <= best + 1e-12, || format!("{b} quantized to a farther level {k}"))?;
            worst8 = worst8.max((levels[k] - b).abs());
        }
        ensure(worst8 <= 1.0 / 7.0 + 1e-12, || format!("L = 8 error {worst8}"))?;
        Ok(format!("max error {worst:.4e} over 1e5 coordinates; L = 8 exhaustive ok"))
    });
}

#[test]
fn c02_vocabulary_offsets() {
    criterion(2, "vocabulary offsets", || {
        let l = VocabLayout { n_max: 50, n_geo: 4096, levels: 2048, n_classes: 0 };
        let got = (l.o_geo(), l.o_pos(), l.o_spec());
        ensure(got == (50, 4146, 6194), || format!("offsets {got:?}"))?;
        ensure((l.start(), l.sep(), l.end()) == (6194, 6195, 6196), || "special ids".into())?;

        let mut runner = TestRunner::new(PropConfig { cases: 1000, ..PropConfig::default() });
        let strat = (1u32..200, 1u32..10_000, 2u32..5000, 0u32..20);
        runner
            .run(&strat, |(n_max, n_geo, levels, n_classes)| {
                let l = VocabLayout { n_max, n_geo, levels, n_classes };
                let r = l.ranges();
                // contiguous from zero, no gaps or overlaps
                prop_assert_eq!(r[0].1.start, 0);
                for w in r.windows(2) {
                    prop_assert_eq!(w[0].1.end, w[1].1.start);
                }
                prop_assert_eq!(r[3].1.end, l.vocab_size());
                prop_assert_eq!(l.vocab_size(), n_max + n_geo + levels + 3 + n_classes);
                for (seg, range) in &r {
                    for t in [range.start, range.end - 1] {
                        prop_assert_eq!(l.segment_of(t), Some(*seg));
                    }
                }
                prop_assert_eq!(l.segment_of(l.vocab_size()), None);
                prop_assert_eq!(l.segment_of(l.end()), Some(Segment::Special));
                Ok(())
            })
            .map_err(|e| e.to_string())?;
        Ok("offsets (50, 4146, 6194); 1000 random layouts disjoint and contiguous".into())
    });
}

fn same_adjacency(s: &SolidModel, m: &ReconstructedModel, face_order: &[usize]) -> bool {
    let mut got: Vec<(usize, usize)> = m
        .edges
        .iter()
        .map(|e| {
            let (a, b) = (face_order[e.faces[0]], face_order[e.faces[1]]);
            (a.min(b), a.max(b))
        })
        .collect();
    let mut want: Vec<(usize, usize)> = s.edges.iter().map(|e| (e.face_a.min(e.face_b), e.face_a.max(e.face_b))).collect();
    got.sort_unstable();
    want.sort_unstable();
    got == want
}

#[test]
fn c03_codec_round_trip() {
    criterion(3, "codec round trip", || {
        let t0 = Instant::now();
        let fx = fixtures();
        let solids: Vec<SolidModel> = fx.iter().map(|f| f.1.clone()).collect();
        let (cb, layout) = exact_codebook(&solids, 50, 2048);
        let cfg = DetokConfig::default();
        let mut worst: f64 = 0.0;
        for (name, s, gt) in &fx {
            for r in 0..50 {
                let opts = TokenizeOptions { reindex: Reindex::Fixed(r), ..Default::default() };
                let tok = tokenize_solid(s, &cb, &layout, &opts, r as u64).unwrap();
                let (m, rep) = decode_and_check(&tok.seq.0, &cb, &layout, &cfg);
                let m = m.ok_or_else(|| format!("{name} r={r}: no model, {rep:?}"))?;
                ensure(rep.valid(), || format!("{name} r={r}: {:?}", rep.diagnostics))?;
                ensure(rep.counts == Some([gt.vertices, gt.edges, gt.faces]), || {
                    format!("{name} r={r}: counts {:?} vs {gt:?}", rep.counts)
                })?;
                let [v, e, f] = rep.counts.unwrap();
                ensure(v as i64 - e as i64 + f as i64 == 2, || format!("{name} r={r}: Euler"))?;
                ensure(same_adjacency(s, &m, &tok.face_order), || format!("{name} r={r}: adjacency differs"))?;
                for (p, &fi) in tok.face_order.iter().enumerate() {
                    let (a, b) = (m.faces[p].bbox.0, s.faces[fi].bbox().0);
                    for k in 0..6 {
                        worst = worst.max((a[k] - b[k]).abs());
                    }
                }
                for (p, &ei) in tok.edge_order.iter().enumerate() {
                    let (a, b) = (m.edges[p].bbox.0, s.edges[ei].bbox().0);
                    for k in 0..6 {
                        worst = worst.max((a[k] - b[k]).abs());
                    }
                }
            }
        }
        ensure(worst <= BBOX_TOL, || format!("bbox error {worst:.4e}"))?;
        let secs = t0.elapsed().as_secs_f64();
        ensure(secs < 30.0, || format!("took {secs:.1} s"))?;
        Ok(format!("{} fixtures × 50 offsets exact; bbox error {worst:.3e}", fx.len()))
    });
}

#[test]
fn c04_sequence_length_formula() {
    criterion(4, "sequence length", || {
        let mix = parse_kind_mix("box:1,n_prism:1,cylinder_approx:1,l_bracket:1").unwrap();
        let solids = generate_dataset(&mix, 1000, 4, 0.05).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let words: Vec<Vec<f32>> = (0..16).map(|_| (0..PATCH_DIM).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
        let cb = Codebook::new(PATCH_DIM, words).unwrap();
        let layout = VocabLayout { n_max: 50, n_geo: 16, levels: 2048, n_classes: 0 };
        let opts = TokenizeOptions::default();
        for (i, (s, _, _)) in solids.iter().enumerate() {
            let n = tokenize_solid(s, &cb, &layout, &opts, i as u64).unwrap().seq.len();
            let want = 11 * s.faces.len() + 12 * s.edges.len() + 3;
            ensure(n == want, || format!("solid {i}: {n} tokens, expected {want}"))?;
        }
        let (cube, _) = generate_procedural(&ProceduralParams::new(Shape::Box { size: [1.0; 3] }), 0).unwrap();
        let n = tokenize_solid(&cube, &cb, &layout, &opts, 0).unwrap().seq.len();
        ensure(n == 213, || format!("cube has {n} tokens"))?;
        Ok("1000 solids match 11F + 12E + 3; cube = 213".into())
    });
}

fn is_permutation(v: &[usize], n: usize) -> bool {
    let mut s = v.to_vec();
    s.sort_unstable();
    s == (0..n).collect::<Vec<_>>()
}

fn run_cli(args: &[&str]) -> Result<(), String> {
    let argv = std::iter::once("brepseq").chain(args.iter().copied());
    match cli::run(argv) {
        0 => Ok(()),
        code => Err(format!("`{}` exited with {code}", args.join(" "))),
    }
}

fn write_desk_config(dir: &Path, kind: ModelKind) -> String {
    let mut cfg = Config::desk();
    cfg.model.kind = kind;
    let path = dir.join("cfg.toml");
    std::fs::write(&path, cfg.to_toml()).unwrap();
    path.display().to_string()
}

#[test]
fn c05_ordering_contracts() {
    criterion(5, "ordering contracts", || {
        let mix = parse_kind_mix("box:1,n_prism:1,cylinder_approx:1,l_bracket:1").unwrap();
        let solids = generate_dataset(&mix, 60, 5, 0.05).unwrap();
        for (i, (s, _, _)) in solids.iter().enumerate() {
            let nf = s.faces.len();
            for f in FaceStrategy::ALL {
                let o = order_faces(s, f, i as u64);
                ensure(is_permutation(&o, nf), || format!("{f} on solid {i} is not a permutation"))?;
                ensure(o == order_faces(s, f, i as u64), || format!("{f} is not deterministic"))?;
                let pos = positions(&o);
                let e = order_edges(s, &pos, EdgeStrategy::MaxIdxA, i as u64);
                ensure(is_permutation(&e, s.edges.len()), || "MAX-IDX-A is not a permutation".into())?;
                let key = |k: usize| {
                    let (a, b) = s.edges[k].faces();
                    pos[a].max(pos[b])
                };
                ensure(e.windows(2).all(|w| key(w[0]) <= key(w[1])), || format!("MAX-IDX-A not monotone under {f}"))?;
                let r = order_edges(s, &pos, EdgeStrategy::Rand, i as u64);
                ensure(is_permutation(&r, s.edges.len()), || "RAND edges not a permutation".into())?;
                ensure(r == order_edges(s, &pos, EdgeStrategy::Rand, i as u64), || "RAND edges not deterministic".into())?;
            }
        }

        let dir = tempfile::tempdir().unwrap();
        let d = |p: &str| dir.path().join(p).display().to_string();
        let cfg = write_desk_config(dir.path(), ModelKind::Ngram);
        run_cli(&["--config", &cfg, "gen-dataset", "--out", &d("data")])?;
        run_cli(&["--config", &cfg, "train-codebook", "--data", &d("data"), "--out", &d("cb.bin")])?;
        run_cli(&[
            "--config", &cfg, "ablate-ordering", "--data", &d("data"), "--codebook", &d("cb.bin"), "--out", &d("ablation"),
            "--samples", "20",
        ])?;
        let table = std::fs::read_to_string(dir.path().join("ablation.txt")).map_err(|e| e.to_string())?;
        for f in FaceStrategy::ALL {
            ensure(table.lines().any(|l| l.starts_with(f.name())), || format!("table lacks a {f} row"))?;
        }
        ensure(table.contains("Face ordering") && table.contains("Edge ordering"), || "table headers missing".into())?;
        let json: serde_json::Value =
            serde_json::from_slice(&std::fs::read(dir.path().join("ablation.json")).map_err(|e| e.to_string())?)
                .map_err(|e| e.to_string())?;
        let rows = json["rows"].as_array().map_or(0, |r| r.len());
        ensure(rows == 7, || format!("{rows} ablation rows"))?;
        Ok(format!("6 face orders + 2 edge orders on {} solids; ablation table with {rows} rows", solids.len()))
    });
}

#[test]
fn c06_codebook_training() {
    criterion(6, "codebook training", || {
        let exact_set = boxes(6, 6);
        let patches = collect_patches(&exact_set).unwrap();
        let distinct = distinct_patches(&patches).len();
        let cfg = CodebookTrainConfig { n_geo: distinct + 8, epochs: 3, batch_size: 64, ..Default::default() };
        let (cb, rep) = train_codebook(&patches, &cfg, 0).map_err(|e| e.to_string())?;
        let worst = patches.iter().map(|p| cb.error(p)).fold(0.0f32, f32::max);
        ensure(rep.final_mse == 0.0 && rep.max_abs_error == 0.0 && worst == 0.0, || {
            format!("error {} / {} / {worst} with {distinct} distinct patches", rep.final_mse, rep.max_abs_error)
        })?;

        let mix = parse_kind_mix("box:1,n_prism:1,cylinder_approx:1,l_bracket:1").unwrap();
        let corpus: Vec<SolidModel> = generate_dataset(&mix, 40, 16, 0.05).unwrap().into_iter().map(|s| s.0).collect();
        let patches = collect_patches(&corpus).unwrap();
        let mut pairs = Vec::new();
        for seed in 0..5 {
            let on = CodebookTrainConfig { n_geo: 256, epochs: 4, batch_size: 256, holdout_fraction: 0.0, ..Default::default() };
            let off = CodebookTrainConfig { restart: None, ..on };
            let u_on = train_codebook(&patches, &on, seed).map_err(|e| e.to_string())?.1.utilization;
            let u_off = train_codebook(&patches, &off, seed).map_err(|e| e.to_string())?.1.utilization;
            pairs.push((u_on, u_off));
        }
        let shown: Vec<String> = pairs.iter().map(|(a, b)| format!("{:.0}/{:.0}", 100.0 * a, 100.0 * b)).collect();
        ensure(pairs.iter().all(|(a, b)| a >= b), || format!("restart/no-restart utilization % {shown:?}"))?;
        Ok(format!("exact on {distinct} distinct patches; utilization % restart/none {}", shown.join(" ")))
    });
}

#[test]
fn c07_transformer_correctness() {
    criterion(7, "transformer correctness", || {
        let t0 = Instant::now();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let cfg = TransformerConfig { layers: 2, heads: 2, d_model: 16, d_ff: 32, t_max: 32, init_std: 0.3, ..Default::default() };
        let mut m = Transformer::new(cfg, 11, 7).unwrap();
        let toks: Vec<u32> = (0..20).map(|_| rng.random_range(0..11)).collect();

        let base = m.logits(&toks);
        for i in 0..toks.len() - 1 {
            let mut b = toks.clone();
            for t in b.iter_mut().skip(i + 1) {
                *t = (*t + 1 + rng.random_range(0..10)) % 11;
            }
            let l = m.logits(&b);
            for r in 0..=i {
                ensure(l.row(r) == base.row(r), || format!("logits at {r} moved when tokens after {i} changed"))?;
            }
        }

        let seqs = vec![TokenSeq(toks)];
        let (_, g) = m.loss_and_gradient(&seqs);
        let h = 1e-5;
        let mut worst: f64 = 0.0;
        let n = m.param_count();
        for _ in 0..500 {
            let i = rng.random_range(0..n);
            let orig = m.params()[i];
            m.params_mut()[i] = orig + h;
            let lp = m.mean_loss(&seqs);
            m.params_mut()[i] = orig - h;
            let lm = m.mean_loss(&seqs);
            m.params_mut()[i] = orig;
            let num = (lp - lm) / (2.0 * h);
            let scale = g[i].abs().max(num.abs());
            if scale > 1e-7 {
                worst = worst.max((g[i] - num).abs() / scale);
            }
        }
        ensure(worst < 1e-4, || format!("gradient relative error {worst:.2e}"))?;

        let (seqs, layout) = compact_box_corpus(100, 21);
        let cfg = TransformerConfig { t_max: 256, lr: 3e-3, optimizer: Optimizer::adamw(), ..Default::default() };
        let mut m = Transformer::new(cfg, layout.vocab_size() as usize, 3).unwrap();
        let initial = m.mean_loss(&seqs);
        let opts = TrainOptions { epochs: 50, seed: 4, stop_below: Some(0.5 * initial) };
        let (_, logs) = m.train(&seqs, &opts).map_err(|e| e.to_string())?;
        let last = logs.last().ok_or("no epochs ran")?;
        ensure(last.loss <= 0.5 * initial, || format!("loss {:.3} from {initial:.3} after 50 epochs", last.loss))?;
        let secs = t0.elapsed().as_secs_f64();
        ensure(secs < 300.0, || format!("took {secs:.0} s"))?;
        Ok(format!(
            "causal mask exact; gradient rel. error {worst:.1e}; loss {initial:.2} -> {:.2} by epoch {}",
            last.loss, last.epoch
        ))
    });
}

/// Box sequences under a compact layout with a trained 64-word codebook.
fn compact_box_corpus(count: usize, seed: u64) -> (Vec<TokenSeq>, VocabLayout) {
    let solids = boxes(count, seed);
    let cbc = CodebookTrainConfig { n_geo: 64, epochs: 4, batch_size: 256, ..Default::default() };
    let (cb, _) = train_codebook(&collect_patches(&solids).unwrap(), &cbc, 1).unwrap();
    let layout = VocabLayout { n_max: 8, n_geo: 64, levels: 64, n_classes: 0 };
    let opts = TokenizeOptions { reindex: Reindex::Fixed(0), ..Default::default() };
    (tokenize_all(&solids, &cb, &layout, &opts), layout)
}

#[test]
fn c08_generation_validity() {
    criterion(8, "generation validity", || {
        let solids = boxes(500, 11);
        let (cb, layout) = exact_codebook(&solids, 50, 2048);
        let opts = TokenizeOptions { reindex: Reindex::Fixed(0), ..Default::default() };
        let seqs = tokenize_all(&solids, &cb, &layout, &opts);
        let m = NGramModel::fit_slotted(&seqs, 4, 1e-6, layout, 1024).map_err(|e| e.to_string())?;
        let g06 = sample_rates(&m, &layout, 0.6, 1024);
        let g095 = sample_rates(&m, &layout, 0.95, 1024);
        let (a, b) = (grammar_rate(&g06, &layout), grammar_rate(&g095, &layout));
        let (va, vb) = (
            validity_rate(&g06, &cb, &layout, &DetokConfig::default()),
            validity_rate(&g095, &cb, &layout, &DetokConfig::default()),
        );
        let plain = NGramModel::fit(&seqs, 4, 1e-6, layout.vocab_size() as usize, 1024).map_err(|e| e.to_string())?;
        let plain_rate = grammar_rate(&sample_rates(&plain, &layout, 0.6, 1024), &layout);
        ensure(a >= 80.0, || format!("4-gram grammar-valid {a:.1}% at p = 0.6"))?;
        ensure(a >= b - 5.0, || format!("grammar trend {a:.1}% at 0.6 vs {b:.1}% at 0.95"))?;

        let (tseqs, tlayout) = compact_box_corpus(100, 21);
        let cfg = TransformerConfig { t_max: 256, lr: 3e-3, optimizer: Optimizer::adamw(), ..Default::default() };
        let mut t = Transformer::new(cfg, tlayout.vocab_size() as usize, 3).unwrap();
        t.train(&tseqs, &TrainOptions { epochs: 15, seed: 4, stop_below: None }).map_err(|e| e.to_string())?;
        let tg = grammar_rate(&sample_rates(&t, &tlayout, 0.6, 256), &tlayout);
        ensure(tg >= 50.0, || format!("transformer grammar-valid {tg:.1}%"))?;
        Ok(format!(
            "4-gram grammar {a:.1}% (p 0.6) / {b:.1}% (p 0.95), full validity {va:.1}% / {vb:.1}%, \
             token-only 4-gram {plain_rate:.1}%; transformer grammar {tg:.1}%"
        ))
    });
}

#[test]
fn c09_metric_sanity() {
    criterion(9, "metric sanity", || {
        let fx = fixtures();
        let clouds: Vec<Vec<Point3>> = fx
            .iter()
            .enumerate()
            .map(|(i, (_, s, _))| sample_points(&ReconstructedModel::from_solid(s), 500, i as u64).unwrap())
            .collect();
        let cov = coverage(&clouds, &clouds).map_err(|e| e.to_string())?;
        let mmd_v = mmd(&clouds, &clouds).map_err(|e| e.to_string())?;
        let jsd_v = jsd(&clouds, &clouds, 28).map_err(|e| e.to_string())?;
        ensure((cov - 100.0).abs() < 1e-9 && mmd_v.abs() < 1e-9 && jsd_v.abs() < 1e-9, || {
            format!("self COV {cov} MMD {mmd_v} JSD {jsd_v}")
        })?;
        let cd = chamfer(&[Point3::new(0.0, 0.0, 0.0)], &[Point3::new(1.0, 0.0, 0.0)]).unwrap();
        ensure((cd - 2.0).abs() < 1e-12, || format!("chamfer {cd}"))?;
        let a = vec![vec![Point3::new(-0.9, -0.9, -0.9)]];
        let b = vec![vec![Point3::new(0.9, 0.9, 0.9)]];
        let dj = jsd(&a, &b, 28).unwrap();
        ensure((dj - std::f64::consts::LN_2).abs() < 1e-9, || format!("disjoint JSD {dj}"))?;

        let solids: Vec<SolidModel> = fx.iter().map(|f| f.1.clone()).collect();
        let (cb, layout) = exact_codebook(&solids, 50, 2048);
        let hashes = |reindex: Reindex| -> Vec<String> {
            let opts = TokenizeOptions { reindex, ..Default::default() };
            tokenize_all(&solids, &cb, &layout, &opts).iter().map(|s| canonical_hash(&s.0, &layout)).collect()
        };
        let base = hashes(Reindex::Fixed(0));
        let train: HashSet<String> = base[..5].iter().cloned().collect();
        let want = novelty_uniqueness(&base, &train);
        for r in [Reindex::Fixed(17), Reindex::Fixed(49), Reindex::Random] {
            let h = hashes(r);
            ensure(h == base, || format!("hashes change under {r:?}"))?;
            ensure(novelty_uniqueness(&h, &train) == want, || "novelty/uniqueness change with r".into())?;
        }
        Ok(format!(
            "self COV 100 MMD 0 JSD 0; chamfer 2; disjoint JSD ln 2; novelty {:.1}% uniqueness {:.1}% invariant to r",
            want.0, want.1
        ))
    });
}

/// Every file under `dir`, relative path to bytes.
fn snapshot(dir: &Path) -> Vec<(String, Vec<u8>)> {
    fn walk(root: &Path, dir: &Path, out: &mut Vec<(String, Vec<u8>)>) {
        for e in std::fs::read_dir(dir).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                walk(root, &p, out);
            } else {
                let rel = p.strip_prefix(root).unwrap().display().to_string();
                out.push((rel, std::fs::read(&p).unwrap()));
            }
        }
    }
    let mut out = Vec::new();
    walk(dir, dir, &mut out);
    out.sort();
    out
}

/// Training-log lines reduced to epoch and loss; throughput is wall-clock.
fn log_losses(bytes: &[u8]) -> Vec<(u64, f64)> {
    String::from_utf8_lossy(bytes)
        .lines()
        .map(|l| {
            let v: serde_json::Value = serde_json::from_str(l).unwrap();
            (v["epoch"].as_u64().unwrap(), v["loss"].as_f64().unwrap())
        })
        .collect()
}

fn full_pipeline(work: &Path) -> Result<(), String> {
    let cfg = write_desk_config(work, ModelKind::Ngram);
    let d = |p: &str| work.join(p).display().to_string();
    let c = cfg.as_str();
    run_cli(&["--config", c, "gen-dataset", "--out", &d("data")])?;
    run_cli(&["--config", c, "train-codebook", "--data", &d("data"), "--out", &d("cb.bin")])?;
    run_cli(&["--config", c, "tokenize", "--in", &d("data"), "--codebook", &d("cb.bin"), "--out", &d("train.tok")])?;
    run_cli(&["--config", c, "detokenize", "--in", &d("train.tok"), "--codebook", &d("cb.bin"), "--out", &d("rec")])?;
    run_cli(&["--config", c, "train-model", "--data", &d("train.tok"), "--out", &d("ngram.ckpt")])?;
    run_cli(&[
        "--config", c, "train-model", "--data", &d("train.tok"), "--out", &d("tf.ckpt"), "--kind", "transformer",
        "--epochs", "2", "--log", &d("tf.log"),
    ])?;
    run_cli(&["--config", c, "sample", "--model", &d("ngram.ckpt"), "--out", &d("gen/ngram.tok")])?;
    run_cli(&["--config", c, "sample", "--model", &d("tf.ckpt"), "--out", &d("gen/tf.tok"), "--count", "4"])?;
    run_cli(&[
        "--config", c, "eval", "--gen", &d("gen"), "--ref", &d("train.tok"), "--codebook", &d("cb.bin"), "--out",
        &d("eval.json"),
    ])?;
    run_cli(&[
        "--config", c, "ablate-ordering", "--data", &d("data"), "--codebook", &d("cb.bin"), "--out", &d("ablation"),
        "--samples", "8",
    ])?;
    Ok(())
}

#[test]
fn c10_cli_determinism() {
    criterion(10, "CLI determinism", || {
        let root = tempfile::tempdir().unwrap();
        let work = root.path().join("run");
        std::fs::create_dir(&work).unwrap();
        full_pipeline(&work)?;
        let first = snapshot(&work);
        std::fs::remove_dir_all(&work).unwrap();
        std::fs::create_dir(&work).unwrap();
        full_pipeline(&work)?;
        let second = snapshot(&work);
        let names = |s: &[(String, Vec<u8>)]| s.iter().map(|f| f.0.clone()).collect::<Vec<_>>();
        ensure(names(&first) == names(&second), || "different file sets".into())?;
        for ((name, a), (_, b)) in first.iter().zip(&second) {
            if name.ends_with(".log") {
                ensure(log_losses(a) == log_losses(b), || format!("{name}: losses differ"))?;
            } else {
                ensure(a == b, || format!("{name} differs between runs"))?;
            }
        }
        Ok(format!("{} artifacts byte-identical across reruns (training log by epoch and loss)", first.len()))
    });
}

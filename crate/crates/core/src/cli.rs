//! Command-line pipeline: dataset generation through evaluation.
//!
//! Every artifact records the tool version and the hash of the resolved
//! configuration. Token files and checkpoints also record the vocabulary
//! layout hash and the codebook content hash; a mismatch with the files a
//! later step is given is a hard error.

use std::collections::HashSet;
use std::ffi::OsString;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use thiserror::Error;

use crate::codebook::{collect_patches, train_codebook, Codebook, CodebookError, CodebookMeta};
use crate::config::{Config, ConfigError, ModelKind};
use crate::detok::{decode_and_check, ValidityReport};
use crate::generator::{
    generate_batch, load_model, save_model, AnyModel, CheckpointMeta, GenError, NGramModel,
    SamplerConfig, TrainOptions, Transformer,
};
use crate::ingest::{generate_dataset, load_dataset_dir, load_solid_file, parse_kind_mix, DatasetManifest, IngestError};
use crate::metrics::{canonical_hash, evaluate, EvalReport, MetricsError};
use crate::model::SolidModel;
use crate::sequence::{
    read_token_file, tokenize_solid, write_token_file, EdgeStrategy, FaceStrategy, Reindex, SequenceInfo, TokFileError,
    TokSidecar, TokenSeq, TokenizeError, TokenizeOptions, VocabLayout,
};
use crate::util::derive_seed;
use crate::TOOL_VERSION;

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Ingest(#[from] IngestError),
    #[error(transparent)]
    Codebook(#[from] CodebookError),
    #[error(transparent)]
    TokFile(#[from] TokFileError),
    #[error(transparent)]
    Generator(#[from] GenError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error("{path}: {source}")]
    Tokenize {
        path: String,
        #[source]
        source: TokenizeError,
    },
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{what} mismatch: expected {expected}, found {found}")]
    HashMismatch { what: &'static str, expected: String, found: String },
    #[error("{0}")]
    Usage(String),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io { path: path.display().to_string(), source }
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(io_err(dir))?;
    }
    std::fs::write(path, bytes).map_err(io_err(path))
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<(), CliError> {
    let mut bytes = serde_json::to_vec_pretty(value).expect("artifacts serialize");
    bytes.push(b'\n');
    write_file(path, &bytes)
}

#[derive(Debug, Parser)]
#[command(name = "brepseq", version, about = "Token sequences for B-rep solids: build, train, sample and evaluate")]
pub struct Cli {
    /// TOML configuration; defaults apply to anything it leaves out.
    #[arg(long, global = true, env = "BREPSEQ_CONFIG")]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a seeded corpus of procedural solids.
    GenDataset(GenDatasetArgs),
    /// Train the geometry codebook on a dataset directory.
    TrainCodebook(TrainCodebookArgs),
    /// Turn solids into token sequences.
    Tokenize(TokenizeArgs),
    /// Rebuild solids from token sequences and check their validity.
    Detokenize(DetokenizeArgs),
    /// Fit a sequence model on a token file.
    TrainModel(TrainModelArgs),
    /// Draw sequences from a trained model.
    Sample(SampleArgs),
    /// Score generated sequences against a reference set.
    Eval(EvalArgs),
    /// Compare face and edge ordering strategies end to end.
    AblateOrdering(AblateArgs),
    /// Print the resolved configuration as TOML.
    PrintConfig(PrintConfigArgs),
}

#[derive(Debug, Args)]
pub struct PrintConfigArgs {
    /// Start from the small settings instead of the defaults.
    #[arg(long)]
    pub desk: bool,
}

#[derive(Debug, Args)]
pub struct GenDatasetArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub count: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub jitter: Option<f64>,
    /// Weighted kinds, e.g. `box:1,n_prism:2`.
    #[arg(long)]
    pub mix: Option<String>,
}

#[derive(Debug, Args)]
pub struct TrainCodebookArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub no_restart: bool,
}

#[derive(Debug, Args)]
pub struct TokenizeArgs {
    /// A solid JSON file or a dataset directory.
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long)]
    pub codebook: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub face_strategy: Option<FaceStrategy>,
    #[arg(long)]
    pub edge_strategy: Option<EdgeStrategy>,
    /// Fixed face-index offset instead of a seeded draw.
    #[arg(long)]
    pub r: Option<u32>,
    #[arg(long)]
    pub class_conditional: bool,
}

#[derive(Debug, Args)]
pub struct DetokenizeArgs {
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long)]
    pub codebook: PathBuf,
    /// Output directory for reconstructed solids and `report.json`.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct TrainModelArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_parser = parse_kind)]
    pub kind: Option<ModelKind>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Training log as JSON lines.
    #[arg(long)]
    pub log: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SampleArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long = "p")]
    pub top_p: Option<f64>,
    #[arg(long)]
    pub count: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub max_len: Option<usize>,
    /// Start with this class token instead of START.
    #[arg(long)]
    pub class_label: Option<u32>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Token file or directory of token files.
    #[arg(long)]
    pub gen: PathBuf,
    #[arg(long = "ref")]
    pub reference: PathBuf,
    #[arg(long)]
    pub codebook: PathBuf,
    /// Training sequences for novelty; defaults to the reference set.
    #[arg(long)]
    pub train: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct AblateArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub codebook: PathBuf,
    /// Writes `<out>.json` and `<out>.txt`.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub samples: Option<usize>,
    #[arg(long = "p", default_value_t = 0.9)]
    pub top_p: f64,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, value_parser = parse_kind)]
    pub kind: Option<ModelKind>,
}

fn parse_kind(s: &str) -> Result<ModelKind, String> {
    match s {
        "ngram" | "n-gram" => Ok(ModelKind::Ngram),
        "transformer" => Ok(ModelKind::Transformer),
        _ => Err(format!("unknown model kind `{s}`")),
    }
}

/// Parses `argv` (program name first) and runs the command. Returns the
/// process exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match execute(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}

pub fn execute(cli: Cli) -> Result<(), CliError> {
    let cfg = match (&cli.config, &cli.command) {
        (Some(p), _) => Config::load(p)?,
        (None, Command::PrintConfig(PrintConfigArgs { desk: true })) => Config::desk(),
        (None, _) => Config::default(),
    };
    match cli.command {
        Command::GenDataset(a) => gen_dataset(cfg, a),
        Command::TrainCodebook(a) => train_cb(cfg, a),
        Command::Tokenize(a) => tokenize(cfg, a),
        Command::Detokenize(a) => detokenize(cfg, a),
        Command::TrainModel(a) => train_model(cfg, a),
        Command::Sample(a) => sample(cfg, a),
        Command::Eval(a) => eval(cfg, a),
        Command::AblateOrdering(a) => ablate(cfg, a),
        Command::PrintConfig(_) => {
            print!("{}", cfg.to_toml());
            Ok(())
        }
    }
}

fn gen_dataset(mut cfg: Config, a: GenDatasetArgs) -> Result<(), CliError> {
    if let Some(c) = a.count {
        cfg.dataset.count = c;
    }
    if let Some(s) = a.seed {
        cfg.seeds.dataset = s;
    }
    if let Some(j) = a.jitter {
        cfg.dataset.jitter = j;
    }
    if let Some(m) = a.mix {
        cfg.dataset.kind_mix = m;
    }
    let mix = parse_kind_mix(&cfg.dataset.kind_mix)?;
    let solids = generate_dataset(&mix, cfg.dataset.count, cfg.seeds.dataset, cfg.dataset.jitter)?;
    let m = DatasetManifest::write(&a.out, &solids, &mix, cfg.seeds.dataset, cfg.dataset.jitter, &cfg.hash())?;
    println!("wrote {} solids to {}", m.count, a.out.display());
    Ok(())
}

fn load_solids(path: &Path, n_max: usize) -> Result<Vec<(PathBuf, SolidModel)>, CliError> {
    if path.is_dir() {
        Ok(load_dataset_dir(path, n_max)?)
    } else {
        Ok(vec![(path.to_path_buf(), load_solid_file(path, n_max)?)])
    }
}

fn train_cb(mut cfg: Config, a: TrainCodebookArgs) -> Result<(), CliError> {
    if let Some(e) = a.epochs {
        cfg.codebook.epochs = e;
    }
    if let Some(s) = a.seed {
        cfg.seeds.codebook = s;
    }
    if a.no_restart {
        cfg.codebook.restart = None;
    }
    let solids: Vec<SolidModel> = load_solids(&a.data, cfg.layout.n_max as usize)?.into_iter().map(|s| s.1).collect();
    let patches = collect_patches(&solids)?;
    let (cb, report) = train_codebook(&patches, &cfg.codebook, cfg.seeds.codebook)?;
    let meta = CodebookMeta { tool_version: TOOL_VERSION.into(), config_hash: cfg.hash() };
    write_file(&a.out, &cb.to_bytes(&meta))?;
    #[derive(Serialize)]
    struct Out<'a> {
        tool_version: &'a str,
        config_hash: String,
        codebook_hash: String,
        report: &'a crate::codebook::TrainReport,
    }
    let out = Out { tool_version: TOOL_VERSION, config_hash: cfg.hash(), codebook_hash: cb.content_hash(), report: &report };
    write_json(&report_path(&a.out), &out)?;
    println!(
        "codebook {} codewords, final mse {:.3e}, utilization {:.1}%",
        cb.size(),
        report.final_mse,
        100.0 * report.utilization
    );
    Ok(())
}

fn report_path(p: &Path) -> PathBuf {
    let mut s = p.as_os_str().to_owned();
    s.push(".report.json");
    PathBuf::from(s)
}

fn load_codebook(path: &Path, layout: &VocabLayout) -> Result<Codebook, CliError> {
    let bytes = std::fs::read(path).map_err(io_err(path))?;
    let (cb, _) = Codebook::from_bytes(&bytes)?;
    if cb.size() != layout.n_geo as usize {
        return Err(CliError::HashMismatch {
            what: "codebook size",
            expected: layout.n_geo.to_string(),
            found: cb.size().to_string(),
        });
    }
    Ok(cb)
}

fn check_sidecar(side: &Option<TokSidecar>, layout: &VocabLayout, cb: Option<&Codebook>) -> Result<(), CliError> {
    let Some(s) = side else { return Ok(()) };
    if s.layout_hash != layout.layout_hash() {
        return Err(CliError::HashMismatch { what: "layout", expected: layout.layout_hash(), found: s.layout_hash.clone() });
    }
    if let (Some(found), Some(cb)) = (&s.codebook_hash, cb) {
        if *found != cb.content_hash() {
            return Err(CliError::HashMismatch { what: "codebook", expected: cb.content_hash(), found: found.clone() });
        }
    }
    Ok(())
}

fn tokenize_opts(cfg: &Config, r: Option<u32>) -> TokenizeOptions {
    TokenizeOptions {
        face_strategy: cfg.tokenize.face_strategy,
        edge_strategy: cfg.tokenize.edge_strategy,
        reindex: r.map_or(Reindex::Random, Reindex::Fixed),
        class_conditional: cfg.tokenize.class_conditional,
        strict: cfg.tokenize.strict,
    }
}

/// Tokenizes every solid; solid `i` uses seed `derive_seed(seed, i)`.
fn tokenize_all(
    solids: &[(PathBuf, SolidModel)],
    cb: &Codebook,
    layout: &VocabLayout,
    opts: &TokenizeOptions,
    seed: u64,
) -> Result<(Vec<TokenSeq>, Vec<SequenceInfo>), CliError> {
    use rayon::prelude::*;
    let out: Result<Vec<_>, CliError> = solids
        .par_iter()
        .enumerate()
        .map(|(i, (p, s))| {
            let sd = derive_seed(seed, i as u64);
            let t = tokenize_solid(s, cb, layout, opts, sd)
                .map_err(|source| CliError::Tokenize { path: p.display().to_string(), source })?;
            let name = p.file_name().map_or_else(|| p.display().to_string(), |n| n.to_string_lossy().into_owned());
            Ok((t.seq, SequenceInfo { source: name, seed: sd, r: t.r }))
        })
        .collect();
    Ok(out?.into_iter().unzip())
}

fn sidecar(cfg: &Config, cb_hash: Option<String>, opts: Option<&TokenizeOptions>, seqs: Vec<SequenceInfo>) -> TokSidecar {
    TokSidecar {
        tool_version: TOOL_VERSION.into(),
        config_hash: cfg.hash(),
        layout: cfg.layout,
        layout_hash: cfg.layout.layout_hash(),
        codebook_hash: cb_hash,
        face_strategy: opts.map(|o| o.face_strategy),
        edge_strategy: opts.map(|o| o.edge_strategy),
        sequences: seqs,
    }
}

fn tokenize(mut cfg: Config, a: TokenizeArgs) -> Result<(), CliError> {
    if let Some(s) = a.seed {
        cfg.seeds.tokenize = s;
    }
    if let Some(f) = a.face_strategy {
        cfg.tokenize.face_strategy = f;
    }
    if let Some(e) = a.edge_strategy {
        cfg.tokenize.edge_strategy = e;
    }
    cfg.tokenize.class_conditional |= a.class_conditional;
    let cb = load_codebook(&a.codebook, &cfg.layout)?;
    let solids = load_solids(&a.input, cfg.layout.n_max as usize)?;
    let opts = tokenize_opts(&cfg, a.r);
    let (seqs, info) = tokenize_all(&solids, &cb, &cfg.layout, &opts, cfg.seeds.tokenize)?;
    write_token_file(&a.out, &seqs, Some(&sidecar(&cfg, Some(cb.content_hash()), Some(&opts), info)))?;
    println!("wrote {} sequences to {}", seqs.len(), a.out.display());
    Ok(())
}

fn detokenize(cfg: Config, a: DetokenizeArgs) -> Result<(), CliError> {
    let cb = load_codebook(&a.codebook, &cfg.layout)?;
    let (seqs, side) = read_token_file(&a.input)?;
    check_sidecar(&side, &cfg.layout, Some(&cb))?;
    #[derive(Serialize)]
    struct Entry {
        index: usize,
        file: Option<String>,
        canonical_hash: String,
        report: ValidityReport,
    }
    #[derive(Serialize)]
    struct Report {
        tool_version: &'static str,
        config_hash: String,
        codebook_hash: String,
        valid: usize,
        total: usize,
        entries: Vec<Entry>,
    }
    let mut entries = Vec::with_capacity(seqs.len());
    for (i, s) in seqs.iter().enumerate() {
        let (model, report) = decode_and_check(s.as_slice(), &cb, &cfg.layout, &cfg.detok);
        let file = match model {
            Some(m) => {
                let name = format!("rec_{i:05}.json");
                write_file(&a.out.join(&name), &serde_json::to_vec(&m.to_record()).expect("records serialize"))?;
                Some(name)
            }
            None => None,
        };
        entries.push(Entry { index: i, file, canonical_hash: canonical_hash(s.as_slice(), &cfg.layout), report });
    }
    let valid = entries.iter().filter(|e| e.report.valid()).count();
    let report = Report {
        tool_version: TOOL_VERSION,
        config_hash: cfg.hash(),
        codebook_hash: cb.content_hash(),
        valid,
        total: seqs.len(),
        entries,
    };
    write_json(&a.out.join("report.json"), &report)?;
    println!("{valid}/{} sequences valid", seqs.len());
    Ok(())
}

#[derive(Serialize)]
struct LogLine {
    epoch: usize,
    loss: f64,
    tokens_per_sec: f64,
}

/// Fits the configured model; returns the model and its log lines.
fn fit(cfg: &Config, seqs: &[TokenSeq], kind: ModelKind, seed: u64) -> Result<(AnyModel, Vec<LogLine>), CliError> {
    let vocab = cfg.layout.vocab_size() as usize;
    match kind {
        ModelKind::Ngram => {
            let (k, a, lim) = (cfg.model.ngram_order, cfg.model.ngram_alpha, cfg.sampling.max_len);
            let m = if cfg.model.ngram_slotted {
                NGramModel::fit_slotted(seqs, k, a, cfg.layout, lim)?
            } else {
                NGramModel::fit(seqs, k, a, vocab, lim)?
            };
            Ok((AnyModel::NGram(m), Vec::new()))
        }
        ModelKind::Transformer => {
            let mut m = Transformer::new(cfg.model.transformer, vocab, seed)?;
            let opts = TrainOptions { epochs: cfg.model.epochs, seed: derive_seed(seed, 1), stop_below: None };
            let (initial, logs) = m.train(seqs, &opts)?;
            let mut lines = vec![LogLine { epoch: 0, loss: initial, tokens_per_sec: 0.0 }];
            lines.extend(logs.iter().map(|l| LogLine { epoch: l.epoch, loss: l.loss, tokens_per_sec: l.tokens_per_sec }));
            Ok((AnyModel::Transformer(m), lines))
        }
    }
}

fn train_model(mut cfg: Config, a: TrainModelArgs) -> Result<(), CliError> {
    if let Some(k) = a.kind {
        cfg.model.kind = k;
    }
    if let Some(e) = a.epochs {
        cfg.model.epochs = e;
    }
    if let Some(s) = a.seed {
        cfg.seeds.model = s;
    }
    let (seqs, side) = read_token_file(&a.data)?;
    check_sidecar(&side, &cfg.layout, None)?;
    let (model, lines) = fit(&cfg, &seqs, cfg.model.kind, cfg.seeds.model)?;
    let meta = CheckpointMeta {
        tool_version: TOOL_VERSION.into(),
        config_hash: cfg.hash(),
        layout: Some(cfg.layout),
        layout_hash: cfg.layout.layout_hash(),
        codebook_hash: side.and_then(|s| s.codebook_hash).unwrap_or_default(),
    };
    write_file(&a.out, &save_model(&model, &meta))?;
    if let Some(log) = &a.log {
        let mut text = Vec::new();
        for l in &lines {
            serde_json::to_writer(&mut text, l).expect("log lines serialize");
            text.write_all(b"\n").expect("writes to a Vec succeed");
        }
        write_file(log, &text)?;
    }
    match lines.last() {
        Some(l) => println!("trained {} for {} epochs, loss {:.4}", model.kind(), l.epoch, l.loss),
        None => println!("fitted {} on {} sequences", model.kind(), seqs.len()),
    }
    Ok(())
}

fn sample(mut cfg: Config, a: SampleArgs) -> Result<(), CliError> {
    if let Some(p) = a.top_p {
        cfg.sampling.top_p = p;
    }
    if let Some(c) = a.count {
        cfg.sampling.count = c;
    }
    if let Some(s) = a.seed {
        cfg.seeds.sample = s;
    }
    if let Some(m) = a.max_len {
        cfg.sampling.max_len = m;
    }
    cfg.validate()?;
    let bytes = std::fs::read(&a.model).map_err(io_err(&a.model))?;
    let (model, meta) = load_model(&bytes)?;
    if meta.layout_hash != cfg.layout.layout_hash() {
        return Err(CliError::HashMismatch { what: "layout", expected: cfg.layout.layout_hash(), found: meta.layout_hash });
    }
    let prompt = match a.class_label {
        Some(k) => cfg
            .layout
            .class_token(k)
            .ok_or_else(|| CliError::Usage(format!("class label {k} is outside the {} classes", cfg.layout.n_classes)))?,
        None => cfg.layout.start(),
    };
    let sc = SamplerConfig { top_p: cfg.sampling.top_p, max_len: cfg.sampling.max_len, seed: cfg.seeds.sample };
    let out = generate_batch(&model, &[prompt], cfg.layout.end(), &sc, cfg.sampling.count)?;
    let info = (0..out.len())
        .map(|i| SequenceInfo { source: format!("sample_{i:05}"), seed: derive_seed(sc.seed, i as u64), r: 0 })
        .collect();
    let seqs: Vec<TokenSeq> = out.into_iter().map(|g| g.seq).collect();
    let cb_hash = (!meta.codebook_hash.is_empty()).then_some(meta.codebook_hash);
    write_token_file(&a.out, &seqs, Some(&sidecar(&cfg, cb_hash, None, info)))?;
    println!("wrote {} samples from {} to {}", seqs.len(), model.kind(), a.out.display());
    Ok(())
}

/// Sequences of one token file or of every `*.tok` file in a directory,
/// in file-name order.
fn read_sequences(path: &Path, layout: &VocabLayout, cb: &Codebook) -> Result<Vec<Vec<u32>>, CliError> {
    let files = if path.is_dir() {
        let mut v: Vec<PathBuf> = std::fs::read_dir(path)
            .map_err(io_err(path))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "tok"))
            .collect();
        v.sort();
        v
    } else {
        vec![path.to_path_buf()]
    };
    let mut out = Vec::new();
    for f in files {
        let (seqs, side) = read_token_file(&f)?;
        check_sidecar(&side, layout, Some(cb))?;
        out.extend(seqs.into_iter().map(|s| s.0));
    }
    Ok(out)
}

fn eval(mut cfg: Config, a: EvalArgs) -> Result<(), CliError> {
    if let Some(s) = a.seed {
        cfg.seeds.eval = s;
    }
    let cb = load_codebook(&a.codebook, &cfg.layout)?;
    let gen = read_sequences(&a.gen, &cfg.layout, &cb)?;
    let refs = read_sequences(&a.reference, &cfg.layout, &cb)?;
    let train = match &a.train {
        Some(t) => read_sequences(t, &cfg.layout, &cb)?,
        None => refs.clone(),
    };
    let hashes: HashSet<String> = train.iter().map(|s| canonical_hash(s, &cfg.layout)).collect();
    let ecfg = crate::metrics::EvalConfig { seed: cfg.seeds.eval, detok: cfg.detok, ..cfg.eval };
    let report = evaluate(&gen, &refs, &hashes, &cb, &cfg.layout, &ecfg)?;
    print!("{}", report.table("generated"));
    if let Some(out) = &a.out {
        #[derive(Serialize)]
        struct Out<'a> {
            tool_version: &'static str,
            config_hash: String,
            codebook_hash: String,
            report: &'a EvalReport,
        }
        write_json(out, &Out { tool_version: TOOL_VERSION, config_hash: cfg.hash(), codebook_hash: cb.content_hash(), report: &report })?;
    }
    Ok(())
}

#[derive(Debug, Serialize)]
pub struct AblationRow {
    pub face_strategy: FaceStrategy,
    pub edge_strategy: EdgeStrategy,
    pub report: EvalReport,
}

fn ablate(mut cfg: Config, a: AblateArgs) -> Result<(), CliError> {
    if let Some(s) = a.samples {
        cfg.sampling.count = s;
    }
    if let Some(s) = a.seed {
        cfg.seeds.sample = s;
    }
    if let Some(k) = a.kind {
        cfg.model.kind = k;
    }
    cfg.sampling.top_p = a.top_p;
    cfg.validate()?;
    let cb = load_codebook(&a.codebook, &cfg.layout)?;
    let solids = load_solids(&a.data, cfg.layout.n_max as usize)?;
    let canonical = tokenize_all(&solids, &cb, &cfg.layout, &TokenizeOptions::canonical(), 0)?.0;
    let refs: Vec<Vec<u32>> = canonical.into_iter().map(|s| s.0).collect();
    let hashes: HashSet<String> = refs.iter().map(|s| canonical_hash(s, &cfg.layout)).collect();
    let ecfg = crate::metrics::EvalConfig { seed: cfg.seeds.eval, detok: cfg.detok, ..cfg.eval };

    let grid: Vec<(FaceStrategy, EdgeStrategy)> = FaceStrategy::ALL
        .iter()
        .map(|&f| (f, EdgeStrategy::MaxIdxA))
        .chain([(FaceStrategy::Dfs, EdgeStrategy::Rand)])
        .collect();
    let mut rows = Vec::with_capacity(grid.len());
    for (i, &(f, e)) in grid.iter().enumerate() {
        let opts = TokenizeOptions { face_strategy: f, edge_strategy: e, ..tokenize_opts(&cfg, None) };
        let (seqs, _) = tokenize_all(&solids, &cb, &cfg.layout, &opts, cfg.seeds.tokenize)?;
        let (model, _) = fit(&cfg, &seqs, cfg.model.kind, derive_seed(cfg.seeds.model, i as u64))?;
        let sc = SamplerConfig { top_p: cfg.sampling.top_p, max_len: cfg.sampling.max_len, seed: cfg.seeds.sample };
        let gen: Vec<Vec<u32>> = generate_batch(&model, &[cfg.layout.start()], cfg.layout.end(), &sc, cfg.sampling.count)?
            .into_iter()
            .map(|g| g.seq.0)
            .collect();
        let report = evaluate(&gen, &refs, &hashes, &cb, &cfg.layout, &ecfg)?;
        log::info!("{f} / {e}: valid {:.1}%", report.valid_percent);
        rows.push(AblationRow { face_strategy: f, edge_strategy: e, report });
    }
    let model_name = match cfg.model.kind {
        ModelKind::Ngram => format!("{}-gram", cfg.model.ngram_order),
        ModelKind::Transformer => "transformer".to_string(),
    };
    let text = ablation_table(&rows, cfg.sampling.top_p, &model_name);
    print!("{text}");
    #[derive(Serialize)]
    struct Out<'a> {
        tool_version: &'static str,
        config_hash: String,
        codebook_hash: String,
        top_p: f64,
        model: String,
        rows: &'a [AblationRow],
    }
    let json = Out {
        tool_version: TOOL_VERSION,
        config_hash: cfg.hash(),
        codebook_hash: cb.content_hash(),
        top_p: cfg.sampling.top_p,
        model: model_name,
        rows: &rows,
    };
    write_json(&a.out.with_extension("json"), &json)?;
    write_file(&a.out.with_extension("txt"), text.as_bytes())?;
    Ok(())
}

/// Face-ordering rows (edges fixed to MAX-IDX-A), then edge-ordering rows
/// (faces fixed to DFS). MMD and JSD are shown ×100.
pub fn ablation_table(rows: &[AblationRow], top_p: f64, model: &str) -> String {
    let mut s = format!("Face ordering (edges MAX-IDX-A, {model}, p = {top_p})\n{}", EvalReport::header());
    for r in rows.iter().filter(|r| r.edge_strategy == EdgeStrategy::MaxIdxA) {
        s.push_str(&r.report.row(r.face_strategy.name()));
    }
    s.push_str(&format!("\nEdge ordering (faces DFS, {model}, p = {top_p})\n{}", EvalReport::header()));
    for e in [EdgeStrategy::Rand, EdgeStrategy::MaxIdxA] {
        for r in rows.iter().filter(|r| r.face_strategy == FaceStrategy::Dfs && r.edge_strategy == e) {
            s.push_str(&r.report.row(e.name()));
        }
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn usage_errors_exit_nonzero() {
        assert_eq!(run(["brepseq", "no-such-command"]), 2);
        assert_eq!(run(["brepseq", "tokenize"]), 2);
        assert_eq!(run(["brepseq", "--help"]), 0);
    }

    #[test]
    fn module_errors_exit_one() {
        let dir = tempfile::tempdir().unwrap();
        let missing = dir.path().join("missing.tok");
        let cb = dir.path().join("cb.bin");
        let code = run([
            OsString::from("brepseq"),
            "detokenize".into(),
            "--in".into(),
            missing.into(),
            "--codebook".into(),
            cb.into(),
            "--out".into(),
            dir.path().join("o").into(),
        ]);
        assert_eq!(code, 1);
    }
}

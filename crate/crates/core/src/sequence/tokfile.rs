//! Token files: one sequence per line as space-separated decimal ids, with
//! an optional JSON sidecar describing how the sequences were produced.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::order::{EdgeStrategy, FaceStrategy};
use super::tokenize::TokenSeq;
use super::vocab::VocabLayout;

#[derive(Debug, Error)]
pub enum TokFileError {
    #[error("line {line}: `{text}` is not a token id")]
    BadToken { line: usize, text: String },
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("bad sidecar {path}: {msg}")]
    Sidecar { path: String, msg: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SequenceInfo {
    pub source: String,
    pub seed: u64,
    pub r: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TokSidecar {
    pub tool_version: String,
    pub config_hash: String,
    pub layout: VocabLayout,
    pub layout_hash: String,
    /// Content hash of the codebook that produced the geometry tokens, when
    /// the sequences came from tokenization.
    pub codebook_hash: Option<String>,
    pub face_strategy: Option<FaceStrategy>,
    pub edge_strategy: Option<EdgeStrategy>,
    pub sequences: Vec<SequenceInfo>,
}

pub fn sidecar_path(tok: &Path) -> PathBuf {
    let mut s = tok.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

pub fn format_tokens(seqs: &[TokenSeq]) -> String {
    let mut out = String::new();
    for s in seqs {
        let line: Vec<String> = s.0.iter().map(|t| t.to_string()).collect();
        out.push_str(&line.join(" "));
        out.push('\n');
    }
    out
}

pub fn parse_tokens(text: &str) -> Result<Vec<TokenSeq>, TokFileError> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            l.split_whitespace()
                .map(|w| {
                    w.parse::<u32>().map_err(|_| TokFileError::BadToken {
                        line: i + 1,
                        text: w.to_string(),
                    })
                })
                .collect::<Result<Vec<u32>, _>>()
                .map(TokenSeq)
        })
        .collect()
}

fn io_err(path: &Path, source: std::io::Error) -> TokFileError {
    TokFileError::Io {
        path: path.display().to_string(),
        source,
    }
}

pub fn write_token_file(
    path: &Path,
    seqs: &[TokenSeq],
    sidecar: Option<&TokSidecar>,
) -> Result<(), TokFileError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    }
    std::fs::write(path, format_tokens(seqs)).map_err(|e| io_err(path, e))?;
    if let Some(meta) = sidecar {
        let sp = sidecar_path(path);
        let bytes = serde_json::to_vec_pretty(meta).expect("sidecar serializes");
        std::fs::write(&sp, bytes).map_err(|e| io_err(&sp, e))?;
    }
    Ok(())
}

pub fn read_token_file(path: &Path) -> Result<(Vec<TokenSeq>, Option<TokSidecar>), TokFileError> {
    let text = std::fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    let seqs = parse_tokens(&text)?;
    let sp = sidecar_path(path);
    let sidecar = if sp.exists() {
        let bytes = std::fs::read(&sp).map_err(|e| io_err(&sp, e))?;
        Some(
            serde_json::from_slice(&bytes).map_err(|e| TokFileError::Sidecar {
                path: sp.display().to_string(),
                msg: e.to_string(),
            })?,
        )
    } else {
        None
    };
    Ok((seqs, sidecar))
}

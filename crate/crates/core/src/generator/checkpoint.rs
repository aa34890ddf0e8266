//! Model checkpoint files.
//!
//! Binary layout, little-endian throughout:
//!
//! ```text
//! magic    "HTCK"          4 bytes
//! version  u32             currently 1
//! kind     u8              0 = n-gram, 1 = transformer
//! head_len u32, head       JSON header: metadata plus model config
//! body_len u64, body       n-gram: JSON context table; transformer: f64 parameters
//! ```

use serde::{Deserialize, Serialize};

use super::ngram::NGramRecord;
use super::{DecodeState, GenError, NGramModel, NextTokenModel, Transformer, TransformerConfig};
use crate::sequence::VocabLayout;

const MAGIC: &[u8; 4] = b"HTCK";
const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub tool_version: String,
    pub config_hash: String,
    pub layout: Option<VocabLayout>,
    pub layout_hash: String,
    pub codebook_hash: String,
}

#[derive(Serialize, Deserialize)]
struct Header {
    meta: CheckpointMeta,
    #[serde(default)]
    transformer: Option<TransformerConfig>,
    vocab: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub enum AnyModel {
    NGram(NGramModel),
    Transformer(Transformer),
}

impl AnyModel {
    pub fn kind(&self) -> &'static str {
        match self {
            AnyModel::NGram(_) => "ngram",
            AnyModel::Transformer(_) => "transformer",
        }
    }
}

impl NextTokenModel for AnyModel {
    fn vocab_size(&self) -> usize {
        match self {
            AnyModel::NGram(m) => m.vocab_size(),
            AnyModel::Transformer(m) => m.vocab_size(),
        }
    }

    fn context_limit(&self) -> usize {
        match self {
            AnyModel::NGram(m) => m.context_limit(),
            AnyModel::Transformer(m) => m.context_limit(),
        }
    }

    fn next_token_dist(&self, prefix: &[u32]) -> Vec<f64> {
        match self {
            AnyModel::NGram(m) => m.next_token_dist(prefix),
            AnyModel::Transformer(m) => m.next_token_dist(prefix),
        }
    }

    fn decoder(&self) -> Option<Box<dyn DecodeState + '_>> {
        match self {
            AnyModel::NGram(m) => m.decoder(),
            AnyModel::Transformer(m) => m.decoder(),
        }
    }
}

fn bad(msg: impl Into<String>) -> GenError {
    GenError::Checkpoint(msg.into())
}

pub fn save_model(model: &AnyModel, meta: &CheckpointMeta) -> Vec<u8> {
    let (kind, transformer, body) = match model {
        AnyModel::NGram(m) => (0u8, None, serde_json::to_vec(&m.to_record()).expect("record serializes")),
        AnyModel::Transformer(m) => {
            let body = m.params().iter().flat_map(|v| v.to_le_bytes()).collect();
            (1u8, Some(*m.config()), body)
        }
    };
    let header = Header { meta: meta.clone(), transformer, vocab: model.vocab_size() };
    let head = serde_json::to_vec(&header).expect("header serializes");
    let mut out = Vec::with_capacity(21 + head.len() + body.len());
    out.extend_from_slice(MAGIC);
    out.extend(VERSION.to_le_bytes());
    out.push(kind);
    out.extend((head.len() as u32).to_le_bytes());
    out.extend(&head);
    out.extend((body.len() as u64).to_le_bytes());
    out.extend(&body);
    out
}

pub fn load_model(bytes: &[u8]) -> Result<(AnyModel, CheckpointMeta), GenError> {
    let mut pos = 0;
    let mut take = |n: usize| -> Result<&[u8], GenError> {
        let s = bytes.get(pos..pos + n).ok_or_else(|| bad("truncated checkpoint"))?;
        pos += n;
        Ok(s)
    };
    if take(4)? != MAGIC {
        return Err(bad("bad magic"));
    }
    let version = u32::from_le_bytes(take(4)?.try_into().unwrap());
    if version != VERSION {
        return Err(bad(format!("unsupported version {version}")));
    }
    let kind = take(1)?[0];
    let head_len = u32::from_le_bytes(take(4)?.try_into().unwrap()) as usize;
    let header: Header = serde_json::from_slice(take(head_len)?).map_err(|e| bad(e.to_string()))?;
    let body_len = u64::from_le_bytes(take(8)?.try_into().unwrap()) as usize;
    let body = take(body_len)?;
    if pos != bytes.len() {
        return Err(bad("trailing bytes"));
    }
    let model = match kind {
        0 => {
            let rec: NGramRecord = serde_json::from_slice(body).map_err(|e| bad(e.to_string()))?;
            AnyModel::NGram(NGramModel::from_record(rec)?)
        }
        1 => {
            let cfg = header.transformer.ok_or_else(|| bad("missing transformer config"))?;
            if body.len() % 8 != 0 {
                return Err(bad("parameter block is not a whole number of f64"));
            }
            let params = body.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
            AnyModel::Transformer(Transformer::from_parts(cfg, header.vocab, params)?)
        }
        k => return Err(bad(format!("unknown model kind {k}"))),
    };
    Ok((model, header.meta))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sequence::TokenSeq;

    fn meta() -> CheckpointMeta {
        CheckpointMeta {
            tool_version: "0.1.0".into(),
            config_hash: "abc".into(),
            layout: Some(VocabLayout { n_max: 8, n_geo: 16, levels: 32, n_classes: 0 }),
            layout_hash: "def".into(),
            codebook_hash: "0123".into(),
        }
    }

    #[test]
    fn transformer_round_trip() {
        let cfg = TransformerConfig { layers: 1, heads: 2, d_model: 8, d_ff: 16, t_max: 12, ..Default::default() };
        let m = AnyModel::Transformer(Transformer::new(cfg, 9, 4).unwrap());
        let bytes = save_model(&m, &meta());
        let (back, mt) = load_model(&bytes).unwrap();
        assert_eq!(back, m);
        assert_eq!(mt, meta());
        assert_eq!(back.next_token_dist(&[1, 2]), m.next_token_dist(&[1, 2]));
        assert!(load_model(&bytes[..bytes.len() - 3]).is_err());
        let mut wrong = bytes.clone();
        wrong[0] = b'X';
        assert!(load_model(&wrong).is_err());
    }

    #[test]
    fn ngram_round_trip() {
        let m = NGramModel::fit(&[TokenSeq(vec![0, 1, 2, 1, 3])], 3, 0.1, 4, 8).unwrap();
        let m = AnyModel::NGram(m);
        let (back, _) = load_model(&save_model(&m, &meta())).unwrap();
        assert_eq!(back, m);
        assert_eq!(back.kind(), "ngram");
    }
}

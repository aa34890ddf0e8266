//! Codebook files.
//!
//! Binary layout, little-endian throughout:
//!
//! ```text
//! magic  "HTCB"            4 bytes
//! version u32              currently 1
//! n_geo   u32
//! dim     u32              patch dimension
//! meta_len u32, meta       JSON object (tool version, config hash)
//! codewords f32 × n_geo·dim
//! usage     u64 × n_geo
//! ```

use serde::{Deserialize, Serialize};

use super::{Codebook, CodebookError};

const MAGIC: &[u8; 4] = b"HTCB";
const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct CodebookMeta {
    pub tool_version: String,
    pub config_hash: String,
}

#[derive(Serialize)]
struct JsonExport<'a> {
    n_geo: usize,
    patch_dim: usize,
    content_hash: String,
    meta: &'a CodebookMeta,
    usage_counts: &'a [u64],
    codewords: Vec<&'a [f32]>,
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], CodebookError> {
        if self.pos + n > self.buf.len() {
            return Err(CodebookError::Format("truncated codebook file".into()));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32, CodebookError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
}

impl Codebook {
    pub fn to_bytes(&self, meta: &CodebookMeta) -> Vec<u8> {
        let meta_json = serde_json::to_vec(meta).expect("meta serializes");
        let mut out = Vec::with_capacity(24 + meta_json.len() + self.raw().len() * 4 + self.size() * 8);
        out.extend_from_slice(MAGIC);
        out.extend(VERSION.to_le_bytes());
        out.extend((self.size() as u32).to_le_bytes());
        out.extend((self.dim() as u32).to_le_bytes());
        out.extend((meta_json.len() as u32).to_le_bytes());
        out.extend(&meta_json);
        for v in self.raw() {
            out.extend(v.to_le_bytes());
        }
        for c in &self.usage_counts {
            out.extend(c.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<(Codebook, CodebookMeta), CodebookError> {
        let mut r = Reader { buf: bytes, pos: 0 };
        if r.take(4)? != MAGIC {
            return Err(CodebookError::Format("bad magic".into()));
        }
        let version = r.u32()?;
        if version != VERSION {
            return Err(CodebookError::Format(format!("unsupported version {version}")));
        }
        let n = r.u32()? as usize;
        let dim = r.u32()? as usize;
        let meta_len = r.u32()? as usize;
        let meta: CodebookMeta = serde_json::from_slice(r.take(meta_len)?)
            .map_err(|e| CodebookError::Format(e.to_string()))?;
        if n == 0 || dim == 0 {
            return Err(CodebookError::EmptyCodebook);
        }
        let raw = r.take(n * dim * 4)?;
        let words: Vec<Vec<f32>> = raw
            .chunks_exact(dim * 4)
            .map(|c| {
                c.chunks_exact(4)
                    .map(|b| f32::from_le_bytes(b.try_into().unwrap()))
                    .collect()
            })
            .collect();
        let mut cb = Codebook::new(dim, words)?;
        for c in cb.usage_counts.iter_mut() {
            *c = u64::from_le_bytes(r.take(8)?.try_into().unwrap());
        }
        if r.pos != bytes.len() {
            return Err(CodebookError::Format("trailing bytes".into()));
        }
        Ok((cb, meta))
    }

    pub fn to_json(&self, meta: &CodebookMeta) -> String {
        let export = JsonExport {
            n_geo: self.size(),
            patch_dim: self.dim(),
            content_hash: self.content_hash(),
            meta,
            usage_counts: &self.usage_counts,
            codewords: (0..self.size()).map(|i| self.codeword(i)).collect(),
        };
        serde_json::to_string(&export).expect("codebook exports to JSON")
    }
}

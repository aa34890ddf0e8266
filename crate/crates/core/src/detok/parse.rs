use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::sequence::{Segment, VocabLayout, EDGE_BLOCK, EDGE_SLOTS, FACE_BLOCK, FACE_SLOTS};

#[derive(Debug, Error, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "code")]
pub enum ParseError {
    #[error("sequence does not begin with START or a class token")]
    BadStart,
    #[error("token {pos}: expected {expected:?}, found {found:?}")]
    TypeMismatch {
        pos: usize,
        expected: Segment,
        found: Option<Segment>,
    },
    #[error("block starting at token {pos} is cut short")]
    TruncatedBlock { pos: usize },
    #[error("token {pos}: face blocks end without SEP")]
    MissingSep { pos: usize },
    #[error("edge blocks run to the end without END")]
    MissingEnd { pos: usize },
    #[error("token {pos}: face index {index} appears twice")]
    DuplicateFaceIndex { pos: usize, index: u32 },
    #[error("token {pos}: edge refers to unknown face index {index}")]
    UnknownFaceReference { pos: usize, index: u32 },
    #[error("token {pos}: edge joins face {index} to itself")]
    SelfLoopEdge { pos: usize, index: u32 },
    #[error("{count} tokens after END")]
    TrailingTokens { pos: usize, count: usize },
}

/// What opened the sequence.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Prefix {
    Start,
    Class(u32),
}

/// Token values with segment offsets removed.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FaceBlock {
    pub pos: [u32; 6],
    pub geo: [u32; 4],
    pub index: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EdgeBlock {
    pub faces: [u32; 2],
    pub pos: [u32; 6],
    pub geo: [u32; 4],
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParsedBlocks {
    pub prefix: Prefix,
    pub faces: Vec<FaceBlock>,
    pub edges: Vec<EdgeBlock>,
}

impl ParsedBlocks {
    pub fn class_label(&self) -> Option<u32> {
        match self.prefix {
            Prefix::Start => None,
            Prefix::Class(c) => Some(c),
        }
    }

    /// Position in `faces` of the face carrying `index`.
    pub fn face_position(&self, index: u32) -> Option<usize> {
        self.faces.iter().position(|f| f.index == index)
    }
}

struct Cursor<'a> {
    toks: &'a [u32],
    layout: &'a VocabLayout,
}

impl Cursor<'_> {
    fn seg(&self, i: usize) -> Option<Segment> {
        self.layout.segment_of(self.toks[i])
    }

    /// Checks slot types of the block at `start`, returning de-offset values.
    fn block(&self, start: usize, slots: &[Segment]) -> Result<Vec<u32>, ParseError> {
        let mut out = Vec::with_capacity(slots.len());
        for (k, &want) in slots.iter().enumerate() {
            let i = start + k;
            if i >= self.toks.len() {
                return Err(ParseError::TruncatedBlock { pos: start });
            }
            let found = self.seg(i);
            if found != Some(want) {
                return Err(ParseError::TypeMismatch {
                    pos: i,
                    expected: want,
                    found,
                });
            }
            let t = self.toks[i];
            out.push(match want {
                Segment::FaceIndex => t,
                Segment::Geometry => t - self.layout.o_geo(),
                Segment::Position => t - self.layout.o_pos(),
                Segment::Special => t,
            });
        }
        Ok(out)
    }
}

/// Accepts `(START|class) FaceBlock+ SEP EdgeBlock* END` and nothing else.
pub fn parse_sequence(toks: &[u32], layout: &VocabLayout) -> Result<ParsedBlocks, ParseError> {
    let prefix = match toks.first() {
        Some(&t) if t == layout.start() => Prefix::Start,
        Some(&t) => Prefix::Class(layout.class_of(t).ok_or(ParseError::BadStart)?),
        None => return Err(ParseError::BadStart),
    };
    let cur = Cursor { toks, layout };
    let mut faces = Vec::new();
    let mut seen = BTreeSet::new();
    let mut i = 1;
    loop {
        if i >= toks.len() {
            return Err(ParseError::MissingSep { pos: i });
        }
        let t = toks[i];
        if t == layout.sep() && !faces.is_empty() {
            i += 1;
            break;
        }
        // an edge-block opener or END here means the separator is gone
        if !faces.is_empty() && (cur.seg(i) == Some(Segment::FaceIndex) || t == layout.end()) {
            return Err(ParseError::MissingSep { pos: i });
        }
        let v = cur.block(i, &FACE_SLOTS)?;
        let index = v[10];
        if !seen.insert(index) {
            return Err(ParseError::DuplicateFaceIndex { pos: i + 10, index });
        }
        faces.push(FaceBlock {
            pos: v[0..6].try_into().unwrap(),
            geo: v[6..10].try_into().unwrap(),
            index,
        });
        i += FACE_BLOCK;
    }
    let mut edges = Vec::new();
    loop {
        if i >= toks.len() {
            return Err(ParseError::MissingEnd { pos: i });
        }
        if toks[i] == layout.end() {
            break;
        }
        let v = cur.block(i, &EDGE_SLOTS)?;
        let (a, b) = (v[0], v[1]);
        for (k, idx) in [a, b].into_iter().enumerate() {
            if !seen.contains(&idx) {
                return Err(ParseError::UnknownFaceReference { pos: i + k, index: idx });
            }
        }
        if a == b {
            return Err(ParseError::SelfLoopEdge { pos: i + 1, index: a });
        }
        edges.push(EdgeBlock {
            faces: [a, b],
            pos: v[2..8].try_into().unwrap(),
            geo: v[8..12].try_into().unwrap(),
        });
        i += EDGE_BLOCK;
    }
    if i + 1 < toks.len() {
        return Err(ParseError::TrailingTokens {
            pos: i + 1,
            count: toks.len() - i - 1,
        });
    }
    Ok(ParsedBlocks { prefix, faces, edges })
}

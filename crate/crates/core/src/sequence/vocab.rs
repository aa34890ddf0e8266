use serde::{Deserialize, Serialize};

/// Which vocabulary segment a token belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Segment {
    FaceIndex,
    Geometry,
    Position,
    Special,
}

/// Unified token space: `[0, n_max)` face indices, then `n_geo` geometry
/// codes, then `levels` position levels, then START, SEP, END and one
/// token per class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(default)]
pub struct VocabLayout {
    pub n_max: u32,
    pub n_geo: u32,
    pub levels: u32,
    pub n_classes: u32,
}

impl Default for VocabLayout {
    fn default() -> Self {
        Self {
            n_max: 50,
            n_geo: 4096,
            levels: 2048,
            n_classes: 0,
        }
    }
}

impl VocabLayout {
    pub fn o_geo(&self) -> u32 {
        self.n_max
    }

    pub fn o_pos(&self) -> u32 {
        self.n_max + self.n_geo
    }

    pub fn o_spec(&self) -> u32 {
        self.n_max + self.n_geo + self.levels
    }

    pub fn start(&self) -> u32 {
        self.o_spec()
    }

    pub fn sep(&self) -> u32 {
        self.o_spec() + 1
    }

    pub fn end(&self) -> u32 {
        self.o_spec() + 2
    }

    pub fn class_token(&self, label: u32) -> Option<u32> {
        (label < self.n_classes).then(|| self.o_spec() + 3 + label)
    }

    /// Class label of `token` if it is a class token.
    pub fn class_of(&self, token: u32) -> Option<u32> {
        let first = self.o_spec() + 3;
        (token >= first && token < self.vocab_size()).then(|| token - first)
    }

    pub fn vocab_size(&self) -> u32 {
        self.o_spec() + 3 + self.n_classes
    }

    pub fn segment_of(&self, token: u32) -> Option<Segment> {
        if token < self.o_geo() {
            Some(Segment::FaceIndex)
        } else if token < self.o_pos() {
            Some(Segment::Geometry)
        } else if token < self.o_spec() {
            Some(Segment::Position)
        } else if token < self.vocab_size() {
            Some(Segment::Special)
        } else {
            None
        }
    }

    /// Half-open id range of each segment.
    pub fn ranges(&self) -> [(Segment, std::ops::Range<u32>); 4] {
        [
            (Segment::FaceIndex, 0..self.o_geo()),
            (Segment::Geometry, self.o_geo()..self.o_pos()),
            (Segment::Position, self.o_pos()..self.o_spec()),
            (Segment::Special, self.o_spec()..self.vocab_size()),
        ]
    }

    pub fn layout_hash(&self) -> String {
        let s = format!(
            "n_max={};n_geo={};levels={};n_classes={}",
            self.n_max, self.n_geo, self.levels, self.n_classes
        );
        crate::util::short_hash(s.as_bytes())
    }
}

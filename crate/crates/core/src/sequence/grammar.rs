//! Incremental position tracking in `(START|class) FaceBlock+ SEP EdgeBlock* END`.

use super::{Segment, VocabLayout, EDGE_BLOCK, FACE_BLOCK};

pub const FACE_SLOTS: [Segment; FACE_BLOCK] = {
    use Segment::*;
    [Position, Position, Position, Position, Position, Position, Geometry, Geometry, Geometry, Geometry, FaceIndex]
};

pub const EDGE_SLOTS: [Segment; EDGE_BLOCK] = {
    use Segment::*;
    [FaceIndex, FaceIndex, Position, Position, Position, Position, Position, Position, Geometry, Geometry, Geometry, Geometry]
};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum State {
    Open,
    Face(usize),
    Edge(usize),
    Done,
    Broken,
}

/// Grammar automaton fed one token at a time. Only slot types and the
/// special tokens are checked; index semantics are left to the parser.
#[derive(Debug, Clone)]
pub struct GrammarTracker {
    layout: VocabLayout,
    state: State,
    faces: usize,
    edges: usize,
}

impl GrammarTracker {
    /// Number of distinct values returned by [`GrammarTracker::slot`].
    pub const SLOTS: u32 = (FACE_BLOCK + EDGE_BLOCK + 3) as u32;

    pub fn new(layout: VocabLayout) -> Self {
        Self { layout, state: State::Open, faces: 0, edges: 0 }
    }

    /// Slot the next token fills: 0 before the prefix, then face slots,
    /// edge slots, after END, and after a grammar violation.
    pub fn slot(&self) -> u32 {
        match self.state {
            State::Open => 0,
            State::Face(k) => 1 + k as u32,
            State::Edge(k) => (1 + FACE_BLOCK + k) as u32,
            State::Done => Self::SLOTS - 2,
            State::Broken => Self::SLOTS - 1,
        }
    }

    /// Completed blocks in the current section: faces before SEP, edges after.
    pub fn ordinal(&self) -> u32 {
        match self.state {
            State::Edge(_) | State::Done => self.edges as u32,
            _ => self.faces as u32,
        }
    }

    /// Slot and ordinal together; a function of the prefix only.
    pub fn key(&self) -> [u32; 2] {
        [self.slot(), self.ordinal()]
    }

    pub fn is_broken(&self) -> bool {
        self.state == State::Broken
    }

    pub fn push(&mut self, t: u32) {
        let l = &self.layout;
        let seg = l.segment_of(t);
        self.state = match self.state {
            State::Open if t == l.start() || l.class_of(t).is_some() => State::Face(0),
            State::Face(0) if t == l.sep() && self.faces > 0 => State::Edge(0),
            State::Face(k) if seg == Some(FACE_SLOTS[k]) => {
                if k + 1 == FACE_BLOCK {
                    self.faces += 1;
                    State::Face(0)
                } else {
                    State::Face(k + 1)
                }
            }
            State::Edge(0) if t == l.end() => State::Done,
            State::Edge(k) if seg == Some(EDGE_SLOTS[k]) => {
                if k + 1 == EDGE_BLOCK {
                    self.edges += 1;
                }
                State::Edge((k + 1) % EDGE_BLOCK)
            }
            _ => State::Broken,
        };
    }

    /// Slot before each token of `toks`, plus the slot after the last one.
    pub fn slots_of(layout: VocabLayout, toks: &[u32]) -> Vec<u32> {
        Self::keys_of(layout, toks).into_iter().map(|k| k[0]).collect()
    }

    /// [`GrammarTracker::key`] before each token, plus after the last one.
    pub fn keys_of(layout: VocabLayout, toks: &[u32]) -> Vec<[u32; 2]> {
        let mut g = Self::new(layout);
        let mut out = Vec::with_capacity(toks.len() + 1);
        for &t in toks {
            out.push(g.key());
            g.push(t);
        }
        out.push(g.key());
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::detok::parse_sequence;

    fn layout() -> VocabLayout {
        VocabLayout { n_max: 4, n_geo: 5, levels: 6, n_classes: 1 }
    }

    fn face(l: &VocabLayout, i: u32) -> Vec<u32> {
        let mut v = vec![l.o_pos(); 6];
        v.extend([l.o_geo(); 4]);
        v.push(i);
        v
    }

    #[test]
    fn tracks_a_valid_sequence() {
        let l = layout();
        let mut s = vec![l.start()];
        s.extend(face(&l, 0));
        s.extend(face(&l, 1));
        s.push(l.sep());
        s.extend([0, 1]);
        s.extend([l.o_pos(); 6]);
        s.extend([l.o_geo(); 4]);
        s.push(l.end());
        assert!(parse_sequence(&s, &l).is_ok());
        let slots = GrammarTracker::slots_of(l, &s);
        assert_eq!(slots[0], 0);
        assert_eq!(slots[1], 1);
        assert_eq!(slots[12], 1);
        assert_eq!(slots[23], 1);
        assert_eq!(slots[24], 1 + FACE_BLOCK as u32);
        assert_eq!(slots[36], 1 + FACE_BLOCK as u32);
        assert_eq!(*slots.last().unwrap(), GrammarTracker::SLOTS - 2);
        let keys = GrammarTracker::keys_of(l, &s);
        assert_eq!((keys[1], keys[12], keys[23]), ([1, 0], [1, 1], [1, 2]));
        assert_eq!((keys[24], keys[36]), ([12, 0], [12, 1]));
    }

    #[test]
    fn violations_are_sticky() {
        let l = layout();
        let mut g = GrammarTracker::new(l);
        g.push(l.start());
        g.push(l.sep());
        assert!(g.is_broken());
        g.push(l.o_pos());
        assert_eq!(g.slot(), GrammarTracker::SLOTS - 1);
        let mut g = GrammarTracker::new(l);
        g.push(l.class_token(0).unwrap());
        g.push(l.o_geo());
        assert!(g.is_broken());
    }
}

//! Solid-to-sequence serialization.

pub mod grammar;
pub mod order;
pub mod tokenize;
pub mod tokfile;
pub mod vocab;

pub use grammar::{GrammarTracker, EDGE_SLOTS, FACE_SLOTS};
pub use order::{order_edges, order_faces, positions, EdgeStrategy, FaceStrategy, TopologyView};
pub use tokenize::{
    draw_offset, reindex, tokenize_solid, Reindex, TokenSeq, TokenizeError, TokenizeOptions,
    Tokenized, EDGE_BLOCK, FACE_BLOCK,
};
pub use tokfile::{read_token_file, write_token_file, SequenceInfo, TokFileError, TokSidecar};
pub use vocab::{Segment, VocabLayout};

//! Next-token models over token sequences and nucleus sampling.

mod checkpoint;
mod ngram;
mod sampling;
mod transformer;

pub use checkpoint::{load_model, save_model, AnyModel, CheckpointMeta};
pub use ngram::NGramModel;
pub use sampling::{nucleus_sample, nucleus_support};
pub use transformer::{
    EpochLog, LrSchedule, Optimizer, Transformer, TransformerConfig, TrainOptions,
};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::sequence::TokenSeq;
use crate::util::derive_seed;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GenError {
    #[error("training corpus is empty")]
    EmptyCorpus,
    #[error("n-gram order must be at least 1")]
    BadOrder,
    #[error("token {token} is outside the vocabulary of {vocab}")]
    TokenOutOfVocab { token: u32, vocab: usize },
    #[error("sequence of {len} tokens exceeds the context limit {limit}")]
    SequenceTooLong { len: usize, limit: usize },
    #[error("top-p must lie in (0, 1], got {0}")]
    BadTopP(f64),
    #[error("distribution has no positive mass")]
    DegenerateDistribution,
    #[error("generation needs a non-empty prompt")]
    EmptyPrompt,
    #[error("invalid model configuration: {0}")]
    BadConfig(String),
    #[error("bad checkpoint: {0}")]
    Checkpoint(String),
}

/// Incremental decoding state: feed tokens one at a time and read the
/// next-token distribution.
pub trait DecodeState {
    fn push(&mut self, token: u32);
    fn dist(&mut self) -> Vec<f64>;
}

/// `p(t_i | t_<i)` over a fixed vocabulary.
pub trait NextTokenModel: Sync {
    fn vocab_size(&self) -> usize;
    fn context_limit(&self) -> usize;
    /// Probability vector over the vocabulary given `prefix`.
    fn next_token_dist(&self, prefix: &[u32]) -> Vec<f64>;

    /// Cached decoder, when the model has one. Without it generation
    /// re-evaluates the full prefix each step.
    fn decoder(&self) -> Option<Box<dyn DecodeState + '_>> {
        None
    }
}

struct PrefixDecoder<'a, M: NextTokenModel + ?Sized> {
    model: &'a M,
    prefix: Vec<u32>,
}

impl<M: NextTokenModel + ?Sized> DecodeState for PrefixDecoder<'_, M> {
    fn push(&mut self, token: u32) {
        self.prefix.push(token);
    }

    fn dist(&mut self) -> Vec<f64> {
        self.model.next_token_dist(&self.prefix)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SamplerConfig {
    pub top_p: f64,
    pub max_len: usize,
    pub seed: u64,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self {
            top_p: 0.6,
            max_len: 1024,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Generated {
    pub seq: TokenSeq,
    /// Generation stopped at `max_len` before END.
    pub max_len_reached: bool,
}

/// Samples until `end` or `max_len` tokens (prompt included).
pub fn generate<M: NextTokenModel + ?Sized>(
    model: &M,
    prompt: &[u32],
    end: u32,
    cfg: &SamplerConfig,
) -> Result<Generated, GenError> {
    if prompt.is_empty() {
        return Err(GenError::EmptyPrompt);
    }
    if !(cfg.top_p > 0.0 && cfg.top_p <= 1.0) {
        return Err(GenError::BadTopP(cfg.top_p));
    }
    let limit = cfg.max_len.min(model.context_limit());
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut state: Box<dyn DecodeState + '_> = match model.decoder() {
        Some(d) => d,
        None => Box::new(PrefixDecoder { model, prefix: Vec::new() }),
    };
    let mut seq = Vec::with_capacity(limit);
    for &t in prompt {
        if t as usize >= model.vocab_size() {
            return Err(GenError::TokenOutOfVocab { token: t, vocab: model.vocab_size() });
        }
        state.push(t);
        seq.push(t);
    }
    while seq.len() < limit && *seq.last().unwrap() != end {
        let t = nucleus_sample(&state.dist(), cfg.top_p, &mut rng)?;
        seq.push(t);
        if seq.len() < limit && t != end {
            state.push(t);
        }
    }
    let done = *seq.last().unwrap() == end;
    Ok(Generated {
        seq: TokenSeq(seq),
        max_len_reached: !done,
    })
}

/// `count` independent samples; sample `i` uses seed `derive_seed(cfg.seed, i)`.
pub fn generate_batch<M: NextTokenModel + ?Sized>(
    model: &M,
    prompt: &[u32],
    end: u32,
    cfg: &SamplerConfig,
    count: usize,
) -> Result<Vec<Generated>, GenError> {
    (0..count as u64)
        .into_par_iter()
        .map(|i| {
            let c = SamplerConfig { seed: derive_seed(cfg.seed, i), ..*cfg };
            generate(model, prompt, end, &c)
        })
        .collect()
}

/// Checks tokens against the vocabulary and the context limit.
pub(crate) fn check_corpus(seqs: &[TokenSeq], vocab: usize, limit: usize) -> Result<(), GenError> {
    if seqs.is_empty() || seqs.iter().all(|s| s.is_empty()) {
        return Err(GenError::EmptyCorpus);
    }
    for s in seqs {
        if s.len() > limit {
            return Err(GenError::SequenceTooLong { len: s.len(), limit });
        }
        if let Some(&token) = s.0.iter().find(|&&t| t as usize >= vocab) {
            return Err(GenError::TokenOutOfVocab { token, vocab });
        }
    }
    Ok(())
}

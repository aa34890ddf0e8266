use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use super::{check_corpus, DecodeState, GenError, NextTokenModel};
use crate::sequence::{GrammarTracker, TokenSeq, VocabLayout};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Context {
    total: u64,
    /// `(token, count)` sorted by token.
    next: Vec<(u32, u64)>,
}

/// Backoff k-gram with add-α smoothing. The longest observed context of at
/// most `k - 1` tokens decides the distribution.
///
/// A slotted model also keys every context by the grammar slot of the next
/// token and the number of finished blocks in its section, both functions of
/// the whole prefix. Plain token windows cannot tell the six bbox slots or
/// the face ordinals apart once corner values repeat.
#[derive(Debug, Clone, PartialEq)]
pub struct NGramModel {
    order: usize,
    alpha: f64,
    vocab: usize,
    limit: usize,
    slots: Option<VocabLayout>,
    /// `tables[j]` holds contexts of `j` tokens, led by the slot if slotted.
    tables: Vec<HashMap<Vec<u32>, Context>>,
}

#[derive(Serialize, Deserialize)]
pub(super) struct NGramRecord {
    order: usize,
    alpha: f64,
    vocab: usize,
    limit: usize,
    #[serde(default)]
    slots: Option<VocabLayout>,
    contexts: Vec<(Vec<u32>, Context)>,
}

impl NGramModel {
    pub fn fit(
        seqs: &[TokenSeq],
        order: usize,
        alpha: f64,
        vocab: usize,
        limit: usize,
    ) -> Result<Self, GenError> {
        Self::fit_inner(seqs, order, alpha, vocab, limit, None)
    }

    /// [`NGramModel::fit`] with contexts keyed by grammar slot.
    pub fn fit_slotted(
        seqs: &[TokenSeq],
        order: usize,
        alpha: f64,
        layout: VocabLayout,
        limit: usize,
    ) -> Result<Self, GenError> {
        Self::fit_inner(seqs, order, alpha, layout.vocab_size() as usize, limit, Some(layout))
    }

    fn fit_inner(
        seqs: &[TokenSeq],
        order: usize,
        alpha: f64,
        vocab: usize,
        limit: usize,
        slots: Option<VocabLayout>,
    ) -> Result<Self, GenError> {
        if order == 0 {
            return Err(GenError::BadOrder);
        }
        if !(alpha >= 0.0 && alpha.is_finite()) {
            return Err(GenError::BadConfig(format!("smoothing alpha {alpha}")));
        }
        check_corpus(seqs, vocab, limit)?;
        let mut counts: Vec<BTreeMap<Vec<u32>, BTreeMap<u32, u64>>> = vec![BTreeMap::new(); order];
        for s in seqs {
            let t = s.as_slice();
            let slot = slots.map(|l| GrammarTracker::keys_of(l, t));
            for i in 1..t.len() {
                for (j, table) in counts.iter_mut().enumerate() {
                    if j > i {
                        break;
                    }
                    let key = key(slot.as_ref().map(|s| s[i]), &t[i - j..i]);
                    *table
                        .entry(key)
                        .or_default()
                        .entry(t[i])
                        .or_default() += 1;
                }
            }
        }
        let tables = counts
            .into_iter()
            .map(|table| {
                table
                    .into_iter()
                    .map(|(ctx, next)| {
                        let total = next.values().sum();
                        (ctx, Context { total, next: next.into_iter().collect() })
                    })
                    .collect()
            })
            .collect();
        Ok(Self { order, alpha, vocab, limit, slots, tables })
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn is_slotted(&self) -> bool {
        self.slots.is_some()
    }

    fn dist_for(&self, slot: Option<[u32; 2]>, prefix: &[u32]) -> Vec<f64> {
        let longest = (self.order - 1).min(prefix.len());
        for j in (0..=longest).rev() {
            if let Some(c) = self.tables[j].get(&key(slot, &prefix[prefix.len() - j..])) {
                let denom = c.total as f64 + self.alpha * self.vocab as f64;
                let mut d = vec![self.alpha / denom; self.vocab];
                for &(t, n) in &c.next {
                    d[t as usize] += n as f64 / denom;
                }
                return d;
            }
        }
        // no context at all was seen, not even the empty one
        vec![1.0 / self.vocab as f64; self.vocab]
    }

    pub(super) fn to_record(&self) -> NGramRecord {
        let mut contexts: Vec<(Vec<u32>, Context)> = self
            .tables
            .iter()
            .flat_map(|t| t.iter().map(|(k, v)| (k.clone(), v.clone())))
            .collect();
        contexts.sort_by(|a, b| a.0.len().cmp(&b.0.len()).then(a.0.cmp(&b.0)));
        NGramRecord {
            order: self.order,
            alpha: self.alpha,
            vocab: self.vocab,
            limit: self.limit,
            slots: self.slots,
            contexts,
        }
    }

    pub(super) fn from_record(r: NGramRecord) -> Result<Self, GenError> {
        if r.order == 0 {
            return Err(GenError::BadOrder);
        }
        let lead = if r.slots.is_some() { 2 } else { 0 };
        let mut tables = vec![HashMap::new(); r.order];
        for (ctx, c) in r.contexts {
            let table = ctx
                .len()
                .checked_sub(lead)
                .and_then(|j| tables.get_mut(j))
                .ok_or_else(|| GenError::Checkpoint("context longer than the order".into()))?;
            table.insert(ctx, c);
        }
        Ok(Self {
            order: r.order,
            alpha: r.alpha,
            vocab: r.vocab,
            limit: r.limit,
            slots: r.slots,
            tables,
        })
    }
}

fn key(slot: Option<[u32; 2]>, ctx: &[u32]) -> Vec<u32> {
    slot.into_iter().flatten().chain(ctx.iter().copied()).collect()
}

struct SlottedDecoder<'a> {
    model: &'a NGramModel,
    tracker: GrammarTracker,
    prefix: Vec<u32>,
}

impl DecodeState for SlottedDecoder<'_> {
    fn push(&mut self, token: u32) {
        self.tracker.push(token);
        self.prefix.push(token);
    }

    fn dist(&mut self) -> Vec<f64> {
        self.model.dist_for(Some(self.tracker.key()), &self.prefix)
    }
}

impl NextTokenModel for NGramModel {
    fn vocab_size(&self) -> usize {
        self.vocab
    }

    fn context_limit(&self) -> usize {
        self.limit
    }

    fn next_token_dist(&self, prefix: &[u32]) -> Vec<f64> {
        let slot = self.slots.map(|l| *GrammarTracker::keys_of(l, prefix).last().expect("slots_of is non-empty"));
        self.dist_for(slot, prefix)
    }

    fn decoder(&self) -> Option<Box<dyn DecodeState + '_>> {
        let layout = self.slots?;
        Some(Box::new(SlottedDecoder { model: self, tracker: GrammarTracker::new(layout), prefix: Vec::new() }))
    }
}

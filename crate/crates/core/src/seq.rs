use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::vocab::{TokenId, Vocab};

/// Label sequence over one vocabulary; never contains blank.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TokenSeq {
    ids: Vec<TokenId>,
    vocab_tag: String,
}

impl TokenSeq {
    /// Unchecked constructor; prefer [`Vocab::seq`] which validates ids.
    pub fn new(ids: Vec<TokenId>, vocab_tag: impl Into<String>) -> Self {
        Self {
            ids,
            vocab_tag: vocab_tag.into(),
        }
    }

    pub fn ids(&self) -> &[TokenId] {
        &self.ids
    }

    pub fn into_ids(self) -> Vec<TokenId> {
        self.ids
    }

    pub fn vocab_tag(&self) -> &str {
        &self.vocab_tag
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }
}

/// Frame-level (CTC, length T) or lattice-level (transducer, length T+N)
/// alignment over the vocabulary including blank.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct AlignmentSeq(pub Vec<TokenId>);

impl AlignmentSeq {
    pub fn ids(&self) -> &[TokenId] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub(crate) fn check(&self, vocab: &Vocab) -> Result<()> {
        match self.0.iter().find(|&&id| id >= vocab.len()) {
            Some(id) => Err(Error::usage(format!("alignment id {id} out of range"))),
            None => Ok(()),
        }
    }
}

/// Partially observed sequence: `observed[m]` is false exactly where the id
/// is the mask token.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MaskedSeq {
    ids: Vec<TokenId>,
    observed: Vec<bool>,
}

impl MaskedSeq {
    pub fn new(ids: Vec<TokenId>, mask_id: TokenId) -> Self {
        let observed = ids.iter().map(|&id| id != mask_id).collect();
        Self { ids, observed }
    }

    pub fn all_masked(len: usize, mask_id: TokenId) -> Self {
        Self {
            ids: vec![mask_id; len],
            observed: vec![false; len],
        }
    }

    pub fn ids(&self) -> &[TokenId] {
        &self.ids
    }

    pub fn observed(&self) -> &[bool] {
        &self.observed
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn masked_count(&self) -> usize {
        self.observed.iter().filter(|o| !**o).count()
    }

    pub fn masked_positions(&self) -> Vec<usize> {
        self.observed
            .iter()
            .enumerate()
            .filter_map(|(i, o)| (!o).then_some(i))
            .collect()
    }
}

/// A decoded output with its log score and optional per-token confidences.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hypothesis {
    pub tokens: TokenSeq,
    pub score: f64,
    pub confidences: Option<Vec<f64>>,
}

impl Hypothesis {
    pub fn new(tokens: TokenSeq, score: f64) -> Self {
        Self {
            tokens,
            score,
            confidences: None,
        }
    }

    pub fn with_confidences(tokens: TokenSeq, score: f64, confidences: Vec<f64>) -> Self {
        debug_assert_eq!(tokens.len(), confidences.len());
        Self {
            tokens,
            score,
            confidences: Some(confidences),
        }
    }

    pub fn ids(&self) -> &[TokenId] {
        self.tokens.ids()
    }
}

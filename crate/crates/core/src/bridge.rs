//! Wordpiece tokenization over two vocabularies, text normalization, and
//! hypothesis length estimation.

use std::str::FromStr;

use crate::ctc::best_path_decode;
use crate::error::{Error, Result};
use crate::matrix::EmissionMatrix;
use crate::seq::TokenSeq;
use crate::vocab::Vocab;

/// Text normalization switches.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct NormalizeFlags {
    /// Remove every ASCII punctuation character.
    pub strip_punctuation: bool,
    pub lowercase: bool,
}

impl NormalizeFlags {
    pub const NONE: Self = Self {
        strip_punctuation: false,
        lowercase: false,
    };
    pub const ALL: Self = Self {
        strip_punctuation: true,
        lowercase: true,
    };

    pub fn is_none(&self) -> bool {
        !self.strip_punctuation && !self.lowercase
    }
}

impl FromStr for NormalizeFlags {
    type Err = Error;

    /// Comma-separated subset of `punct` and `case`; `none` or an empty
    /// string disables both.
    fn from_str(s: &str) -> Result<Self> {
        let mut flags = Self::NONE;
        for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            match part {
                "punct" => flags.strip_punctuation = true,
                "case" => flags.lowercase = true,
                "none" => {}
                other => {
                    return Err(Error::usage(format!(
                        "unknown normalization flag {other:?}"
                    )))
                }
            }
        }
        Ok(flags)
    }
}

/// Applies `flags` to `text`. With any flag set, whitespace runs are also
/// collapsed to single spaces and trimmed; with none the text is returned
/// unchanged.
pub fn normalize(text: &str, flags: NormalizeFlags) -> String {
    if flags.is_none() {
        return text.to_string();
    }
    let stripped: String = if flags.strip_punctuation {
        text.chars().filter(|c| !c.is_ascii_punctuation()).collect()
    } else {
        text.to_string()
    };
    let cased = if flags.lowercase {
        stripped.to_lowercase()
    } else {
        stripped
    };
    cased.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Greedy longest-match wordpiece tokenization of whitespace-separated
/// words. Pieces after the first in a word are looked up with the
/// vocabulary's continuation marker prepended.
pub fn tokenize(text: &str, vocab: &Vocab) -> Result<TokenSeq> {
    let marker = vocab.continuation_marker();
    let mut ids = Vec::new();
    let mut key = String::new();
    for word in text.split_whitespace() {
        let bounds: Vec<usize> = word
            .char_indices()
            .map(|(i, _)| i)
            .chain(std::iter::once(word.len()))
            .collect();
        let mut start = 0;
        while start + 1 < bounds.len() {
            let found = (start + 1..bounds.len()).rev().find_map(|end| {
                key.clear();
                if start > 0 {
                    key.push_str(marker);
                }
                key.push_str(&word[bounds[start]..bounds[end]]);
                vocab
                    .id(&key)
                    .filter(|&id| vocab.is_output_token(id))
                    .map(|id| (id, end))
            });
            let (id, end) = found.ok_or_else(|| Error::Tokenization {
                word: word.to_string(),
            })?;
            ids.push(id);
            start = end;
        }
    }
    vocab.seq(ids)
}

/// Joins continuation pieces onto their predecessors and returns the word
/// sequence.
pub fn detokenize_words(w: &TokenSeq, vocab: &Vocab) -> Result<Vec<String>> {
    let mut words: Vec<String> = Vec::new();
    for &id in w.ids() {
        let piece = vocab
            .token(id)
            .filter(|_| vocab.is_output_token(id))
            .ok_or_else(|| Error::usage(format!("token id {id} is not an output token")))?;
        if vocab.is_continuation(id) {
            let tail = &piece[vocab.continuation_marker().len()..];
            words
                .last_mut()
                .ok_or_else(|| {
                    Error::data(format!("sequence starts with continuation piece {piece:?}"))
                })?
                .push_str(tail);
        } else {
            words.push(piece.to_string());
        }
    }
    Ok(words)
}

/// [`detokenize_words`] joined by single spaces.
pub fn detokenize(w: &TokenSeq, vocab: &Vocab) -> Result<String> {
    Ok(detokenize_words(w, vocab)?.join(" "))
}

/// Detokenizes `w` under `from`, normalizes, and tokenizes under `to`.
pub fn retokenize(
    w: &TokenSeq,
    from: &Vocab,
    to: &Vocab,
    flags: NormalizeFlags,
) -> Result<TokenSeq> {
    let text = normalize(&detokenize(w, from)?, flags);
    tokenize(&text, to)
}

/// Token count under `v_b` of the best-path transcript of `aux` over `v_a`.
pub fn estimate_length(
    aux: &EmissionMatrix,
    v_a: &Vocab,
    v_b: &Vocab,
    flags: NormalizeFlags,
) -> Result<usize> {
    let hyp = best_path_decode(aux, v_a)?;
    Ok(retokenize(&hyp.tokens, v_a, v_b, flags)?.len())
}

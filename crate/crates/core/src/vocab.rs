use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seq::TokenSeq;

pub type TokenId = usize;

/// Token table with a reserved blank entry and an optional mask entry.
///
/// Every token, blank and mask included, owns one column of the emission
/// matrices built over this vocabulary, so `len()` is the column count.
#[derive(Debug, Clone, PartialEq)]
pub struct Vocab {
    name: String,
    tokens: Vec<String>,
    index: HashMap<String, TokenId>,
    blank_id: TokenId,
    mask_id: Option<TokenId>,
    continuation_marker: String,
}

#[derive(Serialize, Deserialize)]
struct VocabFile {
    #[serde(default)]
    name: Option<String>,
    tokens: Vec<String>,
    blank: String,
    #[serde(default)]
    mask: Option<String>,
    #[serde(default = "default_marker")]
    continuation_marker: String,
}

fn default_marker() -> String {
    "##".to_string()
}

impl Vocab {
    pub fn new(
        name: impl Into<String>,
        tokens: Vec<String>,
        blank_id: TokenId,
        mask_id: Option<TokenId>,
        continuation_marker: impl Into<String>,
    ) -> Result<Self> {
        let mut index = HashMap::with_capacity(tokens.len());
        for (i, tok) in tokens.iter().enumerate() {
            if tok.is_empty() {
                return Err(Error::data(format!("empty token string at index {i}")));
            }
            if index.insert(tok.clone(), i).is_some() {
                return Err(Error::data(format!("duplicate token {tok:?}")));
            }
        }
        if blank_id >= tokens.len() {
            return Err(Error::data(format!("blank id {blank_id} out of range")));
        }
        if let Some(m) = mask_id {
            if m >= tokens.len() {
                return Err(Error::data(format!("mask id {m} out of range")));
            }
            if m == blank_id {
                return Err(Error::data("mask and blank must be distinct tokens"));
            }
        }
        let reserved = 1 + usize::from(mask_id.is_some());
        if tokens.len() < reserved + 1 {
            return Err(Error::data("vocabulary needs at least one real token"));
        }
        Ok(Self {
            name: name.into(),
            tokens,
            index,
            blank_id,
            mask_id,
            continuation_marker: continuation_marker.into(),
        })
    }

    /// Convenience constructor: `blank` and `mask` are token strings that
    /// must appear in `tokens`.
    pub fn from_tokens(
        name: &str,
        tokens: &[&str],
        blank: &str,
        mask: Option<&str>,
    ) -> Result<Self> {
        let owned: Vec<String> = tokens.iter().map(|s| s.to_string()).collect();
        let find = |t: &str| {
            owned
                .iter()
                .position(|x| x == t)
                .ok_or_else(|| Error::data(format!("reserved token {t:?} not in token list")))
        };
        let blank_id = find(blank)?;
        let mask_id = mask.map(find).transpose()?;
        Self::new(name, owned, blank_id, mask_id, "##")
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        let file: VocabFile = serde_json::from_str(s)?;
        let blank_id = file
            .tokens
            .iter()
            .position(|t| *t == file.blank)
            .ok_or_else(|| Error::data(format!("blank {:?} not in tokens", file.blank)))?;
        let mask_id = match &file.mask {
            Some(m) => Some(
                file.tokens
                    .iter()
                    .position(|t| t == m)
                    .ok_or_else(|| Error::data(format!("mask {m:?} not in tokens")))?,
            ),
            None => None,
        };
        Self::new(
            file.name.unwrap_or_default(),
            file.tokens,
            blank_id,
            mask_id,
            file.continuation_marker,
        )
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json_str(&std::fs::read_to_string(path)?)
    }

    pub fn to_json_string(&self) -> String {
        let file = VocabFile {
            name: (!self.name.is_empty()).then(|| self.name.clone()),
            tokens: self.tokens.clone(),
            blank: self.tokens[self.blank_id].clone(),
            mask: self.mask_id.map(|m| self.tokens[m].clone()),
            continuation_marker: self.continuation_marker.clone(),
        };
        serde_json::to_string(&file).expect("vocab serializes")
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    /// Number of columns, i.e. real tokens plus blank (plus mask if present).
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn blank_id(&self) -> TokenId {
        self.blank_id
    }

    pub fn mask_id(&self) -> Option<TokenId> {
        self.mask_id
    }

    pub fn continuation_marker(&self) -> &str {
        &self.continuation_marker
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn id(&self, token: &str) -> Option<TokenId> {
        self.index.get(token).copied()
    }

    pub fn token(&self, id: TokenId) -> Option<&str> {
        self.tokens.get(id).map(String::as_str)
    }

    /// True for ids that may appear in an output hypothesis.
    pub fn is_output_token(&self, id: TokenId) -> bool {
        id < self.tokens.len() && id != self.blank_id && Some(id) != self.mask_id
    }

    /// Non-blank, non-mask ids in increasing order.
    pub fn output_ids(&self) -> impl Iterator<Item = TokenId> + '_ {
        (0..self.tokens.len()).filter(move |&i| self.is_output_token(i))
    }

    pub fn is_continuation(&self, id: TokenId) -> bool {
        !self.continuation_marker.is_empty()
            && self
                .token(id)
                .is_some_and(|t| t.starts_with(&self.continuation_marker))
    }

    /// Validates `ids` and tags them with this vocabulary.
    pub fn seq(&self, ids: Vec<TokenId>) -> Result<TokenSeq> {
        for &id in &ids {
            if id >= self.len() {
                return Err(Error::usage(format!("token id {id} out of range")));
            }
            if id == self.blank_id {
                return Err(Error::usage("blank cannot appear in a token sequence"));
            }
        }
        Ok(TokenSeq::new(ids, self.name.clone()))
    }

    /// Looks up whitespace-free token strings.
    pub fn seq_from_strs<S: AsRef<str>>(&self, tokens: &[S]) -> Result<TokenSeq> {
        let ids = tokens
            .iter()
            .map(|t| {
                let t = t.as_ref();
                self.id(t)
                    .ok_or_else(|| Error::data(format!("unknown token {t:?}")))
            })
            .collect::<Result<Vec<_>>>()?;
        self.seq(ids)
    }

    pub fn render(&self, ids: &[TokenId]) -> Vec<String> {
        ids.iter()
            .map(|&i| self.token(i).unwrap_or("<unk>").to_string())
            .collect()
    }
}

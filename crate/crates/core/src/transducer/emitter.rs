use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::logmath::log_softmax_in_place;
use crate::matrix::{EmissionMatrix, JointLattice};
use crate::rng::Rng;
use crate::seq::TokenSeq;
use crate::vocab::{TokenId, Vocab};

/// Source of transducer output distributions.
///
/// `step(prefix, t)` returns the normalized log-probability row over the
/// vocabulary (blank included) at frame `t` after emitting `prefix`. It
/// stands in for the joint network fed by the encoder frame and the
/// prediction-network state of `prefix`. Implementations must be
/// deterministic in `(prefix, t)`.
pub trait PredictionEmitter {
    fn cols(&self) -> usize;
    fn step(&self, prefix: &[TokenId], t: usize) -> Vec<f64>;
}

impl<E: PredictionEmitter + ?Sized> PredictionEmitter for &E {
    fn cols(&self) -> usize {
        (**self).cols()
    }

    fn step(&self, prefix: &[TokenId], t: usize) -> Vec<f64> {
        (**self).step(prefix, t)
    }
}

/// External language model used for shallow fusion.
pub trait LmFusionHook {
    /// `log p(token | prefix)`.
    fn score(&self, prefix: &[TokenId], token: TokenId) -> f64;
}

/// A fusion LM together with its interpolation weight.
#[derive(Clone, Copy)]
pub struct Fusion<'a> {
    pub lm: &'a dyn LmFusionHook,
    pub weight: f64,
}

/// Materializes the lattice an emitter induces for a fixed target.
pub fn build_lattice(
    emitter: &dyn PredictionEmitter,
    frames: usize,
    w: &TokenSeq,
) -> Result<JointLattice> {
    let urows = w.len() + 1;
    let cols = emitter.cols();
    let mut values = Vec::with_capacity(frames * urows * cols);
    for t in 0..frames {
        for u in 0..urows {
            let row = emitter.step(&w.ids()[..u], t);
            if row.len() != cols {
                return Err(Error::data("emitter returned a row of the wrong width"));
            }
            values.extend(row);
        }
    }
    JointLattice::new(frames, urows, cols, values, true)
}

/// Prefix-independent emitter: every prefix sees row `t` of a CTC-style
/// emission matrix.
#[derive(Debug, Clone)]
pub struct FrameEmitter {
    emissions: EmissionMatrix,
}

impl FrameEmitter {
    pub fn new(emissions: EmissionMatrix) -> Result<Self> {
        if !emissions.is_normalized() {
            return Err(Error::usage("frame emitter needs normalized rows"));
        }
        Ok(Self { emissions })
    }

    pub fn frames(&self) -> usize {
        self.emissions.rows()
    }
}

impl PredictionEmitter for FrameEmitter {
    fn cols(&self) -> usize {
        self.emissions.cols()
    }

    fn step(&self, _prefix: &[TokenId], t: usize) -> Vec<f64> {
        self.emissions.row(t).to_vec()
    }
}

/// Explicit `(frame, prefix) -> row` table with a per-frame fallback row for
/// prefixes not listed.
#[derive(Debug, Clone)]
pub struct TableEmitter {
    cols: usize,
    table: HashMap<(usize, Vec<TokenId>), Vec<f64>>,
    fallback: Vec<Vec<f64>>,
}

impl TableEmitter {
    pub fn new(cols: usize, fallback: Vec<Vec<f64>>) -> Self {
        Self {
            cols,
            table: HashMap::new(),
            fallback,
        }
    }

    pub fn insert(&mut self, t: usize, prefix: Vec<TokenId>, row: Vec<f64>) {
        self.table.insert((t, prefix), row);
    }

    /// Random normalized rows for every prefix of output tokens up to
    /// `max_prefix_len`, drawn from a seeded generator.
    pub fn random(frames: usize, vocab: &Vocab, max_prefix_len: usize, seed: u64) -> Self {
        let mut rng = Rng::new(seed);
        let cols = vocab.len();
        let draw = |rng: &mut Rng| {
            let mut row: Vec<f64> = (0..cols).map(|_| 4.0 * rng.uniform_f64() - 2.0).collect();
            log_softmax_in_place(&mut row).expect("finite logits");
            row
        };
        let fallback = (0..frames).map(|_| draw(&mut rng)).collect();
        let mut out = Self::new(cols, fallback);
        let outputs: Vec<TokenId> = vocab.output_ids().collect();
        let mut prefixes: Vec<Vec<TokenId>> = vec![vec![]];
        let mut frontier = prefixes.clone();
        for _ in 0..max_prefix_len {
            let mut grown = Vec::new();
            for p in &frontier {
                for &v in &outputs {
                    let mut q = p.clone();
                    q.push(v);
                    grown.push(q);
                }
            }
            prefixes.extend(grown.iter().cloned());
            frontier = grown;
        }
        for t in 0..frames {
            for p in &prefixes {
                let row = draw(&mut rng);
                out.insert(t, p.clone(), row);
            }
        }
        out
    }
}

impl PredictionEmitter for TableEmitter {
    fn cols(&self) -> usize {
        self.cols
    }

    fn step(&self, prefix: &[TokenId], t: usize) -> Vec<f64> {
        self.table
            .get(&(t, prefix.to_vec()))
            .unwrap_or(&self.fallback[t])
            .clone()
    }
}

/// Bigram LM: `log p(token | last token of prefix)`, the blank row serving
/// as the sentence-start context.
#[derive(Debug, Clone, PartialEq)]
pub struct BigramLm {
    cols: usize,
    start: TokenId,
    log_probs: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct BigramFile {
    log_probs: Vec<Vec<f64>>,
}

impl BigramLm {
    /// `log_probs[prev][next]`, square over the vocabulary. The row of the
    /// blank id is used for an empty prefix.
    pub fn new(log_probs: Vec<Vec<f64>>, vocab: &Vocab) -> Result<Self> {
        let cols = vocab.len();
        if log_probs.len() != cols || log_probs.iter().any(|r| r.len() != cols) {
            return Err(Error::data(format!("bigram table must be {cols}x{cols}")));
        }
        if log_probs.iter().flatten().any(|v| v.is_nan()) {
            return Err(Error::data("NaN in bigram table"));
        }
        Ok(Self {
            cols,
            start: vocab.blank_id(),
            log_probs: log_probs.concat(),
        })
    }

    pub fn load(path: impl AsRef<Path>, vocab: &Vocab) -> Result<Self> {
        let f: BigramFile = serde_json::from_str(&std::fs::read_to_string(path)?)?;
        Self::new(f.log_probs, vocab)
    }
}

impl LmFusionHook for BigramLm {
    fn score(&self, prefix: &[TokenId], token: TokenId) -> f64 {
        let prev = prefix.last().copied().unwrap_or(self.start);
        self.log_probs[prev * self.cols + token]
    }
}

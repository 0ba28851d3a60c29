//! Time-synchronous transducer beam search.
//!
//! Within a frame, live hypotheses are keyed by prefix and expanded in order
//! of increasing prefix length, so a prefix reached both from the previous
//! frame and by an extension inside the current frame is merged (by
//! log-sum-exp) before it is itself expanded. Each expansion sends the
//! hypothesis to the next frame through blank and spawns one candidate per
//! non-blank token. After every expansion round the union of
//! "advanced" and "still in this frame" hypotheses is pruned to the `beam`
//! best, so a beam of one reproduces greedy decoding and a beam at least as
//! large as the number of distinct reachable prefixes keeps every path.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet};

use crate::error::{Error, Result};
use crate::logmath::{argmax, log_add, logsumexp_unchecked, LOG_ZERO};
use crate::matrix::NORMALIZATION_TOL;
use crate::seq::Hypothesis;
use crate::vocab::{TokenId, Vocab};

use super::emitter::{Fusion, PredictionEmitter};

pub const DEFAULT_MAX_SYMBOLS_PER_FRAME: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BeamConfig {
    pub beam: usize,
    /// Cap on non-blank emissions per frame along a single path.
    pub max_symbols_per_frame: usize,
    /// Optional cap on the total hypothesis length.
    pub max_output_len: Option<usize>,
}

impl Default for BeamConfig {
    fn default() -> Self {
        Self {
            beam: 10,
            max_symbols_per_frame: DEFAULT_MAX_SYMBOLS_PER_FRAME,
            max_output_len: None,
        }
    }
}

impl BeamConfig {
    pub fn with_beam(beam: usize) -> Self {
        Self {
            beam,
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct Pending {
    score: f64,
    emitted: usize,
}

fn checked_row(
    emitter: &dyn PredictionEmitter,
    prefix: &[TokenId],
    t: usize,
    cols: usize,
) -> Result<Vec<f64>> {
    let row = emitter.step(prefix, t);
    if row.len() != cols {
        return Err(Error::usage(format!(
            "emitter row has {} entries, vocabulary has {cols}",
            row.len()
        )));
    }
    if row.iter().any(|v| v.is_nan()) {
        return Err(Error::data(format!("NaN in emitter row at frame {t}")));
    }
    let mass = logsumexp_unchecked(&row);
    if mass.is_nan() || mass.abs() > NORMALIZATION_TOL {
        return Err(Error::data(format!(
            "emitter row at frame {t} is not normalized (logsumexp = {mass})"
        )));
    }
    Ok(row)
}

/// Orders candidates best first; ties prefer hypotheses that already
/// advanced, then the lexicographically smaller prefix.
fn rank(a: &(f64, bool, &Vec<TokenId>), b: &(f64, bool, &Vec<TokenId>)) -> Ordering {
    b.0.partial_cmp(&a.0)
        .unwrap_or(Ordering::Equal)
        .then_with(|| b.1.cmp(&a.1))
        .then_with(|| a.2.cmp(b.2))
}

fn prune(
    next: &mut BTreeMap<Vec<TokenId>, f64>,
    pending: &mut BTreeMap<Vec<TokenId>, Pending>,
    beam: usize,
) {
    if next.len() + pending.len() <= beam {
        return;
    }
    let mut pool: Vec<(f64, bool, &Vec<TokenId>)> = next
        .iter()
        .map(|(p, &s)| (s, true, p))
        .chain(pending.iter().map(|(p, h)| (h.score, false, p)))
        .collect();
    pool.sort_by(rank);
    let (keep_next, keep_pending): (Vec<_>, Vec<_>) =
        pool.into_iter().take(beam).partition(|c| c.1);
    let keep_next: BTreeSet<Vec<TokenId>> = keep_next.into_iter().map(|c| c.2.clone()).collect();
    let keep_pending: BTreeSet<Vec<TokenId>> =
        keep_pending.into_iter().map(|c| c.2.clone()).collect();
    next.retain(|p, _| keep_next.contains(p));
    pending.retain(|p, _| keep_pending.contains(p));
}

/// Beam search over `frames` frames. Returns at most `config.beam`
/// hypotheses sorted by descending score. Scores of identical prefixes are
/// merged with log-sum-exp; with fusion, `weight * lm.score` is added to
/// every non-blank expansion.
pub fn beam_search(
    emitter: &dyn PredictionEmitter,
    frames: usize,
    vocab: &Vocab,
    config: &BeamConfig,
    fusion: Option<Fusion<'_>>,
) -> Result<Vec<Hypothesis>> {
    if config.beam == 0 {
        return Err(Error::usage("beam size must be at least 1"));
    }
    if config.max_symbols_per_frame == 0 {
        return Err(Error::usage("max_symbols_per_frame must be at least 1"));
    }
    if let Some(f) = &fusion {
        if f.weight.is_nan() || f.weight < 0.0 {
            return Err(Error::usage("LM weight must be non-negative"));
        }
    }
    let cols = vocab.len();
    if emitter.cols() != cols {
        return Err(Error::usage(format!(
            "emitter has {} columns, vocabulary has {cols}",
            emitter.cols()
        )));
    }
    let blank = vocab.blank_id();
    let outputs: Vec<TokenId> = vocab.output_ids().collect();
    let max_len = config.max_output_len.unwrap_or(usize::MAX);

    let mut hyps: BTreeMap<Vec<TokenId>, f64> = BTreeMap::new();
    hyps.insert(Vec::new(), 0.0);
    for t in 0..frames {
        let mut pending: BTreeMap<Vec<TokenId>, Pending> = hyps
            .into_iter()
            .map(|(p, score)| (p, Pending { score, emitted: 0 }))
            .collect();
        let mut next: BTreeMap<Vec<TokenId>, f64> = BTreeMap::new();
        while let Some(shortest) = pending.keys().map(Vec::len).min() {
            let group: Vec<(Vec<TokenId>, Pending)> = pending
                .iter()
                .filter(|(p, _)| p.len() == shortest)
                .map(|(p, h)| (p.clone(), *h))
                .collect();
            for (prefix, h) in group {
                pending.remove(&prefix);
                let row = checked_row(emitter, &prefix, t, cols)?;
                let advanced = h.score + row[blank];
                if advanced != LOG_ZERO {
                    let slot = next.entry(prefix.clone()).or_insert(LOG_ZERO);
                    *slot = log_add(*slot, advanced);
                }
                if h.emitted >= config.max_symbols_per_frame || prefix.len() >= max_len {
                    continue;
                }
                for &v in &outputs {
                    let mut score = h.score + row[v];
                    if let Some(f) = &fusion {
                        if f.weight > 0.0 {
                            score += f.weight * f.lm.score(&prefix, v);
                        }
                    }
                    if score == LOG_ZERO || score.is_nan() {
                        continue;
                    }
                    let mut child = prefix.clone();
                    child.push(v);
                    let slot = pending.entry(child).or_insert(Pending {
                        score: LOG_ZERO,
                        emitted: 0,
                    });
                    slot.score = log_add(slot.score, score);
                    slot.emitted = slot.emitted.max(h.emitted + 1);
                }
            }
            prune(&mut next, &mut pending, config.beam);
        }
        hyps = next;
    }

    let mut finished: Vec<(Vec<TokenId>, f64)> = hyps.into_iter().collect();
    finished.sort_by(|a, b| {
        b.1.partial_cmp(&a.1)
            .unwrap_or(Ordering::Equal)
            .then_with(|| a.0.cmp(&b.0))
    });
    finished.truncate(config.beam);
    finished
        .into_iter()
        .map(|(ids, score)| Ok(Hypothesis::new(vocab.seq(ids)?, score)))
        .collect()
}

/// Greedy transducer decoding: at each step take the most probable symbol;
/// blank (or reaching a cap) moves to the next frame.
pub fn greedy_decode(
    emitter: &dyn PredictionEmitter,
    frames: usize,
    vocab: &Vocab,
    max_symbols_per_frame: usize,
    max_output_len: Option<usize>,
) -> Result<Hypothesis> {
    if max_symbols_per_frame == 0 {
        return Err(Error::usage("max_symbols_per_frame must be at least 1"));
    }
    let cols = vocab.len();
    let blank = vocab.blank_id();
    let max_len = max_output_len.unwrap_or(usize::MAX);
    let mut prefix = Vec::new();
    let mut score = 0.0;
    for t in 0..frames {
        let mut emitted = 0;
        loop {
            let row = checked_row(emitter, &prefix, t, cols)?;
            let mut masked = row.clone();
            if let Some(m) = vocab.mask_id() {
                masked[m] = LOG_ZERO;
            }
            let best = argmax(&masked);
            if best == blank || emitted >= max_symbols_per_frame || prefix.len() >= max_len {
                score += row[blank];
                break;
            }
            score += row[best];
            prefix.push(best);
            emitted += 1;
        }
    }
    Ok(Hypothesis::new(vocab.seq(prefix)?, score))
}

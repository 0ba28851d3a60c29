//! CTC conditioned on masked-LM embeddings: mask-predict decoding and the
//! sampled training loss.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::ctc::{best_path_decode, ctc_loss};
use crate::error::{Error, Result};
use crate::masklm::{apply_masks, embed, sample_mask, MaskedLm};
use crate::matrix::{EmissionMatrix, FeatureMatrix};
use crate::rng::Rng;
use crate::seq::{Hypothesis, MaskedSeq, TokenSeq};
use crate::vocab::Vocab;

/// Produces per-frame emissions over the masked-LM vocabulary from the
/// encoder output `h` and the embeddings `e` of the current masked
/// hypothesis. Output has `h.rows()` normalized rows.
pub trait ConditionedEmitter: Sync {
    fn emit(&self, h: &FeatureMatrix, e: &FeatureMatrix) -> Result<EmissionMatrix>;
}

/// Per-frame input to the concatenation stand-in: `[h_t ; mean(E)]`.
///
/// Mean pooling over `E` is the simplest position-independent summary of
/// the token side; an empty `E` contributes zeros.
pub fn concat_features(h: &FeatureMatrix, e: &FeatureMatrix) -> Result<FeatureMatrix> {
    if h.rows() == 0 {
        return Err(Error::data("encoder output has no frames"));
    }
    let pooled = e.mean_row();
    let dim = h.dim() + e.dim();
    let mut values = Vec::with_capacity(h.rows() * dim);
    for t in 0..h.rows() {
        values.extend_from_slice(h.row(t));
        values.extend_from_slice(&pooled);
    }
    FeatureMatrix::new(h.rows(), dim, values)
}

/// Linear projection of [`concat_features`] followed by a softmax:
/// `logits[t] = h_t · acoustic + mean(E) · context`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearConcatEmitter {
    cols: usize,
    acoustic: Vec<Vec<f64>>,
    context: Vec<Vec<f64>>,
}

#[derive(Serialize, Deserialize)]
struct LinearConcatFile {
    acoustic: Vec<Vec<f64>>,
    context: Vec<Vec<f64>>,
}

impl LinearConcatEmitter {
    /// `acoustic` is `d_h × C`, `context` is `d_e × C`.
    pub fn new(acoustic: Vec<Vec<f64>>, context: Vec<Vec<f64>>) -> Result<Self> {
        let cols = acoustic.first().map_or(0, Vec::len);
        if cols == 0 {
            return Err(Error::data("acoustic projection is empty"));
        }
        if acoustic.iter().chain(&context).any(|r| r.len() != cols) {
            return Err(Error::data(
                "projection rows must all have the vocabulary width",
            ));
        }
        if acoustic
            .iter()
            .chain(&context)
            .flatten()
            .any(|v| !v.is_finite())
        {
            return Err(Error::data("projection weights must be finite"));
        }
        Ok(Self {
            cols,
            acoustic,
            context,
        })
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        let f: LinearConcatFile = serde_json::from_str(s)?;
        Self::new(f.acoustic, f.context)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json_str(&std::fs::read_to_string(path)?)
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    /// Emissions computed from `h` alone, ignoring any token context.
    pub fn acoustic_only(&self, h: &FeatureMatrix) -> Result<EmissionMatrix> {
        self.project(h, None)
    }

    fn project(&self, h: &FeatureMatrix, pooled: Option<&[f64]>) -> Result<EmissionMatrix> {
        if h.dim() != self.acoustic.len() {
            return Err(Error::usage(format!(
                "encoder dim {} does not match acoustic projection {}",
                h.dim(),
                self.acoustic.len()
            )));
        }
        let mut bias = vec![0.0; self.cols];
        if let Some(p) = pooled {
            for (x, w) in p.iter().zip(&self.context) {
                for (b, wv) in bias.iter_mut().zip(w) {
                    *b += x * wv;
                }
            }
        }
        let mut logits = Vec::with_capacity(h.rows() * self.cols);
        for t in 0..h.rows() {
            let mut row = bias.clone();
            for (x, w) in h.row(t).iter().zip(&self.acoustic) {
                for (r, wv) in row.iter_mut().zip(w) {
                    *r += x * wv;
                }
            }
            logits.extend(row);
        }
        EmissionMatrix::from_logits(h.rows(), self.cols, logits)
    }
}

impl ConditionedEmitter for LinearConcatEmitter {
    fn emit(&self, h: &FeatureMatrix, e: &FeatureMatrix) -> Result<EmissionMatrix> {
        if e.dim() != self.context.len() {
            return Err(Error::usage(format!(
                "embedding dim {} does not match context projection {}",
                e.dim(),
                self.context.len()
            )));
        }
        self.project(h, Some(&e.mean_row()))
    }
}

/// One iteration of mask-predict decoding.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RefinementStep {
    /// 1-based iteration index.
    pub iteration: usize,
    /// Masked sequence fed to the masked LM at this iteration.
    pub input: MaskedSeq,
    pub hypothesis: Vec<usize>,
    pub confidences: Vec<f64>,
    /// Number of tokens of `hypothesis` masked for the next iteration.
    pub n_mask: usize,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct RefinementTrace {
    pub steps: Vec<RefinementStep>,
}

impl RefinementTrace {
    pub fn n_mask_schedule(&self) -> Vec<usize> {
        self.steps.iter().map(|s| s.n_mask).collect()
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(self).expect("trace serializes")
    }
}

#[derive(Debug, Clone)]
pub struct BertCtcOutput {
    pub hypothesis: Hypothesis,
    /// Embeddings of the final, fully observed hypothesis.
    pub embeddings: FeatureMatrix,
    pub trace: RefinementTrace,
}

/// `floor(len * (K - k) / K)` for 1-based iteration `k`.
pub fn mask_count(len: usize, iterations: usize, k: usize) -> usize {
    len * (iterations - k) / iterations
}

/// Positions of the `n_mask` least confident tokens; ties mask the earlier
/// position first. Returned in ascending order.
pub fn lowest_confidence_positions(confidences: &[f64], n_mask: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..confidences.len()).collect();
    order.sort_by(|&a, &b| {
        confidences[a]
            .partial_cmp(&confidences[b])
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.cmp(&b))
    });
    let mut picked: Vec<usize> = order.into_iter().take(n_mask).collect();
    picked.sort_unstable();
    picked
}

/// Mask-predict decoding over `iterations` rounds, starting from an
/// all-mask sequence of length `init_len`.
///
/// Each round embeds the current masked sequence, emits, decodes the best
/// path and re-masks the least confident tokens of the new hypothesis on a
/// linearly decaying schedule. An empty intermediate hypothesis restarts
/// the next round from an all-mask sequence of length `init_len`.
pub fn bertctc_decode(
    h: &FeatureMatrix,
    iterations: usize,
    emitter: &dyn ConditionedEmitter,
    lm: &dyn MaskedLm,
    init_len: usize,
) -> Result<BertCtcOutput> {
    if iterations == 0 {
        return Err(Error::usage("iteration count must be at least 1"));
    }
    let vocab = lm.vocab();
    let mask = vocab
        .mask_id()
        .ok_or_else(|| Error::usage("masked LM vocabulary has no mask token"))?;
    let all_masked = MaskedSeq::all_masked(init_len, mask);

    if init_len == 0 {
        let step = RefinementStep {
            iteration: 1,
            input: all_masked,
            hypothesis: Vec::new(),
            confidences: Vec::new(),
            n_mask: 0,
        };
        return Ok(BertCtcOutput {
            hypothesis: Hypothesis::with_confidences(vocab.seq(vec![])?, 0.0, vec![]),
            embeddings: FeatureMatrix::empty(lm.dim()),
            trace: RefinementTrace { steps: vec![step] },
        });
    }

    let mut input = all_masked.clone();
    let mut trace = RefinementTrace::default();
    let mut hypothesis = None;
    for k in 1..=iterations {
        let e = embed(lm, &input)?;
        let emissions = emitter.emit(h, &e)?;
        check_emissions(&emissions, h, vocab)?;
        let hyp = best_path_decode(&emissions, vocab)?;
        let confidences = hyp.confidences.clone().unwrap_or_default();
        let n_mask = mask_count(hyp.tokens.len(), iterations, k);
        let next = if hyp.tokens.is_empty() {
            all_masked.clone()
        } else {
            let positions = lowest_confidence_positions(&confidences, n_mask);
            apply_masks(&hyp.tokens, &positions, vocab)?
        };
        trace.steps.push(RefinementStep {
            iteration: k,
            input: std::mem::replace(&mut input, next),
            hypothesis: hyp.ids().to_vec(),
            confidences,
            n_mask,
        });
        hypothesis = Some(hyp);
    }
    let hypothesis = hypothesis.expect("at least one iteration ran");
    let final_input = MaskedSeq::new(hypothesis.ids().to_vec(), mask);
    let embeddings = if final_input.is_empty() {
        FeatureMatrix::empty(lm.dim())
    } else {
        embed(lm, &final_input)?
    };
    Ok(BertCtcOutput {
        hypothesis,
        embeddings,
        trace,
    })
}

fn check_emissions(e: &EmissionMatrix, h: &FeatureMatrix, vocab: &Vocab) -> Result<()> {
    if e.rows() != h.rows() || e.cols() != vocab.len() || !e.is_normalized() {
        return Err(Error::data(format!(
            "conditioned emitter returned {}x{} (normalized: {}), expected {}x{} normalized",
            e.rows(),
            e.cols(),
            e.is_normalized(),
            h.rows(),
            vocab.len()
        )));
    }
    Ok(())
}

/// CTC loss of `w_b` under emissions conditioned on a given masked input.
pub fn bertctc_loss_with_mask(
    h: &FeatureMatrix,
    w_b: &TokenSeq,
    masked: &MaskedSeq,
    emitter: &dyn ConditionedEmitter,
    lm: &dyn MaskedLm,
) -> Result<f64> {
    let e = embed(lm, masked)?;
    let emissions = emitter.emit(h, &e)?;
    check_emissions(&emissions, h, lm.vocab())?;
    ctc_loss(&emissions, w_b, lm.vocab())
}

/// Single-sample estimate of the training loss: sample one mask of `w_b`,
/// condition on it, and score `w_b` with CTC. `+inf` when `w_b` cannot be
/// aligned to the frames of `h`.
pub fn bertctc_loss(
    h: &FeatureMatrix,
    w_b: &TokenSeq,
    emitter: &dyn ConditionedEmitter,
    lm: &dyn MaskedLm,
    rng: &mut Rng,
) -> Result<f64> {
    let masked = sample_mask(w_b, lm.vocab(), rng)?;
    bertctc_loss_with_mask(h, w_b, &masked, emitter, lm)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn linear_decay_schedule() {
        let got: Vec<usize> = (1..=5).map(|k| mask_count(7, 5, k)).collect();
        assert_eq!(got, vec![5, 4, 2, 1, 0]);
        assert_eq!(mask_count(0, 3, 1), 0);
        assert_eq!(mask_count(10, 1, 1), 0);
    }

    #[test]
    fn ties_mask_earlier_positions() {
        assert_eq!(
            lowest_confidence_positions(&[0.5, 0.2, 0.5, 0.2], 1),
            vec![1]
        );
        assert_eq!(
            lowest_confidence_positions(&[0.5, 0.2, 0.5, 0.2], 3),
            vec![0, 1, 3]
        );
        assert_eq!(
            lowest_confidence_positions(&[0.9, 0.1], 0),
            Vec::<usize>::new()
        );
    }

    #[test]
    fn concat_pools_embeddings() {
        let h = FeatureMatrix::from_rows(&[vec![1.0], vec![2.0]], 1).unwrap();
        let e = FeatureMatrix::from_rows(&[vec![0.0, 2.0], vec![2.0, 4.0]], 2).unwrap();
        let c = concat_features(&h, &e).unwrap();
        assert_eq!(c.row(0), &[1.0, 1.0, 3.0]);
        assert_eq!(c.row(1), &[2.0, 1.0, 3.0]);
        let empty = concat_features(&h, &FeatureMatrix::empty(2)).unwrap();
        assert_eq!(empty.row(1), &[2.0, 0.0, 0.0]);
    }
}

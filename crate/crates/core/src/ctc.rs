//! CTC loss by forward-backward recursion, its gradient, greedy best-path
//! decoding and per-token confidence.
//!
//! Gradients are taken with respect to the log-probability entries of the
//! emission matrix. For emissions produced by a softmax over logits `x`,
//! the chain rule is `dL/dx[t][v] = g[t][v] - p[t][v] * sum_v' g[t][v']`,
//! implemented by [`grad_wrt_logits`]; for the CTC loss that reduces to the
//! familiar `p - gamma`.

use crate::collapse::ctc_collapse;
use crate::error::{Error, Result};
use crate::logmath::{log_add, log_softmax_backward, LOG_ZERO};
use crate::matrix::EmissionMatrix;
use crate::seq::{AlignmentSeq, Hypothesis, TokenSeq};
use crate::vocab::{TokenId, Vocab};

/// Forward variables over the blank-augmented target `(ε, w1, ε, ..., wN, ε)`.
#[derive(Debug, Clone)]
pub struct CtcForwardTable {
    frames: usize,
    states: usize,
    alpha: Vec<f64>,
    target: TokenSeq,
}

impl CtcForwardTable {
    pub fn alpha(&self, t: usize, s: usize) -> f64 {
        self.alpha[t * self.states + s]
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    /// `2N + 1`.
    pub fn states(&self) -> usize {
        self.states
    }

    pub fn target(&self) -> &TokenSeq {
        &self.target
    }

    /// `log p(w | e)`, `-inf` when no alignment exists.
    pub fn log_likelihood(&self) -> f64 {
        let last = self.frames - 1;
        let mut ll = self.alpha(last, self.states - 1);
        if self.states > 1 {
            ll = log_add(ll, self.alpha(last, self.states - 2));
        }
        ll
    }
}

fn check_inputs(e: &EmissionMatrix, w: &TokenSeq, vocab: &Vocab) -> Result<()> {
    if e.cols() != vocab.len() {
        return Err(Error::usage(format!(
            "emission has {} columns but the vocabulary has {} entries",
            e.cols(),
            vocab.len()
        )));
    }
    if !e.is_normalized() {
        return Err(Error::usage("CTC expects row-normalized emissions"));
    }
    for &id in w.ids() {
        if id >= vocab.len() || id == vocab.blank_id() {
            return Err(Error::usage(format!("invalid target id {id}")));
        }
    }
    Ok(())
}

fn extended_labels(w: &TokenSeq, blank: TokenId) -> Vec<TokenId> {
    let mut ext = Vec::with_capacity(2 * w.len() + 1);
    ext.push(blank);
    for &id in w.ids() {
        ext.push(id);
        ext.push(blank);
    }
    ext
}

/// State `s` may be entered from `s - 2` when it is a label that differs
/// from the previous label.
fn can_skip(ext: &[TokenId], s: usize, blank: TokenId) -> bool {
    s >= 2 && ext[s] != blank && ext[s] != ext[s - 2]
}

pub fn ctc_forward(e: &EmissionMatrix, w: &TokenSeq, vocab: &Vocab) -> Result<CtcForwardTable> {
    check_inputs(e, w, vocab)?;
    let blank = vocab.blank_id();
    let ext = extended_labels(w, blank);
    let states = ext.len();
    let frames = e.rows();
    let mut alpha = vec![LOG_ZERO; frames * states];
    alpha[0] = e.get(0, blank);
    if states > 1 {
        alpha[1] = e.get(0, ext[1]);
    }
    for t in 1..frames {
        let (prev, cur) = alpha.split_at_mut(t * states);
        let prev = &prev[(t - 1) * states..];
        for s in 0..states {
            let mut acc = prev[s];
            if s >= 1 {
                acc = log_add(acc, prev[s - 1]);
            }
            if can_skip(&ext, s, blank) {
                acc = log_add(acc, prev[s - 2]);
            }
            cur[s] = if acc == LOG_ZERO {
                LOG_ZERO
            } else {
                acc + e.get(t, ext[s])
            };
        }
    }
    Ok(CtcForwardTable {
        frames,
        states,
        alpha,
        target: w.clone(),
    })
}

fn ctc_backward(e: &EmissionMatrix, ext: &[TokenId], blank: TokenId) -> Vec<f64> {
    let states = ext.len();
    let frames = e.rows();
    let mut beta = vec![LOG_ZERO; frames * states];
    let last = frames - 1;
    beta[last * states + states - 1] = e.get(last, ext[states - 1]);
    if states > 1 {
        beta[last * states + states - 2] = e.get(last, ext[states - 2]);
    }
    for t in (0..last).rev() {
        for s in 0..states {
            let next = &beta[(t + 1) * states..(t + 2) * states];
            let mut acc = next[s];
            if s + 1 < states {
                acc = log_add(acc, next[s + 1]);
            }
            if s + 2 < states && can_skip(ext, s + 2, blank) {
                acc = log_add(acc, next[s + 2]);
            }
            beta[t * states + s] = if acc == LOG_ZERO {
                LOG_ZERO
            } else {
                acc + e.get(t, ext[s])
            };
        }
    }
    beta
}

/// Negative log-likelihood of `w`; `+inf` when `w` cannot be aligned to
/// `e.rows()` frames.
pub fn ctc_loss(e: &EmissionMatrix, w: &TokenSeq, vocab: &Vocab) -> Result<f64> {
    Ok(-ctc_forward(e, w, vocab)?.log_likelihood())
}

/// Gradient of [`ctc_loss`] with respect to every entry of `e`, row-major
/// in the layout of `e`. Equals minus the posterior occupancy of each
/// symbol at each frame.
pub fn ctc_grad(e: &EmissionMatrix, w: &TokenSeq, vocab: &Vocab) -> Result<Vec<f64>> {
    let fwd = ctc_forward(e, w, vocab)?;
    let ll = fwd.log_likelihood();
    if ll == LOG_ZERO {
        return Err(Error::Domain(
            "target cannot be aligned to the given number of frames".into(),
        ));
    }
    let blank = vocab.blank_id();
    let ext = extended_labels(w, blank);
    let beta = ctc_backward(e, &ext, blank);
    let states = ext.len();
    let mut grad = vec![0.0; e.rows() * e.cols()];
    for t in 0..e.rows() {
        for (s, &label) in ext.iter().enumerate() {
            let a = fwd.alpha(t, s);
            let b = beta[t * states + s];
            if a == LOG_ZERO || b == LOG_ZERO {
                continue;
            }
            // alpha and beta both include the emission at (t, s)
            let occupancy = (a + b - e.get(t, label) - ll).exp();
            grad[t * e.cols() + label] -= occupancy;
        }
    }
    Ok(grad)
}

/// Chain rule through a row-wise log-softmax: converts a gradient with
/// respect to log-probabilities into one with respect to the logits that
/// produced `e`.
pub fn grad_wrt_logits(e: &EmissionMatrix, grad: &[f64]) -> Vec<f64> {
    log_softmax_backward(e.values(), grad, e.cols())
}

/// Framewise argmax over output-eligible columns (blank plus real tokens;
/// the mask column, if any, is never chosen). Ties go to the lower index.
pub fn best_path(e: &EmissionMatrix, vocab: &Vocab) -> AlignmentSeq {
    let mask = vocab.mask_id();
    let ids = (0..e.rows())
        .map(|t| {
            let row = e.row(t);
            let mut best: Option<usize> = None;
            for (v, &x) in row.iter().enumerate() {
                if Some(v) == mask {
                    continue;
                }
                if best.is_none_or(|b| x > row[b]) {
                    best = Some(v);
                }
            }
            best.unwrap_or(vocab.blank_id())
        })
        .collect();
    AlignmentSeq(ids)
}

/// Frame indices of each emitted token: the `n`-th maximal run of identical
/// non-blank ids in `path` corresponds to the `n`-th collapsed token.
pub fn token_segments(path: &AlignmentSeq, blank: TokenId) -> Vec<(TokenId, Vec<usize>)> {
    let mut segments: Vec<(TokenId, Vec<usize>)> = Vec::new();
    let mut prev: Option<TokenId> = None;
    for (t, &id) in path.ids().iter().enumerate() {
        if id != blank {
            if prev == Some(id) {
                if let Some(last) = segments.last_mut() {
                    last.1.push(t);
                }
            } else {
                segments.push((id, vec![t]));
            }
        }
        prev = Some(id);
    }
    segments
}

/// Probability of the `n`-th token (0-based) of the hypothesis collapsed
/// from `best_path`: the maximum emission probability of that token over
/// the frames of its run.
pub fn token_confidence(
    e: &EmissionMatrix,
    best_path: &AlignmentSeq,
    n: usize,
    vocab: &Vocab,
) -> Result<f64> {
    let segments = token_segments(best_path, vocab.blank_id());
    let (token, frames) = segments.get(n).ok_or_else(|| {
        Error::usage(format!(
            "token position {n} out of range for a {}-token hypothesis",
            segments.len()
        ))
    })?;
    Ok(segment_confidence(e, *token, frames))
}

fn segment_confidence(e: &EmissionMatrix, token: TokenId, frames: &[usize]) -> f64 {
    frames
        .iter()
        .map(|&t| e.get(t, token))
        .fold(LOG_ZERO, f64::max)
        .exp()
}

/// Greedy CTC decoding. The score is the log-probability of the single best
/// alignment, not the marginal probability of the output sequence.
pub fn best_path_decode(e: &EmissionMatrix, vocab: &Vocab) -> Result<Hypothesis> {
    if e.cols() != vocab.len() {
        return Err(Error::usage(format!(
            "emission has {} columns but the vocabulary has {} entries",
            e.cols(),
            vocab.len()
        )));
    }
    let path = best_path(e, vocab);
    let score = path
        .ids()
        .iter()
        .enumerate()
        .map(|(t, &v)| e.get(t, v))
        .sum();
    let tokens = ctc_collapse(&path, vocab)?;
    let confidences = token_segments(&path, vocab.blank_id())
        .iter()
        .map(|(token, frames)| segment_confidence(e, *token, frames))
        .collect();
    Ok(Hypothesis::with_confidences(tokens, score, confidences))
}

#[cfg(test)]
mod tests {
    use super::*;

    // ids: 0 = blank, 1 = a, 2 = b
    fn vocab() -> Vocab {
        Vocab::from_tokens("t", &["<b>", "a", "b"], "<b>", None).unwrap()
    }

    fn uniform(frames: usize) -> EmissionMatrix {
        EmissionMatrix::from_logits(frames, 3, vec![0.0; frames * 3]).unwrap()
    }

    #[test]
    fn single_frame_single_token() {
        let v = vocab();
        let e = EmissionMatrix::from_probs(&[vec![0.2, 0.5, 0.3]]).unwrap();
        let w = v.seq(vec![1]).unwrap();
        assert!((ctc_loss(&e, &w, &v).unwrap() + e.get(0, 1)).abs() < 1e-15);
        let g = ctc_grad(&e, &w, &v).unwrap();
        assert_eq!(g, vec![0.0, -1.0, 0.0]);
    }

    #[test]
    fn uniform_two_frames_three_alignments() {
        let v = vocab();
        let loss = ctc_loss(&uniform(2), &v.seq(vec![1]).unwrap(), &v).unwrap();
        assert!((loss - 3f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn unique_alignment() {
        let v = vocab();
        let e = EmissionMatrix::from_probs(&[vec![0.1, 0.6, 0.3], vec![0.2, 0.3, 0.5]]).unwrap();
        let loss = ctc_loss(&e, &v.seq(vec![1, 2]).unwrap(), &v).unwrap();
        assert!((loss + e.get(0, 1) + e.get(1, 2)).abs() < 1e-12);
    }

    #[test]
    fn repeated_label_needs_blank() {
        let v = vocab();
        let w = v.seq(vec![1, 1]).unwrap();
        assert_eq!(ctc_loss(&uniform(2), &w, &v).unwrap(), f64::INFINITY);
        assert!(matches!(
            ctc_grad(&uniform(2), &w, &v),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn empty_target_is_all_blank() {
        let v = vocab();
        let e = EmissionMatrix::from_probs(&[vec![0.5, 0.3, 0.2], vec![0.25, 0.5, 0.25]]).unwrap();
        let loss = ctc_loss(&e, &v.seq(vec![]).unwrap(), &v).unwrap();
        assert!((loss + 0.5f64.ln() + 0.25f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn column_mismatch_is_usage_error() {
        let v = vocab();
        let e = EmissionMatrix::from_logits(1, 4, vec![0.0; 4]).unwrap();
        assert!(matches!(
            ctc_loss(&e, &v.seq(vec![1]).unwrap(), &v),
            Err(Error::Usage(_))
        ));
    }

    #[test]
    fn symmetric_targets_swap_gradient_columns() {
        let v = vocab();
        let e = uniform(3);
        let ga = ctc_grad(&e, &v.seq(vec![1]).unwrap(), &v).unwrap();
        let gb = ctc_grad(&e, &v.seq(vec![2]).unwrap(), &v).unwrap();
        for t in 0..3 {
            assert!((ga[t * 3] - gb[t * 3]).abs() < 1e-12);
            assert!((ga[t * 3 + 1] - gb[t * 3 + 2]).abs() < 1e-12);
            assert!((ga[t * 3 + 2] - gb[t * 3 + 1]).abs() < 1e-12);
        }
    }

    #[test]
    fn best_path_merges_and_drops_blank() {
        let v = vocab();
        let e = EmissionMatrix::from_probs(&[
            vec![0.1, 0.8, 0.1],
            vec![0.2, 0.6, 0.2],
            vec![0.7, 0.2, 0.1],
            vec![0.1, 0.2, 0.7],
        ])
        .unwrap();
        let hyp = best_path_decode(&e, &v).unwrap();
        assert_eq!(hyp.ids(), &[1, 2]);
        let want = 0.8f64.ln() + 0.6f64.ln() + 0.7f64.ln() + 0.7f64.ln();
        assert!((hyp.score - want).abs() < 1e-12);
        let conf = hyp.confidences.unwrap();
        assert!((conf[0] - 0.8).abs() < 1e-12);
        assert!((conf[1] - 0.7).abs() < 1e-12);
    }

    #[test]
    fn all_blank_path_gives_empty_hypothesis() {
        let v = vocab();
        let e = EmissionMatrix::from_probs(&vec![vec![0.9, 0.05, 0.05]; 3]).unwrap();
        let hyp = best_path_decode(&e, &v).unwrap();
        assert!(hyp.tokens.is_empty());
        assert_eq!(hyp.confidences, Some(vec![]));
    }

    #[test]
    fn mask_column_is_never_decoded() {
        let v = Vocab::from_tokens("m", &["<b>", "a", "[MASK]"], "<b>", Some("[MASK]")).unwrap();
        let e = EmissionMatrix::from_probs(&[vec![0.1, 0.3, 0.6]]).unwrap();
        assert_eq!(best_path_decode(&e, &v).unwrap().ids(), &[1]);
    }

    #[test]
    fn confidence_is_max_over_segment() {
        let v = vocab();
        let e = EmissionMatrix::from_probs(&[
            vec![0.1, 0.6, 0.3],
            vec![0.1, 0.8, 0.1],
            vec![0.9, 0.05, 0.05],
        ])
        .unwrap();
        let path = AlignmentSeq(vec![1, 1, 0]);
        assert!((token_confidence(&e, &path, 0, &v).unwrap() - 0.8).abs() < 1e-12);
        assert!(matches!(
            token_confidence(&e, &path, 1, &v),
            Err(Error::Usage(_))
        ));
        let single = EmissionMatrix::from_probs(&[vec![0.05, 0.9, 0.05]]).unwrap();
        let p = token_confidence(&single, &AlignmentSeq(vec![1]), 0, &v).unwrap();
        assert!((p - 0.9).abs() < 1e-12);
    }

    #[test]
    fn same_token_in_two_runs_gets_two_segments() {
        let segs = token_segments(&AlignmentSeq(vec![1, 0, 1, 1, 2]), 0);
        assert_eq!(segs, vec![(1, vec![0]), (1, vec![2, 3]), (2, vec![4])]);
    }
}

//! Mask-predict refinement over the masked-LM vocabulary followed by
//! transducer decoding over the ASR vocabulary, and the interpolated loss.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::bertctc::{bertctc_decode, concat_features, BertCtcOutput, ConditionedEmitter};
use crate::bridge::{detokenize, normalize, NormalizeFlags};
use crate::ctc::ctc_loss;
use crate::error::{Error, Result};
use crate::logmath::log_softmax_in_place;
use crate::masklm::{embed, sample_mask, MaskedLm};
use crate::matrix::{FeatureMatrix, JointLattice};
use crate::rng::Rng;
use crate::seq::{Hypothesis, MaskedSeq, TokenSeq};
use crate::transducer::{
    beam_search, build_lattice, rnnt_loss, BeamConfig, Fusion, PredictionEmitter,
};
use crate::vocab::{TokenId, Vocab};

pub const DEFAULT_LAMBDA: f64 = 0.5;
pub const DEFAULT_ITERATIONS: usize = 10;
pub const DEFAULT_BEAM: usize = 5;

/// Joint network over conditioned features: given one frame of
/// `[h_t ; pooled E]` and the emitted ASR-vocabulary prefix, returns a
/// normalized log-probability row over the ASR vocabulary (blank included).
pub trait BectraJointEmitter: Sync {
    fn cols(&self) -> usize;
    fn emit_row(&self, frame: &[f64], prefix: &[TokenId]) -> Vec<f64>;
}

/// Binds a joint emitter to a fixed feature matrix so it can drive the
/// transducer search and lattice builder.
pub struct ConditionedJoint<'a> {
    joint: &'a dyn BectraJointEmitter,
    features: &'a FeatureMatrix,
}

impl<'a> ConditionedJoint<'a> {
    pub fn new(joint: &'a dyn BectraJointEmitter, features: &'a FeatureMatrix) -> Self {
        Self { joint, features }
    }

    pub fn frames(&self) -> usize {
        self.features.rows()
    }

    /// Full lattice for target `w`, the form consumed by the loss.
    pub fn lattice(&self, w: &TokenSeq) -> Result<JointLattice> {
        build_lattice(self, self.frames(), w)
    }
}

impl PredictionEmitter for ConditionedJoint<'_> {
    fn cols(&self) -> usize {
        self.joint.cols()
    }

    fn step(&self, prefix: &[TokenId], t: usize) -> Vec<f64> {
        self.joint.emit_row(self.features.row(t), prefix)
    }
}

/// Linear joint network: `logits = frame · weights + bigram[prev]`, where
/// `prev` is the last prefix token or the blank id for an empty prefix.
#[derive(Debug, Clone, PartialEq)]
pub struct TableJointEmitter {
    cols: usize,
    start: TokenId,
    weights: Vec<Vec<f64>>,
    bigram: Option<Vec<Vec<f64>>>,
}

#[derive(Serialize, Deserialize)]
struct TableJointFile {
    weights: Vec<Vec<f64>>,
    #[serde(default)]
    bigram: Option<Vec<Vec<f64>>>,
}

impl TableJointEmitter {
    /// `weights` is `dim × C`; `bigram`, when given, is `C × C`.
    pub fn new(
        weights: Vec<Vec<f64>>,
        bigram: Option<Vec<Vec<f64>>>,
        vocab: &Vocab,
    ) -> Result<Self> {
        let cols = vocab.len();
        if weights.is_empty() || weights.iter().any(|r| r.len() != cols) {
            return Err(Error::data(format!("joint weights must be dim x {cols}")));
        }
        if let Some(b) = &bigram {
            if b.len() != cols || b.iter().any(|r| r.len() != cols) {
                return Err(Error::data(format!("joint bigram must be {cols}x{cols}")));
            }
        }
        let all = weights.iter().chain(bigram.iter().flatten()).flatten();
        if all.into_iter().any(|v| !v.is_finite()) {
            return Err(Error::data("joint parameters must be finite"));
        }
        Ok(Self {
            cols,
            start: vocab.blank_id(),
            weights,
            bigram,
        })
    }

    pub fn from_json_str(s: &str, vocab: &Vocab) -> Result<Self> {
        let f: TableJointFile = serde_json::from_str(s)?;
        Self::new(f.weights, f.bigram, vocab)
    }

    pub fn load(path: impl AsRef<Path>, vocab: &Vocab) -> Result<Self> {
        Self::from_json_str(&std::fs::read_to_string(path)?, vocab)
    }

    /// Expected width of a feature frame.
    pub fn dim(&self) -> usize {
        self.weights.len()
    }
}

impl BectraJointEmitter for TableJointEmitter {
    fn cols(&self) -> usize {
        self.cols
    }

    fn emit_row(&self, frame: &[f64], prefix: &[TokenId]) -> Vec<f64> {
        assert_eq!(frame.len(), self.weights.len(), "feature width mismatch");
        let mut row = match &self.bigram {
            Some(b) => b[prefix.last().copied().unwrap_or(self.start)].clone(),
            None => vec![0.0; self.cols],
        };
        for (x, w) in frame.iter().zip(&self.weights) {
            for (r, wv) in row.iter_mut().zip(w) {
                *r += x * wv;
            }
        }
        log_softmax_in_place(&mut row).expect("finite joint logits");
        row
    }
}

/// Collaborators of a BECTRA model.
#[derive(Clone, Copy)]
pub struct Bectra<'a> {
    pub emitter: &'a dyn ConditionedEmitter,
    pub lm: &'a dyn MaskedLm,
    pub joint: &'a dyn BectraJointEmitter,
    pub vocab_asr: &'a Vocab,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BectraDecodeConfig {
    pub iterations: usize,
    pub beam: BeamConfig,
}

impl Default for BectraDecodeConfig {
    fn default() -> Self {
        Self {
            iterations: DEFAULT_ITERATIONS,
            beam: BeamConfig::with_beam(DEFAULT_BEAM),
        }
    }
}

#[derive(Debug, Clone)]
pub struct BectraOutput {
    /// Best hypothesis over the ASR vocabulary.
    pub hypothesis: Hypothesis,
    /// Refinement result over the masked-LM vocabulary.
    pub intermediate: BertCtcOutput,
}

impl Bectra<'_> {
    fn check_joint(&self) -> Result<()> {
        if self.joint.cols() != self.vocab_asr.len() {
            return Err(Error::usage(format!(
                "joint emitter has {} columns, ASR vocabulary has {}",
                self.joint.cols(),
                self.vocab_asr.len()
            )));
        }
        Ok(())
    }

    /// Refines a masked-LM hypothesis, conditions the encoder output on its
    /// embeddings, and beam-searches the ASR vocabulary.
    pub fn decode(
        &self,
        h: &FeatureMatrix,
        init_len: usize,
        config: &BectraDecodeConfig,
        fusion: Option<Fusion<'_>>,
    ) -> Result<BectraOutput> {
        self.check_joint()?;
        if config.beam.beam == 0 {
            return Err(Error::usage("beam size must be at least 1"));
        }
        let intermediate = bertctc_decode(h, config.iterations, self.emitter, self.lm, init_len)?;
        let features = concat_features(h, &intermediate.embeddings)?;
        let source = ConditionedJoint::new(self.joint, &features);
        let hyps = beam_search(
            &source,
            features.rows(),
            self.vocab_asr,
            &config.beam,
            fusion,
        )?;
        let hypothesis = hyps
            .into_iter()
            .next()
            .ok_or_else(|| Error::data("beam search produced no hypothesis"))?;
        Ok(BectraOutput {
            hypothesis,
            intermediate,
        })
    }

    /// Both loss terms under one explicit mask of `w_b`.
    pub fn loss_with_mask(
        &self,
        h: &FeatureMatrix,
        w_a: &TokenSeq,
        w_b: &TokenSeq,
        masked: &MaskedSeq,
        lambda: f64,
    ) -> Result<LossBreakdown> {
        self.check_joint()?;
        if !(0.0..=1.0).contains(&lambda) {
            return Err(Error::usage(format!("lambda {lambda} outside [0, 1]")));
        }
        let e = embed(self.lm, masked)?;
        let emissions = self.emitter.emit(h, &e)?;
        let bertctc = ctc_loss(&emissions, w_b, self.lm.vocab())?;
        let features = concat_features(h, &e)?;
        let lattice = ConditionedJoint::new(self.joint, &features).lattice(w_a)?;
        let transducer = rnnt_loss(&lattice, w_a, self.vocab_asr)?;
        // a zero weight drops its term so an infinite loss cannot leak in as NaN
        let total = if lambda == 0.0 {
            bertctc
        } else if lambda == 1.0 {
            transducer
        } else {
            (1.0 - lambda) * bertctc + lambda * transducer
        };
        Ok(LossBreakdown {
            total,
            bertctc,
            transducer,
        })
    }

    /// `(1 - lambda) * L_bertctc + lambda * L_transducer` with a single
    /// sampled mask of `w_b` shared by both terms. `w_a` and `w_b` must
    /// spell the same words after `flags` normalization.
    pub fn loss(
        &self,
        h: &FeatureMatrix,
        w_a: &TokenSeq,
        w_b: &TokenSeq,
        lambda: f64,
        flags: NormalizeFlags,
        rng: &mut Rng,
    ) -> Result<LossBreakdown> {
        let text_a = normalize(&detokenize(w_a, self.vocab_asr)?, flags);
        let text_b = normalize(&detokenize(w_b, self.lm.vocab())?, flags);
        if text_a != text_b {
            return Err(Error::data(format!(
                "ASR target {text_a:?} and masked-LM target {text_b:?} differ"
            )));
        }
        let masked = sample_mask(w_b, self.lm.vocab(), rng)?;
        self.loss_with_mask(h, w_a, w_b, &masked, lambda)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LossBreakdown {
    pub total: f64,
    pub bertctc: f64,
    pub transducer: f64,
}

/// Free-function form of [`Bectra::decode`].
#[allow(clippy::too_many_arguments)]
pub fn bectra_decode(
    h: &FeatureMatrix,
    iterations: usize,
    beam: usize,
    emitter: &dyn ConditionedEmitter,
    lm: &dyn MaskedLm,
    joint: &dyn BectraJointEmitter,
    vocab_asr: &Vocab,
    init_len: usize,
    fusion: Option<Fusion<'_>>,
) -> Result<Hypothesis> {
    let model = Bectra {
        emitter,
        lm,
        joint,
        vocab_asr,
    };
    let config = BectraDecodeConfig {
        iterations,
        beam: BeamConfig::with_beam(beam),
    };
    Ok(model.decode(h, init_len, &config, fusion)?.hypothesis)
}

/// Free-function form of [`Bectra::loss`] returning the total.
#[allow(clippy::too_many_arguments)]
pub fn bectra_loss(
    h: &FeatureMatrix,
    w_a: &TokenSeq,
    w_b: &TokenSeq,
    lambda: f64,
    emitter: &dyn ConditionedEmitter,
    lm: &dyn MaskedLm,
    joint: &dyn BectraJointEmitter,
    vocab_asr: &Vocab,
    flags: NormalizeFlags,
    rng: &mut Rng,
) -> Result<f64> {
    let model = Bectra {
        emitter,
        lm,
        joint,
        vocab_asr,
    };
    Ok(model.loss(h, w_a, w_b, lambda, flags, rng)?.total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::logmath::logsumexp;

    fn asr_vocab() -> Vocab {
        Vocab::from_tokens("asr", &["<b>", "a", "##b"], "<b>", None).unwrap()
    }

    #[test]
    fn table_joint_rows_are_normalized_and_prefix_aware() {
        let v = asr_vocab();
        let j = TableJointEmitter::new(
            vec![vec![1.0, 0.0, -1.0], vec![0.5, 0.5, 0.5]],
            Some(vec![
                vec![0.0, 2.0, 0.0],
                vec![0.0, 0.0, 3.0],
                vec![1.0, 0.0, 0.0],
            ]),
            &v,
        )
        .unwrap();
        let a = j.emit_row(&[0.3, -0.2], &[]);
        let b = j.emit_row(&[0.3, -0.2], &[1]);
        assert!(logsumexp(&a).unwrap().abs() < 1e-12);
        assert!(b[2] > a[2]);
        assert!(TableJointEmitter::new(vec![vec![0.0; 2]], None, &v).is_err());
    }

    #[test]
    fn joint_json_round_trip() {
        let v = asr_vocab();
        let j = TableJointEmitter::from_json_str(r#"{"weights": [[0, 1, 2]]}"#, &v).unwrap();
        assert_eq!(j.dim(), 1);
        assert!(j.bigram.is_none());
    }
}

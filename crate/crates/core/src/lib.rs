//! Alignment-lattice losses, gradients and decoders for CTC, transducers,
//! masked-LM-conditioned CTC (BERT-CTC) and its transducer extension
//! (BECTRA).
//!
//! Neural components sit behind small deterministic traits
//! ([`ConditionedEmitter`], [`MaskedLm`], [`PredictionEmitter`],
//! [`BectraJointEmitter`]) with table-driven implementations, so every
//! dynamic program can be checked against brute-force enumeration.

pub mod bectra;
pub mod bertctc;
pub mod bridge;
pub mod collapse;
pub mod ctc;
pub mod error;
pub mod fixtures;
pub mod logmath;
pub mod masklm;
pub mod matrix;
pub mod metrics;
pub mod rng;
pub mod seq;
pub mod transducer;
pub mod vocab;

pub use bectra::{
    bectra_decode, bectra_loss, Bectra, BectraDecodeConfig, BectraJointEmitter, BectraOutput,
    ConditionedJoint, LossBreakdown, TableJointEmitter,
};
pub use bertctc::{
    bertctc_decode, bertctc_loss, bertctc_loss_with_mask, concat_features, BertCtcOutput,
    ConditionedEmitter, LinearConcatEmitter, RefinementStep, RefinementTrace,
};
pub use bridge::{detokenize, estimate_length, normalize, retokenize, tokenize, NormalizeFlags};
pub use collapse::{ctc_collapse, ctc_inverse_enumerate, tra_collapse, tra_inverse_enumerate};
pub use ctc::{best_path, best_path_decode, ctc_forward, ctc_grad, ctc_loss, grad_wrt_logits};
pub use error::{Error, Result};
pub use logmath::{argmax, log_add, log_softmax_backward, logsumexp, LOG_ZERO};
pub use masklm::{apply_masks, sample_mask, MaskedLm, TableMaskedLm};
pub use matrix::{EmissionMatrix, FeatureMatrix, JointLattice, RowNormalize};
pub use metrics::{cer, edit_distance, wer, EditCounts, ErrorRate};
pub use rng::Rng;
pub use seq::{AlignmentSeq, Hypothesis, MaskedSeq, TokenSeq};
pub use transducer::{
    beam_search, build_lattice, greedy_decode, rnnt_grad, rnnt_grad_wrt_logits, rnnt_loss,
    BeamConfig, BigramLm, FrameEmitter, Fusion, LmFusionHook, PredictionEmitter, TableEmitter,
};
pub use vocab::{TokenId, Vocab};

//! Transducer lattice loss, gradient, and beam search.

mod emitter;
mod loss;
mod search;

pub use emitter::{
    build_lattice, BigramLm, FrameEmitter, Fusion, LmFusionHook, PredictionEmitter, TableEmitter,
};
pub use loss::{rnnt_grad, rnnt_grad_wrt_logits, rnnt_loss};
pub use search::{beam_search, greedy_decode, BeamConfig, DEFAULT_MAX_SYMBOLS_PER_FRAME};

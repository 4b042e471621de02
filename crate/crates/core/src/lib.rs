//! Joint CTC/attention beam search over precomputed posterior grids.
//!
//! The crate decodes label sequences from frame-level CTC posteriors combined
//! with an attention-decoder scorer, using restricted CTC prefix scoring,
//! length-sorted batching and two end-of-speech detectors. It also plans
//! segmentations of long inputs and evaluates token error rates.
//!
//! All numeric code is generic over [`LogFloat`] (`f32` or `f64`); the
//! aliases below fix the scalar for the common case.

pub mod batch;
pub mod bench;
pub mod ctc;
pub mod error;
pub mod io;
pub mod metrics;
pub mod model;
pub mod scalar;
pub mod scorer;
pub mod search;
pub mod segment;
pub mod synth;
pub mod verify;

pub use batch::{batched_beam_search, decode_all, make_batches, topb_per_utterance, Batch};
pub use bench::BenchReport;
pub use ctc::{batch_window, window_for, CtcForwardState, CtcScorer, Window};
pub use error::{Error, Result};
pub use metrics::{cer, edit_distance, EvalReport};
pub use model::{
    pad_to_length, validate_grid, DecodeResult, DecoderConfig, EosMode, EosTrigger, FinishRule,
    GridViolation, Margin, PosteriorGrid, TokenSet, Utterance,
};
pub use scalar::{LogFloat, LOG_ZERO};
pub use scorer::{
    AnyScorer, AttentionScorer, LoopScorer, ScoreQuery, ScorerSpec, TableScorer, UniformScorer,
};
pub use search::{
    beam_search, beam_search_with_stats, end_detect_baseline, end_detect_ctc, joint_step_scores,
    DecodeStats, FinishedEntry, FinishedSet, Hypothesis,
};
pub use segment::{
    frame_llr, hard_segments, smooth_and_decide, vad_segments, NodeMap, Segment, VadConfig,
};

pub type Grid = PosteriorGrid<f64>;
pub type Grid32 = PosteriorGrid<f32>;
pub type Utt = Utterance<f64>;
pub type Utt32 = Utterance<f32>;
pub type ForwardState = CtcForwardState<f64>;
pub type ForwardState32 = CtcForwardState<f32>;
pub type Hyp = Hypothesis<f64>;
pub type Hyp32 = Hypothesis<f32>;

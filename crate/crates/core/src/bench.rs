//! Throughput measurement: wall time against audio duration, plus the search
//! counters, averaged over repeated runs.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::batch::decode_all;
use crate::error::{Error, Result};
use crate::model::{DecodeResult, DecoderConfig, Utterance};
use crate::scalar::LogFloat;
use crate::scorer::AttentionScorer;
use crate::search::DecodeStats;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub batch_size: usize,
    pub m1: String,
    pub m2: String,
    pub eos_mode: String,
    pub repeat: usize,
    pub utterances: usize,
    /// Mean wall time of one full decoding pass.
    pub wall_seconds: f64,
    pub audio_seconds: f64,
    /// `wall_seconds / audio_seconds`.
    pub xrt: f64,
    pub steps: u64,
    pub scorer_queries: u64,
    pub ctc_frames_evaluated: u64,
}

/// Seconds of audio in `utterances`, from each true length and frame shift.
pub fn audio_seconds<S: LogFloat>(utterances: &[Utterance<S>]) -> f64 {
    utterances
        .iter()
        .map(|u| u.grid.seconds(u.true_frames))
        .sum()
}

/// Sums the counters of a decoding pass.
pub fn total_stats(results: &[(DecodeResult, DecodeStats)]) -> DecodeStats {
    let mut total = DecodeStats::default();
    for (_, s) in results {
        total += *s;
    }
    total
}

/// Decodes `utterances` `repeat` times and reports the mean wall time.
/// Counters come from the first pass; every pass must produce the same
/// results.
pub fn measure<S: LogFloat, A: AttentionScorer<S> + ?Sized>(
    utterances: &[Utterance<S>],
    scorer: &A,
    cfg: &DecoderConfig,
    batch_size: usize,
    repeat: usize,
) -> Result<(BenchReport, Vec<DecodeResult>)> {
    if repeat == 0 {
        return Err(Error::InvalidConfig("repeat must be at least 1".into()));
    }
    let audio = audio_seconds(utterances);
    if audio.is_nan() || audio <= 0.0 {
        return Err(Error::InvalidConfig("no audio to time".into()));
    }
    let mut total_wall = 0.0;
    let mut first: Option<Vec<(DecodeResult, DecodeStats)>> = None;
    for _ in 0..repeat {
        let start = Instant::now();
        let results = decode_all(utterances, scorer, cfg, batch_size)?;
        total_wall += start.elapsed().as_secs_f64();
        match &first {
            None => first = Some(results),
            Some(f) => debug_assert_eq!(f, &results),
        }
    }
    let results = first.expect("repeat >= 1");
    let stats = total_stats(&results);
    let wall_seconds = total_wall / repeat as f64;
    Ok((
        BenchReport {
            batch_size,
            m1: cfg.margin_m1.to_string(),
            m2: cfg.margin_m2.to_string(),
            eos_mode: cfg.eos_mode.to_string(),
            repeat,
            utterances: utterances.len(),
            wall_seconds,
            audio_seconds: audio,
            xrt: wall_seconds / audio,
            steps: stats.steps as u64,
            scorer_queries: stats.scorer_queries,
            ctc_frames_evaluated: stats.ctc_frames_evaluated,
        },
        results.into_iter().map(|(r, _)| r).collect(),
    ))
}

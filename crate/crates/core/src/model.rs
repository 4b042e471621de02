//! Shared domain types: token sets, posterior grids, utterances, decoder
//! configuration and decode results.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::{clamp_log, log_sum_exp, to_f64, LogFloat};

/// Tolerance on row normalization and on the "entries are log-probabilities"
/// bound.
pub const NORM_TOL: f64 = 1e-6;

/// The real token inventory `C`. CTC adds a blank, attention adds `<eos>`;
/// both live at index `size_c`, so each vocabulary has `size_c + 1` symbols.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokenSet {
    size_c: usize,
    names: Option<Vec<String>>,
}

impl TokenSet {
    pub fn new(size_c: usize) -> Result<Self> {
        if size_c == 0 {
            return Err(Error::InvalidConfig(
                "token set needs at least one token".into(),
            ));
        }
        Ok(Self {
            size_c,
            names: None,
        })
    }

    pub fn with_names(names: Vec<String>) -> Result<Self> {
        let mut set = Self::new(names.len())?;
        set.names = Some(names);
        Ok(set)
    }

    pub fn size_c(&self) -> usize {
        self.size_c
    }

    pub fn blank_id(&self) -> u32 {
        self.size_c as u32
    }

    pub fn eos_id(&self) -> u32 {
        self.size_c as u32
    }

    /// `|C| + 1`, the width of both the CTC and attention vocabularies.
    pub fn vocab(&self) -> usize {
        self.size_c + 1
    }

    pub fn is_label(&self, token: u32) -> bool {
        (token as usize) < self.size_c
    }

    pub fn names(&self) -> Option<&[String]> {
        self.names.as_deref()
    }

    /// Renders tokens with their names, when names are known.
    pub fn render(&self, tokens: &[u32]) -> Option<String> {
        let names = self.names.as_ref()?;
        Some(
            tokens
                .iter()
                .map(|&t| names.get(t as usize).map(String::as_str).unwrap_or("?"))
                .collect(),
        )
    }
}

/// Per-frame natural-log posteriors over the CTC symbols (`|C|` tokens then
/// blank), row-major `frames x vocab`.
#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorGrid<S> {
    frames: usize,
    vocab: usize,
    frame_shift_ms: u32,
    logp: Vec<S>,
}

impl<S: LogFloat> PosteriorGrid<S> {
    /// Builds a grid from row-major log-probabilities. Values at or below the
    /// log-zero sentinel (including `-inf`) are stored as the sentinel.
    pub fn new(frames: usize, vocab: usize, frame_shift_ms: u32, logp: Vec<S>) -> Result<Self> {
        if vocab < 2 {
            return Err(Error::InvalidGrid(format!(
                "vocab {vocab} must hold at least one token and the blank"
            )));
        }
        if logp.len() != frames * vocab {
            return Err(Error::InvalidGrid(format!(
                "{} values for a {frames}x{vocab} grid",
                logp.len()
            )));
        }
        let logp = logp
            .into_iter()
            .map(|v| if v.is_nan() { v } else { clamp_log(v) })
            .collect();
        Ok(Self {
            frames,
            vocab,
            frame_shift_ms,
            logp,
        })
    }

    /// Convenience constructor from probability rows (used by tests and
    /// generators).
    pub fn from_probs(rows: &[Vec<f64>], frame_shift_ms: u32) -> Result<Self> {
        let vocab = rows.first().map_or(2, Vec::len);
        let mut logp = Vec::with_capacity(rows.len() * vocab);
        for row in rows {
            if row.len() != vocab {
                return Err(Error::InvalidGrid("ragged probability rows".into()));
            }
            logp.extend(row.iter().map(|&p| S::lit(p.ln())));
        }
        Self::new(rows.len(), vocab, frame_shift_ms, logp)
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn vocab(&self) -> usize {
        self.vocab
    }

    pub fn frame_shift_ms(&self) -> u32 {
        self.frame_shift_ms
    }

    pub fn blank_id(&self) -> u32 {
        (self.vocab - 1) as u32
    }

    pub fn tokens(&self) -> TokenSet {
        TokenSet {
            size_c: self.vocab - 1,
            names: None,
        }
    }

    /// Row `t` (0-based).
    #[inline]
    pub fn row(&self, t: usize) -> &[S] {
        &self.logp[t * self.vocab..(t + 1) * self.vocab]
    }

    /// log p of `symbol` at 0-based row `t`.
    #[inline]
    pub fn get(&self, t: usize, symbol: u32) -> S {
        self.logp[t * self.vocab + symbol as usize]
    }

    pub fn values(&self) -> &[S] {
        &self.logp
    }

    /// Seconds of audio covered by `frames` frames of this grid.
    pub fn seconds(&self, frames: usize) -> f64 {
        frames as f64 * self.frame_shift_ms as f64 / 1000.0
    }

    /// Converts to another scalar type.
    pub fn cast<T: LogFloat>(&self) -> PosteriorGrid<T> {
        PosteriorGrid {
            frames: self.frames,
            vocab: self.vocab,
            frame_shift_ms: self.frame_shift_ms,
            logp: self
                .logp
                .iter()
                .map(|&v| clamp_log(T::from_f64(to_f64(v)).unwrap_or_else(T::nan)))
                .collect(),
        }
    }
}

/// First broken grid invariant found by [`validate_grid`].
#[derive(Debug, Clone, PartialEq)]
pub enum GridViolation {
    Empty,
    NotANumber {
        row: usize,
        symbol: usize,
    },
    PositiveEntry {
        row: usize,
        symbol: usize,
        value: f64,
    },
    RowNotNormalized {
        row: usize,
        logsumexp: f64,
    },
}

impl fmt::Display for GridViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GridViolation::Empty => write!(f, "empty grid"),
            GridViolation::NotANumber { row, symbol } => {
                write!(f, "row {row} symbol {symbol} is NaN")
            }
            GridViolation::PositiveEntry { row, symbol, value } => {
                write!(
                    f,
                    "row {row} symbol {symbol} value={value:+.3} is not a log-probability"
                )
            }
            GridViolation::RowNotNormalized { row, logsumexp } => {
                write!(f, "row {row} logsumexp={logsumexp:+.3}")
            }
        }
    }
}

impl std::error::Error for GridViolation {}

/// Checks grid invariants, reporting the first violation.
pub fn validate_grid<S: LogFloat>(
    grid: &PosteriorGrid<S>,
) -> std::result::Result<(), GridViolation> {
    if grid.frames == 0 {
        return Err(GridViolation::Empty);
    }
    for t in 0..grid.frames {
        let row = grid.row(t);
        for (k, &v) in row.iter().enumerate() {
            if v.is_nan() {
                return Err(GridViolation::NotANumber { row: t, symbol: k });
            }
            if to_f64(v) > NORM_TOL {
                return Err(GridViolation::PositiveEntry {
                    row: t,
                    symbol: k,
                    value: to_f64(v),
                });
            }
        }
        let lse = to_f64(log_sum_exp(row));
        if lse.abs() > NORM_TOL {
            return Err(GridViolation::RowNotNormalized {
                row: t,
                logsumexp: lse,
            });
        }
    }
    Ok(())
}

/// Extends a grid to `target` frames with blank-certain rows.
pub fn pad_to_length<S: LogFloat>(
    grid: &PosteriorGrid<S>,
    target: usize,
) -> Result<PosteriorGrid<S>> {
    if target < grid.frames {
        return Err(Error::PadTooShort {
            target,
            frames: grid.frames,
        });
    }
    let mut logp = Vec::with_capacity(target * grid.vocab);
    logp.extend_from_slice(&grid.logp);
    let blank = grid.vocab - 1;
    for _ in grid.frames..target {
        logp.extend((0..grid.vocab).map(|k| if k == blank { S::zero() } else { S::neg_inf() }));
    }
    Ok(PosteriorGrid {
        frames: target,
        vocab: grid.vocab,
        frame_shift_ms: grid.frame_shift_ms,
        logp,
    })
}

/// One input to decode. `true_frames` is the length before any batch padding;
/// search never looks past it.
#[derive(Debug, Clone)]
pub struct Utterance<S> {
    pub id: String,
    pub grid: Arc<PosteriorGrid<S>>,
    pub true_frames: usize,
}

impl<S: LogFloat> Utterance<S> {
    pub fn new(id: impl Into<String>, grid: PosteriorGrid<S>) -> Self {
        let true_frames = grid.frames();
        Self {
            id: id.into(),
            grid: Arc::new(grid),
            true_frames,
        }
    }

    /// Same utterance over a blank-padded copy of its grid.
    pub fn padded(&self, target: usize) -> Result<Self> {
        let grid = if target == self.grid.frames() {
            Arc::clone(&self.grid)
        } else {
            Arc::new(pad_to_length(&self.grid, target)?)
        };
        Ok(Self {
            id: self.id.clone(),
            grid,
            true_frames: self.true_frames,
        })
    }
}

/// A restriction margin in frames, or no restriction.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Margin {
    Frames(u32),
    Unbounded,
}

impl fmt::Display for Margin {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Margin::Frames(n) => write!(f, "{n}"),
            Margin::Unbounded => write!(f, "inf"),
        }
    }
}

impl FromStr for Margin {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.trim() {
            "inf" | "Inf" | "INF" | "∞" | "none" => Ok(Margin::Unbounded),
            v => v
                .parse::<u32>()
                .map(Margin::Frames)
                .map_err(|_| format!("margin must be a frame count or 'inf', got {v:?}")),
        }
    }
}

/// Which end-of-speech detectors are active.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EosMode {
    /// Ended-hypothesis score window only.
    Baseline,
    /// Last-label time saturation only.
    Ctc,
    /// Score window first, then time saturation.
    Both,
}

impl fmt::Display for EosMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EosMode::Baseline => "baseline",
            EosMode::Ctc => "ctc",
            EosMode::Both => "both",
        })
    }
}

impl FromStr for EosMode {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "baseline" => Ok(EosMode::Baseline),
            "ctc" => Ok(EosMode::Ctc),
            "both" => Ok(EosMode::Both),
            other => Err(format!("unknown eos mode {other:?}")),
        }
    }
}

/// When an `<eos>`-ended hypothesis enters the finished set.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FinishRule {
    /// Only when its score beats every continuation of the utterance at that
    /// step.
    BeatsBest,
    /// Every live hypothesis is also offered as finished.
    Always,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecoderConfig {
    pub beam_width: usize,
    /// CTC weight λ of the joint score.
    pub ctc_weight: f64,
    /// Window of ended-hypothesis lengths checked by the baseline detector.
    pub eos_m: usize,
    /// Score gap (nats, ≤ 0) below which a length counts as exhausted.
    pub eos_threshold: f64,
    /// Saturated last-label times tolerated before the CTC detector fires.
    pub eos_c: usize,
    pub margin_m1: Margin,
    pub margin_m2: Margin,
    pub eos_mode: EosMode,
    /// Step bound as a fraction of the utterance's frame count.
    pub max_steps_ratio: f64,
    pub finish_rule: FinishRule,
    /// Reference mode: sum the CTC prefix score over every frame, ignoring
    /// margins and the step lower bound.
    pub full_range_ctc: bool,
}

impl Default for DecoderConfig {
    fn default() -> Self {
        Self {
            beam_width: 3,
            ctc_weight: 0.3,
            eos_m: 3,
            eos_threshold: -10.0,
            eos_c: 2,
            margin_m1: Margin::Frames(5),
            margin_m2: Margin::Unbounded,
            eos_mode: EosMode::Both,
            max_steps_ratio: 1.0,
            finish_rule: FinishRule::BeatsBest,
            full_range_ctc: false,
        }
    }
}

impl DecoderConfig {
    pub fn unrestricted(mut self) -> Self {
        self.margin_m1 = Margin::Unbounded;
        self.margin_m2 = Margin::Unbounded;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if self.beam_width == 0 {
            return bad("beam width must be at least 1".into());
        }
        if !(0.0..=1.0).contains(&self.ctc_weight) {
            return bad(format!("ctc weight {} outside [0, 1]", self.ctc_weight));
        }
        if self.eos_m == 0 {
            return bad("eos M must be at least 1".into());
        }
        if !self.eos_threshold.is_finite() {
            return bad("eos threshold must be finite".into());
        }
        if !(self.max_steps_ratio > 0.0 && self.max_steps_ratio <= 1.0) {
            return bad(format!(
                "max steps ratio {} outside (0, 1]",
                self.max_steps_ratio
            ));
        }
        Ok(())
    }

    /// Step bound for an utterance of `frames` frames.
    pub fn max_steps(&self, frames: usize) -> usize {
        (self.max_steps_ratio * frames as f64).ceil() as usize
    }
}

/// Why the search for an utterance stopped.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EosTrigger {
    Baseline,
    Ctc,
    MaxLen,
}

impl fmt::Display for EosTrigger {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EosTrigger::Baseline => "baseline",
            EosTrigger::Ctc => "ctc",
            EosTrigger::MaxLen => "max_len",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecodeResult {
    pub id: String,
    pub tokens: Vec<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub text: Option<String>,
    pub joint_logp: f64,
    /// Estimated frame (1-based) of each output label.
    pub label_times: Vec<u32>,
    #[serde(rename = "steps")]
    pub steps_taken: usize,
    pub eos_trigger: EosTrigger,
}

#[cfg(test)]
mod tests {
    use super::*;

    fn g1() -> PosteriorGrid<f64> {
        PosteriorGrid::from_probs(&[vec![0.6, 0.4], vec![0.5, 0.5]], 10).unwrap()
    }

    #[test]
    fn token_set_layout() {
        let set = TokenSet::new(3).unwrap();
        assert_eq!(set.blank_id(), 3);
        assert_eq!(set.eos_id(), 3);
        assert_eq!(set.vocab(), 4);
        assert!(set.is_label(2) && !set.is_label(3));
        assert!(TokenSet::new(0).is_err());
        let named = TokenSet::with_names(vec!["a".into(), "b".into()]).unwrap();
        assert_eq!(named.render(&[1, 0, 1]).as_deref(), Some("bab"));
    }

    #[test]
    fn normalized_grid_is_valid() {
        assert_eq!(validate_grid(&g1()), Ok(()));
    }

    #[test]
    fn overfull_row_reported() {
        let g = PosteriorGrid::<f64>::from_probs(&[vec![0.6, 0.5]], 10).unwrap();
        let v = validate_grid(&g).unwrap_err();
        assert_eq!(v.to_string(), "row 0 logsumexp=+0.095");
    }

    #[test]
    fn empty_grid_reported() {
        let g = PosteriorGrid::<f64>::new(0, 2, 10, vec![]).unwrap();
        assert_eq!(validate_grid(&g).unwrap_err().to_string(), "empty grid");
    }

    #[test]
    fn nan_and_positive_entries_reported() {
        let g = PosteriorGrid::<f64>::new(1, 2, 10, vec![f64::NAN, 0.0]).unwrap();
        assert!(matches!(
            validate_grid(&g),
            Err(GridViolation::NotANumber { row: 0, symbol: 0 })
        ));
        let g = PosteriorGrid::<f64>::new(1, 2, 10, vec![0.5, -1e30]).unwrap();
        assert!(matches!(
            validate_grid(&g),
            Err(GridViolation::PositiveEntry { .. })
        ));
    }

    #[test]
    fn shape_errors() {
        assert!(PosteriorGrid::<f64>::new(2, 2, 10, vec![0.0; 3]).is_err());
        assert!(PosteriorGrid::<f64>::new(1, 1, 10, vec![0.0]).is_err());
    }

    #[test]
    fn pad_noop_and_blank_rows() {
        let g = g1();
        assert_eq!(pad_to_length(&g, 2).unwrap(), g);
        let p = pad_to_length(&g, 4).unwrap();
        assert_eq!(p.frames(), 4);
        assert_eq!(p.row(0), g.row(0));
        assert_eq!(p.row(1), g.row(1));
        for t in 2..4 {
            assert_eq!(p.get(t, 1), 0.0);
            assert!(p.get(t, 0).is_log_zero());
        }
        assert_eq!(validate_grid(&p), Ok(()));
        assert!(matches!(
            pad_to_length(&g, 1),
            Err(Error::PadTooShort { .. })
        ));
    }

    #[test]
    fn neg_infinity_clamped_to_sentinel() {
        let g = PosteriorGrid::<f32>::new(1, 2, 10, vec![f32::NEG_INFINITY, 0.0]).unwrap();
        assert_eq!(g.get(0, 0), f32::neg_inf());
    }

    #[test]
    fn margin_parse() {
        assert_eq!("inf".parse::<Margin>(), Ok(Margin::Unbounded));
        assert_eq!("20".parse::<Margin>(), Ok(Margin::Frames(20)));
        assert!("-3".parse::<Margin>().is_err());
        assert_eq!(Margin::Unbounded.to_string(), "inf");
    }

    #[test]
    fn config_validation() {
        assert!(DecoderConfig::default().validate().is_ok());
        let bad = [
            DecoderConfig {
                beam_width: 0,
                ..Default::default()
            },
            DecoderConfig {
                ctc_weight: 1.5,
                ..Default::default()
            },
            DecoderConfig {
                eos_m: 0,
                ..Default::default()
            },
            DecoderConfig {
                max_steps_ratio: 0.0,
                ..Default::default()
            },
            DecoderConfig {
                max_steps_ratio: 1.1,
                ..Default::default()
            },
        ];
        for cfg in bad {
            assert!(cfg.validate().is_err(), "{cfg:?}");
        }
        assert_eq!(DecoderConfig::default().max_steps(7), 7);
        let half = DecoderConfig {
            max_steps_ratio: 0.5,
            ..Default::default()
        };
        assert_eq!(half.max_steps(7), 4);
    }

    #[test]
    fn decode_result_json_shape() {
        let r = DecodeResult {
            id: "u1".into(),
            tokens: vec![0, 2],
            text: None,
            joint_logp: -1.25,
            label_times: vec![3, 9],
            steps_taken: 4,
            eos_trigger: EosTrigger::MaxLen,
        };
        let line = serde_json::to_string(&r).unwrap();
        assert_eq!(
            line,
            r#"{"id":"u1","tokens":[0,2],"joint_logp":-1.25,"label_times":[3,9],"steps":4,"eos_trigger":"max_len"}"#
        );
        let back: DecodeResult = serde_json::from_str(&line).unwrap();
        assert_eq!(back, r);
    }
}

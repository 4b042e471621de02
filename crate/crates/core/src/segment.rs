//! Splitting long inputs into decodable pieces.
//!
//! The VAD path turns per-frame detector outputs into a noise-vs-speech
//! log-likelihood ratio, smooths it with a centered moving average, marks
//! frames whose smoothed ratio is at most the threshold as speech, then merges
//! short speech runs and splits long ones. The hard path cuts the input into
//! near-equal pieces without looking at it.

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::{
    decode_container, encode_container, read_bytes, write_bytes, ContainerHeader, VAD_MAGIC,
};
use crate::model::PosteriorGrid;
use crate::scalar::{to_f64, LogFloat};

/// Which detector outputs stand for speech and which for noise.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NodeMap {
    pub speech: Vec<usize>,
    pub noise: Vec<usize>,
}

impl NodeMap {
    pub fn validate(&self, width: usize) -> Result<()> {
        if self.speech.is_empty() || self.noise.is_empty() {
            return Err(Error::InvalidNodeMap(
                "speech and noise sets must be non-empty".into(),
            ));
        }
        if let Some(&k) = self.speech.iter().find(|k| self.noise.contains(k)) {
            return Err(Error::InvalidNodeMap(format!(
                "node {k} is both speech and noise"
            )));
        }
        if let Some(&index) = self.speech.iter().chain(&self.noise).find(|&&k| k >= width) {
            return Err(Error::NodeOutOfRange { index, width });
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::InvalidNodeMap(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = read_bytes(path)?;
        Self::from_json(&String::from_utf8_lossy(&bytes))
    }

    /// Node map for outputs derived from a CTC grid: every token is speech,
    /// blank is noise.
    pub fn for_ctc_vocab(vocab: usize) -> Self {
        Self {
            speech: (0..vocab - 1).collect(),
            noise: vec![vocab - 1],
        }
    }
}

/// Detector outputs, row-major `frames x width`.
#[derive(Debug, Clone, PartialEq)]
pub struct VadOutputs {
    pub frames: usize,
    pub width: usize,
    pub frame_shift_ms: u32,
    pub values: Vec<f32>,
}

/// Floor applied when deriving detector outputs from log-posteriors.
pub const VAD_FLOOR: f32 = -30.0;

impl VadOutputs {
    pub fn row(&self, t: usize) -> &[f32] {
        &self.values[t * self.width..(t + 1) * self.width]
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let (h, values) = decode_container(bytes, VAD_MAGIC)?;
        Ok(Self {
            frames: h.frames as usize,
            width: h.width as usize,
            frame_shift_ms: h.frame_shift_ms,
            values,
        })
    }

    pub fn encode(&self) -> Vec<u8> {
        encode_container(
            ContainerHeader {
                magic: VAD_MAGIC,
                frames: self.frames as u32,
                width: self.width as u32,
                frame_shift_ms: self.frame_shift_ms,
            },
            &self.values,
        )
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::decode(&read_bytes(path)?)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        write_bytes(path, &self.encode())
    }

    /// Log-posteriors of a CTC grid, floored at [`VAD_FLOOR`].
    pub fn from_grid<S: LogFloat>(grid: &PosteriorGrid<S>) -> Self {
        Self {
            frames: grid.frames(),
            width: grid.vocab(),
            frame_shift_ms: grid.frame_shift_ms(),
            values: grid
                .values()
                .iter()
                .map(|&v| (to_f64(v) as f32).max(VAD_FLOOR))
                .collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VadConfig {
    /// Smoothed ratios at or below this count as speech.
    pub threshold: f64,
    pub smooth_window: usize,
    pub min_len: usize,
    pub max_len: usize,
}

impl VadConfig {
    pub fn validate(&self) -> Result<()> {
        if self.smooth_window == 0 {
            return Err(Error::InvalidConfig(
                "smoothing window must be at least 1".into(),
            ));
        }
        check_lengths(self.min_len, self.max_len)
    }
}

fn check_lengths(min_len: usize, max_len: usize) -> Result<()> {
    if min_len == 0 || min_len > max_len {
        return Err(Error::InvalidConfig(format!(
            "need 0 < min ({min_len}) <= max ({max_len})"
        )));
    }
    Ok(())
}

/// Half-open frame range `[start, end)` of one utterance.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Segment {
    pub utterance_id: String,
    pub start: usize,
    pub end: usize,
}

impl Segment {
    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.end == self.start
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SegmentSource {
    Vad,
    Hard,
}

/// One line of a segment manifest.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SegmentRecord {
    pub id: String,
    pub start_frame: usize,
    pub end_frame: usize,
    pub source: SegmentSource,
}

impl SegmentRecord {
    pub fn new(seg: &Segment, source: SegmentSource) -> Self {
        Self {
            id: seg.utterance_id.clone(),
            start_frame: seg.start,
            end_frame: seg.end,
            source,
        }
    }
}

/// Noise-minus-speech log-likelihood ratio of one frame, each side
/// approximated by its best node.
pub fn frame_llr(outputs: &[f32], nodes: &NodeMap) -> Result<f64> {
    nodes.validate(outputs.len())?;
    let best = |set: &[usize]| {
        set.iter()
            .map(|&k| outputs[k] as f64)
            .fold(f64::NEG_INFINITY, f64::max)
    };
    Ok(best(&nodes.noise) - best(&nodes.speech))
}

pub fn llr_track(outputs: &VadOutputs, nodes: &NodeMap) -> Result<Vec<f64>> {
    nodes.validate(outputs.width)?;
    (0..outputs.frames)
        .map(|t| frame_llr(outputs.row(t), nodes))
        .collect()
}

/// Relative slack on the threshold comparison, so a window of values exactly
/// at the threshold is not pushed over it by summation rounding.
const TIE_TOL: f64 = 1e-12;

/// Frame `t` is speech iff the mean ratio over frames
/// `[t - (W-1)/2, t + W/2]` (clipped to the input) is at most `threshold`.
pub fn smooth_and_decide(llr: &[f64], threshold: f64, window: usize) -> Vec<bool> {
    assert!(window >= 1);
    let (lo, hi) = ((window - 1) / 2, window / 2);
    let n = llr.len();
    (0..n)
        .map(|t| {
            let a = t.saturating_sub(lo);
            let b = (t + hi).min(n - 1);
            let mean = llr[a..=b].iter().sum::<f64>() / (b + 1 - a) as f64;
            mean <= threshold + TIE_TOL * threshold.abs().max(1.0)
        })
        .collect()
}

fn speech_runs(flags: &[bool]) -> Vec<(usize, usize)> {
    let mut runs = Vec::new();
    let mut start = None;
    for (t, &f) in flags.iter().enumerate() {
        match (f, start) {
            (true, None) => start = Some(t),
            (false, Some(s)) => {
                runs.push((s, t));
                start = None;
            }
            _ => {}
        }
    }
    if let Some(s) = start {
        runs.push((s, flags.len()));
    }
    runs
}

/// `n = ceil(len / max_len)` pieces of `[start, end)` whose lengths differ by
/// at most one frame.
fn split_uniform(start: usize, end: usize, max_len: usize) -> Vec<(usize, usize)> {
    let len = end - start;
    let n = len.div_ceil(max_len).max(1);
    (0..n)
        .map(|i| (start + i * len / n, start + (i + 1) * len / n))
        .collect()
}

/// Segments from per-frame speech flags. Runs shorter than `min_len` absorb
/// the following runs (and the gaps between them) left to right; a short
/// remainder at the end joins the previous segment. Segments longer than
/// `max_len` are then split uniformly.
pub fn vad_segments(
    id: &str,
    flags: &[bool],
    min_len: usize,
    max_len: usize,
) -> Result<Vec<Segment>> {
    check_lengths(min_len, max_len)?;
    let mut merged: Vec<(usize, usize)> = Vec::new();
    let mut cur: Option<(usize, usize)> = None;
    for (s, e) in speech_runs(flags) {
        cur = Some(match cur {
            Some((cs, _)) => (cs, e),
            None => (s, e),
        });
        if let Some((cs, ce)) = cur {
            if ce - cs >= min_len {
                merged.push((cs, ce));
                cur = None;
            }
        }
    }
    if let Some((cs, ce)) = cur {
        match merged.last_mut() {
            Some(last) => last.1 = ce,
            None => merged.push((cs, ce)),
        }
    }
    Ok(merged
        .into_iter()
        .flat_map(|(s, e)| split_uniform(s, e, max_len))
        .map(|(start, end)| Segment {
            utterance_id: id.to_string(),
            start,
            end,
        })
        .collect())
}

/// Full VAD pipeline over detector outputs.
pub fn vad_pipeline(
    id: &str,
    outputs: &VadOutputs,
    nodes: &NodeMap,
    cfg: &VadConfig,
) -> Result<Vec<Segment>> {
    cfg.validate()?;
    let llr = llr_track(outputs, nodes)?;
    let flags = smooth_and_decide(&llr, cfg.threshold, cfg.smooth_window);
    vad_segments(id, &flags, cfg.min_len, cfg.max_len)
}

/// `ceil(frames / max_len)` near-equal pieces covering `[0, frames)`, or one
/// piece when the input is shorter than `min_len`. The maximum wins when both
/// bounds cannot hold.
pub fn hard_segments(
    id: &str,
    frames: usize,
    min_len: usize,
    max_len: usize,
) -> Result<Vec<Segment>> {
    check_lengths(min_len, max_len)?;
    if frames == 0 {
        return Err(Error::InvalidConfig("cannot segment an empty input".into()));
    }
    let pieces = if frames < min_len {
        vec![(0, frames)]
    } else {
        split_uniform(0, frames, max_len)
    };
    Ok(pieces
        .into_iter()
        .map(|(start, end)| Segment {
            utterance_id: id.to_string(),
            start,
            end,
        })
        .collect())
}

/// Count, mean and population standard deviation of segment durations.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SegmentStats {
    pub count: usize,
    pub mean_seconds: f64,
    pub std_seconds: f64,
}

impl SegmentStats {
    pub fn from_lengths(lengths: &[usize], frame_shift_ms: u32) -> Self {
        let secs: Vec<f64> = lengths
            .iter()
            .map(|&l| l as f64 * frame_shift_ms as f64 / 1000.0)
            .collect();
        let count = secs.len();
        if count == 0 {
            return Self {
                count,
                mean_seconds: 0.0,
                std_seconds: 0.0,
            };
        }
        let mean = secs.iter().sum::<f64>() / count as f64;
        let var = secs.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / count as f64;
        Self {
            count,
            mean_seconds: mean,
            std_seconds: var.sqrt(),
        }
    }
}

impl fmt::Display for SegmentStats {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "segments={} mean={:.2} std={:.2}",
            self.count, self.mean_seconds, self.std_seconds
        )
    }
}

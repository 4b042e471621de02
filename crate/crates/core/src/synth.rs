//! Deterministic synthetic workloads: random grids, grids with a planted
//! label sequence, and blank-heavy grids with planted silences.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::ctc::collapse;
use crate::model::PosteriorGrid;
use crate::scalar::{LogFloat, LOG_ZERO};
use crate::scorer::TableScorer;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Flat Dirichlet draw with a small floor so no entry is exactly zero.
fn simplex(rng: &mut impl Rng, n: usize) -> Vec<f64> {
    let raw: Vec<f64> = (0..n)
        .map(|_| -(1.0 - rng.gen::<f64>()).ln() + 1e-3)
        .collect();
    let sum: f64 = raw.iter().sum();
    raw.into_iter().map(|x| x / sum).collect()
}

fn push_row<S: LogFloat>(out: &mut Vec<S>, probs: &[f64]) {
    let lse = probs.iter().sum::<f64>().ln();
    out.extend(probs.iter().map(|&p| {
        if p > 0.0 {
            S::lit(p.ln() - lse)
        } else {
            S::lit(LOG_ZERO)
        }
    }));
}

/// Uniformly random normalized grid over `size_c` tokens plus blank.
pub fn random_grid<S: LogFloat>(
    frames: usize,
    size_c: usize,
    frame_shift_ms: u32,
    seed: u64,
) -> PosteriorGrid<S> {
    let mut rng = rng(seed);
    let vocab = size_c + 1;
    let mut logp = Vec::with_capacity(frames * vocab);
    for _ in 0..frames {
        push_row(&mut logp, &simplex(&mut rng, vocab));
    }
    PosteriorGrid::new(frames, vocab, frame_shift_ms, logp).expect("well-formed by construction")
}

/// Shape of a planted alignment.
#[derive(Debug, Clone)]
pub struct PlantedParams {
    /// Probability range of the aligned symbol at each frame.
    pub peak: (f64, f64),
    /// Longest run of blanks before the first label.
    pub max_lead: usize,
    /// Longest run of frames one label occupies.
    pub max_dur: usize,
    /// Longest blank run between labels.
    pub max_gap: usize,
    /// Total label probability on a silent frame; 0 makes silence
    /// blank-certain.
    pub silence_floor: f64,
    /// Share of the off-peak mass spread evenly; the rest is spread at random.
    pub even_share: f64,
}

impl Default for PlantedParams {
    fn default() -> Self {
        Self {
            peak: (0.8, 0.98),
            max_lead: 8,
            max_dur: 3,
            max_gap: 6,
            silence_floor: 0.0,
            even_share: 0.5,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Planted<S> {
    pub grid: PosteriorGrid<S>,
    /// The collapsed label sequence of `alignment`.
    pub tokens: Vec<u32>,
    /// Frame-level symbol the grid peaks on.
    pub alignment: Vec<u32>,
}

/// Draws a frame alignment: blanks, then label runs separated by blank gaps
/// (at least one blank between equal labels), blanks to the end.
fn planted_alignment(
    rng: &mut impl Rng,
    frames: usize,
    size_c: usize,
    p: &PlantedParams,
) -> Vec<u32> {
    let blank = size_c as u32;
    let mut alignment = Vec::with_capacity(frames);
    let lead = rng.gen_range(0..=p.max_lead).min(frames);
    alignment.resize(lead, blank);
    let mut prev: Option<u32> = None;
    while alignment.len() < frames {
        let c = rng.gen_range(0..size_c as u32);
        let mut gap = rng.gen_range(0..=p.max_gap);
        if prev == Some(c) && gap == 0 {
            gap = 1;
        }
        if prev.is_some() {
            for _ in 0..gap {
                alignment.push(blank);
            }
        }
        let dur = rng.gen_range(1..=p.max_dur.max(1));
        for _ in 0..dur {
            alignment.push(c);
        }
        prev = Some(c);
    }
    alignment.truncate(frames);
    alignment
}

fn grid_from_alignment<S: LogFloat>(
    rng: &mut impl Rng,
    alignment: &[u32],
    size_c: usize,
    frame_shift_ms: u32,
    p: &PlantedParams,
    silent: impl Fn(usize) -> bool,
) -> PosteriorGrid<S> {
    let vocab = size_c + 1;
    let blank = size_c;
    let mut logp = Vec::with_capacity(alignment.len() * vocab);
    for (t, &z) in alignment.iter().enumerate() {
        let mut row = vec![0.0; vocab];
        if silent(t) {
            row[blank] = 1.0 - p.silence_floor;
            if p.silence_floor > 0.0 {
                let spread = simplex(rng, vocab - 1);
                for (slot, q) in row.iter_mut().zip(spread) {
                    *slot = p.silence_floor * q;
                }
            }
        } else {
            let peak = rng.gen_range(p.peak.0..=p.peak.1);
            let even = p.even_share / (vocab - 1) as f64;
            let rest: Vec<f64> = simplex(rng, vocab - 1)
                .into_iter()
                .map(|q| even + (1.0 - p.even_share) * q)
                .collect();
            let mut k = 0;
            for (s, slot) in row.iter_mut().enumerate() {
                if s == z as usize {
                    *slot = peak;
                } else {
                    *slot = (1.0 - peak) * rest[k];
                    k += 1;
                }
            }
        }
        push_row(&mut logp, &row);
    }
    PosteriorGrid::new(alignment.len(), vocab, frame_shift_ms, logp)
        .expect("well-formed by construction")
}

/// Grid whose frame-wise argmax path collapses to a known label sequence.
pub fn planted_grid<S: LogFloat>(
    frames: usize,
    size_c: usize,
    frame_shift_ms: u32,
    seed: u64,
    params: &PlantedParams,
) -> Planted<S> {
    let mut rng = rng(seed);
    let alignment = planted_alignment(&mut rng, frames, size_c, params);
    let grid = grid_from_alignment(&mut rng, &alignment, size_c, frame_shift_ms, params, |_| {
        false
    });
    let tokens = collapse(&alignment, size_c as u32);
    Planted {
        grid,
        tokens,
        alignment,
    }
}

/// Planted speech with blank-certain silences over the half-open frame
/// ranges in `silences`.
pub fn blank_heavy_grid<S: LogFloat>(
    frames: usize,
    size_c: usize,
    frame_shift_ms: u32,
    seed: u64,
    params: &PlantedParams,
    silences: &[(usize, usize)],
) -> Planted<S> {
    let mut rng = rng(seed);
    let blank = size_c as u32;
    let silent = |t: usize| silences.iter().any(|&(a, b)| a <= t && t < b);
    let mut alignment = planted_alignment(&mut rng, frames, size_c, params);
    for (t, z) in alignment.iter_mut().enumerate() {
        if silent(t) {
            *z = blank;
        }
    }
    let grid = grid_from_alignment(&mut rng, &alignment, size_c, frame_shift_ms, params, silent);
    let tokens = collapse(&alignment, blank);
    Planted {
        grid,
        tokens,
        alignment,
    }
}

/// Random n-gram table over `size_c` tokens plus eos; every context of length
/// `order - 1` (and shorter, for sentence starts) gets a vector.
pub fn random_table(size_c: usize, order: usize, seed: u64) -> TableScorer {
    let mut rng = rng(seed);
    let vocab = size_c + 1;
    let mut entries = Vec::new();
    let mut contexts: Vec<Vec<u32>> = vec![vec![]];
    let mut frontier: Vec<Vec<u32>> = vec![vec![]];
    for _ in 1..order.max(1) {
        let mut next = Vec::new();
        for ctx in &frontier {
            for c in 0..size_c as u32 {
                let mut longer = ctx.clone();
                longer.push(c);
                next.push(longer);
            }
        }
        contexts.extend(next.iter().cloned());
        frontier = next;
    }
    for ctx in contexts {
        let probs = simplex(&mut rng, vocab);
        let logp = probs.iter().map(|p| p.ln()).collect();
        entries.push((ctx, logp));
    }
    TableScorer::new(order.max(1), vocab, entries).expect("well-formed by construction")
}

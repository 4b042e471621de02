//! Brute-force CTC oracles: enumerate every alignment string, collapse it,
//! and sum probabilities in the probability domain.

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::model::PosteriorGrid;
use crate::scalar::{to_f64, LogFloat, LOG_ZERO};

/// Largest frame count the oracle accepts.
pub const ORACLE_MAX_FRAMES: usize = 12;
/// Largest alignment count the oracle accepts.
pub const ORACLE_MAX_ALIGNMENTS: u64 = 1 << 24;

/// Removes repeats, then blanks.
pub fn collapse(alignment: &[u32], blank: u32) -> Vec<u32> {
    let mut out = Vec::new();
    let mut prev = None;
    for &z in alignment {
        if Some(z) != prev && z != blank {
            out.push(z);
        }
        prev = Some(z);
    }
    out
}

/// Probability of every collapsed label sequence reachable from a grid.
#[derive(Debug, Clone)]
pub struct CollapseTable {
    exact: HashMap<Vec<u32>, f64>,
}

impl CollapseTable {
    pub fn build<S: LogFloat>(grid: &PosteriorGrid<S>) -> Result<Self> {
        let frames = grid.frames();
        let vocab = grid.vocab();
        let count = (vocab as u64).checked_pow(frames as u32);
        if frames > ORACLE_MAX_FRAMES || count.is_none_or(|n| n > ORACLE_MAX_ALIGNMENTS) {
            return Err(Error::OracleTooLarge { vocab, frames });
        }
        let probs: Vec<f64> = grid.values().iter().map(|&v| to_f64(v).exp()).collect();
        let blank = grid.blank_id();
        let mut exact: HashMap<Vec<u32>, f64> = HashMap::new();
        let mut alignment = vec![0u32; frames];
        loop {
            let p: f64 = alignment
                .iter()
                .enumerate()
                .map(|(t, &z)| probs[t * vocab + z as usize])
                .product();
            if p > 0.0 {
                *exact.entry(collapse(&alignment, blank)).or_default() += p;
            }
            // odometer increment
            let mut i = 0;
            loop {
                if i == frames {
                    return Ok(Self { exact });
                }
                alignment[i] += 1;
                if (alignment[i] as usize) < vocab {
                    break;
                }
                alignment[i] = 0;
                i += 1;
            }
        }
    }

    pub fn exact_prob(&self, seq: &[u32]) -> f64 {
        self.exact.get(seq).copied().unwrap_or(0.0)
    }

    pub fn prefix_prob(&self, prefix: &[u32]) -> f64 {
        self.exact
            .iter()
            .filter(|(k, _)| k.starts_with(prefix))
            .map(|(_, p)| p)
            .sum()
    }

    pub fn exact_logp(&self, seq: &[u32]) -> f64 {
        to_log(self.exact_prob(seq))
    }

    pub fn prefix_logp(&self, prefix: &[u32]) -> f64 {
        to_log(self.prefix_prob(prefix))
    }

    /// Every sequence with non-zero probability.
    pub fn sequences(&self) -> impl Iterator<Item = (&[u32], f64)> {
        self.exact.iter().map(|(k, &p)| (k.as_slice(), p))
    }

    pub fn total(&self) -> f64 {
        self.exact.values().sum()
    }
}

fn to_log(p: f64) -> f64 {
    if p > 0.0 {
        p.ln()
    } else {
        LOG_ZERO
    }
}

/// Log-probability that the grid's collapse starts with `prefix`.
pub fn oracle_prefix_score<S: LogFloat>(prefix: &[u32], grid: &PosteriorGrid<S>) -> Result<f64> {
    Ok(CollapseTable::build(grid)?.prefix_logp(prefix))
}

/// Log-probability that the grid's collapse equals `seq`.
pub fn oracle_exact_score<S: LogFloat>(seq: &[u32], grid: &PosteriorGrid<S>) -> Result<f64> {
    Ok(CollapseTable::build(grid)?.exact_logp(seq))
}

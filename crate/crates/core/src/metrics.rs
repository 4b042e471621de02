//! Token error rate: unit-cost Levenshtein distance over opaque token ids.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Minimum number of substitutions, insertions and deletions turning
/// `reference` into `hypothesis`.
pub fn edit_distance<T: PartialEq>(reference: &[T], hypothesis: &[T]) -> usize {
    let mut prev: Vec<usize> = (0..=hypothesis.len()).collect();
    let mut cur = vec![0; hypothesis.len() + 1];
    for (i, r) in reference.iter().enumerate() {
        cur[0] = i + 1;
        for (j, h) in hypothesis.iter().enumerate() {
            let sub = prev[j] + usize::from(r != h);
            cur[j + 1] = sub.min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[hypothesis.len()]
}

/// `(distance, distance / len(reference))`. An empty reference only has a rate
/// against an empty hypothesis.
pub fn cer<T: PartialEq>(reference: &[T], hypothesis: &[T]) -> Result<(usize, f64)> {
    let d = edit_distance(reference, hypothesis);
    if reference.is_empty() {
        return if hypothesis.is_empty() {
            Ok((0, 0.0))
        } else {
            Err(Error::UndefinedRate)
        };
    }
    Ok((d, d as f64 / reference.len() as f64))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UtteranceEval {
    pub id: String,
    pub distance: usize,
    pub ref_len: usize,
}

/// Corpus-level error rate: total distance over total reference length.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub utterances: Vec<UtteranceEval>,
    pub total_distance: usize,
    pub total_ref_len: usize,
    pub cer: f64,
}

impl EvalReport {
    /// Builds a report from `(id, reference, hypothesis)` triples.
    pub fn from_pairs<'a, I>(pairs: I) -> Result<Self>
    where
        I: IntoIterator<Item = (&'a str, &'a [u32], &'a [u32])>,
    {
        let mut utterances = Vec::new();
        for (id, reference, hypothesis) in pairs {
            utterances.push(UtteranceEval {
                id: id.to_string(),
                distance: edit_distance(reference, hypothesis),
                ref_len: reference.len(),
            });
        }
        let total_distance: usize = utterances.iter().map(|u| u.distance).sum();
        let total_ref_len: usize = utterances.iter().map(|u| u.ref_len).sum();
        let cer = if total_ref_len > 0 {
            total_distance as f64 / total_ref_len as f64
        } else if total_distance == 0 {
            0.0
        } else {
            return Err(Error::UndefinedRate);
        };
        Ok(Self {
            utterances,
            total_distance,
            total_ref_len,
            cer,
        })
    }
}

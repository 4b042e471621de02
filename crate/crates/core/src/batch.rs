//! Multi-utterance decoding: length-sorted batch packing and lockstep search.
//!
//! A batch pads every grid to its longest member with blank-certain frames,
//! but each utterance's search is masked to its own frame count and step
//! bound, so batched results equal sequential ones exactly. At every step the
//! attention queries of all unfinished utterances go to the scorer as one
//! group. An utterance that has finished stays frozen while the rest of the
//! batch continues.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::model::{DecodeResult, DecoderConfig, Utterance};
use crate::scalar::LogFloat;
use crate::scorer::{AttentionScorer, ScoreQuery};
use crate::search::{beam_search_with_stats, top_b, DecodeStats, UtteranceSearch};

#[derive(Debug, Clone)]
pub struct Batch<S> {
    /// Members, padded to `padded_frames`.
    pub utterances: Vec<Utterance<S>>,
    /// Position of each member in the list given to [`make_batches`].
    pub source_index: Vec<usize>,
    pub padded_frames: usize,
}

impl<S> Batch<S> {
    pub fn len(&self) -> usize {
        self.utterances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.utterances.is_empty()
    }
}

/// Sorts by frame count (stable) and groups consecutive runs of
/// `batch_size`, padding each group to its longest member.
pub fn make_batches<S: LogFloat>(
    utterances: &[Utterance<S>],
    batch_size: usize,
) -> Result<Vec<Batch<S>>> {
    if batch_size == 0 {
        return Err(Error::InvalidConfig("batch size must be at least 1".into()));
    }
    let mut order: Vec<usize> = (0..utterances.len()).collect();
    order.sort_by_key(|&i| utterances[i].true_frames);
    order
        .chunks(batch_size)
        .map(|chunk| {
            let padded_frames = chunk
                .iter()
                .map(|&i| utterances[i].true_frames)
                .max()
                .expect("chunks are non-empty");
            let utterances = chunk
                .iter()
                .map(|&i| {
                    let u = &utterances[i];
                    u.padded(padded_frames.max(u.grid.frames()))
                        .map_err(|e| e.for_utterance(&u.id))
                })
                .collect::<Result<_>>()?;
            Ok(Batch {
                utterances,
                source_index: chunk.to_vec(),
                padded_frames,
            })
        })
        .collect()
}

/// Per-utterance top-`b` selection over flattened `B × |C|` scores.
pub fn topb_per_utterance<S: LogFloat>(scores: &[Vec<S>], b: usize) -> Vec<Vec<usize>> {
    scores.iter().map(|s| top_b(s, b)).collect()
}

/// Decodes a batch in lockstep. Results follow the batch's member order.
pub fn batched_beam_search<S: LogFloat, A: AttentionScorer<S> + ?Sized>(
    batch: &Batch<S>,
    scorer: &A,
    cfg: &DecoderConfig,
) -> Result<Vec<(DecodeResult, DecodeStats)>> {
    let mut searches: Vec<UtteranceSearch<'_, S>> = batch
        .utterances
        .iter()
        .map(|u| {
            if scorer.vocab() != u.grid.vocab() {
                return Err(Error::ScorerShape {
                    expected: u.grid.vocab(),
                    got: scorer.vocab(),
                }
                .for_utterance(&u.id));
            }
            UtteranceSearch::new(u, cfg).map_err(|e| e.for_utterance(&u.id))
        })
        .collect::<Result<_>>()?;

    while searches.iter().any(|s| !s.is_done()) {
        let (counts, answers) = {
            let per_utt: Vec<Vec<ScoreQuery<'_>>> = searches.iter().map(|s| s.queries()).collect();
            let counts: Vec<usize> = per_utt.iter().map(Vec::len).collect();
            let flat: Vec<ScoreQuery<'_>> = per_utt.into_iter().flatten().collect();
            let answers = scorer.score_batch(&flat).map_err(|e| match flat.first() {
                Some(q) if counts.iter().filter(|&&n| n > 0).count() == 1 => {
                    e.for_utterance(q.utterance_id)
                }
                _ => e,
            })?;
            if answers.len() != flat.len() {
                return Err(Error::ScorerShape {
                    expected: flat.len(),
                    got: answers.len(),
                });
            }
            (counts, answers)
        };
        let mut answers = answers.into_iter();
        let work: Vec<(&mut UtteranceSearch<'_, S>, Vec<Vec<S>>)> = searches
            .iter_mut()
            .zip(counts)
            .filter(|(s, _)| !s.is_done())
            .map(|(s, n)| (s, answers.by_ref().take(n).collect()))
            .collect();
        work.into_par_iter()
            .map(|(s, att)| s.advance(att).map_err(|e| e.for_utterance(s.id())))
            .collect::<Result<Vec<()>>>()?;
    }
    Ok(searches.iter().map(|s| (s.result(), s.stats())).collect())
}

/// Decodes every utterance, batching by length when `batch_size > 1`.
/// Distinct batches run in parallel on the current rayon pool. Results come
/// back in input order.
pub fn decode_all<S: LogFloat, A: AttentionScorer<S> + ?Sized>(
    utterances: &[Utterance<S>],
    scorer: &A,
    cfg: &DecoderConfig,
    batch_size: usize,
) -> Result<Vec<(DecodeResult, DecodeStats)>> {
    if batch_size == 1 {
        return utterances
            .par_iter()
            .map(|u| beam_search_with_stats(u, scorer, cfg))
            .collect();
    }
    let batches = make_batches(utterances, batch_size)?;
    let decoded: Vec<Vec<(DecodeResult, DecodeStats)>> = batches
        .par_iter()
        .map(|b| batched_beam_search(b, scorer, cfg))
        .collect::<Result<_>>()?;
    let mut out: Vec<Option<(DecodeResult, DecodeStats)>> = vec![None; utterances.len()];
    for (batch, results) in batches.iter().zip(decoded) {
        for (&i, r) in batch.source_index.iter().zip(results) {
            out[i] = Some(r);
        }
    }
    Ok(out
        .into_iter()
        .map(|r| r.expect("every utterance is batched once"))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scorer::{LoopScorer, UniformScorer};
    use crate::search::beam_search;
    use crate::synth::{planted_grid, random_grid, random_table, PlantedParams};

    fn utt(id: &str, frames: usize, seed: u64) -> Utterance<f64> {
        Utterance::new(id, random_grid(frames, 3, 10, seed))
    }

    #[test]
    fn sort_and_chunk() {
        let utts: Vec<_> = [100, 50, 200, 60]
            .iter()
            .enumerate()
            .map(|(i, &t)| utt(&format!("u{i}"), t, i as u64))
            .collect();
        let batches = make_batches(&utts, 2).unwrap();
        let lens: Vec<Vec<usize>> = batches
            .iter()
            .map(|b| b.utterances.iter().map(|u| u.true_frames).collect())
            .collect();
        assert_eq!(lens, vec![vec![50, 60], vec![100, 200]]);
        assert_eq!(batches[0].padded_frames, 60);
        assert_eq!(batches[1].utterances[0].grid.frames(), 200);
        assert_eq!(batches[0].source_index, vec![1, 3]);
        assert_eq!(make_batches(&utts, 10).unwrap().len(), 1);
        assert!(make_batches::<f64>(&[], 4).unwrap().is_empty());
        assert!(make_batches(&utts, 0).is_err());
    }

    #[test]
    fn topb_examples() {
        let s = vec![vec![1.0, 5.0, 2.0], vec![0.0; 4]];
        assert_eq!(topb_per_utterance(&s, 1), vec![vec![1], vec![0]]);
        assert_eq!(topb_per_utterance(&s, 2), vec![vec![1, 2], vec![0, 1]]);
    }

    #[test]
    fn identical_pair_matches_single() {
        let a = utt("a", 40, 3);
        let b = Utterance {
            id: "b".into(),
            ..a.clone()
        };
        let scorer = random_table(3, 2, 1);
        let cfg = DecoderConfig::default();
        let batch = make_batches(&[a.clone(), b], 2).unwrap();
        let out = batched_beam_search(&batch[0], &scorer, &cfg).unwrap();
        let single = beam_search(&a, &scorer, &cfg).unwrap();
        assert_eq!(out[0].0, single);
        assert_eq!(out[1].0.tokens, single.tokens);
        assert_eq!(out[1].0.joint_logp, single.joint_logp);
    }

    #[test]
    fn mixed_lengths_match_sequential() {
        let p = PlantedParams::default();
        let short = Utterance::new("s", planted_grid::<f64>(50, 4, 10, 1, &p).grid);
        let long = Utterance::new("l", planted_grid::<f64>(200, 4, 10, 2, &p).grid);
        let scorer = random_table(4, 2, 7);
        let cfg = DecoderConfig::default();
        let utts = [long, short];
        let batched = decode_all(&utts, &scorer, &cfg, 2).unwrap();
        for (u, (r, stats)) in utts.iter().zip(&batched) {
            let (single, single_stats) = beam_search_with_stats(u, &scorer, &cfg).unwrap();
            assert_eq!(r, &single);
            assert_eq!(stats, &single_stats);
        }
    }

    #[test]
    fn single_member_batch_matches_including_trigger() {
        let u = utt("x", 60, 9);
        let scorer = LoopScorer::new(4, 0, 0.9).unwrap();
        let cfg = DecoderConfig::default();
        let b = make_batches(std::slice::from_ref(&u), 1).unwrap();
        let r = batched_beam_search(&b[0], &scorer, &cfg).unwrap();
        assert_eq!(r[0].0, beam_search(&u, &scorer, &cfg).unwrap());
    }

    #[test]
    fn scorer_width_mismatch_names_the_utterance() {
        let u = utt("bad-one", 10, 1);
        let b = make_batches(&[u], 1).unwrap();
        let err = batched_beam_search(&b[0], &UniformScorer::new(9), &DecoderConfig::default())
            .unwrap_err();
        assert!(err.to_string().contains("bad-one"), "{err}");
    }
}

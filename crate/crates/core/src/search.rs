//! Label-synchronous beam search with joint CTC/attention scoring.
//!
//! Each step extends every live hypothesis by one token. A child's joint
//! score is `λ·ψ + (1−λ)·(att_logp + att[c])`, where `ψ` is the CTC prefix
//! score of the extended prefix. Ending a hypothesis scores
//! `λ·P_ctc(exact) + (1−λ)·(att_logp + att[eos])`; it enters the finished set
//! when it beats every continuation of the utterance at that step. The best
//! `B` children over the whole `B × |C|` expansion form the next beam.
//!
//! [`UtteranceSearch`] holds the per-utterance state so the batched decoder
//! can drive several searches in lockstep; [`beam_search`] drives one.

use crate::ctc::{batch_window, window_for, CtcForwardState, CtcScorer, Window};
use crate::error::{Error, Result};
use crate::model::{DecodeResult, DecoderConfig, EosMode, EosTrigger, FinishRule, Utterance};
use crate::scalar::{to_f64, LogFloat};
use crate::scorer::{check_scores, AttentionScorer, ScoreQuery};

#[derive(Debug, Clone)]
pub struct Hypothesis<S> {
    pub tokens: Vec<u32>,
    pub att_logp: S,
    /// CTC prefix score of `tokens`.
    pub ctc_logp: S,
    pub joint: S,
    pub fwd: CtcForwardState<S>,
    pub label_times: Vec<u32>,
}

impl<S: LogFloat> Hypothesis<S> {
    fn root(fwd: CtcForwardState<S>) -> Self {
        Self {
            tokens: Vec::new(),
            att_logp: S::zero(),
            ctc_logp: S::zero(),
            joint: S::zero(),
            fwd,
            label_times: Vec::new(),
        }
    }

    /// No alignment reaches this prefix.
    pub fn is_dead(&self) -> bool {
        self.ctc_logp.is_log_zero() || self.fwd.is_dead()
    }
}

/// An `<eos>`-ended hypothesis. `tokens` excludes the `<eos>`.
#[derive(Debug, Clone, PartialEq)]
pub struct FinishedEntry<S> {
    pub tokens: Vec<u32>,
    pub joint: S,
    /// Frame of the last label, 0 for the empty sequence.
    pub tau_last: usize,
    pub label_times: Vec<u32>,
}

impl<S> FinishedEntry<S> {
    /// Output length counting the `<eos>`, i.e. the step it finished at.
    pub fn output_len(&self) -> usize {
        self.tokens.len() + 1
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FinishedSet<S> {
    entries: Vec<FinishedEntry<S>>,
}

impl<S> Default for FinishedSet<S> {
    fn default() -> Self {
        Self {
            entries: Vec::new(),
        }
    }
}

impl<S: LogFloat> FinishedSet<S> {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, entry: FinishedEntry<S>) {
        self.entries.push(entry);
    }

    pub fn entries(&self) -> &[FinishedEntry<S>] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Highest-scoring entry; the earliest one on ties.
    pub fn best(&self) -> Option<&FinishedEntry<S>> {
        self.entries
            .iter()
            .fold(None, |acc: Option<&FinishedEntry<S>>, e| match acc {
                Some(b) if b.joint >= e.joint => Some(b),
                _ => Some(e),
            })
    }

    pub fn max_joint(&self) -> Option<S> {
        self.best().map(|e| e.joint)
    }

    pub fn max_joint_of_len(&self, len: usize) -> Option<S> {
        self.entries
            .iter()
            .filter(|e| e.output_len() == len)
            .map(|e| e.joint)
            .fold(None, |acc, j| Some(acc.map_or(j, |a: S| a.max(j))))
    }

    /// Entries whose last label sits on frame `len_h`.
    pub fn count_saturated(&self, len_h: usize) -> usize {
        self.entries.iter().filter(|e| e.tau_last == len_h).count()
    }
}

/// Score-window detector: every one of the last `m` output lengths up to `l`
/// has a best entry more than `d_end` nats below the overall best. A length
/// with no entries fails its clause.
pub fn end_detect_baseline<S: LogFloat>(
    finished: &FinishedSet<S>,
    l: usize,
    m: usize,
    d_end: f64,
) -> bool {
    let Some(best) = finished.max_joint() else {
        return false;
    };
    (0..m).all(|k| {
        l.checked_sub(k)
            .and_then(|len| finished.max_joint_of_len(len))
            .is_some_and(|v| to_f64(v) - to_f64(best) < d_end)
    })
}

/// Time-saturation detector: more than `c` entries end their last label on
/// the final frame `len_h`.
pub fn end_detect_ctc<S: LogFloat>(finished: &FinishedSet<S>, len_h: usize, c: usize) -> bool {
    finished.count_saturated(len_h) > c
}

/// Runs the detectors selected by `cfg.eos_mode` after step `l`.
pub fn end_detect<S: LogFloat>(
    finished: &FinishedSet<S>,
    l: usize,
    len_h: usize,
    cfg: &DecoderConfig,
) -> Option<EosTrigger> {
    let baseline = matches!(cfg.eos_mode, EosMode::Baseline | EosMode::Both);
    let ctc = matches!(cfg.eos_mode, EosMode::Ctc | EosMode::Both);
    if baseline && end_detect_baseline(finished, l, cfg.eos_m, cfg.eos_threshold) {
        return Some(EosTrigger::Baseline);
    }
    if ctc && end_detect_ctc(finished, len_h, cfg.eos_c) {
        return Some(EosTrigger::Ctc);
    }
    None
}

/// Scores of one hypothesis's expansions at one step.
#[derive(Debug, Clone, PartialEq)]
pub struct StepScores<S> {
    /// Joint score of each token continuation.
    pub joint: Vec<S>,
    /// Joint score of ending here.
    pub eos_joint: S,
    /// CTC prefix score of each continuation.
    pub psi: Vec<S>,
    /// CTC probability of the hypothesis as a complete sequence.
    pub eos_ctc: S,
}

/// Expansion scores of `hyp` given the attention vector `att` (tokens then
/// `<eos>`). The hypothesis's forward state must cover every frame.
pub fn joint_step_scores<S: LogFloat>(
    hyp: &Hypothesis<S>,
    ctc: &mut CtcScorer<'_, S>,
    att: &[S],
    window: Window,
    ctc_weight: f64,
) -> Result<StepScores<S>> {
    let size_c = att.len() - 1;
    let lambda = S::lit(ctc_weight);
    let rest = S::one() - lambda;
    let eos_ctc = ctc.eos_score(&hyp.fwd)?;
    let psi: Vec<S> = if ctc_weight == 0.0 || hyp.is_dead() {
        vec![S::neg_inf(); size_c]
    } else {
        (0..size_c as u32)
            .map(|c| ctc.prefix_psi(&hyp.fwd, c, window))
            .collect::<Result<_>>()?
    };
    let combine = |ctc_part: S, att_part: S| {
        if ctc_weight == 0.0 {
            att_part
        } else if ctc_weight == 1.0 {
            ctc_part
        } else {
            lambda * ctc_part + rest * att_part
        }
    };
    let joint = (0..size_c)
        .map(|c| combine(psi[c], hyp.att_logp + att[c]))
        .collect();
    let eos_joint = combine(eos_ctc, hyp.att_logp + att[size_c]);
    Ok(StepScores {
        joint,
        eos_joint,
        psi,
        eos_ctc,
    })
}

/// Indices of the `b` largest scores, ordered by score descending and then by
/// index ascending.
pub fn top_b<S: LogFloat>(scores: &[S], b: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&x, &y| to_f64(scores[y]).total_cmp(&to_f64(scores[x])));
    idx.truncate(b);
    idx
}

/// Counters of one search.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct DecodeStats {
    pub steps: usize,
    pub scorer_queries: u64,
    pub ctc_frames_evaluated: u64,
}

impl std::ops::AddAssign for DecodeStats {
    fn add_assign(&mut self, o: Self) {
        self.steps += o.steps;
        self.scorer_queries += o.scorer_queries;
        self.ctc_frames_evaluated += o.ctc_frames_evaluated;
    }
}

/// Search state of one utterance.
pub struct UtteranceSearch<'a, S> {
    id: &'a str,
    ctc: CtcScorer<'a, S>,
    cfg: &'a DecoderConfig,
    vocab: usize,
    beam: Vec<Hypothesis<S>>,
    finished: FinishedSet<S>,
    step: usize,
    max_steps: usize,
    trigger: Option<EosTrigger>,
    scorer_queries: u64,
}

impl<'a, S: LogFloat> UtteranceSearch<'a, S> {
    pub fn new(utt: &'a Utterance<S>, cfg: &'a DecoderConfig) -> Result<Self> {
        cfg.validate()?;
        if utt.true_frames == 0 || utt.true_frames > utt.grid.frames() {
            return Err(Error::InvalidGrid(format!(
                "{} true frames in a {}-frame grid",
                utt.true_frames,
                utt.grid.frames()
            )));
        }
        let mut ctc = CtcScorer::masked(&utt.grid, utt.true_frames);
        let root = Hypothesis::root(ctc.init_state());
        Ok(Self {
            id: &utt.id,
            ctc,
            cfg,
            vocab: utt.grid.vocab(),
            beam: vec![root],
            finished: FinishedSet::new(),
            step: 0,
            max_steps: cfg.max_steps(utt.true_frames),
            trigger: None,
            scorer_queries: 0,
        })
    }

    pub fn id(&self) -> &str {
        self.id
    }

    pub fn is_done(&self) -> bool {
        self.trigger.is_some()
    }

    pub fn beam(&self) -> &[Hypothesis<S>] {
        &self.beam
    }

    pub fn finished(&self) -> &FinishedSet<S> {
        &self.finished
    }

    pub fn stats(&self) -> DecodeStats {
        DecodeStats {
            steps: self.step,
            scorer_queries: self.scorer_queries,
            ctc_frames_evaluated: self.ctc.frames_evaluated(),
        }
    }

    /// Attention queries for the next step, one per live hypothesis; empty
    /// once the search is done.
    pub fn queries(&self) -> Vec<ScoreQuery<'_>> {
        if self.is_done() {
            return Vec::new();
        }
        self.beam
            .iter()
            .map(|h| ScoreQuery {
                utterance_id: self.id,
                prefix: &h.tokens,
            })
            .collect()
    }

    /// Shared window for every child of this step.
    fn step_window(&self, l: usize) -> Result<Window> {
        let frames = self.ctc.frames();
        if self.cfg.full_range_ctc {
            return Ok(Window::new(1, frames));
        }
        let windows: Vec<Window> = self
            .beam
            .iter()
            .map(|h| {
                window_for(
                    h.fwd.tau(),
                    h.fwd.tau_tilde(),
                    self.cfg.margin_m1,
                    self.cfg.margin_m2,
                    l,
                    frames,
                )
            })
            .collect();
        batch_window(&windows)
    }

    /// Runs one step given the attention vectors answering [`Self::queries`].
    pub fn advance(&mut self, att: Vec<Vec<S>>) -> Result<()> {
        if self.is_done() {
            return Ok(());
        }
        if att.len() != self.beam.len() {
            return Err(Error::ScorerShape {
                expected: self.beam.len(),
                got: att.len(),
            });
        }
        for v in &att {
            check_scores(v, self.vocab)?;
        }
        self.scorer_queries += att.len() as u64;
        self.step += 1;
        let l = self.step;
        let frames = self.ctc.frames();
        let size_c = self.vocab - 1;

        for h in &mut self.beam {
            self.ctc.extend(&mut h.fwd, frames);
        }
        let window = self.step_window(l)?;

        let mut scores = Vec::with_capacity(self.beam.len());
        for (h, a) in self.beam.iter().zip(&att) {
            scores.push(joint_step_scores(
                h,
                &mut self.ctc,
                a,
                window,
                self.cfg.ctc_weight,
            )?);
        }
        let flat: Vec<S> = scores
            .iter()
            .flat_map(|s| s.joint.iter().copied())
            .collect();
        let best_score = flat.iter().copied().fold(S::neg_inf(), S::max);

        for (h, s) in self.beam.iter().zip(&scores) {
            let alive = self.cfg.ctc_weight == 0.0 || !s.eos_ctc.is_log_zero();
            let enters = match self.cfg.finish_rule {
                FinishRule::BeatsBest => s.eos_joint > best_score,
                FinishRule::Always => true,
            };
            if alive && enters {
                self.finished.push(FinishedEntry {
                    tokens: h.tokens.clone(),
                    joint: s.eos_joint,
                    tau_last: h.label_times.last().map_or(0, |&t| t as usize),
                    label_times: h.label_times.clone(),
                });
            }
        }

        let mut next = Vec::with_capacity(self.cfg.beam_width);
        for k in top_b(&flat, self.cfg.beam_width) {
            let (j, c) = (k / size_c, k % size_c);
            let parent = &self.beam[j];
            let fwd = self.ctc.advance(&parent.fwd, c as u32, window)?;
            let mut tokens = parent.tokens.clone();
            tokens.push(c as u32);
            let mut label_times = parent.label_times.clone();
            label_times.push(fwd.tau() as u32);
            next.push(Hypothesis {
                tokens,
                att_logp: parent.att_logp + att[j][c],
                ctc_logp: scores[j].psi[c],
                joint: flat[k],
                fwd,
                label_times,
            });
        }
        self.beam = next;

        self.trigger = end_detect(&self.finished, l, frames, self.cfg);
        if self.trigger.is_none() && l >= self.max_steps {
            self.trigger = Some(EosTrigger::MaxLen);
        }
        Ok(())
    }

    /// Best finished hypothesis, or the best live one when nothing finished.
    pub fn result(&self) -> DecodeResult {
        let trigger = self.trigger.unwrap_or(EosTrigger::MaxLen);
        let (tokens, joint, label_times) = match self.finished.best() {
            Some(e) => (e.tokens.clone(), e.joint, e.label_times.clone()),
            None => {
                let flat: Vec<S> = self.beam.iter().map(|h| h.joint).collect();
                let h = &self.beam[top_b(&flat, 1)[0]];
                (h.tokens.clone(), h.joint, h.label_times.clone())
            }
        };
        DecodeResult {
            id: self.id.to_string(),
            tokens,
            text: None,
            joint_logp: to_f64(joint),
            label_times,
            steps_taken: self.step,
            eos_trigger: trigger,
        }
    }
}

/// Decodes one utterance, returning the result and the search counters.
pub fn beam_search_with_stats<S: LogFloat, A: AttentionScorer<S> + ?Sized>(
    utt: &Utterance<S>,
    scorer: &A,
    cfg: &DecoderConfig,
) -> Result<(DecodeResult, DecodeStats)> {
    let run = || {
        if scorer.vocab() != utt.grid.vocab() {
            return Err(Error::ScorerShape {
                expected: utt.grid.vocab(),
                got: scorer.vocab(),
            });
        }
        let mut search = UtteranceSearch::new(utt, cfg)?;
        while !search.is_done() {
            let att = scorer.score_batch(&search.queries())?;
            search.advance(att)?;
        }
        Ok((search.result(), search.stats()))
    };
    run().map_err(|e| e.for_utterance(&utt.id))
}

pub fn beam_search<S: LogFloat, A: AttentionScorer<S> + ?Sized>(
    utt: &Utterance<S>,
    scorer: &A,
    cfg: &DecoderConfig,
) -> Result<DecodeResult> {
    beam_search_with_stats(utt, scorer, cfg).map(|(r, _)| r)
}

//! Attention-decoder scorers.
//!
//! A scorer maps `(utterance id, token prefix)` to a normalized log-probability
//! vector over the `|C|` tokens followed by `<eos>`. Implementations must be
//! deterministic and safe to query from several workers; any cache they keep
//! must not change the values returned. The search only ever extends a prefix
//! by one token per step, so prefix-keyed caches stay warm.

use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::NORM_TOL;
use crate::scalar::{log_sum_exp, to_f64, LogFloat};

#[derive(Debug, Clone, Copy)]
pub struct ScoreQuery<'a> {
    pub utterance_id: &'a str,
    pub prefix: &'a [u32],
}

pub trait AttentionScorer<S: LogFloat>: Send + Sync {
    /// Output width, `|C| + 1`.
    fn vocab(&self) -> usize;

    fn score(&self, utterance_id: &str, prefix: &[u32]) -> Result<Vec<S>>;

    /// Answers a group of queries issued at the same decoding step. Must equal
    /// answering each query alone.
    fn score_batch(&self, queries: &[ScoreQuery<'_>]) -> Result<Vec<Vec<S>>> {
        queries
            .iter()
            .map(|q| self.score(q.utterance_id, q.prefix))
            .collect()
    }
}

impl<S: LogFloat, T: AttentionScorer<S> + ?Sized> AttentionScorer<S> for Box<T> {
    fn vocab(&self) -> usize {
        (**self).vocab()
    }

    fn score(&self, utterance_id: &str, prefix: &[u32]) -> Result<Vec<S>> {
        (**self).score(utterance_id, prefix)
    }

    fn score_batch(&self, queries: &[ScoreQuery<'_>]) -> Result<Vec<Vec<S>>> {
        (**self).score_batch(queries)
    }
}

/// Rejects vectors of the wrong width or that do not normalize.
pub fn check_scores<S: LogFloat>(scores: &[S], vocab: usize) -> Result<()> {
    if scores.len() != vocab {
        return Err(Error::ScorerShape {
            expected: vocab,
            got: scores.len(),
        });
    }
    let lse = to_f64(log_sum_exp(scores));
    if lse.is_nan() || lse.abs() > NORM_TOL {
        return Err(Error::ScorerNotNormalized(lse));
    }
    Ok(())
}

fn uniform_vector<S: LogFloat>(vocab: usize) -> Vec<S> {
    vec![S::lit(-(vocab as f64).ln()); vocab]
}

/// Same distribution for every prefix.
#[derive(Debug, Clone)]
pub struct UniformScorer {
    vocab: usize,
}

impl UniformScorer {
    pub fn new(vocab: usize) -> Self {
        assert!(vocab >= 2);
        Self { vocab }
    }
}

impl<S: LogFloat> AttentionScorer<S> for UniformScorer {
    fn vocab(&self) -> usize {
        self.vocab
    }

    fn score(&self, _utterance_id: &str, _prefix: &[u32]) -> Result<Vec<S>> {
        Ok(uniform_vector(self.vocab))
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct TableEntry {
    ctx: Vec<u32>,
    logp: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct TableFile {
    order: usize,
    entries: Vec<TableEntry>,
}

/// n-gram lookup on the last `order - 1` tokens, uniform when the context is
/// missing.
#[derive(Debug, Clone)]
pub struct TableScorer {
    order: usize,
    vocab: usize,
    table: HashMap<Vec<u32>, Vec<f64>>,
}

impl TableScorer {
    pub fn new(order: usize, vocab: usize, entries: Vec<(Vec<u32>, Vec<f64>)>) -> Result<Self> {
        if order == 0 {
            return Err(Error::MalformedTable("order must be at least 1".into()));
        }
        if vocab < 2 {
            return Err(Error::MalformedTable(format!("vocab {vocab} too small")));
        }
        let mut table = HashMap::with_capacity(entries.len());
        for (ctx, logp) in entries {
            if ctx.len() >= order {
                return Err(Error::MalformedTable(format!(
                    "context {ctx:?} longer than order {order} allows"
                )));
            }
            if let Some(&t) = ctx.iter().find(|&&t| t as usize + 1 >= vocab) {
                return Err(Error::MalformedTable(format!(
                    "context token {t} out of range"
                )));
            }
            check_scores(&logp, vocab)
                .map_err(|e| Error::MalformedTable(format!("context {ctx:?}: {e}")))?;
            if table.insert(ctx.clone(), logp).is_some() {
                return Err(Error::MalformedTable(format!("duplicate context {ctx:?}")));
            }
        }
        Ok(Self {
            order,
            vocab,
            table,
        })
    }

    /// Parses the JSON table format; the vocabulary width comes from the
    /// entries, or from `vocab` when given.
    pub fn from_json(text: &str, vocab: Option<usize>) -> Result<Self> {
        let file: TableFile =
            serde_json::from_str(text).map_err(|e| Error::MalformedTable(e.to_string()))?;
        let vocab = match (vocab, file.entries.first()) {
            (Some(v), _) => v,
            (None, Some(e)) => e.logp.len(),
            (None, None) => {
                return Err(Error::MalformedTable(
                    "no entries to infer the vocabulary from".into(),
                ))
            }
        };
        Self::new(
            file.order,
            vocab,
            file.entries.into_iter().map(|e| (e.ctx, e.logp)).collect(),
        )
    }

    pub fn load(path: &Path, vocab: Option<usize>) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text, vocab)
    }

    pub fn to_json(&self) -> String {
        let mut entries: Vec<TableEntry> = self
            .table
            .iter()
            .map(|(ctx, logp)| TableEntry {
                ctx: ctx.clone(),
                logp: logp.clone(),
            })
            .collect();
        entries.sort_by(|a, b| {
            a.ctx
                .len()
                .cmp(&b.ctx.len())
                .then_with(|| a.ctx.cmp(&b.ctx))
        });
        serde_json::to_string(&TableFile {
            order: self.order,
            entries,
        })
        .expect("table serializes")
    }

    pub fn order(&self) -> usize {
        self.order
    }

    fn context<'p>(&self, prefix: &'p [u32]) -> &'p [u32] {
        let keep = (self.order - 1).min(prefix.len());
        &prefix[prefix.len() - keep..]
    }
}

impl<S: LogFloat> AttentionScorer<S> for TableScorer {
    fn vocab(&self) -> usize {
        self.vocab
    }

    fn score(&self, _utterance_id: &str, prefix: &[u32]) -> Result<Vec<S>> {
        Ok(match self.table.get(self.context(prefix)) {
            Some(v) => v.iter().map(|&x| S::lit(x)).collect(),
            None => uniform_vector(self.vocab),
        })
    }

    fn score_batch(&self, queries: &[ScoreQuery<'_>]) -> Result<Vec<Vec<S>>> {
        // contexts repeat heavily within a step; look each up once
        let mut seen: HashMap<&[u32], usize> = HashMap::new();
        let mut distinct: Vec<Vec<S>> = Vec::new();
        let mut out = Vec::with_capacity(queries.len());
        for q in queries {
            let ctx = self.context(q.prefix);
            let idx = match seen.get(ctx) {
                Some(&i) => i,
                None => {
                    distinct.push(self.score(q.utterance_id, q.prefix)?);
                    seen.insert(ctx, distinct.len() - 1);
                    distinct.len() - 1
                }
            };
            out.push(distinct[idx].clone());
        }
        Ok(out)
    }
}

/// Puts `p_loop` on one token regardless of context, spreading the rest
/// evenly over the other tokens and `<eos>`. Drives runaway repetition.
#[derive(Debug, Clone)]
pub struct LoopScorer {
    vocab: usize,
    loop_token: u32,
    p_loop: f64,
}

impl LoopScorer {
    pub fn new(vocab: usize, loop_token: u32, p_loop: f64) -> Result<Self> {
        if !(p_loop > 0.5 && p_loop < 1.0) {
            return Err(Error::InvalidConfig(format!(
                "p_loop {p_loop} outside (0.5, 1)"
            )));
        }
        if vocab < 2 || loop_token as usize + 1 >= vocab {
            return Err(Error::InvalidConfig(format!(
                "loop token {loop_token} is not a label of a {vocab}-symbol vocabulary"
            )));
        }
        Ok(Self {
            vocab,
            loop_token,
            p_loop,
        })
    }
}

impl<S: LogFloat> AttentionScorer<S> for LoopScorer {
    fn vocab(&self) -> usize {
        self.vocab
    }

    fn score(&self, _utterance_id: &str, _prefix: &[u32]) -> Result<Vec<S>> {
        let rest = S::lit(((1.0 - self.p_loop) / (self.vocab - 1) as f64).ln());
        let mut v = vec![rest; self.vocab];
        v[self.loop_token as usize] = S::lit(self.p_loop.ln());
        Ok(v)
    }
}

/// Command-line scorer selector: `uniform`, `table:PATH` or `loop:TOKEN:P`.
#[derive(Debug, Clone, PartialEq)]
pub enum ScorerSpec {
    Uniform,
    Table(PathBuf),
    Loop { token: u32, p_loop: f64 },
}

impl FromStr for ScorerSpec {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        if s == "uniform" {
            return Ok(ScorerSpec::Uniform);
        }
        if let Some(path) = s.strip_prefix("table:") {
            if path.is_empty() {
                return Err("table scorer needs a path".into());
            }
            return Ok(ScorerSpec::Table(PathBuf::from(path)));
        }
        if let Some(rest) = s.strip_prefix("loop:") {
            let (token, p) = rest
                .split_once(':')
                .ok_or_else(|| format!("expected loop:TOKEN:P, got {s:?}"))?;
            let token = token
                .parse()
                .map_err(|_| format!("bad loop token {token:?}"))?;
            let p_loop = p
                .parse()
                .map_err(|_| format!("bad loop probability {p:?}"))?;
            return Ok(ScorerSpec::Loop { token, p_loop });
        }
        Err(format!(
            "unknown scorer {s:?}; expected uniform, table:PATH or loop:TOKEN:P"
        ))
    }
}

/// Scorer selected by a [`ScorerSpec`].
#[derive(Debug, Clone)]
pub enum AnyScorer {
    Uniform(UniformScorer),
    Table(TableScorer),
    Loop(LoopScorer),
}

impl ScorerSpec {
    pub fn build(&self, vocab: usize) -> Result<AnyScorer> {
        Ok(match self {
            ScorerSpec::Uniform => AnyScorer::Uniform(UniformScorer::new(vocab)),
            ScorerSpec::Table(path) => AnyScorer::Table(TableScorer::load(path, Some(vocab))?),
            ScorerSpec::Loop { token, p_loop } => {
                AnyScorer::Loop(LoopScorer::new(vocab, *token, *p_loop)?)
            }
        })
    }
}

impl<S: LogFloat> AttentionScorer<S> for AnyScorer {
    fn vocab(&self) -> usize {
        match self {
            AnyScorer::Uniform(s) => AttentionScorer::<S>::vocab(s),
            AnyScorer::Table(s) => AttentionScorer::<S>::vocab(s),
            AnyScorer::Loop(s) => AttentionScorer::<S>::vocab(s),
        }
    }

    fn score(&self, id: &str, prefix: &[u32]) -> Result<Vec<S>> {
        match self {
            AnyScorer::Uniform(s) => s.score(id, prefix),
            AnyScorer::Table(s) => s.score(id, prefix),
            AnyScorer::Loop(s) => s.score(id, prefix),
        }
    }

    fn score_batch(&self, queries: &[ScoreQuery<'_>]) -> Result<Vec<Vec<S>>> {
        match self {
            AnyScorer::Uniform(s) => s.score_batch(queries),
            AnyScorer::Table(s) => s.score_batch(queries),
            AnyScorer::Loop(s) => s.score_batch(queries),
        }
    }
}

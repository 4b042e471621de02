//! CTC prefix scoring.
//!
//! For a prefix `g` the forward state keeps two log-domain curves over frames:
//! `gamma_n[t]`, the probability that frames `1..=t` collapse to `g` with frame
//! `t` emitting the last label, and `gamma_b[t]`, the same with frame `t`
//! emitting blank. Extending `g` by a label `c` over a frame window `[s, e]`:
//!
//! ```text
//! phi[t]        = gamma_b[t-1](g) + (gamma_n[t-1](g) if last(g) != c)
//! gamma_n[t](gc) = (gamma_n[t-1](gc) + phi[t]) * p_t(c)
//! gamma_b[t](gc) = (gamma_b[t-1](gc) + gamma_n[t-1](gc)) * p_t(blank)
//! psi(gc)        = sum_{t in [s, e]} phi[t] * p_t(c)
//! ```
//!
//! (sums are log-adds, products log-domain sums). A window narrower than
//! `[step, T]` restricts where the new label may start; frames past the
//! window end are filled later by [`CtcScorer::extend`], which propagates
//! existing mass without admitting new label starts.
//!
//! Frame indices are 1-based; frame 0 is the virtual frame before the input.

pub mod oracle;

use crate::error::{Error, Result};
use crate::model::{Margin, PosteriorGrid};
use crate::scalar::LogFloat;

pub use oracle::{collapse, oracle_exact_score, oracle_prefix_score, CollapseTable};

/// Inclusive, 1-based frame range `[start, end]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Window {
    pub start: usize,
    pub end: usize,
}

impl Window {
    pub fn new(start: usize, end: usize) -> Self {
        Self { start, end }
    }

    pub fn len(&self) -> usize {
        self.end + 1 - self.start
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn contains(&self, other: &Window) -> bool {
        self.start <= other.start && other.end <= self.end
    }
}

/// Restricted range for the label at step `step`, given the previous label's
/// time `tau_prev` and trailing-blank time `tau_tilde_prev`:
/// `[max(tau_prev - m1, step, 1), min(tau_tilde_prev + m2, frames)]`.
/// A crossed range collapses to its end frame.
pub fn window_for(
    tau_prev: usize,
    tau_tilde_prev: usize,
    m1: Margin,
    m2: Margin,
    step: usize,
    frames: usize,
) -> Window {
    let from_tau = match m1 {
        Margin::Frames(m) => tau_prev.saturating_sub(m as usize),
        Margin::Unbounded => 0,
    };
    let end = match m2 {
        Margin::Frames(m) => (tau_tilde_prev + m as usize).min(frames),
        Margin::Unbounded => frames,
    };
    let end = end.max(1);
    let start = from_tau.max(step).max(1);
    Window {
        start: start.min(end),
        end,
    }
}

/// Smallest window covering every input window.
pub fn batch_window(windows: &[Window]) -> Result<Window> {
    let first = windows.first().ok_or(Error::EmptyWindows)?;
    Ok(windows.iter().fold(*first, |acc, w| Window {
        start: acc.start.min(w.start),
        end: acc.end.max(w.end),
    }))
}

/// Forward variables of one prefix.
#[derive(Debug, Clone, PartialEq)]
pub struct CtcForwardState<S> {
    /// Frame of `gamma_n[0]`; everything earlier is log-zero.
    first: usize,
    gamma_n: Vec<S>,
    gamma_b: Vec<S>,
    tau: usize,
    tau_tilde: usize,
    prefix_len: usize,
    last_label: Option<u32>,
}

impl<S: LogFloat> CtcForwardState<S> {
    #[inline]
    pub fn gamma_n(&self, t: usize) -> S {
        self.at(&self.gamma_n, t)
    }

    #[inline]
    pub fn gamma_b(&self, t: usize) -> S {
        self.at(&self.gamma_b, t)
    }

    #[inline]
    fn at(&self, curve: &[S], t: usize) -> S {
        if t < self.first {
            S::neg_inf()
        } else {
            let i = t - self.first;
            assert!(
                i < curve.len(),
                "frame {t} beyond covered {}",
                self.covered_to()
            );
            curve[i]
        }
    }

    /// Last frame with computed forward variables.
    pub fn covered_to(&self) -> usize {
        self.first + self.gamma_n.len() - 1
    }

    /// First frame that may hold non-zero mass.
    pub fn first_frame(&self) -> usize {
        self.first
    }

    /// Estimated frame of the last label.
    pub fn tau(&self) -> usize {
        self.tau
    }

    /// Estimated frame of the blank following the last label.
    pub fn tau_tilde(&self) -> usize {
        self.tau_tilde
    }

    pub fn prefix_len(&self) -> usize {
        self.prefix_len
    }

    pub fn last_label(&self) -> Option<u32> {
        self.last_label
    }

    /// `true` when no alignment reaches this prefix.
    pub fn is_dead(&self) -> bool {
        self.gamma_n
            .iter()
            .chain(self.gamma_b.iter())
            .all(|v| v.is_log_zero())
    }
}

/// CTC prefix scorer over one grid, masked to its first `frames` frames.
/// Counts every frame of forward recursion it evaluates.
#[derive(Debug)]
pub struct CtcScorer<'a, S> {
    grid: &'a PosteriorGrid<S>,
    frames: usize,
    blank: u32,
    frames_evaluated: u64,
}

impl<'a, S: LogFloat> CtcScorer<'a, S> {
    pub fn new(grid: &'a PosteriorGrid<S>) -> Self {
        Self::masked(grid, grid.frames())
    }

    /// Scorer that treats the grid as `frames` long (padding beyond is never
    /// read).
    pub fn masked(grid: &'a PosteriorGrid<S>, frames: usize) -> Self {
        assert!(
            frames <= grid.frames(),
            "mask {frames} beyond grid {}",
            grid.frames()
        );
        Self {
            grid,
            frames,
            blank: grid.blank_id(),
            frames_evaluated: 0,
        }
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn frames_evaluated(&self) -> u64 {
        self.frames_evaluated
    }

    #[inline]
    fn logp(&self, t: usize, symbol: u32) -> S {
        self.grid.get(t - 1, symbol)
    }

    fn check_label(&self, c: u32) -> Result<()> {
        if c >= self.blank {
            Err(Error::NotCtcLabel(c))
        } else {
            Ok(())
        }
    }

    /// Forward state of the empty prefix: all-blank paths.
    pub fn init_state(&mut self) -> CtcForwardState<S> {
        let t_max = self.frames;
        let mut gamma_b = Vec::with_capacity(t_max + 1);
        gamma_b.push(S::zero());
        for t in 1..=t_max {
            let prev = gamma_b[t - 1];
            gamma_b.push(prev.log_mul(self.logp(t, self.blank)));
        }
        self.frames_evaluated += t_max as u64;
        CtcForwardState {
            first: 0,
            gamma_n: vec![S::neg_inf(); t_max + 1],
            gamma_b,
            tau: 1,
            tau_tilde: 1,
            prefix_len: 0,
            last_label: None,
        }
    }

    fn ensure_covered(&self, state: &CtcForwardState<S>, needed: usize) -> Result<()> {
        if state.covered_to() < needed {
            Err(Error::StateNotAdvanced {
                covered: state.covered_to(),
                needed,
            })
        } else {
            Ok(())
        }
    }

    #[inline]
    fn phi(state: &CtcForwardState<S>, t: usize, c: u32) -> S {
        let b = state.gamma_b(t - 1);
        if state.last_label == Some(c) {
            b
        } else {
            b.log_add(state.gamma_n(t - 1))
        }
    }

    /// Prefix score of `state`'s prefix extended by `c`, summed over `window`.
    pub fn prefix_psi(&mut self, state: &CtcForwardState<S>, c: u32, window: Window) -> Result<S> {
        self.check_label(c)?;
        let window = self.clip(window);
        self.ensure_covered(state, window.end - 1)?;
        let mut psi = S::neg_inf();
        for t in window.start..=window.end {
            psi = psi.log_add(Self::phi(state, t, c).log_mul(self.logp(t, c)));
        }
        self.frames_evaluated += window.len() as u64;
        Ok(psi)
    }

    /// Forward state of `state`'s prefix extended by `c`, with the label
    /// allowed to start only inside `window`.
    pub fn advance(
        &mut self,
        state: &CtcForwardState<S>,
        c: u32,
        window: Window,
    ) -> Result<CtcForwardState<S>> {
        Ok(self.step(state, c, window)?.1)
    }

    /// One prefix extension: returns `(psi, next_state)`.
    pub fn prefix_score_step(
        &mut self,
        state: &CtcForwardState<S>,
        c: u32,
        window: Window,
    ) -> Result<(S, CtcForwardState<S>)> {
        self.step(state, c, window)
    }

    fn step(
        &mut self,
        state: &CtcForwardState<S>,
        c: u32,
        window: Window,
    ) -> Result<(S, CtcForwardState<S>)> {
        self.check_label(c)?;
        let window = self.clip(window);
        self.ensure_covered(state, window.end - 1)?;
        let len = window.len() + 1;
        let mut gamma_n = Vec::with_capacity(len);
        let mut gamma_b = Vec::with_capacity(len);
        gamma_n.push(S::neg_inf());
        gamma_b.push(S::neg_inf());
        let mut psi = S::neg_inf();
        for t in window.start..=window.end {
            let phi = Self::phi(state, t, c);
            let p_c = self.logp(t, c);
            let (n_prev, b_prev) = (*gamma_n.last().unwrap(), *gamma_b.last().unwrap());
            psi = psi.log_add(phi.log_mul(p_c));
            gamma_n.push(n_prev.log_add(phi).log_mul(p_c));
            gamma_b.push(b_prev.log_add(n_prev).log_mul(self.logp(t, self.blank)));
        }
        self.frames_evaluated += window.len() as u64;

        let mut next = CtcForwardState {
            first: window.start - 1,
            gamma_n,
            gamma_b,
            tau: state.tau,
            tau_tilde: state.tau,
            prefix_len: state.prefix_len + 1,
            last_label: Some(c),
        };
        let lo = state.tau;
        let hi = lo.max(window.end);
        next.tau = argmax_frame(&next, lo, hi, |s, t| s.gamma_n(t));
        next.tau_tilde = argmax_frame(&next, lo, hi, |s, t| s.gamma_b(t));
        Ok((psi, next))
    }

    /// Propagates `state` through frame `to` without admitting new label
    /// starts. Returns the number of frames computed.
    pub fn extend(&mut self, state: &mut CtcForwardState<S>, to: usize) -> usize {
        let to = to.min(self.frames);
        let from = state.covered_to();
        if to <= from {
            return 0;
        }
        for t in from + 1..=to {
            let n_prev = *state.gamma_n.last().unwrap();
            let b_prev = *state.gamma_b.last().unwrap();
            let n = match state.last_label {
                Some(c) => n_prev.log_mul(self.logp(t, c)),
                None => S::neg_inf(),
            };
            state.gamma_n.push(n);
            state
                .gamma_b
                .push(b_prev.log_add(n_prev).log_mul(self.logp(t, self.blank)));
        }
        let added = to - from;
        self.frames_evaluated += added as u64;
        added
    }

    /// Probability that the masked grid emits exactly the state's prefix.
    pub fn eos_score(&self, state: &CtcForwardState<S>) -> Result<S> {
        self.ensure_covered(state, self.frames)?;
        Ok(state
            .gamma_n(self.frames)
            .log_add(state.gamma_b(self.frames)))
    }

    fn clip(&self, window: Window) -> Window {
        let end = window.end.clamp(1, self.frames.max(1));
        Window {
            start: window.start.clamp(1, end),
            end,
        }
    }

    /// Unrestricted chain: prefix score of `prefix` and its forward state.
    pub fn score_prefix(&mut self, prefix: &[u32]) -> Result<(S, CtcForwardState<S>)> {
        let mut state = self.init_state();
        let mut psi = S::zero();
        for (i, &c) in prefix.iter().enumerate() {
            let window = window_for(
                state.tau,
                state.tau_tilde,
                Margin::Unbounded,
                Margin::Unbounded,
                i + 1,
                self.frames,
            );
            let (p, next) = self.prefix_score_step(&state, c, window)?;
            psi = p;
            state = next;
        }
        Ok((psi, state))
    }
}

/// First frame in `[lo, hi]` maximizing `curve`; frames beyond coverage count
/// as log-zero.
fn argmax_frame<S: LogFloat>(
    state: &CtcForwardState<S>,
    lo: usize,
    hi: usize,
    curve: impl Fn(&CtcForwardState<S>, usize) -> S,
) -> usize {
    let covered = state.covered_to();
    let mut best_t = lo;
    let mut best = S::neg_inf();
    for t in lo..=hi.min(covered) {
        let v = curve(state, t);
        if v > best {
            best = v;
            best_t = t;
        }
    }
    best_t
}

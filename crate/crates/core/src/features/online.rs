use std::collections::VecDeque;

use crate::error::{Error, Result};

use super::fbank::MelBank;
use super::transform::{RunningNorm, DELTA_WINDOW};
use super::{FeatureConfig, Normalization, RUNNING_DECAY};

/// Rows with `left`/`right` context, replicating the first and last row at
/// the edges.
#[derive(Clone, Debug)]
struct Context {
    left: usize,
    right: usize,
    rows: VecDeque<Vec<f64>>,
    first: usize,
    received: usize,
    next: usize,
}

impl Context {
    fn new(left: usize, right: usize) -> Self {
        Self { left, right, rows: VecDeque::new(), first: 0, received: 0, next: 0 }
    }

    /// Adds a row (if any) and computes every output whose context is
    /// available; with `end` the stream is over and all remaining outputs
    /// are produced. `f` receives rows `t − left ..= t + right`.
    fn drain(&mut self, row: Option<Vec<f64>>, end: bool, f: impl Fn(&[&[f64]]) -> Vec<f64>) -> Vec<Vec<f64>> {
        if let Some(r) = row {
            self.rows.push_back(r);
            self.received += 1;
        }
        let mut out = Vec::new();
        while self.next < self.received && (end || self.next + self.right < self.received) {
            let t = self.next as isize;
            let last = self.received as isize - 1;
            let window: Vec<&[f64]> = (-(self.left as isize)..=self.right as isize)
                .map(|k| self.rows[(t + k).clamp(0, last) as usize - self.first].as_slice())
                .collect();
            out.push(f(&window));
            self.next += 1;
            let keep_from = self.next.saturating_sub(self.left);
            while self.first < keep_from && self.rows.len() > 1 {
                self.rows.pop_front();
                self.first += 1;
            }
        }
        out
    }

    fn len(&self) -> usize {
        self.rows.iter().map(Vec::len).sum()
    }
}

/// Delta of the trailing `width` columns of the center row, appended to it.
fn delta_row(window: &[&[f64]], width: usize) -> Vec<f64> {
    let norm = 2.0 * (1..=DELTA_WINDOW).map(|n| (n * n) as f64).sum::<f64>();
    let at = |k: isize| window[(DELTA_WINDOW as isize + k) as usize];
    let center = at(0);
    let base = center.len() - width;
    let mut out = center.to_vec();
    for c in base..center.len() {
        let s: f64 = (1..=DELTA_WINDOW as isize).map(|n| n as f64 * (at(n)[c] - at(-n)[c])).sum();
        out.push(s / norm);
    }
    out
}

/// Incremental feature extraction from PCM samples. Produces the rows of
/// the offline pipeline, except that per-utterance normalization is
/// replaced by the running normalizer (decay 0.999).
#[derive(Clone, Debug)]
pub struct OnlineFrontend {
    cfg: FeatureConfig,
    bank: MelBank,
    samples: VecDeque<f64>,
    deltas: Vec<Context>,
    norm: Option<RunningNorm>,
    stack: Context,
    closed: bool,
}

impl OnlineFrontend {
    pub fn new(cfg: &FeatureConfig) -> Result<Self> {
        cfg.validate()?;
        let norm = match cfg.normalize {
            Normalization::Utterance => Some(RunningNorm::new(RUNNING_DECAY, cfg.base_dim())),
            Normalization::Running { decay } => Some(RunningNorm::new(decay, cfg.base_dim())),
            Normalization::None => None,
        };
        Ok(Self {
            bank: MelBank::new(cfg),
            samples: VecDeque::new(),
            deltas: (0..cfg.delta_order).map(|_| Context::new(DELTA_WINDOW, DELTA_WINDOW)).collect(),
            norm,
            stack: Context::new(cfg.stack_left, cfg.stack_right),
            cfg: cfg.clone(),
            closed: false,
        })
    }

    pub fn dim(&self) -> usize {
        self.cfg.dim()
    }

    /// Feeds samples; returns the feature rows that became complete.
    pub fn push(&mut self, pcm: &[f64]) -> Result<Vec<Vec<f64>>> {
        if self.closed {
            return Err(Error::State("frontend already flushed".into()));
        }
        if let Some(bad) = pcm.iter().find(|v| !v.is_finite()) {
            return Err(Error::Input(format!("non-finite sample {bad}")));
        }
        self.samples.extend(pcm);
        let (len, shift) = (self.cfg.frame_len(), self.cfg.frame_shift());
        let mut out = Vec::new();
        while self.samples.len() >= len {
            let frame: Vec<f64> = self.samples.range(..len).copied().collect();
            self.samples.drain(..shift.min(self.samples.len()));
            let row = self.bank.frame(&frame);
            out.extend(self.advance(Some(row), false));
        }
        Ok(out)
    }

    /// Ends the stream and returns the remaining rows.
    pub fn flush(&mut self) -> Result<Vec<Vec<f64>>> {
        if self.closed {
            return Err(Error::State("frontend already flushed".into()));
        }
        self.closed = true;
        Ok(self.advance(None, true))
    }

    fn advance(&mut self, row: Option<Vec<f64>>, end: bool) -> Vec<Vec<f64>> {
        let width = self.cfg.static_dim();
        let mut rows: Vec<Vec<f64>> = row.into_iter().collect();
        for ctx in &mut self.deltas {
            let mut next = Vec::new();
            for r in rows {
                next.extend(ctx.drain(Some(r), false, |at| delta_row(at, width)));
            }
            if end {
                next.extend(ctx.drain(None, true, |at| delta_row(at, width)));
            }
            rows = next;
        }
        if let Some(norm) = &mut self.norm {
            rows = rows.iter().map(|r| norm.apply(r)).collect();
        }
        let stack = |window: &[&[f64]]| window.concat();
        let mut out = Vec::new();
        for row in rows {
            out.extend(self.stack.drain(Some(row), false, stack));
        }
        if end {
            out.extend(self.stack.drain(None, true, stack));
        }
        out
    }

    /// Retained numeric state, in elements.
    pub fn state_len(&self) -> usize {
        self.samples.len()
            + self.deltas.iter().map(Context::len).sum::<usize>()
            + self.stack.len()
            + self.norm.as_ref().map_or(0, |_| 2 * self.cfg.base_dim())
    }
}

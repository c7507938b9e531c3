use std::collections::VecDeque;

use crate::error::{Error, Result};
use crate::layers::{
    add_rows, AttentionRef, Block, ConvFrontend, ConvLayerRef, FeedForwardRef, LayerNormRef, LinearRef, LstmRef,
    LstmState, MemoryInput, MemoryRef,
};
use crate::numcore::{kernels, ParamStore};

use super::OpCounter;

/// One conv layer over a stream. Holds only the input frames that future
/// outputs can still reach.
#[derive(Clone, Debug)]
pub struct ConvStream<'p> {
    layer: ConvLayerRef<'p>,
    zeros: Vec<f64>,
    frames: VecDeque<Vec<f64>>,
    /// Stream position of `frames[0]`.
    first: usize,
    received: usize,
    next: usize,
}

impl<'p> ConvStream<'p> {
    pub fn new(layer: ConvLayerRef<'p>) -> Self {
        let g = layer.geo;
        Self { layer, zeros: vec![0.0; g.c_in * g.freq], frames: VecDeque::new(), first: 0, received: 0, next: 0 }
    }

    /// Computes output `next`; taps past `last` replicate it.
    fn emit(&mut self, last: usize) -> Vec<f64> {
        let g = self.layer.geo;
        let base = self.next * g.stride;
        let y = {
            let taps: Vec<&[f64]> = (0..g.kernel_time)
                .map(|dt| match (base + dt).checked_sub(g.left) {
                    None => self.zeros.as_slice(),
                    Some(p) => self.frames[p.min(last) - self.first].as_slice(),
                })
                .collect();
            self.layer.frame(&taps)
        };
        self.next += 1;
        let keep_from = (self.next * g.stride).saturating_sub(g.left);
        while self.first < keep_from && self.frames.len() > 1 {
            self.frames.pop_front();
            self.first += 1;
        }
        y
    }

    fn push(&mut self, x: Vec<f64>) -> Vec<Vec<f64>> {
        self.frames.push_back(x);
        self.received += 1;
        let g = self.layer.geo;
        let mut out = Vec::new();
        while self.next * g.stride + g.right() < self.received {
            out.push(self.emit(self.received - 1));
        }
        out
    }

    fn flush(&mut self) -> Vec<Vec<f64>> {
        let total = self.layer.geo.out_len(self.received);
        let mut out = Vec::new();
        while self.next < total {
            out.push(self.emit(self.received - 1));
        }
        out
    }
}

#[derive(Clone, Debug)]
struct Entry {
    x: Vec<f64>,
    q: Vec<f64>,
    k: Vec<f64>,
    v: Vec<f64>,
}

#[derive(Clone, Debug)]
struct MemoryStream<'p> {
    memory: MemoryRef<'p>,
    input: MemoryInput,
    window: (usize, usize),
    state: LstmState,
}

/// An MSA or restricted attention block over a stream. Keeps the
/// key/value ring of the last `l + r + 1` positions and, for MSA, the
/// memory LSTM carry.
#[derive(Clone, Debug)]
pub struct AttentionStream<'p> {
    attention: AttentionRef<'p>,
    memory: Option<MemoryStream<'p>>,
    norm1: LayerNormRef<'p>,
    ffn: FeedForwardRef<'p>,
    norm2: LayerNormRef<'p>,
    left: Option<usize>,
    right: usize,
    entries: VecDeque<Entry>,
    first: usize,
    received: usize,
    next: usize,
}

impl AttentionStream<'_> {
    fn emit(&mut self) -> Vec<f64> {
        let t = self.next;
        let lo = self.left.map_or(0, |l| t.saturating_sub(l));
        let hi = (t + self.right + 1).min(self.received);
        let entry = &self.entries[t - self.first];
        let m = {
            let range = lo - self.first..hi - self.first;
            let keys: Vec<&[f64]> = self.entries.range(range.clone()).map(|e| e.k.as_slice()).collect();
            let values: Vec<&[f64]> = self.entries.range(range).map(|e| e.v.as_slice()).collect();
            self.attention.attend(t, &entry.q, lo, &keys, &values)
        };
        let f = match &mut self.memory {
            Some(mem) => {
                let h = match mem.input {
                    MemoryInput::Center => mem.memory.step(&entry.x, &mut mem.state),
                    MemoryInput::Window => {
                        let (l, r) = mem.window;
                        let d = entry.x.len();
                        let mut row = Vec::with_capacity((l + r + 1) * d);
                        for p in t as isize - l as isize..=(t + r) as isize {
                            if p < 0 || p as usize >= self.received {
                                row.extend(std::iter::repeat_n(0.0, d));
                            } else {
                                row.extend_from_slice(&self.entries[p as usize - self.first].x);
                            }
                        }
                        mem.memory.step(&row, &mut mem.state)
                    }
                };
                self.norm1.apply(&add_rows(&[&m, &h, &entry.x]))
            }
            None => self.norm1.apply(&add_rows(&[&m, &entry.x])),
        };
        let y = self.ffn.apply(&f);
        let out = self.norm2.apply(&add_rows(&[&y, &f]));
        self.next += 1;
        if let Some(l) = self.left {
            let keep_from = self.next.saturating_sub(l);
            while self.first < keep_from && !self.entries.is_empty() {
                self.entries.pop_front();
                self.first += 1;
            }
        }
        out
    }

    fn push(&mut self, x: Vec<f64>) -> Vec<Vec<f64>> {
        let (q, k, v) = self.attention.project(&x);
        self.entries.push_back(Entry { x, q, k, v });
        self.received += 1;
        let mut out = Vec::new();
        while self.next + self.right < self.received {
            out.push(self.emit());
        }
        out
    }

    fn flush(&mut self) -> Vec<Vec<f64>> {
        let mut out = Vec::new();
        while self.next < self.received {
            out.push(self.emit());
        }
        out
    }

    fn state_len(&self) -> usize {
        let ring: usize = self.entries.iter().map(|e| e.x.len() + e.q.len() + e.k.len() + e.v.len()).sum();
        ring + self.memory.as_ref().map_or(0, |m| m.state.h.len() + m.state.c.len())
    }
}

#[derive(Clone, Debug)]
pub enum Stage<'p> {
    Conv(ConvStream<'p>),
    Linear(LinearRef<'p>),
    Attention(AttentionStream<'p>),
    Lstm(LstmRef<'p>, LstmState),
}

impl<'p> Stage<'p> {
    /// Streaming form of a block; bidirectional and right-unbounded blocks
    /// have none.
    pub fn block(block: &Block, store: &'p ParamStore) -> Result<Self> {
        let not_streamable = || Error::Config("block needs future context without bound; not streamable".into());
        Ok(match block {
            Block::Msa(b) => {
                let cfg = b.attention.cfg;
                let right = cfg.right.ok_or_else(not_streamable)?;
                let memory = MemoryStream {
                    memory: b.memory.bind(store)?,
                    input: b.memory.input,
                    window: b.memory.window(),
                    state: LstmState::zeros(cfg.d_model),
                };
                Stage::Attention(AttentionStream {
                    attention: b.attention.bind(store)?,
                    memory: Some(memory),
                    norm1: b.norm1.bind(store)?,
                    ffn: b.ffn.bind(store)?,
                    norm2: b.norm2.bind(store)?,
                    left: cfg.left,
                    right,
                    entries: VecDeque::new(),
                    first: 0,
                    received: 0,
                    next: 0,
                })
            }
            Block::Restricted(b) => {
                let cfg = b.attention.cfg;
                let right = cfg.right.ok_or_else(not_streamable)?;
                Stage::Attention(AttentionStream {
                    attention: b.attention.bind(store)?,
                    memory: None,
                    norm1: b.norm1.bind(store)?,
                    ffn: b.ffn.bind(store)?,
                    norm2: b.norm2.bind(store)?,
                    left: cfg.left,
                    right,
                    entries: VecDeque::new(),
                    first: 0,
                    received: 0,
                    next: 0,
                })
            }
            Block::Lstm(l) => Stage::Lstm(l.bind(store)?, LstmState::zeros(l.hidden)),
            Block::Blstm(..) => return Err(not_streamable()),
        })
    }

    fn push(&mut self, x: Vec<f64>) -> Vec<Vec<f64>> {
        match self {
            Stage::Conv(c) => c.push(x),
            Stage::Linear(l) => vec![l.apply(&x)],
            Stage::Attention(a) => a.push(x),
            Stage::Lstm(l, state) => vec![l.step(&x, state)],
        }
    }

    fn flush(&mut self) -> Vec<Vec<f64>> {
        match self {
            Stage::Conv(c) => c.flush(),
            Stage::Attention(a) => a.flush(),
            Stage::Linear(_) | Stage::Lstm(..) => Vec::new(),
        }
    }

    /// Retained numeric state, in elements.
    pub fn state_len(&self) -> usize {
        match self {
            Stage::Conv(c) => c.frames.iter().map(Vec::len).sum(),
            Stage::Linear(_) => 0,
            Stage::Attention(a) => a.state_len(),
            Stage::Lstm(_, s) => s.h.len() + s.c.len(),
        }
    }
}

/// A pipeline of streaming stages; each stage's outputs feed the next.
#[derive(Clone, Debug, Default)]
pub struct StageStack<'p> {
    names: Vec<String>,
    stages: Vec<Stage<'p>>,
}

impl<'p> StageStack<'p> {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: impl Into<String>, stage: Stage<'p>) {
        self.names.push(name.into());
        self.stages.push(stage);
    }

    /// Conv layers then the output projection.
    pub fn add_frontend(&mut self, prefix: &str, frontend: &ConvFrontend, store: &'p ParamStore) -> Result<()> {
        for (i, layer) in frontend.layers.iter().enumerate() {
            self.add(format!("{prefix}.conv{i}"), Stage::Conv(ConvStream::new(layer.bind(store)?)));
        }
        self.add(format!("{prefix}.proj"), Stage::Linear(frontend.proj.bind(store)?));
        Ok(())
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    /// Feeds one frame; returns the frames that leave the last stage.
    pub fn push(&mut self, x: Vec<f64>, ops: Option<&mut OpCounter>) -> Vec<Vec<f64>> {
        self.run(vec![x], false, ops)
    }

    /// Ends the stream, draining every stage in order.
    pub fn flush(&mut self, ops: Option<&mut OpCounter>) -> Vec<Vec<f64>> {
        self.run(Vec::new(), true, ops)
    }

    fn run(&mut self, input: Vec<Vec<f64>>, flush: bool, mut ops: Option<&mut OpCounter>) -> Vec<Vec<f64>> {
        let mut frames = input;
        let mut spent = Vec::with_capacity(self.stages.len());
        for stage in &mut self.stages {
            let before = kernels::mac_count();
            let mut out = Vec::new();
            for f in frames {
                out.extend(stage.push(f));
            }
            if flush {
                out.extend(stage.flush());
            }
            spent.push(kernels::mac_count() - before);
            frames = out;
        }
        if let Some(ops) = ops.as_deref_mut() {
            ops.record(&self.names, &spent);
        }
        frames
    }

    pub fn state_len(&self) -> usize {
        self.stages.iter().map(Stage::state_len).sum()
    }
}

/// Runs a whole sequence through a fresh copy of `stack`.
pub fn run_to_end(stack: &StageStack<'_>, rows: impl IntoIterator<Item = Vec<f64>>) -> Vec<Vec<f64>> {
    let mut s = stack.clone();
    let mut out = Vec::new();
    for r in rows {
        out.extend(s.push(r, None));
    }
    out.extend(s.flush(None));
    out
}

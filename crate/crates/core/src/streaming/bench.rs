use std::fmt::Write as _;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::layers::{Block, BlockConfig, BlockKind, MemoryInput};
use crate::numcore::{kernels, Ctx, Graph, ParamStore, Tensor};

use super::stage::{Stage, StageStack};
use super::OpCounter;

/// Output change that counts as "affected" in a perturbation probe.
pub const PROBE_THRESHOLD: f64 = 1e-12;

/// The six layer structures compared in the complexity table.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Variant {
    Blstm,
    Unrestricted,
    Lstm,
    /// Restricted attention with unbounded left context.
    RestrictedLeftInf,
    Restricted,
    Memory,
}

impl Variant {
    pub const ALL: [Variant; 6] = [
        Variant::Blstm,
        Variant::Unrestricted,
        Variant::Lstm,
        Variant::RestrictedLeftInf,
        Variant::Restricted,
        Variant::Memory,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Blstm => "blstm",
            Variant::Unrestricted => "unrestricted-sa",
            Variant::Lstm => "lstm",
            Variant::RestrictedLeftInf => "restricted-sa-left-inf",
            Variant::Restricted => "restricted-sa",
            Variant::Memory => "memory-sa",
        }
    }

    pub fn parse(name: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|v| v.name() == name)
            .ok_or_else(|| {
                let known: Vec<&str> = Self::ALL.iter().map(|v| v.name()).collect();
                Error::Usage(format!("unknown variant '{name}' (expected one of {})", known.join(", ")))
            })
    }

    /// Whether outputs can be produced before the input ends.
    pub fn streamable(self) -> bool {
        !matches!(self, Variant::Blstm | Variant::Unrestricted)
    }

    /// Sequential steps per layer for a length-`t` input.
    pub fn sequential_steps(self, t: usize) -> usize {
        match self {
            Variant::Blstm | Variant::Lstm | Variant::Memory => t,
            _ => 1,
        }
    }

    fn block_config(self, cfg: &BenchConfig) -> BlockConfig {
        let (kind, left, right) = match self {
            Variant::Blstm => (BlockKind::Blstm, None, None),
            Variant::Unrestricted => (BlockKind::RestrictedSa, None, None),
            Variant::Lstm => (BlockKind::Lstm, None, Some(0)),
            Variant::RestrictedLeftInf => (BlockKind::RestrictedSa, None, Some(cfg.right)),
            Variant::Restricted => (BlockKind::RestrictedSa, Some(cfg.left), Some(cfg.right)),
            Variant::Memory => (BlockKind::Msa, Some(cfg.left), Some(cfg.right)),
        };
        BlockConfig {
            kind,
            d_model: cfg.d_model,
            heads: cfg.heads,
            d_ff: cfg.d_ff,
            left,
            right,
            relative_bias: false,
            memory_input: MemoryInput::Center,
        }
    }
}

/// A stack of `layers` identical blocks of one variant over
/// `d_model`-wide input frames.
#[derive(Clone, Debug, PartialEq)]
pub struct BenchConfig {
    pub d_model: usize,
    pub heads: usize,
    pub d_ff: usize,
    pub layers: usize,
    pub left: usize,
    pub right: usize,
    pub seed: u64,
}

impl Default for BenchConfig {
    /// Narrow layers, so the length-dependent attention term dominates
    /// the per-frame projection cost at a few hundred frames.
    fn default() -> Self {
        Self { d_model: 4, heads: 1, d_ff: 8, layers: 2, left: 16, right: 4, seed: 0 }
    }
}

struct Stack {
    blocks: Vec<Block>,
    params: ParamStore,
}

impl Stack {
    fn new(variant: Variant, cfg: &BenchConfig) -> Result<Self> {
        let bc = variant.block_config(cfg);
        let blocks = (0..cfg.layers).map(|i| Block::new(&format!("layer{i}"), &bc)).collect::<Result<Vec<_>>>()?;
        let mut params = ParamStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        for b in &blocks {
            b.init(&mut params, &mut rng);
        }
        Ok(Self { blocks, params })
    }

    fn offline(&self, x: &Tensor) -> Result<Tensor> {
        let g = Graph::new();
        let cx = Ctx::new(&g, &self.params);
        let mut h = g.constant(x.clone());
        for b in &self.blocks {
            h = b.forward(&cx, h)?;
        }
        Ok(h.to_tensor())
    }

    fn streaming(&self) -> Result<StageStack<'_>> {
        let mut stack = StageStack::new();
        for (i, b) in self.blocks.iter().enumerate() {
            stack.add(format!("layer{i}"), Stage::block(b, &self.params)?);
        }
        Ok(stack)
    }
}

fn input(cfg: &BenchConfig, t: usize) -> Tensor {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5eed);
    Tensor::randn(vec![t, cfg.d_model], 1.0, &mut rng)
}

/// One measurement: total MACs of a length-`t` pass.
#[derive(Clone, Debug, PartialEq)]
pub struct ScalingRow {
    pub variant: Variant,
    pub t: usize,
    pub macs: u64,
    pub wall_ms: f64,
}

/// Runs each length through the variant. Streamable variants are pushed
/// frame by frame (then flushed); the others run the offline forward pass.
pub fn measure_scaling(variant: Variant, cfg: &BenchConfig, lengths: &[usize]) -> Result<Vec<ScalingRow>> {
    let stack = Stack::new(variant, cfg)?;
    let mut rows = Vec::with_capacity(lengths.len());
    for &t in lengths {
        if t == 0 {
            return Err(Error::Usage("sequence lengths must be positive".into()));
        }
        let x = input(cfg, t);
        let start = Instant::now();
        let before = kernels::mac_count();
        if variant.streamable() {
            let mut s = stack.streaming()?;
            for r in x.rows() {
                s.push(r.to_vec(), None);
            }
            s.flush(None);
        } else {
            stack.offline(&x)?;
        }
        let macs = kernels::mac_count() - before;
        rows.push(ScalingRow { variant, t, macs, wall_ms: start.elapsed().as_secs_f64() * 1e3 });
    }
    Ok(rows)
}

/// MACs spent by each of `t` pushes of a streamable variant (the flush is
/// not included).
pub fn per_frame_macs(variant: Variant, cfg: &BenchConfig, t: usize) -> Result<Vec<u64>> {
    let stack = Stack::new(variant, cfg)?;
    let mut s = stack.streaming()?;
    let mut ops = OpCounter::new();
    Ok(input(cfg, t)
        .rows()
        .map(|r| {
            s.push(r.to_vec(), Some(&mut ops));
            ops.last_total()
        })
        .collect())
}

/// Coefficient of determination of the least-squares fit `y ≈ a + b·x`.
pub fn fit_r2(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let (mx, my) = (x.iter().sum::<f64>() / n, y.iter().sum::<f64>() / n);
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    let syy: f64 = y.iter().map(|b| (b - my) * (b - my)).sum();
    if sxx == 0.0 || syy == 0.0 {
        return 1.0;
    }
    sxy * sxy / (sxx * syy)
}

/// CSV with columns `variant,T,macs,wall_ms,fit_linear_r2,fit_quadratic_r2`.
/// The fits are per variant: MACs against `T` and against `T²`.
pub fn scaling_csv(rows: &[ScalingRow]) -> String {
    let mut out = String::from("variant,T,macs,wall_ms,fit_linear_r2,fit_quadratic_r2\n");
    let mut variants: Vec<Variant> = Vec::new();
    for r in rows {
        if !variants.contains(&r.variant) {
            variants.push(r.variant);
        }
    }
    for v in variants {
        let group: Vec<&ScalingRow> = rows.iter().filter(|r| r.variant == v).collect();
        let t: Vec<f64> = group.iter().map(|r| r.t as f64).collect();
        let t2: Vec<f64> = t.iter().map(|t| t * t).collect();
        let macs: Vec<f64> = group.iter().map(|r| r.macs as f64).collect();
        let (lin, quad) = (fit_r2(&t, &macs), fit_r2(&t2, &macs));
        for r in group {
            writeln!(out, "{},{},{},{:.3},{lin:.6},{quad:.6}", v.name(), r.t, r.macs, r.wall_ms).expect("string write");
        }
    }
    out
}

/// Output positions whose value moves by more than [`PROBE_THRESHOLD`]
/// when input frame `t_perturb` is shifted by one in every coordinate.
pub fn reception_probe(variant: Variant, cfg: &BenchConfig, t: usize, t_perturb: usize) -> Result<Vec<usize>> {
    if t_perturb >= t {
        return Err(Error::Usage(format!("perturbed frame {t_perturb} outside a length-{t} input")));
    }
    let stack = Stack::new(variant, cfg)?;
    let clean = input(cfg, t);
    let mut moved = clean.clone();
    let d = cfg.d_model;
    for v in &mut moved.data_mut()[t_perturb * d..(t_perturb + 1) * d] {
        *v += 1.0;
    }
    let (a, b) = (stack.offline(&clean)?, stack.offline(&moved)?);
    Ok((0..t)
        .filter(|&i| a.row(i).iter().zip(b.row(i)).any(|(x, y)| (x - y).abs() > PROBE_THRESHOLD))
        .collect())
}

#![allow(dead_code)]

pub mod oracle;
pub mod search;

use msa_transducer::numcore::{grad_check, Ctx, Graph, ParamStore, Tensor, Var};
use msa_transducer::Result;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Gradient check over every parameter in `store` plus the extra inputs.
/// `f` receives a context with all parameters pre-bound and the extra
/// input variables.
pub fn check_with_store<F>(store: &ParamStore, inputs: &[Tensor], f: F) -> f64
where
    F: for<'g> Fn(&Ctx<'g, '_>, &[Var<'g>]) -> Result<Var<'g>>,
{
    let names: Vec<String> = store.names().map(str::to_string).collect();
    let mut tensors: Vec<Tensor> = store.iter().map(|(_, t)| t.clone()).collect();
    tensors.extend(inputs.iter().cloned());
    grad_check(&tensors, |g: &Graph, vars| {
        let cx = Ctx::new(g, store);
        for (n, v) in names.iter().zip(vars) {
            cx.bind_var(n, *v);
        }
        f(&cx, &vars[names.len()..])
    })
    .unwrap()
}

/// Runs `f` on a fresh inference graph and returns the output tensor.
pub fn eval<F>(store: &ParamStore, input: &Tensor, f: F) -> Tensor
where
    F: for<'g> Fn(&Ctx<'g, '_>, Var<'g>) -> Result<Var<'g>>,
{
    let g = Graph::new();
    let cx = Ctx::new(&g, store);
    let x = g.constant(input.clone());
    f(&cx, x).unwrap().to_tensor()
}

/// Rows whose values differ by more than `tol`.
pub fn changed_rows(a: &Tensor, b: &Tensor, tol: f64) -> Vec<usize> {
    a.rows()
        .zip(b.rows())
        .enumerate()
        .filter(|(_, (x, y))| x.iter().zip(y.iter()).any(|(p, q)| (p - q).abs() > tol))
        .map(|(i, _)| i)
        .collect()
}

/// A small model config for fast tests: d=8, two heads, one 2-D conv
/// block with the time stride, two encoder and one predictor block.
pub fn tiny_config(kind: msa_transducer::layers::BlockKind) -> msa_transducer::transducer::ModelConfig {
    use msa_transducer::layers::{ConvBlockConfig, ConvKind};
    let mut cfg = msa_transducer::transducer::ModelConfig::desk(6);
    cfg.d_model = 8;
    cfg.heads = 2;
    cfg.d_ff = 16;
    cfg.encoder.kind = kind;
    cfg.encoder.layers = 2;
    cfg.encoder.left = Some(3);
    cfg.encoder.right = Some(1);
    cfg.encoder.conv = vec![ConvBlockConfig {
        kind: ConvKind::TwoD,
        kernel_freq: 3,
        kernel_time: 5,
        channels: 2,
        time_stride: 3,
        layers_per_block: 2,
        causal: false,
    }];
    cfg.predictor.kind = if kind == msa_transducer::layers::BlockKind::Blstm {
        msa_transducer::layers::BlockKind::Lstm
    } else {
        kind
    };
    cfg.predictor.layers = 1;
    cfg.predictor.left = Some(3);
    cfg.predictor.conv = vec![ConvBlockConfig { layers_per_block: 1, channels: 8, ..ConvBlockConfig::full_1d(8) }];
    cfg
}

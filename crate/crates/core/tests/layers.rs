mod common;

use common::{changed_rows, check_with_store, eval, rng};
use msa_transducer::layers::{
    AttentionConfig, Block, BlockConfig, BlockKind, ConvBlockConfig, ConvFrontend, ConvKind, LayerNorm, Lstm,
    MemoryInput, MultiHeadAttention,
};
use msa_transducer::numcore::{nn::ConvGeometry, Ctx, Graph, ParamStore, Tensor};
use msa_transducer::layers::ConvLayer;

fn block_cfg(kind: BlockKind, d: usize, left: Option<usize>, right: Option<usize>) -> BlockConfig {
    BlockConfig {
        kind,
        d_model: d,
        heads: 2,
        d_ff: 2 * d,
        left,
        right,
        relative_bias: false,
        memory_input: MemoryInput::Center,
    }
}

fn init_block(cfg: &BlockConfig, seed: u64) -> (Block, ParamStore) {
    let block = Block::new("blk", cfg).unwrap();
    let mut store = ParamStore::new();
    block.init(&mut store, &mut rng(seed));
    (block, store)
}

fn run_block(block: &Block, store: &ParamStore, x: &Tensor) -> Tensor {
    eval(store, x, |cx, x| block.forward(cx, x))
}

#[test]
fn layer_norm_examples() {
    let ln = LayerNorm::new("ln", 4);
    let mut store = ParamStore::new();
    ln.init(&mut store);
    let out = eval(&store, &Tensor::full(vec![4], 3.0), |cx, x| ln.forward(cx, x));
    assert!(out.data().iter().all(|v| v.abs() < 1e-12));

    let ln2 = LayerNorm::new("ln2", 2);
    ln2.init(&mut store);
    let out = eval(&store, &Tensor::vector(vec![-1.0, 1.0]), |cx, x| ln2.forward(cx, x));
    assert!((out.data()[0] + 1.0).abs() < 1e-6 && (out.data()[1] - 1.0).abs() < 1e-6);
}

#[test]
fn layer_norm_gradient() {
    for seed in 0..5 {
        let ln = LayerNorm::new("ln", 5);
        let mut store = ParamStore::new();
        ln.init(&mut store);
        let mut r = rng(seed);
        for (_, t) in store.iter_mut() {
            *t = Tensor::randn(t.shape().to_vec(), 1.0, &mut r);
        }
        let x = Tensor::randn(vec![3, 5], 1.0, &mut r);
        let w = Tensor::randn(vec![3, 5], 1.0, &mut r);
        let err = check_with_store(&store, &[x, w], |cx, v| ln.forward(cx, v[0])?.mul(v[1])?.sum());
        assert!(err < 1e-5, "{err}");
    }
}

#[test]
fn lstm_step_all_zero_gives_zero_state() {
    let lstm = Lstm::new("lstm", 3, 3);
    let mut store = ParamStore::new();
    lstm.init(&mut store, &mut rng(0));
    for (_, t) in store.iter_mut() {
        *t = Tensor::zeros(t.shape().to_vec());
    }
    let g = Graph::new();
    let cx = Ctx::new(&g, &store);
    let z = g.constant(Tensor::zeros(vec![3]));
    let (h, c) = lstm.step(&cx, z, z, z).unwrap();
    assert!(h.value().data().iter().chain(c.value().data()).all(|&v| v == 0.0));
}

#[test]
fn lstm_step_saturated_forget_gate_keeps_cell() {
    let d = 3;
    let lstm = Lstm::new("lstm", d, d);
    let mut store = ParamStore::new();
    lstm.init(&mut store, &mut rng(1));
    let bias = store.get_mut("lstm.bias").unwrap();
    for j in d..2 * d {
        bias.data_mut()[j] = 20.0;
    }
    let mut r = rng(2);
    let x = Tensor::randn(vec![d], 1.0, &mut r);
    let h0 = Tensor::randn(vec![d], 1.0, &mut r);
    let c0 = Tensor::randn(vec![d], 1.0, &mut r);
    let g = Graph::new();
    let cx = Ctx::new(&g, &store);
    let (_, c) = lstm.step(&cx, g.constant(x.clone()), g.constant(h0.clone()), g.constant(c0.clone())).unwrap();
    // Recompute the input and candidate gates independently.
    let w_ih = store.get("lstm.w_ih").unwrap();
    let w_hh = store.get("lstm.w_hh").unwrap();
    let b = store.get("lstm.bias").unwrap();
    let pre = |col: usize| {
        let mut s = b.data()[col];
        for p in 0..d {
            s += x.data()[p] * w_ih.data()[p * 4 * d + col] + h0.data()[p] * w_hh.data()[p * 4 * d + col];
        }
        s
    };
    for j in 0..d {
        let i = 1.0 / (1.0 + (-pre(j)).exp());
        let cand = pre(2 * d + j).tanh();
        let expected = c0.data()[j] + i * cand;
        assert!((c.value().data()[j] - expected).abs() < 1e-7, "{j}");
    }
}

#[test]
fn lstm_step_gradient() {
    for seed in 0..5 {
        let lstm = Lstm::new("lstm", 4, 3);
        let mut store = ParamStore::new();
        lstm.init(&mut store, &mut rng(seed));
        let mut r = rng(seed + 50);
        let inputs = [
            Tensor::randn(vec![4], 1.0, &mut r),
            Tensor::randn(vec![3], 1.0, &mut r),
            Tensor::randn(vec![3], 1.0, &mut r),
            Tensor::randn(vec![3], 1.0, &mut r),
            Tensor::randn(vec![3], 1.0, &mut r),
        ];
        let err = check_with_store(&store, &inputs, |cx, v| {
            let (h, c) = lstm.step(cx, v[0], v[1], v[2])?;
            h.mul(v[3])?.add(c.mul(v[4])?)?.sum()
        });
        assert!(err < 1e-5, "{err}");
    }
}

fn attention(cfg: AttentionConfig, seed: u64) -> (MultiHeadAttention, ParamStore) {
    let attn = MultiHeadAttention::new("attn", cfg).unwrap();
    let mut store = ParamStore::new();
    attn.init(&mut store, &mut rng(seed));
    (attn, store)
}

/// Dense masked attention written directly from the definition.
fn dense_attention(store: &ParamStore, x: &Tensor, heads: usize, left: Option<usize>, right: Option<usize>) -> Tensor {
    let (t_len, d) = (x.shape()[0], x.shape()[1]);
    let lin = |name: &str, row: &[f64]| -> Vec<f64> {
        let w = store.get(&format!("attn.{name}.weight")).unwrap();
        let b = store.get(&format!("attn.{name}.bias")).unwrap();
        (0..d).map(|j| b.data()[j] + (0..d).map(|p| row[p] * w.data()[p * d + j]).sum::<f64>()).collect()
    };
    let q: Vec<Vec<f64>> = x.rows().map(|r| lin("query", r)).collect();
    let k: Vec<Vec<f64>> = x.rows().map(|r| lin("key", r)).collect();
    let v: Vec<Vec<f64>> = x.rows().map(|r| lin("value", r)).collect();
    let dh = d / heads;
    let mut out = Vec::new();
    for t in 0..t_len {
        let mut mixed = vec![0.0; d];
        for h in 0..heads {
            let logits: Vec<f64> = (0..t_len)
                .map(|j| {
                    let visible = left.is_none_or(|l| j + l >= t) && right.is_none_or(|r| j <= t + r);
                    if !visible {
                        return f64::NEG_INFINITY;
                    }
                    (h * dh..(h + 1) * dh).map(|c| q[t][c] * k[j][c]).sum::<f64>() / (dh as f64).sqrt()
                })
                .collect();
            let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let z: f64 = logits.iter().map(|l| (l - m).exp()).sum();
            for j in 0..t_len {
                let a = (logits[j] - m).exp() / z;
                for c in h * dh..(h + 1) * dh {
                    mixed[c] += a * v[j][c];
                }
            }
        }
        out.extend(lin("output", &mixed));
    }
    Tensor::new(vec![t_len, d], out).unwrap()
}

#[test]
fn attention_window_of_one_is_value_then_output_projection() {
    let cfg = AttentionConfig { d_model: 4, heads: 2, left: Some(0), right: Some(0), relative_bias: false };
    let (attn, store) = attention(cfg, 3);
    let x = Tensor::randn(vec![5, 4], 1.0, &mut rng(4));
    let out = eval(&store, &x, |cx, x| attn.forward(cx, x));
    for t in 0..5 {
        // A single visible key makes attention the identity on values.
        let vo = dense_attention(&store, &Tensor::new(vec![1, 4], x.row(t).to_vec()).unwrap(), 2, None, None);
        for c in 0..4 {
            assert!((out.row(t)[c] - vo.data()[c]).abs() < 1e-12);
        }
    }
}

#[test]
fn attention_matches_dense_masked_oracle() {
    for (left, right) in [(None, None), (Some(2), Some(1)), (None, Some(0)), (Some(0), Some(3))] {
        let cfg = AttentionConfig { d_model: 6, heads: 3, left, right, relative_bias: false };
        let (attn, store) = attention(cfg, 5);
        let x = Tensor::randn(vec![7, 6], 1.0, &mut rng(6));
        let out = eval(&store, &x, |cx, x| attn.forward(cx, x));
        let oracle = dense_attention(&store, &x, 3, left, right);
        assert!(out.max_abs_diff(&oracle) < 1e-12, "{left:?} {right:?}");
    }
}

#[test]
fn attention_ignores_positions_beyond_right_window() {
    let (l, r) = (2, 1);
    let cfg = AttentionConfig { d_model: 4, heads: 2, left: Some(l), right: Some(r), relative_bias: true };
    let (attn, mut store) = attention(cfg, 7);
    *store.get_mut("attn.offset_bias").unwrap() = Tensor::randn(vec![l + r + 1], 1.0, &mut rng(8));
    let x = Tensor::randn(vec![9, 4], 1.0, &mut rng(9));
    let base = eval(&store, &x, |cx, x| attn.forward(cx, x));
    for t in 0..9 - r - 1 {
        let mut y = x.clone();
        y.data_mut()[(t + r + 1) * 4] += 1.0;
        let out = eval(&store, &y, |cx, x| attn.forward(cx, x));
        assert_eq!(out.row(t), base.row(t), "position {t}");
    }
}

#[test]
fn msa_block_with_zero_paths_is_double_layer_norm() {
    let cfg = block_cfg(BlockKind::Msa, 4, Some(2), Some(1));
    let (block, mut store) = init_block(&cfg, 10);
    for (name, t) in store.iter_mut() {
        if !name.contains("norm") {
            *t = Tensor::zeros(t.shape().to_vec());
        }
    }
    let x = Tensor::randn(vec![5, 4], 1.0, &mut rng(11));
    let out = run_block(&block, &store, &x);
    let ln = LayerNorm::new("blk.norm1", 4);
    let expected = eval(&store, &x, |cx, x| ln.forward(cx, ln.forward(cx, x)?));
    assert!(out.max_abs_diff(&expected) < 1e-12);
}

#[test]
fn msa_memory_path_reaches_every_later_position() {
    let cfg = block_cfg(BlockKind::Msa, 4, Some(0), Some(0));
    let (block, store) = init_block(&cfg, 12);
    let x = Tensor::randn(vec![30, 4], 1.0, &mut rng(13));
    let base = run_block(&block, &store, &x);
    let mut y = x.clone();
    y.data_mut()[0] += 1.0;
    let out = run_block(&block, &store, &y);
    assert_eq!(changed_rows(&base, &out, 0.0), (0..30).collect::<Vec<_>>());

    let (restricted, rstore) = init_block(&cfg.with_kind(BlockKind::RestrictedSa), 12);
    let base = run_block(&restricted, &rstore, &x);
    let out = run_block(&restricted, &rstore, &y);
    assert_eq!(changed_rows(&base, &out, 0.0), vec![0]);
}

#[test]
fn block_gradients() {
    for seed in 0..5 {
        for kind in [BlockKind::Msa, BlockKind::RestrictedSa, BlockKind::Lstm, BlockKind::Blstm] {
            let mut cfg = block_cfg(kind, 8, Some(2), Some(1));
            cfg.relative_bias = kind != BlockKind::Lstm;
            if seed % 2 == 1 {
                cfg.memory_input = MemoryInput::Window;
            }
            let (block, mut store) = init_block(&cfg, seed);
            if let Some(b) = store.get_mut("blk.attn.offset_bias") {
                *b = Tensor::randn(b.shape().to_vec(), 0.3, &mut rng(seed + 1));
            }
            let mut r = rng(seed + 20);
            let x = Tensor::randn(vec![6, 8], 1.0, &mut r);
            let w = Tensor::randn(vec![6, 8], 1.0, &mut r);
            let err = check_with_store(&store, &[x, w], |cx, v| block.forward(cx, v[0])?.mul(v[1])?.sum());
            assert!(err < 1e-4, "{kind:?} seed {seed}: {err}");
        }
    }
}

#[test]
fn restricted_block_equals_msa_block_with_silent_memory() {
    let cfg = block_cfg(BlockKind::Msa, 6, Some(3), Some(1));
    let (msa, mut store) = init_block(&cfg, 14);
    for (name, t) in store.iter_mut() {
        if name.contains(".memory.") {
            *t = Tensor::zeros(t.shape().to_vec());
        }
    }
    let restricted = Block::new("blk", &cfg.with_kind(BlockKind::RestrictedSa)).unwrap();
    let x = Tensor::randn(vec![8, 6], 1.0, &mut rng(15));
    assert_eq!(run_block(&msa, &store, &x), run_block(&restricted, &store, &x));
}

#[test]
fn lstm_layer_is_direction_sensitive() {
    let cfg = block_cfg(BlockKind::Lstm, 4, None, None);
    let (block, store) = init_block(&cfg, 16);
    let x = Tensor::randn(vec![6, 4], 1.0, &mut rng(17));
    let fwd = run_block(&block, &store, &x);
    let rev_in = eval(&store, &x, |_, x| x.reverse_rows());
    let rev = eval(&store, &rev_in, |cx, x| block.forward(cx, x)?.reverse_rows());
    assert!(fwd.max_abs_diff(&rev) > 1e-3);
}

#[test]
fn causal_blocks_ignore_the_future() {
    for kind in [BlockKind::Msa, BlockKind::RestrictedSa, BlockKind::Lstm] {
        let cfg = block_cfg(kind, 4, Some(3), Some(0));
        let (block, store) = init_block(&cfg, 18);
        let x = Tensor::randn(vec![10, 4], 1.0, &mut rng(19));
        let base = run_block(&block, &store, &x);
        for t in 0..10 {
            let mut y = x.clone();
            for v in &mut y.data_mut()[t * 4..] {
                *v += 0.7;
            }
            let out = run_block(&block, &store, &y);
            for s in 0..t {
                assert_eq!(out.row(s), base.row(s), "{kind:?} t={t} s={s}");
            }
        }
    }
}

#[test]
fn window_soundness() {
    let (l, r) = (2, 1);
    let x = Tensor::randn(vec![14, 4], 1.0, &mut rng(21));
    for kind in [BlockKind::RestrictedSa, BlockKind::Msa] {
        let (block, store) = init_block(&block_cfg(kind, 4, Some(l), Some(r)), 20);
        let base = run_block(&block, &store, &x);
        for p in [0usize, 5, 13] {
            let mut y = x.clone();
            y.data_mut()[p * 4 + 1] -= 0.9;
            let changed = changed_rows(&base, &run_block(&block, &store, &y), 0.0);
            let expected: Vec<usize> = match kind {
                BlockKind::RestrictedSa => (p.saturating_sub(r)..=(p + l).min(13)).collect(),
                _ => (p.saturating_sub(r)..14).collect(),
            };
            assert_eq!(changed, expected, "{kind:?} p={p}");
        }
    }
}

#[test]
fn stacked_restricted_reception_field_is_exact() {
    let (l, r, m) = (2usize, 1usize, 3usize);
    let cfg = block_cfg(BlockKind::RestrictedSa, 4, Some(l), Some(r));
    let blocks: Vec<Block> = (0..m).map(|i| Block::new(&format!("b{i}"), &cfg).unwrap()).collect();
    let mut store = ParamStore::new();
    for b in &blocks {
        b.init(&mut store, &mut rng(22));
    }
    let run = |x: &Tensor| {
        eval(&store, x, |cx, x| blocks.iter().try_fold(x, |h, b| b.forward(cx, h)))
    };
    let x = Tensor::randn(vec![30, 4], 1.0, &mut rng(23));
    let base = run(&x);
    let p = 15;
    let mut y = x.clone();
    y.data_mut()[p * 4] += 1.0;
    let changed = changed_rows(&base, &run(&y), 0.0);
    assert_eq!(changed, (p - m * r..=p + m * l).collect::<Vec<_>>());
}

#[test]
fn parameter_counts_match_closed_form() {
    for kind in [BlockKind::Msa, BlockKind::RestrictedSa, BlockKind::Lstm, BlockKind::Blstm] {
        for (bias, mem) in [(false, MemoryInput::Center), (true, MemoryInput::Window)] {
            let mut cfg = block_cfg(kind, 8, Some(3), Some(2));
            cfg.relative_bias = bias;
            cfg.memory_input = mem;
            let (block, store) = init_block(&cfg, 0);
            let (d, f, span) = (8usize, 16usize, 6usize);
            let attn = 4 * (d * d + d) + if bias { span } else { 0 };
            let norms = 4 * d;
            let ffn = 2 * d * f + f + d;
            let lstm = 4 * d * (2 * d + 1);
            let w = if mem == MemoryInput::Window { span * d } else { d };
            let expected = match kind {
                BlockKind::Msa => attn + w * d + d + lstm + norms + ffn,
                BlockKind::RestrictedSa => attn + norms + ffn,
                BlockKind::Lstm => lstm,
                BlockKind::Blstm => 2 * lstm,
            };
            assert_eq!(block.param_count(), expected, "{kind:?}");
            assert_eq!(store.num_elements(), expected, "{kind:?}");
        }
    }
}

#[test]
fn conv_stride_three_output_length() {
    let blocks = [ConvBlockConfig { kind: ConvKind::TwoD, kernel_freq: 3, kernel_time: 5, channels: 2, time_stride: 3, layers_per_block: 1, causal: false }];
    let fe = ConvFrontend::new("fe", 4, &blocks, 6).unwrap();
    let mut store = ParamStore::new();
    fe.init(&mut store, &mut rng(0));
    let out = eval(&store, &Tensor::randn(vec![10, 4], 1.0, &mut rng(1)), |cx, x| fe.forward(cx, x));
    assert_eq!(out.shape(), &[4, 6]);
    assert_eq!(fe.out_len(10), 4);
}

#[test]
fn identity_kernel_sums_channels() {
    let geo = ConvGeometry { c_in: 3, c_out: 1, freq: 4, kernel_freq: 3, kernel_time: 5, left: 2, stride: 1 };
    let layer = ConvLayer::new("c", geo);
    let mut store = ParamStore::new();
    layer.init(&mut store, &mut rng(0));
    let mut w = Tensor::zeros(geo.weight_shape());
    for ci in 0..3 {
        w.data_mut()[(ci * 3 + 1) * 5 + 2] = 1.0;
    }
    *store.get_mut("c.weight").unwrap() = w;
    let x = Tensor::randn(vec![6, 12], 1.0, &mut rng(2));
    let out = eval(&store, &x, |cx, x| layer.conv(cx, x));
    for t in 0..6 {
        for f in 0..4 {
            let sum: f64 = (0..3).map(|ci| x.row(t)[ci * 4 + f]).sum();
            assert!((out.row(t)[f] - sum).abs() < 1e-14);
        }
    }
}

#[test]
fn conv_frontend_gradients() {
    for seed in 0..5 {
        let kind = if seed % 2 == 0 { ConvKind::TwoD } else { ConvKind::OneD };
        let blocks = [
            ConvBlockConfig { kind, kernel_freq: 3, kernel_time: 3, channels: 2, time_stride: 2, layers_per_block: 2, causal: seed == 3 },
            ConvBlockConfig { kind, kernel_freq: 3, kernel_time: 3, channels: 2, time_stride: 1, layers_per_block: 1, causal: seed == 3 },
        ];
        let fe = ConvFrontend::new("fe", 3, &blocks, 4).unwrap();
        let mut store = ParamStore::new();
        fe.init(&mut store, &mut rng(seed));
        let mut r = rng(seed + 30);
        let x = Tensor::randn(vec![5, 3], 1.0, &mut r);
        let w = Tensor::randn(vec![fe.out_len(5), 4], 1.0, &mut r);
        let err = check_with_store(&store, &[x, w], |cx, v| fe.forward(cx, v[0])?.mul(v[1])?.sum());
        assert!(err < 1e-4, "seed {seed}: {err}");
    }
}

#[test]
fn conv_rejects_empty_input() {
    let fe = ConvFrontend::new("fe", 3, &[ConvBlockConfig::full_1d(2)], 4).unwrap();
    let mut store = ParamStore::new();
    fe.init(&mut store, &mut rng(0));
    let g = Graph::new();
    let cx = Ctx::new(&g, &store);
    let x = g.constant(Tensor::zeros(vec![0, 3]));
    assert!(matches!(fe.forward(&cx, x), Err(msa_transducer::Error::Input(_))));
}

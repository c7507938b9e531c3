mod common;

use common::{changed_rows, rng, tiny_config};
use msa_transducer::layers::BlockKind;
use msa_transducer::numcore::{grad_check, kernels, Ctx, Graph, Tensor};
use msa_transducer::transducer::{
    load_checkpoint, load_partial, save_checkpoint, save_checkpoint_as, Dtype, ModelConfig, TransducerModel, Vocabulary,
    ENCODER_PREFIX,
};
use msa_transducer::Error;
use rand::Rng;

fn tiny_model(kind: BlockKind, seed: u64) -> TransducerModel {
    TransducerModel::new(tiny_config(kind), Vocabulary::graphemes(), seed).unwrap()
}

fn features(t: usize, d: usize, seed: u64) -> Tensor {
    Tensor::randn(vec![t, d], 1.0, &mut rng(seed))
}

#[test]
fn stride_three_encoder_length() {
    let m = tiny_model(BlockKind::Msa, 0);
    assert_eq!(m.encode_tensor(&features(30, 6, 1)).unwrap().shape(), &[10, 8]);
    assert_eq!(m.encode_tensor(&features(31, 6, 1)).unwrap().shape(), &[11, 8]);
    assert!(matches!(m.encode_tensor(&Tensor::zeros(vec![0, 6])), Err(Error::Input(_))));
}

#[test]
fn full_scale_lookahead_constant() {
    let cfg = ModelConfig::full(123);
    let arch = msa_transducer::transducer::Architecture::new(&cfg, 30).unwrap();
    // Each centered 5-tap conv layer reads two frames ahead at its own
    // input rate; the two layers after the stride-3 layer count triple.
    let conv = 2 + 2 + 3 * (2 + 2);
    assert_eq!(arch.encoder_lookahead(&cfg), Some(12 * 4 * 3 + conv));
}

#[test]
fn full_predictor_matches_reference_configuration() {
    let cfg = ModelConfig::full(123);
    assert_eq!(cfg.predictor.kind, BlockKind::Msa);
    assert_eq!(cfg.predictor.layers, 2);
    assert_eq!((cfg.predictor.left, cfg.predictor.right), (Some(10), Some(0)));
    assert_eq!((cfg.encoder.layers, cfg.d_model, cfg.heads, cfg.d_ff), (12, 1024, 8, 2048));
    assert_eq!((cfg.encoder.left, cfg.encoder.right), (Some(16), Some(4)));
}

/// Earliest encoder output that changes when input frame `p` is perturbed.
fn first_affected(m: &TransducerModel, x: &Tensor, base: &Tensor, p: usize) -> Option<usize> {
    let mut y = x.clone();
    let d = x.shape()[1];
    for v in &mut y.data_mut()[p * d..(p + 1) * d] {
        *v += 0.5;
    }
    changed_rows(base, &m.encode_tensor(&y).unwrap(), 0.0).first().copied()
}

#[test]
fn lookahead_bounds_deep_stack() {
    let mut cfg = tiny_config(BlockKind::Msa);
    cfg.encoder.layers = 12;
    cfg.encoder.left = Some(16);
    cfg.encoder.right = Some(4);
    let m = TransducerModel::new(cfg, Vocabulary::graphemes(), 3).unwrap();
    let look = m.encoder_lookahead().unwrap();
    assert_eq!(look, 12 * 4 * 3 + 2 + 2);
    let x = features(420, 6, 4);
    let base = m.encode_tensor(&x).unwrap();
    for p in [look + 5, look + 6, look + 7, 400] {
        // Output j reads inputs up to 3j + look. Twelve hops at the window
        // edge attenuate below fp64 resolution, so only the bound is exact.
        let bound = (p - look).div_ceil(3);
        assert!(first_affected(&m, &x, &base, p).unwrap() >= bound, "p={p}");
    }
}

#[test]
fn lookahead_is_tight_for_shallow_stack() {
    let m = tiny_model(BlockKind::RestrictedSa, 3);
    let look = m.encoder_lookahead().unwrap();
    assert_eq!(look, 2 * 3 + 2 + 2);
    let x = features(60, 6, 4);
    let base = m.encode_tensor(&x).unwrap();
    for p in look..60 {
        assert_eq!(first_affected(&m, &x, &base, p), Some((p - look).div_ceil(3)), "p={p}");
    }
}

#[test]
fn end_to_end_causality_probes() {
    for kind in [BlockKind::Msa, BlockKind::RestrictedSa, BlockKind::Lstm] {
        let m = tiny_model(kind, 5);
        let look = m.encoder_lookahead().unwrap();
        let x = features(90, 6, 6);
        let base = m.encode_tensor(&x).unwrap();
        let mut r = rng(7);
        for _ in 0..10 {
            let p = r.random_range(0..90);
            let first = first_affected(&m, &x, &base, p).expect("perturbation reaches some output");
            assert!(first * 3 + look >= p, "{kind:?}: output {first} changed by input {p}");
        }
    }
    let blstm = tiny_model(BlockKind::Blstm, 5);
    assert_eq!(blstm.encoder_lookahead(), None);
}

#[test]
fn predictor_rows_and_causality() {
    let m = tiny_model(BlockKind::Msa, 8);
    assert_eq!(m.predict_tensor(&[]).unwrap().shape(), &[1, 8]);
    let labels = [3, 9, 4, 20, 7];
    let base = m.predict_tensor(&labels).unwrap();
    assert_eq!(base.shape(), &[6, 8]);
    for u in 0..labels.len() {
        let mut changed = labels;
        changed[u] = if labels[u] == 5 { 6 } else { 5 };
        let rows = changed_rows(&base, &m.predict_tensor(&changed).unwrap(), 0.0);
        assert!(rows.iter().all(|&r| r > u), "label {u}: rows {rows:?}");
        assert!(rows.contains(&(u + 1)));
    }
    assert!(matches!(m.predict_tensor(&[3, Vocabulary::BLANK]), Err(Error::Contract(_))));
}

#[test]
fn joint_slices_are_normalized_and_local() {
    let m = tiny_model(BlockKind::Msa, 9);
    let e = Tensor::randn(vec![4, 8], 1.0, &mut rng(10));
    let d = m.predict_tensor(&[5, 6]).unwrap();
    let out = m.joint_tensor(&e, &d).unwrap();
    assert_eq!(out.shape(), &[4, 3, 30]);
    for slice in out.data().chunks(30) {
        assert!(kernels::log_sum_exp(slice).abs() < 1e-10);
    }
    let mut e2 = e.clone();
    e2.data_mut()[2 * 8] += 1.0;
    let out2 = m.joint_tensor(&e2, &d).unwrap();
    for t in 0..4 {
        let same = out.data()[t * 90..(t + 1) * 90] == out2.data()[t * 90..(t + 1) * 90];
        assert_eq!(same, t != 2, "t={t}");
    }

    let jk = m.joint_kernel().unwrap();
    for t in 0..4 {
        let pe = jk.project_encoder(e.row(t));
        for u in 0..3 {
            let lp = jk.log_probs(&pe, &jk.project_predictor(d.row(u)));
            let slice = &out.data()[(t * 3 + u) * 30..][..30];
            assert!(lp.iter().zip(slice).all(|(a, b)| (a - b).abs() < 1e-12));
        }
    }
}

#[test]
fn joint_gradient() {
    for seed in 0..5 {
        let m = tiny_model(BlockKind::Msa, seed);
        let names = ["joint.encoder.weight", "joint.encoder.bias", "joint.predictor.weight", "joint.output.weight", "joint.output.bias"];
        let mut r = rng(seed + 40);
        let mut inputs: Vec<Tensor> = names.iter().map(|n| m.params.get(n).unwrap().clone()).collect();
        inputs.push(Tensor::randn(vec![3, 8], 1.0, &mut r));
        inputs.push(Tensor::randn(vec![2, 8], 1.0, &mut r));
        let w = Tensor::randn(vec![3, 2, 30], 1.0, &mut r);
        let err = grad_check(&inputs, |g: &Graph, v| {
            let cx = Ctx::new(g, &m.params);
            for (n, var) in names.iter().zip(v) {
                cx.bind_var(n, *var);
            }
            m.joint(&cx, v[5], v[6])?.mul(g.constant(w.clone()))?.sum()
        })
        .unwrap();
        assert!(err < 1e-5, "{err}");
    }
}

#[test]
fn restricted_variant_equals_msa_with_silent_memory() {
    let mut msa = tiny_model(BlockKind::Msa, 11);
    for (name, t) in msa.params.iter_mut() {
        if name.contains(".memory.") {
            *t = Tensor::zeros(t.shape().to_vec());
        }
    }
    let restricted_cfg = {
        let mut c = msa.config.clone();
        c.encoder.kind = BlockKind::RestrictedSa;
        c.predictor.kind = BlockKind::RestrictedSa;
        c
    };
    let shared = msa.params.iter().filter(|(n, _)| !n.contains(".memory.")).map(|(n, t)| (n.clone(), t.clone()));
    let mut store = msa_transducer::numcore::ParamStore::new();
    for (n, t) in shared {
        store.insert(n, t);
    }
    let restricted = TransducerModel::from_parts(restricted_cfg, msa.vocab.clone(), store).unwrap();
    let x = features(24, 6, 12);
    let labels = [4, 8, 15];
    let a = msa.joint_tensor(&msa.encode_tensor(&x).unwrap(), &msa.predict_tensor(&labels).unwrap()).unwrap();
    let b = restricted
        .joint_tensor(&restricted.encode_tensor(&x).unwrap(), &restricted.predict_tensor(&labels).unwrap())
        .unwrap();
    assert_eq!(a, b);
}

#[test]
fn checkpoint_round_trip_is_byte_stable() {
    let dir = tempfile::tempdir().unwrap();
    let m = tiny_model(BlockKind::Msa, 13);
    for dtype in [Dtype::F32, Dtype::F64] {
        let (a, b) = (dir.path().join("a"), dir.path().join("b"));
        save_checkpoint_as(&m, &a, dtype).unwrap();
        let loaded = load_checkpoint(&a).unwrap();
        save_checkpoint_as(&loaded, &b, dtype).unwrap();
        for f in ["manifest.txt", "params.bin", "config.toml", "vocab.txt"] {
            assert_eq!(std::fs::read(a.join(f)).unwrap(), std::fs::read(b.join(f)).unwrap(), "{f}");
        }
        let again = load_checkpoint(&b).unwrap();
        assert_eq!(again.params, loaded.params);
        if dtype == Dtype::F64 {
            assert_eq!(loaded.params, m.params);
        }
    }
}

#[test]
fn tampered_checkpoints_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let m = tiny_model(BlockKind::Msa, 14);
    save_checkpoint(&m, dir.path()).unwrap();
    let manifest = std::fs::read_to_string(dir.path().join("manifest.txt")).unwrap();

    let tampered = manifest.replacen("param.ce_head.output.bias=29@", "param.ce_head.output.bias=28@", 1);
    assert_ne!(tampered, manifest);
    std::fs::write(dir.path().join("manifest.txt"), &tampered).unwrap();
    assert!(matches!(load_checkpoint(dir.path()), Err(Error::Checkpoint(_))));

    std::fs::write(dir.path().join("manifest.txt"), manifest.replace("version=1", "version=2")).unwrap();
    assert!(matches!(load_checkpoint(dir.path()), Err(Error::Checkpoint(_))));

    std::fs::write(dir.path().join("manifest.txt"), &manifest).unwrap();
    let mut cfg = std::fs::read_to_string(dir.path().join("config.toml")).unwrap();
    cfg = cfg.replace("d_ff = 16", "d_ff = 32");
    std::fs::write(dir.path().join("config.toml"), cfg).unwrap();
    assert!(matches!(load_checkpoint(dir.path()), Err(Error::Checkpoint(_))));
}

#[test]
fn partial_load_restores_exactly_the_encoder() {
    let dir = tempfile::tempdir().unwrap();
    let source = tiny_model(BlockKind::Msa, 15);
    save_checkpoint_as(&source, dir.path(), Dtype::F64).unwrap();
    let mut target = tiny_model(BlockKind::Msa, 16);
    let before = target.params.clone();
    let restored = load_partial(&mut target, dir.path(), ENCODER_PREFIX).unwrap();

    let expected: Vec<String> = source.params.names().filter(|n| n.starts_with("encoder.")).map(String::from).collect();
    assert_eq!(restored, expected);
    for (name, t) in target.params.iter() {
        let reference = if name.starts_with("encoder.") { &source.params } else { &before };
        assert_eq!(t, reference.get(name).unwrap(), "{name}");
    }
}

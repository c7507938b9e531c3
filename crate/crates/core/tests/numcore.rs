use msa_transducer::numcore::nn::{self, ConvGeometry, Window};
use msa_transducer::numcore::{grad_check, Graph, Tensor};
use msa_transducer::Error;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn t2(rows: usize, cols: usize, data: &[f64]) -> Tensor {
    Tensor::new(vec![rows, cols], data.to_vec()).unwrap()
}

#[test]
fn matmul_identity_and_hand_example() {
    let g = Graph::new();
    let eye = g.constant(t2(2, 2, &[1.0, 0.0, 0.0, 1.0]));
    let a = g.constant(t2(2, 2, &[1.0, 2.0, 3.0, 4.0]));
    assert_eq!(eye.matmul(a).unwrap().value().data(), &[1.0, 2.0, 3.0, 4.0]);
    let ones = g.constant(t2(2, 1, &[1.0, 1.0]));
    let out = a.matmul(ones).unwrap();
    assert_eq!(out.shape(), vec![2, 1]);
    assert_eq!(out.value().data(), &[3.0, 7.0]);
}

#[test]
fn matmul_shape_mismatch_is_dimension_error() {
    let g = Graph::new();
    let a = g.constant(Tensor::zeros(vec![2, 3]));
    let b = g.constant(Tensor::zeros(vec![2, 3]));
    assert!(matches!(a.matmul(b), Err(Error::Dimension { .. })));
}

#[test]
fn matmul_gradient_matches_finite_differences() {
    let mut r = rng(1);
    let a = Tensor::randn(vec![3, 4], 1.0, &mut r);
    let b = Tensor::randn(vec![4, 2], 1.0, &mut r);
    let err = grad_check(&[a, b], |_, v| v[0].matmul(v[1])?.sum()).unwrap();
    assert!(err < 1e-7, "{err}");
}

#[test]
fn elementwise_examples() {
    let g = Graph::new();
    let x = g.constant(Tensor::vector(vec![-1.0, 0.0, 2.0]));
    assert_eq!(x.relu().unwrap().value().data(), &[0.0, 0.0, 2.0]);
    let z = g.constant(Tensor::scalar(0.0));
    assert_eq!(z.sigmoid().unwrap().value().item(), 0.5);
}

#[test]
fn log_of_nonpositive_is_numeric_error() {
    let g = Graph::new();
    let x = g.constant(Tensor::vector(vec![1.0, 0.0]));
    assert!(matches!(x.log(), Err(Error::Numeric { .. })));
    let big = g.constant(Tensor::vector(vec![1000.0]));
    assert!(matches!(big.exp(), Err(Error::Numeric { .. })));
}

#[test]
fn broadcast_is_trailing_only() {
    let g = Graph::new();
    let x = g.constant(Tensor::zeros(vec![3, 2]));
    let bias = g.constant(Tensor::vector(vec![1.0, 2.0]));
    assert_eq!(x.add(bias).unwrap().value().data(), &[1.0, 2.0, 1.0, 2.0, 1.0, 2.0]);
    let wrong = g.constant(Tensor::vector(vec![1.0, 2.0, 3.0]));
    assert!(matches!(x.add(wrong), Err(Error::Dimension { .. })));
}

#[test]
fn elementwise_gradients() {
    for seed in 0..5 {
        let mut r = rng(seed);
        let x = Tensor::randn(vec![3, 4], 1.0, &mut r);
        let y = Tensor::randn(vec![4], 1.0, &mut r);
        let w = Tensor::randn(vec![3, 4], 1.0, &mut r);
        let err = grad_check(&[x.clone(), w.clone()], |_, v| v[0].tanh()?.mul(v[1])?.sum()).unwrap();
        assert!(err < 1e-7, "tanh {err}");
        let err = grad_check(&[x.clone(), y.clone()], |_, v| {
            v[0].add(v[1])?.sigmoid()?.mul(v[0])?.sum()
        })
        .unwrap();
        assert!(err < 1e-7, "sigmoid/add/mul {err}");
        let err = grad_check(&[x.clone(), w.clone()], |_, v| v[0].exp()?.mul(v[1])?.sum()).unwrap();
        assert!(err < 1e-7, "exp {err}");
        let pos = x.map(|v| v.abs() + 0.5);
        let err = grad_check(&[pos, w.clone()], |_, v| v[0].log()?.mul(v[1])?.sum()).unwrap();
        assert!(err < 1e-7, "log {err}");
        let shifted = x.map(|v| if v.abs() < 1e-3 { v + 0.1 } else { v });
        let err = grad_check(&[shifted, w.clone()], |_, v| v[0].relu()?.mul(v[1])?.sum()).unwrap();
        assert!(err < 1e-7, "relu {err}");
    }
}

#[test]
fn softmax_examples() {
    let g = Graph::new();
    let u = g.constant(Tensor::vector(vec![0.7; 5]));
    for v in u.softmax(0).unwrap().value().data() {
        assert!((v - 0.2).abs() < 1e-15);
    }
    let x = g.constant(Tensor::vector(vec![0.0, 3f64.ln()]));
    let s = x.softmax(0).unwrap().to_tensor();
    assert!((s.data()[0] - 0.25).abs() < 1e-15 && (s.data()[1] - 0.75).abs() < 1e-15);
    assert!(matches!(x.softmax(1), Err(Error::Dimension { .. })));
}

#[test]
fn log_softmax_is_log_of_softmax() {
    let mut r = rng(7);
    let g = Graph::new();
    let x = g.constant(Tensor::randn(vec![10], 3.0, &mut r));
    let s = x.softmax(0).unwrap().to_tensor();
    let ls = x.log_softmax(0).unwrap().to_tensor();
    assert!(ls.map(f64::exp).max_abs_diff(&s) < 1e-12);
}

#[test]
fn softmax_gradients_along_both_axes() {
    for seed in 0..5 {
        let mut r = rng(seed + 10);
        let x = Tensor::randn(vec![3, 5], 1.0, &mut r);
        let w = Tensor::randn(vec![3, 5], 1.0, &mut r);
        for axis in 0..2 {
            let err = grad_check(&[x.clone(), w.clone()], |_, v| v[0].softmax(axis)?.mul(v[1])?.sum()).unwrap();
            assert!(err < 1e-7, "softmax axis {axis}: {err}");
            let err =
                grad_check(&[x.clone(), w.clone()], |_, v| v[0].log_softmax(axis)?.mul(v[1])?.sum()).unwrap();
            assert!(err < 1e-7, "log_softmax axis {axis}: {err}");
        }
    }
}

#[test]
fn grad_check_quadratic() {
    let w = Tensor::vector(vec![1.0, 2.0]);
    let g = Graph::new();
    let v = g.leaf(w.clone());
    let out = v.mul(v).unwrap().sum().unwrap();
    let grads = g.backward(out).unwrap();
    assert_eq!(grads.get(v).unwrap().data(), &[2.0, 4.0]);
    let err = grad_check(&[w], |_, v| v[0].mul(v[0])?.sum()).unwrap();
    assert!(err < 1e-9, "{err}");
}

#[test]
fn grad_check_rejects_non_finite_objective() {
    let w = Tensor::vector(vec![800.0]);
    let res = grad_check(&[w], |_, v| v[0].exp()?.sum());
    assert!(matches!(res, Err(Error::Numeric { .. })));
}

#[test]
fn shape_op_gradients() {
    let mut r = rng(3);
    let x = Tensor::randn(vec![4, 6], 1.0, &mut r);
    let w = Tensor::randn(vec![4, 3], 1.0, &mut r);
    let err = grad_check(&[x.clone(), w.clone()], |_, v| v[0].slice_cols(2, 5)?.mul(v[1])?.sum()).unwrap();
    assert!(err < 1e-8, "{err}");
    let err = grad_check(&[x.clone(), w.clone()], |_, v| {
        msa_transducer::numcore::concat_cols(&[v[1], v[0], v[1]])?.tanh()?.sum()
    })
    .unwrap();
    assert!(err < 1e-8, "{err}");
    let err = grad_check(&[x.clone()], |_, v| {
        msa_transducer::numcore::gather_rows(v[0], &[3, 1, 3])?.tanh()?.sum()
    })
    .unwrap();
    assert!(err < 1e-8, "{err}");
    let err = grad_check(&[x.clone()], |_, v| v[0].log_softmax(1)?.pick(&[0, 5, 2, 2])?.sum()).unwrap();
    assert!(err < 1e-8, "{err}");
    let err = grad_check(&[x.clone(), x.clone()], |_, v| v[0].reverse_rows()?.mul(v[1])?.sum()).unwrap();
    assert!(err < 1e-8, "{err}");
}

#[test]
fn fused_op_gradients() {
    for seed in 0..5 {
        let mut r = rng(100 + seed);
        let x = Tensor::randn(vec![5, 6], 1.0, &mut r);
        let gain = Tensor::randn(vec![6], 1.0, &mut r);
        let bias = Tensor::randn(vec![6], 1.0, &mut r);
        let w = Tensor::randn(vec![5, 6], 1.0, &mut r);
        let err = grad_check(&[x.clone(), gain, bias, w.clone()], |_, v| {
            nn::layer_norm(v[0], v[1], v[2], 1e-6)?.mul(v[3])?.sum()
        })
        .unwrap();
        assert!(err < 1e-5, "layer_norm {err}");

        let a = Tensor::randn(vec![3, 4], 1.0, &mut r);
        let b = Tensor::randn(vec![2, 4], 1.0, &mut r);
        let err = grad_check(&[a, b], |_, v| nn::outer_add(v[0], v[1])?.tanh()?.sum()).unwrap();
        assert!(err < 1e-7, "outer_add {err}");

        let err = grad_check(&[x.clone(), Tensor::randn(vec![5, 24], 1.0, &mut r)], |_, v| {
            nn::unfold_window(v[0], 2, 1)?.mul(v[1])?.sum()
        })
        .unwrap();
        assert!(err < 1e-6, "unfold {err}");
    }
}

#[test]
fn attention_gradients_with_bias() {
    for seed in 0..5 {
        let mut r = rng(200 + seed);
        let q = Tensor::randn(vec![6, 4], 1.0, &mut r);
        let k = Tensor::randn(vec![6, 4], 1.0, &mut r);
        let v = Tensor::randn(vec![6, 4], 1.0, &mut r);
        let bias = Tensor::randn(vec![4], 0.5, &mut r);
        let w = Tensor::randn(vec![6, 4], 1.0, &mut r);
        let err = grad_check(&[q.clone(), k.clone(), v.clone(), bias, w.clone()], |_, p| {
            nn::windowed_attention(p[0], p[1], p[2], 2, Window::new(2, 1), Some(p[3]), None)?
                .mul(p[4])?
                .sum()
        })
        .unwrap();
        assert!(err < 1e-6, "windowed {err}");
        let err = grad_check(&[q, k, v, w], |_, p| {
            nn::windowed_attention(p[0], p[1], p[2], 1, Window::UNBOUNDED, None, Some((0.3, 9)))?
                .mul(p[3])?
                .sum()
        })
        .unwrap();
        assert!(err < 1e-6, "unbounded with dropout {err}");
    }
}

#[test]
fn lstm_sequence_gradients() {
    for seed in 0..5 {
        let mut r = rng(300 + seed);
        let d = 3;
        let xw = Tensor::randn(vec![4, 4 * d], 1.0, &mut r);
        let whh = Tensor::randn(vec![d, 4 * d], 0.5, &mut r);
        let h0 = Tensor::randn(vec![d], 0.5, &mut r);
        let c0 = Tensor::randn(vec![d], 0.5, &mut r);
        let w = Tensor::randn(vec![4, 2 * d], 1.0, &mut r);
        let err = grad_check(&[xw, whh, h0, c0, w], |_, p| {
            nn::lstm_sequence(p[0], p[1], p[2], p[3])?.mul(p[4])?.sum()
        })
        .unwrap();
        assert!(err < 1e-6, "lstm {err}");
    }
}

#[test]
fn conv_gradients_centered_and_causal() {
    for (seed, left, stride) in [(0u64, 1usize, 1usize), (1, 1, 3), (2, 2, 1), (3, 0, 2), (4, 2, 3)] {
        let mut r = rng(400 + seed);
        let geo = ConvGeometry { c_in: 2, c_out: 2, freq: 3, kernel_freq: 3, kernel_time: 3, left, stride };
        let t_in = 7;
        let x = Tensor::randn(vec![t_in, 6], 1.0, &mut r);
        let w = Tensor::randn(geo.weight_shape(), 0.5, &mut r);
        let b = Tensor::randn(vec![2], 0.5, &mut r);
        let m = Tensor::randn(vec![geo.out_len(t_in), 6], 1.0, &mut r);
        let err = grad_check(&[x, w, b, m], |_, p| nn::conv_time(p[0], p[1], p[2], geo)?.mul(p[3])?.sum()).unwrap();
        assert!(err < 1e-7, "conv left={left} stride={stride}: {err}");
    }
}

#[test]
fn graph_rejects_backward_from_non_scalar() {
    let g = Graph::new();
    let x = g.leaf(Tensor::zeros(vec![2]));
    assert!(matches!(g.backward(x), Err(Error::Dimension { .. })));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn softmax_is_on_the_simplex(xs in prop::collection::vec(-30.0f64..30.0, 1..20)) {
        let g = Graph::new();
        let s = g.constant(Tensor::vector(xs)).softmax(0).unwrap().to_tensor();
        prop_assert!(s.data().iter().all(|&v| v >= 0.0));
        prop_assert!((s.sum() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn matmul_is_associative(seed in 0u64..1000) {
        let mut r = rng(seed);
        let g = Graph::new();
        let ms: Vec<_> = (0..3).map(|_| g.constant(Tensor::randn(vec![8, 8], 1.0, &mut r))).collect();
        let left = ms[0].matmul(ms[1]).unwrap().matmul(ms[2]).unwrap().to_tensor();
        let right = ms[0].matmul(ms[1].matmul(ms[2]).unwrap()).unwrap().to_tensor();
        prop_assert!(left.max_abs_diff(&right) < 1e-10);
    }
}

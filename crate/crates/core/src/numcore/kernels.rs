//! Row-oriented compute kernels shared by the graph ops and the streaming
//! engine. Every kernel processes one output row at a time in a fixed
//! accumulation order, so a row computed offline and the same row computed
//! frame-by-frame are bitwise identical.
//!
//! Forward kernels add their multiply-accumulate count to a thread-local
//! counter; backward helpers do not.

use std::cell::Cell;

thread_local! {
    static MACS: Cell<u64> = const { Cell::new(0) };
}

/// Multiply-accumulates performed by forward kernels on this thread.
pub fn mac_count() -> u64 {
    MACS.with(Cell::get)
}

pub fn reset_macs() {
    MACS.with(|m| m.set(0));
}

#[inline]
pub(crate) fn add_macs(n: u64) {
    MACS.with(|m| m.set(m.get() + n));
}

/// `out[n] = a[k] · b[k, n]`, accumulated in `p` order.
#[inline]
pub fn vecmat(a: &[f64], b: &[f64], n: usize) -> Vec<f64> {
    let mut out = vec![0.0; n];
    vecmat_into(&mut out, a, b, n);
    add_macs((a.len() * n) as u64);
    out
}

#[inline]
fn vecmat_into(out: &mut [f64], a: &[f64], b: &[f64], n: usize) {
    for (p, &av) in a.iter().enumerate() {
        if av == 0.0 {
            continue;
        }
        let brow = &b[p * n..(p + 1) * n];
        for (o, &bv) in out.iter_mut().zip(brow) {
            *o += av * bv;
        }
    }
}

/// `a[m, k] · b[k, n]` computed row by row with [`vecmat`]'s arithmetic.
pub fn matmul(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        vecmat_into(&mut out[i * n..(i + 1) * n], &a[i * k..(i + 1) * k], b, n);
    }
    add_macs((m * k * n) as u64);
    out
}

/// `g[m, n] · b[k, n]ᵀ -> [m, k]` (gradient wrt the left matmul operand).
pub(crate) fn matmul_bt(g: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    let mut out = vec![0.0; m * k];
    for i in 0..m {
        let grow = &g[i * n..(i + 1) * n];
        for p in 0..k {
            let brow = &b[p * n..(p + 1) * n];
            out[i * k + p] = grow.iter().zip(brow).map(|(x, y)| x * y).sum();
        }
    }
    out
}

/// `a[m, k]ᵀ · g[m, n] -> [k, n]` (gradient wrt the right matmul operand).
pub(crate) fn matmul_at(a: &[f64], g: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    let mut out = vec![0.0; k * n];
    for i in 0..m {
        let grow = &g[i * n..(i + 1) * n];
        for (p, &av) in a[i * k..(i + 1) * k].iter().enumerate() {
            if av == 0.0 {
                continue;
            }
            for (o, &gv) in out[p * n..(p + 1) * n].iter_mut().zip(grow) {
                *o += av * gv;
            }
        }
    }
    out
}

/// Normalizes one vector to zero mean / unit variance, returning
/// `(normalized, inverse std)`.
pub fn normalize(x: &[f64], eps: f64) -> (Vec<f64>, f64) {
    let d = x.len() as f64;
    let mean = x.iter().sum::<f64>() / d;
    let var = x.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / d;
    let rstd = 1.0 / (var + eps).sqrt();
    (x.iter().map(|v| (v - mean) * rstd).collect(), rstd)
}

pub fn layer_norm_row(x: &[f64], gain: &[f64], bias: &[f64], eps: f64) -> Vec<f64> {
    let (xhat, _) = normalize(x, eps);
    xhat.iter()
        .zip(gain.iter().zip(bias))
        .map(|(h, (g, b))| h * g + b)
        .collect()
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Gate activations of one LSTM step, kept for the backward pass.
#[derive(Clone, Debug)]
pub struct LstmGates {
    pub input: Vec<f64>,
    pub forget: Vec<f64>,
    pub cell: Vec<f64>,
    pub output: Vec<f64>,
    pub tanh_c: Vec<f64>,
}

/// One LSTM cell update from pre-activations laid out as `[i | f | g | o]`.
pub fn lstm_cell(pre: &[f64], c_prev: &[f64]) -> (Vec<f64>, Vec<f64>, LstmGates) {
    let d = c_prev.len();
    debug_assert_eq!(pre.len(), 4 * d);
    let input: Vec<f64> = pre[..d].iter().map(|&v| sigmoid(v)).collect();
    let forget: Vec<f64> = pre[d..2 * d].iter().map(|&v| sigmoid(v)).collect();
    let cell: Vec<f64> = pre[2 * d..3 * d].iter().map(|v| v.tanh()).collect();
    let output: Vec<f64> = pre[3 * d..].iter().map(|&v| sigmoid(v)).collect();
    let c: Vec<f64> = (0..d).map(|j| forget[j] * c_prev[j] + input[j] * cell[j]).collect();
    let tanh_c: Vec<f64> = c.iter().map(|v| v.tanh()).collect();
    let h: Vec<f64> = (0..d).map(|j| output[j] * tanh_c[j]).collect();
    add_macs(3 * d as u64);
    (h, c, LstmGates { input, forget, cell, output, tanh_c })
}

/// Attention of one query over a set of key/value rows, per head.
///
/// `logit_bias[j]` is added to the (scaled) logit of key `j` in every head.
/// Returns the concatenated head outputs and the per-head weights
/// (`weights[h * n_keys + j]`).
pub fn attend(
    query: &[f64],
    keys: &[&[f64]],
    values: &[&[f64]],
    heads: usize,
    logit_bias: Option<&[f64]>,
) -> (Vec<f64>, Vec<f64>) {
    let d = query.len();
    let dh = d / heads;
    let n = keys.len();
    let scale = 1.0 / (dh as f64).sqrt();
    let mut out = vec![0.0; d];
    let mut weights = vec![0.0; heads * n];
    for h in 0..heads {
        let span = h * dh..(h + 1) * dh;
        let q = &query[span.clone()];
        let w = &mut weights[h * n..(h + 1) * n];
        for (j, key) in keys.iter().enumerate() {
            let dot: f64 = q.iter().zip(&key[span.clone()]).map(|(a, b)| a * b).sum();
            w[j] = dot * scale + logit_bias.map_or(0.0, |b| b[j]);
        }
        let max = w.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut z = 0.0;
        for v in w.iter_mut() {
            *v = (*v - max).exp();
            z += *v;
        }
        for v in w.iter_mut() {
            *v /= z;
        }
        let o = &mut out[span.clone()];
        for (j, value) in values.iter().enumerate() {
            let wj = w[j];
            for (ov, vv) in o.iter_mut().zip(&value[span.clone()]) {
                *ov += wj * vv;
            }
        }
    }
    add_macs((2 * d * n) as u64);
    (out, weights)
}

/// One output frame of a time convolution.
///
/// `frames` holds the `kt` input frames under the kernel, each laid out as
/// `[c_in][freq]`. The weight is `[c_out][c_in][kf][kt]`; frequency taps are
/// centered and zero-padded. Output layout is `[c_out][freq]`.
pub fn conv_frame(
    frames: &[&[f64]],
    weight: &[f64],
    bias: &[f64],
    c_in: usize,
    c_out: usize,
    freq: usize,
    kf: usize,
) -> Vec<f64> {
    let kt = frames.len();
    let half_f = (kf / 2) as isize;
    let mut out = vec![0.0; c_out * freq];
    let mut macs = 0u64;
    for co in 0..c_out {
        for f in 0..freq {
            let mut acc = bias[co];
            for ci in 0..c_in {
                for df in 0..kf {
                    let fi = f as isize + df as isize - half_f;
                    if fi < 0 || fi >= freq as isize {
                        continue;
                    }
                    let wbase = ((co * c_in + ci) * kf + df) * kt;
                    let xoff = ci * freq + fi as usize;
                    for (dt, frame) in frames.iter().enumerate() {
                        acc += weight[wbase + dt] * frame[xoff];
                    }
                    macs += kt as u64;
                }
            }
            out[co * freq + f] = acc;
        }
    }
    add_macs(macs);
    out
}

/// Numerically stable `log(exp(a) + exp(b))`.
#[inline]
pub fn log_add(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let (hi, lo) = if a > b { (a, b) } else { (b, a) };
    hi + (lo - hi).exp().ln_1p()
}

pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + xs.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

/// Row log-softmax with the same arithmetic as the graph op.
pub fn log_softmax_row(x: &[f64]) -> Vec<f64> {
    let max = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let z: f64 = x.iter().map(|v| (v - max).exp()).sum();
    let lse = max + z.ln();
    x.iter().map(|v| v - lse).collect()
}

/// Index of the largest value; ties go to the lowest index.
pub fn argmax(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in xs.iter().enumerate() {
        if v > xs[best] {
            best = i;
        }
    }
    best
}

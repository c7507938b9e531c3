//! Fused network primitives. Forward passes go through the row kernels in
//! [`super::kernels`], which the streaming engine reuses frame by frame.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

use super::kernels::{self, LstmGates};
use super::{Tensor, Var};

/// Attendable span `[t − left, t + right]`; `None` is unbounded.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Window {
    pub left: Option<usize>,
    pub right: Option<usize>,
}

impl Window {
    pub const UNBOUNDED: Window = Window { left: None, right: None };

    pub fn new(left: usize, right: usize) -> Self {
        Self { left: Some(left), right: Some(right) }
    }

    /// Key range `[lo, hi)` visible from query `t` in a sequence of `len`.
    pub fn keys(&self, t: usize, len: usize) -> (usize, usize) {
        let lo = self.left.map_or(0, |l| t.saturating_sub(l));
        let hi = self.right.map_or(len, |r| (t + r + 1).min(len));
        (lo, hi)
    }

    /// Width of the per-offset bias vector, when both sides are bounded.
    pub fn span(&self) -> Option<usize> {
        Some(self.left? + self.right? + 1)
    }
}

/// Layer normalization over the last axis, `y = x̂·gain + bias`.
///
/// Backward, per vector with `ĝ = g ⊙ gain`:
/// `dx = rstd·(ĝ − mean(ĝ) − x̂·mean(ĝ ⊙ x̂))`, `dgain = Σ g ⊙ x̂`, `dbias = Σ g`.
pub fn layer_norm<'g>(x: Var<'g>, gain: Var<'g>, bias: Var<'g>, eps: f64) -> Result<Var<'g>> {
    let (value, xhat, rstd) = {
        let xv = x.value();
        let (gv, bv) = (gain.value(), bias.value());
        let d = xv.last_dim();
        if d < 2 || gv.shape() != [d] || bv.shape() != [d] {
            return Err(Error::dim(
                "layer_norm",
                format!("x {:?}, gain {:?}, bias {:?}", xv.shape(), gv.shape(), bv.shape()),
            ));
        }
        let mut out = Vec::with_capacity(xv.len());
        let mut xhat = Vec::with_capacity(xv.len());
        let mut rstd = Vec::with_capacity(xv.outer_len());
        for row in xv.rows() {
            let (h, r) = kernels::normalize(row, eps);
            out.extend(h.iter().zip(gv.data().iter().zip(bv.data())).map(|(h, (g, b))| h * g + b));
            xhat.extend(h);
            rstd.push(r);
        }
        (Tensor::new(xv.shape().to_vec(), out)?, xhat, rstd)
    };
    x.graph().op(
        "layer_norm",
        &[x, gain, bias],
        value,
        Box::new(move |ctx| {
            let gain = ctx.inputs[1].data();
            let d = gain.len();
            let g = ctx.grad.data();
            let mut dx = vec![0.0; g.len()];
            let mut dgain = vec![0.0; d];
            let mut dbias = vec![0.0; d];
            for (r, &rs) in rstd.iter().enumerate() {
                let span = r * d..(r + 1) * d;
                let (gr, hr) = (&g[span.clone()], &xhat[span.clone()]);
                let gh: Vec<f64> = gr.iter().zip(gain).map(|(a, b)| a * b).collect();
                let m1 = gh.iter().sum::<f64>() / d as f64;
                let m2 = gh.iter().zip(hr).map(|(a, b)| a * b).sum::<f64>() / d as f64;
                for j in 0..d {
                    dx[r * d + j] = rs * (gh[j] - m1 - hr[j] * m2);
                    dgain[j] += gr[j] * hr[j];
                    dbias[j] += gr[j];
                }
            }
            vec![
                Some(Tensor::new(ctx.inputs[0].shape().to_vec(), dx).expect("shape")),
                Some(Tensor::vector(dgain)),
                Some(Tensor::vector(dbias)),
            ]
        }),
    )
}

/// Geometry of a time convolution over `[T, c_in·freq]` frames.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ConvGeometry {
    pub c_in: usize,
    pub c_out: usize,
    pub freq: usize,
    pub kernel_freq: usize,
    pub kernel_time: usize,
    /// Past frames under the kernel; the remaining `kernel_time − 1 − left`
    /// taps look ahead.
    pub left: usize,
    pub stride: usize,
}

impl ConvGeometry {
    pub fn right(&self) -> usize {
        self.kernel_time - 1 - self.left
    }

    pub fn out_len(&self, t_in: usize) -> usize {
        t_in.div_ceil(self.stride)
    }

    pub fn weight_shape(&self) -> Vec<usize> {
        vec![self.c_out, self.c_in, self.kernel_freq, self.kernel_time]
    }

    /// Input position under tap `dt` of output `i`: `None` is left zero
    /// padding, positions past the end replicate the last frame.
    pub fn tap(&self, i: usize, dt: usize, t_in: usize) -> Option<usize> {
        let p = (i * self.stride + dt) as isize - self.left as isize;
        if p < 0 {
            None
        } else {
            Some((p as usize).min(t_in - 1))
        }
    }
}

/// Time convolution with centered, zero-padded frequency taps. In time,
/// positions before the start read zeros and positions past the end
/// replicate the final frame; output `i` is centered at input `i·stride`.
///
/// Backward: `db = Σ g`, `dW = Σ g·x_tap`, `dx_tap += g·W` (replicated
/// taps all accumulate into the final frame).
pub fn conv_time<'g>(x: Var<'g>, weight: Var<'g>, bias: Var<'g>, geo: ConvGeometry) -> Result<Var<'g>> {
    let value = {
        let (xv, wv, bv) = (x.value(), weight.value(), bias.value());
        let width = geo.c_in * geo.freq;
        if xv.rank() != 2 || xv.shape()[1] != width {
            return Err(Error::dim("conv_time", format!("input {:?}, expected [T, {width}]", xv.shape())));
        }
        if wv.shape() != geo.weight_shape().as_slice() || bv.shape() != [geo.c_out] {
            return Err(Error::dim("conv_time", format!("weight {:?}, bias {:?}", wv.shape(), bv.shape())));
        }
        let t_in = xv.shape()[0];
        if t_in == 0 {
            return Err(Error::Input("conv_time: empty input".into()));
        }
        let zeros = vec![0.0; width];
        let t_out = geo.out_len(t_in);
        let mut data = Vec::with_capacity(t_out * geo.c_out * geo.freq);
        for i in 0..t_out {
            let frames: Vec<&[f64]> = (0..geo.kernel_time)
                .map(|dt| geo.tap(i, dt, t_in).map_or(zeros.as_slice(), |p| xv.row(p)))
                .collect();
            data.extend(kernels::conv_frame(
                &frames, wv.data(), bv.data(), geo.c_in, geo.c_out, geo.freq, geo.kernel_freq,
            ));
        }
        Tensor::new(vec![t_out, geo.c_out * geo.freq], data)?
    };
    x.graph().op(
        "conv_time",
        &[x, weight, bias],
        value,
        Box::new(move |ctx| {
            let (xv, wv) = (ctx.inputs[0], ctx.inputs[1]);
            let t_in = xv.shape()[0];
            let (freq, kf, kt) = (geo.freq, geo.kernel_freq, geo.kernel_time);
            let half = (kf / 2) as isize;
            let mut dx = Tensor::zeros(xv.shape().to_vec());
            let mut dw = Tensor::zeros(wv.shape().to_vec());
            let mut db = Tensor::zeros(vec![geo.c_out]);
            let t_out = ctx.grad.shape()[0];
            for i in 0..t_out {
                let taps: Vec<Option<usize>> = (0..kt).map(|dt| geo.tap(i, dt, t_in)).collect();
                let grow = ctx.grad.row(i);
                for co in 0..geo.c_out {
                    for f in 0..freq {
                        let g = grow[co * freq + f];
                        if g == 0.0 {
                            continue;
                        }
                        db.data_mut()[co] += g;
                        for ci in 0..geo.c_in {
                            for df in 0..kf {
                                let fi = f as isize + df as isize - half;
                                if fi < 0 || fi >= freq as isize {
                                    continue;
                                }
                                let col = ci * freq + fi as usize;
                                let wbase = ((co * geo.c_in + ci) * kf + df) * kt;
                                for (dt, tap) in taps.iter().enumerate() {
                                    let Some(p) = *tap else { continue };
                                    dw.data_mut()[wbase + dt] += g * xv.data()[p * xv.last_dim() + col];
                                    dx.data_mut()[p * xv.last_dim() + col] += g * wv.data()[wbase + dt];
                                }
                            }
                        }
                    }
                }
            }
            vec![Some(dx), Some(dw), Some(db)]
        }),
    )
}

/// Multi-head scaled dot-product attention in which query `t` sees keys
/// in `window.keys(t, T)` only. `bias`, when given, is a learned logit
/// offset indexed by `j − t + left` and requires a bounded window.
/// `dropout` is `(rate, seed)` applied to the attention weights.
///
/// Backward per query and head, with weights `a`, mask `m`, output grad `g`:
/// `dv_j += a_j m_j g`, `da_j = m_j g·v_j`, `ds_j = a_j (da_j − Σ_k a_k da_k)`,
/// `dq += scale·Σ ds_j k_j`, `dk_j += scale·ds_j q`, `dbias_off += ds_j`.
pub fn windowed_attention<'g>(
    q: Var<'g>,
    k: Var<'g>,
    v: Var<'g>,
    heads: usize,
    window: Window,
    bias: Option<Var<'g>>,
    dropout: Option<(f64, u64)>,
) -> Result<Var<'g>> {
    let (value, saved) = {
        let (qv, kv, vv) = (q.value(), k.value(), v.value());
        let shape = qv.shape().to_vec();
        if shape.len() != 2 || kv.shape() != shape.as_slice() || vv.shape() != shape.as_slice() {
            return Err(Error::dim(
                "attention",
                format!("q {:?}, k {:?}, v {:?}", qv.shape(), kv.shape(), vv.shape()),
            ));
        }
        let (t_len, d) = (shape[0], shape[1]);
        if heads == 0 || d % heads != 0 {
            return Err(Error::dim("attention", format!("d_model {d} not divisible by {heads} heads")));
        }
        let bias_v = bias.map(|b| b.value().clone());
        if let Some(b) = &bias_v {
            let span = window
                .span()
                .ok_or_else(|| Error::dim("attention", "offset bias needs a bounded window"))?;
            if b.shape() != [span] {
                return Err(Error::dim("attention", format!("bias {:?}, expected [{span}]", b.shape())));
            }
        }
        let mut rng = dropout.map(|(_, seed)| ChaCha8Rng::seed_from_u64(seed));
        let keys: Vec<&[f64]> = kv.rows().collect();
        let values: Vec<&[f64]> = vv.rows().collect();
        let mut out = Vec::with_capacity(t_len * d);
        let mut saved = Vec::with_capacity(t_len);
        for t in 0..t_len {
            let (lo, hi) = window.keys(t, t_len);
            let offset_bias: Option<Vec<f64>> = bias_v.as_ref().map(|b| {
                let left = window.left.unwrap_or(0);
                (lo..hi).map(|j| b.data()[j + left - t]).collect()
            });
            let (o, weights) =
                kernels::attend(qv.row(t), &keys[lo..hi], &values[lo..hi], heads, offset_bias.as_deref());
            match (&mut rng, dropout) {
                (Some(rng), Some((rate, _))) => {
                    let keep = 1.0 - rate;
                    let mask: Vec<f64> = (0..weights.len())
                        .map(|_| if rng.random::<f64>() < keep { 1.0 / keep } else { 0.0 })
                        .collect();
                    let n = hi - lo;
                    let dh = d / heads;
                    let mut o = vec![0.0; d];
                    for h in 0..heads {
                        for j in 0..n {
                            let w = weights[h * n + j] * mask[h * n + j];
                            for c in h * dh..(h + 1) * dh {
                                o[c] += w * values[lo + j][c];
                            }
                        }
                    }
                    out.extend(o);
                    saved.push((weights, Some(mask)));
                }
                _ => {
                    out.extend(o);
                    saved.push((weights, None));
                }
            }
        }
        (Tensor::new(shape, out)?, saved)
    };
    let mut parents = vec![q, k, v];
    parents.extend(bias);
    let has_bias = bias.is_some();
    q.graph().op(
        "attention",
        &parents,
        value,
        Box::new(move |ctx| {
            let (qv, kv, vv) = (ctx.inputs[0], ctx.inputs[1], ctx.inputs[2]);
            let (t_len, d) = (qv.shape()[0], qv.shape()[1]);
            let dh = d / heads;
            let scale = 1.0 / (dh as f64).sqrt();
            let mut dq = Tensor::zeros(vec![t_len, d]);
            let mut dk = Tensor::zeros(vec![t_len, d]);
            let mut dv = Tensor::zeros(vec![t_len, d]);
            let mut dbias = has_bias.then(|| Tensor::zeros(ctx.inputs[3].shape().to_vec()));
            let left = window.left.unwrap_or(0);
            for t in 0..t_len {
                let (lo, hi) = window.keys(t, t_len);
                let n = hi - lo;
                let (weights, mask) = &saved[t];
                let g = ctx.grad.row(t);
                let qrow = qv.row(t);
                for h in 0..heads {
                    let span = h * dh..(h + 1) * dh;
                    let a = &weights[h * n..(h + 1) * n];
                    let mut da = vec![0.0; n];
                    for j in 0..n {
                        let m = mask.as_ref().map_or(1.0, |m| m[h * n + j]);
                        let vrow = vv.row(lo + j);
                        da[j] = m * span.clone().map(|c| g[c] * vrow[c]).sum::<f64>();
                        let dvrow = &mut dv.data_mut()[(lo + j) * d..(lo + j + 1) * d];
                        for c in span.clone() {
                            dvrow[c] += a[j] * m * g[c];
                        }
                    }
                    let dot: f64 = a.iter().zip(&da).map(|(x, y)| x * y).sum();
                    for j in 0..n {
                        let ds = a[j] * (da[j] - dot);
                        if ds == 0.0 {
                            continue;
                        }
                        let krow = kv.row(lo + j);
                        for c in span.clone() {
                            dq.data_mut()[t * d + c] += scale * ds * krow[c];
                            dk.data_mut()[(lo + j) * d + c] += scale * ds * qrow[c];
                        }
                        if let Some(db) = &mut dbias {
                            db.data_mut()[lo + j + left - t] += ds;
                        }
                    }
                }
            }
            let mut grads = vec![Some(dq), Some(dk), Some(dv)];
            if has_bias {
                grads.push(dbias);
            }
            grads
        }),
    )
}

/// Unidirectional LSTM over precomputed input pre-activations.
///
/// `xw` is `[T, 4d]` (gate order `i, f, g, o`), `w_hh` is `[d, 4d]`, `h0`
/// and `c0` are `[d]`. Each step computes `pre = xw_t + h_{t−1}·W_hh`.
/// Output is `[T, 2d]`: hidden state then cell state per step.
///
/// Backward is truncation-free BPTT: with `dh = g_h + dh_next` and
/// `dc = g_c + dc_next + dh ⊙ o ⊙ (1 − tanh²c)`, the pre-activation grads are
/// `[dc⊙g⊙i(1−i), dc⊙c_prev⊙f(1−f), dc⊙i⊙(1−g²), dh⊙tanh c⊙o(1−o)]`,
/// `dW_hh += h_prevᵀ·dpre`, `dh_next = dpre·W_hhᵀ`, `dc_next = dc ⊙ f`.
pub fn lstm_sequence<'g>(xw: Var<'g>, w_hh: Var<'g>, h0: Var<'g>, c0: Var<'g>) -> Result<Var<'g>> {
    let (value, steps) = {
        let (xv, wv, hv, cv) = (xw.value(), w_hh.value(), h0.value(), c0.value());
        let d = hv.len();
        if xv.rank() != 2
            || xv.shape()[1] != 4 * d
            || wv.shape() != [d, 4 * d]
            || hv.shape() != [d]
            || cv.shape() != [d]
        {
            return Err(Error::dim(
                "lstm",
                format!("xw {:?}, w_hh {:?}, h0 {:?}, c0 {:?}", xv.shape(), wv.shape(), hv.shape(), cv.shape()),
            ));
        }
        let t_len = xv.shape()[0];
        let mut h = hv.data().to_vec();
        let mut c = cv.data().to_vec();
        let mut out = Vec::with_capacity(t_len * 2 * d);
        let mut steps: Vec<LstmGates> = Vec::with_capacity(t_len);
        for t in 0..t_len {
            let pre = lstm_preactivation(xv.row(t), &h, wv.data());
            let (hn, cn, gates) = kernels::lstm_cell(&pre, &c);
            out.extend_from_slice(&hn);
            out.extend_from_slice(&cn);
            h = hn;
            c = cn;
            steps.push(gates);
        }
        (Tensor::new(vec![t_len, 2 * d], out)?, steps)
    };
    xw.graph().op(
        "lstm",
        &[xw, w_hh, h0, c0],
        value,
        Box::new(move |ctx| {
            let (wv, h0v, c0v) = (ctx.inputs[1], ctx.inputs[2], ctx.inputs[3]);
            let d = h0v.len();
            let t_len = steps.len();
            let out = ctx.output;
            let mut dxw = Tensor::zeros(vec![t_len, 4 * d]);
            let mut dw = vec![0.0; d * 4 * d];
            let mut dh_next = vec![0.0; d];
            let mut dc_next = vec![0.0; d];
            for t in (0..t_len).rev() {
                let gates = &steps[t];
                let grow = ctx.grad.row(t);
                let (h_prev, c_prev) = if t == 0 {
                    (h0v.data(), c0v.data())
                } else {
                    let r = out.row(t - 1);
                    (&r[..d], &r[d..])
                };
                let mut dpre = vec![0.0; 4 * d];
                for j in 0..d {
                    let dh = grow[j] + dh_next[j];
                    let (i, f, g, o, tc) =
                        (gates.input[j], gates.forget[j], gates.cell[j], gates.output[j], gates.tanh_c[j]);
                    let dc = grow[d + j] + dc_next[j] + dh * o * (1.0 - tc * tc);
                    dpre[j] = dc * g * i * (1.0 - i);
                    dpre[d + j] = dc * c_prev[j] * f * (1.0 - f);
                    dpre[2 * d + j] = dc * i * (1.0 - g * g);
                    dpre[3 * d + j] = dh * tc * o * (1.0 - o);
                    dc_next[j] = dc * f;
                }
                for p in 0..d {
                    let hp = h_prev[p];
                    let wrow = &mut dw[p * 4 * d..(p + 1) * 4 * d];
                    for (w, g) in wrow.iter_mut().zip(&dpre) {
                        *w += hp * g;
                    }
                }
                for p in 0..d {
                    let wrow = &wv.data()[p * 4 * d..(p + 1) * 4 * d];
                    dh_next[p] = wrow.iter().zip(&dpre).map(|(w, g)| w * g).sum();
                }
                dxw.data_mut()[t * 4 * d..(t + 1) * 4 * d].copy_from_slice(&dpre);
            }
            vec![
                Some(dxw),
                Some(Tensor::new(vec![d, 4 * d], dw).expect("shape")),
                Some(Tensor::vector(dh_next)),
                Some(Tensor::vector(dc_next)),
            ]
        }),
    )
}

/// `xw + h·W_hh` for one step, shared with the streaming engine.
pub fn lstm_preactivation(xw: &[f64], h_prev: &[f64], w_hh: &[f64]) -> Vec<f64> {
    let hw = kernels::vecmat(h_prev, w_hh, xw.len());
    xw.iter().zip(&hw).map(|(a, b)| a + b).collect()
}

/// Row `t` of the output is `[x_{t−left}, …, x_{t+right}]` flattened, with
/// zeros outside `[0, T)`. Backward scatters each block back to its row.
pub fn unfold_window<'g>(x: Var<'g>, left: usize, right: usize) -> Result<Var<'g>> {
    let value = {
        let xv = x.value();
        if xv.rank() != 2 {
            return Err(Error::dim("unfold_window", format!("{:?}", xv.shape())));
        }
        let (t_len, d) = (xv.shape()[0], xv.shape()[1]);
        let rows: Vec<&[f64]> = xv.rows().collect();
        let data = (0..t_len).flat_map(|t| window_row(&rows, t, left, right, d)).collect();
        Tensor::new(vec![t_len, (left + right + 1) * d], data)?
    };
    x.graph().op(
        "unfold_window",
        &[x],
        value,
        Box::new(move |ctx| {
            let xs = ctx.inputs[0].shape();
            let (t_len, d) = (xs[0], xs[1]);
            let w = left + right + 1;
            let mut dx = Tensor::zeros(xs.to_vec());
            for t in 0..t_len {
                let g = ctx.grad.row(t);
                for k in 0..w {
                    let p = t as isize + k as isize - left as isize;
                    if p < 0 || p >= t_len as isize {
                        continue;
                    }
                    let p = p as usize;
                    for c in 0..d {
                        dx.data_mut()[p * d + c] += g[k * d + c];
                    }
                }
            }
            vec![Some(dx)]
        }),
    )
}

/// Flattened `[x_{t−left}, …, x_{t+right}]` with zero rows outside `rows`.
pub fn window_row(rows: &[&[f64]], t: usize, left: usize, right: usize, d: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity((left + right + 1) * d);
    for k in 0..=left + right {
        let p = t as isize + k as isize - left as isize;
        if p < 0 || p >= rows.len() as isize {
            out.extend(std::iter::repeat_n(0.0, d));
        } else {
            out.extend_from_slice(rows[p as usize]);
        }
    }
    out
}

/// `[T, k] ⊕ [U, k] -> [T·U, k]` with row `t·U + u` equal to `a_t + b_u`.
/// Backward: `da_t = Σ_u g_{t,u}`, `db_u = Σ_t g_{t,u}`.
pub fn outer_add<'g>(a: Var<'g>, b: Var<'g>) -> Result<Var<'g>> {
    let value = {
        let (av, bv) = (a.value(), b.value());
        if av.rank() != 2 || bv.rank() != 2 || av.shape()[1] != bv.shape()[1] {
            return Err(Error::dim("outer_add", format!("{:?} and {:?}", av.shape(), bv.shape())));
        }
        let (t_len, u_len, k) = (av.shape()[0], bv.shape()[0], av.shape()[1]);
        let mut data = Vec::with_capacity(t_len * u_len * k);
        for ar in av.rows() {
            for br in bv.rows() {
                data.extend(ar.iter().zip(br).map(|(x, y)| x + y));
            }
        }
        Tensor::new(vec![t_len * u_len, k], data)?
    };
    a.graph().op(
        "outer_add",
        &[a, b],
        value,
        Box::new(|ctx| {
            let (t_len, k) = (ctx.inputs[0].shape()[0], ctx.inputs[0].shape()[1]);
            let u_len = ctx.inputs[1].shape()[0];
            let mut da = Tensor::zeros(vec![t_len, k]);
            let mut db = Tensor::zeros(vec![u_len, k]);
            for t in 0..t_len {
                for u in 0..u_len {
                    let g = ctx.grad.row(t * u_len + u);
                    for c in 0..k {
                        da.data_mut()[t * k + c] += g[c];
                        db.data_mut()[u * k + c] += g[c];
                    }
                }
            }
            vec![Some(da), Some(db)]
        }),
    )
}

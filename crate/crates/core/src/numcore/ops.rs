//! Elementwise, reduction and shape ops on graph variables. Each op's doc
//! comment states its backward rule in terms of the output gradient `g`.

use crate::error::{Error, Result};

use super::kernels::{self, sigmoid};
use super::{Tensor, Var};

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
enum Broadcast {
    Same,
    /// The right operand repeats over the leading axes of the left one.
    Right,
    Left,
}

fn broadcast(op: &'static str, a: &[usize], b: &[usize]) -> Result<Broadcast> {
    if a == b {
        Ok(Broadcast::Same)
    } else if b.len() < a.len() && a.ends_with(b) {
        Ok(Broadcast::Right)
    } else if a.len() < b.len() && b.ends_with(a) {
        Ok(Broadcast::Left)
    } else {
        Err(Error::dim(op, format!("cannot broadcast {a:?} with {b:?}")))
    }
}

/// Sums a full-size gradient down to a broadcast operand of length `n`.
fn reduce_to(g: &[f64], shape: &[usize]) -> Tensor {
    let n: usize = shape.iter().product();
    let mut out = vec![0.0; n];
    for (i, v) in g.iter().enumerate() {
        out[i % n] += v;
    }
    Tensor::new(shape.to_vec(), out).expect("reduce shape")
}

fn binary<'g>(
    name: &'static str,
    a: Var<'g>,
    b: Var<'g>,
    f: fn(f64, f64) -> f64,
    grads: fn(f64, f64, f64) -> (f64, f64),
) -> Result<Var<'g>> {
    let (value, mode) = {
        let av = a.value();
        let bv = b.value();
        let mode = broadcast(name, av.shape(), bv.shape())?;
        let (big, small, swap) = match mode {
            Broadcast::Left => (&*bv, &*av, true),
            _ => (&*av, &*bv, false),
        };
        let n = small.len();
        let data = big
            .data()
            .iter()
            .enumerate()
            .map(|(i, &x)| {
                let y = small.data()[i % n];
                if swap { f(y, x) } else { f(x, y) }
            })
            .collect();
        (Tensor::new(big.shape().to_vec(), data)?, mode)
    };
    a.graph().op(
        name,
        &[a, b],
        value,
        Box::new(move |ctx| {
            let (av, bv) = (ctx.inputs[0], ctx.inputs[1]);
            let total = ctx.grad.len();
            let (na, nb) = (av.len(), bv.len());
            let mut ga = vec![0.0; total];
            let mut gb = vec![0.0; total];
            for i in 0..total {
                let (da, db) = grads(av.data()[i % na], bv.data()[i % nb], ctx.grad.data()[i]);
                ga[i] = da;
                gb[i] = db;
            }
            let ga = match mode {
                Broadcast::Left => reduce_to(&ga, av.shape()),
                _ => Tensor::new(av.shape().to_vec(), ga).expect("grad shape"),
            };
            let gb = match mode {
                Broadcast::Right => reduce_to(&gb, bv.shape()),
                _ => Tensor::new(bv.shape().to_vec(), gb).expect("grad shape"),
            };
            vec![Some(ga), Some(gb)]
        }),
    )
}

fn unary<'g>(
    name: &'static str,
    x: Var<'g>,
    f: impl Fn(f64) -> f64,
    // dy/dx from (x, y)
    deriv: fn(f64, f64) -> f64,
) -> Result<Var<'g>> {
    let value = x.value().map(f);
    x.graph().op(
        name,
        &[x],
        value,
        Box::new(move |ctx| {
            let xs = ctx.inputs[0].data();
            let ys = ctx.output.data();
            let g = Tensor::from_fn(ctx.grad.shape().to_vec(), |i| {
                ctx.grad.data()[i] * deriv(xs[i], ys[i])
            });
            vec![Some(g)]
        }),
    )
}

/// Splits a shape around `axis` into `(outer, extent, inner)`.
fn axis_split(op: &'static str, shape: &[usize], axis: usize) -> Result<(usize, usize, usize)> {
    if axis >= shape.len() {
        return Err(Error::dim(op, format!("axis {axis} out of range for {shape:?}")));
    }
    let outer = shape[..axis].iter().product();
    let inner = shape[axis + 1..].iter().product();
    Ok((outer, shape[axis], inner))
}

fn for_each_lane(outer: usize, ext: usize, inner: usize, mut f: impl FnMut(&[usize])) {
    let mut idx = vec![0; ext];
    for o in 0..outer {
        for i in 0..inner {
            for (k, slot) in idx.iter_mut().enumerate() {
                *slot = (o * ext + k) * inner + i;
            }
            f(&idx);
        }
    }
}

impl<'g> Var<'g> {
    /// `[m, k] · [k, n]`. Backward: `dA = g·Bᵀ`, `dB = Aᵀ·g`.
    pub fn matmul(self, rhs: Var<'g>) -> Result<Var<'g>> {
        let (value, m, k, n) = {
            let a = self.value();
            let b = rhs.value();
            if a.rank() != 2 || b.rank() != 2 || a.shape()[1] != b.shape()[0] {
                return Err(Error::dim(
                    "matmul",
                    format!("{:?} x {:?}", a.shape(), b.shape()),
                ));
            }
            let (m, k, n) = (a.shape()[0], a.shape()[1], b.shape()[1]);
            (Tensor::new(vec![m, n], kernels::matmul(a.data(), b.data(), m, k, n))?, m, k, n)
        };
        self.graph().op(
            "matmul",
            &[self, rhs],
            value,
            Box::new(move |ctx| {
                let (a, b, g) = (ctx.inputs[0], ctx.inputs[1], ctx.grad);
                let ga = kernels::matmul_bt(g.data(), b.data(), m, k, n);
                let gb = kernels::matmul_at(a.data(), g.data(), m, k, n);
                vec![
                    Some(Tensor::new(vec![m, k], ga).expect("shape")),
                    Some(Tensor::new(vec![k, n], gb).expect("shape")),
                ]
            }),
        )
    }

    /// Elementwise sum; the smaller operand may repeat over leading axes.
    /// Backward: `g` to both sides, summed over repeats.
    pub fn add(self, rhs: Var<'g>) -> Result<Var<'g>> {
        binary("add", self, rhs, |a, b| a + b, |_, _, g| (g, g))
    }

    pub fn sub(self, rhs: Var<'g>) -> Result<Var<'g>> {
        binary("sub", self, rhs, |a, b| a - b, |_, _, g| (g, -g))
    }

    /// Backward: `dA = g·B`, `dB = g·A`.
    pub fn mul(self, rhs: Var<'g>) -> Result<Var<'g>> {
        binary("mul", self, rhs, |a, b| a * b, |a, b, g| (g * b, g * a))
    }

    pub fn scale(self, s: f64) -> Result<Var<'g>> {
        let value = self.value().map(|v| v * s);
        self.graph().op(
            "scale",
            &[self],
            value,
            Box::new(move |ctx| vec![Some(ctx.grad.map(|g| g * s))]),
        )
    }

    /// Multiplies by a constant tensor of the same shape (dropout masks).
    pub fn mul_const(self, mask: Tensor) -> Result<Var<'g>> {
        let c = self.graph().constant(mask);
        self.mul(c)
    }

    /// Backward: `g·(1 − y²)`.
    pub fn tanh(self) -> Result<Var<'g>> {
        unary("tanh", self, f64::tanh, |_, y| 1.0 - y * y)
    }

    /// Backward: `g·y(1 − y)`.
    pub fn sigmoid(self) -> Result<Var<'g>> {
        unary("sigmoid", self, sigmoid, |_, y| y * (1.0 - y))
    }

    /// Backward: `g·[x > 0]`.
    pub fn relu(self) -> Result<Var<'g>> {
        unary("relu", self, |v| v.max(0.0), |x, _| if x > 0.0 { 1.0 } else { 0.0 })
    }

    /// Backward: `g·y`.
    pub fn exp(self) -> Result<Var<'g>> {
        unary("exp", self, f64::exp, |_, y| y)
    }

    /// Natural log; non-positive inputs are a numeric error. Backward: `g/x`.
    pub fn log(self) -> Result<Var<'g>> {
        if self.value().data().iter().any(|&v| v <= 0.0) {
            return Err(Error::numeric("log", "argument must be positive"));
        }
        unary("log", self, f64::ln, |x, _| 1.0 / x)
    }

    /// Softmax along `axis` (max-subtracted).
    /// Backward: `y ⊙ (g − Σ_axis g⊙y)`.
    pub fn softmax(self, axis: usize) -> Result<Var<'g>> {
        let (value, dims) = {
            let x = self.value();
            let dims = axis_split("softmax", x.shape(), axis)?;
            let mut out = x.clone();
            for_each_lane(dims.0, dims.1, dims.2, |idx| {
                let max = idx.iter().map(|&i| x.data()[i]).fold(f64::NEG_INFINITY, f64::max);
                let mut z = 0.0;
                for &i in idx {
                    let e = (x.data()[i] - max).exp();
                    out.data_mut()[i] = e;
                    z += e;
                }
                for &i in idx {
                    out.data_mut()[i] /= z;
                }
            });
            (out, dims)
        };
        self.graph().op(
            "softmax",
            &[self],
            value,
            Box::new(move |ctx| {
                let (y, g) = (ctx.output.data(), ctx.grad.data());
                let mut dx = Tensor::zeros(ctx.grad.shape().to_vec());
                for_each_lane(dims.0, dims.1, dims.2, |idx| {
                    let dot: f64 = idx.iter().map(|&i| g[i] * y[i]).sum();
                    for &i in idx {
                        dx.data_mut()[i] = y[i] * (g[i] - dot);
                    }
                });
                vec![Some(dx)]
            }),
        )
    }

    /// Log-softmax along `axis`. Backward: `g − softmax ⊙ Σ_axis g`.
    pub fn log_softmax(self, axis: usize) -> Result<Var<'g>> {
        let (value, dims) = {
            let x = self.value();
            let dims = axis_split("log_softmax", x.shape(), axis)?;
            let mut out = x.clone();
            for_each_lane(dims.0, dims.1, dims.2, |idx| {
                let max = idx.iter().map(|&i| x.data()[i]).fold(f64::NEG_INFINITY, f64::max);
                let z: f64 = idx.iter().map(|&i| (x.data()[i] - max).exp()).sum();
                let lse = max + z.ln();
                for &i in idx {
                    out.data_mut()[i] = x.data()[i] - lse;
                }
            });
            (out, dims)
        };
        self.graph().op(
            "log_softmax",
            &[self],
            value,
            Box::new(move |ctx| {
                let (y, g) = (ctx.output.data(), ctx.grad.data());
                let mut dx = Tensor::zeros(ctx.grad.shape().to_vec());
                for_each_lane(dims.0, dims.1, dims.2, |idx| {
                    let gsum: f64 = idx.iter().map(|&i| g[i]).sum();
                    for &i in idx {
                        dx.data_mut()[i] = g[i] - y[i].exp() * gsum;
                    }
                });
                vec![Some(dx)]
            }),
        )
    }

    /// Sum of all entries. Backward: `g` broadcast.
    pub fn sum(self) -> Result<Var<'g>> {
        let value = Tensor::scalar(self.value().sum());
        self.graph().op(
            "sum",
            &[self],
            value,
            Box::new(|ctx| {
                let g = ctx.grad.item();
                vec![Some(Tensor::full(ctx.inputs[0].shape().to_vec(), g))]
            }),
        )
    }

    pub fn mean(self) -> Result<Var<'g>> {
        let n = self.value().len() as f64;
        self.sum()?.scale(1.0 / n)
    }

    pub fn reshape(self, shape: impl Into<Vec<usize>>) -> Result<Var<'g>> {
        let value = self.value().clone().reshape(shape)?;
        self.graph().op(
            "reshape",
            &[self],
            value,
            Box::new(|ctx| {
                let g = ctx.grad.clone().reshape(ctx.inputs[0].shape().to_vec()).expect("shape");
                vec![Some(g)]
            }),
        )
    }

    /// Columns `[start, end)` of a rank-2 tensor.
    pub fn slice_cols(self, start: usize, end: usize) -> Result<Var<'g>> {
        let (value, rows, cols) = {
            let x = self.value();
            if x.rank() != 2 || start >= end || end > x.shape()[1] {
                return Err(Error::dim("slice_cols", format!("{start}..{end} of {:?}", x.shape())));
            }
            let rows = x.shape()[0];
            let data = x.rows().flat_map(|r| r[start..end].iter().copied()).collect();
            (Tensor::new(vec![rows, end - start], data)?, rows, x.shape()[1])
        };
        self.graph().op(
            "slice_cols",
            &[self],
            value,
            Box::new(move |ctx| {
                let mut dx = Tensor::zeros(vec![rows, cols]);
                let w = end - start;
                for r in 0..rows {
                    dx.data_mut()[r * cols + start..r * cols + end]
                        .copy_from_slice(&ctx.grad.data()[r * w..(r + 1) * w]);
                }
                vec![Some(dx)]
            }),
        )
    }

    /// Picks `x[i, index[i]]` from a rank-2 tensor, giving a vector.
    /// Backward: scatter of `g` into the picked positions.
    pub fn pick(self, index: &[usize]) -> Result<Var<'g>> {
        let index = index.to_vec();
        let (value, cols) = {
            let x = self.value();
            if x.rank() != 2 || x.shape()[0] != index.len() {
                return Err(Error::dim("pick", format!("{} indices for {:?}", index.len(), x.shape())));
            }
            let cols = x.shape()[1];
            if let Some(&bad) = index.iter().find(|&&i| i >= cols) {
                return Err(Error::dim("pick", format!("index {bad} >= {cols}")));
            }
            let data = index.iter().enumerate().map(|(r, &c)| x.data()[r * cols + c]).collect();
            (Tensor::vector(data), cols)
        };
        self.graph().op(
            "pick",
            &[self],
            value,
            Box::new(move |ctx| {
                let mut dx = Tensor::zeros(vec![index.len(), cols]);
                for (r, &c) in index.iter().enumerate() {
                    dx.data_mut()[r * cols + c] = ctx.grad.data()[r];
                }
                vec![Some(dx)]
            }),
        )
    }

    /// Reverses the row order of a rank-2 tensor.
    pub fn reverse_rows(self) -> Result<Var<'g>> {
        fn rev(t: &Tensor) -> Tensor {
            let rows: Vec<&[f64]> = t.rows().collect();
            let data = rows.iter().rev().flat_map(|r| r.iter().copied()).collect();
            Tensor::new(t.shape().to_vec(), data).expect("shape")
        }
        let value = {
            let x = self.value();
            if x.rank() != 2 {
                return Err(Error::dim("reverse_rows", format!("{:?}", x.shape())));
            }
            rev(&x)
        };
        self.graph().op("reverse_rows", &[self], value, Box::new(|ctx| vec![Some(rev(ctx.grad))]))
    }
}

/// Concatenates rank-2 tensors with equal row counts along columns.
pub fn concat_cols<'g>(parts: &[Var<'g>]) -> Result<Var<'g>> {
    let first = parts.first().ok_or_else(|| Error::dim("concat_cols", "no inputs"))?;
    let (value, widths) = {
        let vals: Vec<_> = parts.iter().map(|p| p.value()).collect();
        let rows = vals[0].shape().first().copied().unwrap_or(0);
        if vals.iter().any(|v| v.rank() != 2 || v.shape()[0] != rows) {
            return Err(Error::dim("concat_cols", "inputs must be rank-2 with equal rows"));
        }
        let widths: Vec<usize> = vals.iter().map(|v| v.shape()[1]).collect();
        let total: usize = widths.iter().sum();
        let mut data = Vec::with_capacity(rows * total);
        for r in 0..rows {
            for v in &vals {
                data.extend_from_slice(v.row(r));
            }
        }
        (Tensor::new(vec![rows, total], data)?, widths)
    };
    first.graph().op(
        "concat_cols",
        parts,
        value,
        Box::new(move |ctx| {
            let total: usize = widths.iter().sum();
            let rows = ctx.grad.shape()[0];
            let mut offset = 0;
            let mut out = Vec::with_capacity(widths.len());
            for &w in &widths {
                let mut d = Vec::with_capacity(rows * w);
                for r in 0..rows {
                    d.extend_from_slice(&ctx.grad.data()[r * total + offset..r * total + offset + w]);
                }
                out.push(Some(Tensor::new(vec![rows, w], d).expect("shape")));
                offset += w;
            }
            out
        }),
    )
}

/// Rows of `table` selected by `ids` (embedding lookup).
/// Backward: rows of `g` scatter-added back into the table.
pub fn gather_rows<'g>(table: Var<'g>, ids: &[usize]) -> Result<Var<'g>> {
    let ids = ids.to_vec();
    let (value, shape) = {
        let t = table.value();
        if t.rank() != 2 {
            return Err(Error::dim("gather_rows", format!("{:?}", t.shape())));
        }
        if let Some(&bad) = ids.iter().find(|&&i| i >= t.shape()[0]) {
            return Err(Error::dim("gather_rows", format!("row {bad} of {:?}", t.shape())));
        }
        let d = t.shape()[1];
        let data = ids.iter().flat_map(|&i| t.row(i).iter().copied()).collect();
        (Tensor::new(vec![ids.len(), d], data)?, t.shape().to_vec())
    };
    table.graph().op(
        "gather_rows",
        &[table],
        value,
        Box::new(move |ctx| {
            let d = shape[1];
            let mut dt = Tensor::zeros(shape.clone());
            for (r, &i) in ids.iter().enumerate() {
                for j in 0..d {
                    dt.data_mut()[i * d + j] += ctx.grad.data()[r * d + j];
                }
            }
            vec![Some(dt)]
        }),
    )
}

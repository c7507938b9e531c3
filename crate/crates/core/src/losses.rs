//! Sequence losses: RNN-T lattice loss, CTC, and next-label cross-entropy.
//!
//! The lattice losses run forward-backward in the log domain and attach the
//! exact occupancy gradient to the graph, so they differentiate like any
//! other op.

use crate::error::{Error, Result};
use crate::numcore::kernels::log_add;
use crate::numcore::{Tensor, Var};

/// Forward and backward variables of one RNN-T lattice.
#[derive(Debug, Clone)]
pub struct Lattice {
    /// `[T, U+1]`; `alpha[0,0] = 0`.
    pub alpha: Tensor,
    /// `[T, U+1]`; `beta[t,u]` includes the final blank.
    pub beta: Tensor,
    /// `log P(target)` from the forward pass.
    pub log_prob: f64,
    /// `log P(target)` from the backward pass.
    pub log_prob_backward: f64,
}

fn check_finite(op: &'static str, t: &Tensor) -> Result<()> {
    if t.is_finite() {
        Ok(())
    } else {
        Err(Error::numeric(op, "non-finite log-probabilities"))
    }
}

fn check_target(op: &str, target: &[usize], vocab: usize, blank: usize) -> Result<()> {
    match target.iter().find(|&&s| s == blank || s >= vocab) {
        Some(&s) if s == blank => Err(Error::Contract(format!("{op}: blank in target"))),
        Some(&s) => Err(Error::Contract(format!("{op}: symbol {s} outside vocabulary of {vocab}"))),
        None => Ok(()),
    }
}

fn lattice_dims(log_probs: &Tensor, target: &[usize]) -> Result<(usize, usize, usize)> {
    let s = log_probs.shape();
    if s.len() != 3 || s[1] != target.len() + 1 {
        return Err(Error::dim("rnnt_loss", format!("log-probs {s:?} for target of length {}", target.len())));
    }
    if s[0] == 0 {
        return Err(Error::Input("rnnt_loss: empty encoder sequence".into()));
    }
    Ok((s[0], s[1], s[2]))
}

/// Runs forward-backward over `log_probs [T, U+1, V]`.
pub fn rnnt_lattice(log_probs: &Tensor, target: &[usize], blank: usize) -> Result<Lattice> {
    let (t_len, u1, v) = lattice_dims(log_probs, target)?;
    check_target("rnnt_loss", target, v, blank)?;
    check_finite("rnnt_loss", log_probs)?;
    let lp = |t: usize, u: usize, k: usize| log_probs.data()[(t * u1 + u) * v + k];
    let mut alpha = Tensor::full(vec![t_len, u1], f64::NEG_INFINITY);
    let mut beta = Tensor::full(vec![t_len, u1], f64::NEG_INFINITY);
    {
        let a = alpha.data_mut();
        for t in 0..t_len {
            for u in 0..u1 {
                a[t * u1 + u] = match (t, u) {
                    (0, 0) => 0.0,
                    (0, _) => a[u - 1] + lp(0, u - 1, target[u - 1]),
                    (_, 0) => a[(t - 1) * u1] + lp(t - 1, 0, blank),
                    _ => log_add(
                        a[(t - 1) * u1 + u] + lp(t - 1, u, blank),
                        a[t * u1 + u - 1] + lp(t, u - 1, target[u - 1]),
                    ),
                };
            }
        }
    }
    {
        let b = beta.data_mut();
        for t in (0..t_len).rev() {
            for u in (0..u1).rev() {
                let last_t = t + 1 == t_len;
                let last_u = u + 1 == u1;
                b[t * u1 + u] = match (last_t, last_u) {
                    (true, true) => lp(t, u, blank),
                    (true, false) => b[t * u1 + u + 1] + lp(t, u, target[u]),
                    (false, true) => b[(t + 1) * u1 + u] + lp(t, u, blank),
                    (false, false) => log_add(
                        b[(t + 1) * u1 + u] + lp(t, u, blank),
                        b[t * u1 + u + 1] + lp(t, u, target[u]),
                    ),
                };
            }
        }
    }
    let log_prob = alpha.data()[t_len * u1 - 1] + lp(t_len - 1, u1 - 1, blank);
    let log_prob_backward = beta.data()[0];
    if !log_prob.is_finite() {
        return Err(Error::numeric("rnnt_loss", "target has zero probability"));
    }
    Ok(Lattice { alpha, beta, log_prob, log_prob_backward })
}

/// Gradient of `-log P(target)` wrt `log_probs`: minus the posterior
/// probability of each transition.
pub fn rnnt_gradient(log_probs: &Tensor, target: &[usize], blank: usize, lattice: &Lattice) -> Tensor {
    let s = log_probs.shape();
    let (t_len, u1, v) = (s[0], s[1], s[2]);
    let a = lattice.alpha.data();
    let b = lattice.beta.data();
    let lp = log_probs.data();
    let mut grad = Tensor::zeros(s.to_vec());
    let g = grad.data_mut();
    for t in 0..t_len {
        for u in 0..u1 {
            let base = (t * u1 + u) * v;
            let next_blank = if t + 1 < t_len {
                b[(t + 1) * u1 + u]
            } else if u + 1 == u1 {
                0.0
            } else {
                f64::NEG_INFINITY
            };
            g[base + blank] = -(a[t * u1 + u] + lp[base + blank] + next_blank - lattice.log_prob).exp();
            if u < target.len() {
                let k = target[u];
                g[base + k] = -(a[t * u1 + u] + lp[base + k] + b[t * u1 + u + 1] - lattice.log_prob).exp();
            }
        }
    }
    grad
}

/// RNN-T loss `-log P(target | x)` for `log_probs [T, U+1, V]`.
pub fn rnnt_loss<'g>(log_probs: Var<'g>, target: &[usize], blank: usize) -> Result<Var<'g>> {
    let (lattice, grad) = {
        let lp = log_probs.value();
        let lattice = rnnt_lattice(&lp, target, blank)?;
        let grad = rnnt_gradient(&lp, target, blank, &lattice);
        (lattice, grad)
    };
    log_probs.graph().op(
        "rnnt_loss",
        &[log_probs],
        Tensor::scalar(-lattice.log_prob),
        Box::new(move |ctx| {
            let mut g = grad.clone();
            let scale = ctx.grad.item();
            g.data_mut().iter_mut().for_each(|x| *x *= scale);
            vec![Some(g)]
        }),
    )
}

/// CTC negative log-likelihood and its gradient wrt `log_probs [T, V]`.
pub fn ctc_forward_backward(log_probs: &Tensor, target: &[usize], blank: usize) -> Result<(f64, Tensor)> {
    let s = log_probs.shape();
    if s.len() != 2 {
        return Err(Error::dim("ctc_loss", format!("log-probs must be [T, V], got {s:?}")));
    }
    let (t_len, v) = (s[0], s[1]);
    if t_len == 0 {
        return Err(Error::Input("ctc_loss: empty encoder sequence".into()));
    }
    check_target("ctc_loss", target, v, blank)?;
    check_finite("ctc_loss", log_probs)?;
    let repeats = target.windows(2).filter(|w| w[0] == w[1]).count();
    if t_len < target.len() + repeats {
        return Err(Error::Input(format!(
            "ctc_loss: {t_len} frames cannot align a target of {} labels with {repeats} repeats",
            target.len()
        )));
    }

    let ext: Vec<usize> = std::iter::once(blank).chain(target.iter().flat_map(|&k| [k, blank])).collect();
    let n = ext.len();
    let lp = |t: usize, k: usize| log_probs.data()[t * v + k];
    // A label may be reached by skipping the blank before it unless it
    // repeats the previous label.
    let can_skip = |s: usize| s >= 2 && ext[s] != blank && ext[s] != ext[s - 2];

    let ninf = f64::NEG_INFINITY;
    let mut alpha = vec![ninf; t_len * n];
    alpha[0] = lp(0, ext[0]);
    if n > 1 {
        alpha[1] = lp(0, ext[1]);
    }
    for t in 1..t_len {
        for s in 0..n {
            let prev = &alpha[(t - 1) * n..t * n];
            let mut acc = prev[s];
            if s >= 1 {
                acc = log_add(acc, prev[s - 1]);
            }
            if can_skip(s) {
                acc = log_add(acc, prev[s - 2]);
            }
            alpha[t * n + s] = acc + lp(t, ext[s]);
        }
    }
    let mut beta = vec![ninf; t_len * n];
    let last = (t_len - 1) * n;
    beta[last + n - 1] = lp(t_len - 1, ext[n - 1]);
    if n > 1 {
        beta[last + n - 2] = lp(t_len - 1, ext[n - 2]);
    }
    for t in (0..t_len - 1).rev() {
        for s in 0..n {
            let next = &beta[(t + 1) * n..(t + 2) * n];
            let mut acc = next[s];
            if s + 1 < n {
                acc = log_add(acc, next[s + 1]);
            }
            if s + 2 < n && can_skip(s + 2) {
                acc = log_add(acc, next[s + 2]);
            }
            beta[t * n + s] = acc + lp(t, ext[s]);
        }
    }
    let log_prob = if n > 1 { log_add(alpha[last + n - 1], alpha[last + n - 2]) } else { alpha[last] };
    if !log_prob.is_finite() {
        return Err(Error::numeric("ctc_loss", "target has zero probability"));
    }

    // alpha and beta both include the emission at t, so the posterior of
    // state s at t is alpha + beta - lp - log P.
    let mut grad = Tensor::zeros(vec![t_len, v]);
    let g = grad.data_mut();
    let mut occupancy = vec![ninf; v];
    for t in 0..t_len {
        occupancy.fill(ninf);
        for s in 0..n {
            occupancy[ext[s]] = log_add(occupancy[ext[s]], alpha[t * n + s] + beta[t * n + s]);
        }
        for k in 0..v {
            if occupancy[k] > ninf {
                g[t * v + k] = -(occupancy[k] - lp(t, k) - log_prob).exp();
            }
        }
    }
    Ok((-log_prob, grad))
}

/// CTC loss `-log P(target | x)` for `log_probs [T, V]`.
pub fn ctc_loss<'g>(log_probs: Var<'g>, target: &[usize], blank: usize) -> Result<Var<'g>> {
    let (loss, grad) = ctc_forward_backward(&log_probs.value(), target, blank)?;
    log_probs.graph().op(
        "ctc_loss",
        &[log_probs],
        Tensor::scalar(loss),
        Box::new(move |ctx| {
            let mut g = grad.clone();
            let scale = ctx.grad.item();
            g.data_mut().iter_mut().for_each(|x| *x *= scale);
            vec![Some(g)]
        }),
    )
}

/// Mean next-label negative log-likelihood for `logits [U, C]`.
pub fn label_cross_entropy<'g>(logits: Var<'g>, targets: &[usize]) -> Result<Var<'g>> {
    logits.log_softmax(1)?.pick(targets)?.mean()?.scale(-1.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numcore::Graph;

    fn uniform_lattice(t: usize, u: usize, v: usize) -> Tensor {
        Tensor::full(vec![t, u + 1, v], -(v as f64).ln())
    }

    #[test]
    fn single_frame_empty_target_is_blank() {
        let mut lp = uniform_lattice(1, 0, 3);
        lp.data_mut()[0] = 0.5f64.ln();
        let l = rnnt_lattice(&lp, &[], 0).unwrap();
        assert!((l.log_prob - 0.5f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn forward_equals_backward() {
        let lp = uniform_lattice(3, 2, 4);
        let l = rnnt_lattice(&lp, &[1, 2], 0).unwrap();
        assert!((l.log_prob - l.log_prob_backward).abs() < 1e-12);
        // C(4,2) = 6 alignments, each with 5 transitions of probability 1/4.
        assert!((l.log_prob - (6f64.ln() - 5.0 * 4f64.ln())).abs() < 1e-12);
    }

    #[test]
    fn target_validation() {
        let lp = uniform_lattice(2, 1, 3);
        assert!(matches!(rnnt_lattice(&lp, &[0], 0), Err(Error::Contract(_))));
        assert!(matches!(rnnt_lattice(&lp, &[5], 0), Err(Error::Contract(_))));
        assert!(matches!(rnnt_lattice(&lp, &[1, 2], 0), Err(Error::Dimension { .. })));
        let mut bad = lp.clone();
        bad.data_mut()[2] = f64::NAN;
        assert!(matches!(rnnt_lattice(&bad, &[1], 0), Err(Error::Numeric { .. })));
    }

    #[test]
    fn ctc_single_frame() {
        let lp = Tensor::new(vec![1, 3], vec![0.2f64.ln(), 0.7f64.ln(), 0.1f64.ln()]).unwrap();
        let (loss, _) = ctc_forward_backward(&lp, &[1], 0).unwrap();
        assert!((loss + 0.7f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn ctc_infeasible() {
        let lp = Tensor::full(vec![2, 3], -(3f64.ln()));
        assert!(matches!(ctc_forward_backward(&lp, &[1, 1], 0), Err(Error::Input(_))));
        assert!(ctc_forward_backward(&Tensor::full(vec![3, 3], -(3f64.ln())), &[1, 1], 0).is_ok());
    }

    #[test]
    fn losses_are_graph_ops() {
        let g = Graph::new();
        let x = g.leaf(uniform_lattice(2, 1, 3));
        let loss = rnnt_loss(x, &[2], 0).unwrap().scale(2.0).unwrap();
        let grads = g.backward(loss).unwrap();
        // Blank at the terminal cell is on every path.
        let gx = grads.get(x).unwrap();
        assert!((gx.data()[(1 * 2 + 1) * 3] + 2.0).abs() < 1e-12);
    }
}

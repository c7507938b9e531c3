//! Brute-force references: every alignment is enumerated explicitly.

use msa_transducer::numcore::Tensor;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub fn log_sum(xs: &[f64]) -> f64 {
    let m = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + xs.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// Random row-normalized log-probabilities with the given shape.
pub fn random_log_probs(shape: Vec<usize>, rng: &mut ChaCha8Rng) -> Tensor {
    let v = *shape.last().unwrap();
    let mut t = Tensor::zeros(shape);
    for row in t.data_mut().chunks_mut(v) {
        for x in row.iter_mut() {
            *x = rng.random_range(-2.0..2.0);
        }
        let z = log_sum(row);
        row.iter_mut().for_each(|x| *x -= z);
    }
    t
}

/// One RNN-T alignment as the list of visited cells with the symbol
/// emitted from each.
fn rnnt_paths(t_len: usize, u_len: usize) -> Vec<Vec<(usize, usize, bool)>> {
    fn go(t: usize, u: usize, t_len: usize, u_len: usize, cur: &mut Vec<(usize, usize, bool)>, out: &mut Vec<Vec<(usize, usize, bool)>>) {
        if t == t_len - 1 && u == u_len {
            cur.push((t, u, true));
            out.push(cur.clone());
            cur.pop();
            return;
        }
        if t + 1 < t_len {
            cur.push((t, u, true));
            go(t + 1, u, t_len, u_len, cur, out);
            cur.pop();
        }
        if u < u_len {
            cur.push((t, u, false));
            go(t, u + 1, t_len, u_len, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    go(0, 0, t_len, u_len, &mut Vec::new(), &mut out);
    out
}

pub fn rnnt_path_count(t_len: usize, u_len: usize) -> usize {
    rnnt_paths(t_len, u_len).len()
}

/// `log P(target)` and per-cell departure probability, summed path by path.
pub fn rnnt_enumerate(lp: &Tensor, target: &[usize], blank: usize) -> (f64, Vec<Vec<f64>>) {
    let (t_len, u1, v) = (lp.shape()[0], lp.shape()[1], lp.shape()[2]);
    let paths = rnnt_paths(t_len, u1 - 1);
    let scores: Vec<f64> = paths
        .iter()
        .map(|p| {
            p.iter()
                .map(|&(t, u, is_blank)| lp.data()[(t * u1 + u) * v + if is_blank { blank } else { target[u] }])
                .sum()
        })
        .collect();
    let total = log_sum(&scores);
    let mut occ = vec![vec![0.0; u1]; t_len];
    for (p, s) in paths.iter().zip(&scores) {
        for &(t, u, _) in p {
            occ[t][u] += (s - total).exp();
        }
    }
    (total, occ)
}

/// Standard CTC collapse: merge repeats, then drop blanks.
pub fn ctc_collapse(path: &[usize], blank: usize) -> Vec<usize> {
    let mut out = Vec::new();
    let mut prev = None;
    for &k in path {
        if Some(k) != prev && k != blank {
            out.push(k);
        }
        prev = Some(k);
    }
    out
}

/// Calls `f` on every length-`t_len` sequence over `0..v`.
pub fn for_each_path(t_len: usize, v: usize, mut f: impl FnMut(&[usize])) {
    let mut path = vec![0; t_len];
    loop {
        f(&path);
        let mut i = 0;
        while i < t_len {
            path[i] += 1;
            if path[i] < v {
                break;
            }
            path[i] = 0;
            i += 1;
        }
        if i == t_len {
            return;
        }
    }
}

/// `log P(target)` under CTC by summing over all frame-level paths.
pub fn ctc_enumerate(lp: &Tensor, target: &[usize], blank: usize) -> f64 {
    let (t_len, v) = (lp.shape()[0], lp.shape()[1]);
    let mut scores = Vec::new();
    for_each_path(t_len, v, |path| {
        if ctc_collapse(path, blank) == target {
            scores.push(path.iter().enumerate().map(|(t, &k)| lp.data()[t * v + k]).sum());
        }
    });
    log_sum(&scores)
}

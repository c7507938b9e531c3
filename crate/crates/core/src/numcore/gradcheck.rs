use crate::error::{Error, Result};

use super::{Graph, Tensor, Var};

/// Central-difference step used at fp64.
pub const STEP: f64 = 1e-5;

/// Gradient magnitudes below this are compared on an absolute scale.
pub const MAGNITUDE_FLOOR: f64 = 1e-3;

/// Compares reverse-mode gradients of the scalar `f` against central
/// differences, coordinate by coordinate, and returns the worst relative
/// error `|a − n| / max(|a|, |n|, MAGNITUDE_FLOOR)`.
pub fn grad_check<F>(params: &[Tensor], f: F) -> Result<f64>
where
    F: for<'g> Fn(&'g Graph, &[Var<'g>]) -> Result<Var<'g>>,
{
    let analytic: Vec<Tensor> = {
        let g = Graph::new();
        let vars: Vec<Var<'_>> = params.iter().map(|p| g.leaf(p.clone())).collect();
        let out = f(&g, &vars)?;
        let grads = g.backward(out)?;
        vars.iter().map(|&v| grads.get_or_zeros(v)).collect()
    };
    let eval = |ps: &[Tensor]| -> Result<f64> {
        let g = Graph::new();
        let vars: Vec<Var<'_>> = ps.iter().map(|p| g.leaf(p.clone())).collect();
        let y = f(&g, &vars)?.value().item();
        if !y.is_finite() {
            return Err(Error::numeric("grad_check", "non-finite objective"));
        }
        Ok(y)
    };
    let mut worst: f64 = 0.0;
    let mut work = params.to_vec();
    for (pi, a) in analytic.iter().enumerate() {
        for i in 0..a.len() {
            let orig = work[pi].data()[i];
            work[pi].data_mut()[i] = orig + STEP;
            let up = eval(&work)?;
            work[pi].data_mut()[i] = orig - STEP;
            let down = eval(&work)?;
            work[pi].data_mut()[i] = orig;
            let numeric = (up - down) / (2.0 * STEP);
            let an = a.data()[i];
            let err = (an - numeric).abs() / an.abs().max(numeric.abs()).max(MAGNITUDE_FLOOR);
            worst = worst.max(err);
        }
    }
    Ok(worst)
}

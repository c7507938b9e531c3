//! RNN-T and CTC losses on a small random instance: the lattice forward
//! and backward passes agree, and the gradient wrt log-probabilities is
//! minus the expected transition counts (T + U for RNN-T, one per frame for
//! CTC).

use msa_transducer::losses::{ctc_forward_backward, rnnt_gradient, rnnt_lattice};
use msa_transducer::numcore::kernels::log_softmax_row;
use msa_transducer::numcore::Tensor;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn log_probs(shape: Vec<usize>, seed: u64) -> msa_transducer::Result<Tensor> {
    let v = *shape.last().unwrap();
    let logits = Tensor::randn(shape.clone(), 1.0, &mut ChaCha8Rng::seed_from_u64(seed));
    let data = logits.data().chunks(v).flat_map(log_softmax_row).collect();
    Tensor::new(shape, data)
}

fn main() -> msa_transducer::Result<()> {
    let target = [3, 1, 4];
    let lp = log_probs(vec![6, target.len() + 1, 5], 0)?;
    let lattice = rnnt_lattice(&lp, &target, 0)?;
    println!(
        "RNN-T: -log P = {:.6} (forward) / {:.6} (backward)",
        -lattice.log_prob, -lattice.log_prob_backward
    );
    let grad = rnnt_gradient(&lp, &target, 0, &lattice);
    let occupancy: f64 = grad.data().iter().map(|g| -g).sum();
    println!("RNN-T: total occupancy {occupancy:.6} (= T + U = {})", 6 + target.len());

    let lp = log_probs(vec![8, 5], 1)?;
    let (loss, grad) = ctc_forward_backward(&lp, &[2, 2, 3], 0)?;
    println!("CTC: -log P = {loss:.6}, gradient mass per frame {:.6}", -grad.data().iter().sum::<f64>() / 8.0);
    Ok(())
}

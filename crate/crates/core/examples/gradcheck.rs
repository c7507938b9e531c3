//! Reverse-mode gradients against central differences for a memory block
//! (parameters and input) and for the RNN-T loss with respect to logits.

use msa_transducer::layers::{Block, BlockConfig, BlockKind, MemoryInput};
use msa_transducer::losses::{ctc_loss, rnnt_loss};
use msa_transducer::numcore::{grad_check, Ctx, ParamStore, Tensor};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> msa_transducer::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let cfg = BlockConfig {
        kind: BlockKind::Msa,
        d_model: 6,
        heads: 2,
        d_ff: 12,
        left: Some(2),
        right: Some(1),
        relative_bias: true,
        memory_input: MemoryInput::Center,
    };
    let block = Block::new("blk", &cfg)?;
    let mut store = ParamStore::new();
    block.init(&mut store, &mut rng);
    let names: Vec<String> = store.names().map(str::to_string).collect();
    let mut inputs: Vec<Tensor> = store.iter().map(|(_, t)| t.clone()).collect();
    inputs.push(Tensor::randn(vec![5, 6], 1.0, &mut rng));
    inputs.push(Tensor::randn(vec![5, 6], 1.0, &mut rng));
    let err = grad_check(&inputs, |g, v| {
        let cx = Ctx::new(g, &store);
        for (n, var) in names.iter().zip(v) {
            cx.bind_var(n, *var);
        }
        let k = names.len();
        block.forward(&cx, v[k])?.mul(v[k + 1])?.sum()
    })?;
    println!("MSA block ({} parameter tensors + input): max relative error {err:.2e}", names.len());

    let logits = Tensor::randn(vec![4, 3, 5], 1.0, &mut rng);
    let err = grad_check(&[logits], |_, v| rnnt_loss(v[0].log_softmax(2)?, &[2, 4], 0))?;
    println!("RNN-T loss wrt logits: max relative error {err:.2e}");
    let logits = Tensor::randn(vec![6, 5], 1.0, &mut rng);
    let err = grad_check(&[logits], |_, v| ctc_loss(v[0].log_softmax(1)?, &[3, 3, 1], 0))?;
    println!("CTC loss wrt logits: max relative error {err:.2e}");
    Ok(())
}

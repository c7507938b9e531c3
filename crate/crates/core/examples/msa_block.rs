//! One memory self-attention block: offline forward pass, the same block
//! pushed frame by frame, and how far a perturbation of frame 0 travels
//! compared with restricted attention.

use msa_transducer::layers::{Block, BlockConfig, BlockKind, MemoryInput};
use msa_transducer::numcore::{Ctx, Graph, ParamStore, Tensor};
use msa_transducer::streaming::{reception_probe, run_to_end, BenchConfig, Stage, StageStack, Variant};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> msa_transducer::Result<()> {
    let cfg = BlockConfig {
        kind: BlockKind::Msa,
        d_model: 16,
        heads: 2,
        d_ff: 32,
        left: Some(4),
        right: Some(2),
        relative_bias: false,
        memory_input: MemoryInput::Center,
    };
    let block = Block::new("msa", &cfg)?;
    let mut store = ParamStore::new();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    block.init(&mut store, &mut rng);
    println!("block parameters: {}", block.param_count());

    let x = Tensor::randn(vec![50, 16], 1.0, &mut rng);
    let g = Graph::new();
    let cx = Ctx::new(&g, &store);
    let offline = block.forward(&cx, g.constant(x.clone()))?.to_tensor();

    let mut stack = StageStack::new();
    stack.add("msa", Stage::block(&block, &store)?);
    let streamed = Tensor::from_rows(&run_to_end(&stack, x.rows().map(<[f64]>::to_vec)), 16)?;
    println!("streaming vs offline over 50 frames: max diff {:.2e}", streamed.max_abs_diff(&offline));

    let bench = BenchConfig { d_model: 8, heads: 2, d_ff: 16, layers: 2, left: 4, right: 1, seed: 0 };
    for v in [Variant::Restricted, Variant::Memory] {
        let hit = reception_probe(v, &bench, 200, 0)?;
        println!("{:>14}: frame 0 influences outputs 0..={}", v.name(), hit.last().unwrap());
    }
    Ok(())
}

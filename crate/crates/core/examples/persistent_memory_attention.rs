//! Attention over a short sequence with learned memory slots appended to the
//! keys and values; prints how much weight each head puts on memory.

use vvids::attention::{AttentionConfig, PmAttention};
use vvids::numerics::{Graph, Tensor};
use vvids::params::ParamStore;
use vvids::rng::{normal, seeded};

fn main() -> vvids::Result<()> {
    let mut rng = seeded(0);
    let cfg = AttentionConfig { d_model: 16, num_heads: 4, memory_slots: 3, dropout: 0.0 };
    let mut store = ParamStore::new();
    let attn = PmAttention::new(&mut store, "attn", &cfg, &mut rng)?;
    let tokens = 5;
    let x = Tensor::new(vec![tokens, 16], (0..tokens * 16).map(|_| normal(&mut rng)).collect())?;

    let mut g = Graph::new(store.tensors());
    let xv = g.constant(x)?;
    let out = attn.forward_with_weights(&mut g, xv, Some((xv, xv)))?;
    println!("output shape {:?}", g.shape(out.output));
    for (h, w) in out.weights.iter().enumerate() {
        let w = g.value(*w);
        let cols = w.shape()[1];
        let memory: f64 = (0..tokens).map(|r| w.row(r)[tokens..cols].iter().sum::<f64>()).sum::<f64>() / tokens as f64;
        println!("head {h}: {} columns, mean weight on memory slots {memory:.3}", cols);
    }

    // memory alone is enough to attend over an empty sequence
    let q = g.constant(Tensor::zeros(&[2, 16]))?;
    let only_memory = attn.forward(&mut g, q, None)?;
    println!("memory-only attention shape {:?}", g.shape(only_memory));
    Ok(())
}

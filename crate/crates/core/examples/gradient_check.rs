//! Compare analytic gradients of a small encoder layer against central
//! finite differences.

use vvids::attention::{AttentionConfig, EncoderLayer};
use vvids::numerics::{gradient_check, Graph, Mode, Tensor, Var, DEFAULT_STEP};
use vvids::params::ParamStore;
use vvids::rng::{normal, seeded};

fn main() -> vvids::Result<()> {
    let mut rng = seeded(1);
    let cfg = AttentionConfig { d_model: 8, num_heads: 2, memory_slots: 2, dropout: 0.1 };
    let mut store = ParamStore::new();
    let layer = EncoderLayer::new(&mut store, "enc", &cfg, &mut rng)?;
    for t in store.tensors_mut() {
        t.data_mut().iter_mut().for_each(|v| *v += 0.3 * normal(&mut rng));
    }
    let x = Tensor::new(vec![5, 8], (0..40).map(|_| normal(&mut rng)).collect())?;
    let w = Tensor::new(vec![5, 8], (0..40).map(|_| normal(&mut rng)).collect())?;

    let f = |g: &mut Graph<'_>, _: &[Var]| {
        let x = g.constant(x.clone())?;
        let y = layer.forward(g, x, &mut Mode::eval())?;
        let w = g.constant(w.clone())?;
        let p = g.mul(y, w)?;
        g.sum(p)
    };
    let err = gradient_check(f, store.tensors(), DEFAULT_STEP)?;
    println!("{} parameters, max relative error {err:.3e}", store.numel());
    Ok(())
}

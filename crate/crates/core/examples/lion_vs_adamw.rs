//! Minimize an ill-conditioned quadratic with Lion and with AdamW and print
//! both loss trajectories.

use vvids::optim::{Optimizer, OptimizerConfig};
use vvids::params::ParamStore;
use vvids::Tensor;

fn loss_and_grad(p: &[f64]) -> (f64, Vec<f64>) {
    let scales = [1.0, 10.0, 100.0];
    let loss = p.iter().zip(scales).map(|(x, s)| 0.5 * s * x * x).sum();
    (loss, p.iter().zip(scales).map(|(x, s)| s * x).collect())
}

fn run(cfg: OptimizerConfig) -> vvids::Result<Vec<f64>> {
    let mut store = ParamStore::new();
    store.add("p", Tensor::vector(vec![1.0, -1.0, 0.5])?, true);
    let mut opt = Optimizer::new(cfg, &store);
    let mut losses = Vec::new();
    for _ in 0..200 {
        let (loss, grad) = loss_and_grad(store.tensors()[0].data());
        losses.push(loss);
        opt.step(&mut store, &[Tensor::vector(grad)?])?;
    }
    Ok(losses)
}

fn main() -> vvids::Result<()> {
    let lion = run(OptimizerConfig::lion(1e-2, 0.0))?;
    let adamw = run(OptimizerConfig::adamw(1e-2, 0.0))?;
    println!("step,lion,adamw");
    for step in (0..200).step_by(20) {
        println!("{step},{:.6},{:.6}", lion[step], adamw[step]);
    }
    Ok(())
}

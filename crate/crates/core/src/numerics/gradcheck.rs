//! Finite-difference verification of analytic gradients.

use super::graph::{Graph, Var};
use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Default central-difference step.
pub const DEFAULT_STEP: f64 = 1e-5;

/// Relative error between an analytic and a numeric derivative.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / (analytic.abs() + numeric.abs()).max(1e-8)
}

/// Build `f` on a fresh graph and return its scalar value.
pub fn evaluate<F>(f: &F, params: &[Tensor]) -> Result<f64>
where
    F: Fn(&mut Graph<'_>, &[Var]) -> Result<Var>,
{
    let mut g = Graph::new(params);
    let vars: Vec<Var> = (0..params.len()).map(|i| g.param(i)).collect();
    let out = f(&mut g, &vars)?;
    let v = g.scalar(out);
    if !v.is_finite() {
        return Err(Error::Numeric(format!("objective evaluated to {v}")));
    }
    Ok(v)
}

/// Analytic gradients of `f` with respect to every tensor in `params`.
pub fn analytic_grads<F>(f: &F, params: &[Tensor]) -> Result<(f64, Vec<Tensor>)>
where
    F: Fn(&mut Graph<'_>, &[Var]) -> Result<Var>,
{
    let mut g = Graph::new(params);
    let vars: Vec<Var> = (0..params.len()).map(|i| g.param(i)).collect();
    let out = f(&mut g, &vars)?;
    let v = g.scalar(out);
    if !v.is_finite() {
        return Err(Error::Numeric(format!("objective evaluated to {v}")));
    }
    g.backward(out)?;
    Ok((v, g.param_grads()))
}

/// Central differences of `f` with respect to every coordinate of `params`.
pub fn numeric_grads<F>(f: &F, params: &[Tensor], h: f64) -> Result<Vec<Tensor>>
where
    F: Fn(&mut Graph<'_>, &[Var]) -> Result<Var>,
{
    let mut work = params.to_vec();
    let mut out = Vec::with_capacity(params.len());
    for p in 0..params.len() {
        let mut grad = Tensor::zeros(params[p].shape());
        for i in 0..params[p].len() {
            let x = params[p].data()[i];
            work[p].data_mut()[i] = x + h;
            let up = evaluate(f, &work)?;
            work[p].data_mut()[i] = x - h;
            let down = evaluate(f, &work)?;
            work[p].data_mut()[i] = x;
            grad.data_mut()[i] = (up - down) / (2.0 * h);
        }
        out.push(grad);
    }
    Ok(out)
}

/// Maximum relative error between the analytic gradient of `f` and central
/// differences with step `h`, over every coordinate of every parameter.
pub fn gradient_check<F>(f: F, params: &[Tensor], h: f64) -> Result<f64>
where
    F: Fn(&mut Graph<'_>, &[Var]) -> Result<Var>,
{
    let (_, analytic) = analytic_grads(&f, params)?;
    let numeric = numeric_grads(&f, params, h)?;
    let mut worst = 0.0f64;
    for (a, n) in analytic.iter().zip(&numeric) {
        for (&av, &nv) in a.data().iter().zip(n.data()) {
            worst = worst.max(relative_error(av, nv));
        }
    }
    Ok(worst)
}

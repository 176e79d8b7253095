//! Tape-based reverse-mode differentiation.
//!
//! A [`Graph`] borrows a slice of parameter tensors, which occupy the first
//! variable slots, and records every operation built on top of them. Calling
//! [`Graph::backward`] on a scalar output fills gradients for every node that
//! contributed to it.

use rand::Rng;

use super::tensor::{as_matrix, gemm, gemm_nt, gemm_tn, Tensor};
use crate::error::{Error, Result};

/// Handle to a node on the tape.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(pub(crate) usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op {
    Constant,
    MatMul(Var, Var),
    MatMulNT(Var, Var),
    Transpose(Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Div(Var, Var),
    Min(Var, Var),
    Max(Var, Var),
    AddRow(Var, Var),
    Scale(Var, f64),
    AddScalar(Var),
    Abs(Var),
    Sigmoid(Var),
    Gelu(Var),
    Softmax { x: Var, outer: usize, n: usize, inner: usize },
    LayerNorm { x: Var, gain: Var, bias: Var, xhat: Vec<f64>, inv_std: Vec<f64> },
    Dropout { x: Var, mask: Vec<f64> },
    Concat { parts: Vec<(Var, usize)>, outer: usize, inner: usize },
    Slice { x: Var, outer: usize, dim: usize, inner: usize, start: usize },
    Index0 { x: Var, offset: usize },
    Gather { x: Var, idx: Vec<usize> },
    Sum(Var),
    Mean(Var),
    BroadcastRows(Var),
    Reshape(Var),
    BceWithLogits { x: Var, targets: Vec<f64> },
}

struct Node {
    value: Tensor,
    op: Op,
}

/// Dropout and other stochastic behaviour for one forward pass.
pub struct Mode<'r> {
    rng: Option<&'r mut dyn rand::RngCore>,
}

impl<'r> Mode<'r> {
    pub fn eval() -> Self {
        Self { rng: None }
    }

    pub fn train(rng: &'r mut dyn rand::RngCore) -> Self {
        Self { rng: Some(rng) }
    }

    pub fn is_training(&self) -> bool {
        self.rng.is_some()
    }
}

pub struct Graph<'p> {
    params: &'p [Tensor],
    nodes: Vec<Node>,
    grads: Vec<Option<Vec<f64>>>,
}

impl<'p> Graph<'p> {
    pub fn new(params: &'p [Tensor]) -> Self {
        Self {
            params,
            nodes: Vec::new(),
            grads: Vec::new(),
        }
    }

    /// Variable bound to parameter `i` of the slice this graph was built on.
    pub fn param(&self, i: usize) -> Var {
        assert!(i < self.params.len(), "parameter index {i} out of range");
        Var(i)
    }

    pub fn num_params(&self) -> usize {
        self.params.len()
    }

    pub fn len(&self) -> usize {
        self.params.len() + self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn value(&self, v: Var) -> &Tensor {
        if v.0 < self.params.len() {
            &self.params[v.0]
        } else {
            &self.nodes[v.0 - self.params.len()].value
        }
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.value(v).shape()
    }

    pub fn scalar(&self, v: Var) -> f64 {
        self.value(v).data()[0]
    }

    fn push(&mut self, value: Tensor, op: Op) -> Result<Var> {
        if !value.is_finite() {
            return Err(Error::Numeric(format!(
                "non-finite value produced by {}",
                op_name(&op)
            )));
        }
        self.nodes.push(Node { value, op });
        Ok(Var(self.params.len() + self.nodes.len() - 1))
    }

    pub fn constant(&mut self, t: Tensor) -> Result<Var> {
        self.push(t, Op::Constant)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (m, k) = as_matrix(self.value(a))?;
        let (k2, n) = as_matrix(self.value(b))?;
        if k != k2 {
            return Err(Error::Dimension(format!(
                "matmul inner dimensions disagree: {:?} x {:?}",
                self.shape(a),
                self.shape(b)
            )));
        }
        let mut out = vec![0.0; m * n];
        gemm(self.value(a).data(), self.value(b).data(), &mut out, m, k, n);
        self.push(Tensor::new(vec![m, n], out)?, Op::MatMul(a, b))
    }

    /// `a · bᵀ`
    pub fn matmul_nt(&mut self, a: Var, b: Var) -> Result<Var> {
        let (m, k) = as_matrix(self.value(a))?;
        let (n, k2) = as_matrix(self.value(b))?;
        if k != k2 {
            return Err(Error::Dimension(format!(
                "matmul_nt inner dimensions disagree: {:?} x {:?}ᵀ",
                self.shape(a),
                self.shape(b)
            )));
        }
        let mut out = vec![0.0; m * n];
        gemm_nt(self.value(a).data(), self.value(b).data(), &mut out, m, k, n);
        self.push(Tensor::new(vec![m, n], out)?, Op::MatMulNT(a, b))
    }

    pub fn transpose(&mut self, a: Var) -> Result<Var> {
        let t = self.value(a).transpose()?;
        self.push(t, Op::Transpose(a))
    }

    fn same_shape(&self, a: Var, b: Var, what: &str) -> Result<()> {
        if self.shape(a) != self.shape(b) {
            return Err(Error::Dimension(format!(
                "{what}: shapes {:?} and {:?} differ",
                self.shape(a),
                self.shape(b)
            )));
        }
        Ok(())
    }

    fn zip_map(&mut self, a: Var, b: Var, what: &str, f: impl Fn(f64, f64) -> f64, op: Op) -> Result<Var> {
        self.same_shape(a, b, what)?;
        let va = self.value(a);
        let data = va
            .data()
            .iter()
            .zip(self.value(b).data())
            .map(|(&x, &y)| f(x, y))
            .collect();
        let t = Tensor::new(va.shape().to_vec(), data)?;
        self.push(t, op)
    }

    fn map(&mut self, a: Var, f: impl Fn(f64) -> f64, op: Op) -> Result<Var> {
        let va = self.value(a);
        let t = Tensor::new(va.shape().to_vec(), va.data().iter().map(|&x| f(x)).collect())?;
        self.push(t, op)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_map(a, b, "add", |x, y| x + y, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_map(a, b, "sub", |x, y| x - y, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_map(a, b, "mul", |x, y| x * y, Op::Mul(a, b))
    }

    pub fn div(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_map(a, b, "div", |x, y| x / y, Op::Div(a, b))
    }

    /// Elementwise minimum; ties route the gradient to `a`.
    pub fn minimum(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_map(a, b, "minimum", f64::min, Op::Min(a, b))
    }

    /// Elementwise maximum; ties route the gradient to `a`.
    pub fn maximum(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_map(a, b, "maximum", f64::max, Op::Max(a, b))
    }

    /// `a[.., n] + row[n]` broadcast over every leading index.
    pub fn add_row(&mut self, a: Var, row: Var) -> Result<Var> {
        let n = self.value(a).last_dim();
        if self.value(row).len() != n {
            return Err(Error::Dimension(format!(
                "add_row: row of shape {:?} does not fit last axis of {:?}",
                self.shape(row),
                self.shape(a)
            )));
        }
        let va = self.value(a);
        let r = self.value(row).data();
        let data = va
            .data()
            .iter()
            .enumerate()
            .map(|(i, &x)| x + r[i % n])
            .collect();
        let t = Tensor::new(va.shape().to_vec(), data)?;
        self.push(t, Op::AddRow(a, row))
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Result<Var> {
        self.map(a, |x| x * c, Op::Scale(a, c))
    }

    pub fn add_scalar(&mut self, a: Var, c: f64) -> Result<Var> {
        self.map(a, |x| x + c, Op::AddScalar(a))
    }

    pub fn abs(&mut self, a: Var) -> Result<Var> {
        self.map(a, f64::abs, Op::Abs(a))
    }

    pub fn sigmoid(&mut self, a: Var) -> Result<Var> {
        self.map(a, sigmoid, Op::Sigmoid(a))
    }

    /// GELU, tanh approximation.
    pub fn gelu(&mut self, a: Var) -> Result<Var> {
        self.map(a, |x| gelu(x).0, Op::Gelu(a))
    }

    /// Numerically stable softmax along `axis`.
    pub fn softmax(&mut self, x: Var, axis: usize) -> Result<Var> {
        let (outer, n, inner) = split_axis(self.shape(x), axis)?;
        let src = self.value(x).data();
        let mut out = vec![0.0; src.len()];
        for o in 0..outer {
            for i in 0..inner {
                let at = |j: usize| o * n * inner + j * inner + i;
                let max = (0..n).map(|j| src[at(j)]).fold(f64::NEG_INFINITY, f64::max);
                let mut total = 0.0;
                for j in 0..n {
                    let e = (src[at(j)] - max).exp();
                    out[at(j)] = e;
                    total += e;
                }
                for j in 0..n {
                    out[at(j)] /= total;
                }
            }
        }
        let t = Tensor::new(self.shape(x).to_vec(), out)?;
        self.push(t, Op::Softmax { x, outer, n, inner })
    }

    /// Layer normalization over the last axis with affine gain and bias.
    pub fn layer_norm(&mut self, x: Var, gain: Var, bias: Var, eps: f64) -> Result<Var> {
        let d = self.value(x).last_dim();
        if self.value(gain).len() != d || self.value(bias).len() != d {
            return Err(Error::Dimension(format!(
                "layer_norm: gain {:?} / bias {:?} do not match last axis of {:?}",
                self.shape(gain),
                self.shape(bias),
                self.shape(x)
            )));
        }
        if eps <= 0.0 {
            return Err(Error::Config(format!("layer_norm eps must be > 0, got {eps}")));
        }
        let src = self.value(x);
        let g = self.value(gain).data();
        let b = self.value(bias).data();
        let rows = src.rows();
        let mut xhat = vec![0.0; src.len()];
        let mut inv_std = vec![0.0; rows];
        let mut out = vec![0.0; src.len()];
        for r in 0..rows {
            let row = src.row(r);
            let mean = row.iter().sum::<f64>() / d as f64;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / d as f64;
            let is = 1.0 / (var + eps).sqrt();
            inv_std[r] = is;
            for j in 0..d {
                let h = (row[j] - mean) * is;
                xhat[r * d + j] = h;
                out[r * d + j] = h * g[j] + b[j];
            }
        }
        let t = Tensor::new(src.shape().to_vec(), out)?;
        self.push(t, Op::LayerNorm { x, gain, bias, xhat, inv_std })
    }

    /// Inverted dropout. Identity (no new node) in evaluation mode or at rate 0.
    pub fn dropout(&mut self, x: Var, rate: f64, mode: &mut Mode<'_>) -> Result<Var> {
        if !(0.0..1.0).contains(&rate) {
            return Err(Error::Config(format!("dropout rate must be in [0, 1), got {rate}")));
        }
        let rng = match mode.rng.as_mut() {
            Some(rng) if rate > 0.0 => rng,
            _ => return Ok(x),
        };
        let keep = 1.0 / (1.0 - rate);
        let n = self.value(x).len();
        let mask: Vec<f64> = (0..n)
            .map(|_| if rng.random::<f64>() < rate { 0.0 } else { keep })
            .collect();
        let src = self.value(x);
        let data = src.data().iter().zip(&mask).map(|(v, m)| v * m).collect();
        let t = Tensor::new(src.shape().to_vec(), data)?;
        self.push(t, Op::Dropout { x, mask })
    }

    /// Concatenate along `axis`; all other axes must agree.
    pub fn concat(&mut self, parts: &[Var], axis: usize) -> Result<Var> {
        let first = parts
            .first()
            .ok_or_else(|| Error::Dimension("concat of zero tensors".into()))?;
        let base = self.shape(*first).to_vec();
        let (outer, _, inner) = split_axis(&base, axis)?;
        let mut dims = Vec::with_capacity(parts.len());
        for &p in parts {
            let s = self.shape(p);
            let compatible = s.len() == base.len()
                && s.iter().zip(&base).enumerate().all(|(i, (a, b))| i == axis || a == b);
            if !compatible {
                return Err(Error::Dimension(format!(
                    "concat along axis {axis}: shape {s:?} incompatible with {base:?}"
                )));
            }
            dims.push((p, s[axis]));
        }
        let total: usize = dims.iter().map(|(_, d)| d).sum();
        let mut out = Vec::with_capacity(outer * total * inner);
        for o in 0..outer {
            for &(p, d) in &dims {
                let src = self.value(p).data();
                out.extend_from_slice(&src[o * d * inner..(o + 1) * d * inner]);
            }
        }
        let mut shape = base;
        shape[axis] = total;
        let t = Tensor::new(shape, out)?;
        self.push(t, Op::Concat { parts: dims, outer, inner })
    }

    /// `len` entries of `axis` starting at `start`.
    pub fn slice(&mut self, x: Var, axis: usize, start: usize, len: usize) -> Result<Var> {
        let shape = self.shape(x).to_vec();
        let (outer, dim, inner) = split_axis(&shape, axis)?;
        if len == 0 || start + len > dim {
            return Err(Error::Dimension(format!(
                "slice [{start}, {}) out of range for axis {axis} of {shape:?}",
                start + len
            )));
        }
        let src = self.value(x).data();
        let mut out = Vec::with_capacity(outer * len * inner);
        for o in 0..outer {
            let base = o * dim * inner + start * inner;
            out.extend_from_slice(&src[base..base + len * inner]);
        }
        let mut new_shape = shape;
        new_shape[axis] = len;
        let t = Tensor::new(new_shape, out)?;
        self.push(t, Op::Slice { x, outer, dim, inner, start })
    }

    /// `x[i]`: drop the leading axis by selecting one entry.
    pub fn index0(&mut self, x: Var, i: usize) -> Result<Var> {
        let shape = self.shape(x).to_vec();
        if shape.len() < 2 || i >= shape[0] {
            return Err(Error::Dimension(format!("index {i} invalid for shape {shape:?}")));
        }
        let block: usize = shape[1..].iter().product();
        let offset = i * block;
        let data = self.value(x).data()[offset..offset + block].to_vec();
        let t = Tensor::new(shape[1..].to_vec(), data)?;
        self.push(t, Op::Index0 { x, offset })
    }

    /// Flat gather of the listed element positions into a vector.
    pub fn gather(&mut self, x: Var, idx: &[usize]) -> Result<Var> {
        let src = self.value(x).data();
        if idx.is_empty() || idx.iter().any(|&i| i >= src.len()) {
            return Err(Error::Dimension(format!(
                "gather indices {idx:?} invalid for {} elements",
                src.len()
            )));
        }
        let data = idx.iter().map(|&i| src[i]).collect();
        let t = Tensor::new(vec![idx.len()], data)?;
        self.push(t, Op::Gather { x, idx: idx.to_vec() })
    }

    pub fn sum(&mut self, x: Var) -> Result<Var> {
        let s = self.value(x).data().iter().sum();
        self.push(Tensor::scalar(s), Op::Sum(x))
    }

    pub fn mean(&mut self, x: Var) -> Result<Var> {
        let v = self.value(x);
        let s = v.data().iter().sum::<f64>() / v.len() as f64;
        self.push(Tensor::scalar(s), Op::Mean(x))
    }

    /// Repeat a single row `rows` times.
    pub fn broadcast_rows(&mut self, x: Var, rows: usize) -> Result<Var> {
        let v = self.value(x);
        let n = v.len();
        let data = v.data().repeat(rows);
        let t = Tensor::new(vec![rows, n], data)?;
        self.push(t, Op::BroadcastRows(x))
    }

    pub fn reshape(&mut self, x: Var, shape: Vec<usize>) -> Result<Var> {
        let t = self.value(x).clone().reshape(shape)?;
        self.push(t, Op::Reshape(x))
    }

    /// Mean binary cross-entropy between `sigmoid(x)` and `targets`.
    pub fn bce_with_logits(&mut self, x: Var, targets: &[f64]) -> Result<Var> {
        let v = self.value(x);
        if v.len() != targets.len() {
            return Err(Error::Dimension(format!(
                "bce: {} logits vs {} targets",
                v.len(),
                targets.len()
            )));
        }
        let n = v.len() as f64;
        let loss = v
            .data()
            .iter()
            .zip(targets)
            .map(|(&z, &y)| z.max(0.0) - z * y + (-z.abs()).exp().ln_1p())
            .sum::<f64>()
            / n;
        self.push(
            Tensor::scalar(loss),
            Op::BceWithLogits { x, targets: targets.to_vec() },
        )
    }

    /// `x · w + b` for `x[.., d_in]`, `w[d_in × d_out]`, `b[d_out]`.
    pub fn linear(&mut self, x: Var, w: Var, b: Option<Var>) -> Result<Var> {
        let y = self.matmul(x, w)?;
        match b {
            Some(b) => self.add_row(y, b),
            None => Ok(y),
        }
    }

    /// Gradient accumulated for `v` by the last [`Graph::backward`] call.
    pub fn grad(&self, v: Var) -> Option<Tensor> {
        self.grads.get(v.0).and_then(|g| g.as_ref()).map(|g| {
            Tensor::new(self.value(v).shape().to_vec(), g.clone()).expect("grad shape")
        })
    }

    /// Gradients of all bound parameters, zero-filled where untouched.
    pub fn param_grads(&self) -> Vec<Tensor> {
        (0..self.params.len())
            .map(|i| {
                self.grad(Var(i))
                    .unwrap_or_else(|| Tensor::zeros(self.params[i].shape()))
            })
            .collect()
    }

    /// Reverse sweep from a single-element output.
    pub fn backward(&mut self, output: Var) -> Result<()> {
        if self.value(output).len() != 1 {
            return Err(Error::Dimension(format!(
                "backward needs a scalar output, got shape {:?}",
                self.shape(output)
            )));
        }
        let p = self.params.len();
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; p + self.nodes.len()];
        grads[output.0] = Some(vec![1.0]);

        for idx in (p..=output.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            let node = &self.nodes[idx - p];
            self.backprop_node(node, &g, &mut grads)?;
            grads[idx] = Some(g);
        }
        for (i, g) in grads.iter().enumerate() {
            if let Some(g) = g {
                if g.iter().any(|v| !v.is_finite()) {
                    return Err(Error::Numeric(format!("non-finite gradient at node {i}")));
                }
            }
        }
        self.grads = grads;
        Ok(())
    }

    fn backprop_node(&self, node: &Node, g: &[f64], grads: &mut [Option<Vec<f64>>]) -> Result<()> {
        let len_of = |v: Var| self.value(v).len();
        let mut acc = |v: Var, f: &mut dyn FnMut(&mut [f64])| {
            let slot = grads[v.0].get_or_insert_with(|| vec![0.0; len_of(v)]);
            f(slot);
        };
        let out = &node.value;
        match &node.op {
            Op::Constant => {}
            Op::MatMul(a, b) => {
                let (m, k) = as_matrix(self.value(*a))?;
                let (_, n) = as_matrix(self.value(*b))?;
                let av = self.value(*a).data();
                let bv = self.value(*b).data();
                // dA = dC · Bᵀ, dB = Aᵀ · dC
                acc(*a, &mut |s| gemm_nt(g, bv, s, m, n, k));
                acc(*b, &mut |s| gemm_tn(av, g, s, k, m, n));
            }
            Op::MatMulNT(a, b) => {
                let (m, k) = as_matrix(self.value(*a))?;
                let (n, _) = as_matrix(self.value(*b))?;
                let av = self.value(*a).data();
                let bv = self.value(*b).data();
                // C = A·Bᵀ: dA = dC · B, dB = dCᵀ · A
                acc(*a, &mut |s| gemm(g, bv, s, m, n, k));
                acc(*b, &mut |s| gemm_tn(g, av, s, n, m, k));
            }
            Op::Transpose(a) => {
                let (m, n) = as_matrix(self.value(*a))?;
                acc(*a, &mut |s| {
                    for i in 0..m {
                        for j in 0..n {
                            s[i * n + j] += g[j * m + i];
                        }
                    }
                });
            }
            Op::Add(a, b) => {
                acc(*a, &mut |s| add_into(s, g));
                acc(*b, &mut |s| add_into(s, g));
            }
            Op::Sub(a, b) => {
                acc(*a, &mut |s| add_into(s, g));
                acc(*b, &mut |s| s.iter_mut().zip(g).for_each(|(s, g)| *s -= g));
            }
            Op::Mul(a, b) => {
                let av = self.value(*a).data();
                let bv = self.value(*b).data();
                acc(*a, &mut |s| {
                    for i in 0..s.len() {
                        s[i] += g[i] * bv[i];
                    }
                });
                acc(*b, &mut |s| {
                    for i in 0..s.len() {
                        s[i] += g[i] * av[i];
                    }
                });
            }
            Op::Div(a, b) => {
                let av = self.value(*a).data();
                let bv = self.value(*b).data();
                acc(*a, &mut |s| {
                    for i in 0..s.len() {
                        s[i] += g[i] / bv[i];
                    }
                });
                acc(*b, &mut |s| {
                    for i in 0..s.len() {
                        s[i] -= g[i] * av[i] / (bv[i] * bv[i]);
                    }
                });
            }
            Op::Min(a, b) | Op::Max(a, b) => {
                let is_min = matches!(node.op, Op::Min(..));
                let av = self.value(*a).data();
                let bv = self.value(*b).data();
                let pick_a: Vec<bool> = av
                    .iter()
                    .zip(bv)
                    .map(|(x, y)| if is_min { x <= y } else { x >= y })
                    .collect();
                acc(*a, &mut |s| {
                    for i in 0..s.len() {
                        if pick_a[i] {
                            s[i] += g[i];
                        }
                    }
                });
                acc(*b, &mut |s| {
                    for i in 0..s.len() {
                        if !pick_a[i] {
                            s[i] += g[i];
                        }
                    }
                });
            }
            Op::AddRow(a, row) => {
                acc(*a, &mut |s| add_into(s, g));
                let n = len_of(*row);
                acc(*row, &mut |s| {
                    for (i, gv) in g.iter().enumerate() {
                        s[i % n] += gv;
                    }
                });
            }
            Op::Scale(a, c) => acc(*a, &mut |s| s.iter_mut().zip(g).for_each(|(s, g)| *s += c * g)),
            Op::AddScalar(a) => acc(*a, &mut |s| add_into(s, g)),
            Op::Abs(a) => {
                let av = self.value(*a).data();
                acc(*a, &mut |s| {
                    for i in 0..s.len() {
                        s[i] += g[i] * sign(av[i]);
                    }
                });
            }
            Op::Sigmoid(a) => {
                let y = out.data();
                acc(*a, &mut |s| {
                    for i in 0..s.len() {
                        s[i] += g[i] * y[i] * (1.0 - y[i]);
                    }
                });
            }
            Op::Gelu(a) => {
                let av = self.value(*a).data();
                acc(*a, &mut |s| {
                    for i in 0..s.len() {
                        s[i] += g[i] * gelu(av[i]).1;
                    }
                });
            }
            Op::Softmax { x, outer, n, inner } => {
                let y = out.data();
                let (outer, n, inner) = (*outer, *n, *inner);
                acc(*x, &mut |s| {
                    for o in 0..outer {
                        for i in 0..inner {
                            let at = |j: usize| o * n * inner + j * inner + i;
                            let dot: f64 = (0..n).map(|j| g[at(j)] * y[at(j)]).sum();
                            for j in 0..n {
                                s[at(j)] += y[at(j)] * (g[at(j)] - dot);
                            }
                        }
                    }
                });
            }
            Op::LayerNorm { x, gain, bias, xhat, inv_std } => {
                let gv = self.value(*gain).data();
                let d = gv.len();
                let rows = inv_std.len();
                acc(*gain, &mut |s| {
                    for r in 0..rows {
                        for j in 0..d {
                            s[j] += g[r * d + j] * xhat[r * d + j];
                        }
                    }
                });
                acc(*bias, &mut |s| {
                    for r in 0..rows {
                        for j in 0..d {
                            s[j] += g[r * d + j];
                        }
                    }
                });
                acc(*x, &mut |s| {
                    for r in 0..rows {
                        let base = r * d;
                        let mut mean_dh = 0.0;
                        let mut mean_dh_h = 0.0;
                        for j in 0..d {
                            let dh = g[base + j] * gv[j];
                            mean_dh += dh;
                            mean_dh_h += dh * xhat[base + j];
                        }
                        mean_dh /= d as f64;
                        mean_dh_h /= d as f64;
                        for j in 0..d {
                            let dh = g[base + j] * gv[j];
                            s[base + j] +=
                                inv_std[r] * (dh - mean_dh - xhat[base + j] * mean_dh_h);
                        }
                    }
                });
            }
            Op::Dropout { x, mask } => {
                acc(*x, &mut |s| {
                    for i in 0..s.len() {
                        s[i] += g[i] * mask[i];
                    }
                });
            }
            Op::Concat { parts, outer, inner } => {
                let total: usize = parts.iter().map(|(_, d)| d).sum();
                let mut offset = 0;
                for &(p, d) in parts {
                    acc(p, &mut |s| {
                        for o in 0..*outer {
                            let src = o * total * inner + offset * inner;
                            let dst = o * d * inner;
                            add_into(&mut s[dst..dst + d * inner], &g[src..src + d * inner]);
                        }
                    });
                    offset += d;
                }
            }
            Op::Slice { x, outer, dim, inner, start } => {
                let len = g.len() / (outer * inner);
                acc(*x, &mut |s| {
                    for o in 0..*outer {
                        let dst = o * dim * inner + start * inner;
                        let src = o * len * inner;
                        add_into(&mut s[dst..dst + len * inner], &g[src..src + len * inner]);
                    }
                });
            }
            Op::Index0 { x, offset } => {
                acc(*x, &mut |s| add_into(&mut s[*offset..*offset + g.len()], g));
            }
            Op::Gather { x, idx } => {
                acc(*x, &mut |s| {
                    for (k, &i) in idx.iter().enumerate() {
                        s[i] += g[k];
                    }
                });
            }
            Op::Sum(x) => acc(*x, &mut |s| s.iter_mut().for_each(|v| *v += g[0])),
            Op::Mean(x) => {
                let n = len_of(*x) as f64;
                acc(*x, &mut |s| s.iter_mut().for_each(|v| *v += g[0] / n));
            }
            Op::BroadcastRows(x) => {
                let n = len_of(*x);
                acc(*x, &mut |s| {
                    for (i, gv) in g.iter().enumerate() {
                        s[i % n] += gv;
                    }
                });
            }
            Op::Reshape(x) => acc(*x, &mut |s| add_into(s, g)),
            Op::BceWithLogits { x, targets } => {
                let z = self.value(*x).data();
                let n = z.len() as f64;
                acc(*x, &mut |s| {
                    for i in 0..s.len() {
                        s[i] += g[0] * (sigmoid(z[i]) - targets[i]) / n;
                    }
                });
            }
        }
        Ok(())
    }
}

fn add_into(dst: &mut [f64], src: &[f64]) {
    for (d, s) in dst.iter_mut().zip(src) {
        *d += s;
    }
}

pub(crate) fn split_axis(shape: &[usize], axis: usize) -> Result<(usize, usize, usize)> {
    if axis >= shape.len() {
        return Err(Error::Dimension(format!("axis {axis} out of range for shape {shape:?}")));
    }
    let outer = shape[..axis].iter().product();
    let inner = shape[axis + 1..].iter().product();
    Ok((outer, shape[axis], inner))
}

fn op_name(op: &Op) -> &'static str {
    match op {
        Op::Constant => "constant",
        Op::MatMul(..) | Op::MatMulNT(..) => "matmul",
        Op::Transpose(_) => "transpose",
        Op::Add(..) | Op::AddRow(..) | Op::AddScalar(_) => "add",
        Op::Sub(..) => "sub",
        Op::Mul(..) | Op::Scale(..) => "mul",
        Op::Div(..) => "div",
        Op::Min(..) | Op::Max(..) => "min/max",
        Op::Abs(_) => "abs",
        Op::Sigmoid(_) => "sigmoid",
        Op::Gelu(_) => "gelu",
        Op::Softmax { .. } => "softmax",
        Op::LayerNorm { .. } => "layer_norm",
        Op::Dropout { .. } => "dropout",
        Op::Concat { .. } => "concat",
        Op::Slice { .. } | Op::Index0 { .. } | Op::Gather { .. } => "index",
        Op::Sum(_) | Op::Mean(_) => "reduce",
        Op::BroadcastRows(_) | Op::Reshape(_) => "reshape",
        Op::BceWithLogits { .. } => "bce",
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

const SQRT_2_OVER_PI: f64 = 0.797_884_560_802_865_4;
const GELU_COEF: f64 = 0.044_715;

/// GELU value and derivative.
fn gelu(x: f64) -> (f64, f64) {
    let u = SQRT_2_OVER_PI * (x + GELU_COEF * x * x * x);
    let t = u.tanh();
    let value = 0.5 * x * (1.0 + t);
    let du = SQRT_2_OVER_PI * (1.0 + 3.0 * GELU_COEF * x * x);
    let deriv = 0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * du;
    (value, deriv)
}

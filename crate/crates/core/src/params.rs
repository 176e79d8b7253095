//! Named parameter storage and the basic affine / normalization layers.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::numerics::{Graph, Tensor, Var};

use crate::rng::{normal, DetRng};

/// Standard deviation for affine weight initialization.
pub const INIT_STD: f64 = 0.02;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ParamId(pub usize);

impl ParamId {
    pub fn var(self, g: &Graph<'_>) -> Var {
        g.param(self.0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParamInfo {
    pub name: String,
    /// Whether weight decay applies.
    pub decay: bool,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamStore {
    tensors: Vec<Tensor>,
    info: Vec<ParamInfo>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: impl Into<String>, tensor: Tensor, decay: bool) -> ParamId {
        let name = name.into();
        debug_assert!(self.info.iter().all(|i| i.name != name), "duplicate parameter {name}");
        self.tensors.push(tensor);
        self.info.push(ParamInfo { name, decay });
        ParamId(self.tensors.len() - 1)
    }

    pub fn normal(&mut self, name: impl Into<String>, shape: &[usize], std: f64, rng: &mut DetRng) -> ParamId {
        let n = shape.iter().product();
        let data = (0..n).map(|_| std * normal(rng)).collect();
        let t = Tensor::new(shape.to_vec(), data).expect("positive shape");
        self.add(name, t, true)
    }

    pub fn tensors(&self) -> &[Tensor] {
        &self.tensors
    }

    pub fn tensors_mut(&mut self) -> &mut [Tensor] {
        &mut self.tensors
    }

    pub fn info(&self) -> &[ParamInfo] {
        &self.info
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn get(&self, id: ParamId) -> &Tensor {
        &self.tensors[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.tensors[id.0]
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.info.iter().position(|i| i.name == name).map(ParamId)
    }

    /// Total scalar count.
    pub fn numel(&self) -> usize {
        self.tensors.iter().map(Tensor::len).sum()
    }

    pub fn named(&self) -> BTreeMap<String, Tensor> {
        self.info
            .iter()
            .zip(&self.tensors)
            .map(|(i, t)| (i.name.clone(), t.clone()))
            .collect()
    }

    /// Overwrite every tensor from a name-keyed map; names and shapes must match exactly.
    pub fn load_named(&mut self, named: &BTreeMap<String, Tensor>) -> Result<()> {
        if named.len() != self.len() {
            return Err(Error::Compatibility(format!(
                "expected {} parameter tensors, found {}",
                self.len(),
                named.len()
            )));
        }
        for (info, slot) in self.info.iter().zip(self.tensors.iter_mut()) {
            let t = named.get(&info.name).ok_or_else(|| {
                Error::Compatibility(format!("missing parameter {}", info.name))
            })?;
            if t.shape() != slot.shape() {
                return Err(Error::Compatibility(format!(
                    "parameter {} has shape {:?}, model expects {:?}",
                    info.name,
                    t.shape(),
                    slot.shape()
                )));
            }
            *slot = t.clone();
        }
        Ok(())
    }
}

/// `y = x·W + b` with `W[d_in × d_out]`, weights `N(0, INIT_STD²)`, zero bias.
#[derive(Debug, Clone, Copy)]
pub struct Linear {
    pub weight: ParamId,
    pub bias: ParamId,
    pub d_in: usize,
    pub d_out: usize,
}

impl Linear {
    pub fn new(store: &mut ParamStore, name: &str, d_in: usize, d_out: usize, rng: &mut DetRng) -> Self {
        let weight = store.normal(format!("{name}.weight"), &[d_in, d_out], INIT_STD, rng);
        let bias = store.add(format!("{name}.bias"), Tensor::zeros(&[d_out]), false);
        Self { weight, bias, d_in, d_out }
    }

    pub fn forward(&self, g: &mut Graph<'_>, x: Var) -> Result<Var> {
        let d_in = g.value(x).last_dim();
        if d_in != self.d_in {
            return Err(Error::Dimension(format!(
                "linear layer expects input width {}, got shape {:?}",
                self.d_in,
                g.shape(x)
            )));
        }
        let w = self.weight.var(g);
        let b = self.bias.var(g);
        g.linear(x, w, Some(b))
    }
}

#[derive(Debug, Clone, Copy)]
pub struct LayerNorm {
    pub gain: ParamId,
    pub bias: ParamId,
}

pub const LN_EPS: f64 = 1e-5;

impl LayerNorm {
    pub fn new(store: &mut ParamStore, name: &str, d: usize) -> Self {
        let gain = store.add(format!("{name}.gain"), Tensor::full(&[d], 1.0), false);
        let bias = store.add(format!("{name}.bias"), Tensor::zeros(&[d]), false);
        Self { gain, bias }
    }

    pub fn forward(&self, g: &mut Graph<'_>, x: Var) -> Result<Var> {
        let gain = self.gain.var(g);
        let bias = self.bias.var(g);
        g.layer_norm(x, gain, bias, LN_EPS)
    }
}

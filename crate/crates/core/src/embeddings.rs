//! Input projection with pre-dropout, and fixed 2-D sine-cosine positional
//! encodings for clip sequences.
//!
//! Clip index `t` is laid out row-major on a `grid_width`-wide grid, and the
//! encoding of `(row, col)` is `[sin(row·ω), cos(row·ω), sin(col·ω), cos(col·ω)]`
//! with `d_model / 4` frequencies `ω_i = temperature^(-4i / d_model)`.

use crate::error::{Error, Result};
use crate::numerics::{Graph, Mode, Tensor, Var};
use crate::params::{Linear, ParamStore};
use crate::rng::DetRng;

pub const DEFAULT_TEMPERATURE: f64 = 10_000.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PosEncodingConfig {
    pub d_model: usize,
    pub temperature: f64,
    pub grid_width: usize,
}

impl PosEncodingConfig {
    pub fn new(d_model: usize, grid_width: usize) -> Self {
        Self {
            d_model,
            temperature: DEFAULT_TEMPERATURE,
            grid_width,
        }
    }

    /// Grid width covering sequences up to `max_len` clips: `ceil(sqrt(max_len))`.
    pub fn for_max_len(d_model: usize, max_len: usize) -> Self {
        Self::new(d_model, grid_width_for(max_len))
    }

    pub fn validate(&self) -> Result<()> {
        if self.d_model == 0 || self.d_model % 4 != 0 {
            return Err(Error::Config(format!(
                "positional encoding needs d_model divisible by 4, got {}",
                self.d_model
            )));
        }
        if !(self.temperature > 1.0) || !self.temperature.is_finite() {
            return Err(Error::Config(format!(
                "positional encoding temperature must be > 1, got {}",
                self.temperature
            )));
        }
        if self.grid_width == 0 {
            return Err(Error::Config("grid width must be positive".into()));
        }
        Ok(())
    }
}

pub fn grid_width_for(max_len: usize) -> usize {
    let mut w = (max_len as f64).sqrt().ceil() as usize;
    // guard against sqrt rounding on perfect squares
    while w * w < max_len {
        w += 1;
    }
    while w > 1 && (w - 1) * (w - 1) >= max_len {
        w -= 1;
    }
    w.max(1)
}

/// Row-major position of clip `t` on a grid of the given width.
pub fn grid_map(t: usize, grid_width: usize) -> (usize, usize) {
    (t / grid_width, t % grid_width)
}

/// Encode each `(row, col)` position as one `d_model`-wide row.
pub fn sincos2d(positions: &[(usize, usize)], cfg: &PosEncodingConfig) -> Result<Tensor> {
    cfg.validate()?;
    if positions.is_empty() {
        return Err(Error::Dimension("no positions to encode".into()));
    }
    let quarter = cfg.d_model / 4;
    let omega: Vec<f64> = (0..quarter)
        .map(|i| cfg.temperature.powf(-(i as f64) / quarter as f64))
        .collect();
    let mut data = Vec::with_capacity(positions.len() * cfg.d_model);
    for &(row, col) in positions {
        let (r, c) = (row as f64, col as f64);
        data.extend(omega.iter().map(|w| (r * w).sin()));
        data.extend(omega.iter().map(|w| (r * w).cos()));
        data.extend(omega.iter().map(|w| (c * w).sin()));
        data.extend(omega.iter().map(|w| (c * w).cos()));
    }
    Tensor::matrix(positions.len(), cfg.d_model, data)
}

/// Encoding for clips `0..len` via [`grid_map`].
pub fn clip_encoding(len: usize, cfg: &PosEncodingConfig) -> Result<Tensor> {
    let positions: Vec<_> = (0..len).map(|t| grid_map(t, cfg.grid_width)).collect();
    sincos2d(&positions, cfg)
}

/// Affine projection of raw features into the model width followed by
/// pre-dropout. Positional encodings are added by the caller.
#[derive(Debug, Clone, Copy)]
pub struct InputProjection {
    pub proj: Linear,
    pub pre_dropout: f64,
}

impl InputProjection {
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        d_in: usize,
        d_model: usize,
        pre_dropout: f64,
        rng: &mut DetRng,
    ) -> Result<Self> {
        if !(0.0..1.0).contains(&pre_dropout) {
            return Err(Error::Config(format!(
                "pre-dropout rate must be in [0, 1), got {pre_dropout}"
            )));
        }
        Ok(Self {
            proj: Linear::new(store, name, d_in, d_model, rng),
            pre_dropout,
        })
    }

    pub fn forward(&self, g: &mut Graph<'_>, features: Var, mode: &mut Mode<'_>) -> Result<Var> {
        project_and_drop(g, features, &self.proj, self.pre_dropout, mode)
    }
}

pub fn project_and_drop(
    g: &mut Graph<'_>,
    features: Var,
    proj: &Linear,
    pre_dropout: f64,
    mode: &mut Mode<'_>,
) -> Result<Var> {
    let y = proj.forward(g, features)?;
    g.dropout(y, pre_dropout, mode)
}

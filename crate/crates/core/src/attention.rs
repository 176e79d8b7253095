//! Multi-head attention with persistent memory, and the pre-norm layers built on it.
//!
//! Persistent memory is a set of learnable key/value slots per head that are
//! appended to the projected keys and values of every attention call. Slots
//! carry no positional encoding and never act as queries. With zero slots the
//! block is ordinary multi-head attention.

use crate::error::{Error, Result};
use crate::numerics::{Graph, Mode, Var};
use crate::params::{LayerNorm, Linear, ParamId, ParamStore, INIT_STD};
use crate::rng::DetRng;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AttentionConfig {
    pub d_model: usize,
    pub num_heads: usize,
    pub memory_slots: usize,
    pub dropout: f64,
}

impl Default for AttentionConfig {
    fn default() -> Self {
        Self {
            d_model: 256,
            num_heads: 8,
            memory_slots: 16,
            dropout: 0.1,
        }
    }
}

impl AttentionConfig {
    pub fn validate(&self) -> Result<()> {
        if self.d_model == 0 || self.num_heads == 0 || self.d_model % self.num_heads != 0 {
            return Err(Error::Config(format!(
                "d_model {} must be a positive multiple of num_heads {}",
                self.d_model, self.num_heads
            )));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config(format!(
                "dropout must be in [0, 1), got {}",
                self.dropout
            )));
        }
        Ok(())
    }

    pub fn d_head(&self) -> usize {
        self.d_model / self.num_heads
    }
}

/// Learnable key/value slots, `[num_heads × slots × d_head]` each.
#[derive(Debug, Clone, Copy)]
pub struct PersistentMemory {
    pub keys: ParamId,
    pub values: ParamId,
    pub slots: usize,
}

impl PersistentMemory {
    pub fn new(store: &mut ParamStore, name: &str, cfg: &AttentionConfig, rng: &mut DetRng) -> Option<Self> {
        if cfg.memory_slots == 0 {
            return None;
        }
        let shape = [cfg.num_heads, cfg.memory_slots, cfg.d_head()];
        Some(Self {
            keys: store.normal(format!("{name}.mem_keys"), &shape, INIT_STD, rng),
            values: store.normal(format!("{name}.mem_values"), &shape, INIT_STD, rng),
            slots: cfg.memory_slots,
        })
    }
}

#[derive(Debug, Clone, Copy)]
pub struct PmAttention {
    pub q: Linear,
    pub k: Linear,
    pub v: Linear,
    pub out: Linear,
    pub memory: Option<PersistentMemory>,
    pub cfg: AttentionConfig,
}

/// Output of one attention call plus the per-head weight matrices
/// `[Tq × (Tk + slots)]`, sequence columns first.
pub struct AttentionOutput {
    pub output: Var,
    pub weights: Vec<Var>,
}

impl PmAttention {
    pub fn new(store: &mut ParamStore, name: &str, cfg: &AttentionConfig, rng: &mut DetRng) -> Result<Self> {
        cfg.validate()?;
        let d = cfg.d_model;
        Ok(Self {
            q: Linear::new(store, &format!("{name}.q"), d, d, rng),
            k: Linear::new(store, &format!("{name}.k"), d, d, rng),
            v: Linear::new(store, &format!("{name}.v"), d, d, rng),
            out: Linear::new(store, &format!("{name}.out"), d, d, rng),
            memory: PersistentMemory::new(store, name, cfg, rng),
            cfg: *cfg,
        })
    }

    pub fn forward(&self, g: &mut Graph<'_>, queries: Var, context: Option<(Var, Var)>) -> Result<Var> {
        Ok(self.forward_with_weights(g, queries, context)?.output)
    }

    /// `context` holds `(keys, values)` token matrices; `None` means an empty
    /// sequence, legal only when memory slots exist.
    pub fn forward_with_weights(
        &self,
        g: &mut Graph<'_>,
        queries: Var,
        context: Option<(Var, Var)>,
    ) -> Result<AttentionOutput> {
        if context.is_none() && self.memory.is_none() {
            return Err(Error::EmptyAttention);
        }
        if let Some((k, v)) = context {
            if g.shape(k)[0] != g.shape(v)[0] {
                return Err(Error::Dimension(format!(
                    "keys {:?} and values {:?} have different lengths",
                    g.shape(k),
                    g.shape(v)
                )));
            }
        }
        let heads = self.cfg.num_heads;
        let dh = self.cfg.d_head();
        let scale = 1.0 / (dh as f64).sqrt();

        let q = self.q.forward(g, queries)?;
        let kv = match context {
            Some((k, v)) => Some((self.k.forward(g, k)?, self.v.forward(g, v)?)),
            None => None,
        };
        let mut head_outputs = Vec::with_capacity(heads);
        let mut weights = Vec::with_capacity(heads);
        for h in 0..heads {
            let qh = g.slice(q, 1, h * dh, dh)?;
            let mut key_parts = Vec::with_capacity(2);
            let mut value_parts = Vec::with_capacity(2);
            if let Some((k, v)) = kv {
                key_parts.push(g.slice(k, 1, h * dh, dh)?);
                value_parts.push(g.slice(v, 1, h * dh, dh)?);
            }
            if let Some(mem) = &self.memory {
                let mk = mem.keys.var(g);
                let mv = mem.values.var(g);
                key_parts.push(g.index0(mk, h)?);
                value_parts.push(g.index0(mv, h)?);
            }
            let kh = concat_or_single(g, &key_parts)?;
            let vh = concat_or_single(g, &value_parts)?;
            let scores = g.matmul_nt(qh, kh)?;
            let scores = g.scale(scores, scale)?;
            let attn = g.softmax(scores, 1)?;
            weights.push(attn);
            head_outputs.push(g.matmul(attn, vh)?);
        }
        let merged = concat_or_single_axis(g, &head_outputs, 1)?;
        let output = self.out.forward(g, merged)?;
        Ok(AttentionOutput { output, weights })
    }
}

fn concat_or_single(g: &mut Graph<'_>, parts: &[Var]) -> Result<Var> {
    concat_or_single_axis(g, parts, 0)
}

fn concat_or_single_axis(g: &mut Graph<'_>, parts: &[Var], axis: usize) -> Result<Var> {
    if parts.len() == 1 {
        Ok(parts[0])
    } else {
        g.concat(parts, axis)
    }
}

/// Position-wise feed-forward block, hidden width `4·d_model`, GELU.
#[derive(Debug, Clone, Copy)]
pub struct FeedForward {
    pub fc1: Linear,
    pub fc2: Linear,
}

impl FeedForward {
    pub fn new(store: &mut ParamStore, name: &str, d: usize, rng: &mut DetRng) -> Self {
        Self {
            fc1: Linear::new(store, &format!("{name}.fc1"), d, 4 * d, rng),
            fc2: Linear::new(store, &format!("{name}.fc2"), 4 * d, d, rng),
        }
    }

    pub fn forward(&self, g: &mut Graph<'_>, x: Var) -> Result<Var> {
        let h = self.fc1.forward(g, x)?;
        let h = g.gelu(h)?;
        self.fc2.forward(g, h)
    }
}

fn residual(g: &mut Graph<'_>, x: Var, branch: Var, rate: f64, mode: &mut Mode<'_>) -> Result<Var> {
    let b = g.dropout(branch, rate, mode)?;
    g.add(x, b)
}

/// Pre-norm self-attention + feed-forward block.
#[derive(Debug, Clone, Copy)]
pub struct EncoderLayer {
    pub norm_attn: LayerNorm,
    pub attn: PmAttention,
    pub norm_ffn: LayerNorm,
    pub ffn: FeedForward,
}

impl EncoderLayer {
    pub fn new(store: &mut ParamStore, name: &str, cfg: &AttentionConfig, rng: &mut DetRng) -> Result<Self> {
        let d = cfg.d_model;
        Ok(Self {
            norm_attn: LayerNorm::new(store, &format!("{name}.norm_attn"), d),
            attn: PmAttention::new(store, &format!("{name}.attn"), cfg, rng)?,
            norm_ffn: LayerNorm::new(store, &format!("{name}.norm_ffn"), d),
            ffn: FeedForward::new(store, &format!("{name}.ffn"), d, rng),
        })
    }

    pub fn forward(&self, g: &mut Graph<'_>, x: Var, mode: &mut Mode<'_>) -> Result<Var> {
        let rate = self.attn.cfg.dropout;
        let h = self.norm_attn.forward(g, x)?;
        let a = self.attn.forward(g, h, Some((h, h)))?;
        let x = residual(g, x, a, rate, mode)?;
        let h = self.norm_ffn.forward(g, x)?;
        let f = self.ffn.forward(g, h)?;
        residual(g, x, f, rate, mode)
    }
}

/// One stream attending over another, then a feed-forward block.
#[derive(Debug, Clone, Copy)]
pub struct CrossAttentionBlock {
    pub norm_query: LayerNorm,
    pub norm_context: LayerNorm,
    pub attn: PmAttention,
    pub norm_ffn: LayerNorm,
    pub ffn: FeedForward,
}

impl CrossAttentionBlock {
    pub fn new(store: &mut ParamStore, name: &str, cfg: &AttentionConfig, rng: &mut DetRng) -> Result<Self> {
        let d = cfg.d_model;
        Ok(Self {
            norm_query: LayerNorm::new(store, &format!("{name}.norm_query"), d),
            norm_context: LayerNorm::new(store, &format!("{name}.norm_context"), d),
            attn: PmAttention::new(store, &format!("{name}.attn"), cfg, rng)?,
            norm_ffn: LayerNorm::new(store, &format!("{name}.norm_ffn"), d),
            ffn: FeedForward::new(store, &format!("{name}.ffn"), d, rng),
        })
    }

    pub fn forward(&self, g: &mut Graph<'_>, x: Var, context: Var, mode: &mut Mode<'_>) -> Result<Var> {
        let rate = self.attn.cfg.dropout;
        let q = self.norm_query.forward(g, x)?;
        let c = self.norm_context.forward(g, context)?;
        let a = self.attn.forward(g, q, Some((c, c)))?;
        let x = residual(g, x, a, rate, mode)?;
        let h = self.norm_ffn.forward(g, x)?;
        let f = self.ffn.forward(g, h)?;
        residual(g, x, f, rate, mode)
    }
}

/// Bidirectional video/audio cross-attention; the fused clip representation
/// is the sum of the two updated streams.
#[derive(Debug, Clone, Copy)]
pub struct CrossModalLayer {
    pub video_from_audio: CrossAttentionBlock,
    pub audio_from_video: CrossAttentionBlock,
}

impl CrossModalLayer {
    pub fn new(store: &mut ParamStore, name: &str, cfg: &AttentionConfig, rng: &mut DetRng) -> Result<Self> {
        Ok(Self {
            video_from_audio: CrossAttentionBlock::new(store, &format!("{name}.video_from_audio"), cfg, rng)?,
            audio_from_video: CrossAttentionBlock::new(store, &format!("{name}.audio_from_video"), cfg, rng)?,
        })
    }

    pub fn forward(&self, g: &mut Graph<'_>, video: Var, audio: Var, mode: &mut Mode<'_>) -> Result<Var> {
        if g.shape(video) != g.shape(audio) {
            return Err(Error::Sync(format!(
                "video stream {:?} and audio stream {:?} are not aligned",
                g.shape(video),
                g.shape(audio)
            )));
        }
        let v = self.video_from_audio.forward(g, video, audio, mode)?;
        let a = self.audio_from_video.forward(g, audio, video, mode)?;
        g.add(v, a)
    }
}

/// Pre-norm self-attention over decoder queries, cross-attention to the
/// fused clip tokens, then feed-forward.
#[derive(Debug, Clone, Copy)]
pub struct DecoderLayer {
    pub norm_self: LayerNorm,
    pub self_attn: PmAttention,
    pub norm_cross: LayerNorm,
    pub norm_memory: LayerNorm,
    pub cross_attn: PmAttention,
    pub norm_ffn: LayerNorm,
    pub ffn: FeedForward,
}

impl DecoderLayer {
    pub fn new(store: &mut ParamStore, name: &str, cfg: &AttentionConfig, rng: &mut DetRng) -> Result<Self> {
        let d = cfg.d_model;
        Ok(Self {
            norm_self: LayerNorm::new(store, &format!("{name}.norm_self"), d),
            self_attn: PmAttention::new(store, &format!("{name}.self_attn"), cfg, rng)?,
            norm_cross: LayerNorm::new(store, &format!("{name}.norm_cross"), d),
            norm_memory: LayerNorm::new(store, &format!("{name}.norm_memory"), d),
            cross_attn: PmAttention::new(store, &format!("{name}.cross_attn"), cfg, rng)?,
            norm_ffn: LayerNorm::new(store, &format!("{name}.norm_ffn"), d),
            ffn: FeedForward::new(store, &format!("{name}.ffn"), d, rng),
        })
    }

    pub fn forward(&self, g: &mut Graph<'_>, queries: Var, fused: Var, mode: &mut Mode<'_>) -> Result<Var> {
        let rate = self.self_attn.cfg.dropout;
        let h = self.norm_self.forward(g, queries)?;
        let a = self.self_attn.forward(g, h, Some((h, h)))?;
        let x = residual(g, queries, a, rate, mode)?;
        let h = self.norm_cross.forward(g, x)?;
        let m = self.norm_memory.forward(g, fused)?;
        let c = self.cross_attn.forward(g, h, Some((m, m)))?;
        let x = residual(g, x, c, rate, mode)?;
        let h = self.norm_ffn.forward(g, x)?;
        let f = self.ffn.forward(g, h)?;
        residual(g, x, f, rate, mode)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::Tensor;
    use crate::rng::seeded;

    #[test]
    fn rejects_heads_not_dividing_width() {
        let cfg = AttentionConfig { d_model: 10, num_heads: 4, ..Default::default() };
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn empty_context_without_memory_errors() {
        let cfg = AttentionConfig { d_model: 4, num_heads: 2, memory_slots: 0, dropout: 0.0 };
        let mut store = ParamStore::new();
        let attn = PmAttention::new(&mut store, "a", &cfg, &mut seeded(0)).unwrap();
        let mut g = Graph::new(store.tensors());
        let q = g.constant(Tensor::zeros(&[2, 4])).unwrap();
        assert!(matches!(attn.forward(&mut g, q, None), Err(Error::EmptyAttention)));
    }

    #[test]
    fn memory_only_attention_is_legal() {
        let cfg = AttentionConfig { d_model: 4, num_heads: 2, memory_slots: 3, dropout: 0.0 };
        let mut store = ParamStore::new();
        let attn = PmAttention::new(&mut store, "a", &cfg, &mut seeded(0)).unwrap();
        let mut g = Graph::new(store.tensors());
        let q = g.constant(Tensor::full(&[2, 4], 0.3)).unwrap();
        let out = attn.forward_with_weights(&mut g, q, None).unwrap();
        assert_eq!(g.shape(out.output), &[2, 4]);
        assert_eq!(g.shape(out.weights[0]), &[2, 3]);
    }

    #[test]
    fn cross_modal_rejects_length_mismatch() {
        let cfg = AttentionConfig { d_model: 4, num_heads: 2, memory_slots: 1, dropout: 0.0 };
        let mut store = ParamStore::new();
        let layer = CrossModalLayer::new(&mut store, "x", &cfg, &mut seeded(0)).unwrap();
        let mut g = Graph::new(store.tensors());
        let v = g.constant(Tensor::zeros(&[3, 4])).unwrap();
        let a = g.constant(Tensor::zeros(&[2, 4])).unwrap();
        assert!(matches!(layer.forward(&mut g, v, a, &mut Mode::eval()), Err(Error::Sync(_))));
    }
}

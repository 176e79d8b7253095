//! The end-to-end pipeline: uni-modal encoders, cross-modal fusion, a
//! query-conditioned decoder, and the moment-retrieval and highlight heads.

mod config;
mod loss;
mod matching;

pub use config::ModelConfig;
pub use loss::{
    compute_loss, match_cost, span_giou, LossBreakdown, LossWeights, Targets, POSITIVE_RATING,
};
pub use matching::{assignment_cost, hungarian_match};

use serde::{Deserialize, Serialize};

use crate::attention::{CrossModalLayer, DecoderLayer, EncoderLayer};
use crate::embeddings::{clip_encoding, InputProjection};
use crate::error::{Error, Result};
use crate::numerics::{sigmoid, Graph, Mode, Tensor, Var};
use crate::params::{LayerNorm, Linear, ParamId, ParamStore};
use crate::rng::DetRng;

/// Smallest predicted normalized width.
pub const WIDTH_FLOOR: f64 = 1e-3;

/// One candidate moment, normalized by video duration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MomentPrediction {
    pub center: f64,
    pub width: f64,
    pub confidence: f64,
}

impl MomentPrediction {
    /// `[center - width/2, center + width/2]` clipped to `[0, 1]`.
    pub fn normalized_span(&self) -> (f64, f64) {
        let start = (self.center - self.width / 2.0).max(0.0);
        let end = (self.center + self.width / 2.0).min(1.0);
        (start, end)
    }
}

/// Per-clip saliency scores (logits).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SaliencyScores(pub Vec<f64>);

/// Raw features for one video/query pair. All three are matrices; video and
/// audio share the clip count.
#[derive(Debug, Clone, Copy)]
pub struct ModelInput<'a> {
    pub video: &'a Tensor,
    pub audio: &'a Tensor,
    pub query: &'a Tensor,
}

/// Graph handles for one forward pass.
#[derive(Debug, Clone, Copy)]
pub struct ForwardOutput {
    /// `[T]` saliency logits.
    pub saliency: Var,
    /// `[Nq]` normalized centers.
    pub centers: Var,
    /// `[Nq]` normalized widths.
    pub widths: Var,
    /// `[Nq]` confidence logits.
    pub confidence_logits: Var,
}

#[derive(Debug, Clone)]
pub struct Model {
    pub config: ModelConfig,
    video_in: InputProjection,
    audio_in: InputProjection,
    text_in: InputProjection,
    video_encoders: Vec<EncoderLayer>,
    audio_encoders: Vec<EncoderLayer>,
    text_encoders: Vec<EncoderLayer>,
    cross_modal: Vec<CrossModalLayer>,
    decoders: Vec<DecoderLayer>,
    text_probe: ParamId,
    query_seeds: ParamId,
    fused_norm: LayerNorm,
    decoder_norm: LayerNorm,
    saliency_clip: Linear,
    saliency_text: Linear,
    moment_head: Linear,
}

impl Model {
    /// Build a model and its freshly initialized parameters.
    pub fn new(config: ModelConfig, rng: &mut DetRng) -> Result<(Self, ParamStore)> {
        config.validate()?;
        let mut store = ParamStore::new();
        let s = &mut store;
        let d = config.d_model;
        let att = config.attention();
        let stack = |s: &mut ParamStore, name: &str, n: usize, rng: &mut DetRng| {
            (0..n)
                .map(|i| EncoderLayer::new(s, &format!("{name}.{i}"), &att, rng))
                .collect::<Result<Vec<_>>>()
        };
        let video_in = InputProjection::new(s, "video_in", config.d_video, d, config.pre_dropout_visual_audio, rng)?;
        let audio_in = InputProjection::new(s, "audio_in", config.d_audio, d, config.pre_dropout_visual_audio, rng)?;
        let text_in = InputProjection::new(s, "text_in", config.d_text, d, config.pre_dropout_text, rng)?;
        let n_enc = config.encoder_layers_per_modality;
        let video_encoders = stack(s, "video_enc", n_enc, rng)?;
        let audio_encoders = stack(s, "audio_enc", n_enc, rng)?;
        let text_encoders = stack(s, "text_enc", n_enc, rng)?;
        let cross_modal = (0..config.cross_modal_layers)
            .map(|i| CrossModalLayer::new(s, &format!("cross_modal.{i}"), &att, rng))
            .collect::<Result<Vec<_>>>()?;
        let decoders = (0..config.decoder_layers)
            .map(|i| DecoderLayer::new(s, &format!("decoder.{i}"), &att, rng))
            .collect::<Result<Vec<_>>>()?;
        let text_probe = s.normal("text_probe", &[1, d], 1.0, rng);
        let query_seeds = s.normal("query_seeds", &[config.num_queries, d], 1.0, rng);
        let fused_norm = LayerNorm::new(s, "fused_norm", d);
        let decoder_norm = LayerNorm::new(s, "decoder_norm", d);
        let saliency_clip = Linear::new(s, "saliency_clip", d, d, rng);
        let saliency_text = Linear::new(s, "saliency_text", d, d, rng);
        let moment_head = Linear::new(s, "moment_head", d, 3, rng);
        let model = Self {
            config,
            video_in,
            audio_in,
            text_in,
            video_encoders,
            audio_encoders,
            text_encoders,
            cross_modal,
            decoders,
            text_probe,
            query_seeds,
            fused_norm,
            decoder_norm,
            saliency_clip,
            saliency_text,
            moment_head,
        };
        Ok((model, store))
    }

    fn check_input(&self, input: &ModelInput<'_>) -> Result<usize> {
        let dims = |t: &Tensor, what: &str| match t.shape() {
            [r, c] => Ok((*r, *c)),
            s => Err(Error::Dimension(format!("{what} features must be a matrix, got {s:?}"))),
        };
        let (tv, dv) = dims(input.video, "video")?;
        let (ta, da) = dims(input.audio, "audio")?;
        let (_, dt) = dims(input.query, "query")?;
        if tv != ta {
            return Err(Error::Sync(format!(
                "video has {tv} clips but audio has {ta}"
            )));
        }
        if (dv, da, dt) != (self.config.d_video, self.config.d_audio, self.config.d_text) {
            return Err(Error::Compatibility(format!(
                "feature widths (video {dv}, audio {da}, text {dt}) do not match model ({}, {}, {})",
                self.config.d_video, self.config.d_audio, self.config.d_text
            )));
        }
        Ok(tv)
    }

    pub fn forward(&self, g: &mut Graph<'_>, input: &ModelInput<'_>, mode: &mut Mode<'_>) -> Result<ForwardOutput> {
        let clips = self.check_input(input)?;
        let d = self.config.d_model;
        let scale = 1.0 / (d as f64).sqrt();
        let pos = g.constant(clip_encoding(clips, &self.config.pos_encoding())?)?;

        let video = g.constant(input.video.clone())?;
        let audio = g.constant(input.audio.clone())?;
        let query = g.constant(input.query.clone())?;

        let mut v = self.video_in.forward(g, video, mode)?;
        v = g.add(v, pos)?;
        for layer in &self.video_encoders {
            v = layer.forward(g, v, mode)?;
        }
        let mut a = self.audio_in.forward(g, audio, mode)?;
        a = g.add(a, pos)?;
        for layer in &self.audio_encoders {
            a = layer.forward(g, a, mode)?;
        }
        let mut t = self.text_in.forward(g, query, mode)?;
        for layer in &self.text_encoders {
            t = layer.forward(g, t, mode)?;
        }

        // stacked cross-modal layers keep both streams; the last one fuses
        let mut fused = v;
        let n_cross = self.cross_modal.len();
        for (i, layer) in self.cross_modal.iter().enumerate() {
            if i + 1 == n_cross {
                fused = layer.forward(g, v, a, mode)?;
            } else {
                let nv = layer.video_from_audio.forward(g, v, a, mode)?;
                let na = layer.audio_from_video.forward(g, a, v, mode)?;
                v = nv;
                a = na;
            }
        }
        let fused = self.fused_norm.forward(g, fused)?;

        // attention pooling of the query tokens with a learned probe
        let probe = self.text_probe.var(g);
        let logits = g.matmul_nt(probe, t)?;
        let logits = g.scale(logits, scale)?;
        let w = g.softmax(logits, 1)?;
        let pooled = g.matmul(w, t)?;

        let seeds = self.query_seeds.var(g);
        let mut q = g.add_row(seeds, pooled)?;
        for layer in &self.decoders {
            q = layer.forward(g, q, fused, mode)?;
        }
        let q = self.decoder_norm.forward(g, q)?;

        let clip_keys = self.saliency_clip.forward(g, fused)?;
        let text_key = self.saliency_text.forward(g, pooled)?;
        let sal = g.matmul_nt(clip_keys, text_key)?;
        let sal = g.scale(sal, scale)?;
        let saliency = g.reshape(sal, vec![clips])?;

        let nq = self.config.num_queries;
        let head = self.moment_head.forward(g, q)?;
        let column = |g: &mut Graph<'_>, c: usize| -> Result<Var> {
            let s = g.slice(head, 1, c, 1)?;
            g.reshape(s, vec![nq])
        };
        let c_raw = column(g, 0)?;
        let w_raw = column(g, 1)?;
        let confidence_logits = column(g, 2)?;
        let centers = g.sigmoid(c_raw)?;
        let w_sig = g.sigmoid(w_raw)?;
        let w_scaled = g.scale(w_sig, 1.0 - WIDTH_FLOOR)?;
        let widths = g.add_scalar(w_scaled, WIDTH_FLOOR)?;
        Ok(ForwardOutput {
            saliency,
            centers,
            widths,
            confidence_logits,
        })
    }

    /// Evaluation-mode prediction.
    pub fn predict(&self, params: &ParamStore, input: &ModelInput<'_>) -> Result<(SaliencyScores, Vec<MomentPrediction>)> {
        let mut g = Graph::new(params.tensors());
        let out = self.forward(&mut g, input, &mut Mode::eval())?;
        Ok(read_predictions(&g, &out))
    }
}

pub fn read_predictions(g: &Graph<'_>, out: &ForwardOutput) -> (SaliencyScores, Vec<MomentPrediction>) {
    let saliency = SaliencyScores(g.value(out.saliency).data().to_vec());
    let moments = g
        .value(out.centers)
        .data()
        .iter()
        .zip(g.value(out.widths).data())
        .zip(g.value(out.confidence_logits).data())
        .map(|((&center, &width), &logit)| MomentPrediction {
            center,
            width,
            confidence: sigmoid(logit),
        })
        .collect();
    (saliency, moments)
}

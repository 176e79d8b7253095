use serde::{Deserialize, Serialize};

use crate::attention::AttentionConfig;
use crate::embeddings::PosEncodingConfig;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    /// Raw visual feature width.
    pub d_video: usize,
    /// Raw audio feature width.
    pub d_audio: usize,
    /// Raw query token feature width.
    pub d_text: usize,
    pub d_model: usize,
    pub num_heads: usize,
    pub dropout: f64,
    pub pre_dropout_visual_audio: f64,
    pub pre_dropout_text: f64,
    pub encoder_layers_per_modality: usize,
    pub cross_modal_layers: usize,
    pub decoder_layers: usize,
    pub num_queries: usize,
    pub memory_slots: usize,
    /// Longest clip sequence the positional grid is sized for.
    pub max_clips: usize,
    pub pos_temperature: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            d_video: 32,
            d_audio: 16,
            d_text: 24,
            d_model: 256,
            num_heads: 8,
            dropout: 0.1,
            pre_dropout_visual_audio: 0.5,
            pre_dropout_text: 0.3,
            encoder_layers_per_modality: 1,
            cross_modal_layers: 1,
            decoder_layers: 1,
            num_queries: 10,
            memory_slots: 16,
            max_clips: 128,
            pos_temperature: 10_000.0,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        let rates = [
            ("dropout", self.dropout),
            ("pre_dropout_visual_audio", self.pre_dropout_visual_audio),
            ("pre_dropout_text", self.pre_dropout_text),
        ];
        for (name, r) in rates {
            if !(0.0..1.0).contains(&r) {
                return Err(Error::Config(format!("{name} must be in [0, 1), got {r}")));
            }
        }
        let counts = [
            ("d_video", self.d_video),
            ("d_audio", self.d_audio),
            ("d_text", self.d_text),
            ("encoder_layers_per_modality", self.encoder_layers_per_modality),
            ("cross_modal_layers", self.cross_modal_layers),
            ("decoder_layers", self.decoder_layers),
            ("num_queries", self.num_queries),
            ("max_clips", self.max_clips),
        ];
        for (name, c) in counts {
            if c == 0 {
                return Err(Error::Config(format!("{name} must be >= 1")));
            }
        }
        self.attention().validate()?;
        self.pos_encoding().validate()
    }

    pub fn attention(&self) -> AttentionConfig {
        AttentionConfig {
            d_model: self.d_model,
            num_heads: self.num_heads,
            memory_slots: self.memory_slots,
            dropout: self.dropout,
        }
    }

    pub fn pos_encoding(&self) -> PosEncodingConfig {
        PosEncodingConfig {
            temperature: self.pos_temperature,
            ..PosEncodingConfig::for_max_len(self.d_model, self.max_clips)
        }
    }
}

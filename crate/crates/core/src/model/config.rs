use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Hyperparameters of one encoder instance.
///
/// `head_dim` and `layer_heads` are only present after structured head pruning;
/// otherwise every layer has `n_heads` heads of width `d_model / n_heads`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub vocab_size: usize,
    pub max_seq_len: usize,
    pub d_model: usize,
    pub n_heads: usize,
    pub d_ff: usize,
    pub n_layers: usize,
    #[serde(default)]
    pub use_bias: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub head_dim: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub layer_heads: Option<Vec<usize>>,
}

impl ModelConfig {
    pub fn new(
        vocab_size: usize,
        max_seq_len: usize,
        d_model: usize,
        n_heads: usize,
        d_ff: usize,
        n_layers: usize,
    ) -> Self {
        Self {
            vocab_size,
            max_seq_len,
            d_model,
            n_heads,
            d_ff,
            n_layers,
            use_bias: false,
            head_dim: None,
            layer_heads: None,
        }
    }

    pub fn with_bias(mut self, use_bias: bool) -> Self {
        self.use_bias = use_bias;
        self
    }

    /// Reconstructed full-size model: 140,288 parameters.
    pub fn paper_baseline() -> Self {
        Self::new(3990, 10, 32, 8, 128, 1)
    }

    /// Halved embedding width, FFN width and head count: 67,072 parameters.
    pub fn paper_reduced() -> Self {
        Self::new(3990, 10, 16, 4, 64, 1)
    }

    /// Small enough to finite-difference every parameter.
    pub fn tiny() -> Self {
        Self::new(11, 4, 4, 2, 8, 1)
    }

    /// Baseline widths with a 16-token vocabulary; used for copy-task training.
    pub fn small() -> Self {
        Self::new(16, 10, 32, 8, 128, 1)
    }

    pub fn preset(name: &str) -> Option<Self> {
        match name {
            "paper-baseline" => Some(Self::paper_baseline()),
            "paper-reduced" => Some(Self::paper_reduced()),
            "tiny" => Some(Self::tiny()),
            "small" => Some(Self::small()),
            _ => None,
        }
    }

    pub const PRESETS: [&'static str; 4] = ["paper-baseline", "paper-reduced", "tiny", "small"];

    pub fn validate(&self) -> Result<()> {
        for (key, v) in [
            ("vocab_size", self.vocab_size),
            ("max_seq_len", self.max_seq_len),
            ("d_model", self.d_model),
            ("n_heads", self.n_heads),
            ("d_ff", self.d_ff),
        ] {
            if v == 0 {
                return Err(Error::Config(format!("{key} must be at least 1")));
            }
        }
        match self.head_dim {
            None => {
                if self.d_model % self.n_heads != 0 {
                    return Err(Error::Config(format!(
                        "n_heads ({}) must divide d_model ({})",
                        self.n_heads, self.d_model
                    )));
                }
                if self.layer_heads.is_some() {
                    return Err(Error::Config(
                        "layer_heads requires head_dim to be set".into(),
                    ));
                }
            }
            Some(0) => return Err(Error::Config("head_dim must be at least 1".into())),
            Some(_) => {
                if let Some(lh) = &self.layer_heads {
                    if lh.len() != self.n_layers {
                        return Err(Error::Config(format!(
                            "layer_heads has {} entries for {} layers",
                            lh.len(),
                            self.n_layers
                        )));
                    }
                    if lh.iter().any(|&h| h == 0) {
                        return Err(Error::Config("layer_heads entries must be at least 1".into()));
                    }
                }
            }
        }
        Ok(())
    }

    /// Width of one attention head.
    pub fn head_width(&self) -> usize {
        self.head_dim.unwrap_or(self.d_model / self.n_heads)
    }

    pub fn heads_in_layer(&self, layer: usize) -> usize {
        match &self.layer_heads {
            Some(lh) => lh[layer],
            None => self.n_heads,
        }
    }

    /// Column count of Q, K, V in `layer` (equals `d_model` unless heads were pruned).
    pub fn attn_width(&self, layer: usize) -> usize {
        self.heads_in_layer(layer) * self.head_width()
    }

    /// True when all layers use the default `n_heads × d_model/n_heads` layout.
    pub fn is_unpruned(&self) -> bool {
        self.head_dim.is_none() && self.layer_heads.is_none()
    }

    /// Drops the pruning overrides when they coincide with the default layout.
    pub(crate) fn normalize(mut self) -> Self {
        if let Some(lh) = &self.layer_heads {
            if lh.iter().all(|&h| h == self.n_heads) {
                self.layer_heads = None;
            }
        }
        if self.layer_heads.is_none() {
            if let Some(hd) = self.head_dim {
                if hd * self.n_heads == self.d_model {
                    self.head_dim = None;
                }
            }
        }
        self
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_are_valid() {
        for name in ModelConfig::PRESETS {
            ModelConfig::preset(name).unwrap().validate().unwrap();
        }
        assert!(ModelConfig::preset("gpt-5").is_none());
    }

    #[test]
    fn heads_must_divide_width() {
        let cfg = ModelConfig::new(10, 4, 6, 4, 8, 1);
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn zero_layers_allowed_zero_width_not() {
        ModelConfig::new(1, 1, 1, 1, 1, 0).validate().unwrap();
        let err = ModelConfig::new(1, 1, 0, 1, 1, 0).validate().unwrap_err();
        assert!(err.to_string().contains("d_model"));
    }

    #[test]
    fn json_rejects_unknown_keys() {
        let s = r#"{"vocab_size":1,"max_seq_len":1,"d_model":1,"n_heads":1,"d_ff":1,"n_layers":0,"use_bias":false,"dropout":0.1}"#;
        let err = serde_json::from_str::<ModelConfig>(s).unwrap_err();
        assert!(err.to_string().contains("dropout"));
    }

    #[test]
    fn normalize_clears_trivial_overrides() {
        let mut cfg = ModelConfig::paper_baseline();
        cfg.head_dim = Some(4);
        cfg.layer_heads = Some(vec![8]);
        assert!(cfg.normalize().is_unpruned());
    }
}

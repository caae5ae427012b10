//! Size-reduction passes: config-level width halving, magnitude pruning,
//! attention-head pruning, layer pruning and symmetric int8 quantization.

mod prune;
mod quantize;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::ModelConfig;

pub use prune::{head_importance, prune_heads, prune_layers, prune_magnitude};
pub use quantize::{
    dequantize, quantize_params, quantize_tensor, quantized_memory_bytes, QuantizedModel,
    QuantizedTensor,
};

/// Outcome of one compression pass.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompressionReport {
    pub pass: String,
    pub params_before: usize,
    pub params_after: usize,
    pub bytes_before: usize,
    pub bytes_after: usize,
    /// Fraction of stored values that are exactly zero after the pass.
    pub sparsity: f64,
    /// Largest absolute change of any surviving value.
    pub max_error: f64,
}

impl CompressionReport {
    pub fn render(&self) -> String {
        let pct = |a: usize, b: usize| {
            if b == 0 {
                0.0
            } else {
                (1.0 - a as f64 / b as f64) * 100.0
            }
        };
        format!(
            "pass        {}\nparameters  {} -> {} ({:.2}% smaller)\nbytes       {} -> {} ({:.2}% smaller)\nsparsity    {:.6}\nmax error   {:.6e}",
            self.pass,
            self.params_before,
            self.params_after,
            pct(self.params_after, self.params_before),
            self.bytes_before,
            self.bytes_after,
            pct(self.bytes_after, self.bytes_before),
            self.sparsity,
            self.max_error
        )
    }
}

/// Divides embedding width, head count and FFN width by `factor`.
/// The result describes a freshly initialised model, not a projection of existing weights.
pub fn reduce_config(cfg: &ModelConfig, factor: usize) -> Result<ModelConfig> {
    cfg.validate()?;
    if factor == 0 {
        return Err(Error::InvalidArgument("reduction factor must be at least 1".into()));
    }
    if !cfg.is_unpruned() {
        return Err(Error::Config(
            "width reduction applies to configs without pruned heads".into(),
        ));
    }
    for (key, v) in [
        ("d_model", cfg.d_model),
        ("n_heads", cfg.n_heads),
        ("d_ff", cfg.d_ff),
    ] {
        if v % factor != 0 {
            return Err(Error::Config(format!(
                "{key} = {v} is not divisible by factor {factor}"
            )));
        }
    }
    let out = ModelConfig {
        d_model: cfg.d_model / factor,
        n_heads: cfg.n_heads / factor,
        d_ff: cfg.d_ff / factor,
        ..cfg.clone()
    };
    out.validate()?;
    Ok(out)
}

use serde::Serialize;

use crate::compression::reduce_config;
use crate::error::{Error, Result};
use crate::model::{param_count, ModelConfig};

/// Finite grid for [`config_search`].
#[derive(Debug, Clone)]
pub struct SearchBounds {
    /// Inclusive range of `vocab_size + max_seq_len`.
    pub vocab_plus_seq: (usize, usize),
    /// Sequence length used to split `V + S`.
    pub max_seq_len: usize,
    /// Largest power-of-two `d_model` tried.
    pub max_d_model: usize,
    pub max_layers: usize,
    /// `d_ff` candidates as multiples of `d_model`.
    pub ffn_multipliers: Vec<usize>,
    pub try_bias: bool,
}

impl Default for SearchBounds {
    fn default() -> Self {
        Self {
            vocab_plus_seq: (2, 20_000),
            max_seq_len: 10,
            max_d_model: 512,
            max_layers: 4,
            ffn_multipliers: vec![1, 2, 4],
            try_bias: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConfigPair {
    pub base: ModelConfig,
    pub variant: ModelConfig,
    pub base_params: usize,
    pub variant_params: usize,
}

/// Every `(cfg, reduce_config(cfg, 2))` on the grid whose parameter counts hit
/// both targets. Head counts range over the powers of two from 2 to `d_model`
/// since they do not change the count.
pub fn config_search(
    target_base: usize,
    target_variant: usize,
    bounds: &SearchBounds,
) -> Result<Vec<ConfigPair>> {
    let (lo, hi) = bounds.vocab_plus_seq;
    if lo > hi
        || bounds.max_d_model == 0
        || bounds.ffn_multipliers.is_empty()
        || bounds.max_seq_len == 0
    {
        return Err(Error::InvalidArgument(format!("empty search bounds: {bounds:?}")));
    }
    let seq = bounds.max_seq_len;
    let lo = lo.max(seq + 1);
    let widths: Vec<usize> = (0..)
        .map(|k| 1usize << k)
        .take_while(|&d| d <= bounds.max_d_model)
        .collect();
    let biases: &[bool] = if bounds.try_bias { &[false, true] } else { &[false] };

    let mut out = Vec::new();
    for &d in &widths {
        for layers in 0..=bounds.max_layers {
            // FFN width and biases only exist inside layers
            let mults: &[usize] = if layers == 0 { &[1] } else { &bounds.ffn_multipliers };
            let bias_opts: &[bool] = if layers == 0 { &[false] } else { biases };
            for &mult in mults {
                for &bias in bias_opts {
                    for vs in lo..=hi {
                        let cfg =
                            ModelConfig::new(vs - seq, seq, d, 1, mult * d, layers).with_bias(bias);
                        if param_count(&cfg) != target_base {
                            continue;
                        }
                        let mut heads = 2;
                        while heads <= d {
                            let base = ModelConfig {
                                n_heads: heads,
                                ..cfg.clone()
                            };
                            if let Ok(variant) = reduce_config(&base, 2) {
                                let vp = param_count(&variant);
                                if vp == target_variant {
                                    out.push(ConfigPair {
                                        base_params: param_count(&base),
                                        variant_params: vp,
                                        base,
                                        variant,
                                    });
                                }
                            }
                            heads *= 2;
                        }
                    }
                }
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn paper_targets_include_reconstruction() {
        let pairs = config_search(140_288, 67_072, &SearchBounds::default()).unwrap();
        assert!(pairs
            .iter()
            .any(|p| p.base == ModelConfig::paper_baseline()
                && p.variant == ModelConfig::paper_reduced()));
        for p in &pairs {
            assert_eq!(param_count(&p.base), 140_288);
            assert_eq!(param_count(&p.variant), 67_072);
        }
    }

    #[test]
    fn indivisible_width_is_excluded() {
        let bounds = SearchBounds {
            max_seq_len: 1,
            ..SearchBounds::default()
        };
        // V=1, S=1, d=1, L=0 has 2 parameters but cannot be halved
        assert!(config_search(2, 1, &bounds).unwrap().is_empty());
        assert!(config_search(3, 5, &bounds).unwrap().is_empty());
    }

    #[test]
    fn empty_bounds_error() {
        let bounds = SearchBounds {
            vocab_plus_seq: (10, 5),
            ..SearchBounds::default()
        };
        assert!(config_search(1, 1, &bounds).is_err());
    }
}

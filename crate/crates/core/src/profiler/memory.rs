use crate::error::{Error, Result};
use crate::model::{param_count, ModelConfig};
use crate::scalar::Scalar;

/// Parameter memory at 8 bytes per value.
pub fn memory_bytes(cfg: &ModelConfig) -> usize {
    memory_bytes_for::<f64>(cfg)
}

pub fn memory_bytes_for<T: Scalar>(cfg: &ModelConfig) -> usize {
    T::BYTES * param_count(cfg)
}

/// Working memory of one forward pass over `batch` sequences of length `seq`
/// at 8 bytes per value.
///
/// Per sequence: the embedded input (n·d); per layer Q, K, V (3·n·a), the attention
/// weights (H·n²), the attention output, FFN hidden and FFN output (n·d + n·f + n·d);
/// and the logits (n·V). `a` is the attention width, `d` for unpruned layers.
pub fn activation_bytes(cfg: &ModelConfig, batch: usize, seq: usize) -> Result<usize> {
    activation_bytes_for::<f64>(cfg, batch, seq)
}

pub fn activation_bytes_for<T: Scalar>(cfg: &ModelConfig, batch: usize, seq: usize) -> Result<usize> {
    cfg.validate()?;
    if seq > cfg.max_seq_len {
        return Err(Error::Index {
            what: "sequence length",
            index: seq,
            limit: cfg.max_seq_len,
        });
    }
    let (n, d, f) = (seq, cfg.d_model, cfg.d_ff);
    let mut per_seq = n * d + n * cfg.vocab_size;
    for l in 0..cfg.n_layers {
        per_seq += 3 * n * cfg.attn_width(l) + cfg.heads_in_layer(l) * n * n + n * d + n * f + n * d;
    }
    Ok(T::BYTES * batch * per_seq)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{init_params, model_forward, synth_copy_batch};

    #[test]
    fn table_two_bytes() {
        assert_eq!(memory_bytes(&ModelConfig::paper_baseline()), 1_122_304);
        assert_eq!(memory_bytes(&ModelConfig::paper_reduced()), 536_576);
        assert_eq!(memory_bytes(&ModelConfig::new(1, 1, 1, 1, 1, 0)), 16);
        assert_eq!(memory_bytes_for::<f32>(&ModelConfig::paper_reduced()), 268_288);
    }

    #[test]
    fn activation_formula_matches_trace() {
        let cfg = ModelConfig::paper_baseline();
        let p = init_params::<f64>(&cfg, 0).unwrap();
        let data = synth_copy_batch(1, 1, 10, cfg.vocab_size).unwrap();
        let traces = model_forward(&p, &cfg, &data.inputs).unwrap();
        let elems: usize = traces.iter().map(|t| t.activation_elements()).sum();
        assert_eq!(activation_bytes(&cfg, 1, 10).unwrap(), 8 * elems);
    }

    #[test]
    fn activation_edge_cases() {
        let cfg = ModelConfig::new(50, 6, 4, 2, 8, 0);
        assert_eq!(activation_bytes(&cfg, 1, 5).unwrap(), 8 * (5 * 4 + 5 * 50));
        let big = ModelConfig::paper_reduced();
        assert_eq!(
            activation_bytes(&big, 8, 10).unwrap(),
            2 * activation_bytes(&big, 4, 10).unwrap()
        );
        assert!(activation_bytes(&big, 1, 11).is_err());
    }
}

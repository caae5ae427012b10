use std::collections::BTreeSet;

use crate::error::{Error, Result};
use crate::model::{param_count, param_count_enumerated, ModelConfig, ParamSet};
use crate::numerics::Matrix;
use crate::scalar::Scalar;

use super::CompressionReport;

fn zero_fraction<T: Scalar>(p: &ParamSet<T>) -> f64 {
    let total = param_count_enumerated(p);
    if total == 0 {
        return 0.0;
    }
    let zeros: usize = p
        .tensors()
        .iter()
        .map(|(_, m)| m.as_slice().iter().filter(|x| x.is_zero()).count())
        .sum();
    zeros as f64 / total as f64
}

/// Zeroes every stored value (embeddings and biases included) with `|w| < threshold`.
pub fn prune_magnitude<T: Scalar>(
    p: &ParamSet<T>,
    threshold: f64,
) -> Result<(ParamSet<T>, CompressionReport)> {
    if !(threshold >= 0.0) {
        return Err(Error::InvalidArgument(format!(
            "threshold must be non-negative, got {threshold}"
        )));
    }
    let mut out = p.clone();
    let mut max_error = 0.0f64;
    for m in out.tensors_mut() {
        for x in m.as_mut_slice() {
            if x.abs().to_f64() < threshold {
                max_error = max_error.max(x.abs().to_f64());
                *x = T::zero();
            }
        }
    }
    let n = param_count_enumerated(p);
    let report = CompressionReport {
        pass: "prune-magnitude".into(),
        params_before: n,
        params_after: n,
        bytes_before: n * T::BYTES,
        bytes_after: n * T::BYTES,
        sparsity: zero_fraction(&out),
        max_error,
    };
    Ok((out, report))
}

fn check_layer(cfg: &ModelConfig, layer: usize) -> Result<()> {
    if layer >= cfg.n_layers {
        return Err(Error::Index {
            what: "layer",
            index: layer,
            limit: cfg.n_layers,
        });
    }
    Ok(())
}

/// Frobenius norm of each head's row block of the output projection.
pub fn head_importance<T: Scalar>(
    p: &ParamSet<T>,
    cfg: &ModelConfig,
    layer: usize,
) -> Result<Vec<f64>> {
    check_layer(cfg, layer)?;
    let wo = &p.layers[layer].wo;
    let dh = cfg.head_width();
    let heads = cfg.heads_in_layer(layer);
    if wo.rows() != heads * dh {
        return Err(Error::Shape {
            op: "head_importance",
            left: (heads * dh, cfg.d_model),
            right: wo.shape(),
        });
    }
    Ok((0..heads)
        .map(|h| wo.row_block(h * dh, dh).frobenius_norm().to_f64())
        .collect())
}

fn keep_cols<T: Scalar>(m: &Matrix<T>, heads: &[usize], dh: usize) -> Matrix<T> {
    let mut out = Matrix::zeros(m.rows(), heads.len() * dh);
    for (slot, &h) in heads.iter().enumerate() {
        out.set_col_block(slot * dh, &m.col_block(h * dh, dh));
    }
    out
}

fn keep_rows<T: Scalar>(m: &Matrix<T>, heads: &[usize], dh: usize) -> Matrix<T> {
    let mut data = Vec::with_capacity(heads.len() * dh * m.cols());
    for &h in heads {
        data.extend_from_slice(m.row_block(h * dh, dh).as_slice());
    }
    Matrix::from_vec(heads.len() * dh, m.cols(), data).expect("row blocks have full width")
}

/// Structurally removes every head of `layer` not listed in `keep`.
///
/// Q/K/V lose the matching column blocks (and bias entries), Wo loses the matching
/// row blocks; the model's input and output widths do not change.
pub fn prune_heads<T: Scalar>(
    p: &ParamSet<T>,
    cfg: &ModelConfig,
    layer: usize,
    keep: &[usize],
) -> Result<(ParamSet<T>, ModelConfig, CompressionReport)> {
    cfg.validate()?;
    check_layer(cfg, layer)?;
    if keep.is_empty() {
        return Err(Error::InvalidArgument("must keep at least one head".into()));
    }
    let heads = cfg.heads_in_layer(layer);
    let kept: Vec<usize> = keep.iter().copied().collect::<BTreeSet<_>>().into_iter().collect();
    if let Some(&bad) = kept.iter().find(|&&h| h >= heads) {
        return Err(Error::Index {
            what: "head",
            index: bad,
            limit: heads,
        });
    }
    let dh = cfg.head_width();

    let mut out = p.clone();
    let lp = &mut out.layers[layer];
    lp.wq = keep_cols(&lp.wq, &kept, dh);
    lp.wk = keep_cols(&lp.wk, &kept, dh);
    lp.wv = keep_cols(&lp.wv, &kept, dh);
    for b in [&mut lp.bq, &mut lp.bk, &mut lp.bv].into_iter().flatten() {
        *b = keep_cols(b, &kept, dh);
    }
    lp.wo = keep_rows(&lp.wo, &kept, dh);

    let mut per_layer: Vec<usize> = (0..cfg.n_layers).map(|l| cfg.heads_in_layer(l)).collect();
    per_layer[layer] = kept.len();
    let new_cfg = ModelConfig {
        n_heads: kept.len(),
        head_dim: Some(dh),
        layer_heads: Some(per_layer),
        ..cfg.clone()
    }
    .normalize();
    new_cfg.validate()?;

    let before = param_count(cfg);
    let after = param_count(&new_cfg);
    debug_assert_eq!(after, param_count_enumerated(&out));
    let report = CompressionReport {
        pass: format!("prune-heads(layer {layer}, keep {kept:?})"),
        params_before: before,
        params_after: after,
        bytes_before: before * T::BYTES,
        bytes_after: after * T::BYTES,
        sparsity: zero_fraction(&out),
        max_error: 0.0,
    };
    Ok((out, new_cfg, report))
}

/// Keeps only `keep_layers` (strictly increasing), re-indexed in order.
pub fn prune_layers<T: Scalar>(
    p: &ParamSet<T>,
    cfg: &ModelConfig,
    keep_layers: &[usize],
) -> Result<(ParamSet<T>, ModelConfig, CompressionReport)> {
    cfg.validate()?;
    for (i, &l) in keep_layers.iter().enumerate() {
        check_layer(cfg, l)?;
        if i > 0 && keep_layers[i - 1] >= l {
            return Err(Error::InvalidArgument(format!(
                "layers to keep must be strictly increasing, got {keep_layers:?}"
            )));
        }
    }
    let mut out = p.clone();
    out.layers = keep_layers.iter().map(|&l| p.layers[l].clone()).collect();
    let new_cfg = ModelConfig {
        n_layers: keep_layers.len(),
        layer_heads: cfg
            .layer_heads
            .as_ref()
            .map(|lh| keep_layers.iter().map(|&l| lh[l]).collect()),
        ..cfg.clone()
    }
    .normalize();
    new_cfg.validate()?;

    let before = param_count(cfg);
    let after = param_count(&new_cfg);
    let report = CompressionReport {
        pass: format!("prune-layers(keep {keep_layers:?})"),
        params_before: before,
        params_after: after,
        bytes_before: before * T::BYTES,
        bytes_after: after * T::BYTES,
        sparsity: zero_fraction(&out),
        max_error: 0.0,
    };
    Ok((out, new_cfg, report))
}

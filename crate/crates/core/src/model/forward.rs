use crate::error::{Error, Result};
use crate::numerics::{matmul, matmul_transpose_b, relu, softmax_rows, Matrix};
use crate::scalar::Scalar;

use super::config::ModelConfig;
use super::params::ParamSet;

/// Intermediates of one attention block.
#[derive(Debug, Clone)]
pub struct AttentionTrace<T> {
    pub q: Matrix<T>,
    pub k: Matrix<T>,
    pub v: Matrix<T>,
    /// One `n×n` row-stochastic matrix per head.
    pub weights: Vec<Matrix<T>>,
    /// Heads concatenated, before the output projection.
    pub context: Matrix<T>,
}

#[derive(Debug, Clone)]
pub struct LayerTrace<T> {
    pub attn: AttentionTrace<T>,
    /// Attention block output (after `wo`).
    pub attn_out: Matrix<T>,
    /// FFN pre-activation.
    pub ffn_hidden: Matrix<T>,
    pub ffn_out: Matrix<T>,
}

/// Everything computed for one sequence.
#[derive(Debug, Clone)]
pub struct ForwardTrace<T> {
    pub embedded: Matrix<T>,
    pub layers: Vec<LayerTrace<T>>,
    pub logits: Matrix<T>,
}

impl<T: Scalar> ForwardTrace<T> {
    /// Elements of the activations counted as working memory: embedded input,
    /// per layer Q, K, V, attention weights, attention output, FFN hidden, FFN output,
    /// then the logits. `context` is a view-sized scratch value and is excluded.
    pub fn activation_elements(&self) -> usize {
        let mut n = self.embedded.len() + self.logits.len();
        for l in &self.layers {
            n += l.attn.q.len() + l.attn.k.len() + l.attn.v.len();
            n += l.attn.weights.iter().map(Matrix::len).sum::<usize>();
            n += l.attn_out.len() + l.ffn_hidden.len() + l.ffn_out.len();
        }
        n
    }
}

/// Token plus position embedding for one sequence.
pub fn embed<T: Scalar>(p: &ParamSet<T>, tokens: &[usize]) -> Result<Matrix<T>> {
    let vocab = p.tok_emb.rows();
    let max_len = p.pos_emb.rows();
    if tokens.is_empty() {
        return Err(Error::InvalidArgument("empty token sequence".into()));
    }
    if tokens.len() > max_len {
        return Err(Error::Index {
            what: "sequence position",
            index: tokens.len() - 1,
            limit: max_len,
        });
    }
    let d = p.tok_emb.cols();
    let mut out = Matrix::zeros(tokens.len(), d);
    for (i, &t) in tokens.iter().enumerate() {
        if t >= vocab {
            return Err(Error::Index {
                what: "token id",
                index: t,
                limit: vocab,
            });
        }
        let (tok, pos) = (p.tok_emb.row(t), p.pos_emb.row(i));
        for ((o, &a), &b) in out.row_mut(i).iter_mut().zip(tok).zip(pos) {
            *o = a + b;
        }
    }
    Ok(out)
}

fn with_bias<T: Scalar>(mut m: Matrix<T>, b: &Option<Matrix<T>>) -> Result<Matrix<T>> {
    if let Some(b) = b {
        m.add_row_vector(b.as_slice())?;
    }
    Ok(m)
}

fn layer_ref<T>(p: &ParamSet<T>, layer: usize) -> Result<&super::params::LayerParams<T>> {
    p.layers.get(layer).ok_or(Error::Index {
        what: "layer",
        index: layer,
        limit: p.layers.len(),
    })
}

/// Multi-head self-attention over all positions (no mask).
pub fn attention_forward<T: Scalar>(
    p: &ParamSet<T>,
    layer: usize,
    x: &Matrix<T>,
    heads: usize,
) -> Result<(Matrix<T>, AttentionTrace<T>)> {
    let lp = layer_ref(p, layer)?;
    let width = lp.wq.cols();
    if heads == 0 || width % heads != 0 {
        return Err(Error::InvalidArgument(format!(
            "{heads} heads do not divide attention width {width}"
        )));
    }
    let q = with_bias(matmul(x, &lp.wq)?, &lp.bq)?;
    let k = with_bias(matmul(x, &lp.wk)?, &lp.bk)?;
    let v = with_bias(matmul(x, &lp.wv)?, &lp.bv)?;
    let dh = width / heads;
    let scale = T::one() / T::from_usize(dh).sqrt();
    let mut context = Matrix::zeros(x.rows(), width);
    let mut weights = Vec::with_capacity(heads);
    for h in 0..heads {
        let qh = q.col_block(h * dh, dh);
        let kh = k.col_block(h * dh, dh);
        let vh = v.col_block(h * dh, dh);
        let a = softmax_rows(&matmul_transpose_b(&qh, &kh)?.scale(scale));
        context.set_col_block(h * dh, &matmul(&a, &vh)?);
        weights.push(a);
    }
    let out = with_bias(matmul(&context, &lp.wo)?, &lp.bo)?;
    Ok((
        out,
        AttentionTrace {
            q,
            k,
            v,
            weights,
            context,
        },
    ))
}

/// `relu(x·w1 + b1)·w2 + b2`; also returns the pre-activation.
pub fn ffn_forward_traced<T: Scalar>(
    p: &ParamSet<T>,
    layer: usize,
    x: &Matrix<T>,
) -> Result<(Matrix<T>, Matrix<T>)> {
    let lp = layer_ref(p, layer)?;
    let hidden = with_bias(matmul(x, &lp.w1)?, &lp.b1)?;
    let out = with_bias(matmul(&relu(&hidden), &lp.w2)?, &lp.b2)?;
    Ok((out, hidden))
}

pub fn ffn_forward<T: Scalar>(p: &ParamSet<T>, layer: usize, x: &Matrix<T>) -> Result<Matrix<T>> {
    ffn_forward_traced(p, layer, x).map(|(out, _)| out)
}

/// Runs one sequence through the stack: embed, then attention → FFN per layer
/// with no residuals or normalisation, then logits against the tied embedding.
pub fn forward_sequence<T: Scalar>(
    p: &ParamSet<T>,
    cfg: &ModelConfig,
    tokens: &[usize],
) -> Result<ForwardTrace<T>> {
    if p.layers.len() != cfg.n_layers {
        return Err(Error::Config(format!(
            "parameter set has {} layers, config says {}",
            p.layers.len(),
            cfg.n_layers
        )));
    }
    let embedded = embed(p, tokens)?;
    let mut x = embedded.clone();
    let mut layers = Vec::with_capacity(cfg.n_layers);
    for l in 0..cfg.n_layers {
        let (attn_out, attn) = attention_forward(p, l, &x, cfg.heads_in_layer(l))?;
        let (ffn_out, ffn_hidden) = ffn_forward_traced(p, l, &attn_out)?;
        x = ffn_out.clone();
        layers.push(LayerTrace {
            attn,
            attn_out,
            ffn_hidden,
            ffn_out,
        });
    }
    let logits = matmul_transpose_b(&x, &p.tok_emb)?;
    Ok(ForwardTrace {
        embedded,
        layers,
        logits,
    })
}

/// Forward pass over a batch; each trace carries that sequence's `n×V` logits.
pub fn model_forward<T: Scalar>(
    p: &ParamSet<T>,
    cfg: &ModelConfig,
    batch: &[Vec<usize>],
) -> Result<Vec<ForwardTrace<T>>> {
    if batch.is_empty() {
        return Err(Error::InvalidArgument("empty batch".into()));
    }
    batch.iter().map(|seq| forward_sequence(p, cfg, seq)).collect()
}

/// Logits only, for callers that do not need the trace.
pub fn model_logits<T: Scalar>(
    p: &ParamSet<T>,
    cfg: &ModelConfig,
    batch: &[Vec<usize>],
) -> Result<Vec<Matrix<T>>> {
    Ok(model_forward(p, cfg, batch)?
        .into_iter()
        .map(|t| t.logits)
        .collect())
}

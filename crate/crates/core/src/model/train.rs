//! Cross-entropy loss, backpropagation through the whole stack, and plain
//! gradient descent on the synthetic copy task.

use crate::error::{Error, Result};
use crate::numerics::{matmul, matmul_transpose_b, relu, Matrix, RngState};
use crate::scalar::Scalar;

use super::config::ModelConfig;
use super::forward::{forward_sequence, ForwardTrace};
use super::params::ParamSet;

/// Mean over positions of `-log softmax(row)[target]`.
pub fn cross_entropy<T: Scalar>(logits: &Matrix<T>, targets: &[usize]) -> Result<T> {
    if targets.len() != logits.rows() {
        return Err(Error::Shape {
            op: "cross_entropy",
            left: logits.shape(),
            right: (targets.len(), 1),
        });
    }
    let vocab = logits.cols();
    let mut total = T::zero();
    for (i, &t) in targets.iter().enumerate() {
        if t >= vocab {
            return Err(Error::Index {
                what: "target id",
                index: t,
                limit: vocab,
            });
        }
        let row = logits.row(i);
        let max = row.iter().fold(T::neg_infinity(), |a, &b| a.max(b));
        let sum = row.iter().fold(T::zero(), |s, &x| s + (x - max).exp());
        total += sum.ln() - (row[t] - max);
    }
    Ok(total / T::from_usize(targets.len()))
}

/// Batch loss: mean over sequences of the per-sequence mean cross-entropy.
pub fn batch_loss<T: Scalar>(
    p: &ParamSet<T>,
    cfg: &ModelConfig,
    batch: &[Vec<usize>],
    targets: &[Vec<usize>],
) -> Result<T> {
    check_batch(batch, targets)?;
    let mut total = T::zero();
    for (seq, tgt) in batch.iter().zip(targets) {
        let tr = forward_sequence(p, cfg, seq)?;
        total += cross_entropy(&tr.logits, tgt)?;
    }
    Ok(total / T::from_usize(batch.len()))
}

fn check_batch(batch: &[Vec<usize>], targets: &[Vec<usize>]) -> Result<()> {
    if batch.is_empty() {
        return Err(Error::InvalidArgument("empty batch".into()));
    }
    if batch.len() != targets.len() {
        return Err(Error::InvalidArgument(format!(
            "{} input sequences but {} target sequences",
            batch.len(),
            targets.len()
        )));
    }
    for (i, (s, t)) in batch.iter().zip(targets).enumerate() {
        if s.len() != t.len() {
            return Err(Error::InvalidArgument(format!(
                "sequence {i}: {} inputs but {} targets",
                s.len(),
                t.len()
            )));
        }
    }
    Ok(())
}

fn accumulate<T: Scalar>(acc: &mut Matrix<T>, delta: &Matrix<T>) {
    acc.add_assign(delta).expect("gradient shapes follow parameter shapes");
}

fn accumulate_bias<T: Scalar>(acc: &mut Option<Matrix<T>>, upstream: &Matrix<T>) {
    if let Some(b) = acc {
        for (x, s) in b.as_mut_slice().iter_mut().zip(upstream.column_sums()) {
            *x += s;
        }
    }
}

/// `∂L/∂X_in` of a row softmax given `∂L/∂A` and the softmax output `A`.
fn softmax_backward<T: Scalar>(a: &Matrix<T>, da: &Matrix<T>) -> Matrix<T> {
    let mut out = Matrix::zeros(a.rows(), a.cols());
    for i in 0..a.rows() {
        let (ar, dr) = (a.row(i), da.row(i));
        let dot = ar.iter().zip(dr).fold(T::zero(), |s, (&x, &g)| s + x * g);
        for ((o, &x), &g) in out.row_mut(i).iter_mut().zip(ar).zip(dr) {
            *o = x * (g - dot);
        }
    }
    out
}

/// Backpropagates one sequence, adding `weight × ∂loss_seq/∂θ` into `grad`.
fn backward_sequence<T: Scalar>(
    p: &ParamSet<T>,
    cfg: &ModelConfig,
    tokens: &[usize],
    targets: &[usize],
    trace: &ForwardTrace<T>,
    weight: T,
    grad: &mut ParamSet<T>,
) -> Result<()> {
    let n = tokens.len();
    let scale = weight / T::from_usize(n);

    // d loss / d logits = (softmax - onehot) / n
    let mut dlogits = trace.logits.clone();
    for (i, &t) in targets.iter().enumerate() {
        let row = dlogits.row_mut(i);
        crate::numerics::softmax_in_place(row);
        row[t] -= T::one();
        for x in row.iter_mut() {
            *x *= scale;
        }
    }

    let x_final = match trace.layers.last() {
        Some(l) => &l.ffn_out,
        None => &trace.embedded,
    };
    // logits = X · Eᵀ
    accumulate(&mut grad.tok_emb, &matmul(&dlogits.transpose(), x_final)?);
    let mut dx = matmul(&dlogits, &p.tok_emb)?;

    for l in (0..cfg.n_layers).rev() {
        let lp = &p.layers[l];
        let lt = &trace.layers[l];
        let g = &mut grad.layers[l];

        // FFN: out = relu(h)·W2 + b2, h = Y·W1 + b1
        let act = relu(&lt.ffn_hidden);
        accumulate(&mut g.w2, &matmul(&act.transpose(), &dx)?);
        accumulate_bias(&mut g.b2, &dx);
        let mut dh = matmul_transpose_b(&dx, &lp.w2)?;
        for (d, &h) in dh.as_mut_slice().iter_mut().zip(lt.ffn_hidden.as_slice()) {
            if h <= T::zero() {
                *d = T::zero();
            }
        }
        accumulate(&mut g.w1, &matmul(&lt.attn_out.transpose(), &dh)?);
        accumulate_bias(&mut g.b1, &dh);
        let dy = matmul_transpose_b(&dh, &lp.w1)?;

        // output projection: Y = C·Wo + bo
        let at = &lt.attn;
        accumulate(&mut g.wo, &matmul(&at.context.transpose(), &dy)?);
        accumulate_bias(&mut g.bo, &dy);
        let dctx = matmul_transpose_b(&dy, &lp.wo)?;

        let heads = at.weights.len();
        let width = at.q.cols();
        let dhw = width / heads;
        let sc = T::one() / T::from_usize(dhw).sqrt();
        let mut dq = Matrix::zeros(n, width);
        let mut dk = Matrix::zeros(n, width);
        let mut dv = Matrix::zeros(n, width);
        for (h, a) in at.weights.iter().enumerate() {
            let off = h * dhw;
            let qh = at.q.col_block(off, dhw);
            let kh = at.k.col_block(off, dhw);
            let vh = at.v.col_block(off, dhw);
            let dout = dctx.col_block(off, dhw);
            let da = matmul_transpose_b(&dout, &vh)?;
            dv.set_col_block(off, &matmul(&a.transpose(), &dout)?);
            let ds = softmax_backward(a, &da).scale(sc);
            dq.set_col_block(off, &matmul(&ds, &kh)?);
            dk.set_col_block(off, &matmul(&ds.transpose(), &qh)?);
        }

        let x_in = if l == 0 {
            &trace.embedded
        } else {
            &trace.layers[l - 1].ffn_out
        };
        let xt = x_in.transpose();
        accumulate(&mut g.wq, &matmul(&xt, &dq)?);
        accumulate(&mut g.wk, &matmul(&xt, &dk)?);
        accumulate(&mut g.wv, &matmul(&xt, &dv)?);
        accumulate_bias(&mut g.bq, &dq);
        accumulate_bias(&mut g.bk, &dk);
        accumulate_bias(&mut g.bv, &dv);

        let mut next = matmul_transpose_b(&dq, &lp.wq)?;
        next.add_assign(&matmul_transpose_b(&dk, &lp.wk)?)?;
        next.add_assign(&matmul_transpose_b(&dv, &lp.wv)?)?;
        dx = next;
    }

    for (i, &t) in tokens.iter().enumerate() {
        let src = dx.row(i);
        for (o, &g) in grad.tok_emb.row_mut(t).iter_mut().zip(src) {
            *o += g;
        }
        for (o, &g) in grad.pos_emb.row_mut(i).iter_mut().zip(src) {
            *o += g;
        }
    }
    Ok(())
}

/// Batch loss and its gradient with respect to every parameter.
/// With zero layers the gradient carries no layer slots.
pub fn loss_and_gradients<T: Scalar>(
    p: &ParamSet<T>,
    cfg: &ModelConfig,
    batch: &[Vec<usize>],
    targets: &[Vec<usize>],
) -> Result<(T, ParamSet<T>)> {
    check_batch(batch, targets)?;
    let mut grad = ParamSet::zeros(cfg)?;
    let weight = T::one() / T::from_usize(batch.len());
    let mut loss = T::zero();
    for (seq, tgt) in batch.iter().zip(targets) {
        let tr = forward_sequence(p, cfg, seq)?;
        loss += cross_entropy(&tr.logits, tgt)?;
        backward_sequence(p, cfg, seq, tgt, &tr, weight, &mut grad)?;
    }
    Ok((loss * weight, grad))
}

/// One gradient-descent step. Returns the updated parameters and the loss
/// measured before the update.
pub fn train_step<T: Scalar>(
    p: ParamSet<T>,
    cfg: &ModelConfig,
    batch: &[Vec<usize>],
    targets: &[Vec<usize>],
    lr: T,
) -> Result<(ParamSet<T>, T)> {
    if !(lr >= T::zero()) || !lr.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "learning rate must be finite and non-negative, got {lr}"
        )));
    }
    let (loss, grad) = loss_and_gradients(&p, cfg, batch, targets)?;
    if lr == T::zero() {
        return Ok((p, loss));
    }
    let mut p = p;
    p.axpy(-lr, &grad)?;
    Ok((p, loss))
}

/// Input/target pairs for the copy task.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CopyBatch {
    pub inputs: Vec<Vec<usize>>,
    pub targets: Vec<Vec<usize>>,
}

/// Uniform random token sequences whose targets equal the inputs.
pub fn synth_copy_batch(seed: u64, batch: usize, seq_len: usize, vocab: usize) -> Result<CopyBatch> {
    if batch == 0 || seq_len == 0 {
        return Err(Error::InvalidArgument(
            "batch size and sequence length must be at least 1".into(),
        ));
    }
    if vocab < 2 {
        return Err(Error::InvalidArgument("vocabulary must have at least 2 tokens".into()));
    }
    let mut rng = RngState::new(seed);
    let inputs: Vec<Vec<usize>> = (0..batch)
        .map(|_| {
            (0..seq_len)
                .map(|_| rng.next_below(vocab as u64) as usize)
                .collect()
        })
        .collect();
    Ok(CopyBatch {
        targets: inputs.clone(),
        inputs,
    })
}

/// Per-iteration record of a training run.
#[derive(Debug, Clone)]
pub struct TrainRun<T> {
    pub params: ParamSet<T>,
    /// Loss before each update.
    pub losses: Vec<T>,
    /// Loss of the returned parameters on the training batch.
    pub final_loss: T,
}

/// Repeats `train_step` on one fixed copy batch.
pub fn train_copy_task<T: Scalar>(
    p: ParamSet<T>,
    cfg: &ModelConfig,
    data: &CopyBatch,
    iters: usize,
    lr: T,
) -> Result<TrainRun<T>> {
    let mut p = p;
    let mut losses = Vec::with_capacity(iters);
    for _ in 0..iters {
        let (next, loss) = train_step(p, cfg, &data.inputs, &data.targets, lr)?;
        p = next;
        losses.push(loss);
    }
    let final_loss = batch_loss(&p, cfg, &data.inputs, &data.targets)?;
    Ok(TrainRun {
        params: p,
        losses,
        final_loss,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::params::init_params;

    #[test]
    fn uniform_logits_give_log_vocab() {
        let logits = Matrix::<f64>::zeros(3, 4000);
        let l = cross_entropy(&logits, &[0, 17, 3999]).unwrap();
        assert!((l - 4000f64.ln()).abs() < 1e-12);
        assert!((l - 8.29405).abs() < 1e-5);
    }

    #[test]
    fn confident_logits_give_small_loss() {
        let mut logits = Matrix::<f64>::zeros(1, 4);
        logits.set(0, 2, 20.0);
        let l = cross_entropy(&logits, &[2]).unwrap();
        assert!(l < 1e-8, "{l}");
    }

    #[test]
    fn two_class_analytic() {
        let logits = Matrix::from_rows(&[[0.0, 3f64.ln()]]);
        let l = cross_entropy(&logits, &[0]).unwrap();
        assert!((l - 4f64.ln()).abs() < 1e-14);
    }

    #[test]
    fn target_out_of_range() {
        assert!(cross_entropy(&Matrix::<f64>::zeros(1, 3), &[3]).is_err());
    }

    #[test]
    fn zero_learning_rate_keeps_params() {
        let cfg = ModelConfig::tiny();
        let p = init_params::<f64>(&cfg, 3).unwrap();
        let data = synth_copy_batch(1, 4, 4, 11).unwrap();
        let (q, loss) = train_step(p.clone(), &cfg, &data.inputs, &data.targets, 0.0).unwrap();
        assert_eq!(p, q);
        assert_eq!(loss, batch_loss(&p, &cfg, &data.inputs, &data.targets).unwrap());
    }

    #[test]
    fn negative_learning_rate_rejected() {
        let cfg = ModelConfig::tiny();
        let p = init_params::<f64>(&cfg, 3).unwrap();
        let data = synth_copy_batch(1, 2, 4, 11).unwrap();
        assert!(train_step(p, &cfg, &data.inputs, &data.targets, -0.1).is_err());
    }

    #[test]
    fn copy_batch_contract() {
        let a = synth_copy_batch(5, 32, 10, 3990).unwrap();
        assert_eq!(a, synth_copy_batch(5, 32, 10, 3990).unwrap());
        assert_eq!(a.inputs.len(), 32);
        assert!(a.inputs.iter().all(|s| s.len() == 10 && s.iter().all(|&t| t < 3990)));
        assert_eq!(a.inputs, a.targets);
        assert!(synth_copy_batch(5, 1, 1, 1).is_err());
    }

    #[test]
    fn zero_layer_gradient_has_no_layer_slots() {
        let cfg = ModelConfig::new(7, 3, 4, 2, 8, 0);
        let p = init_params::<f64>(&cfg, 1).unwrap();
        let data = synth_copy_batch(2, 3, 3, 7).unwrap();
        let (_, g) = loss_and_gradients(&p, &cfg, &data.inputs, &data.targets).unwrap();
        assert!(g.layers.is_empty());
        assert!(g.tok_emb.max_abs() > 0.0);
        assert!(g.pos_emb.max_abs() > 0.0);
    }
}

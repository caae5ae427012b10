use crate::error::{Error, Result};
use crate::numerics::{Matrix, RngState};
use crate::scalar::Scalar;

use super::config::ModelConfig;

/// Half-width of the uniform initialisation interval.
pub const INIT_RANGE: f64 = 0.05;

/// Weights of one encoder layer. Biases are `1×k` row vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerParams<T> {
    pub wq: Matrix<T>,
    pub bq: Option<Matrix<T>>,
    pub wk: Matrix<T>,
    pub bk: Option<Matrix<T>>,
    pub wv: Matrix<T>,
    pub bv: Option<Matrix<T>>,
    pub wo: Matrix<T>,
    pub bo: Option<Matrix<T>>,
    pub w1: Matrix<T>,
    pub b1: Option<Matrix<T>>,
    pub w2: Matrix<T>,
    pub b2: Option<Matrix<T>>,
}

/// All parameters of one model instance. The output projection is `tok_embᵀ`.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamSet<T> {
    pub tok_emb: Matrix<T>,
    pub pos_emb: Matrix<T>,
    pub layers: Vec<LayerParams<T>>,
}

/// Name and shape of one stored tensor.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TensorSpec {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    pub is_bias: bool,
}

impl TensorSpec {
    fn new(name: String, rows: usize, cols: usize, is_bias: bool) -> Self {
        Self {
            name,
            rows,
            cols,
            is_bias,
        }
    }

    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Canonical tensor order: `tok_emb`, `pos_emb`, then per layer
/// `wq, bq, wk, bk, wv, bv, wo, bo, w1, b1, w2, b2` (biases only when enabled).
pub fn tensor_specs(cfg: &ModelConfig) -> Vec<TensorSpec> {
    let d = cfg.d_model;
    let f = cfg.d_ff;
    let mut out = vec![
        TensorSpec::new("tok_emb".into(), cfg.vocab_size, d, false),
        TensorSpec::new("pos_emb".into(), cfg.max_seq_len, d, false),
    ];
    for l in 0..cfg.n_layers {
        let a = cfg.attn_width(l);
        let shapes = [
            ("wq", d, a, "bq", a),
            ("wk", d, a, "bk", a),
            ("wv", d, a, "bv", a),
            ("wo", a, d, "bo", d),
            ("w1", d, f, "b1", f),
            ("w2", f, d, "b2", d),
        ];
        for (w, r, c, b, blen) in shapes {
            out.push(TensorSpec::new(format!("layers.{l}.{w}"), r, c, false));
            if cfg.use_bias {
                out.push(TensorSpec::new(format!("layers.{l}.{b}"), 1, blen, true));
            }
        }
    }
    out
}

/// Closed-form parameter count.
pub fn param_count(cfg: &ModelConfig) -> usize {
    let d = cfg.d_model;
    let f = cfg.d_ff;
    let mut n = (cfg.vocab_size + cfg.max_seq_len) * d;
    for l in 0..cfg.n_layers {
        let a = cfg.attn_width(l);
        n += 4 * d * a + 2 * d * f;
        if cfg.use_bias {
            n += 3 * a + d + f + d;
        }
    }
    n
}

/// Element count summed over the stored tensors.
pub fn param_count_enumerated<T: Scalar>(p: &ParamSet<T>) -> usize {
    p.tensors().iter().map(|(_, m)| m.len()).sum()
}

/// Fills every weight matrix in canonical order from one SplitMix64 stream,
/// uniform in `[-0.05, 0.05)`. Biases start at zero and consume no draws.
pub fn init_params<T: Scalar>(cfg: &ModelConfig, seed: u64) -> Result<ParamSet<T>> {
    init_params_in_range(cfg, seed, INIT_RANGE)
}

/// Same stream and order as [`init_params`], uniform in `[-range, range)`.
pub fn init_params_in_range<T: Scalar>(
    cfg: &ModelConfig,
    seed: u64,
    range: f64,
) -> Result<ParamSet<T>> {
    cfg.validate()?;
    if !(range > 0.0) || !range.is_finite() {
        return Err(Error::InvalidArgument(format!("init range must be positive, got {range}")));
    }
    let mut rng = RngState::new(seed);
    let tensors = tensor_specs(cfg)
        .into_iter()
        .map(|spec| {
            if spec.is_bias {
                Matrix::zeros(spec.rows, spec.cols)
            } else {
                Matrix::from_fn(spec.rows, spec.cols, |_, _| {
                    T::from_f64(rng.next_in(-range, range))
                })
            }
        })
        .collect();
    ParamSet::from_tensors(cfg, tensors)
}

impl<T: Scalar> ParamSet<T> {
    /// All-zero parameters with the shapes of `cfg`.
    pub fn zeros(cfg: &ModelConfig) -> Result<Self> {
        cfg.validate()?;
        let tensors = tensor_specs(cfg)
            .into_iter()
            .map(|s| Matrix::zeros(s.rows, s.cols))
            .collect();
        Self::from_tensors(cfg, tensors)
    }

    /// Rebuilds from tensors in canonical order, checking every shape.
    pub fn from_tensors(cfg: &ModelConfig, tensors: Vec<Matrix<T>>) -> Result<Self> {
        let specs = tensor_specs(cfg);
        if specs.len() != tensors.len() {
            return Err(Error::Config(format!(
                "expected {} tensors, got {}",
                specs.len(),
                tensors.len()
            )));
        }
        for (s, t) in specs.iter().zip(&tensors) {
            if t.shape() != (s.rows, s.cols) {
                return Err(Error::Shape {
                    op: "from_tensors",
                    left: (s.rows, s.cols),
                    right: t.shape(),
                });
            }
        }
        let mut it = tensors.into_iter();
        let mut next = || it.next().expect("count checked above");
        let tok_emb = next();
        let pos_emb = next();
        let mut layers = Vec::with_capacity(cfg.n_layers);
        for _ in 0..cfg.n_layers {
            let mut pair = || {
                let w = next();
                let b = if cfg.use_bias { Some(next()) } else { None };
                (w, b)
            };
            let (wq, bq) = pair();
            let (wk, bk) = pair();
            let (wv, bv) = pair();
            let (wo, bo) = pair();
            let (w1, b1) = pair();
            let (w2, b2) = pair();
            layers.push(LayerParams {
                wq,
                bq,
                wk,
                bk,
                wv,
                bv,
                wo,
                bo,
                w1,
                b1,
                w2,
                b2,
            });
        }
        Ok(Self {
            tok_emb,
            pos_emb,
            layers,
        })
    }

    /// Tensors in canonical order with their names.
    pub fn tensors(&self) -> Vec<(String, &Matrix<T>)> {
        let mut out = vec![
            ("tok_emb".to_string(), &self.tok_emb),
            ("pos_emb".to_string(), &self.pos_emb),
        ];
        for (l, layer) in self.layers.iter().enumerate() {
            for (name, m) in layer.named() {
                out.push((format!("layers.{l}.{name}"), m));
            }
        }
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Matrix<T>> {
        let mut out = vec![&mut self.tok_emb, &mut self.pos_emb];
        for layer in &mut self.layers {
            out.extend(layer.named_mut());
        }
        out
    }

    pub fn into_tensors(self) -> Vec<Matrix<T>> {
        let mut out = vec![self.tok_emb, self.pos_emb];
        for layer in self.layers {
            let LayerParams {
                wq,
                bq,
                wk,
                bk,
                wv,
                bv,
                wo,
                bo,
                w1,
                b1,
                w2,
                b2,
            } = layer;
            for (w, b) in [(wq, bq), (wk, bk), (wv, bv), (wo, bo), (w1, b1), (w2, b2)] {
                out.push(w);
                out.extend(b);
            }
        }
        out
    }

    pub fn tensor_count(&self) -> usize {
        self.tensors().len()
    }

    /// Canonical flat view of every parameter.
    pub fn flatten(&self) -> Vec<T> {
        self.tensors()
            .iter()
            .flat_map(|(_, m)| m.as_slice().iter().copied())
            .collect()
    }

    /// `self += alpha · other`, tensor by tensor. Shapes must match.
    pub fn axpy(&mut self, alpha: T, other: &ParamSet<T>) -> Result<()> {
        let src = other.tensors();
        let dst = self.tensors_mut();
        if src.len() != dst.len() {
            return Err(Error::Config("parameter sets have different layouts".into()));
        }
        for (d, (_, s)) in dst.into_iter().zip(src) {
            if d.shape() != s.shape() {
                return Err(Error::Shape {
                    op: "axpy",
                    left: d.shape(),
                    right: s.shape(),
                });
            }
            for (x, &y) in d.as_mut_slice().iter_mut().zip(s.as_slice()) {
                *x += alpha * y;
            }
        }
        Ok(())
    }

    pub fn cast<U: Scalar>(&self, cfg: &ModelConfig) -> Result<ParamSet<U>> {
        ParamSet::from_tensors(cfg, self.tensors().iter().map(|(_, m)| m.cast()).collect())
    }
}

impl<T: Scalar> LayerParams<T> {
    fn named(&self) -> Vec<(&'static str, &Matrix<T>)> {
        let mut v = Vec::with_capacity(12);
        for (wn, w, bn, b) in [
            ("wq", &self.wq, "bq", &self.bq),
            ("wk", &self.wk, "bk", &self.bk),
            ("wv", &self.wv, "bv", &self.bv),
            ("wo", &self.wo, "bo", &self.bo),
            ("w1", &self.w1, "b1", &self.b1),
            ("w2", &self.w2, "b2", &self.b2),
        ] {
            v.push((wn, w));
            if let Some(b) = b {
                v.push((bn, b));
            }
        }
        v
    }

    fn named_mut(&mut self) -> Vec<&mut Matrix<T>> {
        let mut v = Vec::with_capacity(12);
        for (w, b) in [
            (&mut self.wq, &mut self.bq),
            (&mut self.wk, &mut self.bk),
            (&mut self.wv, &mut self.bv),
            (&mut self.wo, &mut self.bo),
            (&mut self.w1, &mut self.b1),
            (&mut self.w2, &mut self.b2),
        ] {
            v.push(w);
            if let Some(b) = b.as_mut() {
                v.push(b);
            }
        }
        v
    }
}

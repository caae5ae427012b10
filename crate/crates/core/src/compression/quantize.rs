use crate::error::{Error, Result};
use crate::model::{param_count_enumerated, ModelConfig, ParamSet};
use crate::numerics::Matrix;
use crate::scalar::Scalar;

const QMAX: f64 = 127.0;

/// Symmetric per-tensor int8 values and their scale.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantizedTensor {
    pub rows: usize,
    pub cols: usize,
    /// Row-major, each in `[-127, 127]`.
    pub values: Vec<i8>,
    /// Positive; 1 for an all-zero tensor.
    pub scale: f64,
}

impl QuantizedTensor {
    pub fn from_parts(rows: usize, cols: usize, values: Vec<i8>, scale: f64) -> Result<Self> {
        if values.len() != rows * cols {
            return Err(Error::BufferLength {
                rows,
                cols,
                len: values.len(),
            });
        }
        if !(scale > 0.0) || !scale.is_finite() {
            return Err(Error::InvalidArgument(format!("scale must be positive, got {scale}")));
        }
        if values.contains(&i8::MIN) {
            return Err(Error::InvalidArgument("quantized value -128 is not allowed".into()));
        }
        Ok(Self {
            rows,
            cols,
            values,
            scale,
        })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Storage cost: one byte per value plus the 8-byte scale.
    pub fn storage_bytes(&self) -> usize {
        self.values.len() + 8
    }
}

/// `scale = max|m| / 127`, `q = round(m / scale)` with ties away from zero.
pub fn quantize_tensor<T: Scalar>(m: &Matrix<T>, bits: u32) -> Result<QuantizedTensor> {
    if bits != 8 {
        return Err(Error::InvalidArgument(format!(
            "only 8-bit quantization is supported, got {bits}"
        )));
    }
    let max = m.max_abs().to_f64();
    if !max.is_finite() {
        return Err(Error::InvalidArgument("cannot quantize non-finite values".into()));
    }
    let scale = if max == 0.0 { 1.0 } else { max / QMAX };
    let values = m
        .as_slice()
        .iter()
        .map(|&x| (x.to_f64() / scale).round().clamp(-QMAX, QMAX) as i8)
        .collect();
    Ok(QuantizedTensor {
        rows: m.rows(),
        cols: m.cols(),
        values,
        scale,
    })
}

pub fn dequantize<T: Scalar>(q: &QuantizedTensor) -> Matrix<T> {
    let data = q
        .values
        .iter()
        .map(|&v| T::from_f64(v as f64 * q.scale))
        .collect();
    Matrix::from_vec(q.rows, q.cols, data).expect("length checked on construction")
}

/// Every tensor of a model in int8 form, in canonical order.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantizedModel {
    pub config: ModelConfig,
    pub tensors: Vec<QuantizedTensor>,
}

impl QuantizedModel {
    pub fn storage_bytes(&self) -> usize {
        self.tensors.iter().map(QuantizedTensor::storage_bytes).sum()
    }

    /// Dequantized parameters, ready for the regular forward pass.
    pub fn to_params<T: Scalar>(&self) -> Result<ParamSet<T>> {
        ParamSet::from_tensors(&self.config, self.tensors.iter().map(dequantize).collect())
    }

    /// Largest `|dequant - original|` over all tensors.
    pub fn max_error<T: Scalar>(&self, original: &ParamSet<T>) -> f64 {
        original
            .tensors()
            .iter()
            .zip(&self.tensors)
            .flat_map(|((_, m), q)| {
                m.as_slice()
                    .iter()
                    .zip(&q.values)
                    .map(move |(&x, &v)| (x.to_f64() - v as f64 * q.scale).abs())
            })
            .fold(0.0, f64::max)
    }
}

pub fn quantize_params<T: Scalar>(p: &ParamSet<T>, cfg: &ModelConfig) -> Result<QuantizedModel> {
    let tensors = p
        .tensors()
        .iter()
        .map(|(_, m)| quantize_tensor(m, 8))
        .collect::<Result<Vec<_>>>()?;
    Ok(QuantizedModel {
        config: cfg.clone(),
        tensors,
    })
}

/// Bytes needed to store `p` fully quantized: one per parameter plus one scale per tensor.
pub fn quantized_memory_bytes<T: Scalar>(p: &ParamSet<T>) -> usize {
    param_count_enumerated(p) + 8 * p.tensor_count()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::init_params;

    type M = Matrix<f64>;

    #[test]
    fn single_extremum_is_exact() {
        let q = quantize_tensor(&M::from_rows(&[[1.0]]), 8).unwrap();
        assert_eq!(q.scale, 1.0 / 127.0);
        assert_eq!(q.values, vec![127]);
        assert_eq!(dequantize::<f64>(&q).get(0, 0), 1.0);
    }

    #[test]
    fn zero_tensor_uses_unit_scale() {
        let q = quantize_tensor(&M::zeros(2, 3), 8).unwrap();
        assert_eq!(q.scale, 1.0);
        assert!(q.values.iter().all(|&v| v == 0));
        assert_eq!(dequantize::<f64>(&q), M::zeros(2, 3));
    }

    #[test]
    fn two_value_example() {
        let q = quantize_tensor(&M::from_rows(&[[-2.0, 1.0]]), 8).unwrap();
        assert_eq!(q.scale, 2.0 / 127.0);
        // 1.0 / (2/127) = 63.5, ties away from zero
        assert_eq!(q.values, vec![-127, 64]);
        let d = dequantize::<f64>(&q);
        assert_eq!(d.get(0, 0), -2.0);
        assert!((d.get(0, 1) - 128.0 / 127.0).abs() < 1e-15);
        assert!((d.get(0, 1) - 1.007874).abs() < 1e-6);
    }

    #[test]
    fn other_widths_rejected() {
        assert!(quantize_tensor(&M::zeros(1, 1), 4).is_err());
        assert!(quantize_tensor(&M::zeros(1, 1), 16).is_err());
    }

    #[test]
    fn model_byte_counts() {
        let p = init_params::<f64>(&ModelConfig::paper_baseline(), 0).unwrap();
        assert_eq!(quantized_memory_bytes(&p), 140_288 + 64);
        let p = init_params::<f64>(&ModelConfig::new(1, 1, 1, 1, 1, 0), 0).unwrap();
        assert_eq!(quantized_memory_bytes(&p), 18);
    }

    #[test]
    fn from_parts_validates() {
        assert!(QuantizedTensor::from_parts(1, 2, vec![1], 1.0).is_err());
        assert!(QuantizedTensor::from_parts(1, 1, vec![1], 0.0).is_err());
        assert!(QuantizedTensor::from_parts(1, 1, vec![-128], 1.0).is_err());
        assert!(QuantizedTensor::from_parts(1, 1, vec![-127], 1.0).is_ok());
    }
}

use std::fmt;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Dense row-major matrix.
#[derive(Clone, PartialEq)]
pub struct Matrix<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Scalar> Matrix<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![T::zero(); rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = T::one();
        }
        m
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::BufferLength {
                rows,
                cols,
                len: data.len(),
            });
        }
        Ok(Self { rows, cols, data })
    }

    /// Builds from nested rows; panics on ragged input. Intended for literals.
    pub fn from_rows<R: AsRef<[T]>>(rows: &[R]) -> Self {
        let cols = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            assert_eq!(r.as_ref().len(), cols, "ragged rows");
            data.extend_from_slice(r.as_ref());
        }
        Self {
            rows: rows.len(),
            cols,
            data,
        }
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self { rows, cols, data }
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.data.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    #[inline]
    pub fn as_mut_slice(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<T> {
        self.data
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> T {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: T) {
        self.data[i * self.cols + j] = v;
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[T] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, i: usize) -> &mut [T] {
        let c = self.cols;
        &mut self.data[i * c..(i + 1) * c]
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self.get(j, i))
    }

    /// Columns `[start, start + width)` as a new matrix.
    pub fn col_block(&self, start: usize, width: usize) -> Self {
        assert!(start + width <= self.cols, "column block out of range");
        Self::from_fn(self.rows, width, |i, j| self.get(i, start + j))
    }

    /// Rows `[start, start + height)` as a new matrix.
    pub fn row_block(&self, start: usize, height: usize) -> Self {
        assert!(start + height <= self.rows, "row block out of range");
        Self {
            rows: height,
            cols: self.cols,
            data: self.data[start * self.cols..(start + height) * self.cols].to_vec(),
        }
    }

    /// Writes `block` into columns starting at `start`.
    pub fn set_col_block(&mut self, start: usize, block: &Matrix<T>) {
        assert_eq!(block.rows, self.rows);
        assert!(start + block.cols <= self.cols);
        for i in 0..self.rows {
            for j in 0..block.cols {
                self.set(i, start + j, block.get(i, j));
            }
        }
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&x| f(x)).collect(),
        }
    }

    pub fn scale(&self, s: T) -> Self {
        self.map(|x| x * s)
    }

    pub fn add(&self, other: &Matrix<T>) -> Result<Self> {
        self.check_same(other, "add")?;
        Ok(Self {
            rows: self.rows,
            cols: self.cols,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| a + b)
                .collect(),
        })
    }

    pub fn add_assign(&mut self, other: &Matrix<T>) -> Result<()> {
        self.check_same(other, "add_assign")?;
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
        Ok(())
    }

    /// Adds a length-`cols` vector to every row.
    pub fn add_row_vector(&mut self, v: &[T]) -> Result<()> {
        if v.len() != self.cols {
            return Err(Error::Shape {
                op: "add_row_vector",
                left: self.shape(),
                right: (1, v.len()),
            });
        }
        for i in 0..self.rows {
            for (x, &b) in self.row_mut(i).iter_mut().zip(v) {
                *x += b;
            }
        }
        Ok(())
    }

    /// Sum over rows, one entry per column.
    pub fn column_sums(&self) -> Vec<T> {
        let mut out = vec![T::zero(); self.cols];
        for i in 0..self.rows {
            for (o, &x) in out.iter_mut().zip(self.row(i)) {
                *o += x;
            }
        }
        out
    }

    pub fn max_abs(&self) -> T {
        self.data.iter().fold(T::zero(), |m, &x| m.max(x.abs()))
    }

    pub fn frobenius_norm(&self) -> T {
        self.data.iter().fold(T::zero(), |s, &x| s + x * x).sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    /// Converts element type through `f64`.
    pub fn cast<U: Scalar>(&self) -> Matrix<U> {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&x| U::from_f64(x.to_f64())).collect(),
        }
    }

    fn check_same(&self, other: &Matrix<T>, op: &'static str) -> Result<()> {
        if self.shape() != other.shape() {
            return Err(Error::Shape {
                op,
                left: self.shape(),
                right: other.shape(),
            });
        }
        Ok(())
    }
}

impl<T: fmt::Debug> fmt::Debug for Matrix<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Matrix {}x{} [", self.rows, self.cols)?;
        for i in 0..self.rows.min(6) {
            if i > 0 {
                write!(f, "; ")?;
            }
            let row = &self.data[i * self.cols..(i + 1) * self.cols];
            for (j, x) in row.iter().take(8).enumerate() {
                if j > 0 {
                    write!(f, ", ")?;
                }
                write!(f, "{x:?}")?;
            }
            if row.len() > 8 {
                write!(f, ", ..")?;
            }
        }
        if self.rows > 6 {
            write!(f, "; ..")?;
        }
        write!(f, "]")
    }
}

/// `a · b`, each entry accumulated over k in ascending order.
pub fn matmul<T: Scalar>(a: &Matrix<T>, b: &Matrix<T>) -> Result<Matrix<T>> {
    if a.cols != b.rows {
        return Err(Error::Shape {
            op: "matmul",
            left: a.shape(),
            right: b.shape(),
        });
    }
    let (n, m, p) = (a.rows, a.cols, b.cols);
    let mut out = Matrix::zeros(n, p);
    // i-k-j loop: for a fixed (i, j) the k terms are still added in ascending order,
    // so results match the textbook triple loop bit for bit.
    for i in 0..n {
        let arow = a.row(i);
        let orow = &mut out.data[i * p..(i + 1) * p];
        for (k, &aik) in arow.iter().enumerate().take(m) {
            let brow = &b.data[k * p..(k + 1) * p];
            for (o, &bkj) in orow.iter_mut().zip(brow) {
                *o += aik * bkj;
            }
        }
    }
    Ok(out)
}

/// `a · bᵀ` without materialising the transpose.
pub fn matmul_transpose_b<T: Scalar>(a: &Matrix<T>, b: &Matrix<T>) -> Result<Matrix<T>> {
    if a.cols != b.cols {
        return Err(Error::Shape {
            op: "matmul_transpose_b",
            left: a.shape(),
            right: b.shape(),
        });
    }
    let mut out = Matrix::zeros(a.rows, b.rows);
    for i in 0..a.rows {
        let arow = a.row(i);
        for j in 0..b.rows {
            let mut acc = T::zero();
            for (&x, &y) in arow.iter().zip(b.row(j)) {
                acc += x * y;
            }
            out.data[i * b.rows + j] = acc;
        }
    }
    Ok(out)
}

/// Row-wise softmax with max subtraction.
pub fn softmax_rows<T: Scalar>(m: &Matrix<T>) -> Matrix<T> {
    let mut out = m.clone();
    for i in 0..out.rows {
        softmax_in_place(out.row_mut(i));
    }
    out
}

pub(crate) fn softmax_in_place<T: Scalar>(row: &mut [T]) {
    let max = row.iter().fold(T::neg_infinity(), |a, &b| a.max(b));
    let mut sum = T::zero();
    for x in row.iter_mut() {
        *x = (*x - max).exp();
        sum += *x;
    }
    for x in row.iter_mut() {
        *x /= sum;
    }
}

pub fn relu<T: Scalar>(m: &Matrix<T>) -> Matrix<T> {
    m.map(|x| if x > T::zero() { x } else { T::zero() })
}

#[cfg(test)]
mod tests {
    use super::*;

    type M = Matrix<f64>;

    #[test]
    fn identity_product() {
        let a = M::from_rows(&[[1.0, 2.0], [3.0, 4.0]]);
        assert_eq!(matmul(&M::identity(2), &a).unwrap(), a);
        assert_eq!(matmul(&a, &M::identity(2)).unwrap(), a);
    }

    #[test]
    fn two_by_two_product() {
        let a = M::from_rows(&[[1.0, 2.0], [3.0, 4.0]]);
        let b = M::from_rows(&[[5.0, 6.0], [7.0, 8.0]]);
        assert_eq!(
            matmul(&a, &b).unwrap(),
            M::from_rows(&[[19.0, 22.0], [43.0, 50.0]])
        );
    }

    #[test]
    fn zero_annihilates() {
        let b = M::from_fn(4, 2, |i, j| (i * 2 + j) as f64 + 0.5);
        assert_eq!(matmul(&M::zeros(3, 4), &b).unwrap(), M::zeros(3, 2));
    }

    #[test]
    fn mismatch_names_both_shapes() {
        let err = matmul(&M::zeros(2, 3), &M::zeros(2, 3)).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("(2, 3)"), "{msg}");
    }

    #[test]
    fn transpose_b_agrees_with_explicit_transpose() {
        let a = M::from_fn(3, 5, |i, j| (i as f64 - j as f64) * 0.37);
        let b = M::from_fn(4, 5, |i, j| ((i * j) as f64).sin());
        let direct = matmul(&a, &b.transpose()).unwrap();
        let fused = matmul_transpose_b(&a, &b).unwrap();
        assert_eq!(direct, fused);
    }

    #[test]
    fn softmax_uniform_and_analytic() {
        let s = softmax_rows(&M::from_rows(&[[0.0, 0.0, 0.0]]));
        for &x in s.as_slice() {
            assert!((x - 1.0 / 3.0).abs() < 1e-15);
        }
        let s = softmax_rows(&M::from_rows(&[[0.0, 2f64.ln()]]));
        assert!((s.get(0, 0) - 1.0 / 3.0).abs() < 1e-15);
        assert!((s.get(0, 1) - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn softmax_is_shift_invariant() {
        let row = [0.3, -1.2, 4.0, 2.5];
        let a = softmax_rows(&M::from_rows(&[row]));
        let shifted: Vec<f64> = row.iter().map(|x| x + 123.0).collect();
        let b = softmax_rows(&M::from_rows(&[shifted]));
        for (x, y) in a.as_slice().iter().zip(b.as_slice()) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn softmax_handles_large_logits() {
        let s = softmax_rows(&M::from_rows(&[[1000.0, 1000.0, -1000.0]]));
        assert!(s.is_finite());
        assert!((s.get(0, 0) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn relu_cases() {
        assert_eq!(
            relu(&M::from_rows(&[[-1.0, 0.0, 2.0]])),
            M::from_rows(&[[0.0, 0.0, 2.0]])
        );
        assert_eq!(relu(&M::zeros(2, 2)), M::zeros(2, 2));
        let pos = M::from_fn(3, 3, |i, j| 1.0 + (i + j) as f64);
        assert_eq!(relu(&pos), pos);
    }

    #[test]
    fn generic_over_f32() {
        let a = Matrix::<f32>::from_rows(&[[1.0, 2.0], [3.0, 4.0]]);
        let b = Matrix::<f32>::from_rows(&[[5.0, 6.0], [7.0, 8.0]]);
        assert_eq!(matmul(&a, &b).unwrap().as_slice(), &[19.0, 22.0, 43.0, 50.0]);
    }

    #[test]
    fn from_vec_checks_length() {
        assert!(M::from_vec(2, 2, vec![0.0; 3]).is_err());
    }
}

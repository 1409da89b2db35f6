//! Dense row-major matrices, softmax / cross-entropy and their gradients.

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Probability floor applied inside the logarithm of [`cross_entropy`].
pub const PROB_FLOOR: f64 = 1e-12;

/// Dense row-major matrix.
#[derive(Debug, Clone, PartialEq)]
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
            m[(i, i)] = T::one();
        }
        m
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::LengthMismatch {
                op: "Matrix::from_vec",
                expected: rows * cols,
                actual: data.len(),
            });
        }
        Ok(Self { rows, cols, data })
    }

    /// Builds a matrix from equally sized rows.
    pub fn from_rows<R: AsRef<[T]>>(rows: &[R]) -> Result<Self> {
        let cols = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(rows.len() * cols);
        for row in rows {
            let row = row.as_ref();
            if row.len() != cols {
                return Err(Error::LengthMismatch {
                    op: "Matrix::from_rows",
                    expected: cols,
                    actual: row.len(),
                });
            }
            data.extend_from_slice(row);
        }
        Ok(Self {
            rows: rows.len(),
            cols,
            data,
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<T> {
        self.data
    }

    pub fn row(&self, i: usize) -> &[T] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [T] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_iter(&self) -> impl Iterator<Item = &[T]> {
        // chunks_exact panics on zero width
        self.data.chunks_exact(self.cols.max(1)).take(self.rows)
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn fill(&mut self, value: T) {
        self.data.iter_mut().for_each(|v| *v = value);
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    /// Adds `bias` to every row.
    pub fn add_row(&mut self, bias: &[T]) -> Result<()> {
        if bias.len() != self.cols {
            return Err(Error::LengthMismatch {
                op: "Matrix::add_row",
                expected: self.cols,
                actual: bias.len(),
            });
        }
        for row in self.data.chunks_exact_mut(self.cols.max(1)) {
            for (v, &b) in row.iter_mut().zip(bias) {
                *v += b;
            }
        }
        Ok(())
    }

    /// Column sums, i.e. `1ᵀ · self`.
    pub fn column_sums(&self) -> Vec<T> {
        let mut out = vec![T::zero(); self.cols];
        for row in self.row_iter() {
            for (o, &v) in out.iter_mut().zip(row) {
                *o += v;
            }
        }
        out
    }
}

impl<T> std::ops::Index<(usize, usize)> for Matrix<T> {
    type Output = T;

    fn index(&self, (r, c): (usize, usize)) -> &T {
        &self.data[r * self.cols + c]
    }
}

impl<T> std::ops::IndexMut<(usize, usize)> for Matrix<T> {
    fn index_mut(&mut self, (r, c): (usize, usize)) -> &mut T {
        &mut self.data[r * self.cols + c]
    }
}

fn check_finite<T: Scalar>(m: Matrix<T>, op: &str) -> Result<Matrix<T>> {
    if m.is_finite() {
        Ok(m)
    } else {
        Err(Error::NonFinite(op.to_string()))
    }
}

/// `a · b`.
pub fn matmul<T: Scalar>(a: &Matrix<T>, b: &Matrix<T>) -> Result<Matrix<T>> {
    if a.cols != b.rows {
        return Err(Error::DimensionMismatch {
            op: "matmul",
            left: a.shape(),
            right: b.shape(),
        });
    }
    let mut out = Matrix::zeros(a.rows, b.cols);
    for i in 0..a.rows {
        let out_row = &mut out.data[i * b.cols..(i + 1) * b.cols];
        for (k, &aik) in a.row(i).iter().enumerate() {
            if aik == T::zero() {
                continue;
            }
            for (o, &bkj) in out_row.iter_mut().zip(b.row(k)) {
                *o += aik * bkj;
            }
        }
    }
    check_finite(out, "matmul")
}

/// `aᵀ · b`, without materialising the transpose.
pub fn matmul_tn<T: Scalar>(a: &Matrix<T>, b: &Matrix<T>) -> Result<Matrix<T>> {
    if a.rows != b.rows {
        return Err(Error::DimensionMismatch {
            op: "matmul_tn",
            left: a.shape(),
            right: b.shape(),
        });
    }
    let mut out = Matrix::zeros(a.cols, b.cols);
    for (a_row, b_row) in a.row_iter().zip(b.row_iter()) {
        for (i, &aki) in a_row.iter().enumerate() {
            if aki == T::zero() {
                continue;
            }
            let out_row = &mut out.data[i * b.cols..(i + 1) * b.cols];
            for (o, &bkj) in out_row.iter_mut().zip(b_row) {
                *o += aki * bkj;
            }
        }
    }
    check_finite(out, "matmul_tn")
}

/// `a · bᵀ`.
pub fn matmul_nt<T: Scalar>(a: &Matrix<T>, b: &Matrix<T>) -> Result<Matrix<T>> {
    if a.cols != b.cols {
        return Err(Error::DimensionMismatch {
            op: "matmul_nt",
            left: a.shape(),
            right: b.shape(),
        });
    }
    let mut out = Matrix::zeros(a.rows, b.rows);
    for i in 0..a.rows {
        let a_row = a.row(i);
        for j in 0..b.rows {
            out.data[i * b.rows + j] = a_row.iter().zip(b.row(j)).map(|(&x, &y)| x * y).sum();
        }
    }
    check_finite(out, "matmul_nt")
}

pub fn relu<T: Scalar>(x: T) -> T {
    if x > T::zero() {
        x
    } else {
        T::zero()
    }
}

/// Class probabilities for one sample.
///
/// Entries lie in `[0, 1]` and sum to one up to rounding.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbabilityRow<T>(Vec<T>);

impl<T: Scalar> ProbabilityRow<T> {
    /// Validates `values` as a probability distribution.
    pub fn new(values: Vec<T>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::Data("empty probability row".into()));
        }
        let tol = Self::sum_tolerance(values.len());
        let mut sum = T::zero();
        for &v in &values {
            if !v.is_finite() || v < T::zero() || v > T::one() {
                return Err(Error::Data(format!("probability {v} outside [0, 1]")));
            }
            sum += v;
        }
        if (sum - T::one()).abs() > tol {
            return Err(Error::Data(format!("probabilities sum to {sum}, not 1")));
        }
        Ok(Self(values))
    }

    fn sum_tolerance(n: usize) -> T {
        T::of(1e-9).max(T::epsilon() * T::of_usize(8 * n))
    }

    pub fn values(&self) -> &[T] {
        &self.0
    }

    pub fn classes(&self) -> usize {
        self.0.len()
    }

    pub fn get(&self, class: usize) -> Result<T> {
        self.0.get(class).copied().ok_or(Error::LabelOutOfRange {
            label: class,
            classes: self.0.len(),
        })
    }

    /// Largest entry and its index; ties go to the lowest index.
    pub fn max(&self) -> (usize, T) {
        let mut best = (0, self.0[0]);
        for (i, &v) in self.0.iter().enumerate().skip(1) {
            if v > best.1 {
                best = (i, v);
            }
        }
        best
    }
}

/// Numerically stable softmax (max-subtracted).
pub fn softmax<T: Scalar>(logits: &[T]) -> Result<ProbabilityRow<T>> {
    if logits.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("softmax input".into()));
    }
    if logits.is_empty() {
        return Err(Error::Data("softmax of empty row".into()));
    }
    let max = logits.iter().copied().fold(T::neg_infinity(), T::max);
    let exps: Vec<T> = logits.iter().map(|&z| (z - max).exp()).collect();
    let total: T = exps.iter().copied().sum();
    Ok(ProbabilityRow(
        exps.into_iter().map(|e| e / total).collect(),
    ))
}

/// Row-wise softmax over a logits matrix.
pub fn softmax_rows<T: Scalar>(logits: &Matrix<T>) -> Result<Vec<ProbabilityRow<T>>> {
    logits.row_iter().map(softmax).collect()
}

/// `-ln(max(p[label], ε))`.
pub fn cross_entropy<T: Scalar>(probs: &ProbabilityRow<T>, label: usize) -> Result<T> {
    let p = probs.get(label)?;
    Ok(-p.max(T::of(PROB_FLOOR)).ln())
}

/// Gradient of `cross_entropy(softmax(logits), label)` with respect to the logits.
pub fn softmax_ce_gradient<T: Scalar>(logits: &[T], label: usize) -> Result<Vec<T>> {
    let probs = softmax(logits)?;
    if label >= probs.classes() {
        return Err(Error::LabelOutOfRange {
            label,
            classes: probs.classes(),
        });
    }
    let mut grad = probs.0;
    grad[label] -= T::one();
    Ok(grad)
}

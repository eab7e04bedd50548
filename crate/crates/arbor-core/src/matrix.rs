//! A minimal dense row-major `f64` matrix.
//!
//! This is the numeric substrate for the encoder, the scorers, and the
//! decoders. It is deliberately tiny: sentence-sized dense algebra does not
//! need strides, views, or broadcasting machinery.

use alloc::vec;
use alloc::vec::Vec;

#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn filled(rows: usize, cols: usize, value: f64) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![value; rows * cols],
        }
    }

    /// Build from row-major data. Panics if `data.len() != rows * cols`.
    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(
            data.len(),
            rows * cols,
            "matrix data length {} does not match shape {}x{}",
            data.len(),
            rows,
            cols
        );
        Matrix { rows, cols, data }
    }

    /// A 1 x n row vector.
    pub fn row_vector(data: Vec<f64>) -> Self {
        let cols = data.len();
        Matrix {
            rows: 1,
            cols,
            data,
        }
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

    #[inline]
    pub fn at(&self, r: usize, c: usize) -> f64 {
        debug_assert!(r < self.rows && c < self.cols);
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, value: f64) {
        debug_assert!(r < self.rows && c < self.cols);
        self.data[r * self.cols + c] = value;
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn transpose(&self) -> Matrix {
        let mut out = Matrix::zeros(self.cols, self.rows);
        for r in 0..self.rows {
            for c in 0..self.cols {
                out.set(c, r, self.at(r, c));
            }
        }
        out
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Elementwise `self += other`. Shapes must match.
    pub fn add_assign(&mut self, other: &Matrix) {
        assert_eq!(self.shape(), other.shape());
        for (a, b) in self.data.iter_mut().zip(other.data.iter()) {
            *a += b;
        }
    }

    pub fn scale_assign(&mut self, factor: f64) {
        for v in self.data.iter_mut() {
            *v *= factor;
        }
    }
}

/// `a x b` with optional transposes, i.e. `op(a) * op(b)` where
/// `op(x) = x^T` when the corresponding flag is set.
pub fn matmul(a: &Matrix, b: &Matrix, ta: bool, tb: bool) -> Matrix {
    match (ta, tb) {
        (false, false) => {
            assert_eq!(a.cols, b.rows, "matmul shape mismatch");
            let mut out = Matrix::zeros(a.rows, b.cols);
            for i in 0..a.rows {
                let a_row = a.row(i);
                let out_row = out.row_mut(i);
                for (k, &aik) in a_row.iter().enumerate() {
                    if aik == 0.0 {
                        continue;
                    }
                    let b_row = b.row(k);
                    for (o, &bkj) in out_row.iter_mut().zip(b_row.iter()) {
                        *o += aik * bkj;
                    }
                }
            }
            out
        }
        (true, false) => {
            assert_eq!(a.rows, b.rows, "matmul shape mismatch");
            let mut out = Matrix::zeros(a.cols, b.cols);
            for k in 0..a.rows {
                let a_row = a.row(k);
                let b_row = b.row(k);
                for (i, &aki) in a_row.iter().enumerate() {
                    if aki == 0.0 {
                        continue;
                    }
                    let out_row = out.row_mut(i);
                    for (o, &bkj) in out_row.iter_mut().zip(b_row.iter()) {
                        *o += aki * bkj;
                    }
                }
            }
            out
        }
        (false, true) => {
            assert_eq!(a.cols, b.cols, "matmul shape mismatch");
            let mut out = Matrix::zeros(a.rows, b.rows);
            for i in 0..a.rows {
                let a_row = a.row(i);
                let out_row = out.row_mut(i);
                for (j, o) in out_row.iter_mut().enumerate() {
                    let b_row = b.row(j);
                    let mut acc = 0.0;
                    for (x, y) in a_row.iter().zip(b_row.iter()) {
                        acc += x * y;
                    }
                    *o = acc;
                }
            }
            out
        }
        (true, true) => matmul(b, a, false, false).transpose(),
    }
}

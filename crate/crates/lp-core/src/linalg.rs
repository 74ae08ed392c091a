//! Dense `f64` vector/matrix arithmetic with a deterministic summation order.
//!
//! Every reduction runs in ascending index order with a single scalar
//! accumulator, so identical inputs produce bitwise-identical outputs across
//! runs and thread counts. That property is what lets parallel and sequential
//! training steps be compared with `==` instead of a tolerance.
//!
//! All multiply-accumulate style operations feed a thread-local counter (see
//! [`mac_count`]) used by the iteration-cost tests.

use crate::error::{LpError, Result};
use std::cell::Cell;

thread_local! {
    static MAC_COUNT: Cell<u64> = const { Cell::new(0) };
}

#[inline]
fn count_macs(n: usize) {
    MAC_COUNT.with(|c| c.set(c.get().wrapping_add(n as u64)));
}

/// Reset this thread's multiply-accumulate counter to zero.
pub fn reset_mac_count() {
    MAC_COUNT.with(|c| c.set(0));
}

/// Multiply-accumulate operations performed on this thread since the last reset.
pub fn mac_count() -> u64 {
    MAC_COUNT.with(|c| c.get())
}

/// Dense vector of `f64` values.
#[derive(Clone, Debug, PartialEq)]
pub struct Vector {
    data: Vec<f64>,
}

impl Vector {
    pub fn new(data: Vec<f64>) -> Self {
        Vector { data }
    }

    pub fn zeros(len: usize) -> Self {
        Vector {
            data: vec![0.0; len],
        }
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn iter(&self) -> std::slice::Iter<'_, f64> {
        self.data.iter()
    }

    /// Copy of this vector with `value` appended (used to fold biases in as a
    /// constant trailing component).
    pub fn appended(&self, value: f64) -> Vector {
        let mut data = Vec::with_capacity(self.data.len() + 1);
        data.extend_from_slice(&self.data);
        data.push(value);
        Vector { data }
    }

    pub fn truncated(&self, len: usize) -> Vector {
        Vector {
            data: self.data[..len].to_vec(),
        }
    }

    /// Elementwise map.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> Vector {
        Vector {
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    /// Elementwise product.
    pub fn hadamard(&self, other: &Vector) -> Result<Vector> {
        if self.len() != other.len() {
            return Err(len_mismatch("hadamard", self.len(), other.len()));
        }
        count_macs(self.len());
        Ok(Vector {
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(a, b)| a * b)
                .collect(),
        })
    }

    /// self += s * other, in place.
    pub fn axpy(&mut self, s: f64, other: &Vector) -> Result<()> {
        if self.len() != other.len() {
            return Err(len_mismatch("axpy", self.len(), other.len()));
        }
        count_macs(self.len());
        for (y, x) in self.data.iter_mut().zip(&other.data) {
            *y += s * x;
        }
        Ok(())
    }

    /// self += other, in place.
    pub fn add_assign(&mut self, other: &Vector) -> Result<()> {
        if self.len() != other.len() {
            return Err(len_mismatch("add", self.len(), other.len()));
        }
        count_macs(self.len());
        for (y, x) in self.data.iter_mut().zip(&other.data) {
            *y += x;
        }
        Ok(())
    }

    /// Difference `self - other`.
    pub fn sub(&self, other: &Vector) -> Result<Vector> {
        if self.len() != other.len() {
            return Err(len_mismatch("sub", self.len(), other.len()));
        }
        count_macs(self.len());
        Ok(Vector {
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(a, b)| a - b)
                .collect(),
        })
    }

    /// Scaled copy `s * self`.
    pub fn scaled(&self, s: f64) -> Vector {
        count_macs(self.len());
        self.map(|v| s * v)
    }

    /// Inner product, ascending index order.
    pub fn dot(&self, other: &Vector) -> Result<f64> {
        if self.len() != other.len() {
            return Err(len_mismatch("dot", self.len(), other.len()));
        }
        count_macs(self.len());
        let mut acc = 0.0;
        for (a, b) in self.data.iter().zip(&other.data) {
            acc += a * b;
        }
        Ok(acc)
    }

    /// Sum of absolute values, ascending index order.
    pub fn l1_norm(&self) -> f64 {
        count_macs(self.len());
        let mut acc = 0.0;
        for v in &self.data {
            acc += v.abs();
        }
        acc
    }

    /// Squared Euclidean norm, ascending index order.
    pub fn l2_norm_sq(&self) -> f64 {
        count_macs(self.len());
        let mut acc = 0.0;
        for v in &self.data {
            acc += v * v;
        }
        acc
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

impl std::ops::Index<usize> for Vector {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.data[i]
    }
}

impl std::ops::IndexMut<usize> for Vector {
    fn index_mut(&mut self, i: usize) -> &mut f64 {
        &mut self.data[i]
    }
}

impl From<Vec<f64>> for Vector {
    fn from(data: Vec<f64>) -> Self {
        Vector { data }
    }
}

/// Dense row-major matrix of `f64` values.
#[derive(Clone, Debug, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(LpError::DimensionMismatch {
                op: "Matrix::new",
                expected: format!("{} values ({rows}x{cols})", rows * cols),
                got: format!("{}", data.len()),
            });
        }
        Ok(Matrix { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let r = rows.len();
        let c = rows.first().map_or(0, |row| row.len());
        let mut data = Vec::with_capacity(r * c);
        for row in rows {
            if row.len() != c {
                return Err(LpError::DimensionMismatch {
                    op: "Matrix::from_rows",
                    expected: format!("{c} columns"),
                    got: format!("{}", row.len()),
                });
            }
            data.extend_from_slice(row);
        }
        Matrix::new(r, c, data)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    /// result[r] = sum_c m[r,c] * v[c], columns accumulated in ascending order.
    pub fn matvec(&self, v: &Vector) -> Result<Vector> {
        if self.cols != v.len() {
            return Err(LpError::DimensionMismatch {
                op: "matvec",
                expected: format!("vector of length {}", self.cols),
                got: format!("{}", v.len()),
            });
        }
        count_macs(self.rows * self.cols);
        let mut out = Vec::with_capacity(self.rows);
        for r in 0..self.rows {
            let row = &self.data[r * self.cols..(r + 1) * self.cols];
            let mut acc = 0.0;
            for (m, x) in row.iter().zip(v.iter()) {
                acc += m * x;
            }
            out.push(acc);
        }
        Ok(Vector::new(out))
    }

    /// result[c] = sum_r m[r,c] * v[r], rows accumulated in ascending order.
    pub fn matvec_transposed(&self, v: &Vector) -> Result<Vector> {
        if self.rows != v.len() {
            return Err(LpError::DimensionMismatch {
                op: "matvec_transposed",
                expected: format!("vector of length {}", self.rows),
                got: format!("{}", v.len()),
            });
        }
        count_macs(self.rows * self.cols);
        let mut out = vec![0.0; self.cols];
        for r in 0..self.rows {
            let row = &self.data[r * self.cols..(r + 1) * self.cols];
            let vr = v[r];
            for (acc, m) in out.iter_mut().zip(row.iter()) {
                *acc += m * vr;
            }
        }
        Ok(Vector::new(out))
    }

    pub fn transpose(&self) -> Matrix {
        let mut out = Matrix::zeros(self.cols, self.rows);
        for r in 0..self.rows {
            for c in 0..self.cols {
                out.set(c, r, self.get(r, c));
            }
        }
        out
    }

    /// self += s * other, in place.
    pub fn axpy(&mut self, s: f64, other: &Matrix) -> Result<()> {
        if self.rows != other.rows || self.cols != other.cols {
            return Err(LpError::DimensionMismatch {
                op: "Matrix::axpy",
                expected: format!("{}x{}", self.rows, self.cols),
                got: format!("{}x{}", other.rows, other.cols),
            });
        }
        count_macs(self.data.len());
        for (y, x) in self.data.iter_mut().zip(&other.data) {
            *y += s * x;
        }
        Ok(())
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

/// Outer product: result[r,c] = a[r] * b[c].
pub fn outer(a: &Vector, b: &Vector) -> Matrix {
    count_macs(a.len() * b.len());
    let mut data = Vec::with_capacity(a.len() * b.len());
    for r in 0..a.len() {
        for c in 0..b.len() {
            data.push(a[r] * b[c]);
        }
    }
    Matrix {
        rows: a.len(),
        cols: b.len(),
        data,
    }
}

fn len_mismatch(op: &'static str, a: usize, b: usize) -> LpError {
    LpError::DimensionMismatch {
        op,
        expected: format!("length {a}"),
        got: format!("length {b}"),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v(data: &[f64]) -> Vector {
        Vector::new(data.to_vec())
    }

    #[test]
    fn matvec_hand_values() {
        let m = Matrix::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap();
        assert_eq!(m.matvec(&v(&[1.0, 1.0])).unwrap(), v(&[3.0, 7.0]));
    }

    #[test]
    fn matvec_identity_and_zero() {
        let eye = Matrix::from_rows(&[
            vec![1.0, 0.0, 0.0],
            vec![0.0, 1.0, 0.0],
            vec![0.0, 0.0, 1.0],
        ])
        .unwrap();
        let x = v(&[0.5, -2.0, 3.25]);
        assert_eq!(eye.matvec(&x).unwrap(), x);
        let zero = Matrix::zeros(3, 3);
        assert_eq!(zero.matvec(&x).unwrap(), v(&[0.0, 0.0, 0.0]));
    }

    #[test]
    fn matvec_dimension_mismatch() {
        let m = Matrix::zeros(2, 3);
        assert!(m.matvec(&v(&[1.0, 2.0])).is_err());
        assert!(m.matvec_transposed(&v(&[1.0, 2.0, 3.0])).is_err());
    }

    #[test]
    fn matvec_transposed_hand_values() {
        let m = Matrix::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap();
        assert_eq!(m.matvec_transposed(&v(&[1.0, 1.0])).unwrap(), v(&[4.0, 6.0]));
        let one = Matrix::from_rows(&[vec![2.0]]).unwrap();
        assert_eq!(one.matvec_transposed(&v(&[-1.0])).unwrap(), v(&[-2.0]));
    }

    #[test]
    fn hadamard_hand_values() {
        assert_eq!(
            v(&[1.0, 2.0]).hadamard(&v(&[3.0, 4.0])).unwrap(),
            v(&[3.0, 8.0])
        );
        let x = v(&[1.5, -2.0]);
        assert_eq!(x.hadamard(&v(&[0.0, 0.0])).unwrap(), v(&[0.0, -0.0]));
        assert_eq!(x.hadamard(&v(&[1.0, 1.0])).unwrap(), x);
        assert!(x.hadamard(&v(&[1.0])).is_err());
    }

    #[test]
    fn outer_hand_values() {
        let m = outer(&v(&[1.0, 2.0]), &v(&[3.0, 4.0]));
        assert_eq!(
            m,
            Matrix::from_rows(&[vec![3.0, 4.0], vec![6.0, 8.0]]).unwrap()
        );
        assert_eq!(outer(&v(&[0.0, 0.0]), &v(&[5.0])), Matrix::zeros(2, 1));
        assert_eq!(
            outer(&v(&[1.0]), &v(&[1.0])),
            Matrix::from_rows(&[vec![1.0]]).unwrap()
        );
    }

    #[test]
    fn scalar_reductions() {
        let x = v(&[1.0, -2.0, 3.0]);
        assert_eq!(x.dot(&v(&[2.0, 1.0, 0.5])).unwrap(), 1.5);
        assert_eq!(x.l1_norm(), 6.0);
        assert_eq!(x.l2_norm_sq(), 14.0);
        assert!(x.dot(&v(&[1.0])).is_err());
    }

    #[test]
    fn axpy_and_scale() {
        let mut y = v(&[1.0, 1.0]);
        y.axpy(2.0, &v(&[3.0, -1.0])).unwrap();
        assert_eq!(y, v(&[7.0, -1.0]));
        assert_eq!(y.scaled(0.5), v(&[3.5, -0.5]));
        assert!(y.axpy(1.0, &v(&[1.0])).is_err());
    }

    #[test]
    fn deterministic_rerun_is_bitwise_identical() {
        let m = Matrix::from_rows(&[
            vec![0.1, 0.2, 0.3],
            vec![-0.7, 1.0 / 3.0, 0.9],
        ])
        .unwrap();
        let x = v(&[0.123456789, -0.987654321, 2.0 / 7.0]);
        let a = m.matvec(&x).unwrap();
        let b = m.matvec(&x).unwrap();
        assert_eq!(a.as_slice(), b.as_slice());
        let t = std::thread::spawn(move || m.matvec(&x).unwrap());
        assert_eq!(a.as_slice(), t.join().unwrap().as_slice());
    }

    #[test]
    fn mac_counter_tracks_matvec() {
        reset_mac_count();
        let m = Matrix::zeros(4, 5);
        let _ = m.matvec(&Vector::zeros(5)).unwrap();
        assert_eq!(mac_count(), 20);
        reset_mac_count();
        assert_eq!(mac_count(), 0);
    }
}

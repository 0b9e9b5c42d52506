//! Dense row-major matrices over `f32` or `f64`.

use crate::error::{Error, Result};

/// Floating-point scalar the engine can run on.
///
/// `f32` is the training precision; `f64` exists for gradient checking and
/// for the finite-element oracle. The trait collects the handful of
/// conversions and constants the engine needs beyond `std` float methods.
pub trait Scalar:
    Copy
    + PartialOrd
    + std::fmt::Debug
    + std::fmt::Display
    + std::ops::Add<Output = Self>
    + std::ops::Sub<Output = Self>
    + std::ops::Mul<Output = Self>
    + std::ops::Div<Output = Self>
    + std::ops::Neg<Output = Self>
    + std::ops::AddAssign
    + std::iter::Sum
    + Send
    + Sync
    + 'static
{
    const ZERO: Self;
    const ONE: Self;
    fn from_f64(x: f64) -> Self;
    fn to_f64(self) -> f64;
    fn sqrt(self) -> Self;
    fn exp(self) -> Self;
    fn tanh(self) -> Self;
    fn abs(self) -> Self;
    fn powf(self, e: Self) -> Self;
    fn is_finite(self) -> bool;
    fn max_val(self, other: Self) -> Self;
}

macro_rules! impl_scalar {
    ($t:ty) => {
        impl Scalar for $t {
            const ZERO: Self = 0.0;
            const ONE: Self = 1.0;
            #[inline]
            fn from_f64(x: f64) -> Self {
                x as $t
            }
            #[inline]
            fn to_f64(self) -> f64 {
                self as f64
            }
            #[inline]
            fn sqrt(self) -> Self {
                self.sqrt()
            }
            #[inline]
            fn exp(self) -> Self {
                self.exp()
            }
            #[inline]
            fn tanh(self) -> Self {
                self.tanh()
            }
            #[inline]
            fn abs(self) -> Self {
                self.abs()
            }
            #[inline]
            fn powf(self, e: Self) -> Self {
                self.powf(e)
            }
            #[inline]
            fn is_finite(self) -> bool {
                self.is_finite()
            }
            #[inline]
            fn max_val(self, other: Self) -> Self {
                self.max(other)
            }
        }
    };
}

impl_scalar!(f32);
impl_scalar!(f64);

/// Dense matrix with row-major storage.
///
/// Feature blocks are laid out one row per entity (node, element, edge) and
/// one column per channel, so a gather of rows is a gather of entities.
#[derive(Debug, Clone, PartialEq)]
pub struct Mat<F> {
    rows: usize,
    cols: usize,
    data: Vec<F>,
}

impl<F: Scalar> Mat<F> {
    /// Zero-filled matrix.
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Mat { rows, cols, data: vec![F::ZERO; rows * cols] }
    }

    /// Matrix filled with a single value.
    pub fn filled(rows: usize, cols: usize, value: F) -> Self {
        Mat { rows, cols, data: vec![value; rows * cols] }
    }

    /// Builds from a flat row-major buffer; the buffer length must be
    /// `rows * cols`.
    pub fn from_vec(rows: usize, cols: usize, data: Vec<F>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::shape(
                "Mat::from_vec",
                format!("buffer of {} values cannot fill {rows}x{cols}", data.len()),
            ));
        }
        Ok(Mat { rows, cols, data })
    }

    /// Builds from nested rows (convenient in tests); rows must be equal
    /// length and non-empty.
    pub fn from_rows(rows: &[Vec<F>]) -> Result<Self> {
        let r = rows.len();
        let c = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(r * c);
        for row in rows {
            if row.len() != c {
                return Err(Error::shape("Mat::from_rows", "ragged rows".to_string()));
            }
            data.extend_from_slice(row);
        }
        Ok(Mat { rows: r, cols: c, data })
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

    pub fn data(&self) -> &[F] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [F] {
        &mut self.data
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> F {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: F) {
        self.data[r * self.cols + c] = v;
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[F] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, r: usize) -> &mut [F] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    /// `self @ other` — plain triple loop in `i, k, j` order so the inner
    /// loop vectorises over contiguous rows of both operands.
    pub fn matmul(&self, other: &Mat<F>) -> Result<Mat<F>> {
        if self.cols != other.rows {
            return Err(Error::shape(
                "matmul",
                format!("{}x{} @ {}x{}", self.rows, self.cols, other.rows, other.cols),
            ));
        }
        let mut out = Mat::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            let a_row = self.row(i);
            let out_row = out.row_mut(i);
            for (k, &a) in a_row.iter().enumerate() {
                let b_row = other.row(k);
                for (o, &b) in out_row.iter_mut().zip(b_row) {
                    *o += a * b;
                }
            }
        }
        Ok(out)
    }

    /// `selfᵀ @ other`, used by backward passes without materialising the
    /// transpose.
    pub fn t_matmul(&self, other: &Mat<F>) -> Result<Mat<F>> {
        if self.rows != other.rows {
            return Err(Error::shape(
                "t_matmul",
                format!("{}x{} @ {}x{}", self.cols, self.rows, other.rows, other.cols),
            ));
        }
        let mut out = Mat::zeros(self.cols, other.cols);
        for i in 0..self.rows {
            let a_row = self.row(i);
            let b_row = other.row(i);
            for (k, &a) in a_row.iter().enumerate() {
                let out_row = out.row_mut(k);
                for (o, &b) in out_row.iter_mut().zip(b_row) {
                    *o += a * b;
                }
            }
        }
        Ok(out)
    }

    /// `self @ otherᵀ`.
    pub fn matmul_t(&self, other: &Mat<F>) -> Result<Mat<F>> {
        if self.cols != other.cols {
            return Err(Error::shape(
                "matmul_t",
                format!("{}x{} @ {}x{}", self.rows, self.cols, other.cols, other.rows),
            ));
        }
        let mut out = Mat::zeros(self.rows, other.rows);
        for i in 0..self.rows {
            let a_row = self.row(i);
            for j in 0..other.rows {
                let b_row = other.row(j);
                let mut acc = F::ZERO;
                for (&a, &b) in a_row.iter().zip(b_row) {
                    acc += a * b;
                }
                out.set(i, j, acc);
            }
        }
        Ok(out)
    }

    /// In-place `self += other`.
    pub fn add_assign(&mut self, other: &Mat<F>) -> Result<()> {
        if self.shape() != other.shape() {
            return Err(Error::shape(
                "add_assign",
                format!("{:?} += {:?}", self.shape(), other.shape()),
            ));
        }
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
        Ok(())
    }

    /// Elementwise map.
    pub fn map(&self, f: impl Fn(F) -> F) -> Mat<F> {
        Mat { rows: self.rows, cols: self.cols, data: self.data.iter().map(|&x| f(x)).collect() }
    }

    /// True when every entry is finite.
    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    /// Converts the scalar type entry by entry.
    pub fn cast<G: Scalar>(&self) -> Mat<G> {
        Mat {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|x| G::from_f64(x.to_f64())).collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn matmul_matches_hand_product() {
        let a = Mat::from_rows(&[vec![1.0_f64, 2.0], vec![3.0, 4.0]]).unwrap();
        let b = Mat::from_rows(&[vec![5.0, 6.0], vec![7.0, 8.0]]).unwrap();
        let c = a.matmul(&b).unwrap();
        assert_eq!(c.data(), &[19.0, 22.0, 43.0, 50.0]);
    }

    #[test]
    fn transpose_products_agree_with_explicit_transpose() {
        let a = Mat::from_rows(&[vec![1.0_f64, 2.0, 3.0], vec![4.0, 5.0, 6.0]]).unwrap();
        let b = Mat::from_rows(&[vec![1.0, 0.5], vec![-1.0, 2.0]]).unwrap();
        // aᵀ @ b computed two ways.
        let direct = a.t_matmul(&b).unwrap();
        let mut at = Mat::zeros(3, 2);
        for i in 0..2 {
            for j in 0..3 {
                at.set(j, i, a.get(i, j));
            }
        }
        let reference = at.matmul(&b).unwrap();
        for (x, y) in direct.data().iter().zip(reference.data()) {
            assert_abs_diff_eq!(x, y, epsilon = 1e-12);
        }
    }

    #[test]
    fn from_vec_rejects_wrong_length() {
        assert!(Mat::<f64>::from_vec(2, 2, vec![1.0; 3]).is_err());
    }
}

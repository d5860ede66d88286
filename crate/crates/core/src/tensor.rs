//! Dense row-major matrices and a thin strided-GEMM layer over
//! `matrixmultiply`, generic over `f32` (training) and `f64` (checks).

use std::fmt::{Debug, Display};
use std::iter::Sum;
use std::ops::{AddAssign, DivAssign, MulAssign, SubAssign};

use num_traits::{Float, FromPrimitive, ToPrimitive};
use serde::{Deserialize, Serialize};

pub trait Real:
    Float
    + FromPrimitive
    + ToPrimitive
    + Default
    + Debug
    + Display
    + Send
    + Sync
    + Sum
    + AddAssign
    + SubAssign
    + MulAssign
    + DivAssign
    + 'static
{
    /// `c = alpha * a @ b + beta * c` for strided operands.
    ///
    /// # Safety
    /// Every operand's strides and extents must stay within its buffer.
    #[allow(clippy::too_many_arguments)]
    unsafe fn gemm_raw(
        m: usize,
        k: usize,
        n: usize,
        alpha: Self,
        a: *const Self,
        rsa: isize,
        csa: isize,
        b: *const Self,
        rsb: isize,
        csb: isize,
        beta: Self,
        c: *mut Self,
        rsc: isize,
        csc: isize,
    );

    fn of(v: f64) -> Self {
        Self::from_f64(v).expect("finite conversion")
    }

    fn f64(self) -> f64 {
        self.to_f64().expect("finite conversion")
    }
}

impl Real for f32 {
    unsafe fn gemm_raw(
        m: usize,
        k: usize,
        n: usize,
        alpha: f32,
        a: *const f32,
        rsa: isize,
        csa: isize,
        b: *const f32,
        rsb: isize,
        csb: isize,
        beta: f32,
        c: *mut f32,
        rsc: isize,
        csc: isize,
    ) {
        matrixmultiply::sgemm(m, k, n, alpha, a, rsa, csa, b, rsb, csb, beta, c, rsc, csc)
    }
}

impl Real for f64 {
    unsafe fn gemm_raw(
        m: usize,
        k: usize,
        n: usize,
        alpha: f64,
        a: *const f64,
        rsa: isize,
        csa: isize,
        b: *const f64,
        rsb: isize,
        csb: isize,
        beta: f64,
        c: *mut f64,
        rsc: isize,
        csc: isize,
    ) {
        matrixmultiply::dgemm(m, k, n, alpha, a, rsa, csa, b, rsb, csb, beta, c, rsc, csc)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Matrix<T> {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<T>,
}

impl<T: Real> Matrix<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![T::zero(); rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<T>) -> Self {
        assert_eq!(data.len(), rows * cols, "matrix buffer size");
        Self { rows, cols, data }
    }

    pub fn from_rows(rows: &[Vec<T>]) -> Self {
        let cols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            assert_eq!(r.len(), cols, "ragged rows");
            data.extend_from_slice(r);
        }
        Self {
            rows: rows.len(),
            cols,
            data,
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = T::one();
        }
        m
    }

    pub fn row(&self, r: usize) -> &[T] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [T] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn get(&self, r: usize, c: usize) -> T {
        self.data[r * self.cols + c]
    }

    pub fn view(&self) -> View<'_, T> {
        View {
            data: &self.data,
            rows: self.rows,
            cols: self.cols,
            rs: self.cols as isize,
            cs: 1,
        }
    }

    pub fn t(&self) -> View<'_, T> {
        self.view().t()
    }

    /// Columns `[start, start + width)` of every row.
    pub fn cols_view(&self, start: usize, width: usize) -> View<'_, T> {
        assert!(start + width <= self.cols);
        View {
            data: &self.data[start..],
            rows: self.rows,
            cols: width,
            rs: self.cols as isize,
            cs: 1,
        }
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn cast<U: Real>(&self) -> Matrix<U> {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|v| U::of(v.f64())).collect(),
        }
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a.f64() - b.f64()).abs())
            .fold(0.0, f64::max)
    }
}

/// Borrowed strided matrix operand.
#[derive(Clone, Copy)]
pub struct View<'a, T> {
    data: &'a [T],
    pub rows: usize,
    pub cols: usize,
    rs: isize,
    cs: isize,
}

impl<'a, T> View<'a, T> {
    /// Dense row-major view over the first `rows * cols` elements of `data`.
    pub fn from_slice(data: &'a [T], rows: usize, cols: usize) -> Self {
        assert!(data.len() >= rows * cols, "slice too short for view");
        View {
            data,
            rows,
            cols,
            rs: cols as isize,
            cs: 1,
        }
    }

    /// Columns `[start, start + width)` of this view.
    pub fn cols(self, start: usize, width: usize) -> Self {
        assert!(start + width <= self.cols);
        let offset = (start as isize * self.cs) as usize;
        View {
            data: &self.data[offset..],
            rows: self.rows,
            cols: width,
            rs: self.rs,
            cs: self.cs,
        }
    }

    /// Rows `[start, start + count)` of this view.
    pub fn rows(self, start: usize, count: usize) -> Self {
        assert!(start + count <= self.rows);
        let offset = (start as isize * self.rs) as usize;
        View {
            data: &self.data[offset..],
            rows: count,
            cols: self.cols,
            rs: self.rs,
            cs: self.cs,
        }
    }

    pub fn t(self) -> Self {
        View {
            data: self.data,
            rows: self.cols,
            cols: self.rows,
            rs: self.cs,
            cs: self.rs,
        }
    }

    fn check(&self) {
        if self.rows > 0 && self.cols > 0 {
            let last = (self.rows as isize - 1) * self.rs + (self.cols as isize - 1) * self.cs;
            assert!((last as usize) < self.data.len(), "view out of bounds");
        }
    }
}

/// Mutable strided destination.
pub struct ViewMut<'a, T> {
    data: &'a mut [T],
    pub rows: usize,
    pub cols: usize,
    rs: isize,
}

impl<'a, T: Real> ViewMut<'a, T> {
    pub fn from_slice(data: &'a mut [T], rows: usize, cols: usize) -> Self {
        assert!(data.len() >= rows * cols, "slice too short for view");
        ViewMut {
            data,
            rows,
            cols,
            rs: cols as isize,
        }
    }

    pub fn of(m: &'a mut Matrix<T>) -> Self {
        let (rows, cols) = (m.rows, m.cols);
        ViewMut {
            data: &mut m.data,
            rows,
            cols,
            rs: cols as isize,
        }
    }

    pub fn cols_of(m: &'a mut Matrix<T>, start: usize, width: usize) -> Self {
        let rows = m.rows;
        Self::block(m, 0, rows, start, width)
    }

    /// Rows `[row, row + rows)` and columns `[col, col + cols)` of `m`.
    pub fn block(m: &'a mut Matrix<T>, row: usize, rows: usize, col: usize, cols: usize) -> Self {
        assert!(row + rows <= m.rows && col + cols <= m.cols, "block out of bounds");
        let stride = m.cols;
        ViewMut {
            data: &mut m.data[row * stride + col..],
            rows,
            cols,
            rs: stride as isize,
        }
    }
}

/// `c = alpha * a @ b + beta * c`.
pub fn gemm<T: Real>(alpha: T, a: View<'_, T>, b: View<'_, T>, beta: T, c: ViewMut<'_, T>) {
    assert_eq!(a.cols, b.rows, "inner dimensions");
    assert_eq!((a.rows, b.cols), (c.rows, c.cols), "output dimensions");
    a.check();
    b.check();
    if c.rows > 0 && c.cols > 0 {
        let last = (c.rows - 1) * c.rs as usize + c.cols - 1;
        assert!(last < c.data.len(), "output view out of bounds");
    }
    if c.rows == 0 || c.cols == 0 {
        return;
    }
    if a.rows <= SMALL_ROWS {
        small_gemm(alpha, a, b, beta, c);
        return;
    }
    // SAFETY: extents were checked against each buffer above.
    unsafe {
        T::gemm_raw(
            a.rows,
            a.cols,
            b.cols,
            alpha,
            a.data.as_ptr(),
            a.rs,
            a.cs,
            b.data.as_ptr(),
            b.rs,
            b.cs,
            beta,
            c.data.as_mut_ptr(),
            c.rs,
            1,
        )
    }
}

/// Below this many output rows the packing overhead of the blocked kernel
/// dominates; decoding steps take the direct loop instead.
const SMALL_ROWS: usize = 4;

fn small_gemm<T: Real>(alpha: T, a: View<'_, T>, b: View<'_, T>, beta: T, c: ViewMut<'_, T>) {
    let mut acc = vec![T::zero(); c.cols];
    for i in 0..a.rows {
        acc.fill(T::zero());
        for k in 0..a.cols {
            let aik = a.data[(i as isize * a.rs + k as isize * a.cs) as usize];
            let base = k as isize * b.rs;
            if b.cs == 1 {
                let row = &b.data[base as usize..base as usize + b.cols];
                for (s, &bv) in acc.iter_mut().zip(row) {
                    *s += aik * bv;
                }
            } else {
                for (j, s) in acc.iter_mut().enumerate() {
                    *s += aik * b.data[(base + j as isize * b.cs) as usize];
                }
            }
        }
        let row = &mut c.data[i * c.rs as usize..i * c.rs as usize + c.cols];
        for (dst, &s) in row.iter_mut().zip(&acc) {
            *dst = if beta == T::zero() { alpha * s } else { alpha * s + beta * *dst };
        }
    }
}

pub fn matmul<T: Real>(a: View<'_, T>, b: View<'_, T>) -> Matrix<T> {
    let mut out = Matrix::zeros(a.rows, b.cols);
    gemm(T::one(), a, b, T::zero(), ViewMut::of(&mut out));
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gemm_with_transposes_and_column_views() {
        let a = Matrix::from_rows(&[vec![1.0, 2.0, 3.0], vec![4.0, 5.0, 6.0]]);
        let b = Matrix::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0], vec![1.0, 1.0]]);
        let c = matmul(a.view(), b.view());
        assert_eq!(c.data, vec![4.0, 5.0, 10.0, 11.0]);
        let ct = matmul(b.t(), a.t());
        assert_eq!(ct.data, vec![4.0, 10.0, 5.0, 11.0]);

        let sub = matmul(a.cols_view(1, 2), Matrix::<f64>::identity(2).view());
        assert_eq!(sub.data, vec![2.0, 3.0, 5.0, 6.0]);

        let mut out = Matrix::<f64>::zeros(2, 4);
        gemm(1.0, a.view(), b.view(), 0.0, ViewMut::cols_of(&mut out, 2, 2));
        assert_eq!(out.data, vec![0.0, 0.0, 4.0, 5.0, 0.0, 0.0, 10.0, 11.0]);
    }
}

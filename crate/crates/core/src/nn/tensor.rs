use std::fmt::Debug;
use std::iter::Sum;
use std::ops::{AddAssign, MulAssign, SubAssign};

/// Scalar type of the engine: `f32` for training, `f64` for gradient checks.
pub trait Float:
    num_traits::Float + AddAssign + SubAssign + MulAssign + Sum + Default + Debug + Send + Sync + 'static
{
    fn of(x: f64) -> Self;
    fn as_f64(self) -> f64;

    /// `C = alpha·A·B + beta·C` on strided views.
    ///
    /// # Safety
    /// All strided index ranges must lie inside the pointed-to buffers and
    /// `c` must not alias `a` or `b`.
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
}

impl Float for f32 {
    fn of(x: f64) -> Self {
        x as f32
    }
    fn as_f64(self) -> f64 {
        self as f64
    }
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

impl Float for f64 {
    fn of(x: f64) -> Self {
        x
    }
    fn as_f64(self) -> f64 {
        self
    }
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

/// Strided read-only matrix view into a slice.
#[derive(Clone, Copy)]
pub(crate) struct View<'a, F> {
    pub data: &'a [F],
    pub offset: usize,
    pub rows: usize,
    pub cols: usize,
    pub rs: usize,
    pub cs: usize,
}

impl<'a, F> View<'a, F> {
    /// Row-major block `rows × cols` starting at `offset` with row stride `rs`.
    pub fn block(data: &'a [F], offset: usize, rows: usize, cols: usize, rs: usize) -> Self {
        View {
            data,
            offset,
            rows,
            cols,
            rs,
            cs: 1,
        }
    }

    pub fn t(self) -> Self {
        View {
            rows: self.cols,
            cols: self.rows,
            rs: self.cs,
            cs: self.rs,
            ..self
        }
    }

    fn last(&self) -> usize {
        if self.rows == 0 || self.cols == 0 {
            self.offset
        } else {
            self.offset + (self.rows - 1) * self.rs + (self.cols - 1) * self.cs
        }
    }
}

/// `C[offset..] (rows × cols, row stride rs) = alpha·A·B + beta·C`.
#[allow(clippy::too_many_arguments)]
pub(crate) fn gemm<F: Float>(
    alpha: F,
    a: View<F>,
    b: View<F>,
    beta: F,
    c: &mut [F],
    c_offset: usize,
    c_rs: usize,
) {
    assert_eq!(a.cols, b.rows, "gemm inner dimension");
    let (m, k, n) = (a.rows, a.cols, b.cols);
    if m == 0 || n == 0 {
        return;
    }
    assert!(a.last() < a.data.len().max(1) && b.last() < b.data.len().max(1));
    assert!(c_offset + (m - 1) * c_rs + n <= c.len());
    if k == 0 {
        for i in 0..m {
            for x in &mut c[c_offset + i * c_rs..c_offset + i * c_rs + n] {
                *x *= beta;
            }
        }
        return;
    }
    // SAFETY: the bounds of every view were checked above and `c` is a
    // distinct mutable borrow.
    unsafe {
        F::gemm_raw(
            m,
            k,
            n,
            alpha,
            a.data.as_ptr().add(a.offset),
            a.rs as isize,
            a.cs as isize,
            b.data.as_ptr().add(b.offset),
            b.rs as isize,
            b.cs as isize,
            beta,
            c.as_mut_ptr().add(c_offset),
            c_rs as isize,
            1,
        )
    }
}

/// Dense row-major matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Mat<F> {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<F>,
}

impl<F: Float> Mat<F> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Mat {
            rows,
            cols,
            data: vec![F::zero(); rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<F>) -> Self {
        assert_eq!(data.len(), rows * cols, "matrix data length");
        Mat { rows, cols, data }
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> F) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                data.push(f(r, c));
            }
        }
        Mat { rows, cols, data }
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn at(&self, r: usize, c: usize) -> F {
        self.data[r * self.cols + c]
    }

    pub fn row(&self, r: usize) -> &[F] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [F] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub(crate) fn view(&self) -> View<'_, F> {
        View::block(&self.data, 0, self.rows, self.cols, self.cols)
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    pub fn add_assign(&mut self, other: &Mat<F>) {
        assert_eq!(self.shape(), other.shape());
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += *b;
        }
    }

    pub fn scale(&mut self, s: F) {
        for x in &mut self.data {
            *x *= s;
        }
    }

    pub fn fill(&mut self, v: F) {
        self.data.iter_mut().for_each(|x| *x = v);
    }

    pub fn sum_sq(&self) -> f64 {
        self.data.iter().map(|x| x.as_f64() * x.as_f64()).sum()
    }

    pub fn matmul(&self, other: &Mat<F>) -> Mat<F> {
        let mut out = Mat::zeros(self.rows, other.cols);
        gemm(F::one(), self.view(), other.view(), F::zero(), &mut out.data, 0, other.cols);
        out
    }

    pub fn transpose(&self) -> Mat<F> {
        Mat::from_fn(self.cols, self.rows, |r, c| self.at(c, r))
    }

    pub fn cast<G: Float>(&self) -> Mat<G> {
        Mat {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|x| G::of(x.as_f64())).collect(),
        }
    }

    /// Rows `start..end` as a new matrix.
    pub fn rows_range(&self, start: usize, end: usize) -> Mat<F> {
        Mat::from_vec(end - start, self.cols, self.data[start * self.cols..end * self.cols].to_vec())
    }
}

/// Numerically stable in-place softmax of one row.
pub(crate) fn softmax_in_place<F: Float>(row: &mut [F]) {
    let max = row.iter().copied().fold(F::neg_infinity(), F::max);
    let mut sum = F::zero();
    for x in row.iter_mut() {
        *x = if *x == F::neg_infinity() { F::zero() } else { (*x - max).exp() };
        sum += *x;
    }
    let inv = F::one() / sum;
    for x in row.iter_mut() {
        *x *= inv;
    }
}

/// `log Σ exp(row)`.
pub fn log_sum_exp<F: Float>(row: &[F]) -> F {
    let max = row.iter().copied().fold(F::neg_infinity(), F::max);
    let s: F = row.iter().map(|&x| (x - max).exp()).sum();
    max + s.ln()
}

/// Log-softmax of a logit vector.
pub fn log_softmax<F: Float>(row: &[F]) -> Vec<F> {
    let lse = log_sum_exp(row);
    row.iter().map(|&x| x - lse).collect()
}

use std::fmt::{Debug, Display};
use std::iter::Sum;
use std::ops::{AddAssign, DivAssign, MulAssign, SubAssign};

use num_traits::{Float, FromPrimitive, ToPrimitive};

/// Floating-point element type of network tensors.
///
/// Production models run in `f32`; gradient checks instantiate the same
/// code in `f64`.
pub trait Real:
    Float
    + FromPrimitive
    + ToPrimitive
    + Sum
    + AddAssign
    + SubAssign
    + MulAssign
    + DivAssign
    + Debug
    + Display
    + Default
    + Send
    + Sync
    + 'static
{
    /// `c = alpha * a * b + beta * c` over strided operands.
    ///
    /// Strides are `(row, column)` in elements and must be non-negative.
    #[allow(clippy::too_many_arguments)]
    fn gemm(
        m: usize,
        k: usize,
        n: usize,
        alpha: Self,
        a: &[Self],
        a_strides: (usize, usize),
        b: &[Self],
        b_strides: (usize, usize),
        beta: Self,
        c: &mut [Self],
        c_strides: (usize, usize),
    );

    fn from_f64_lossy(x: f64) -> Self {
        <Self as FromPrimitive>::from_f64(x).expect("finite conversion")
    }

    fn to_f64_lossy(self) -> f64 {
        ToPrimitive::to_f64(&self).unwrap_or(f64::NAN)
    }
}

fn check_extent(rows: usize, cols: usize, strides: (usize, usize), len: usize, what: &str) {
    if rows == 0 || cols == 0 {
        return;
    }
    let last = (rows - 1) * strides.0 + (cols - 1) * strides.1;
    assert!(last < len, "gemm operand {what} out of bounds: {last} >= {len}");
}

macro_rules! impl_real {
    ($t:ty, $gemm:path) => {
        impl Real for $t {
            fn gemm(
                m: usize,
                k: usize,
                n: usize,
                alpha: Self,
                a: &[Self],
                a_strides: (usize, usize),
                b: &[Self],
                b_strides: (usize, usize),
                beta: Self,
                c: &mut [Self],
                c_strides: (usize, usize),
            ) {
                check_extent(m, k, a_strides, a.len(), "a");
                check_extent(k, n, b_strides, b.len(), "b");
                check_extent(m, n, c_strides, c.len(), "c");
                if m == 0 || n == 0 {
                    return;
                }
                // SAFETY: every index touched by the kernel is bounded by the
                // extent checks above, and `c` does not alias `a` or `b`.
                unsafe {
                    $gemm(
                        m,
                        k,
                        n,
                        alpha,
                        a.as_ptr(),
                        a_strides.0 as isize,
                        a_strides.1 as isize,
                        b.as_ptr(),
                        b_strides.0 as isize,
                        b_strides.1 as isize,
                        beta,
                        c.as_mut_ptr(),
                        c_strides.0 as isize,
                        c_strides.1 as isize,
                    );
                }
            }
        }
    };
}

impl_real!(f32, matrixmultiply::sgemm);
impl_real!(f64, matrixmultiply::dgemm);

/// `c (m×n) = a (m×k) · b (k×n)`, all row-major; accumulates into `c` when
/// `accumulate` is set.
pub(crate) fn matmul<F: Real>(
    m: usize,
    k: usize,
    n: usize,
    a: &[F],
    b: &[F],
    c: &mut [F],
    accumulate: bool,
) {
    let beta = if accumulate { F::one() } else { F::zero() };
    F::gemm(m, k, n, F::one(), a, (k, 1), b, (n, 1), beta, c, (n, 1));
}

/// `c (m×n) = aᵀ · b` where `a` is stored row-major as k×m.
pub(crate) fn matmul_tn<F: Real>(
    m: usize,
    k: usize,
    n: usize,
    a: &[F],
    b: &[F],
    c: &mut [F],
    accumulate: bool,
) {
    let beta = if accumulate { F::one() } else { F::zero() };
    F::gemm(m, k, n, F::one(), a, (1, m), b, (n, 1), beta, c, (n, 1));
}

/// `c (m×n) = a · bᵀ` where `b` is stored row-major as n×k.
pub(crate) fn matmul_nt<F: Real>(
    m: usize,
    k: usize,
    n: usize,
    a: &[F],
    b: &[F],
    c: &mut [F],
    accumulate: bool,
) {
    let beta = if accumulate { F::one() } else { F::zero() };
    F::gemm(m, k, n, F::one(), a, (k, 1), b, (1, k), beta, c, (n, 1));
}

#[cfg(test)]
mod tests {
    use super::*;

    fn naive(m: usize, k: usize, n: usize, a: &[f64], b: &[f64]) -> Vec<f64> {
        let mut c = vec![0.0; m * n];
        for i in 0..m {
            for j in 0..n {
                for p in 0..k {
                    c[i * n + j] += a[i * k + p] * b[p * n + j];
                }
            }
        }
        c
    }

    fn transpose(rows: usize, cols: usize, x: &[f64]) -> Vec<f64> {
        let mut t = vec![0.0; x.len()];
        for r in 0..rows {
            for c in 0..cols {
                t[c * rows + r] = x[r * cols + c];
            }
        }
        t
    }

    #[test]
    fn matmul_variants_agree_with_naive_product() {
        let (m, k, n) = (3, 4, 5);
        let a: Vec<f64> = (0..m * k).map(|i| (i as f64 * 0.37).sin()).collect();
        let b: Vec<f64> = (0..k * n).map(|i| (i as f64 * 0.11).cos()).collect();
        let expected = naive(m, k, n, &a, &b);

        let mut c = vec![0.0; m * n];
        matmul(m, k, n, &a, &b, &mut c, false);
        for (x, y) in c.iter().zip(&expected) {
            assert!((x - y).abs() < 1e-12);
        }

        let at = transpose(m, k, &a);
        let mut c = vec![0.0; m * n];
        matmul_tn(m, k, n, &at, &b, &mut c, false);
        for (x, y) in c.iter().zip(&expected) {
            assert!((x - y).abs() < 1e-12);
        }

        let bt = transpose(k, n, &b);
        let mut c = vec![1.0; m * n];
        matmul_nt(m, k, n, &a, &bt, &mut c, true);
        for (x, y) in c.iter().zip(&expected) {
            assert!((x - (y + 1.0)).abs() < 1e-12);
        }
    }
}

//! Shared numeric helpers: transcendental shims, log-sum-exp and a dense
//! Cholesky factorization for symmetric positive definite systems.
//!
//! All transcendental functions route through `libm` so the crate builds
//! without `std`.

use alloc::vec;
use alloc::vec::Vec;

use ndarray::Array2;

#[inline]
pub(crate) fn exp(x: f64) -> f64 {
    libm::exp(x)
}

#[inline]
pub(crate) fn ln(x: f64) -> f64 {
    libm::log(x)
}

#[inline]
pub(crate) fn sqrt(x: f64) -> f64 {
    libm::sqrt(x)
}

#[inline]
pub(crate) fn abs(x: f64) -> f64 {
    libm::fabs(x)
}

/// `ln Σ exp(x_i)` with the running maximum subtracted so that terms near
/// the overflow threshold stay finite. Returns `-inf` for an empty slice.
pub(crate) fn logsumexp(xs: &[f64]) -> f64 {
    let mut max = f64::NEG_INFINITY;
    for &x in xs {
        if x > max {
            max = x;
        }
    }
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    let mut sum = 0.0;
    for &x in xs {
        sum += exp(x - max);
    }
    max + ln(sum)
}

/// Two-sided tail probability of a standard normal variate,
/// `P(|Z| > |t|) = erfc(|t| / sqrt(2))`.
pub(crate) fn normal_two_sided_p(t: f64) -> f64 {
    libm::erfc(abs(t) / core::f64::consts::SQRT_2)
}

/// Lower-triangular Cholesky factor of a symmetric positive definite matrix.
///
/// Construction fails when a pivot falls below a relative tolerance of the
/// largest diagonal entry, which covers both indefinite and numerically
/// singular inputs.
pub(crate) struct Cholesky {
    l: Array2<f64>,
}

/// Pivot tolerance relative to the largest diagonal entry of the input.
const PIVOT_RTOL: f64 = 1e-13;

impl Cholesky {
    pub(crate) fn new(a: &Array2<f64>) -> Option<Self> {
        Self::factor_with_pivot(a).ok().map(|l| Self { l })
    }

    /// Factors `a`, or reports the index of the first pivot that fails.
    /// The failing index identifies the row/column that is numerically
    /// dependent on its predecessors.
    pub(crate) fn factor_with_pivot(
        a: &Array2<f64>,
    ) -> core::result::Result<Array2<f64>, usize> {
        let n = a.nrows();
        if a.ncols() != n {
            return Err(0);
        }
        let mut max_diag = 0.0_f64;
        for i in 0..n {
            let d = abs(a[[i, i]]);
            if d > max_diag {
                max_diag = d;
            }
        }
        if max_diag <= 0.0 || !max_diag.is_finite() {
            return Err(0);
        }
        let floor = max_diag * PIVOT_RTOL;
        let mut l = Array2::<f64>::zeros((n, n));
        for i in 0..n {
            for j in 0..=i {
                let mut sum = a[[i, j]];
                for k in 0..j {
                    sum -= l[[i, k]] * l[[j, k]];
                }
                if i == j {
                    // NaN pivots must fail here, not propagate.
                    if sum.is_nan() || sum <= floor {
                        return Err(i);
                    }
                    l[[i, j]] = sqrt(sum);
                } else {
                    l[[i, j]] = sum / l[[j, j]];
                }
            }
        }
        Ok(l)
    }

    /// Solves `A x = b` by forward then backward substitution.
    pub(crate) fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = self.l.nrows();
        debug_assert_eq!(b.len(), n);
        let mut y = vec![0.0; n];
        for i in 0..n {
            let mut sum = b[i];
            for k in 0..i {
                sum -= self.l[[i, k]] * y[k];
            }
            y[i] = sum / self.l[[i, i]];
        }
        let mut x = vec![0.0; n];
        for i in (0..n).rev() {
            let mut sum = y[i];
            for k in (i + 1)..n {
                sum -= self.l[[k, i]] * x[k];
            }
            x[i] = sum / self.l[[i, i]];
        }
        x
    }

    /// Inverse of the factored matrix, assembled column by column.
    pub(crate) fn inverse(&self) -> Array2<f64> {
        let n = self.l.nrows();
        let mut inv = Array2::<f64>::zeros((n, n));
        let mut e = vec![0.0; n];
        for j in 0..n {
            e[j] = 1.0;
            let col = self.solve(&e);
            e[j] = 0.0;
            for i in 0..n {
                inv[[i, j]] = col[i];
            }
        }
        // Symmetrize to remove the tiny forward/backward substitution skew.
        for i in 0..n {
            for j in 0..i {
                let avg = 0.5 * (inv[[i, j]] + inv[[j, i]]);
                inv[[i, j]] = avg;
                inv[[j, i]] = avg;
            }
        }
        inv
    }
}

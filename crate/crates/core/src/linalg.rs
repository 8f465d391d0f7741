//! Small dense complex Hermitian kernels.
//!
//! Matrices here are tiny (a handful of signal variables) and evaluated
//! millions of times inside the Monte Carlo loops, so everything works on a
//! flat row-major buffer and touches only the lower triangle.

use num_complex::Complex64;

/// Largest pivot-based condition estimate accepted for a conditioning block.
pub const MAX_CONDITION: f64 = 1e14;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LinalgError {
    /// A conditioning block is numerically singular.
    Singular { condition: f64 },
    /// A block whose determinant is needed is not positive definite.
    NonPositive,
}

const STACK_CAP: usize = 64;

/// Cholesky elimination of pivots `start..end` on a row-major `n × n` buffer.
fn eliminate(data: &mut [Complex64], n: usize, start: usize, end: usize, check_condition: bool) -> Result<f64, LinalgError> {
    let mut max_diag = 0.0_f64;
    for j in start..end {
        max_diag = max_diag.max(data[j * n + j].re);
    }
    let mut min_pivot = f64::INFINITY;
    let mut log_det = 0.0;
    for j in start..end {
        let pivot = data[j * n + j].re;
        if !(pivot > 0.0) || !pivot.is_finite() {
            return Err(if check_condition {
                LinalgError::Singular { condition: f64::INFINITY }
            } else {
                LinalgError::NonPositive
            });
        }
        min_pivot = min_pivot.min(pivot);
        log_det += pivot.ln();
        let inv = 1.0 / pivot.sqrt();
        for i in (j + 1)..n {
            data[i * n + j] *= inv;
        }
        for i in (j + 1)..n {
            let lij = data[i * n + j];
            if lij.re == 0.0 && lij.im == 0.0 {
                continue;
            }
            let (head, tail) = data.split_at_mut(i * n);
            let row_i = &mut tail[..=i];
            for m in (j + 1)..=i {
                let lmj = if m == i { row_i[j] } else { head[m * n + j] };
                row_i[m] -= lij * lmj.conj();
            }
        }
    }
    if check_condition && end > start {
        let condition = max_diag / min_pivot;
        if condition > MAX_CONDITION {
            return Err(LinalgError::Singular { condition });
        }
    }
    Ok(log_det)
}

/// Row-major square scratch matrix; only the lower triangle is meaningful.
#[derive(Debug, Clone)]
pub struct Lower {
    n: usize,
    data: Vec<Complex64>,
}

impl Lower {
    pub fn zeros(n: usize) -> Self {
        Self {
            n,
            data: vec![Complex64::new(0.0, 0.0); n * n],
        }
    }

    /// Gathers `order × order` from a column-major `dim × dim` source.
    pub fn gather(src: &[Complex64], dim: usize, order: &[usize]) -> Self {
        let n = order.len();
        let mut data = Vec::with_capacity(n * n);
        for &r in order {
            for &c in order {
                // column-major: element (r, c) lives at c * dim + r
                data.push(src[c * dim + r]);
            }
        }
        Self { n, data }
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> Complex64 {
        self.data[i * self.n + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: Complex64) {
        self.data[i * self.n + j] = v;
    }

    /// Copies the trailing `[from, n)` block.
    pub fn trailing(&self, from: usize) -> Self {
        let m = self.n - from;
        let mut out = Self::zeros(m);
        for i in 0..m {
            for j in 0..=i {
                out.set(i, j, self.get(from + i, from + j));
            }
        }
        out
    }

    /// Runs Cholesky elimination on pivots `start..end`, leaving the Schur
    /// complement of the eliminated block in the trailing lower triangle.
    ///
    /// With `check_condition`, the block counts as singular when a pivot is
    /// not positive or the ratio of its largest diagonal entry to its
    /// smallest pivot exceeds [`MAX_CONDITION`]. Returns the sum of the
    /// natural logs of the pivots.
    pub fn eliminate(&mut self, start: usize, end: usize, check_condition: bool) -> Result<f64, LinalgError> {
        eliminate(&mut self.data, self.n, start, end, check_condition)
    }

    /// Natural log-determinant of the trailing `[from, n)` block, leaving
    /// `self` untouched.
    pub fn trailing_log_det(&self, from: usize) -> Result<f64, LinalgError> {
        let m = self.n - from;
        let mut stack = [Complex64::new(0.0, 0.0); STACK_CAP];
        let mut heap;
        let buf: &mut [Complex64] = if m * m <= STACK_CAP {
            &mut stack[..m * m]
        } else {
            heap = vec![Complex64::new(0.0, 0.0); m * m];
            &mut heap
        };
        for i in 0..m {
            let row = (from + i) * self.n + from;
            buf[i * m..i * m + i + 1].copy_from_slice(&self.data[row..row + i + 1]);
        }
        eliminate(buf, m, 0, m, false)
    }

    /// Natural log-determinant of the whole matrix (destroys it).
    pub fn log_det(mut self) -> Result<f64, LinalgError> {
        let n = self.n;
        self.eliminate(0, n, false)
    }

    /// Expands the lower triangle into a full Hermitian column-major buffer.
    pub fn to_full_column_major(&self) -> Vec<Complex64> {
        let n = self.n;
        let mut out = vec![Complex64::new(0.0, 0.0); n * n];
        for i in 0..n {
            for j in 0..=i {
                let v = self.get(i, j);
                out[j * n + i] = v;
                out[i * n + j] = v.conj();
            }
            out[i * n + i] = Complex64::new(self.get(i, i).re, 0.0);
        }
        out
    }
}

/// Lower Cholesky factor of a Hermitian positive definite matrix given in
/// full row-major form. Used to build linear factors of input covariances.
pub fn cholesky_factor(full: &[Complex64], n: usize) -> Result<Vec<Complex64>, LinalgError> {
    let mut l = vec![Complex64::new(0.0, 0.0); n * n];
    for j in 0..n {
        let mut d = full[j * n + j].re;
        for k in 0..j {
            d -= l[j * n + k].norm_sqr();
        }
        if !(d > 0.0) {
            return Err(LinalgError::NonPositive);
        }
        let ljj = d.sqrt();
        l[j * n + j] = Complex64::new(ljj, 0.0);
        for i in (j + 1)..n {
            let mut s = full[i * n + j];
            for k in 0..j {
                s -= l[i * n + k] * l[j * n + k].conj();
            }
            l[i * n + j] = s / ljj;
        }
    }
    Ok(l)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64) -> Complex64 {
        Complex64::new(re, 0.0)
    }

    #[test]
    fn schur_of_two_by_two() {
        // [[2, 1], [1, 2]] eliminating the first pivot leaves 2 - 1/2
        let src = vec![c(2.0), c(1.0), c(1.0), c(2.0)];
        let mut m = Lower::gather(&src, 2, &[0, 1]);
        let ld = m.eliminate(0, 1, false).unwrap();
        assert!((ld - 2.0_f64.ln()).abs() < 1e-15);
        assert!((m.get(1, 1).re - 1.5).abs() < 1e-15);
    }

    #[test]
    fn log_det_complex_hermitian() {
        // det [[2, i], [-i, 2]] = 4 - 1 = 3 ; column-major storage
        let src = vec![c(2.0), Complex64::new(0.0, -1.0), Complex64::new(0.0, 1.0), c(2.0)];
        let m = Lower::gather(&src, 2, &[0, 1]);
        assert!((m.log_det().unwrap() - 3.0_f64.ln()).abs() < 1e-14);
    }

    #[test]
    fn singular_block_is_reported() {
        let src = vec![c(1.0), c(1.0), c(1.0), c(1.0)];
        let mut m = Lower::gather(&src, 2, &[0, 1]);
        assert!(matches!(m.eliminate(0, 2, true), Err(LinalgError::Singular { .. })));
    }

    #[test]
    fn non_positive_without_condition_check() {
        let src = vec![c(-1.0)];
        assert_eq!(Lower::gather(&src, 1, &[0]).log_det(), Err(LinalgError::NonPositive));
    }

    #[test]
    fn cholesky_factor_reproduces_matrix() {
        let full = vec![c(4.0), Complex64::new(1.0, 1.0), Complex64::new(1.0, -1.0), c(3.0)];
        let l = cholesky_factor(&full, 2).unwrap();
        for i in 0..2 {
            for j in 0..2 {
                let mut s = c(0.0);
                for k in 0..2 {
                    s += l[i * 2 + k] * l[j * 2 + k].conj();
                }
                assert!((s - full[i * 2 + j]).norm() < 1e-14);
            }
        }
    }
}

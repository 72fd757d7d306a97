//! Strided dense products on top of `matrixmultiply`.

/// Read-only matrix view with explicit row and column strides.
#[derive(Clone, Copy)]
pub struct View<'a> {
    pub data: &'a [f64],
    pub rs: usize,
    pub cs: usize,
}

impl<'a> View<'a> {
    /// Row-major storage with leading dimension `ld`.
    pub fn rm(data: &'a [f64], ld: usize) -> Self {
        View { data, rs: ld, cs: 1 }
    }

    pub fn t(self) -> Self {
        View { data: self.data, rs: self.cs, cs: self.rs }
    }

    /// Sub-view starting at element offset `off`.
    pub fn at(self, off: usize) -> Self {
        View { data: &self.data[off..], ..self }
    }

    fn fits(&self, rows: usize, cols: usize) -> bool {
        rows == 0 || cols == 0 || (rows - 1) * self.rs + (cols - 1) * self.cs < self.data.len()
    }
}

/// `c = a·b + beta·c` with `a` m×k, `b` k×n and `c` row-major with leading
/// dimension `ldc`.
pub fn mm(m: usize, k: usize, n: usize, a: View<'_>, b: View<'_>, c: &mut [f64], ldc: usize, beta: f64) {
    assert!(a.fits(m, k) && b.fits(k, n));
    assert!(m == 0 || n == 0 || (m - 1) * ldc + n <= c.len());
    if m == 0 || n == 0 {
        return;
    }
    if k == 0 {
        for i in 0..m {
            for x in &mut c[i * ldc..i * ldc + n] {
                *x *= beta;
            }
        }
        return;
    }
    // SAFETY: every index touched through the strides was bounds-checked above.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.data.as_ptr(),
            a.rs as isize,
            a.cs as isize,
            b.data.as_ptr(),
            b.rs as isize,
            b.cs as isize,
            beta,
            c.as_mut_ptr(),
            ldc as isize,
            1,
        );
    }
}

pub fn add_bias(rows: usize, ld: usize, x: &mut [f64], b: &[f64]) {
    for r in 0..rows {
        for (v, bb) in x[r * ld..r * ld + b.len()].iter_mut().zip(b) {
            *v += bb;
        }
    }
}

/// Column sums of the first `b.len()` columns, added into `b`.
pub fn sum_rows_into(rows: usize, ld: usize, x: &[f64], b: &mut [f64]) {
    let n = b.len();
    for r in 0..rows {
        for (bb, v) in b.iter_mut().zip(&x[r * ld..r * ld + n]) {
            *bb += v;
        }
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + libm::exp(-x))
    } else {
        let e = libm::exp(x);
        e / (1.0 + e)
    }
}

pub fn tanh(x: f64) -> f64 {
    libm::tanh(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use alloc::vec::Vec;

    #[test]
    fn products_match_loops() {
        let (m, k, n) = (3, 4, 2);
        let a: Vec<f64> = (0..m * k).map(|i| i as f64 * 0.5 - 1.0).collect();
        let b: Vec<f64> = (0..k * n).map(|i| libm::sin(i as f64)).collect();
        let mut c = vec![1.0; m * n];
        mm(m, k, n, View::rm(&a, k), View::rm(&b, n), &mut c, n, 1.0);
        for i in 0..m {
            for j in 0..n {
                let want: f64 = 1.0 + (0..k).map(|p| a[i * k + p] * b[p * n + j]).sum::<f64>();
                assert!((c[i * n + j] - want).abs() < 1e-12);
            }
        }
        // aᵀ·d, d m×n
        let d: Vec<f64> = (0..m * n).map(|i| i as f64).collect();
        let mut e = vec![0.0; k * n];
        mm(k, m, n, View::rm(&a, k).t(), View::rm(&d, n), &mut e, n, 0.0);
        for p in 0..k {
            for j in 0..n {
                let want: f64 = (0..m).map(|i| a[i * k + p] * d[i * n + j]).sum();
                assert!((e[p * n + j] - want).abs() < 1e-12);
            }
        }
        // column block of a wider matrix, written into a column block of c
        let mut f = vec![0.0; m * 5];
        mm(m, 2, 2, View::rm(&a, k).at(1), View::rm(&b, n), &mut f[3..], 5, 0.0);
        for i in 0..m {
            for j in 0..2 {
                let want: f64 = (0..2).map(|p| a[i * k + 1 + p] * b[p * n + j]).sum();
                assert!((f[i * 5 + 3 + j] - want).abs() < 1e-12);
            }
            assert_eq!(f[i * 5], 0.0);
        }
    }

    #[test]
    fn sigmoid_is_stable() {
        assert_eq!(sigmoid(-1000.0), 0.0);
        assert_eq!(sigmoid(1000.0), 1.0);
        assert!((sigmoid(0.0) - 0.5).abs() < 1e-15);
    }
}

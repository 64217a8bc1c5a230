//! Dense complex matrices and a Hermitian positive-definite solver.
//!
//! The solver is a plain Cholesky factorization `A = L·Lᴴ` followed by a
//! 2-norm condition estimate (power iteration for the largest eigenvalue,
//! inverse iteration through the factor for the smallest). Systems whose
//! estimate exceeds [`MAX_CONDITION`] are rejected.

use num_complex::Complex64;

use crate::error::{Error, Result};

pub type C64 = Complex64;

/// Condition number above which a Hermitian solve is reported as singular.
pub const MAX_CONDITION: f64 = 1e12;

const CONDITION_ITERATIONS: usize = 40;

#[inline]
pub(crate) fn czero() -> C64 {
    C64::new(0.0, 0.0)
}

/// Row-major dense complex matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct CMatrix {
    rows: usize,
    cols: usize,
    data: Vec<C64>,
}

impl CMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![czero(); rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = C64::new(1.0, 0.0);
        }
        m
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> C64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                data.push(f(r, c));
            }
        }
        Self { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, r: usize) -> &[C64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [C64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn as_slice(&self) -> &[C64] {
        &self.data
    }

    /// `self · x`
    pub fn mul_vec(&self, x: &[C64]) -> Vec<C64> {
        assert_eq!(x.len(), self.cols, "mul_vec dimension");
        (0..self.rows).map(|r| dotu(self.row(r), x)).collect()
    }

    /// `selfᴴ · x`
    pub fn adjoint_mul_vec(&self, x: &[C64]) -> Vec<C64> {
        assert_eq!(x.len(), self.rows, "adjoint_mul_vec dimension");
        let mut out = vec![czero(); self.cols];
        for (r, &xr) in x.iter().enumerate() {
            if xr == czero() {
                continue;
            }
            for (o, a) in out.iter_mut().zip(self.row(r)) {
                *o += a.conj() * xr;
            }
        }
        out
    }

    /// `selfᴴ · self`
    pub fn gram(&self) -> CMatrix {
        let n = self.cols;
        let mut g = CMatrix::zeros(n, n);
        for r in 0..self.rows {
            let row = self.row(r);
            for (i, a) in row.iter().enumerate() {
                if *a == czero() {
                    continue;
                }
                let ac = a.conj();
                let grow = g.row_mut(i);
                for (gj, b) in grow.iter_mut().zip(row) {
                    *gj += ac * b;
                }
            }
        }
        g
    }

    /// Largest relative deviation from Hermitian symmetry.
    pub fn hermitian_defect(&self) -> f64 {
        let mut worst = 0.0f64;
        let mut scale = 0.0f64;
        for i in 0..self.rows {
            for j in 0..self.cols {
                let a = self[(i, j)];
                scale = scale.max(a.norm());
                if j < self.rows && i < self.cols {
                    worst = worst.max((a - self[(j, i)].conj()).norm());
                }
            }
        }
        if scale == 0.0 {
            0.0
        } else {
            worst / scale
        }
    }
}

impl std::ops::Index<(usize, usize)> for CMatrix {
    type Output = C64;
    #[inline]
    fn index(&self, (r, c): (usize, usize)) -> &C64 {
        &self.data[r * self.cols + c]
    }
}

impl std::ops::IndexMut<(usize, usize)> for CMatrix {
    #[inline]
    fn index_mut(&mut self, (r, c): (usize, usize)) -> &mut C64 {
        &mut self.data[r * self.cols + c]
    }
}

/// Unconjugated dot product `Σ a_i b_i`.
#[inline]
pub fn dotu(a: &[C64], b: &[C64]) -> C64 {
    a.iter().zip(b).fold(czero(), |acc, (x, y)| acc + x * y)
}

/// Conjugated dot product `aᴴ b`.
#[inline]
pub fn dotc(a: &[C64], b: &[C64]) -> C64 {
    a.iter().zip(b).fold(czero(), |acc, (x, y)| acc + x.conj() * y)
}

pub fn norm_sqr(a: &[C64]) -> f64 {
    a.iter().map(|x| x.norm_sqr()).sum()
}

/// Cholesky factor of a Hermitian positive-definite matrix.
#[derive(Debug, Clone)]
pub struct Cholesky {
    // lower triangle, row-major n×n
    l: CMatrix,
    condition: f64,
}

impl Cholesky {
    /// Factor `a`, using only its lower triangle, and estimate its condition
    /// number. Fails with [`Error::Singular`] when a pivot is not positive or
    /// the estimate exceeds [`MAX_CONDITION`].
    pub fn factor(a: &CMatrix) -> Result<Self> {
        let chol = Self::factor_unchecked(a)?;
        if !(chol.condition <= MAX_CONDITION) {
            return Err(Error::Singular {
                condition: chol.condition,
            });
        }
        Ok(chol)
    }

    /// Factor without enforcing the condition limit (the estimate is still
    /// computed). Non-positive pivots are still an error.
    pub fn factor_unchecked(a: &CMatrix) -> Result<Self> {
        if a.rows != a.cols {
            return Err(Error::DimensionMismatch {
                expected: a.rows,
                got: a.cols,
            });
        }
        let n = a.rows;
        let mut l = CMatrix::zeros(n, n);
        for j in 0..n {
            let (head, tail) = l.data.split_at_mut(j * n + n);
            let lj = &head[j * n..j * n + j];
            let d = a[(j, j)].re - lj.iter().map(|x| x.norm_sqr()).sum::<f64>();
            if !(d > 0.0) || !d.is_finite() {
                return Err(Error::Singular {
                    condition: f64::INFINITY,
                });
            }
            let djj = d.sqrt();
            head[j * n + j] = C64::new(djj, 0.0);
            let lj = &head[j * n..j * n + j];
            for i in (j + 1)..n {
                let off = (i - j - 1) * n;
                let li = &mut tail[off..off + n];
                let s = a[(i, j)] - li[..j].iter().zip(lj).fold(czero(), |acc, (x, y)| acc + x * y.conj());
                li[j] = s / djj;
            }
        }
        let mut chol = Self {
            l,
            condition: f64::NAN,
        };
        chol.condition = chol.estimate_condition();
        Ok(chol)
    }

    pub fn dim(&self) -> usize {
        self.l.rows
    }

    /// Estimated 2-norm condition number of the factored matrix.
    pub fn condition(&self) -> f64 {
        self.condition
    }

    pub fn lower(&self) -> &CMatrix {
        &self.l
    }

    /// Solve `A x = b`.
    pub fn solve(&self, b: &[C64]) -> Vec<C64> {
        let n = self.dim();
        assert_eq!(b.len(), n, "solve dimension");
        let mut y = b.to_vec();
        // L y = b
        for i in 0..n {
            let li = self.l.row(i);
            let s = y[i] - dotu(&li[..i], &y[..i]);
            y[i] = s / li[i].re;
        }
        // Lᴴ x = y
        for i in (0..n).rev() {
            let mut s = y[i];
            for k in (i + 1)..n {
                s -= self.l[(k, i)].conj() * y[k];
            }
            y[i] = s / self.l[(i, i)].re;
        }
        y
    }

    /// `A x` reconstructed from the factor.
    fn apply(&self, x: &[C64]) -> Vec<C64> {
        let n = self.dim();
        // t = Lᴴ x
        let mut t = vec![czero(); n];
        for k in 0..n {
            let lk = self.l.row(k);
            let xk = x[k];
            for (ti, lki) in t[..=k].iter_mut().zip(&lk[..=k]) {
                *ti += lki.conj() * xk;
            }
        }
        (0..n).map(|i| dotu(&self.l.row(i)[..=i], &t[..=i])).collect()
    }

    fn estimate_condition(&self) -> f64 {
        let n = self.dim();
        if n == 0 {
            return 1.0;
        }
        let start: Vec<C64> = (0..n)
            .map(|i| C64::new(1.0 + 0.5 * ((i as f64) * 0.618_033_988_7).fract(), 0.0))
            .collect();
        let lmax = power_rayleigh(&start, |v| self.apply(v));
        let inv_lmin = power_rayleigh(&start, |v| self.solve(v));
        // the factor diagonal gives a cheap lower bound as well
        let (dmin, dmax) = (0..n).fold((f64::INFINITY, 0.0f64), |(lo, hi), i| {
            let d = self.l[(i, i)].re;
            (lo.min(d), hi.max(d))
        });
        let diag_bound = (dmax / dmin).powi(2);
        (lmax * inv_lmin).max(diag_bound)
    }
}

/// Power iteration on a Hermitian PSD operator; returns the dominant
/// eigenvalue estimate.
fn power_rayleigh(start: &[C64], op: impl Fn(&[C64]) -> Vec<C64>) -> f64 {
    let mut v = start.to_vec();
    let nv = norm_sqr(&v).sqrt();
    v.iter_mut().for_each(|x| *x /= nv);
    let mut lambda = 0.0;
    for _ in 0..CONDITION_ITERATIONS {
        let w = op(&v);
        let rq = dotc(&v, &w).re;
        let nw = norm_sqr(&w).sqrt();
        if !(nw > 0.0) || !nw.is_finite() {
            return if nw.is_finite() { 0.0 } else { f64::INFINITY };
        }
        lambda = rq.max(lambda);
        v = w.into_iter().map(|x| x / nw).collect();
    }
    lambda
}

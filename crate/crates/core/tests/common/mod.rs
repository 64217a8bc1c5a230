#![allow(dead_code)]

use nalgebra::DMatrix;
use sidelobe::linalg::CMatrix;
use sidelobe::C64;

/// Convolution matrix written out directly from its definition:
/// `S[r][c] = s[r - c]` when that index is inside the pulse.
pub fn dense_conv(pulse: &[C64], l: usize) -> DMatrix<C64> {
    let n = pulse.len();
    DMatrix::from_fn(n + l - 1, l, |r, c| if r >= c && r - c < n { pulse[r - c] } else { C64::new(0.0, 0.0) })
}

pub fn to_na(m: &CMatrix) -> DMatrix<C64> {
    DMatrix::from_fn(m.rows(), m.cols(), |r, c| m[(r, c)])
}

pub fn rel_err(a: &[C64], b: &[C64]) -> f64 {
    let num: f64 = a.iter().zip(b).map(|(x, y)| (x - y).norm_sqr()).sum::<f64>().sqrt();
    let den: f64 = b.iter().map(|y| y.norm_sqr()).sum::<f64>().sqrt();
    num / den.max(f64::MIN_POSITIVE)
}

/// Minimiser of `‖S_m W‖²` subject to `S[r0]·W = alpha`, from the dense
/// KKT system `[G cᴴ; c 0][W; μ] = [0; α]`. Returns `None` when the
/// problem violates the full-column-rank precondition.
pub fn kkt_min_isl(pulse: &[C64], l: usize, width: usize, alpha: C64) -> Option<Vec<C64>> {
    let s = dense_conv(pulse, l);
    let n_out = s.nrows();
    let r0 = (n_out - 1) / 2;
    let half = width / 2;
    let side: Vec<usize> = (0..n_out).filter(|r| r.abs_diff(r0) > half).collect();
    let c = s.row(r0).into_owned();
    if side.is_empty() {
        // every feasible W has zero ISL; the reference is the minimum-norm one
        let pinv = DMatrix::from_row_slice(1, l, c.as_slice()).pseudo_inverse(1e-14).ok()?;
        return Some(pinv.column(0).iter().map(|v| v * alpha).collect());
    }
    let sm = DMatrix::from_fn(side.len(), l, |i, j| s[(side[i], j)]);
    if sm.rank(1e-10 * sm.norm()) < l {
        return None;
    }
    let g = sm.adjoint() * &sm;
    let mut k = DMatrix::<C64>::zeros(l + 1, l + 1);
    k.view_mut((0, 0), (l, l)).copy_from(&g);
    for j in 0..l {
        k[(l, j)] = c[j];
        k[(j, l)] = c[j].conj();
    }
    let mut rhs = nalgebra::DVector::<C64>::zeros(l + 1);
    rhs[l] = alpha;
    let x = k.lu().solve(&rhs)?;
    Some(x.iter().take(l).copied().collect())
}

/// Aperiodic autocorrelation by direct summation, lags `-(n-1)..=n-1`.
pub fn autocorrelation(s: &[C64]) -> Vec<C64> {
    let n = s.len() as isize;
    (-(n - 1)..n)
        .map(|k| {
            (0..n)
                .filter_map(|i| {
                    let j = i + k;
                    (0..n).contains(&j).then(|| s[j as usize] * s[i as usize].conj())
                })
                .sum()
        })
        .collect()
}

//! Plain numeric kernels shared by the tape and by tape-free evaluation, so both
//! paths produce bitwise-identical values.

use alloc::vec::Vec;

/// `out = W x + b` for row-major `w` of shape `(rows, cols)`.
///
/// Zero entries of `x` are skipped; image inputs are mostly zeros.
pub(crate) fn affine(w: &[f64], rows: usize, cols: usize, x: &[f64], b: &[f64], out: &mut [f64]) {
    debug_assert_eq!(w.len(), rows * cols);
    debug_assert_eq!(x.len(), cols);
    debug_assert_eq!(b.len(), rows);
    let nz = nonzero_indices(x);
    if nz.len() * 2 > cols {
        for (i, o) in out.iter_mut().enumerate() {
            let row = &w[i * cols..(i + 1) * cols];
            *o = b[i] + dot(row, x);
        }
    } else {
        for (i, o) in out.iter_mut().enumerate() {
            let row = &w[i * cols..(i + 1) * cols];
            let mut acc = 0.0;
            for &j in &nz {
                acc += row[j] * x[j];
            }
            *o = b[i] + acc;
        }
    }
}

pub(crate) fn nonzero_indices(x: &[f64]) -> Vec<usize> {
    x.iter()
        .enumerate()
        .filter(|(_, v)| **v != 0.0)
        .map(|(j, _)| j)
        .collect()
}

/// Dot product with four independent accumulators.
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0f64; 4];
    let chunks = a.len() / 4;
    for k in 0..chunks {
        let i = 4 * k;
        acc[0] += a[i] * b[i];
        acc[1] += a[i + 1] * b[i + 1];
        acc[2] += a[i + 2] * b[i + 2];
        acc[3] += a[i + 3] * b[i + 3];
    }
    let mut s = (acc[0] + acc[1]) + (acc[2] + acc[3]);
    for i in 4 * chunks..a.len() {
        s += a[i] * b[i];
    }
    s
}

pub(crate) fn relu(x: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        0.0
    }
}

pub(crate) fn tanh(x: f64) -> f64 {
    libm::tanh(x)
}

/// Euclidean distance.
pub(crate) fn l2(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut s = 0.0;
    for (x, y) in a.iter().zip(b) {
        let d = x - y;
        s += d * d;
    }
    libm::sqrt(s)
}

/// `log(sum(exp(v)))` with max subtraction. Returns `-inf` when every entry is `-inf`.
pub(crate) fn logsumexp(v: &[f64]) -> f64 {
    let m = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    let s: f64 = v.iter().map(|x| libm::exp(x - m)).sum();
    m + libm::log(s)
}

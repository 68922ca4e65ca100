//! Row-major `d x d` kernels on plain slices, used in the inner loops where
//! allocating a `MatrixValue` per step would dominate.

use crate::matcore::{MatrixValue, C64};

#[inline]
pub fn axpy(out: &mut [C64], s: f64, a: &[C64]) {
    for (o, x) in out.iter_mut().zip(a) {
        *o += x * s;
    }
}

/// `out += s * a* b`
#[inline]
pub fn adj_mul_acc(out: &mut [C64], d: usize, s: f64, a: &[C64], b: &[C64]) {
    for i in 0..d {
        for j in 0..d {
            let mut acc = C64::new(0.0, 0.0);
            for k in 0..d {
                acc += a[k * d + i].conj() * b[k * d + j];
            }
            out[i * d + j] += acc * s;
        }
    }
}

/// `tr(a* b)`
#[inline]
pub fn trace_adj_mul(a: &[C64], b: &[C64]) -> C64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

/// Conjugate transpose of a row-major block.
pub fn adjoint(d: usize, a: &[C64]) -> Vec<C64> {
    let mut out = vec![C64::new(0.0, 0.0); d * d];
    for i in 0..d {
        for j in 0..d {
            out[j * d + i] = a[i * d + j].conj();
        }
    }
    out
}

pub fn to_matrix(d: usize, a: &[C64]) -> MatrixValue {
    MatrixValue::from_row_major(d, a).expect("block length is d*d")
}

pub fn zeros(d: usize) -> Vec<C64> {
    vec![C64::new(0.0, 0.0); d * d]
}

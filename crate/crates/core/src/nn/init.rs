use super::matrix::{Matrix, Scalar};
use crate::Rng;

/// Orthogonal matrix scaled by `gain`.
///
/// Draws an i.i.d. standard normal matrix, orthonormalizes its columns (of the
/// tall orientation) by modified Gram-Schmidt with one re-orthogonalization
/// pass, and scales by `gain`. Gram-Schmidt yields a QR factor with positive
/// `diag(R)`, which fixes the sign convention. The result satisfies
/// `M·Mᵀ = gain²·I` when `rows <= cols` and `Mᵀ·M = gain²·I` otherwise.
pub fn orthogonal_init<T: Scalar>(rows: usize, cols: usize, gain: f64, rng: &mut Rng) -> Matrix<T> {
    assert!(rows >= 1 && cols >= 1, "orthogonal_init needs positive dimensions");
    let (tall, short) = (rows.max(cols), rows.min(cols));
    // columns of the tall matrix stored contiguously
    let mut q: Vec<Vec<f64>> = (0..short).map(|_| (0..tall).map(|_| rng.normal()).collect()).collect();

    for j in 0..short {
        for _pass in 0..2 {
            for i in 0..j {
                let (done, rest) = q.split_at_mut(j);
                let qi = &done[i];
                let qj = &mut rest[0];
                let proj: f64 = qi.iter().zip(qj.iter()).map(|(a, b)| a * b).sum();
                for (x, &y) in qj.iter_mut().zip(qi) {
                    *x -= proj * y;
                }
            }
        }
        let norm = q[j].iter().map(|x| x * x).sum::<f64>().sqrt();
        // a zero column has probability zero under a continuous draw
        assert!(norm > 0.0, "degenerate draw in orthogonal_init");
        for x in q[j].iter_mut() {
            *x /= norm;
        }
    }

    let mut m = Matrix::zeros(rows, cols);
    for (j, col) in q.iter().enumerate() {
        for (i, &v) in col.iter().enumerate() {
            let v = T::of(gain * v);
            if rows >= cols {
                m[(i, j)] = v;
            } else {
                m[(j, i)] = v;
            }
        }
    }
    m
}

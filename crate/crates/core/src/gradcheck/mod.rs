//! Central finite differences and the error metric used to compare them against
//! hand-written backward passes.

mod suite;

pub use suite::{run_grad_checks, GroupReport, Precision, GRAD_GROUPS};

use crate::tensor::{Scalar, Tensor};

/// Central-difference gradient of a scalar function at `x`.
pub fn finite_diff_grad<T: Scalar>(mut f: impl FnMut(&Tensor<T>) -> T, x: &Tensor<T>, eps: T) -> Tensor<T> {
    let mut probe = x.clone();
    let mut grad = Tensor::zeros_like(x);
    let two_eps = eps + eps;
    for i in 0..x.len() {
        let orig = probe.data()[i];
        probe.data_mut()[i] = orig + eps;
        let plus = f(&probe);
        probe.data_mut()[i] = orig - eps;
        let minus = f(&probe);
        probe.data_mut()[i] = orig;
        grad.data_mut()[i] = (plus - minus) / two_eps;
    }
    grad
}

/// Same as [`finite_diff_grad`] for a flat parameter slice.
pub fn finite_diff_slice<T: Scalar>(mut f: impl FnMut(&[T]) -> T, x: &[T], eps: T) -> Vec<T> {
    let mut probe = x.to_vec();
    let two_eps = eps + eps;
    (0..x.len())
        .map(|i| {
            let orig = probe[i];
            probe[i] = orig + eps;
            let plus = f(&probe);
            probe[i] = orig - eps;
            let minus = f(&probe);
            probe[i] = orig;
            (plus - minus) / two_eps
        })
        .collect()
}

/// Relative error `||a - b|| / max(||a||, ||b||)` over a whole gradient group.
///
/// Returns the absolute error norm when both norms are below `1e-12`, so an
/// all-zero group compared against an all-zero group scores 0.
pub fn relative_error<T: Scalar>(analytic: &[T], numeric: &[T]) -> f64 {
    assert_eq!(analytic.len(), numeric.len());
    let (mut diff, mut na, mut nn) = (0.0f64, 0.0f64, 0.0f64);
    for (&a, &n) in analytic.iter().zip(numeric) {
        let (a, n) = (a.as_f64(), n.as_f64());
        diff += (a - n) * (a - n);
        na += a * a;
        nn += n * n;
    }
    let scale = na.sqrt().max(nn.sqrt());
    if scale < 1e-12 {
        diff.sqrt()
    } else {
        diff.sqrt() / scale
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gradient_of_sum_is_ones() {
        let x = Tensor::<f64>::from_fn([1, 2, 2, 2], |_, c, y, x| (c + y + x) as f64 * 0.3);
        let g = finite_diff_grad(|t| t.sum(), &x, 1e-3);
        assert!(g.data().iter().all(|&v| (v - 1.0).abs() < 1e-9));
    }

    #[test]
    fn gradient_of_half_square_norm_is_x() {
        let x = Tensor::<f64>::from_fn([1, 1, 3, 3], |_, _, y, x| y as f64 - x as f64 * 0.5);
        let g = finite_diff_grad(|t| 0.5 * t.data().iter().map(|v| v * v).sum::<f64>(), &x, 1e-3);
        for (a, b) in g.data().iter().zip(x.data()) {
            assert!((a - b).abs() < 1e-6);
        }
    }

    #[test]
    fn relative_error_edge_cases() {
        assert_eq!(relative_error::<f64>(&[0.0, 0.0], &[0.0, 0.0]), 0.0);
        assert!((relative_error(&[1.0f64, 0.0], &[0.0, 0.0]) - 1.0).abs() < 1e-12);
        assert!(relative_error(&[1.0f64, 2.0], &[1.0, 2.0]) < 1e-15);
    }
}

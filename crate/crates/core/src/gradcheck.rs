//! Finite-difference gradient oracle.
//!
//! Independent check for every backward rule: perturb one coordinate at a
//! time, rerun the forward closure, and compare the central difference
//! against the analytic gradient. Lives in the library (not test code) so
//! unit, integration, and acceptance tests all share one oracle.

use crate::tensor::Tensor;

/// Central finite differences of a scalar-valued closure at `point`.
pub fn central_differences(
    f: &mut dyn FnMut(&Tensor) -> f64,
    point: &Tensor,
    step: f64,
) -> Tensor {
    let mut grad = Tensor::zeros(point.shape().to_vec());
    let mut probe = point.clone();
    for i in 0..point.numel() {
        let original = probe.data()[i];
        probe.data_mut()[i] = original + step;
        let plus = f(&probe);
        probe.data_mut()[i] = original - step;
        let minus = f(&probe);
        probe.data_mut()[i] = original;
        grad.data_mut()[i] = (plus - minus) / (2.0 * step);
    }
    grad
}

/// Largest relative discrepancy between two gradients, with an absolute
/// floor of 1 so near-zero entries compare absolutely.
pub fn max_relative_error(analytic: &Tensor, numeric: &Tensor) -> f64 {
    analytic
        .data()
        .iter()
        .zip(numeric.data())
        .map(|(&a, &n)| (a - n).abs() / a.abs().max(n.abs()).max(1.0))
        .fold(0.0, f64::max)
}

/// Assert the analytic gradient of `f` at `point` matches central
/// differences within `tol` relative error. `step` 1e-5 suits f64.
pub fn assert_grad_matches(
    f: &mut dyn FnMut(&Tensor) -> f64,
    point: &Tensor,
    analytic: &Tensor,
    step: f64,
    tol: f64,
    context: &str,
) {
    let numeric = central_differences(f, point, step);
    let err = max_relative_error(analytic, &numeric);
    assert!(
        err < tol,
        "{context}: gradient mismatch, max relative error {err:.3e} (tol {tol:.1e})"
    );
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tape::Tape;

    #[test]
    fn quadratic_gradient() {
        let point = Tensor::from_vec(vec![3], vec![1.0, -2.0, 0.5]).unwrap();
        let mut f = |x: &Tensor| x.data().iter().map(|v| v * v).sum::<f64>();
        let g = central_differences(&mut f, &point, 1e-5);
        for (gv, xv) in g.data().iter().zip(point.data()) {
            assert!((gv - 2.0 * xv).abs() < 1e-8);
        }
    }

    #[test]
    fn tape_matches_oracle_on_composite() {
        // loss = mean(tanh(x W)^2)
        let x0 = Tensor::from_vec(vec![2, 3], vec![0.3, -0.2, 0.7, 0.1, 0.5, -0.4]).unwrap();
        let w0 = Tensor::from_vec(vec![3, 2], vec![0.2, -0.3, 0.4, 0.1, -0.5, 0.6]).unwrap();

        let run = |w: &Tensor| -> (f64, Tensor) {
            let mut tape = Tape::new();
            let x = tape.leaf(x0.clone());
            let wn = tape.leaf(w.clone());
            let h = tape.matmul(x, wn).unwrap();
            let a = tape.tanh(h).unwrap();
            let sq = tape.square(a).unwrap();
            let loss = tape.mean(sq).unwrap();
            let grads = tape.backward(loss).unwrap();
            (tape.value(loss).item(), grads.get(wn).unwrap().clone())
        };

        let (_, analytic) = run(&w0);
        assert_grad_matches(&mut |w| run(w).0, &w0, &analytic, 1e-5, 1e-6, "tanh-matmul");
    }
}

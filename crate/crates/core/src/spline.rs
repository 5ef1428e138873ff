//! Natural cubic splines through latent anchor points.
//!
//! The spline supplies the control path of the CDE: its analytic derivative
//! scales the learned vector field. Natural boundary conditions (zero second
//! derivative at both ends) give the classic tridiagonal system, solved per
//! latent coordinate with the Thomas algorithm.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// Cubic spline through `(times[i], values[i])` with values in `R^m`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatentPath {
    pub times: Vec<f64>,
    /// Knot values, row-major (knot-major): `values[i * m + j]`.
    pub values: Vec<f64>,
    pub path_dim: usize,
    /// Second derivatives at the knots, same layout as `values`.
    second: Vec<f64>,
}

/// Fit a natural cubic spline; `latents[i]` is the value at `times[i]`.
pub fn build_spline(times: &[f64], latents: &[Vec<f64>]) -> Result<LatentPath> {
    let n = times.len();
    if n < 2 {
        return Err(Error::Config(format!("spline needs at least 2 knots, got {n}")));
    }
    if latents.len() != n {
        return Err(Error::Config(format!("{} knot values for {} times", latents.len(), n)));
    }
    for w in times.windows(2) {
        if w[1] <= w[0] {
            return Err(Error::Config(format!(
                "knot times must strictly increase, got {} then {}",
                w[0], w[1]
            )));
        }
    }
    let m = latents[0].len();
    if m == 0 || latents.iter().any(|z| z.len() != m) {
        return Err(Error::Config("inconsistent latent dimensions".into()));
    }

    let mut values = Vec::with_capacity(n * m);
    for z in latents {
        values.extend_from_slice(z);
    }

    let mut second = vec![0.0; n * m];
    if n > 2 {
        // tridiagonal system for interior second derivatives, per coordinate
        let interior = n - 2;
        let mut diag = vec![0.0; interior];
        let mut upper = vec![0.0; interior];
        let mut lower = vec![0.0; interior];
        for i in 0..interior {
            let h0 = times[i + 1] - times[i];
            let h1 = times[i + 2] - times[i + 1];
            lower[i] = h0 / 6.0;
            diag[i] = (h0 + h1) / 3.0;
            upper[i] = h1 / 6.0;
        }
        for j in 0..m {
            let mut rhs = vec![0.0; interior];
            for i in 0..interior {
                let h0 = times[i + 1] - times[i];
                let h1 = times[i + 2] - times[i + 1];
                let z0 = values[i * m + j];
                let z1 = values[(i + 1) * m + j];
                let z2 = values[(i + 2) * m + j];
                rhs[i] = (z2 - z1) / h1 - (z1 - z0) / h0;
            }
            // Thomas algorithm
            let mut c_star = vec![0.0; interior];
            let mut d_star = vec![0.0; interior];
            c_star[0] = upper[0] / diag[0];
            d_star[0] = rhs[0] / diag[0];
            for i in 1..interior {
                let denom = diag[i] - lower[i] * c_star[i - 1];
                c_star[i] = upper[i] / denom;
                d_star[i] = (rhs[i] - lower[i] * d_star[i - 1]) / denom;
            }
            let mut sol = vec![0.0; interior];
            sol[interior - 1] = d_star[interior - 1];
            for i in (0..interior - 1).rev() {
                sol[i] = d_star[i] - c_star[i] * sol[i + 1];
            }
            for i in 0..interior {
                second[(i + 1) * m + j] = sol[i];
            }
        }
    }

    Ok(LatentPath { times: times.to_vec(), values, path_dim: m, second })
}

impl LatentPath {
    pub fn knots(&self) -> usize {
        self.times.len()
    }

    pub fn knot_value(&self, i: usize) -> &[f64] {
        &self.values[i * self.path_dim..(i + 1) * self.path_dim]
    }

    fn segment(&self, t: f64) -> usize {
        // last interval whose left knot is <= t, clamped to valid segments
        match self.times.binary_search_by(|probe| probe.partial_cmp(&t).unwrap()) {
            Ok(i) => i.min(self.times.len() - 2),
            Err(0) => 0,
            Err(i) => (i - 1).min(self.times.len() - 2),
        }
    }

    /// Spline value; outside the knot range it extends linearly with the
    /// endpoint derivative.
    pub fn eval(&self, t: f64) -> Vec<f64> {
        let (t0, tn) = (self.times[0], *self.times.last().unwrap());
        if t < t0 {
            let d = self.deriv(t0);
            return self
                .knot_value(0)
                .iter()
                .zip(d)
                .map(|(&z, dz)| z + dz * (t - t0))
                .collect();
        }
        if t > tn {
            let d = self.deriv(tn);
            let last = self.knots() - 1;
            return self
                .knot_value(last)
                .iter()
                .zip(d)
                .map(|(&z, dz)| z + dz * (t - tn))
                .collect();
        }
        let i = self.segment(t);
        let h = self.times[i + 1] - self.times[i];
        let a = (self.times[i + 1] - t) / h;
        let b = (t - self.times[i]) / h;
        let m = self.path_dim;
        (0..m)
            .map(|j| {
                let z0 = self.values[i * m + j];
                let z1 = self.values[(i + 1) * m + j];
                let m0 = self.second[i * m + j];
                let m1 = self.second[(i + 1) * m + j];
                a * z0 + b * z1 + ((a * a * a - a) * m0 + (b * b * b - b) * m1) * h * h / 6.0
            })
            .collect()
    }

    /// Analytic derivative; constant beyond the knot range.
    pub fn deriv(&self, t: f64) -> Vec<f64> {
        let t = t.clamp(self.times[0], *self.times.last().unwrap());
        let i = self.segment(t);
        let h = self.times[i + 1] - self.times[i];
        let a = (self.times[i + 1] - t) / h;
        let b = (t - self.times[i]) / h;
        let m = self.path_dim;
        (0..m)
            .map(|j| {
                let z0 = self.values[i * m + j];
                let z1 = self.values[(i + 1) * m + j];
                let m0 = self.second[i * m + j];
                let m1 = self.second[(i + 1) * m + j];
                (z1 - z0) / h - (3.0 * a * a - 1.0) / 6.0 * h * m0
                    + (3.0 * b * b - 1.0) / 6.0 * h * m1
            })
            .collect()
    }

    /// Second derivative (linear in t on each segment).
    pub fn second_deriv(&self, t: f64) -> Vec<f64> {
        let t = t.clamp(self.times[0], *self.times.last().unwrap());
        let i = self.segment(t);
        let h = self.times[i + 1] - self.times[i];
        let a = (self.times[i + 1] - t) / h;
        let b = (t - self.times[i]) / h;
        let m = self.path_dim;
        (0..m).map(|j| a * self.second[i * m + j] + b * self.second[(i + 1) * m + j]).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn knots(times: &[f64], vals: &[f64]) -> LatentPath {
        let latents: Vec<Vec<f64>> = vals.iter().map(|&v| vec![v]).collect();
        build_spline(times, &latents).unwrap()
    }

    #[test]
    fn two_knots_is_a_line() {
        let path = knots(&[0.0, 2.0], &[1.0, 5.0]);
        for t in [0.0, 0.5, 1.0, 1.7, 2.0] {
            assert!((path.deriv(t)[0] - 2.0).abs() < 1e-12);
        }
        assert!((path.eval(1.0)[0] - 3.0).abs() < 1e-12);
    }

    #[test]
    fn interpolates_all_knots() {
        let times = [0.0, 1.0, 2.5, 3.0, 4.2];
        let vals = [0.3, -1.2, 2.0, 1.9, -0.4];
        let path = knots(&times, &vals);
        for (t, v) in times.iter().zip(&vals) {
            assert!((path.eval(*t)[0] - v).abs() < 1e-9, "at t={t}");
        }
    }

    #[test]
    fn natural_boundary_second_derivative_zero() {
        let path = knots(&[0.0, 1.0, 2.0, 3.0], &[1.0, -1.0, 2.0, 0.5]);
        assert!(path.second_deriv(0.0)[0].abs() < 1e-9);
        assert!(path.second_deriv(3.0)[0].abs() < 1e-9);
    }

    #[test]
    fn derivative_matches_finite_differences() {
        let times = [0.0, 0.7, 1.3, 2.9, 4.0];
        let vals = [0.0, 1.1, -0.6, 0.4, 2.2];
        let path = knots(&times, &vals);
        let eps = 1e-6;
        for t in [0.1, 0.7, 1.0, 2.0, 3.5, 3.99] {
            let fd = (path.eval(t + eps)[0] - path.eval(t - eps)[0]) / (2.0 * eps);
            assert!((path.deriv(t)[0] - fd).abs() < 1e-6, "t={t}");
        }
    }

    #[test]
    fn constant_latents_have_zero_derivative() {
        let path = knots(&[0.0, 1.0, 2.0, 3.0], &[4.0, 4.0, 4.0, 4.0]);
        for t in [0.0, 0.4, 1.5, 3.0] {
            assert_eq!(path.deriv(t)[0], 0.0);
        }
    }

    #[test]
    fn linear_latents_have_exactly_constant_derivative() {
        let times = [0.0, 1.0, 2.0, 3.0];
        let path = knots(&times, &[0.0, 1.0, 2.0, 3.0]);
        for t in [0.0, 0.3, 1.5, 2.9, 3.0] {
            assert_eq!(path.deriv(t)[0], 1.0);
        }
    }

    #[test]
    fn extrapolation_uses_endpoint_derivative() {
        let path = knots(&[0.0, 1.0, 2.0], &[0.0, 1.0, 0.0]);
        let d_end = path.deriv(2.0)[0];
        assert_eq!(path.deriv(5.0)[0], d_end);
        let expected = path.eval(2.0)[0] + 3.0 * d_end;
        assert!((path.eval(5.0)[0] - expected).abs() < 1e-12);
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(build_spline(&[0.0], &[vec![1.0]]).is_err());
        assert!(build_spline(&[0.0, 0.0], &[vec![1.0], vec![2.0]]).is_err());
        assert!(build_spline(&[1.0, 0.5], &[vec![1.0], vec![2.0]]).is_err());
    }

    #[test]
    fn multidimensional_paths() {
        let latents = vec![vec![0.0, 1.0], vec![1.0, 0.0], vec![0.0, -1.0]];
        let path = build_spline(&[0.0, 1.0, 2.0], &latents).unwrap();
        assert_eq!(path.path_dim, 2);
        let v = path.eval(1.0);
        assert!((v[0] - 1.0).abs() < 1e-12 && v[1].abs() < 1e-12);
    }
}

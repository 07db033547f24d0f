//! Central finite differences, used to validate analytic gradients and Jacobians.

use crate::{Matrix, Vector};

/// Per-coordinate step `h = 1e-6 · (1 + |x_j|)`.
pub fn step_for(x: f64) -> f64 {
    1e-6 * (1.0 + x.abs())
}

pub fn gradient<F>(f: F, x: &Vector) -> Vector
where
    F: Fn(&Vector) -> f64,
{
    let mut g = Vector::zeros(x.len());
    let mut xp = x.clone();
    for j in 0..x.len() {
        let h = step_for(x[j]);
        xp[j] = x[j] + h;
        let fp = f(&xp);
        xp[j] = x[j] - h;
        let fm = f(&xp);
        xp[j] = x[j];
        g[j] = (fp - fm) / (2.0 * h);
    }
    g
}

/// Fourth-order central differences,
/// `g_j = (−f(x+2h) + 8f(x+h) − 8f(x−h) + f(x−2h)) / 12h`.
///
/// Uses the same step as [`gradient`]. Truncation error is `O(h⁴)`, which
/// matters on long chaotic rollouts where third derivatives are large.
pub fn gradient_five_point<F>(f: F, x: &Vector) -> Vector
where
    F: Fn(&Vector) -> f64,
{
    let mut g = Vector::zeros(x.len());
    let mut xp = x.clone();
    for j in 0..x.len() {
        let h = step_for(x[j]);
        let mut at = |k: f64| {
            xp[j] = x[j] + k * h;
            f(&xp)
        };
        let (f2, f1, m1, m2) = (at(2.0), at(1.0), at(-1.0), at(-2.0));
        xp[j] = x[j];
        g[j] = (8.0 * (f1 - m1) - (f2 - m2)) / (12.0 * h);
    }
    g
}

/// Jacobian of a vector map, shape `out × in`.
pub fn jacobian<F>(f: F, x: &Vector) -> Matrix
where
    F: Fn(&Vector) -> Vector,
{
    let f0 = f(x);
    let mut jac = Matrix::zeros(f0.len(), x.len());
    let mut xp = x.clone();
    for j in 0..x.len() {
        let h = step_for(x[j]);
        xp[j] = x[j] + h;
        let fp = f(&xp);
        xp[j] = x[j] - h;
        let fm = f(&xp);
        xp[j] = x[j];
        jac.set_column(j, &((fp - fm) / (2.0 * h)));
    }
    jac
}

/// Norm-wise relative error `max|a−b| / max(max|a|, max|b|, floor)`.
///
/// The floor keeps exactly-zero references from producing infinities.
pub fn relative_error(a: &[f64], b: &[f64], floor: f64) -> f64 {
    assert_eq!(a.len(), b.len());
    let diff = a
        .iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max);
    let scale = a
        .iter()
        .chain(b)
        .map(|v| v.abs())
        .fold(floor, f64::max);
    diff / scale
}

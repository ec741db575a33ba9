//! Closed-form reference solutions for `sqrt1d` and `linear10d`.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::StandardNormal;

use super::{time_grid, SdeError, SdeProblem, Stepper};

/// Transition density of `X_t = (√x0 + t + W_t)²` at `x`.
///
/// Returns 0 for `x ≤ 0` (the law is supported on `[0, ∞)`).
pub fn analytic_pdf_1d(x: f64, x0: f64, t: f64) -> f64 {
    if x <= 0.0 || t <= 0.0 {
        return 0.0;
    }
    let sx = x.sqrt();
    let s0 = x0.max(0.0).sqrt();
    let a = sx - s0 - t;
    let b = sx + s0 + t;
    let norm = 1.0 / (2.0 * (2.0 * PI * t * x).sqrt());
    norm * ((-a * a / (2.0 * t)).exp() + (-b * b / (2.0 * t)).exp())
}

/// `E[X_t | x0] = (√x0 + t)² + t`.
pub fn analytic_mean_1d(x0: f64, t: f64) -> f64 {
    let s = x0.max(0.0).sqrt() + t;
    s * s + t
}

/// Pathwise exact solution `X_t = √x0 + t + W_t` squared.
pub fn analytic_solution_1d(x0: f64, w_t: f64, t: f64) -> f64 {
    let s = x0.max(0.0).sqrt() + t + w_t;
    s * s
}

const D10: usize = 10;

/// `exp((I − K²/2) t + K w_t) · x0` for the ten-dimensional linear problem.
///
/// The exponent is `c I + N` with `N` strictly upper triangular, so
/// `exp = e^c Σ_{k<10} N^k / k!` is exact up to rounding (the series terminates).
pub fn analytic_solution_10d(x0: &[f64], w_t: f64, t: f64) -> Vec<f64> {
    analytic_solution_linear(x0, w_t, t, 0.5)
}

/// Same as [`analytic_solution_10d`] for `K = k_scale · (I + S)` of any size,
/// `S` the unit superdiagonal. `k_scale = 0` gives `e^t x0`.
pub fn analytic_solution_linear(x0: &[f64], w_t: f64, t: f64, k_scale: f64) -> Vec<f64> {
    let d = x0.len();
    let a = exponent_matrix(d, w_t, t, k_scale);
    let c = a[0];
    // N = A − cI
    let mut n = a;
    for i in 0..d {
        n[i * d + i] = 0.0;
    }
    // Horner-free accumulation of Σ N^k x0 / k!, applied directly to the vector.
    let mut term = x0.to_vec();
    let mut acc = x0.to_vec();
    for k in 1..d {
        let mut next = vec![0.0; d];
        for i in 0..d {
            let mut s = 0.0;
            for j in (i + 1)..d {
                s += n[i * d + j] * term[j];
            }
            next[i] = s / k as f64;
        }
        for (a, v) in acc.iter_mut().zip(&next) {
            *a += v;
        }
        term = next;
    }
    let e = c.exp();
    acc.iter().map(|v| e * v).collect()
}

/// Row-major `(I − K²/2) t + K w`.
pub fn exponent_matrix(d: usize, w: f64, t: f64, k_scale: f64) -> Vec<f64> {
    let mut k = vec![0.0; d * d];
    for i in 0..d {
        k[i * d + i] = k_scale;
        if i + 1 < d {
            k[i * d + i + 1] = k_scale;
        }
    }
    let mut a = vec![0.0; d * d];
    for i in 0..d {
        for j in 0..d {
            let mut k2 = 0.0;
            for l in 0..d {
                k2 += k[i * d + l] * k[l * d + j];
            }
            let id = if i == j { 1.0 } else { 0.0 };
            a[i * d + j] = (id - 0.5 * k2) * t + k[i * d + j] * w;
        }
    }
    a
}

/// Draws `X_t` for `linear10d` from the exact solution with `W_t ~ N(0, t)`.
pub fn sample_linear10d_exact<R: Rng + ?Sized>(x0: &[f64], t: f64, rng: &mut R) -> Vec<f64> {
    debug_assert_eq!(x0.len(), D10);
    let z: f64 = rng.sample(StandardNormal);
    analytic_solution_10d(x0, t.sqrt() * z, t)
}

/// Euler–Maruyama path for a problem with `m = 1`, also returning the summed
/// Brownian increments `W_T` that drove it.
pub fn simulate_tracking_brownian<R: Rng + ?Sized>(
    problem: &SdeProblem,
    x0: &[f64],
    dt: f64,
    rng: &mut R,
) -> Result<(Vec<f64>, f64), SdeError> {
    if problem.m != 1 {
        return Err(SdeError::InvalidProblem("brownian tracking needs m = 1".into()));
    }
    let mut x = x0.to_vec();
    let mut stepper = Stepper::new(problem);
    let (n, last) = time_grid(problem.horizon, dt);
    let mut w_total = 0.0;
    let mut t = 0.0;
    for k in 0..n {
        let h = if k + 1 == n { last } else { dt };
        let z: f64 = rng.sample(StandardNormal);
        let dw = h.sqrt() * z;
        w_total += dw;
        stepper.step(t, &mut x, h, &[dw])?;
        t += h;
    }
    Ok((x, w_total))
}

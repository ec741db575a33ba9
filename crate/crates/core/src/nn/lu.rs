//! LU factorization with partial pivoting for the small square Jacobian blocks.

/// `log|det|` below this is treated as a singular matrix.
pub const LOG_DET_FLOOR: f64 = -690.775_527_898_213_7; // ln(1e-300)

#[derive(Debug, Clone)]
pub struct Lu {
    n: usize,
    lu: Vec<f64>,
    perm: Vec<usize>,
    sign: f64,
    singular: bool,
}

impl Lu {
    /// Factorizes the row-major `n × n` matrix `a`.
    pub fn new(a: &[f64], n: usize) -> Self {
        debug_assert_eq!(a.len(), n * n);
        let mut lu = a.to_vec();
        let mut perm: Vec<usize> = (0..n).collect();
        let mut sign = 1.0;
        let mut singular = false;
        for k in 0..n {
            let mut p = k;
            let mut best = lu[k * n + k].abs();
            for i in (k + 1)..n {
                let v = lu[i * n + k].abs();
                if v > best {
                    best = v;
                    p = i;
                }
            }
            if best == 0.0 || !best.is_finite() {
                singular = true;
                continue;
            }
            if p != k {
                for j in 0..n {
                    lu.swap(k * n + j, p * n + j);
                }
                perm.swap(k, p);
                sign = -sign;
            }
            let pivot = lu[k * n + k];
            for i in (k + 1)..n {
                let f = lu[i * n + k] / pivot;
                lu[i * n + k] = f;
                for j in (k + 1)..n {
                    lu[i * n + j] -= f * lu[k * n + j];
                }
            }
        }
        Self { n, lu, perm, sign, singular }
    }

    /// `(sign, ln|det|)`; sign is 0 and the magnitude `-inf` for an exactly singular matrix.
    pub fn sign_log_det(&self) -> (f64, f64) {
        if self.singular {
            return (0.0, f64::NEG_INFINITY);
        }
        let mut sign = self.sign;
        let mut log = 0.0;
        for i in 0..self.n {
            let u = self.lu[i * self.n + i];
            if u < 0.0 {
                sign = -sign;
            }
            log += u.abs().ln();
        }
        (sign, log)
    }

    pub fn det(&self) -> f64 {
        let (s, l) = self.sign_log_det();
        if s == 0.0 {
            0.0
        } else {
            s * l.exp()
        }
    }

    /// True when the matrix is singular or `|det|` underflows `1e-300`.
    pub fn is_degenerate(&self) -> bool {
        let (s, l) = self.sign_log_det();
        s == 0.0 || l < LOG_DET_FLOOR
    }

    /// Solves `A x = b`.
    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = self.n;
        let mut x: Vec<f64> = self.perm.iter().map(|&p| b[p]).collect();
        for i in 0..n {
            for j in 0..i {
                x[i] -= self.lu[i * n + j] * x[j];
            }
        }
        for i in (0..n).rev() {
            for j in (i + 1)..n {
                x[i] -= self.lu[i * n + j] * x[j];
            }
            x[i] /= self.lu[i * n + i];
        }
        x
    }

    /// Row-major `A^{-T}`, the gradient of `ln|det A|` with respect to `A`.
    pub fn inverse_transpose(&self) -> Vec<f64> {
        let n = self.n;
        let mut out = vec![0.0; n * n];
        let mut e = vec![0.0; n];
        for j in 0..n {
            e.fill(0.0);
            e[j] = 1.0;
            let col = self.solve(&e); // column j of A^{-1}
            for i in 0..n {
                out[j * n + i] = col[i];
            }
        }
        out
    }
}

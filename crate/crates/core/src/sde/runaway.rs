//! Relativistic test-electron model in `(p, ξ)` with a Fokker–Planck
//! collision operator (momentum diffusion `C_A`, pitch-angle scattering `C_B`,
//! Coulomb drag `C_F`), a constant post-quench electric field and synchrotron
//! radiation damping.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};
use libm::erf;

use super::{Dynamics, SdeError};

/// Physical parameters of the model. Temperatures are in the same units as `mc2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReCoefficients {
    pub z_ion: f64,
    pub tau: f64,
    pub e0: f64,
    pub t_tilde: f64,
    pub t_hat_f: f64,
    pub mc2: f64,
}

impl Default for ReCoefficients {
    fn default() -> Self {
        Self {
            z_ion: 1.0,
            tau: 6.0e3,
            e0: 1.0 / 2000.0,
            t_tilde: 3.0,
            t_hat_f: 0.05,
            mc2: 500.0,
        }
    }
}

/// Constants derived from [`ReCoefficients`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReDerived {
    pub delta: f64,
    pub delta_tilde: f64,
    pub vbar_t: f64,
    pub nu_ee: f64,
    pub ln_lambda_tilde: f64,
    pub ln_lambda_hat: f64,
    /// Post-quench field `E = E0 (T̃ / T̂_f)^{3/2}`.
    pub e_field: f64,
}

/// `ln Λ = 14.9 − ½ ln 0.28 + ln T`.
pub fn coulomb_log(temperature: f64) -> f64 {
    14.9 - 0.5 * 0.28f64.ln() + temperature.ln()
}

impl ReCoefficients {
    pub fn validate(&self) -> Result<(), SdeError> {
        let ok = |v: f64| v.is_finite() && v > 0.0;
        if !(ok(self.t_tilde) && ok(self.t_hat_f) && ok(self.mc2) && ok(self.tau)) {
            return Err(SdeError::InvalidProblem(format!(
                "temperatures, tau and mc2 must be positive: {self:?}"
            )));
        }
        if !(self.z_ion.is_finite() && self.e0.is_finite()) {
            return Err(SdeError::InvalidProblem("Z and E0 must be finite".into()));
        }
        Ok(())
    }

    pub fn derived(&self) -> ReDerived {
        let ln_lambda_tilde = coulomb_log(self.t_tilde);
        let ln_lambda_hat = coulomb_log(self.t_hat_f);
        let ratio = self.t_tilde / self.t_hat_f;
        ReDerived {
            delta: (2.0 * self.t_hat_f / self.mc2).sqrt(),
            delta_tilde: (2.0 * self.t_tilde / self.mc2).sqrt(),
            vbar_t: (self.t_hat_f / self.t_tilde).sqrt(),
            nu_ee: ratio.powf(1.5) * ln_lambda_hat / ln_lambda_tilde,
            ln_lambda_tilde,
            ln_lambda_hat,
            e_field: self.e0 * ratio.powf(1.5),
        }
    }
}

const TWO_OVER_SQRT_PI: f64 = std::f64::consts::FRAC_2_SQRT_PI;

/// `φ(y) = erf(y)`.
pub fn phi(y: f64) -> f64 {
    erf(y)
}

/// `φ'(y) = 2/√π e^{−y²}`.
pub fn phi_prime(y: f64) -> f64 {
    TWO_OVER_SQRT_PI * (-y * y).exp()
}

/// Chandrasekhar function `ψ(y) = [φ(y) − y φ'(y)] / (2y²)`.
///
/// Below `y = 1e-3` the leading series terms are used to avoid cancellation.
pub fn psi(y: f64) -> f64 {
    if y.abs() < 1e-3 {
        let y2 = y * y;
        return (2.0 / PI.sqrt()) * y * (1.0 / 3.0 - y2 / 5.0 + y2 * y2 / 14.0);
    }
    (phi(y) - y * phi_prime(y)) / (2.0 * y * y)
}

/// `ψ'(y) = φ'(y) − 2ψ(y)/y`.
pub fn psi_prime(y: f64) -> f64 {
    if y.abs() < 1e-3 {
        let y2 = y * y;
        return (2.0 / PI.sqrt()) * (1.0 / 3.0 - 3.0 * y2 / 5.0 + 5.0 * y2 * y2 / 14.0);
    }
    phi_prime(y) - 2.0 * psi(y) / y
}

/// Collision coefficients at momentum `p`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CollisionCoefficients {
    pub c_a: f64,
    pub c_b: f64,
    pub c_f: f64,
    pub gamma: f64,
    /// `dC_A/dp`, needed by the drift's `p⁻² ∂_p(p² C_A)` term.
    pub dc_a_dp: f64,
}

/// Evaluates `(C_A, C_B, C_F, γ)` (and `dC_A/dp`) at momentum `p > 0`.
pub fn re_coefficients(
    p: f64,
    coeffs: &ReCoefficients,
    derived: &ReDerived,
) -> Result<CollisionCoefficients, SdeError> {
    if !(p > 0.0) {
        return Err(SdeError::Domain(format!("momentum p = {p} must be positive")));
    }
    Ok(collision_unchecked(p, coeffs.z_ion, derived))
}

#[inline]
fn collision_unchecked(p: f64, z_ion: f64, dv: &ReDerived) -> CollisionCoefficients {
    let dp = dv.delta_tilde * p;
    let gamma = (1.0 + dp * dp).sqrt();
    let vt = dv.vbar_t;
    let y = p / (gamma * vt);
    let ph = phi(y);
    let php = phi_prime(y);
    let ps = if y < 1e-3 { psi(y) } else { (ph - y * php) / (2.0 * y * y) };
    let psp = if y < 1e-3 { psi_prime(y) } else { php - 2.0 * ps / y };
    let nu_vt2 = dv.nu_ee * vt * vt;
    let c_a = nu_vt2 * ps / y;
    let c_f = 2.0 * dv.nu_ee * vt * ps;
    let d4 = dv.delta.powi(4);
    let c_b = 0.5 * nu_vt2 / y * (z_ion + ph - ps + 0.5 * y * y * d4);
    // dy/dp = 1 / (v̄_T γ³)
    let dy_dp = 1.0 / (vt * gamma * gamma * gamma);
    let dc_a_dp = nu_vt2 * (psp / y - ps / (y * y)) * dy_dp;
    CollisionCoefficients { c_a, c_b, c_f, gamma, dc_a_dp }
}

/// Drift and diffusion of the `(p, ξ)` system.
#[derive(Debug, Clone, Copy)]
pub struct RunawayDynamics {
    pub coeffs: ReCoefficients,
    pub derived: ReDerived,
}

impl RunawayDynamics {
    pub fn new(coeffs: ReCoefficients) -> Result<Self, SdeError> {
        coeffs.validate()?;
        Ok(Self { coeffs, derived: coeffs.derived() })
    }
}

impl Dynamics for RunawayDynamics {
    fn drift(&self, _t: f64, x: &[f64], out: &mut [f64]) {
        let p = x[0];
        let xi = x[1].clamp(-1.0, 1.0);
        let c = collision_unchecked(p, self.coeffs.z_ion, &self.derived);
        let e = self.derived.e_field;
        let tau = self.coeffs.tau;
        let one_m = 1.0 - xi * xi;
        out[0] = e * xi - c.gamma * p / tau * one_m - c.c_f + 2.0 * c.c_a / p + c.dc_a_dp;
        out[1] = e * one_m / p + xi * one_m / (tau * c.gamma) - 2.0 * xi * c.c_b / (p * p);
    }

    fn diffusion(&self, _t: f64, x: &[f64], out: &mut [f64]) {
        let p = x[0];
        let xi = x[1].clamp(-1.0, 1.0);
        let c = collision_unchecked(p, self.coeffs.z_ion, &self.derived);
        out[0] = (2.0 * c.c_a).sqrt();
        out[1] = 0.0;
        out[2] = 0.0;
        out[3] = (2.0 * c.c_b).sqrt() / p * (1.0 - xi * xi).sqrt();
    }
}

//! Built-in benchmark problems.
//!
//! | name        | d  | m  | domain                 | T   |
//! |-------------|----|----|------------------------|-----|
//! | `sqrt1d`    | 1  | 1  | `[0, 5]`               | 0.1 |
//! | `linear10d` | 10 | 1  | `[0, 1]^10`            | 1   |
//! | `runaway2d` | 2  | 2  | `(0.5, 5) × (−1, 1)`   | 26  |
//! | `abc3d`     | 3  | 3  | `[0, 2π]^3`            | 2   |

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::sync::Arc;

use super::runaway::{ReCoefficients, RunawayDynamics};
use super::{BoundaryPolicy, BoxDomain, Dynamics, SdeError, SdeProblem};

pub const CATALOG_NAMES: [&str; 4] = ["sqrt1d", "linear10d", "runaway2d", "abc3d"];

/// Default Euler–Maruyama step for every catalog problem.
pub const DEFAULT_DT: f64 = 1e-3;

/// Numeric overrides keyed by parameter name.
pub type CatalogParams = BTreeMap<String, f64>;

/// `dX = (2√X + 1) dt + 2√X dW`; the square-root argument is clamped at 0.
#[derive(Debug, Clone, Copy)]
pub struct Sqrt1d;

impl Dynamics for Sqrt1d {
    fn drift(&self, _t: f64, x: &[f64], out: &mut [f64]) {
        out[0] = 2.0 * x[0].max(0.0).sqrt() + 1.0;
    }
    fn diffusion(&self, _t: f64, x: &[f64], out: &mut [f64]) {
        out[0] = 2.0 * x[0].max(0.0).sqrt();
    }
}

/// `dX = X dt + K X dW` with one shared Brownian motion and
/// `K = ½ (I + superdiagonal of ones)`.
#[derive(Debug, Clone, Copy)]
pub struct Linear10d;

impl Linear10d {
    pub const D: usize = 10;
}

/// Applies `K` to `x`.
pub fn apply_k(x: &[f64], out: &mut [f64]) {
    let d = x.len();
    for i in 0..d {
        let next = if i + 1 < d { x[i + 1] } else { 0.0 };
        out[i] = 0.5 * (x[i] + next);
    }
}

impl Dynamics for Linear10d {
    fn drift(&self, _t: f64, x: &[f64], out: &mut [f64]) {
        out.copy_from_slice(x);
    }
    fn diffusion(&self, _t: f64, x: &[f64], out: &mut [f64]) {
        apply_k(x, out);
    }
}

/// ABC velocity field scaled by the Péclet number, unit isotropic diffusion.
#[derive(Debug, Clone, Copy)]
pub struct AbcFlow {
    pub pe: f64,
    pub a: f64,
    pub b: f64,
    pub c: f64,
}

impl Default for AbcFlow {
    fn default() -> Self {
        Self { pe: 3.0, a: 1.0, b: 1.0, c: 0.25 }
    }
}

impl Dynamics for AbcFlow {
    fn drift(&self, _t: f64, x: &[f64], out: &mut [f64]) {
        let (sx, cx) = x[0].sin_cos();
        let (sy, cy) = x[1].sin_cos();
        let (sz, cz) = x[2].sin_cos();
        out[0] = self.pe * (self.a * sz + self.c * cy);
        out[1] = self.pe * (self.b * sx + self.a * cz);
        out[2] = self.pe * (self.c * sy + self.b * cx);
    }
    fn diffusion(&self, _t: f64, _x: &[f64], out: &mut [f64]) {
        out.fill(0.0);
        out[0] = 1.0;
        out[4] = 1.0;
        out[8] = 1.0;
    }
}

struct ParamReader<'a> {
    problem: &'a str,
    params: &'a CatalogParams,
    allowed: &'a [&'a str],
}

impl ParamReader<'_> {
    fn check_keys(&self) -> Result<(), SdeError> {
        for key in self.params.keys() {
            if !self.allowed.contains(&key.as_str()) {
                return Err(SdeError::BadParam {
                    problem: self.problem.into(),
                    key: key.clone(),
                    reason: format!("unknown parameter; accepted: {}", self.allowed.join(", ")),
                });
            }
        }
        Ok(())
    }

    fn get(&self, key: &str, default: f64) -> Result<f64, SdeError> {
        match self.params.get(key) {
            None => Ok(default),
            Some(v) if v.is_finite() => Ok(*v),
            Some(v) => Err(SdeError::BadParam {
                problem: self.problem.into(),
                key: key.into(),
                reason: format!("value {v} is not finite"),
            }),
        }
    }
}

/// Builds a named problem with its reference parameters, applying overrides from `params`.
pub fn problem_catalog(name: &str, params: &CatalogParams) -> Result<SdeProblem, SdeError> {
    match name {
        "sqrt1d" => {
            let r = ParamReader { problem: name, params, allowed: &["T", "L"] };
            r.check_keys()?;
            SdeProblem::new(
                name,
                1,
                1,
                Arc::new(Sqrt1d),
                BoxDomain::new(vec![0.0], vec![r.get("L", 5.0)?])?,
                r.get("T", 0.1)?,
                vec![BoundaryPolicy::None],
            )
        }
        "linear10d" => {
            let r = ParamReader { problem: name, params, allowed: &["T"] };
            r.check_keys()?;
            SdeProblem::new(
                name,
                Linear10d::D,
                1,
                Arc::new(Linear10d),
                BoxDomain::cube(Linear10d::D, 0.0, 1.0)?,
                r.get("T", 1.0)?,
                vec![BoundaryPolicy::None; Linear10d::D],
            )
        }
        "runaway2d" => {
            let r = ParamReader {
                problem: name,
                params,
                allowed: &["T", "Z", "tau", "E0", "T_tilde", "T_hat_f", "mc2", "p_min", "p_max"],
            };
            r.check_keys()?;
            let def = ReCoefficients::default();
            let coeffs = ReCoefficients {
                z_ion: r.get("Z", def.z_ion)?,
                tau: r.get("tau", def.tau)?,
                e0: r.get("E0", def.e0)?,
                t_tilde: r.get("T_tilde", def.t_tilde)?,
                t_hat_f: r.get("T_hat_f", def.t_hat_f)?,
                mc2: r.get("mc2", def.mc2)?,
            };
            let p_min = r.get("p_min", 0.5)?;
            if p_min <= 0.0 {
                return Err(SdeError::BadParam {
                    problem: name.into(),
                    key: "p_min".into(),
                    reason: "must be positive".into(),
                });
            }
            SdeProblem::new(
                name,
                2,
                2,
                Arc::new(RunawayDynamics::new(coeffs)?),
                BoxDomain::new(vec![p_min, -1.0], vec![r.get("p_max", 5.0)?, 1.0])?,
                r.get("T", 26.0)?,
                vec![BoundaryPolicy::Reflect; 2],
            )
        }
        "abc3d" => {
            let r = ParamReader { problem: name, params, allowed: &["T", "Pe", "A", "B", "C"] };
            r.check_keys()?;
            let def = AbcFlow::default();
            let flow = AbcFlow {
                pe: r.get("Pe", def.pe)?,
                a: r.get("A", def.a)?,
                b: r.get("B", def.b)?,
                c: r.get("C", def.c)?,
            };
            SdeProblem::new(
                name,
                3,
                3,
                Arc::new(flow),
                BoxDomain::cube(3, 0.0, 2.0 * PI)?,
                r.get("T", 2.0)?,
                vec![BoundaryPolicy::None; 3],
            )
        }
        other => Err(SdeError::UnknownProblem {
            name: other.into(),
            valid: CATALOG_NAMES.join(", "),
        }),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sde::runaway::re_coefficients;

    fn default(name: &str) -> SdeProblem {
        problem_catalog(name, &CatalogParams::default()).unwrap()
    }

    #[test]
    fn reference_defaults() {
        let p = default("sqrt1d");
        assert_eq!((p.d, p.m, p.horizon), (1, 1, 0.1));
        assert_eq!(p.domain.upper, vec![5.0]);
        let p = default("linear10d");
        assert_eq!((p.d, p.m, p.horizon), (10, 1, 1.0));
        let p = default("runaway2d");
        assert_eq!((p.d, p.m, p.horizon), (2, 2, 26.0));
        assert_eq!(p.domain.lower, vec![0.5, -1.0]);
        assert_eq!(p.domain.upper, vec![5.0, 1.0]);
        let p = default("abc3d");
        assert_eq!((p.d, p.m, p.horizon), (3, 3, 2.0));
        assert!((p.domain.upper[2] - 2.0 * PI).abs() < 1e-15);
    }

    #[test]
    fn sqrt1d_drift_at_four() {
        assert_eq!(default("sqrt1d").drift_at(0.0, &[4.0]), vec![5.0]);
    }

    #[test]
    fn abc_drift_at_origin() {
        let b = default("abc3d").drift_at(0.0, &[0.0, 0.0, 0.0]);
        let want = [0.75, 3.0, 3.0];
        for (g, w) in b.iter().zip(want) {
            assert!((g - w).abs() < 1e-15);
        }
    }

    #[test]
    fn runaway_diffusion_structure() {
        let p = default("runaway2d");
        let s = p.diffusion_at(0.0, &[2.0, 0.5]);
        let c = ReCoefficients::default();
        let cc = re_coefficients(2.0, &c, &c.derived()).unwrap();
        assert_eq!(s[1], 0.0);
        assert_eq!(s[2], 0.0);
        assert!((s[0] - (2.0 * cc.c_a).sqrt()).abs() < 1e-15);
        assert!((s[3] - (2.0 * cc.c_b).sqrt() * 0.75f64.sqrt() / 2.0).abs() < 1e-15);
    }

    #[test]
    fn linear10d_k_is_upper_bidiagonal() {
        let mut e = [0.0; 10];
        e[3] = 1.0;
        let mut out = [0.0; 10];
        apply_k(&e, &mut out);
        // column 3 of K has 0.5 at rows 2 and 3
        for (i, v) in out.iter().enumerate() {
            let want = if i == 2 || i == 3 { 0.5 } else { 0.0 };
            assert_eq!(*v, want);
        }
    }

    #[test]
    fn overrides_and_errors() {
        let mut params = CatalogParams::new();
        params.insert("Pe".into(), 1.0);
        let p = problem_catalog("abc3d", &params).unwrap();
        assert!((p.drift_at(0.0, &[0.0; 3])[0] - 0.25).abs() < 1e-15);
        params.insert("bogus".into(), 1.0);
        assert!(matches!(problem_catalog("abc3d", &params), Err(SdeError::BadParam { .. })));
        let err = problem_catalog("nope", &CatalogParams::new()).unwrap_err();
        let msg = err.to_string();
        for n in CATALOG_NAMES {
            assert!(msg.contains(n), "{msg}");
        }
    }
}

//! Itô SDE problems `dX = b(t, X) dt + σ(t, X) dW` on a box domain, the
//! Euler–Maruyama particle integrator, and generation of `(x0, xT)` training
//! pairs.

pub mod analytic;
pub mod catalog;
pub mod dataset;
pub mod runaway;

use std::fmt;
use std::sync::Arc;

use rand::Rng;
use rand_distr::StandardNormal;
use thiserror::Error;

use crate::par;
use crate::rng;

pub use catalog::{problem_catalog, CatalogParams, CATALOG_NAMES};
pub use dataset::PairDataset;
pub use runaway::{ReCoefficients, ReDerived};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SdeError {
    #[error("non-finite {what} at t = {t}, x = {x:?}")]
    IntegrationFailure { what: &'static str, t: f64, x: Vec<f64> },
    #[error("integration failed on row {row}: {source}")]
    RowFailure {
        row: usize,
        #[source]
        source: Box<SdeError>,
    },
    #[error("invalid problem: {0}")]
    InvalidProblem(String),
    #[error("invalid integrator configuration: {0}")]
    InvalidConfig(String),
    #[error("unknown problem {name:?}; valid names: {valid}")]
    UnknownProblem { name: String, valid: String },
    #[error("bad parameter {key:?} for problem {problem}: {reason}")]
    BadParam {
        problem: String,
        key: String,
        reason: String,
    },
    #[error("domain error: {0}")]
    Domain(String),
    #[error("dataset error: {0}")]
    Dataset(String),
}

/// Drift and diffusion coefficients of an SDE.
///
/// `diffusion` writes a row-major `d × m` matrix.
pub trait Dynamics: Send + Sync {
    fn drift(&self, t: f64, x: &[f64], out: &mut [f64]);
    fn diffusion(&self, t: f64, x: &[f64], out: &mut [f64]);
}

/// Adapts a pair of closures to [`Dynamics`].
pub struct FnDynamics<B, S> {
    pub drift: B,
    pub diffusion: S,
}

impl<B, S> Dynamics for FnDynamics<B, S>
where
    B: Fn(f64, &[f64], &mut [f64]) + Send + Sync,
    S: Fn(f64, &[f64], &mut [f64]) + Send + Sync,
{
    fn drift(&self, t: f64, x: &[f64], out: &mut [f64]) {
        (self.drift)(t, x, out)
    }
    fn diffusion(&self, t: f64, x: &[f64], out: &mut [f64]) {
        (self.diffusion)(t, x, out)
    }
}

/// What happens to a coordinate that leaves the domain after a step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BoundaryPolicy {
    None,
    Reflect,
    Clamp,
}

/// Axis-aligned box `[lower_i, upper_i]`.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct BoxDomain {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl BoxDomain {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self, SdeError> {
        if lower.len() != upper.len() || lower.is_empty() {
            return Err(SdeError::InvalidProblem(format!(
                "domain bounds have lengths {} and {}",
                lower.len(),
                upper.len()
            )));
        }
        for (i, (lo, hi)) in lower.iter().zip(&upper).enumerate() {
            if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                return Err(SdeError::InvalidProblem(format!(
                    "axis {i}: lower bound {lo} must be finite and below upper bound {hi}"
                )));
            }
        }
        Ok(Self { lower, upper })
    }

    pub fn cube(d: usize, lo: f64, hi: f64) -> Result<Self, SdeError> {
        Self::new(vec![lo; d], vec![hi; d])
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn width(&self, axis: usize) -> f64 {
        self.upper[axis] - self.lower[axis]
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.iter()
            .zip(self.lower.iter().zip(&self.upper))
            .all(|(v, (lo, hi))| *v >= *lo && *v <= *hi)
    }

    pub fn volume(&self) -> f64 {
        (0..self.dim()).map(|i| self.width(i)).product()
    }

    /// Fills `out` with a uniform draw from the box.
    pub fn sample_uniform<R: Rng + ?Sized>(&self, rng: &mut R, out: &mut [f64]) {
        for (i, o) in out.iter_mut().enumerate() {
            let u: f64 = rng.random();
            *o = self.lower[i] + u * self.width(i);
        }
    }
}

/// Reflects `v` into `[lo, hi]` (folding repeatedly for large excursions).
pub fn reflect_into(v: f64, lo: f64, hi: f64) -> f64 {
    if v >= lo && v <= hi {
        return v;
    }
    let w = hi - lo;
    let period = 2.0 * w;
    let mut r = (v - lo).rem_euclid(period);
    if r > w {
        r = period - r;
    }
    lo + r
}

/// An SDE problem: dynamics, dimensions, domain `𝒟`, horizon `T`, and the
/// per-axis boundary policy applied after every step.
#[derive(Clone)]
pub struct SdeProblem {
    pub name: String,
    pub d: usize,
    pub m: usize,
    pub dynamics: Arc<dyn Dynamics>,
    pub domain: BoxDomain,
    pub horizon: f64,
    pub boundary: Vec<BoundaryPolicy>,
}

impl fmt::Debug for SdeProblem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SdeProblem")
            .field("name", &self.name)
            .field("d", &self.d)
            .field("m", &self.m)
            .field("domain", &self.domain)
            .field("horizon", &self.horizon)
            .field("boundary", &self.boundary)
            .finish()
    }
}

impl SdeProblem {
    pub fn new(
        name: impl Into<String>,
        d: usize,
        m: usize,
        dynamics: Arc<dyn Dynamics>,
        domain: BoxDomain,
        horizon: f64,
        boundary: Vec<BoundaryPolicy>,
    ) -> Result<Self, SdeError> {
        if d == 0 || m == 0 {
            return Err(SdeError::InvalidProblem("dimensions must be positive".into()));
        }
        if domain.dim() != d {
            return Err(SdeError::InvalidProblem(format!(
                "domain has {} axes but d = {d}",
                domain.dim()
            )));
        }
        if boundary.len() != d {
            return Err(SdeError::InvalidProblem(format!(
                "{} boundary policies for d = {d}",
                boundary.len()
            )));
        }
        // A zero horizon is accepted as the degenerate identity map.
        if !(horizon.is_finite() && horizon >= 0.0) {
            return Err(SdeError::InvalidProblem(format!("horizon {horizon} must be >= 0")));
        }
        Ok(Self {
            name: name.into(),
            d,
            m,
            dynamics,
            domain,
            horizon,
            boundary,
        })
    }

    /// Same problem with a different final time.
    pub fn with_horizon(&self, horizon: f64) -> Result<Self, SdeError> {
        let mut p = self.clone();
        if !(horizon.is_finite() && horizon >= 0.0) {
            return Err(SdeError::InvalidProblem(format!("horizon {horizon} must be >= 0")));
        }
        p.horizon = horizon;
        Ok(p)
    }

    pub fn drift_at(&self, t: f64, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.d];
        self.dynamics.drift(t, x, &mut out);
        out
    }

    pub fn diffusion_at(&self, t: f64, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.d * self.m];
        self.dynamics.diffusion(t, x, &mut out);
        out
    }

    fn apply_boundary(&self, x: &mut [f64]) {
        for (i, v) in x.iter_mut().enumerate() {
            match self.boundary[i] {
                BoundaryPolicy::None => {}
                BoundaryPolicy::Reflect => {
                    *v = reflect_into(*v, self.domain.lower[i], self.domain.upper[i]);
                }
                BoundaryPolicy::Clamp => {
                    *v = v.clamp(self.domain.lower[i], self.domain.upper[i]);
                }
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct IntegratorConfig {
    pub dt: f64,
    pub rng_seed: u64,
}

impl IntegratorConfig {
    pub fn new(dt: f64, rng_seed: u64) -> Self {
        Self { dt, rng_seed }
    }

    pub fn validate(&self, problem: &SdeProblem) -> Result<(), SdeError> {
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return Err(SdeError::InvalidConfig(format!("dt = {} must be positive", self.dt)));
        }
        if problem.horizon > 0.0 && self.dt > problem.horizon {
            return Err(SdeError::InvalidConfig(format!(
                "dt = {} exceeds the horizon {}",
                self.dt, problem.horizon
            )));
        }
        Ok(())
    }
}

/// Reusable scratch space for repeated steps of one problem.
pub struct Stepper<'a> {
    problem: &'a SdeProblem,
    drift: Vec<f64>,
    diffusion: Vec<f64>,
}

impl<'a> Stepper<'a> {
    pub fn new(problem: &'a SdeProblem) -> Self {
        Self {
            problem,
            drift: vec![0.0; problem.d],
            diffusion: vec![0.0; problem.d * problem.m],
        }
    }

    /// In-place Euler–Maruyama step `x ← x + b dt + σ dW`, then the boundary policy.
    pub fn step(&mut self, t: f64, x: &mut [f64], dt: f64, dw: &[f64]) -> Result<(), SdeError> {
        let p = self.problem;
        p.dynamics.drift(t, x, &mut self.drift);
        p.dynamics.diffusion(t, x, &mut self.diffusion);
        if !self.drift.iter().all(|v| v.is_finite()) {
            return Err(SdeError::IntegrationFailure { what: "drift", t, x: x.to_vec() });
        }
        if !self.diffusion.iter().all(|v| v.is_finite()) {
            return Err(SdeError::IntegrationFailure { what: "diffusion", t, x: x.to_vec() });
        }
        let m = p.m;
        for (i, xi) in x.iter_mut().enumerate() {
            let row = &self.diffusion[i * m..(i + 1) * m];
            let noise: f64 = row.iter().zip(dw).map(|(s, w)| s * w).sum();
            *xi += self.drift[i] * dt + noise;
        }
        p.apply_boundary(x);
        Ok(())
    }
}

/// One Euler–Maruyama step with a caller-supplied Brownian increment.
pub fn euler_maruyama_step(
    problem: &SdeProblem,
    t: f64,
    x: &[f64],
    dt: f64,
    dw: &[f64],
) -> Result<Vec<f64>, SdeError> {
    if !(dt > 0.0) {
        return Err(SdeError::InvalidConfig(format!("dt = {dt} must be positive")));
    }
    if dw.len() != problem.m || x.len() != problem.d {
        return Err(SdeError::InvalidConfig(format!(
            "expected x of length {} and dW of length {}",
            problem.d, problem.m
        )));
    }
    let mut out = x.to_vec();
    Stepper::new(problem).step(t, &mut out, dt, dw)?;
    Ok(out)
}

/// Step sizes covering `[0, horizon]`: uniform `dt` with a shortened final step.
pub fn time_grid(horizon: f64, dt: f64) -> (usize, f64) {
    if horizon <= 0.0 {
        return (0, 0.0);
    }
    let n = ((horizon / dt) - 1e-9).ceil().max(1.0) as usize;
    let last = horizon - (n - 1) as f64 * dt;
    (n, last)
}

/// Integrates one path from `x0` to the horizon using increments drawn from `rng`.
pub fn simulate_terminal_with<R: Rng + ?Sized>(
    problem: &SdeProblem,
    x0: &[f64],
    dt: f64,
    rng: &mut R,
) -> Result<Vec<f64>, SdeError> {
    let mut x = x0.to_vec();
    let mut stepper = Stepper::new(problem);
    let mut dw = vec![0.0; problem.m];
    let (n, last) = time_grid(problem.horizon, dt);
    let mut t = 0.0;
    for k in 0..n {
        let h = if k + 1 == n { last } else { dt };
        let sq = h.sqrt();
        for w in dw.iter_mut() {
            let z: f64 = rng.sample(StandardNormal);
            *w = sq * z;
        }
        stepper.step(t, &mut x, h, &dw)?;
        t += h;
    }
    Ok(x)
}

/// Terminal state `X_T` of one path started at `x0`, driven by stream 0 of `cfg.rng_seed`.
pub fn simulate_terminal(
    problem: &SdeProblem,
    x0: &[f64],
    cfg: &IntegratorConfig,
) -> Result<Vec<f64>, SdeError> {
    cfg.validate(problem)?;
    if !problem.domain.contains(x0) {
        return Err(SdeError::Domain(format!("x0 = {x0:?} lies outside the domain")));
    }
    let mut r = rng::stream(cfg.rng_seed, 0);
    simulate_terminal_with(problem, x0, cfg.dt, &mut r)
}

/// Terminal states for many starting points, one independent stream per row.
/// Rows are processed in parallel; the output does not depend on worker count.
pub fn simulate_batch(
    problem: &SdeProblem,
    x0s: &[f64],
    cfg: &IntegratorConfig,
) -> Result<Vec<f64>, SdeError> {
    cfg.validate(problem)?;
    let d = problem.d;
    let n = x0s.len() / d;
    let rows = par::try_map_indexed(n, |i| {
        let mut r = rng::stream(cfg.rng_seed, i as u64);
        simulate_terminal_with(problem, &x0s[i * d..(i + 1) * d], cfg.dt, &mut r).map_err(|e| {
            SdeError::RowFailure { row: i, source: Box::new(e) }
        })
    })?;
    Ok(rows.into_iter().flatten().collect())
}

/// Draws `n` initial states uniformly over the domain and integrates each one.
///
/// Initial states come from stream `u64::MAX` of the seed; row `i`'s path uses
/// stream `i`, so the dataset is identical for any worker count.
pub fn generate_pairs(
    problem: &SdeProblem,
    n: usize,
    cfg: &IntegratorConfig,
) -> Result<PairDataset, SdeError> {
    if n == 0 {
        return Err(SdeError::Dataset("N must be at least 1".into()));
    }
    cfg.validate(problem)?;
    let d = problem.d;
    let mut init_rng = rng::stream(cfg.rng_seed, u64::MAX);
    let mut x0 = vec![0.0; n * d];
    for row in x0.chunks_mut(d) {
        problem.domain.sample_uniform(&mut init_rng, row);
    }
    let xt = simulate_batch(problem, &x0, cfg)?;
    PairDataset::new(d, problem.horizon, x0, xt)
}

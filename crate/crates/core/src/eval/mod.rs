//! Quantities of interest, KL metrics and Monte Carlo references.

mod dist;
pub mod export;

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::flow::{FlowError, PrnfModel};
use crate::rng;
use crate::sde::{self, analytic, IntegratorConfig, SdeError, SdeProblem};
use crate::tune::{kde_fit, Bandwidth, TuneError};

pub use dist::{simpson, InitialDistribution, InverseCdfTable, Transform, TABLE_NODES, TEST_1D};

/// Largest log-ratio a KL integrand may contribute.
pub const KL_LOG_RATIO_CLIP: f64 = 700.0;
/// Default runaway threshold momentum.
pub const RUNAWAY_THRESHOLD: f64 = 1.75;

#[derive(Debug, thiserror::Error)]
pub enum EvalError {
    #[error("invalid argument: {0}")]
    Invalid(String),
    #[error(transparent)]
    Flow(#[from] FlowError),
    #[error(transparent)]
    Sde(#[from] SdeError),
    #[error(transparent)]
    Tune(#[from] TuneError),
}

/// Axis-aligned region; infinite bounds are allowed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Region {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl Region {
    /// `[0, π] × ℝ × [2π, 3π]`.
    pub fn abc_target() -> Self {
        Self { lower: vec![0.0, f64::NEG_INFINITY, 2.0 * PI], upper: vec![PI, f64::INFINITY, 3.0 * PI] }
    }

    /// Membership of the closed box; a region with `lower == upper` on some
    /// axis is treated as empty.
    pub fn contains(&self, x: &[f64]) -> bool {
        x.iter().zip(self.lower.iter().zip(&self.upper)).all(|(v, (a, b))| a < b && v >= a && v <= b)
    }
}

/// Integrand `F` of a quantity of interest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Integrand {
    One,
    Coordinate { index: usize },
    Indicator { region: Region },
}

impl Integrand {
    pub fn eval(&self, x: &[f64]) -> f64 {
        match self {
            Integrand::One => 1.0,
            Integrand::Coordinate { index } => x[*index],
            Integrand::Indicator { region } => {
                if region.contains(x) {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QoiSpec {
    pub integrand: Integrand,
    /// Initial draws.
    pub m: usize,
    /// Conditional draws per initial draw.
    pub n: usize,
}

impl QoiSpec {
    fn validate(&self) -> Result<(), EvalError> {
        if self.m == 0 || self.n == 0 {
            return Err(EvalError::Invalid(format!("sample counts m={}, n={} must be positive", self.m, self.n)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    pub std_error: f64,
}

/// Double Monte Carlo sum over `values` laid out as `m` groups of `n`. The
/// standard error comes from the spread of the group means (or of the single
/// group's values when `m = 1`).
pub fn estimate_from_values(values: &[f64], m: usize, n: usize) -> Estimate {
    assert_eq!(values.len(), m * n);
    let groups: Vec<f64> = if m == 1 { values.to_vec() } else { values.chunks(n).map(|g| g.iter().sum::<f64>() / n as f64).collect() };
    if groups.len() == 1 {
        return Estimate { value: groups[0], std_error: 0.0 };
    }
    let (value, std_error) = crate::stats::mean_and_se(&groups);
    Estimate { value, std_error }
}

fn repeat_rows(x0s: &[f64], d: usize, n: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(x0s.len() * n);
    for row in x0s.chunks(d) {
        for _ in 0..n {
            out.extend_from_slice(row);
        }
    }
    out
}

/// Flow samples for a QoI: `m` initial draws, `n` conditional draws each.
pub fn flow_samples(model: &PrnfModel, p0: &InitialDistribution, m: usize, n: usize, seed: u64) -> Result<Vec<f64>, EvalError> {
    if p0.dim() != model.dim() {
        return Err(EvalError::Invalid(format!("initial law has dimension {}, model {}", p0.dim(), model.dim())));
    }
    let x0s = p0.sample(m, rng::derive_seed(seed, 1))?;
    let reps = repeat_rows(&x0s, model.dim(), n);
    Ok(model.sample_given(&reps, rng::derive_seed(seed, 2))?)
}

/// Terminal states simulated from `m` initial draws, `n` paths each.
pub fn mc_samples(problem: &SdeProblem, p0: &InitialDistribution, m: usize, n: usize, cfg: &IntegratorConfig) -> Result<Vec<f64>, EvalError> {
    if p0.dim() != problem.d {
        return Err(EvalError::Invalid(format!("initial law has dimension {}, problem {}", p0.dim(), problem.d)));
    }
    let x0s = p0.sample(m, rng::derive_seed(cfg.rng_seed, 1))?;
    let reps = repeat_rows(&x0s, problem.d, n);
    let sim_cfg = IntegratorConfig { rng_seed: rng::derive_seed(cfg.rng_seed, 2), ..*cfg };
    Ok(sde::simulate_batch(problem, &reps, &sim_cfg)?)
}

/// Terminal states of `linear10d` from its pathwise solution, one draw per
/// initial state; initial states are drawn exactly as in [`mc_samples`].
pub fn linear10d_reference(p0: &InitialDistribution, m: usize, t: f64, seed: u64) -> Result<Vec<f64>, EvalError> {
    if p0.dim() != 10 {
        return Err(EvalError::Invalid(format!("initial law has dimension {}, problem 10", p0.dim())));
    }
    let x0s = p0.sample(m, rng::derive_seed(seed, 1))?;
    let stream = rng::derive_seed(seed, 2);
    let rows = crate::par::map_indexed(m, |i| {
        analytic::sample_linear10d_exact(&x0s[i * 10..(i + 1) * 10], t, &mut rng::stream(stream, i as u64))
    });
    Ok(rows.into_iter().flatten().collect())
}

fn integrand_values(samples: &[f64], d: usize, f: &Integrand) -> Vec<f64> {
    samples.chunks(d).map(|x| f.eval(x)).collect()
}

/// `(1/MN) ΣΣ F(x̂t)` with `x0 ~ p0` and flow samples.
pub fn qoi_estimate(model: &PrnfModel, p0: &InitialDistribution, spec: &QoiSpec, seed: u64) -> Result<Estimate, EvalError> {
    spec.validate()?;
    let s = flow_samples(model, p0, spec.m, spec.n, seed)?;
    Ok(estimate_from_values(&integrand_values(&s, model.dim(), &spec.integrand), spec.m, spec.n))
}

/// Same estimator as [`qoi_estimate`] with direct path simulation.
pub fn mc_reference(problem: &SdeProblem, p0: &InitialDistribution, spec: &QoiSpec, cfg: &IntegratorConfig) -> Result<Estimate, EvalError> {
    spec.validate()?;
    let s = mc_samples(problem, p0, spec.m, spec.n, cfg)?;
    Ok(estimate_from_values(&integrand_values(&s, problem.d, &spec.integrand), spec.m, spec.n))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KlResult {
    pub kl: f64,
    /// Grid points where the approximate density vanished and the log-ratio was clipped.
    pub clipped: usize,
}

/// `∫ p ln(p/q)` by the trapezoid rule on a sorted `grid`.
pub fn kl_between(p: impl Fn(f64) -> f64, q: impl Fn(f64) -> f64, grid: &[f64]) -> KlResult {
    let mut clipped = 0;
    let vals: Vec<f64> = grid
        .iter()
        .map(|&x| {
            let pv = p(x);
            if pv <= 0.0 {
                return 0.0;
            }
            let qv = q(x);
            let mut ratio = pv.ln() - qv.ln();
            if !(ratio <= KL_LOG_RATIO_CLIP) {
                ratio = KL_LOG_RATIO_CLIP;
                clipped += 1;
            }
            pv * ratio
        })
        .collect();
    let kl = grid.windows(2).zip(vals.windows(2)).map(|(g, v)| 0.5 * (g[1] - g[0]) * (v[0] + v[1])).sum();
    KlResult { kl, clipped }
}

/// KL from a KDE of `samples` to the `exact` density.
pub fn kl_divergence_1d(exact: impl Fn(f64) -> f64, samples: &[f64], grid: &[f64]) -> Result<KlResult, EvalError> {
    let kde = kde_fit(samples, 1, &Bandwidth::Scott, None)?;
    Ok(kl_between(exact, |x| kde.density(&[x]), grid))
}

/// Uniform grid of `n` points on `[a, b]`.
pub fn uniform_grid(a: f64, b: f64, n: usize) -> Vec<f64> {
    (0..n).map(|i| a + (b - a) * i as f64 / (n - 1) as f64).collect()
}

/// Points of the per-coordinate KL grids.
pub const MARGINAL_GRID: usize = 1001;

/// Reference tail mass left out of each marginal KL grid, per side.
pub const MARGINAL_TAIL: f64 = 1e-3;

/// Per-coordinate KDE-versus-KDE KL divergences for the listed `dims`, from
/// the model samples' KDE to the reference samples' KDE. Samples are
/// row-major with `d` columns. The grid spans the reference's central
/// quantiles: beyond them both sides are a handful of isolated kernels and
/// the log-ratio is noise.
pub fn marginal_kl(reference: &[f64], model: &[f64], d: usize, dims: &[usize]) -> Result<Vec<KlResult>, EvalError> {
    if reference.is_empty() || model.is_empty() {
        return Err(EvalError::Invalid("marginal KL needs nonempty sample sets".into()));
    }
    dims.iter()
        .map(|&j| {
            if j >= d {
                return Err(EvalError::Invalid(format!("dimension {j} out of range for d = {d}")));
            }
            let a: Vec<f64> = reference.chunks(d).map(|r| r[j]).collect();
            let b: Vec<f64> = model.chunks(d).map(|r| r[j]).collect();
            let ka = kde_fit(&a, 1, &Bandwidth::Scott, None)?;
            let kb = kde_fit(&b, 1, &Bandwidth::Scott, None)?;
            let mut sorted = a.clone();
            sorted.sort_by(f64::total_cmp);
            let n = sorted.len();
            let at = |q: f64| sorted[((q * n as f64) as usize).min(n - 1)];
            let (lo, hi) = (at(MARGINAL_TAIL), at(1.0 - MARGINAL_TAIL));
            if !(hi > lo) {
                return Err(EvalError::Invalid(format!("reference marginal {j} has no spread")));
            }
            let grid = uniform_grid(lo, hi, MARGINAL_GRID);
            Ok(kl_between(|x| ka.density(&[x]), |x| kb.density(&[x]), &grid))
        })
        .collect()
}

/// Density of `xt` at `x` for the square-root problem when `x0 ~ p0`, by
/// quadrature of the conditional density against `p0`.
pub fn sqrt1d_marginal_density(p0: &InitialDistribution, x: f64, t: f64) -> Result<f64, EvalError> {
    match p0 {
        InitialDistribution::Delta { x: at } if at.len() == 1 => Ok(analytic::analytic_pdf_1d(x, at[0], t)),
        InitialDistribution::Bar { a, b } => Ok(gauss_legendre(|s| analytic::analytic_pdf_1d(x, s, t) / (b - a), *a, *b, 400)),
        InitialDistribution::Sin2 { length } => {
            Ok(gauss_legendre(|s| analytic::analytic_pdf_1d(x, s, t) * p0.density(&[s]).unwrap(), 0.0, *length, 800))
        }
        InitialDistribution::Ricker { center, width } => Ok(gauss_legendre(
            |s| analytic::analytic_pdf_1d(x, s, t) * p0.density(&[s]).unwrap(),
            center - width,
            center + width,
            400,
        )),
        InitialDistribution::Uniform { lower, upper } if lower.len() == 1 => {
            let (a, b) = (lower[0], upper[0]);
            Ok(gauss_legendre(|s| analytic::analytic_pdf_1d(x, s, t) / (b - a), a, b, 800))
        }
        _ => Err(EvalError::Invalid("no quadrature reference for this initial law".into())),
    }
}

/// Composite 5-point Gauss–Legendre rule with `panels` panels.
pub fn gauss_legendre(f: impl Fn(f64) -> f64, a: f64, b: f64, panels: usize) -> f64 {
    const X: [f64; 5] = [0.0, -0.538_469_310_105_683_1, 0.538_469_310_105_683_1, -0.906_179_845_938_664, 0.906_179_845_938_664];
    const W: [f64; 5] = [
        0.568_888_888_888_888_9,
        0.478_628_670_499_366_5,
        0.478_628_670_499_366_5,
        0.236_926_885_056_189_1,
        0.236_926_885_056_189_1,
    ];
    let h = (b - a) / panels as f64;
    let mut s = 0.0;
    for k in 0..panels {
        let mid = a + (k as f64 + 0.5) * h;
        for (x, w) in X.iter().zip(W) {
            s += w * f(mid + 0.5 * h * x);
        }
    }
    0.5 * h * s
}

/// Fraction of `samples` (row-major, `d` columns) whose coordinate `axis`,
/// clamped to `[lo, hi]`, exceeds `threshold`. A threshold at or above `hi`
/// gives 0 and one at or below `lo` gives 1.
pub fn fraction_above(samples: &[f64], d: usize, axis: usize, threshold: f64, lo: f64, hi: f64) -> f64 {
    if threshold >= hi {
        return 0.0;
    }
    if threshold <= lo {
        return 1.0;
    }
    let n = samples.len() / d;
    let count = samples.chunks(d).filter(|r| r[axis].clamp(lo, hi) > threshold).count();
    count as f64 / n as f64
}

fn maxwellian_bounds(p0: &InitialDistribution) -> Result<(f64, f64), EvalError> {
    match p0 {
        InitialDistribution::Maxwellian { p_min, p_max, .. } => Ok((*p_min, *p_max)),
        _ => Err(EvalError::Invalid("runaway fraction needs a Maxwellian initial law".into())),
    }
}

/// Runaway fraction `n_RE` from the flow: Maxwellian initial states, one
/// conditional draw each, fraction with final momentum above `p_star`.
pub fn runaway_fraction(model: &PrnfModel, p0: &InitialDistribution, p_star: f64, n: usize, seed: u64) -> Result<f64, EvalError> {
    let (lo, hi) = maxwellian_bounds(p0)?;
    let s = flow_samples(model, p0, n, 1, seed)?;
    Ok(fraction_above(&s, 2, 0, p_star, lo, hi))
}

/// Runaway fraction by direct simulation.
pub fn runaway_fraction_mc(problem: &SdeProblem, p0: &InitialDistribution, p_star: f64, n: usize, cfg: &IntegratorConfig) -> Result<f64, EvalError> {
    let (lo, hi) = maxwellian_bounds(p0)?;
    let s = mc_samples(problem, p0, n, 1, cfg)?;
    Ok(fraction_above(&s, 2, 0, p_star, lo, hi))
}

fn fraction_in(samples: &[f64], d: usize, region: &Region) -> f64 {
    let n = samples.len() / d;
    samples.chunks(d).filter(|x| region.contains(x)).count() as f64 / n as f64
}

/// Fraction of a scalar cloud centred at `(xc, π, zc)` found in `region` at
/// the final time, from the flow.
pub fn target_density(model: &PrnfModel, xc: f64, zc: f64, region: &Region, n: usize, seed: u64) -> Result<f64, EvalError> {
    let p0 = InitialDistribution::abc_cloud(xc, zc);
    let s = flow_samples(model, &p0, n, 1, seed)?;
    Ok(fraction_in(&s, 3, region))
}

/// [`target_density`] by direct simulation.
pub fn target_density_mc(problem: &SdeProblem, xc: f64, zc: f64, region: &Region, n: usize, cfg: &IntegratorConfig) -> Result<f64, EvalError> {
    let p0 = InitialDistribution::abc_cloud(xc, zc);
    let s = mc_samples(problem, &p0, n, 1, cfg)?;
    Ok(fraction_in(&s, 3, region))
}

#[cfg(test)]
mod tests;

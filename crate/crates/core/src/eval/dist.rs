//! Initial distributions.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use super::EvalError;
use crate::flow::SAMPLE_CHUNK;
use crate::par;
use crate::rng::{self, StreamRng};

/// Componentwise transform applied to Gaussian draws.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Transform {
    Identity,
    /// `x²`
    Square,
    /// `ln(|x| + 1)`
    Log,
    /// `sin(x²)`
    Sin,
}

impl Transform {
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Transform::Identity => x,
            Transform::Square => x * x,
            Transform::Log => (x.abs() + 1.0).ln(),
            Transform::Sin => (x * x).sin(),
        }
    }

    pub const ALL: [Transform; 4] = [Transform::Identity, Transform::Square, Transform::Log, Transform::Sin];

    pub fn name(self) -> &'static str {
        match self {
            Transform::Identity => "normal",
            Transform::Square => "square",
            Transform::Log => "log",
            Transform::Sin => "sin",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InitialDistribution {
    /// Point mass.
    Delta { x: Vec<f64> },
    /// Uniform on a box.
    Uniform { lower: Vec<f64>, upper: Vec<f64> },
    /// Uniform on `[a, b]`.
    Bar { a: f64, b: f64 },
    /// Density `(2/L) sin²(πx/L)` on `[0, L]`.
    Sin2 { length: f64 },
    /// Density `∝ (1 − u²) e^{−u²/2}`, `u = (x − center)/width`, on `|u| ≤ 1`.
    Ricker { center: f64, width: f64 },
    /// Momentum `p ∝ p² e^{−p²/p0²}` with `p0 = √(t0/t_tilde)` truncated to
    /// `[p_min, p_max]`; pitch `ξ` uniform on `[−1, 1]`.
    Maxwellian { t0: f64, t_tilde: f64, p_min: f64, p_max: f64 },
    /// Density `∝ Π exp(−((x_i − c_i)/σ_i)²)` restricted to the box.
    GaussianCloud { center: Vec<f64>, sigma: Vec<f64>, lower: Vec<f64>, upper: Vec<f64> },
    /// `transform(N(mean, variance))` independently in each of `dim` coordinates.
    NormalTransform { dim: usize, mean: f64, variance: f64, transform: Transform },
}

/// Names of the four one-dimensional test laws on `[0, 5]`.
pub const TEST_1D: [&str; 4] = ["delta", "bar", "sin2", "ricker"];

impl InitialDistribution {
    /// One-dimensional test laws: `delta` at 2.5, `bar` on `[1.5, 3.5]`,
    /// `sin2` on `[0, 5]`, `ricker` centred at 2.5 with width 0.8.
    pub fn test_1d(name: &str) -> Result<Self, EvalError> {
        Ok(match name {
            "delta" => Self::Delta { x: vec![2.5] },
            "bar" => Self::Bar { a: 1.5, b: 3.5 },
            "sin2" => Self::Sin2 { length: 5.0 },
            "ricker" => Self::Ricker { center: 2.5, width: 0.8 },
            _ => return Err(EvalError::Invalid(format!("unknown test distribution {name:?}; valid: {TEST_1D:?}"))),
        })
    }

    /// Maxwellian over the default momentum range `[0.5, 5]` with `T̃ = 3`.
    pub fn maxwellian(t0: f64) -> Self {
        Self::Maxwellian { t0, t_tilde: 3.0, p_min: 0.5, p_max: 5.0 }
    }

    /// Scalar cloud centred at `(xc, π, zc)` with widths `(π/3, π/5, π/4)`,
    /// restricted to `[0, 2π]³`.
    pub fn abc_cloud(xc: f64, zc: f64) -> Self {
        Self::GaussianCloud {
            center: vec![xc, PI, zc],
            sigma: vec![PI / 3.0, PI / 5.0, PI / 4.0],
            lower: vec![0.0; 3],
            upper: vec![2.0 * PI; 3],
        }
    }

    /// `transform(N(0.5, 0.1))` in ten dimensions.
    pub fn normal_10d(transform: Transform) -> Self {
        Self::NormalTransform { dim: 10, mean: 0.5, variance: 0.1, transform }
    }

    pub fn dim(&self) -> usize {
        match self {
            Self::Delta { x } => x.len(),
            Self::Uniform { lower, .. } => lower.len(),
            Self::Bar { .. } | Self::Sin2 { .. } | Self::Ricker { .. } => 1,
            Self::Maxwellian { .. } => 2,
            Self::GaussianCloud { center, .. } => center.len(),
            Self::NormalTransform { dim, .. } => *dim,
        }
    }

    /// Checks parameters and, for the 1D and 2D laws with a density, that the
    /// density integrates to one over its support to `1e-6`.
    pub fn validate(&self) -> Result<(), EvalError> {
        let bad = |msg: String| Err(EvalError::Invalid(msg));
        let finite = |v: &[f64]| v.iter().all(|x| x.is_finite());
        match self {
            Self::Delta { x } if x.is_empty() || !finite(x) => return bad(format!("delta location {x:?}")),
            Self::Uniform { lower, upper }
                if lower.is_empty()
                    || lower.len() != upper.len()
                    || !finite(lower)
                    || !finite(upper)
                    || lower.iter().zip(upper).any(|(a, b)| a >= b) =>
            {
                return bad(format!("uniform bounds {lower:?}, {upper:?}"));
            }
            Self::Bar { a, b } if !(a.is_finite() && b.is_finite() && a < b) => return bad(format!("bar on [{a}, {b}]")),
            Self::Sin2 { length } if !(length.is_finite() && *length > 0.0) => return bad(format!("sin2 length {length}")),
            Self::Ricker { center, width } if !(center.is_finite() && width.is_finite() && *width > 0.0) => {
                return bad(format!("ricker center {center}, width {width}"));
            }
            Self::Maxwellian { t0, t_tilde, p_min, p_max }
                if !(*t0 > 0.0 && *t_tilde > 0.0 && *p_min >= 0.0 && p_min < p_max && p_max.is_finite()) =>
            {
                return bad(format!("maxwellian t0={t0}, t_tilde={t_tilde}, p in [{p_min}, {p_max}]"));
            }
            Self::GaussianCloud { center, sigma, lower, upper } => {
                let n = center.len();
                if n == 0
                    || [sigma.len(), lower.len(), upper.len()].iter().any(|&l| l != n)
                    || !(finite(center) && finite(lower) && finite(upper))
                    || sigma.iter().any(|s| !(*s > 0.0 && s.is_finite()))
                    || lower.iter().zip(upper).any(|(a, b)| a >= b)
                {
                    return bad(format!("gaussian cloud {center:?} {sigma:?} {lower:?} {upper:?}"));
                }
                if self.cloud_mass().iter().any(|&m| m < 1e-12) {
                    return bad("gaussian cloud has negligible mass inside its box".into());
                }
            }
            Self::NormalTransform { dim, mean, variance, .. }
                if *dim == 0 || !mean.is_finite() || !(*variance > 0.0 && variance.is_finite()) =>
            {
                return bad(format!("normal transform dim={dim} mean={mean} variance={variance}"));
            }
            _ => {}
        }
        if let Some((lo, hi)) = self.support_1d() {
            let mass = simpson(|x| self.density_1d(x), lo, hi, 20_000);
            if (mass - 1.0).abs() > 1e-6 {
                return bad(format!("density integrates to {mass}"));
            }
        }
        if let Self::Maxwellian { p_min, p_max, .. } = self {
            let mass = simpson(|p| simpson(|xi| self.density(&[p, xi]).unwrap_or(0.0), -1.0, 1.0, 2), *p_min, *p_max, 20_000);
            if (mass - 1.0).abs() > 1e-6 {
                return bad(format!("maxwellian integrates to {mass}"));
            }
        }
        Ok(())
    }

    fn support_1d(&self) -> Option<(f64, f64)> {
        match self {
            Self::Bar { a, b } => Some((*a, *b)),
            Self::Sin2 { length } => Some((0.0, *length)),
            Self::Ricker { center, width } => Some((center - width, center + width)),
            _ => None,
        }
    }

    fn density_1d(&self, x: f64) -> f64 {
        match self {
            Self::Bar { a, b } => {
                if x >= *a && x <= *b {
                    1.0 / (b - a)
                } else {
                    0.0
                }
            }
            Self::Sin2 { length } => {
                if (0.0..=*length).contains(&x) {
                    2.0 / length * (PI * x / length).sin().powi(2)
                } else {
                    0.0
                }
            }
            Self::Ricker { center, width } => {
                let u = (x - center) / width;
                if u.abs() <= 1.0 {
                    (1.0 - u * u) * (-0.5 * u * u).exp() / (2.0 * (-0.5f64).exp() * width)
                } else {
                    0.0
                }
            }
            _ => f64::NAN,
        }
    }

    /// Normalizing mass of each cloud axis inside the box (as a fraction of
    /// the untruncated axis mass).
    fn cloud_mass(&self) -> Vec<f64> {
        let Self::GaussianCloud { center, sigma, lower, upper } = self else {
            return Vec::new();
        };
        (0..center.len())
            .map(|i| 0.5 * (libm::erf((upper[i] - center[i]) / sigma[i]) - libm::erf((lower[i] - center[i]) / sigma[i])))
            .collect()
    }

    /// Density at `x`, where one exists (not for `delta` or the transformed normals).
    pub fn density(&self, x: &[f64]) -> Option<f64> {
        if x.len() != self.dim() {
            return None;
        }
        match self {
            Self::Delta { .. } | Self::NormalTransform { .. } => None,
            Self::Uniform { lower, upper } => {
                let inside = x.iter().zip(lower.iter().zip(upper)).all(|(v, (a, b))| v >= a && v <= b);
                let vol: f64 = lower.iter().zip(upper).map(|(a, b)| b - a).product();
                Some(if inside { 1.0 / vol } else { 0.0 })
            }
            Self::Bar { .. } | Self::Sin2 { .. } | Self::Ricker { .. } => Some(self.density_1d(x[0])),
            Self::Maxwellian { t0, t_tilde, p_min, p_max } => {
                let (p, xi) = (x[0], x[1]);
                if p < *p_min || p > *p_max || xi.abs() > 1.0 {
                    return Some(0.0);
                }
                let p0 = (t0 / t_tilde).sqrt();
                let z = maxwell_cdf_unnormalized(*p_max, p0) - maxwell_cdf_unnormalized(*p_min, p0);
                Some(0.5 * p * p * (-(p / p0).powi(2)).exp() / z)
            }
            Self::GaussianCloud { center, sigma, lower, upper } => {
                let mass = self.cloud_mass();
                let mut dens = 1.0;
                for i in 0..center.len() {
                    if x[i] < lower[i] || x[i] > upper[i] {
                        return Some(0.0);
                    }
                    let u = (x[i] - center[i]) / sigma[i];
                    dens *= (-u * u).exp() / (sigma[i] * PI.sqrt() * mass[i]);
                }
                Some(dens)
            }
        }
    }

    /// CDF of a one-dimensional law, or of the momentum marginal of a Maxwellian.
    pub fn cdf(&self, x: f64) -> Option<f64> {
        match self {
            Self::Delta { x: at } if at.len() == 1 => Some(if x >= at[0] { 1.0 } else { 0.0 }),
            Self::Uniform { lower, upper } if lower.len() == 1 => Some(((x - lower[0]) / (upper[0] - lower[0])).clamp(0.0, 1.0)),
            Self::Bar { a, b } => Some(((x - a) / (b - a)).clamp(0.0, 1.0)),
            Self::Sin2 { length } => {
                let y = x.clamp(0.0, *length);
                Some(y / length - (2.0 * PI * y / length).sin() / (2.0 * PI))
            }
            Self::Ricker { center, width } => {
                let u = ((x - center) / width).clamp(-1.0, 1.0);
                let e = (-0.5f64).exp();
                Some((u * (-0.5 * u * u).exp() + e) / (2.0 * e))
            }
            Self::Maxwellian { t0, t_tilde, p_min, p_max } => {
                let p0 = (t0 / t_tilde).sqrt();
                let lo = maxwell_cdf_unnormalized(*p_min, p0);
                let z = maxwell_cdf_unnormalized(*p_max, p0) - lo;
                Some(((maxwell_cdf_unnormalized(x.clamp(*p_min, *p_max), p0) - lo) / z).clamp(0.0, 1.0))
            }
            _ => None,
        }
    }

    /// `n` independent draws, row-major. Depends only on `seed`.
    pub fn sample(&self, n: usize, seed: u64) -> Result<Vec<f64>, EvalError> {
        self.validate()?;
        let d = self.dim();
        let table = match self {
            Self::Maxwellian { .. } => Some(InverseCdfTable::new(|p| self.cdf(p).unwrap(), self.support_p())),
            _ => None,
        };
        let chunks = n.div_ceil(SAMPLE_CHUNK);
        let parts = par::map_indexed(chunks, |c| {
            let mut r = rng::stream(seed, c as u64);
            let rows = SAMPLE_CHUNK.min(n - c * SAMPLE_CHUNK);
            let mut out = vec![0.0; rows * d];
            for row in out.chunks_mut(d) {
                self.draw(&mut r, table.as_ref(), row);
            }
            out
        });
        Ok(parts.concat())
    }

    fn support_p(&self) -> (f64, f64) {
        match self {
            Self::Maxwellian { p_min, p_max, .. } => (*p_min, *p_max),
            _ => (0.0, 1.0),
        }
    }

    fn draw(&self, r: &mut StreamRng, table: Option<&InverseCdfTable>, out: &mut [f64]) {
        match self {
            Self::Delta { x } => out.copy_from_slice(x),
            Self::Uniform { lower, upper } => {
                for ((o, a), b) in out.iter_mut().zip(lower).zip(upper) {
                    *o = a + (b - a) * r.random::<f64>();
                }
            }
            Self::Bar { a, b } => out[0] = a + (b - a) * r.random::<f64>(),
            Self::Sin2 { length } => {
                let u: f64 = r.random();
                out[0] = invert_monotone(|x| self.cdf(x).unwrap(), |x| self.density_1d(x), 0.0, *length, u);
            }
            Self::Ricker { center, width } => {
                let u: f64 = r.random();
                out[0] = invert_monotone(|x| self.cdf(x).unwrap(), |x| self.density_1d(x), center - width, center + width, u);
            }
            Self::Maxwellian { .. } => {
                out[0] = table.expect("table built for maxwellian").eval(r.random());
                out[1] = 2.0 * r.random::<f64>() - 1.0;
            }
            Self::GaussianCloud { center, sigma, lower, upper } => {
                for i in 0..center.len() {
                    let normal = Normal::new(center[i], sigma[i] / 2f64.sqrt()).expect("validated sigma");
                    out[i] = loop {
                        let v = normal.sample(r);
                        if v >= lower[i] && v <= upper[i] {
                            break v;
                        }
                    };
                }
            }
            Self::NormalTransform { mean, variance, transform, .. } => {
                let sd = variance.sqrt();
                for o in out.iter_mut() {
                    let z: f64 = StandardNormal.sample(r);
                    *o = transform.apply(mean + sd * z);
                }
            }
        }
    }
}

/// `∫_0^p s² e^{−s²/p0²} ds`.
fn maxwell_cdf_unnormalized(p: f64, p0: f64) -> f64 {
    let y = p / p0;
    p0.powi(3) * (PI.sqrt() / 4.0 * libm::erf(y) - 0.5 * y * (-y * y).exp())
}

/// Composite Simpson rule with `n` (even) panels.
pub fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
    let n = n + n % 2;
    let h = (b - a) / n as f64;
    let mut s = f(a) + f(b);
    for i in 1..n {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        s += w * f(a + i as f64 * h);
    }
    s * h / 3.0
}

/// Solves `cdf(x) = u` on `[lo, hi]` by safeguarded Newton iteration.
fn invert_monotone(cdf: impl Fn(f64) -> f64, pdf: impl Fn(f64) -> f64, lo: f64, hi: f64, u: f64) -> f64 {
    let (mut a, mut b) = (lo, hi);
    let mut x = lo + u * (hi - lo);
    for _ in 0..100 {
        let f = cdf(x) - u;
        if f.abs() < 1e-15 {
            break;
        }
        if f > 0.0 {
            b = x;
        } else {
            a = x;
        }
        let p = pdf(x);
        let newton = x - f / p;
        x = if p > 0.0 && newton > a && newton < b { newton } else { 0.5 * (a + b) };
        if b - a < 1e-15 * (1.0 + x.abs()) {
            break;
        }
    }
    x
}

/// One-sided three-point end slope, limited to keep the interpolant monotone.
fn end_slope(h0: f64, h1: f64, s0: f64, s1: f64) -> f64 {
    let m = ((2.0 * h0 + h1) * s0 - h0 * s1) / (h0 + h1);
    if m * s0 <= 0.0 {
        0.0
    } else if s0 * s1 <= 0.0 && m.abs() > 3.0 * s0.abs() {
        3.0 * s0
    } else {
        m
    }
}

/// Inverse CDF from a 1024-node table with monotone (Fritsch–Carlson) cubic
/// interpolation of `x(F)`.
#[derive(Debug, Clone)]
pub struct InverseCdfTable {
    f: Vec<f64>,
    x: Vec<f64>,
    slope: Vec<f64>,
}

pub const TABLE_NODES: usize = 1024;

impl InverseCdfTable {
    pub fn new(cdf: impl Fn(f64) -> f64, (lo, hi): (f64, f64)) -> Self {
        let mut f = Vec::with_capacity(TABLE_NODES);
        let mut x = Vec::with_capacity(TABLE_NODES);
        for i in 0..TABLE_NODES {
            let xi = lo + (hi - lo) * i as f64 / (TABLE_NODES - 1) as f64;
            let fi = cdf(xi);
            // keep strictly increasing abscissae for the inverse
            if f.last().is_none_or(|&last| fi > last) {
                f.push(fi);
                x.push(xi);
            }
        }
        let n = f.len();
        assert!(n >= 3, "cdf must increase across the table");
        let secant: Vec<f64> = (0..n - 1).map(|i| (x[i + 1] - x[i]) / (f[i + 1] - f[i])).collect();
        let mut slope = vec![0.0; n];
        let dx: Vec<f64> = f.windows(2).map(|w| w[1] - w[0]).collect();
        slope[0] = end_slope(dx[0], dx[1], secant[0], secant[1]);
        slope[n - 1] = end_slope(dx[n - 2], dx[n - 3], secant[n - 2], secant[n - 3]);
        for i in 1..n - 1 {
            slope[i] = if secant[i - 1] * secant[i] <= 0.0 { 0.0 } else { 0.5 * (secant[i - 1] + secant[i]) };
        }
        for i in 0..n - 1 {
            if secant[i] == 0.0 {
                slope[i] = 0.0;
                slope[i + 1] = 0.0;
                continue;
            }
            let a = slope[i] / secant[i];
            let b = slope[i + 1] / secant[i];
            let s = a * a + b * b;
            if s > 9.0 {
                let t = 3.0 / s.sqrt();
                slope[i] = t * a * secant[i];
                slope[i + 1] = t * b * secant[i];
            }
        }
        Self { f, x, slope }
    }

    pub fn eval(&self, u: f64) -> f64 {
        let n = self.f.len();
        if u <= self.f[0] {
            return self.x[0];
        }
        if u >= self.f[n - 1] {
            return self.x[n - 1];
        }
        let i = self.f.partition_point(|&v| v <= u) - 1;
        let h = self.f[i + 1] - self.f[i];
        let t = (u - self.f[i]) / h;
        let (t2, t3) = (t * t, t * t * t);
        let h00 = 2.0 * t3 - 3.0 * t2 + 1.0;
        let h10 = t3 - 2.0 * t2 + t;
        let h01 = -2.0 * t3 + 3.0 * t2;
        let h11 = t3 - t2;
        h00 * self.x[i] + h10 * h * self.slope[i] + h01 * self.x[i + 1] + h11 * h * self.slope[i + 1]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats;

    #[test]
    fn one_dimensional_samplers_pass_ks() {
        for name in ["bar", "sin2", "ricker"] {
            let d = InitialDistribution::test_1d(name).unwrap();
            let s = d.sample(100_000, 11).unwrap();
            let (_, p) = stats::ks_one_sample(&s, |x| d.cdf(x).unwrap());
            assert!(p > 0.01, "{name}: KS p = {p}");
        }
    }

    #[test]
    fn maxwellian_momentum_marginal_passes_ks() {
        for t0 in [1.0, 4.0, 10.0] {
            let d = InitialDistribution::maxwellian(t0);
            let s = d.sample(100_000, 5).unwrap();
            let p_only: Vec<f64> = s.chunks(2).map(|r| r[0]).collect();
            assert!(s.chunks(2).all(|r| (0.5..=5.0).contains(&r[0]) && r[1].abs() <= 1.0));
            let (_, p) = stats::ks_one_sample(&p_only, |x| d.cdf(x).unwrap());
            assert!(p > 0.01, "t0={t0}: KS p = {p}");
            let xi: Vec<f64> = s.chunks(2).map(|r| 0.5 * (r[1] + 1.0)).collect();
            assert!(stats::chi2_uniformity(&xi, 20).1 > 1e-3);
        }
    }

    #[test]
    fn cdf_is_integral_of_density() {
        for name in ["bar", "sin2", "ricker"] {
            let d = InitialDistribution::test_1d(name).unwrap();
            let lo = match d {
                InitialDistribution::Bar { a, .. } => a,
                InitialDistribution::Ricker { center, width } => center - width,
                _ => 0.0,
            };
            for x in [1.8, 2.5, 3.1] {
                let q = simpson(|s| d.density(&[s]).unwrap(), lo, x, 20_000);
                assert!((q - d.cdf(x).unwrap()).abs() < 1e-6, "{name} at {x}");
            }
        }
        let m = InitialDistribution::maxwellian(2.0);
        let q = simpson(|p| 2.0 * m.density(&[p, 0.0]).unwrap(), 0.5, 1.7, 20_000);
        assert!((q - m.cdf(1.7).unwrap()).abs() < 1e-9);
    }

    #[test]
    fn densities_validate_and_reject_bad_parameters() {
        for name in TEST_1D {
            InitialDistribution::test_1d(name).unwrap().validate().unwrap();
        }
        InitialDistribution::maxwellian(1.0).validate().unwrap();
        InitialDistribution::abc_cloud(1.0, 5.0).validate().unwrap();
        assert!(InitialDistribution::Bar { a: 2.0, b: 1.0 }.validate().is_err());
        assert!(InitialDistribution::maxwellian(-1.0).validate().is_err());
        assert!(InitialDistribution::test_1d("gauss").is_err());
    }

    #[test]
    fn cloud_samples_stay_in_box_and_match_marginals() {
        let d = InitialDistribution::abc_cloud(0.5, 3.0);
        let s = d.sample(50_000, 2).unwrap();
        assert!(s.iter().all(|v| (0.0..=2.0 * PI).contains(v)));
        // truncated-normal CDF of the x axis by quadrature of the density
        let xs: Vec<f64> = s.chunks(3).map(|r| r[0]).collect();
        let sigma = PI / 3.0;
        let mass = 0.5 * (libm::erf((2.0 * PI - 0.5) / sigma) - libm::erf(-0.5 / sigma));
        let cdf = |x: f64| 0.5 * (libm::erf((x - 0.5) / sigma) - libm::erf(-0.5 / sigma)) / mass;
        assert!(stats::ks_one_sample(&xs, cdf).1 > 0.01);
        let vol_check = simpson(|x| simpson(|z| d.density(&[x, PI, z]).unwrap(), 0.0, 2.0 * PI, 400), 0.0, 2.0 * PI, 400);
        let y_marg = 1.0 / ((PI / 5.0) * PI.sqrt() * libm::erf(5.0));
        assert!((vol_check - y_marg).abs() < 1e-6 * y_marg);
    }

    #[test]
    fn delta_and_transforms() {
        let d = InitialDistribution::Delta { x: vec![1.0, 2.0] };
        assert!(d.sample(5, 1).unwrap().chunks(2).all(|r| r == [1.0, 2.0]));
        let sq = InitialDistribution::normal_10d(Transform::Square).sample(2000, 3).unwrap();
        assert_eq!(sq.len(), 20_000);
        assert!(sq.iter().all(|v| *v >= 0.0));
        let id = InitialDistribution::normal_10d(Transform::Identity).sample(20_000, 3).unwrap();
        let (m, _) = stats::mean_and_se(&id);
        assert!((m - 0.5).abs() < 0.01);
        assert!((stats::variance(&id) - 0.1).abs() < 0.005);
        assert_eq!(Transform::Sin.apply(2.0), 4f64.sin());
        assert_eq!(Transform::Log.apply(-1.0), 2f64.ln());
    }

    #[test]
    fn table_inverse_round_trips() {
        let d = InitialDistribution::maxwellian(3.0);
        let t = InverseCdfTable::new(|p| d.cdf(p).unwrap(), (0.5, 5.0));
        for u in [0.001, 0.1, 0.5, 0.9, 0.999] {
            let p = t.eval(u);
            assert!((d.cdf(p).unwrap() - u).abs() < 1e-6, "u={u}");
        }
        let mut last = 0.0;
        for i in 0..=1000 {
            let p = t.eval(i as f64 / 1000.0);
            assert!(p >= last);
            last = p;
        }
    }

    #[test]
    fn serde_tagging() {
        let d: InitialDistribution = serde_json::from_str(r#"{"kind":"bar","a":1.5,"b":3.5}"#).unwrap();
        assert_eq!(d, InitialDistribution::test_1d("bar").unwrap());
        let m: InitialDistribution = serde_json::from_str(r#"{"kind":"normal_transform","dim":10,"mean":0.5,"variance":0.1,"transform":"sin"}"#).unwrap();
        assert_eq!(m, InitialDistribution::normal_10d(Transform::Sin));
    }
}

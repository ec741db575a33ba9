//! Pseudo-reversible conditional flow.
//!
//! The forward map is `h = (h0, h1)` with `h0(x0, xt) = x0` and
//! `h1: R^{2d} -> R^d`; the inverse is `g = (g0, g1)` with `g0(z0, zt) = z0`.
//! Both trainable blocks are plain tanh MLPs. Because the identity blocks never
//! mix, the Jacobian determinant of either map reduces to the `d × d` block
//! acting on the second half of its input.
//!
//! Networks work on affinely standardized coordinates; see [`Standardization`].

mod checkpoint;

use std::f64::consts::PI;

use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::eval::InitialDistribution;
use crate::nn::lu::Lu;
use crate::nn::{JetTape, MlpNet, NnError};
use crate::par;
use crate::rng;
use crate::sde::PairDataset;

pub use checkpoint::{ModelHeader, MODEL_MAGIC, MODEL_VERSION};

/// Samples drawn per RNG stream when sampling in bulk.
pub const SAMPLE_CHUNK: usize = 1024;

#[derive(Debug, thiserror::Error)]
pub enum FlowError {
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error("degenerate flow: Jacobian block of h is singular at x0={x0:?}, xt={xt:?}")]
    Degenerate { x0: Vec<f64>, xt: Vec<f64> },
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("invalid argument: {0}")]
    Invalid(String),
    #[error("model checkpoint: {0}")]
    Checkpoint(String),
    #[error("sampler: {0}")]
    Sampler(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Per-coordinate affine maps `x ↦ (x − mean) / scale` for `x0` and `xt`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardization {
    pub x0_mean: Vec<f64>,
    pub x0_scale: Vec<f64>,
    pub xt_mean: Vec<f64>,
    pub xt_scale: Vec<f64>,
}

impl Standardization {
    pub fn identity(d: usize) -> Self {
        Self { x0_mean: vec![0.0; d], x0_scale: vec![1.0; d], xt_mean: vec![0.0; d], xt_scale: vec![1.0; d] }
    }

    /// Sample mean and standard deviation of each column. Columns with zero
    /// spread keep scale 1.
    pub fn from_dataset(ds: &PairDataset) -> Self {
        let d = ds.dim();
        let col_stats = |data: &[f64]| {
            let n = (data.len() / d) as f64;
            let mut mean = vec![0.0; d];
            for row in data.chunks(d) {
                for (m, v) in mean.iter_mut().zip(row) {
                    *m += v;
                }
            }
            mean.iter_mut().for_each(|m| *m /= n);
            let mut var = vec![0.0; d];
            for row in data.chunks(d) {
                for ((s, v), m) in var.iter_mut().zip(row).zip(&mean) {
                    *s += (v - m) * (v - m);
                }
            }
            let scale = var
                .iter()
                .map(|s| {
                    let sd = (s / n).sqrt();
                    if sd > 0.0 && sd.is_finite() { sd } else { 1.0 }
                })
                .collect::<Vec<_>>();
            (mean, scale)
        };
        let (x0_mean, x0_scale) = col_stats(ds.x0());
        let (xt_mean, xt_scale) = col_stats(ds.xt());
        Self { x0_mean, x0_scale, xt_mean, xt_scale }
    }

    pub fn dim(&self) -> usize {
        self.x0_mean.len()
    }

    fn validate(&self, d: usize) -> Result<(), FlowError> {
        let lens = [self.x0_mean.len(), self.x0_scale.len(), self.xt_mean.len(), self.xt_scale.len()];
        if lens.iter().any(|&l| l != d) {
            return Err(FlowError::Dimension(format!("standardization lengths {lens:?} for d = {d}")));
        }
        let scales_ok = self.x0_scale.iter().chain(&self.xt_scale).all(|s| s.is_finite() && *s > 0.0);
        let means_ok = self.x0_mean.iter().chain(&self.xt_mean).all(|m| m.is_finite());
        if !(scales_ok && means_ok) {
            return Err(FlowError::Invalid("standardization needs finite means and positive scales".into()));
        }
        Ok(())
    }

    /// `Σ ln scale_t`: the log-Jacobian of the standardization of `xt`.
    pub fn log_scale_t(&self) -> f64 {
        self.xt_scale.iter().map(|s| s.ln()).sum()
    }

    pub fn x0_into(&self, x0: &[f64], out: &mut [f64]) {
        for i in 0..x0.len() {
            out[i] = (x0[i] - self.x0_mean[i]) / self.x0_scale[i];
        }
    }

    pub fn xt_into(&self, xt: &[f64], out: &mut [f64]) {
        for i in 0..xt.len() {
            out[i] = (xt[i] - self.xt_mean[i]) / self.xt_scale[i];
        }
    }

    pub fn xt_back_into(&self, s: &[f64], out: &mut [f64]) {
        for i in 0..s.len() {
            out[i] = s[i] * self.xt_scale[i] + self.xt_mean[i];
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LatentSample {
    pub z0: Vec<f64>,
    pub zt: Vec<f64>,
}

/// `−(d/2) ln 2π − ½‖z‖²`.
pub fn log_std_normal(z: &[f64]) -> f64 {
    -0.5 * z.len() as f64 * (2.0 * PI).ln() - 0.5 * z.iter().map(|v| v * v).sum::<f64>()
}

#[derive(Debug, Clone, PartialEq)]
pub struct PrnfModel {
    d: usize,
    pub h1: MlpNet,
    pub g1: MlpNet,
    pub standardization: Standardization,
}

impl PrnfModel {
    pub fn new(h1: MlpNet, g1: MlpNet, standardization: Standardization) -> Result<Self, FlowError> {
        let d = h1.output_dim();
        for (name, net) in [("h1", &h1), ("g1", &g1)] {
            if net.input_dim() != 2 * d || net.output_dim() != d {
                return Err(FlowError::Dimension(format!(
                    "{name} maps {} -> {}, expected {} -> {d}",
                    net.input_dim(),
                    net.output_dim(),
                    2 * d
                )));
            }
        }
        standardization.validate(d)?;
        Ok(Self { d, h1, g1, standardization })
    }

    /// Freshly initialized model with the given hidden widths for both blocks.
    /// `h1` and `g1` use seeds derived from `seed`.
    pub fn init(d: usize, hidden: &[usize], seed: u64, standardization: Standardization) -> Result<Self, FlowError> {
        if d == 0 {
            return Err(FlowError::Dimension("d must be positive".into()));
        }
        let mut widths = vec![2 * d];
        widths.extend_from_slice(hidden);
        widths.push(d);
        let h1 = MlpNet::init(&widths, rng::derive_seed(seed, 1))?;
        let g1 = MlpNet::init(&widths, rng::derive_seed(seed, 2))?;
        Self::new(h1, g1, standardization)
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    fn check(&self, a: &[f64], b: &[f64]) -> Result<(), FlowError> {
        if a.len() != self.d || b.len() != self.d {
            return Err(FlowError::Dimension(format!("inputs of length {}, {} for d = {}", a.len(), b.len(), self.d)));
        }
        Ok(())
    }

    /// Network input `(x̃0, x̃t)` for `h1`.
    fn h_input(&self, x0: &[f64], xt: &[f64], buf: &mut Vec<f64>) {
        let d = self.d;
        buf.clear();
        buf.resize(2 * d, 0.0);
        self.standardization.x0_into(x0, &mut buf[..d]);
        self.standardization.xt_into(xt, &mut buf[d..]);
    }

    /// Network input `(x̃0, zt)` for `g1`.
    fn g_input(&self, z0: &[f64], zt: &[f64], buf: &mut Vec<f64>) {
        let d = self.d;
        buf.clear();
        buf.resize(2 * d, 0.0);
        self.standardization.x0_into(z0, &mut buf[..d]);
        buf[d..].copy_from_slice(zt);
    }

    pub fn map_forward(&self, x0: &[f64], xt: &[f64]) -> Result<LatentSample, FlowError> {
        self.check(x0, xt)?;
        let mut buf = Vec::new();
        self.h_input(x0, xt, &mut buf);
        Ok(LatentSample { z0: x0.to_vec(), zt: self.h1.eval(&buf) })
    }

    pub fn map_inverse(&self, z0: &[f64], zt: &[f64]) -> Result<(Vec<f64>, Vec<f64>), FlowError> {
        self.check(z0, zt)?;
        let mut buf = Vec::new();
        self.g_input(z0, zt, &mut buf);
        let s = self.g1.eval(&buf);
        let mut xt = vec![0.0; self.d];
        self.standardization.xt_back_into(&s, &mut xt);
        Ok((z0.to_vec(), xt))
    }

    /// Sign and log-magnitude of `det ∂zt/∂xt`, in the caller's coordinates.
    pub fn log_det_h(&self, x0: &[f64], xt: &[f64]) -> Result<(f64, f64), FlowError> {
        self.check(x0, xt)?;
        let mut buf = Vec::new();
        let mut tape = JetTape::default();
        self.h_input(x0, xt, &mut buf);
        self.h1.forward_jet_into(&buf, self.d..2 * self.d, &mut tape);
        let lu = Lu::new(&tape.jacobian, self.d);
        if lu.is_degenerate() {
            return Err(FlowError::Degenerate { x0: x0.to_vec(), xt: xt.to_vec() });
        }
        let (sign, logabs) = lu.sign_log_det();
        Ok((sign, logabs - self.standardization.log_scale_t()))
    }

    /// Conditional log-density `ln p(xt | x0)`; `−∞` where the flow degenerates.
    pub fn log_density(&self, x0: &[f64], xt: &[f64]) -> Result<f64, FlowError> {
        let mut ws = Workspace::default();
        self.check(x0, xt)?;
        Ok(self.log_density_ws(x0, xt, &mut ws))
    }

    fn log_density_ws(&self, x0: &[f64], xt: &[f64], ws: &mut Workspace) -> f64 {
        self.h_input(x0, xt, &mut ws.input);
        self.h1.forward_jet_into(&ws.input, self.d..2 * self.d, &mut ws.tape);
        let lu = Lu::new(&ws.tape.jacobian, self.d);
        if lu.is_degenerate() {
            return f64::NEG_INFINITY;
        }
        log_std_normal(&ws.tape.output) + lu.sign_log_det().1 - self.standardization.log_scale_t()
    }

    /// Log-densities for flat row-major `x0s`, `xts`.
    pub fn log_density_batch(&self, x0s: &[f64], xts: &[f64]) -> Result<Vec<f64>, FlowError> {
        let d = self.d;
        if x0s.len() != xts.len() || !x0s.len().is_multiple_of(d) {
            return Err(FlowError::Dimension("batch buffers must hold whole rows of equal count".into()));
        }
        let n = x0s.len() / d;
        let chunks = n.div_ceil(par::REDUCE_CHUNK);
        let parts = par::map_indexed(chunks, |c| {
            let mut ws = Workspace::default();
            let lo = c * par::REDUCE_CHUNK;
            let hi = (lo + par::REDUCE_CHUNK).min(n);
            (lo..hi)
                .map(|i| self.log_density_ws(&x0s[i * d..(i + 1) * d], &xts[i * d..(i + 1) * d], &mut ws))
                .collect::<Vec<_>>()
        });
        Ok(parts.concat())
    }

    /// `zt = h1(x0, xt)` for every row of flat `x0s`, `xts`.
    pub fn latent_batch(&self, x0s: &[f64], xts: &[f64]) -> Result<Vec<f64>, FlowError> {
        let d = self.d;
        if x0s.len() != xts.len() || !x0s.len().is_multiple_of(d) {
            return Err(FlowError::Dimension("batch buffers must hold whole rows of equal count".into()));
        }
        let n = x0s.len() / d;
        let chunks = n.div_ceil(par::REDUCE_CHUNK);
        let parts = par::map_indexed(chunks, |c| {
            let mut buf = Vec::new();
            let lo = c * par::REDUCE_CHUNK;
            let hi = (lo + par::REDUCE_CHUNK).min(n);
            let mut out = Vec::with_capacity((hi - lo) * d);
            for i in lo..hi {
                self.h_input(&x0s[i * d..(i + 1) * d], &xts[i * d..(i + 1) * d], &mut buf);
                out.extend(self.h1.eval(&buf));
            }
            out
        });
        Ok(parts.concat())
    }

    /// `g` applied to a standardized latent; writes `x̂t` into `out`.
    fn inverse_into(&self, z0: &[f64], zt: &[f64], ws: &mut Workspace, out: &mut [f64]) {
        self.g_input(z0, zt, &mut ws.input);
        let s = self.g1.eval(&ws.input);
        self.standardization.xt_back_into(&s, out);
    }

    /// `n` draws of `x̂t = g1(x0, zt)`, `zt ~ N(0, I)`, row-major. The result
    /// depends only on `seed`, not on the worker count.
    pub fn sample_conditional(&self, x0: &[f64], n: usize, seed: u64) -> Result<Vec<f64>, FlowError> {
        if x0.len() != self.d {
            return Err(FlowError::Dimension(format!("x0 has length {}, expected {}", x0.len(), self.d)));
        }
        if n == 0 {
            return Err(FlowError::Invalid("sample count must be at least 1".into()));
        }
        let d = self.d;
        let chunks = n.div_ceil(SAMPLE_CHUNK);
        let parts = par::map_indexed(chunks, |c| {
            let mut r = rng::stream(seed, c as u64);
            let mut ws = Workspace::default();
            let rows = SAMPLE_CHUNK.min(n - c * SAMPLE_CHUNK);
            let mut out = vec![0.0; rows * d];
            let mut zt = vec![0.0; d];
            for row in out.chunks_mut(d) {
                zt.iter_mut().for_each(|z| *z = StandardNormal.sample(&mut r));
                self.inverse_into(x0, &zt, &mut ws, row);
            }
            out
        });
        Ok(parts.concat())
    }

    /// `n` pairs `(x0, x̂t)` with `x0 ~ p0` and one conditional draw each.
    /// Returns flat `(x0s, xts)`.
    pub fn sample_joint(&self, p0: &InitialDistribution, n: usize, seed: u64) -> Result<(Vec<f64>, Vec<f64>), FlowError> {
        if n == 0 {
            return Err(FlowError::Invalid("sample count must be at least 1".into()));
        }
        if p0.dim() != self.d {
            return Err(FlowError::Dimension(format!("initial distribution has dimension {}, model {}", p0.dim(), self.d)));
        }
        let x0s = p0.sample(n, rng::derive_seed(seed, 0x5eed_0001)).map_err(|e| FlowError::Sampler(e.to_string()))?;
        let xts = self.sample_given(&x0s, rng::derive_seed(seed, 0x5eed_0002))?;
        Ok((x0s, xts))
    }

    /// One conditional draw per row of `x0s`.
    pub fn sample_given(&self, x0s: &[f64], seed: u64) -> Result<Vec<f64>, FlowError> {
        let d = self.d;
        if !x0s.len().is_multiple_of(d) {
            return Err(FlowError::Dimension("x0 buffer must hold whole rows".into()));
        }
        let n = x0s.len() / d;
        let chunks = n.div_ceil(SAMPLE_CHUNK);
        let parts = par::map_indexed(chunks, |c| {
            let mut r = rng::stream(seed, c as u64);
            let mut ws = Workspace::default();
            let lo = c * SAMPLE_CHUNK;
            let hi = (lo + SAMPLE_CHUNK).min(n);
            let mut out = vec![0.0; (hi - lo) * d];
            let mut zt = vec![0.0; d];
            for (i, row) in (lo..hi).zip(out.chunks_mut(d)) {
                zt.iter_mut().for_each(|z| *z = StandardNormal.sample(&mut r));
                self.inverse_into(&x0s[i * d..(i + 1) * d], &zt, &mut ws, row);
            }
            out
        });
        Ok(parts.concat())
    }

    /// Generator samples used for model selection: `z0` uniform over the
    /// training box, `zt ~ N(0, I)`, pushed through `g`.
    pub fn sample_generator(&self, lower: &[f64], upper: &[f64], n: usize, seed: u64) -> Result<(Vec<f64>, Vec<f64>), FlowError> {
        self.check(lower, upper)?;
        if n == 0 {
            return Err(FlowError::Invalid("sample count must be at least 1".into()));
        }
        let d = self.d;
        let chunks = n.div_ceil(SAMPLE_CHUNK);
        let parts = par::map_indexed(chunks, |c| {
            use rand::Rng;
            let mut r = rng::stream(seed, c as u64);
            let mut ws = Workspace::default();
            let rows = SAMPLE_CHUNK.min(n - c * SAMPLE_CHUNK);
            let mut z0s = vec![0.0; rows * d];
            let mut xts = vec![0.0; rows * d];
            let mut zt = vec![0.0; d];
            for (z0, row) in z0s.chunks_mut(d).zip(xts.chunks_mut(d)) {
                for ((z, lo), hi) in z0.iter_mut().zip(lower).zip(upper) {
                    *z = lo + (hi - lo) * r.random::<f64>();
                }
                zt.iter_mut().for_each(|z| *z = StandardNormal.sample(&mut r));
                self.inverse_into(z0, &zt, &mut ws, row);
            }
            (z0s, xts)
        });
        let (a, b): (Vec<_>, Vec<_>) = parts.into_iter().unzip();
        Ok((a.concat(), b.concat()))
    }
}

#[derive(Default)]
struct Workspace {
    input: Vec<f64>,
    tape: JetTape,
}

//! Fully-connected tanh networks with exact input Jacobians and exact
//! reverse-mode parameter gradients of losses built from outputs, Jacobian
//! blocks and log-determinants.
//!
//! The reverse pass is specialized to the fixed computation shape used by the
//! flow: a forward pass that also propagates the tangent matrix `∂a_ℓ/∂x_S`
//! for a chosen block `S` of input columns, followed by a scalar loss of the
//! output `y` and the Jacobian block `J = ∂y/∂x_S`. Backpropagating through
//! the tangent recursion yields the mixed second-order terms exactly.

pub mod checkpoint;
pub mod grad;
pub mod lu;

use std::ops::Range;

use rand::Rng;
use thiserror::Error;

use crate::rng;

pub use grad::{grad_scalar, LossTerm};
pub use lu::Lu;

#[derive(Debug, Error)]
pub enum NnError {
    #[error("invalid network shape: {0}")]
    Shape(String),
    #[error("singular Jacobian (|det| below 1e-300); guard the log-determinant before differentiating")]
    SingularJacobian,
    #[error("checkpoint error: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// A multilayer perceptron `y = W_L a_{L-1} + b_L`, `a_ℓ = tanh(W_ℓ a_{ℓ-1} + b_ℓ)`.
///
/// All parameters live in one flat buffer; layer `ℓ` stores its row-major
/// `n_ℓ × n_{ℓ-1}` weight matrix followed by its bias vector.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpNet {
    widths: Vec<usize>,
    params: Vec<f64>,
    offsets: Vec<usize>,
}

impl MlpNet {
    /// All-zero parameters.
    pub fn zeros(widths: &[usize]) -> Result<Self, NnError> {
        if widths.len() < 2 {
            return Err(NnError::Shape("need at least an input and an output width".into()));
        }
        if let Some(i) = widths.iter().position(|&w| w == 0) {
            return Err(NnError::Shape(format!("layer {i} has zero width")));
        }
        let mut offsets = Vec::with_capacity(widths.len());
        let mut total = 0;
        for l in 1..widths.len() {
            offsets.push(total);
            total += widths[l] * widths[l - 1] + widths[l];
        }
        offsets.push(total);
        Ok(Self { widths: widths.to_vec(), params: vec![0.0; total], offsets })
    }

    /// Glorot-uniform weights `U(±√(6/(fan_in+fan_out)))`, zero biases.
    pub fn init(widths: &[usize], seed: u64) -> Result<Self, NnError> {
        let mut net = Self::zeros(widths)?;
        let mut r = rng::stream(seed, 0);
        for l in 0..net.layers() {
            let (n_in, n_out) = (net.widths[l], net.widths[l + 1]);
            let limit = (6.0 / (n_in + n_out) as f64).sqrt();
            for w in net.weight_mut(l) {
                *w = limit * (2.0 * r.random::<f64>() - 1.0);
            }
        }
        Ok(net)
    }

    pub fn from_params(widths: &[usize], params: Vec<f64>) -> Result<Self, NnError> {
        let mut net = Self::zeros(widths)?;
        if params.len() != net.params.len() {
            return Err(NnError::Shape(format!(
                "expected {} parameters, got {}",
                net.params.len(),
                params.len()
            )));
        }
        if params.iter().any(|v| !v.is_finite()) {
            return Err(NnError::Shape("non-finite parameter".into()));
        }
        net.params = params;
        Ok(net)
    }

    pub fn widths(&self) -> &[usize] {
        &self.widths
    }

    /// Number of affine layers `L`.
    pub fn layers(&self) -> usize {
        self.widths.len() - 1
    }

    pub fn input_dim(&self) -> usize {
        self.widths[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.widths.last().unwrap()
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn num_params(&self) -> usize {
        self.params.len()
    }

    /// Flat index range of layer `l`'s weights (0-based layer index).
    pub fn weight_range(&self, l: usize) -> Range<usize> {
        let start = self.offsets[l];
        start..start + self.widths[l + 1] * self.widths[l]
    }

    pub fn bias_range(&self, l: usize) -> Range<usize> {
        let w = self.weight_range(l);
        w.end..w.end + self.widths[l + 1]
    }

    pub fn weight(&self, l: usize) -> &[f64] {
        &self.params[self.weight_range(l)]
    }

    pub fn weight_mut(&mut self, l: usize) -> &mut [f64] {
        let r = self.weight_range(l);
        &mut self.params[r]
    }

    pub fn bias(&self, l: usize) -> &[f64] {
        &self.params[self.bias_range(l)]
    }

    pub fn bias_mut(&mut self, l: usize) -> &mut [f64] {
        let r = self.bias_range(l);
        &mut self.params[r]
    }

    /// Output and the activations needed for Jacobians and gradients.
    pub fn forward(&self, x: &[f64]) -> (Vec<f64>, ForwardTape) {
        assert_eq!(x.len(), self.input_dim(), "input width mismatch");
        let mut acts = Vec::with_capacity(self.layers());
        acts.push(x.to_vec());
        let mut y = Vec::new();
        for l in 0..self.layers() {
            let u = affine(self.weight(l), self.bias(l), acts.last().unwrap());
            if l + 1 == self.layers() {
                y = u;
            } else {
                acts.push(u.into_iter().map(tanh).collect());
            }
        }
        (y, ForwardTape { activations: acts })
    }

    /// Output only.
    pub fn eval(&self, x: &[f64]) -> Vec<f64> {
        self.forward(x).0
    }

    /// Full `n_L × n_0` input Jacobian `W_L Π diag(1 − a_ℓ²) W_ℓ`.
    pub fn input_jacobian(&self, tape: &ForwardTape) -> Vec<f64> {
        let last = self.layers() - 1;
        let mut jac = self.weight(last).to_vec();
        let mut cols = self.widths[last];
        for l in (0..last).rev() {
            let a = &tape.activations[l + 1];
            let rows = self.output_dim();
            for r in 0..rows {
                for c in 0..cols {
                    jac[r * cols + c] *= 1.0 - a[c] * a[c];
                }
            }
            let n_in = self.widths[l];
            let w = self.weight(l);
            let mut next = vec![0.0; rows * n_in];
            for r in 0..rows {
                for c in 0..cols {
                    let v = jac[r * cols + c];
                    let wrow = &w[c * n_in..(c + 1) * n_in];
                    for (o, wv) in next[r * n_in..(r + 1) * n_in].iter_mut().zip(wrow) {
                        *o += v * wv;
                    }
                }
            }
            jac = next;
            cols = n_in;
        }
        jac
    }

    /// Forward pass that also propagates the tangent with respect to input
    /// columns `cols`, reusing the buffers in `tape`.
    pub fn forward_jet_into(&self, x: &[f64], cols: Range<usize>, tape: &mut JetTape) {
        let n_layers = self.layers();
        let k = cols.len();
        debug_assert_eq!(x.len(), self.input_dim());
        tape.reset(self, cols.clone());
        tape.input.copy_from_slice(x);
        let mut u = std::mem::take(&mut tape.scratch_u);
        let mut ut = std::mem::take(&mut tape.scratch_t);
        for l in 0..n_layers {
            let n_in = self.widths[l];
            let n_out = self.widths[l + 1];
            let w = self.weight(l);
            let b = self.bias(l);
            // u = W a + b ; U̇ = W Ȧ, tangents stored one input column at a time
            u.clear();
            u.resize(n_out, 0.0);
            ut.clear();
            ut.resize(n_out * k, 0.0);
            let prev_a: &[f64] = if l == 0 { &tape.input } else { &tape.acts[l - 1] };
            u.copy_from_slice(b);
            matvec_add(w, n_in, prev_a, &mut u);
            if l == 0 {
                for (c, col) in cols.clone().enumerate() {
                    for (i, t) in ut[c * n_out..(c + 1) * n_out].iter_mut().enumerate() {
                        *t = w[i * n_in + col];
                    }
                }
            } else {
                let pt = &tape.tangents[l - 1];
                for c in 0..k {
                    matvec_add(w, n_in, &pt[c * n_in..(c + 1) * n_in], &mut ut[c * n_out..(c + 1) * n_out]);
                }
            }
            if l + 1 == n_layers {
                tape.output.copy_from_slice(&u);
                for i in 0..n_out {
                    for c in 0..k {
                        tape.jacobian[i * k + c] = ut[c * n_out + i];
                    }
                }
            } else {
                let s = &mut tape.slopes[l];
                tanh_with_slope(&u, &mut tape.acts[l], s);
                let at = &mut tape.tangents[l];
                for c in 0..k {
                    let range = c * n_out..(c + 1) * n_out;
                    for ((o, t), si) in at[range.clone()].iter_mut().zip(&ut[range]).zip(s.iter()) {
                        *o = si * t;
                    }
                }
                tape.pre_tangents[l].copy_from_slice(&ut);
            }
        }
        tape.scratch_u = u;
        tape.scratch_t = ut;
    }

    pub fn forward_jet(&self, x: &[f64], cols: Range<usize>) -> JetTape {
        let mut tape = JetTape::default();
        self.forward_jet_into(x, cols, &mut tape);
        tape
    }

    /// Reverse pass through a [`JetTape`].
    ///
    /// Given `y_bar = ∂ℓ/∂y` and `j_bar = ∂ℓ/∂J` (row-major `n_L × k`), adds
    /// `∂ℓ/∂θ` into `grad` (flat, same layout as the parameters) and writes
    /// `∂ℓ/∂x` into `x_bar`. Only the tape's scratch space is modified.
    pub fn backward_jet(
        &self,
        tape: &mut JetTape,
        y_bar: &[f64],
        j_bar: &[f64],
        grad: &mut [f64],
        x_bar: &mut [f64],
    ) {
        let n_layers = self.layers();
        let k = tape.k;
        let cols = tape.cols.clone();
        let n_last = self.output_dim();
        let mut sc = std::mem::take(&mut tape.back);
        // adjoints of u_ℓ and U̇_ℓ (column-major like the tangents)
        sc.u_bar.clear();
        sc.u_bar.extend_from_slice(y_bar);
        sc.ut_bar.clear();
        sc.ut_bar.resize(n_last * k, 0.0);
        for i in 0..n_last {
            for c in 0..k {
                sc.ut_bar[c * n_last + i] = j_bar[i * k + c];
            }
        }
        for l in (0..n_layers).rev() {
            let n_in = self.widths[l];
            let n_out = self.widths[l + 1];
            let w = self.weight(l);
            let wr = self.weight_range(l);
            let br = self.bias_range(l);
            let prev_a: &[f64] = if l == 0 { &tape.input } else { &tape.acts[l - 1] };
            {
                let gw = &mut grad[wr];
                outer_add(gw, n_in, &sc.u_bar, prev_a);
                if l == 0 {
                    for (c, col) in cols.clone().enumerate() {
                        for (g, t) in gw[col..].iter_mut().step_by(n_in).zip(&sc.ut_bar[c * n_out..(c + 1) * n_out]) {
                            *g += t;
                        }
                    }
                } else {
                    let pt = &tape.tangents[l - 1];
                    for c in 0..k {
                        outer_add(gw, n_in, &sc.ut_bar[c * n_out..(c + 1) * n_out], &pt[c * n_in..(c + 1) * n_in]);
                    }
                }
            }
            for (g, ub) in grad[br].iter_mut().zip(&sc.u_bar) {
                *g += ub;
            }
            // adjoints flowing into the previous activations and tangents
            sc.a_bar.clear();
            sc.a_bar.resize(n_in, 0.0);
            matvec_t_add(w, n_in, &sc.u_bar, &mut sc.a_bar);
            if l == 0 {
                x_bar.copy_from_slice(&sc.a_bar);
                break;
            }
            sc.at_bar.clear();
            sc.at_bar.resize(n_in * k, 0.0);
            for c in 0..k {
                matvec_t_add(w, n_in, &sc.ut_bar[c * n_out..(c + 1) * n_out], &mut sc.at_bar[c * n_in..(c + 1) * n_in]);
            }
            // through a = tanh(u), Ȧ = s ⊙ U̇ with s = 1 − a²: the slope
            // adjoint Σ_c Ǡ ⊙ U̇ feeds back into u through ∂s/∂u = −2 a s
            let h = l - 1;
            let s = &tape.slopes[h];
            let pre_t = &tape.pre_tangents[h];
            for c in 0..k {
                let range = c * n_in..(c + 1) * n_in;
                for (((ab, tb), p), (aj, sj)) in
                    sc.a_bar.iter_mut().zip(&mut sc.at_bar[range.clone()]).zip(&pre_t[range]).zip(tape.acts[h].iter().zip(s))
                {
                    *ab -= 2.0 * aj * *tb * p;
                    *tb *= sj;
                }
            }
            for (ab, sj) in sc.a_bar.iter_mut().zip(s) {
                *ab *= sj;
            }
            std::mem::swap(&mut sc.u_bar, &mut sc.a_bar);
            std::mem::swap(&mut sc.ut_bar, &mut sc.at_bar);
        }
        tape.back = sc;
    }
}

/// Dot product with four independent accumulators.
#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [0.0; 4];
    let (ca, cb) = (a.chunks_exact(4), b.chunks_exact(4));
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        acc[0] += x[0] * y[0];
        acc[1] += x[1] * y[1];
        acc[2] += x[2] * y[2];
        acc[3] += x[3] * y[3];
    }
    let mut s = (acc[0] + acc[2]) + (acc[1] + acc[3]);
    for (x, y) in ra.iter().zip(rb) {
        s += x * y;
    }
    s
}

/// Narrow input widths get kernels with the width fixed at compile time.
macro_rules! narrow_dispatch {
    ($n:expr, $f:ident, $wide:expr, ($($arg:expr),*)) => {
        match $n {
            1 => $f::<1>($($arg),*),
            2 => $f::<2>($($arg),*),
            3 => $f::<3>($($arg),*),
            4 => $f::<4>($($arg),*),
            5 => $f::<5>($($arg),*),
            6 => $f::<6>($($arg),*),
            _ => $wide,
        }
    };
}

/// `out += W x` for row-major `W` with `n_in` columns.
#[inline]
fn matvec_add(w: &[f64], n_in: usize, x: &[f64], out: &mut [f64]) {
    fn fixed<const N: usize>(w: &[f64], x: &[f64], out: &mut [f64]) {
        let x: [f64; N] = x.try_into().expect("input width");
        for (o, wrow) in out.iter_mut().zip(w.chunks_exact(N)) {
            let mut s = 0.0;
            for j in 0..N {
                s += wrow[j] * x[j];
            }
            *o += s;
        }
    }
    narrow_dispatch!(n_in, fixed, {
        for (o, wrow) in out.iter_mut().zip(w.chunks_exact(n_in)) {
            *o += dot(wrow, x);
        }
    }, (w, x, out))
}

/// `out += Wᵀ y`.
#[inline]
fn matvec_t_add(w: &[f64], n_in: usize, y: &[f64], out: &mut [f64]) {
    fn fixed<const N: usize>(w: &[f64], y: &[f64], out: &mut [f64]) {
        let mut acc = [0.0; N];
        for (yi, wrow) in y.iter().zip(w.chunks_exact(N)) {
            for j in 0..N {
                acc[j] += wrow[j] * yi;
            }
        }
        for (o, a) in out.iter_mut().zip(acc) {
            *o += a;
        }
    }
    narrow_dispatch!(n_in, fixed, {
        for (yi, wrow) in y.iter().zip(w.chunks_exact(n_in)) {
            axpy(*yi, wrow, out);
        }
    }, (w, y, out))
}

/// `G += u vᵀ` for row-major `G` with `n_in = v.len()` columns.
#[inline]
fn outer_add(g: &mut [f64], n_in: usize, u: &[f64], v: &[f64]) {
    fn fixed<const N: usize>(g: &mut [f64], u: &[f64], v: &[f64]) {
        let v: [f64; N] = v.try_into().expect("input width");
        for (ui, grow) in u.iter().zip(g.chunks_exact_mut(N)) {
            for j in 0..N {
                grow[j] += ui * v[j];
            }
        }
    }
    narrow_dispatch!(n_in, fixed, {
        for (ui, grow) in u.iter().zip(g.chunks_exact_mut(n_in)) {
            axpy(*ui, v, grow);
        }
    }, (g, u, v))
}

/// `y += alpha · x`.
#[inline]
fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    if alpha == 0.0 {
        return;
    }
    for (o, v) in y.iter_mut().zip(x) {
        *o += alpha * v;
    }
}

/// `exp(y)` for the activations: argument clamped to `[−40, 40]`, Cody–Waite
/// reduction and a degree-13 Taylor polynomial. Branch-free so that slice
/// loops vectorize; relative error about 2 ulp.
#[inline(always)]
fn exp_clamped(y: f64) -> f64 {
    const SHIFT: f64 = 6_755_399_441_055_744.0; // 1.5 · 2^52
    const LN2_HI: f64 = 0.693_147_180_369_123_8;
    const LN2_LO: f64 = 1.908_214_929_270_587_7e-10;
    let y = y.clamp(-40.0, 40.0);
    let t = y * std::f64::consts::LOG2_E + SHIFT;
    let k = t - SHIFT;
    let r = (y - k * LN2_HI) - k * LN2_LO;
    let mut p = 1.0 / 6_227_020_800.0;
    for c in [
        1.0 / 479_001_600.0,
        1.0 / 39_916_800.0,
        1.0 / 3_628_800.0,
        1.0 / 362_880.0,
        1.0 / 40_320.0,
        1.0 / 5_040.0,
        1.0 / 720.0,
        1.0 / 120.0,
        1.0 / 24.0,
        1.0 / 6.0,
        0.5,
        1.0,
        1.0,
    ] {
        p = p * r + c;
    }
    // the low mantissa bits of `t` hold k; move k + 1023 into the exponent
    let scale = f64::from_bits(t.to_bits().wrapping_add(1023) << 52);
    p * scale
}

/// `tanh(u) = 1 − 2/(e^{2u} + 1)`; absolute error within a few ulps of 1.
#[inline]
pub fn tanh(u: f64) -> f64 {
    1.0 - 2.0 / (exp_clamped(2.0 * u) + 1.0)
}

/// Activations `a = tanh(u)` and slopes `s = 1 − a²`.
fn tanh_with_slope(u: &[f64], a: &mut [f64], s: &mut [f64]) {
    for ((ui, ai), si) in u.iter().zip(a.iter_mut()).zip(s.iter_mut()) {
        let v = tanh(*ui);
        *ai = v;
        *si = 1.0 - v * v;
    }
}

fn affine(w: &[f64], b: &[f64], x: &[f64]) -> Vec<f64> {
    let mut out = b.to_vec();
    matvec_add(w, x.len(), x, &mut out);
    out
}

/// Activations `a_0 = x, a_1, …, a_{L-1}` of a forward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardTape {
    pub activations: Vec<Vec<f64>>,
}

impl ForwardTape {
    pub fn layers(&self) -> usize {
        self.activations.len()
    }
}

/// Forward pass state with tangents for a block of input columns.
#[derive(Debug, Clone, Default)]
pub struct JetTape {
    pub cols: Range<usize>,
    pub k: usize,
    pub input: Vec<f64>,
    /// hidden activations `a_1..a_{L-1}`
    pub acts: Vec<Vec<f64>>,
    /// `1 − a_ℓ²`
    pub slopes: Vec<Vec<f64>>,
    /// `Ȧ_ℓ = diag(s_ℓ) U̇_ℓ`, row-major `n_ℓ × k`
    pub tangents: Vec<Vec<f64>>,
    /// `U̇_ℓ`, row-major `n_ℓ × k`
    pub pre_tangents: Vec<Vec<f64>>,
    pub output: Vec<f64>,
    /// `∂y/∂x_cols`, row-major `n_L × k`
    pub jacobian: Vec<f64>,
    scratch_u: Vec<f64>,
    scratch_t: Vec<f64>,
    back: BackScratch,
}

#[derive(Debug, Clone, Default)]
struct BackScratch {
    u_bar: Vec<f64>,
    ut_bar: Vec<f64>,
    a_bar: Vec<f64>,
    at_bar: Vec<f64>,
}

impl JetTape {
    fn reset(&mut self, net: &MlpNet, cols: Range<usize>) {
        let k = cols.len();
        let hidden = net.layers() - 1;
        let same = self.k == k && self.acts.len() == hidden && self.input.len() == net.input_dim()
            && self.output.len() == net.output_dim()
            && self.acts.iter().zip(&net.widths[1..]).all(|(a, &w)| a.len() == w);
        self.cols = cols;
        if same {
            return;
        }
        self.k = k;
        self.input = vec![0.0; net.input_dim()];
        self.acts = net.widths[1..=hidden].iter().map(|&w| vec![0.0; w]).collect();
        self.slopes = self.acts.clone();
        self.tangents = net.widths[1..=hidden].iter().map(|&w| vec![0.0; w * k]).collect();
        self.pre_tangents = self.tangents.clone();
        self.output = vec![0.0; net.output_dim()];
        self.jacobian = vec![0.0; net.output_dim() * k];
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fast_tanh_tracks_libm() {
        for i in -40_000..=40_000 {
            let u = i as f64 * 1e-3;
            assert!((tanh(u) - u.tanh()).abs() < 4e-16, "{u}");
        }
        assert_eq!(tanh(1e3), 1.0);
        assert_eq!(tanh(-1e3), -1.0);
        assert!(tanh(f64::NAN).is_nan());
    }

    /// Straight-line 2-16-2 evaluation written independently of `forward`.
    fn reference_forward(net: &MlpNet, x: &[f64]) -> Vec<f64> {
        let w1 = net.weight(0);
        let b1 = net.bias(0);
        let w2 = net.weight(1);
        let b2 = net.bias(1);
        let mut h = [0.0f64; 16];
        for i in 0..16 {
            h[i] = (w1[2 * i] * x[0] + w1[2 * i + 1] * x[1] + b1[i]).tanh();
        }
        (0..2)
            .map(|o| b2[o] + (0..16).map(|j| w2[o * 16 + j] * h[j]).sum::<f64>())
            .collect()
    }

    fn central_jacobian(net: &MlpNet, x: &[f64], h: f64) -> Vec<f64> {
        let (n_out, n_in) = (net.output_dim(), net.input_dim());
        let mut j = vec![0.0; n_out * n_in];
        for c in 0..n_in {
            let mut xp = x.to_vec();
            let mut xm = x.to_vec();
            xp[c] += h;
            xm[c] -= h;
            let (yp, ym) = (net.eval(&xp), net.eval(&xm));
            for r in 0..n_out {
                j[r * n_in + c] = (yp[r] - ym[r]) / (2.0 * h);
            }
        }
        j
    }

    #[test]
    fn init_is_deterministic_and_bounded() {
        let a = MlpNet::init(&[2, 4, 1], 3).unwrap();
        let b = MlpNet::init(&[2, 4, 1], 3).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, MlpNet::init(&[2, 4, 1], 4).unwrap());
        for l in 0..a.layers() {
            assert!(a.bias(l).iter().all(|&v| v == 0.0));
            let limit = (6.0 / (a.widths()[l] + a.widths()[l + 1]) as f64).sqrt();
            assert!(a.weight(l).iter().all(|w| w.abs() <= limit));
        }
        assert!(MlpNet::init(&[2, 0, 1], 1).is_err());
        assert!(MlpNet::init(&[2], 1).is_err());
    }

    #[test]
    fn zero_parameters_give_zero_output() {
        let net = MlpNet::zeros(&[3, 5, 2]).unwrap();
        assert_eq!(net.eval(&[1.0, -2.0, 0.5]), vec![0.0, 0.0]);
    }

    #[test]
    fn linear_net_is_affine_with_jacobian_w() {
        let net = MlpNet::from_params(&[2, 2], vec![1.0, 2.0, 3.0, 4.0, 0.5, -0.5]).unwrap();
        let (y, tape) = net.forward(&[1.0, -1.0]);
        assert_eq!(y, vec![1.0 - 2.0 + 0.5, 3.0 - 4.0 - 0.5]);
        assert_eq!(net.input_jacobian(&tape), vec![1.0, 2.0, 3.0, 4.0]);
        assert_eq!(tape.layers(), 1);
    }

    #[test]
    fn forward_matches_straight_line_reference() {
        let net = MlpNet::init(&[2, 16, 2], 11).unwrap();
        let mut net = net;
        for (i, b) in net.bias_mut(0).iter_mut().enumerate() {
            *b = 0.1 * i as f64 - 0.7;
        }
        for x in [[0.3, -1.2], [2.0, 0.5], [-0.1, 0.0]] {
            let got = net.eval(&x);
            let want = reference_forward(&net, &x);
            for (g, w) in got.iter().zip(&want) {
                assert!((g - w).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn jacobian_matches_finite_differences() {
        let net = MlpNet::init(&[3, 8, 3], 5).unwrap();
        let x = [0.4, -0.3, 1.1];
        let (_, tape) = net.forward(&x);
        let j = net.input_jacobian(&tape);
        let fd = central_jacobian(&net, &x, 1e-5);
        for (a, b) in j.iter().zip(&fd) {
            assert!((a - b).abs() <= 1e-6 * b.abs().max(1e-3), "{a} vs {b}");
        }
        let deep = MlpNet::init(&[3, 6, 5, 2], 8).unwrap();
        let (_, tape) = deep.forward(&x);
        let j = deep.input_jacobian(&tape);
        let fd = central_jacobian(&deep, &x, 1e-5);
        for (a, b) in j.iter().zip(&fd) {
            assert!((a - b).abs() <= 1e-6 * b.abs().max(1e-3), "{a} vs {b}");
        }
    }

    #[test]
    fn zero_last_layer_gives_zero_jacobian() {
        let mut net = MlpNet::init(&[2, 4, 2], 1).unwrap();
        net.weight_mut(1).fill(0.0);
        let (_, tape) = net.forward(&[0.2, 0.3]);
        assert!(net.input_jacobian(&tape).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn jet_jacobian_is_a_column_block_of_the_full_jacobian() {
        let net = MlpNet::init(&[4, 7, 6, 2], 2).unwrap();
        let x = [0.1, 0.2, -0.5, 0.9];
        let (y, tape) = net.forward(&x);
        let full = net.input_jacobian(&tape);
        let jet = net.forward_jet(&x, 2..4);
        assert_eq!(jet.output, y);
        for r in 0..2 {
            for c in 0..2 {
                assert!((jet.jacobian[r * 2 + c] - full[r * 4 + 2 + c]).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn jacobian_rows_are_output_gradients() {
        // row i of the Jacobian equals ∂y_i/∂x from the reverse pass
        let net = MlpNet::init(&[3, 9, 2], 21).unwrap();
        let x = [0.3, 0.1, -0.4];
        let (_, tape) = net.forward(&x);
        let j = net.input_jacobian(&tape);
        let mut jet = net.forward_jet(&x, 0..3);
        for i in 0..2 {
            let mut yb = vec![0.0; 2];
            yb[i] = 1.0;
            let mut g = vec![0.0; net.num_params()];
            let mut xb = vec![0.0; 3];
            net.backward_jet(&mut jet, &yb, &[0.0; 6], &mut g, &mut xb);
            for c in 0..3 {
                assert!((xb[c] - j[i * 3 + c]).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn forward_is_referentially_transparent() {
        let net = MlpNet::init(&[2, 5, 1], 9).unwrap();
        let a = net.forward(&[0.5, 0.25]);
        let b = net.forward(&[0.5, 0.25]);
        assert_eq!(a, b);
    }
}

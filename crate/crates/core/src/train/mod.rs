//! Losses, optimizer and training loop.
//!
//! Per pair, with `z = h1(x̃0, x̃t)`, `x̂ = g1(x̃0, z)` on standardized
//! coordinates and `Jh = ∂z/∂x̃t`, `Jg = ∂x̂/∂z`:
//!
//! ```text
//! ℓ1 = ½‖z‖² + (d/2) ln 2π − ln|det Jh| + Σ ln s_t
//! ℓ2 = ‖x̃t − x̂‖² + |det Jg · det Jh − 1|
//! ```
//!
//! `ℓ1` is exactly `−ln p(xt | x0)` in the caller's coordinates. The
//! reconstruction part of `ℓ2` is measured in standardized coordinates; the
//! determinant product does not depend on the scaling.

use std::f64::consts::PI;
use std::time::Instant;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::flow::PrnfModel;
use crate::nn::lu::Lu;
use crate::nn::JetTape;
use crate::par;
use crate::rng;
use crate::sde::PairDataset;

/// `ln|det|` substituted for degenerate rows during training.
pub const DEGENERATE_LOG_DET: f64 = -700.0;
/// Largest tolerated fraction of degenerate rows in a batch.
pub const MAX_DEGENERATE_FRACTION: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub lambda: f64,
}

impl LossWeights {
    pub fn new(lambda: f64) -> Result<Self, TrainError> {
        if !(lambda >= 0.0 && lambda.is_finite()) {
            return Err(TrainError::Config(format!("lambda must be finite and nonnegative, got {lambda}")));
        }
        Ok(Self { lambda })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    /// Rows per mini-batch; 0 means the whole dataset.
    pub batch_size: usize,
    pub learning_rate: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 20_000,
            batch_size: 1000,
            learning_rate: 1e-3,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        let unit = |b: f64| b > 0.0 && b < 1.0;
        if !(unit(self.adam_beta1) && unit(self.adam_beta2)) {
            return Err(TrainError::Config("Adam betas must lie in (0, 1)".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(TrainError::Config("learning rate must be positive".into()));
        }
        if !(self.adam_eps >= 0.0) {
            return Err(TrainError::Config("Adam eps must be nonnegative".into()));
        }
        Ok(())
    }
}

#[derive(Debug, thiserror::Error)]
pub enum TrainError {
    #[error("invalid training configuration: {0}")]
    Config(String),
    #[error("dataset dimension {dataset} does not match model dimension {model}")]
    Dimension { dataset: usize, model: usize },
    #[error("non-finite loss at epoch {epoch}; last finite parameters kept")]
    NonFinite { epoch: usize, last_good: Box<PrnfModel>, report: TrainReport },
    #[error("{count} of {rows} rows degenerate at epoch {epoch}; last good parameters kept")]
    Degenerate { epoch: usize, count: usize, rows: usize, last_good: Box<PrnfModel>, report: TrainReport },
}

/// Loss components averaged over a set of rows.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub loss: f64,
    pub l1: f64,
    pub l2: f64,
    pub degenerate: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub loss: f64,
    pub l1: f64,
    pub l2: f64,
    pub wallclock_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    /// Full-dataset losses before the first update.
    pub initial: LossBreakdown,
    /// One record per completed epoch.
    pub history: Vec<EpochRecord>,
    pub wallclock_s: f64,
}

impl TrainReport {
    pub fn last(&self) -> Option<&EpochRecord> {
        self.history.last()
    }

    /// Equal losses at every epoch, ignoring timings.
    pub fn same_trajectory(&self, other: &TrainReport) -> bool {
        self.initial == other.initial
            && self.history.len() == other.history.len()
            && self.history.iter().zip(&other.history).all(|(a, b)| {
                a.epoch == b.epoch
                    && a.loss.to_bits() == b.loss.to_bits()
                    && a.l1.to_bits() == b.l1.to_bits()
                    && a.l2.to_bits() == b.l2.to_bits()
            })
    }

    /// CSV with header `epoch,L,L1,L2,wallclock_s`.
    pub fn write_csv<W: std::io::Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "epoch,L,L1,L2,wallclock_s")?;
        for r in &self.history {
            writeln!(w, "{},{:?},{:?},{:?},{:.6}", r.epoch, r.loss, r.l1, r.l2, r.wallclock_s)?;
        }
        Ok(())
    }
}

/// Scratch buffers for one row.
#[derive(Default)]
struct RowWork {
    hin: Vec<f64>,
    gin: Vec<f64>,
    target: Vec<f64>,
    th: JetTape,
    tg: JetTape,
    yg_bar: Vec<f64>,
    jg_bar: Vec<f64>,
    yh_bar: Vec<f64>,
    jh_bar: Vec<f64>,
    xg_bar: Vec<f64>,
    xh_bar: Vec<f64>,
}

struct RowLoss {
    l1: f64,
    l2: f64,
    degenerate: bool,
}

/// Loss of one pair; when `grads` is given, adds `weight × ∂ℓ/∂θ` for both nets.
fn row_loss(
    model: &PrnfModel,
    x0: &[f64],
    xt: &[f64],
    lambda: f64,
    ws: &mut RowWork,
    grads: Option<(&mut [f64], &mut [f64], f64)>,
) -> RowLoss {
    let d = model.dim();
    let st = &model.standardization;
    ws.hin.resize(2 * d, 0.0);
    st.x0_into(x0, &mut ws.hin[..d]);
    st.xt_into(xt, &mut ws.hin[d..]);
    model.h1.forward_jet_into(&ws.hin, d..2 * d, &mut ws.th);
    let lu_h = Lu::new(&ws.th.jacobian, d);
    let deg_h = lu_h.is_degenerate();
    let log_det_h = if deg_h { DEGENERATE_LOG_DET } else { lu_h.sign_log_det().1 };
    let z = &ws.th.output;
    let l1 = 0.5 * z.iter().map(|v| v * v).sum::<f64>() + 0.5 * d as f64 * (2.0 * PI).ln() - log_det_h
        + st.log_scale_t();

    ws.gin.resize(2 * d, 0.0);
    ws.gin[..d].copy_from_slice(&ws.hin[..d]);
    ws.gin[d..].copy_from_slice(z);
    model.g1.forward_jet_into(&ws.gin, d..2 * d, &mut ws.tg);
    let lu_g = Lu::new(&ws.tg.jacobian, d);
    let deg_g = lu_g.is_degenerate();
    ws.target.clear();
    ws.target.extend_from_slice(&ws.hin[d..]);
    let recon: f64 = ws.target.iter().zip(&ws.tg.output).map(|(a, b)| (a - b) * (a - b)).sum();
    let det_h = if deg_h { 0.0 } else { lu_h.det() };
    let det_g = if deg_g { 0.0 } else { lu_g.det() };
    let r = det_g * det_h - 1.0;
    let l2 = recon + r.abs();
    let out = RowLoss { l1, l2, degenerate: deg_h || deg_g };

    let Some((grad_h, grad_g, weight)) = grads else {
        return out;
    };
    if out.degenerate || !(l1.is_finite() && l2.is_finite()) {
        return out;
    }
    let sg = if r > 0.0 {
        1.0
    } else if r < 0.0 {
        -1.0
    } else {
        0.0
    };
    // g adjoints
    ws.yg_bar.clear();
    ws.yg_bar.extend(ws.target.iter().zip(&ws.tg.output).map(|(t, y)| -2.0 * lambda * weight * (t - y)));
    let inv_g = lu_g.inverse_transpose();
    let cg = weight * lambda * sg * det_h * det_g;
    ws.jg_bar.clear();
    ws.jg_bar.extend(inv_g.iter().map(|v| cg * v));
    ws.xg_bar.resize(2 * d, 0.0);
    model.g1.backward_jet(&mut ws.tg, &ws.yg_bar, &ws.jg_bar, grad_g, &mut ws.xg_bar);
    // h adjoints: from ℓ1, and from g's input zt
    ws.yh_bar.clear();
    ws.yh_bar.extend(ws.th.output.iter().zip(&ws.xg_bar[d..]).map(|(z, xb)| weight * z + xb));
    let inv_h = lu_h.inverse_transpose();
    let ch = weight * (lambda * sg * det_g * det_h - 1.0);
    ws.jh_bar.clear();
    ws.jh_bar.extend(inv_h.iter().map(|v| ch * v));
    ws.xh_bar.resize(2 * d, 0.0);
    model.h1.backward_jet(&mut ws.th, &ws.yh_bar, &ws.jh_bar, grad_h, &mut ws.xh_bar);
    out
}

struct Accum {
    l1: f64,
    l2: f64,
    degenerate: usize,
    grad_h: Vec<f64>,
    grad_g: Vec<f64>,
}

/// Mean losses over `rows` of `ds`, and their gradients when `with_grad`.
fn batch_eval(
    model: &PrnfModel,
    ds: &PairDataset,
    rows: &[usize],
    lambda: f64,
    with_grad: bool,
) -> (LossBreakdown, Vec<f64>, Vec<f64>) {
    let n = rows.len();
    let (nh, ng) = if with_grad { (model.h1.num_params(), model.g1.num_params()) } else { (0, 0) };
    let weight = 1.0 / n as f64;
    let acc = par::chunked_reduce(
        n,
        |range| {
            let mut ws = RowWork::default();
            let mut a = Accum { l1: 0.0, l2: 0.0, degenerate: 0, grad_h: vec![0.0; nh], grad_g: vec![0.0; ng] };
            for &i in &rows[range] {
                let (x0, xt) = ds.row(i);
                let grads = if with_grad { Some((&mut a.grad_h[..], &mut a.grad_g[..], weight)) } else { None };
                let r = row_loss(model, x0, xt, lambda, &mut ws, grads);
                a.l1 += r.l1;
                a.l2 += r.l2;
                a.degenerate += r.degenerate as usize;
            }
            a
        },
        |mut a, b| {
            a.l1 += b.l1;
            a.l2 += b.l2;
            a.degenerate += b.degenerate;
            a.grad_h.iter_mut().zip(&b.grad_h).for_each(|(x, y)| *x += y);
            a.grad_g.iter_mut().zip(&b.grad_g).for_each(|(x, y)| *x += y);
            a
        },
    )
    .expect("batch is nonempty");
    let l1 = acc.l1 * weight;
    let l2 = acc.l2 * weight;
    (LossBreakdown { loss: l1 + lambda * l2, l1, l2, degenerate: acc.degenerate }, acc.grad_h, acc.grad_g)
}

fn check_dim(model: &PrnfModel, ds: &PairDataset) -> Result<(), TrainError> {
    if model.dim() != ds.dim() {
        return Err(TrainError::Dimension { dataset: ds.dim(), model: model.dim() });
    }
    Ok(())
}

/// `ℒ1`: batch mean of `−ln p(xt | x0)`.
pub fn loss_l1(model: &PrnfModel, ds: &PairDataset) -> Result<f64, TrainError> {
    Ok(losses(model, ds, LossWeights { lambda: 0.0 })?.l1)
}

/// `ℒ2`: batch mean of reconstruction error plus determinant deviation.
pub fn loss_l2(model: &PrnfModel, ds: &PairDataset) -> Result<f64, TrainError> {
    Ok(losses(model, ds, LossWeights { lambda: 0.0 })?.l2)
}

/// All loss components over the whole dataset.
pub fn losses(model: &PrnfModel, ds: &PairDataset, w: LossWeights) -> Result<LossBreakdown, TrainError> {
    check_dim(model, ds)?;
    let rows: Vec<usize> = (0..ds.len()).collect();
    Ok(batch_eval(model, ds, &rows, w.lambda, false).0)
}

/// Loss over `rows` and its gradient with respect to `(θ_h, θ_g)`.
pub fn loss_and_grad(
    model: &PrnfModel,
    ds: &PairDataset,
    rows: &[usize],
    w: LossWeights,
) -> Result<(LossBreakdown, Vec<f64>, Vec<f64>), TrainError> {
    check_dim(model, ds)?;
    if rows.is_empty() {
        return Err(TrainError::Config("empty batch".into()));
    }
    Ok(batch_eval(model, ds, rows, w.lambda, true))
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub t: u64,
}

impl AdamState {
    pub fn new(n: usize) -> Self {
        Self { m: vec![0.0; n], v: vec![0.0; n], t: 0 }
    }
}

/// One bias-corrected Adam update in place.
pub fn adam_step(params: &mut [f64], grads: &[f64], state: &mut AdamState, cfg: &TrainConfig) {
    assert_eq!(params.len(), grads.len());
    assert_eq!(params.len(), state.m.len());
    state.t += 1;
    let (b1, b2) = (cfg.adam_beta1, cfg.adam_beta2);
    let c1 = 1.0 - b1.powi(state.t as i32);
    let c2 = 1.0 - b2.powi(state.t as i32);
    for i in 0..params.len() {
        let g = grads[i];
        state.m[i] = b1 * state.m[i] + (1.0 - b1) * g;
        state.v[i] = b2 * state.v[i] + (1.0 - b2) * g * g;
        let mh = state.m[i] / c1;
        let vh = state.v[i] / c2;
        params[i] -= cfg.learning_rate * mh / (vh.sqrt() + cfg.adam_eps);
    }
}

pub fn train(
    model: &PrnfModel,
    ds: &PairDataset,
    w: LossWeights,
    cfg: &TrainConfig,
) -> Result<(PrnfModel, TrainReport), TrainError> {
    train_with_observer(model, ds, w, cfg, |_, _| {})
}

/// As [`train`], calling `observer` after every epoch with the epoch record
/// and the current parameters.
pub fn train_with_observer<F>(
    model: &PrnfModel,
    ds: &PairDataset,
    w: LossWeights,
    cfg: &TrainConfig,
    mut observer: F,
) -> Result<(PrnfModel, TrainReport), TrainError>
where
    F: FnMut(&EpochRecord, &PrnfModel),
{
    cfg.validate()?;
    LossWeights::new(w.lambda)?;
    check_dim(model, ds)?;
    let start = Instant::now();
    let n = ds.len();
    let all: Vec<usize> = (0..n).collect();
    let initial = batch_eval(model, ds, &all, w.lambda, false).0;
    let mut report = TrainReport { initial, history: Vec::with_capacity(cfg.epochs), wallclock_s: 0.0 };
    let mut current = model.clone();
    let mut adam_h = AdamState::new(model.h1.num_params());
    let mut adam_g = AdamState::new(model.g1.num_params());
    let batch = if cfg.batch_size == 0 { n } else { cfg.batch_size.min(n) };
    let mut order = all.clone();
    for epoch in 1..=cfg.epochs {
        if batch < n {
            order.copy_from_slice(&all);
            order.shuffle(&mut rng::stream(cfg.seed, epoch as u64));
        }
        for rows in order.chunks(batch) {
            let (lb, gh, gg) = batch_eval(&current, ds, rows, w.lambda, true);
            let finite = lb.loss.is_finite() && gh.iter().chain(&gg).all(|g| g.is_finite());
            if lb.degenerate as f64 > MAX_DEGENERATE_FRACTION * rows.len() as f64 {
                report.wallclock_s = start.elapsed().as_secs_f64();
                log::warn!("training aborted: {} degenerate rows in a batch of {}", lb.degenerate, rows.len());
                return Err(TrainError::Degenerate {
                    epoch,
                    count: lb.degenerate,
                    rows: rows.len(),
                    last_good: Box::new(current),
                    report,
                });
            }
            if !finite {
                report.wallclock_s = start.elapsed().as_secs_f64();
                return Err(TrainError::NonFinite { epoch, last_good: Box::new(current), report });
            }
            let snapshot = (current.h1.params().to_vec(), current.g1.params().to_vec());
            adam_step(current.h1.params_mut(), &gh, &mut adam_h, cfg);
            adam_step(current.g1.params_mut(), &gg, &mut adam_g, cfg);
            if !current.h1.params().iter().chain(current.g1.params()).all(|p| p.is_finite()) {
                current.h1.params_mut().copy_from_slice(&snapshot.0);
                current.g1.params_mut().copy_from_slice(&snapshot.1);
                report.wallclock_s = start.elapsed().as_secs_f64();
                return Err(TrainError::NonFinite { epoch, last_good: Box::new(current), report });
            }
        }
        let full = batch_eval(&current, ds, &all, w.lambda, false).0;
        let rec = EpochRecord {
            epoch,
            loss: full.loss,
            l1: full.l1,
            l2: full.l2,
            wallclock_s: start.elapsed().as_secs_f64(),
        };
        if !full.loss.is_finite() {
            report.wallclock_s = rec.wallclock_s;
            return Err(TrainError::NonFinite { epoch, last_good: Box::new(current), report });
        }
        observer(&rec, &current);
        if epoch % 100 == 0 || epoch == cfg.epochs {
            log::debug!("epoch {epoch}: L={:.6} L1={:.6} L2={:.6}", rec.loss, rec.l1, rec.l2);
        }
        report.history.push(rec);
    }
    report.wallclock_s = start.elapsed().as_secs_f64();
    Ok((current, report))
}

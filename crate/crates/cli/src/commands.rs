//! One function per subcommand. Each reads its predecessors' files from the
//! output directory and writes its own.

use std::f64::consts::PI;
use std::fs::File;
use std::io::{BufReader, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use prnf::eval::{
    self, export::write_grid_csv, export::Histogram, kl_between, uniform_grid, InitialDistribution, QoiSpec, Region,
    Transform, TEST_1D,
};
use prnf::flow::{ModelHeader, PrnfModel, Standardization};
use prnf::rng::derive_seed;
use prnf::sde::{generate_pairs, IntegratorConfig, PairDataset, SdeProblem};
use prnf::train::{losses, train_with_observer, LossWeights, TrainError};
use prnf::tune::{grid_search, kde_fit, Bandwidth, GridOptions, TuneError};
use prnf::stats;
use serde_json::json;

use crate::config::{maxwellian_for, QoiKind, RunConfig};
use crate::output::{self, Provenance};
use crate::Failure;

// Salts of the per-stage seeds.
const SIMULATE: u64 = 1;
const INIT: u64 = 2;
const TRAIN: u64 = 3;
const TUNE: u64 = 4;
const SAMPLE: u64 = 5;
const EVALUATE: u64 = 6;
const QOI: u64 = 7;
const MONTE_CARLO: u64 = 8;

pub struct Context {
    pub cfg: RunConfig,
    pub problem: SdeProblem,
    pub prov: Provenance,
}

impl Context {
    pub fn new(cfg: RunConfig) -> Result<Self, Failure> {
        let problem = cfg.problem()?;
        let prov = Provenance::new(cfg.hash());
        Ok(Self { cfg, problem, prov })
    }

    fn seed(&self, stage: u64) -> u64 {
        derive_seed(self.cfg.seed, stage)
    }

    fn integrator(&self, stage: u64) -> IntegratorConfig {
        IntegratorConfig::new(self.cfg.problem.dt.0, self.seed(stage))
    }

    fn out(&self, name: &str) -> PathBuf {
        self.cfg.out.join(name)
    }

    fn csv(&self, name: &str, body: impl FnOnce(&mut dyn Write) -> std::io::Result<()>) -> Result<PathBuf, Failure> {
        let path = self.out(name);
        output::write_csv(&path, &self.prov, |w| body(w))?;
        Ok(path)
    }

    fn load_dataset(&self) -> Result<PairDataset, Failure> {
        let path = self.cfg.dataset_path();
        let file = File::open(&path).map_err(|e| Failure::from_read(&path, e))?;
        let ds = PairDataset::read_binary(BufReader::new(file))
            .map_err(|e| Failure::schema(format!("{}: {e}", path.display())))?;
        if ds.dim() != self.problem.d {
            return Err(Failure::schema(format!(
                "{} holds d = {} pairs but problem {} has d = {}",
                path.display(),
                ds.dim(),
                self.problem.name,
                self.problem.d
            )));
        }
        if ds.t_final() != self.problem.horizon {
            return Err(Failure::schema(format!(
                "{} was simulated to T = {} but the configuration has T = {}",
                path.display(),
                ds.t_final(),
                self.problem.horizon
            )));
        }
        Ok(ds)
    }

    fn load_model(&self) -> Result<(PrnfModel, ModelHeader), Failure> {
        let path = self.cfg.model_path();
        let file = File::open(&path).map_err(|e| Failure::from_read(&path, e))?;
        let (model, header) = PrnfModel::read_container(BufReader::new(file)).map_err(|e| match e {
            prnf::flow::FlowError::Io(io) => Failure::io(&path, io),
            other => Failure::schema(format!("{}: {other}", path.display())),
        })?;
        if header.d != self.problem.d || header.problem.as_deref().is_some_and(|p| p != self.problem.name) {
            return Err(Failure::schema(format!(
                "{} is a d = {} model for {:?}; the configuration is d = {} problem {}",
                path.display(),
                header.d,
                header.problem.as_deref().unwrap_or("unknown"),
                self.problem.d,
                self.problem.name
            )));
        }
        Ok((model, header))
    }

    fn save_model(&self, model: &PrnfModel, lambda: f64, train_config: serde_json::Value) -> Result<PathBuf, Failure> {
        let header = ModelHeader {
            problem: Some(self.problem.name.clone()),
            domain_lower: self.problem.domain.lower.clone(),
            domain_upper: self.problem.domain.upper.clone(),
            t_final: Some(self.problem.horizon),
            lambda: Some(lambda),
            train_config,
            provenance: json!(self.prov),
            ..ModelHeader::for_model(model)
        };
        let path = self.cfg.model_path();
        let mut w = output::create(&path)?;
        model
            .write_container(&header, &mut w)
            .and_then(|_| w.flush().map_err(Into::into))
            .map_err(|e| Failure::io(&path, std::io::Error::other(e.to_string())))?;
        Ok(path)
    }
}

pub fn simulate(ctx: &Context) -> Result<(), Failure> {
    let n = ctx.cfg.data.n;
    if n == 0 {
        return Err(Failure::usage("data.n must be at least 1"));
    }
    let icfg = ctx.integrator(SIMULATE);
    icfg.validate(&ctx.problem).map_err(|e| Failure::usage(e.to_string()))?;
    let start = Instant::now();
    let ds = generate_pairs(&ctx.problem, n, &icfg).map_err(|e| Failure::run(e.to_string()))?;
    let secs = start.elapsed().as_secs_f64();
    let path = ctx.cfg.dataset_path();
    let mut w = output::create(&path)?;
    ds.write_binary(&mut w).map_err(|e| Failure::io(&path, e))?;
    output::write_sidecar(
        &path,
        &json!({
            "provenance": ctx.prov,
            "kind": "pair_dataset",
            "problem": ctx.problem.name,
            "d": ds.dim(),
            "n": ds.len(),
            "t_final": ds.t_final(),
            "dt": icfg.dt,
            "seed": ctx.cfg.seed,
        }),
    )?;
    if ctx.cfg.data.csv {
        let csv = path.with_extension("csv");
        output::write_csv(&csv, &ctx.prov, |w| ds.write_csv(w))?;
    }
    output::record_timing(&ctx.cfg.out, "simulate", secs)?;
    println!("simulate: {n} pairs of {} to T = {} in {secs:.3} s -> {}", ctx.problem.name, ctx.problem.horizon, path.display());
    Ok(())
}

/// KL from the flow's marginal to the exact marginal for each 1D test law.
/// Returns `(law, kl, grid, exact, flow)`.
fn sqrt1d_kls(
    model: &PrnfModel,
    problem: &SdeProblem,
    samples: usize,
    grid_points: usize,
    seed: u64,
) -> Result<Vec<(&'static str, f64, Vec<f64>, Vec<f64>, Vec<f64>)>, Failure> {
    let t = problem.horizon;
    let grid = uniform_grid(0.0, 2.0 * problem.domain.upper[0], grid_points);
    TEST_1D
        .iter()
        .enumerate()
        .map(|(i, &law)| {
            let p0 = InitialDistribution::test_1d(law).map_err(|e| Failure::usage(e.to_string()))?;
            let (_, xt) = model.sample_joint(&p0, samples, derive_seed(seed, i as u64)).map_err(|e| Failure::run(e.to_string()))?;
            let kde = kde_fit(&xt, 1, &Bandwidth::Scott, None).map_err(|e| Failure::run(e.to_string()))?;
            let exact: Vec<f64> = grid
                .iter()
                .map(|&x| eval::sqrt1d_marginal_density(&p0, x, t))
                .collect::<Result<_, _>>()
                .map_err(|e| Failure::run(e.to_string()))?;
            let flow: Vec<f64> = grid.iter().map(|&x| kde.density(&[x])).collect();
            let r = kl_between(|x| eval::sqrt1d_marginal_density(&p0, x, t).unwrap_or(0.0), |x| kde.density(&[x]), &grid);
            Ok((law, r.kl, grid.clone(), exact, flow))
        })
        .collect()
}

fn train_failure(ctx: &Context, e: TrainError, lambda: f64) -> Failure {
    match e {
        TrainError::NonFinite { ref last_good, .. } | TrainError::Degenerate { ref last_good, .. } => {
            if let Err(f) = ctx.save_model(last_good, lambda, serde_json::Value::Null) {
                return f;
            }
            Failure::run(format!("{e}; saved the last good parameters to {}", ctx.cfg.model_path().display()))
        }
        TrainError::Config(_) => Failure::usage(e.to_string()),
        TrainError::Dimension { .. } => Failure::schema(e.to_string()),
    }
}

pub fn train(ctx: &Context) -> Result<(), Failure> {
    let ds = ctx.load_dataset()?;
    let d = ds.dim();
    let st = if ctx.cfg.model.standardize { Standardization::from_dataset(&ds) } else { Standardization::identity(d) };
    let model = PrnfModel::init(d, &ctx.cfg.model.hidden, ctx.seed(INIT), st).map_err(|e| Failure::usage(e.to_string()))?;
    let tcfg = ctx.cfg.train.config(ctx.seed(TRAIN));
    let lambda = ctx.cfg.train.lambda.0;
    let weights = LossWeights::new(lambda).map_err(|e| Failure::usage(e.to_string()))?;
    tcfg.validate().map_err(|e| Failure::usage(e.to_string()))?;
    let kl_every = if ctx.problem.name == "sqrt1d" { ctx.cfg.train.kl_every } else { 0 };
    let eval_cfg = &ctx.cfg.evaluate;
    let mut kl_rows = Vec::new();
    let mut kl_error = None;
    let start = Instant::now();
    let result = train_with_observer(&model, &ds, weights, &tcfg, |rec, m| {
        if kl_every > 0 && rec.epoch % kl_every == 0 && kl_error.is_none() {
            match sqrt1d_kls(m, &ctx.problem, eval_cfg.samples, eval_cfg.grid_points, ctx.seed(EVALUATE)) {
                Ok(k) => kl_rows.push((rec.epoch, rec.loss, k.iter().map(|r| r.1).collect::<Vec<_>>())),
                Err(f) => kl_error = Some(f),
            }
        }
    });
    let secs = start.elapsed().as_secs_f64();
    let (trained, report) = result.map_err(|e| train_failure(ctx, e, lambda))?;
    if let Some(f) = kl_error {
        return Err(f);
    }
    let path = ctx.save_model(&trained, lambda, json!(tcfg))?;
    ctx.csv("train_history.csv", |w| {
        writeln!(w, "epoch,L,L1,L2")?;
        for r in &report.history {
            writeln!(w, "{},{:?},{:?},{:?}", r.epoch, r.loss, r.l1, r.l2)?;
        }
        Ok(())
    })?;
    if !kl_rows.is_empty() {
        ctx.csv("kl_history.csv", |w| {
            writeln!(w, "epoch,L,{}", TEST_1D.join(","))?;
            for (epoch, loss, kls) in &kl_rows {
                let cols: Vec<String> = kls.iter().map(|k| format!("{k:?}")).collect();
                writeln!(w, "{epoch},{loss:?},{}", cols.join(","))?;
            }
            Ok(())
        })?;
    }
    output::record_timing(&ctx.cfg.out, "train", secs)?;
    let last = report.last().map_or(report.initial.loss, |r| r.loss);
    println!("train: {} epochs, lambda = {lambda}, final L = {last:.6} in {secs:.3} s -> {}", tcfg.epochs, path.display());
    Ok(())
}

pub fn tune(ctx: &Context) -> Result<(), Failure> {
    let ds = ctx.load_dataset()?;
    let lambdas: Vec<f64> = ctx.cfg.tune.lambdas.iter().map(|l| l.0).collect();
    let tcfg = ctx.cfg.train.config(ctx.seed(TRAIN));
    let opts = GridOptions {
        hidden: ctx.cfg.model.hidden.clone(),
        generator_samples: ctx.cfg.tune.generator_samples,
        mode: ctx.cfg.tune.mode,
        master_seed: ctx.seed(TUNE),
        standardize: ctx.cfg.model.standardize,
    };
    let start = Instant::now();
    let res = grid_search(&ds, &ctx.problem.domain, &lambdas, &tcfg, &opts).map_err(|e| match e {
        TuneError::Invalid(_) | TuneError::Train(TrainError::Config(_)) => Failure::usage(e.to_string()),
        other => Failure::run(other.to_string()),
    })?;
    let secs = start.elapsed().as_secs_f64();
    for c in &res.candidates {
        if let Some(err) = &c.error {
            log::warn!("lambda = {}: excluded ({err})", c.lambda);
        }
    }
    let csv = ctx.csv("tune.csv", |w| res.write_csv(w))?;
    let best = res.selected();
    let model = best.model.as_ref().ok_or_else(|| Failure::run("selected candidate kept no model"))?;
    let path = ctx.save_model(model, best.lambda, json!(tcfg))?;
    output::record_timing(&ctx.cfg.out, "tune", secs)?;
    println!("tune: selected lambda = {} in {secs:.3} s -> {}, {}", best.lambda, csv.display(), path.display());
    Ok(())
}

pub fn sample(ctx: &Context) -> Result<(), Failure> {
    let s = &ctx.cfg.sample;
    if s.m == 0 || s.n == 0 {
        return Err(Failure::usage("sample.m and sample.n must be at least 1"));
    }
    let (model, _) = ctx.load_model()?;
    let p0 = s.initial.resolve(&ctx.problem)?;
    let start = Instant::now();
    let xs = eval::flow_samples(&model, &p0, s.m, s.n, ctx.seed(SAMPLE)).map_err(|e| Failure::run(e.to_string()))?;
    let secs = start.elapsed().as_secs_f64();
    let d = model.dim();
    let path = ctx.csv("samples.csv", |w| {
        let header: Vec<String> = (0..d).map(|i| format!("xt_{i}")).collect();
        writeln!(w, "{}", header.join(","))?;
        for row in xs.chunks(d) {
            let line: Vec<String> = row.iter().map(|v| format!("{v:?}")).collect();
            writeln!(w, "{}", line.join(","))?;
        }
        Ok(())
    })?;
    println!("sample: {} draws in {secs:.3} s (online) -> {}", s.m * s.n, path.display());
    Ok(())
}

pub fn evaluate(ctx: &Context) -> Result<(), Failure> {
    let (model, header) = ctx.load_model()?;
    let ds = ctx.load_dataset()?;
    let e = &ctx.cfg.evaluate;
    if e.samples == 0 || e.grid_points < 2 {
        return Err(Failure::usage("evaluate.samples must be positive and evaluate.grid_points at least 2"));
    }
    let d = ds.dim();
    let lambda = header.lambda.unwrap_or(ctx.cfg.train.lambda.0);
    let mut metrics: Vec<(String, f64)> = Vec::new();
    let lb = losses(&model, &ds, LossWeights { lambda }).map_err(|e| Failure::run(e.to_string()))?;
    metrics.extend([("L".into(), lb.loss), ("L1".into(), lb.l1), ("L2".into(), lb.l2)]);
    let k = e.normality_rows.min(ds.len());
    if k > 0 {
        let z = model.latent_batch(&ds.x0()[..k * d], &ds.xt()[..k * d]).map_err(|e| Failure::run(e.to_string()))?;
        for j in 0..d {
            let col: Vec<f64> = z.chunks(d).map(|r| r[j]).collect();
            let (stat, p) = stats::ks_one_sample(&col, stats::normal_cdf);
            metrics.push((format!("ks_stat_z{j}"), stat));
            metrics.push((format!("ks_p_z{j}"), p));
        }
    }
    match ctx.problem.name.as_str() {
        "sqrt1d" => {
            for (law, kl, grid, exact, flow) in sqrt1d_kls(&model, &ctx.problem, e.samples, e.grid_points, ctx.seed(EVALUATE))? {
                metrics.push((format!("kl_{law}"), kl));
                ctx.csv(&format!("density_{law}.csv"), |w| {
                    writeln!(w, "x,exact,flow")?;
                    for ((x, a), b) in grid.iter().zip(&exact).zip(&flow) {
                        writeln!(w, "{x:?},{a:?},{b:?}")?;
                    }
                    Ok(())
                })?;
            }
        }
        "linear10d" => {
            let dims: Vec<usize> = (0..d).collect();
            for (i, tr) in Transform::ALL.into_iter().enumerate() {
                let p0 = InitialDistribution::normal_10d(tr);
                let seed = derive_seed(ctx.seed(EVALUATE), i as u64);
                let run = |e: eval::EvalError| Failure::run(e.to_string());
                let flow = eval::flow_samples(&model, &p0, e.samples, 1, seed).map_err(run)?;
                let reference = eval::linear10d_reference(&p0, e.samples, ctx.problem.horizon, seed).map_err(run)?;
                let kls = eval::marginal_kl(&reference, &flow, d, &dims).map_err(run)?;
                for (j, r) in kls.iter().enumerate() {
                    metrics.push((format!("kl_{}_x{j}", tr.name()), r.kl));
                }
                metrics.push((format!("kl_{}_max", tr.name()), kls.iter().map(|r| r.kl).fold(f64::NEG_INFINITY, f64::max)));
            }
        }
        _ => {}
    }
    let path = ctx.csv("evaluate.csv", |w| {
        writeln!(w, "metric,value")?;
        for (name, v) in &metrics {
            writeln!(w, "{name},{v:?}")?;
        }
        Ok(())
    })?;
    for (name, v) in &metrics {
        println!("{name:>16} {v:.6}");
    }
    println!("evaluate: -> {}", path.display());
    Ok(())
}

fn timed<T>(f: impl FnOnce() -> Result<T, eval::EvalError>) -> Result<(T, f64), Failure> {
    let start = Instant::now();
    let v = f().map_err(|e| Failure::run(e.to_string()))?;
    Ok((v, start.elapsed().as_secs_f64()))
}

pub fn qoi(ctx: &Context) -> Result<(), Failure> {
    let (model, _) = ctx.load_model()?;
    let q = &ctx.cfg.qoi;
    let name = ctx.problem.name.as_str();
    let mut online = 0.0;
    let mut mc_time = 0.0;
    let path = match q.kind {
        QoiKind::RunawaySweep => {
            if name != "runaway2d" {
                return Err(Failure::usage(format!("runaway_sweep needs problem runaway2d, not {name}")));
            }
            if q.samples == 0 || q.temperatures.is_empty() {
                return Err(Failure::usage("qoi.samples and qoi.temperatures must be nonempty"));
            }
            let mut rows = Vec::new();
            for (k, t0) in q.temperatures.iter().enumerate() {
                let p0 = maxwellian_for(&ctx.problem, t0.0);
                let seed = derive_seed(ctx.seed(QOI), k as u64);
                let (flow, s) = timed(|| eval::runaway_fraction(&model, &p0, q.threshold.0, q.samples, seed))?;
                online += s;
                let mc = if q.mc {
                    let icfg = IntegratorConfig::new(ctx.cfg.problem.dt.0, derive_seed(ctx.seed(MONTE_CARLO), k as u64));
                    let (v, s) = timed(|| eval::runaway_fraction_mc(&ctx.problem, &p0, q.threshold.0, q.samples, &icfg))?;
                    mc_time += s;
                    v
                } else {
                    f64::NAN
                };
                println!("T0 = {:>6}: n_RE flow {flow:.4}  MC {mc:.4}", t0.0);
                rows.push((t0.0, flow, mc));
            }
            ctx.csv("qoi_runaway.csv", |w| {
                writeln!(w, "T0,n_re_flow,n_re_mc,abs_error")?;
                for (t0, f, m) in &rows {
                    writeln!(w, "{t0:?},{f:?},{m:?},{:?}", (f - m).abs())?;
                }
                Ok(())
            })?
        }
        QoiKind::AbcGrid => {
            if name != "abc3d" {
                return Err(Failure::usage(format!("abc_grid needs problem abc3d, not {name}")));
            }
            if q.samples == 0 || q.grid == 0 {
                return Err(Failure::usage("qoi.samples and qoi.grid must be positive"));
            }
            let centres = if q.grid == 1 { vec![PI] } else { uniform_grid(0.0, 2.0 * PI, q.grid) };
            let region = Region::abc_target();
            let (mut flow_rows, mut mc_rows) = (Vec::new(), Vec::new());
            let mut worst: f64 = 0.0;
            for (i, &xc) in centres.iter().enumerate() {
                for (j, &zc) in centres.iter().enumerate() {
                    let k = (i * centres.len() + j) as u64;
                    let seed = derive_seed(ctx.seed(QOI), k);
                    let (f, s) = timed(|| eval::target_density(&model, xc, zc, &region, q.samples, seed))?;
                    online += s;
                    flow_rows.push((xc, zc, f));
                    if q.mc {
                        let icfg = IntegratorConfig::new(ctx.cfg.problem.dt.0, derive_seed(ctx.seed(MONTE_CARLO), k));
                        let (m, s) = timed(|| eval::target_density_mc(&ctx.problem, xc, zc, &region, q.samples, &icfg))?;
                        mc_time += s;
                        worst = worst.max((f - m).abs());
                        mc_rows.push((xc, zc, m));
                    }
                }
            }
            if q.mc {
                ctx.csv("target_mc.csv", |w| write_grid_csv(&mc_rows, w))?;
                println!("max |n_T(flow) - n_T(MC)| = {worst:.4}");
            }
            ctx.csv("target_flow.csv", |w| write_grid_csv(&flow_rows, w))?
        }
        QoiKind::Expectation => {
            let p0 = q.initial.resolve(&ctx.problem)?;
            let spec = QoiSpec { integrand: q.integrand.clone(), m: q.m, n: q.n };
            if q.m == 0 || q.n == 0 {
                return Err(Failure::usage("qoi.m and qoi.n must be at least 1"));
            }
            let (flow, s) = timed(|| eval::qoi_estimate(&model, &p0, &spec, ctx.seed(QOI)))?;
            online = s;
            let mut rows = vec![("flow", flow, s)];
            if q.mc {
                let icfg = ctx.integrator(MONTE_CARLO);
                let (mc, s) = timed(|| eval::mc_reference(&ctx.problem, &p0, &spec, &icfg))?;
                mc_time = s;
                rows.push(("mc", mc, s));
            }
            for (method, e, _) in &rows {
                println!("{method:>4}: {:.6} +- {:.6}", e.value, e.std_error);
            }
            ctx.csv("qoi.csv", |w| {
                writeln!(w, "method,value,std_error,seconds")?;
                for (method, e, s) in &rows {
                    writeln!(w, "{method},{:?},{:?},{s:.6}", e.value, e.std_error)?;
                }
                Ok(())
            })?
        }
    };
    let t = output::read_timings(&ctx.cfg.out);
    let simulate = t.get("simulate").copied().unwrap_or(0.0);
    let fit = t.get("train").or(t.get("tune")).copied().unwrap_or(0.0);
    println!("C_offline = {:.3} s (simulate {simulate:.3} s + training {fit:.3} s)", simulate + fit);
    println!("C_online  = {online:.3} s");
    if q.mc {
        println!("C_MC      = {mc_time:.3} s (online speed-up {:.1}x)", mc_time / online.max(1e-12));
    }
    println!("qoi: -> {}", path.display());
    Ok(())
}

/// Parses a sample CSV (optional `#` comments, one header line).
fn read_columns(path: &Path) -> Result<(Vec<String>, Vec<Vec<f64>>), Failure> {
    let text = std::fs::read_to_string(path).map_err(|e| Failure::from_read(path, e))?;
    let mut lines = text.lines().filter(|l| !l.starts_with('#') && !l.trim().is_empty());
    let header: Vec<String> = lines
        .next()
        .ok_or_else(|| Failure::schema(format!("{}: no header line", path.display())))?
        .split(',')
        .map(|s| s.trim().to_string())
        .collect();
    let mut cols = vec![Vec::new(); header.len()];
    for (i, line) in lines.enumerate() {
        let vals: Vec<&str> = line.split(',').collect();
        if vals.len() != header.len() {
            return Err(Failure::schema(format!("{}: row {} has {} fields", path.display(), i + 1, vals.len())));
        }
        for (c, v) in cols.iter_mut().zip(vals) {
            c.push(v.trim().parse::<f64>().map_err(|e| Failure::schema(format!("{}: {v:?}: {e}", path.display())))?);
        }
    }
    Ok((header, cols))
}

fn range(xs: &[f64]) -> (f64, f64) {
    let lo = xs.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if lo < hi {
        (lo, hi)
    } else {
        (lo - 0.5, lo + 0.5)
    }
}

pub fn export_hist(ctx: &Context) -> Result<(), Failure> {
    let h = &ctx.cfg.hist;
    if h.bins == 0 || (h.column_y.is_some() && h.bins_y == 0) {
        return Err(Failure::usage("histogram bins must be positive"));
    }
    let input = h.input.clone().unwrap_or_else(|| ctx.cfg.samples_path());
    let (header, cols) = read_columns(&input)?;
    let column = |c: usize| {
        cols.get(c).ok_or_else(|| Failure::usage(format!("column {c} out of range; {} has {:?}", input.display(), header)))
    };
    let xs = column(h.column)?;
    if xs.is_empty() {
        return Err(Failure::usage(format!("{} has no rows", input.display())));
    }
    let (dlo, dhi) = range(xs);
    let lo = h.lo.map_or(dlo, |v| v.0);
    let hi = h.hi.map_or(dhi, |v| v.0);
    if !(lo < hi) {
        return Err(Failure::usage(format!("histogram range [{lo}, {hi}] is empty")));
    }
    let path = match h.column_y {
        None => {
            let hist = Histogram::new(xs.iter().copied(), lo, hi, h.bins);
            ctx.csv("hist.csv", |w| hist.write_csv(w))?
        }
        Some(cy) => {
            let ys = column(cy)?;
            let (ylo, yhi) = range(ys);
            let (wx, wy) = ((hi - lo) / h.bins as f64, (yhi - ylo) / h.bins_y as f64);
            let mut counts = vec![0u64; h.bins * h.bins_y];
            for (&x, &y) in xs.iter().zip(ys) {
                if x >= lo && x <= hi && y >= ylo && y <= yhi {
                    let i = (((x - lo) / wx) as usize).min(h.bins - 1);
                    let j = (((y - ylo) / wy) as usize).min(h.bins_y - 1);
                    counts[i * h.bins_y + j] += 1;
                }
            }
            let norm = xs.len() as f64 * wx * wy;
            let rows: Vec<(f64, f64, f64)> = (0..h.bins)
                .flat_map(|i| (0..h.bins_y).map(move |j| (i, j)))
                .map(|(i, j)| {
                    (lo + (i as f64 + 0.5) * wx, ylo + (j as f64 + 0.5) * wy, counts[i * h.bins_y + j] as f64 / norm)
                })
                .collect();
            ctx.csv("hist2d.csv", |w| write_grid_csv(&rows, w))?
        }
    };
    println!("export-hist: {} rows -> {}", xs.len(), path.display());
    Ok(())
}

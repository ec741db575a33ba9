//! Model selection for the reversibility weight λ by KDE cross-entropy.

pub mod kde;

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::flow::{FlowError, PrnfModel, Standardization};
use crate::par;
use crate::rng;
use crate::sde::{BoxDomain, PairDataset};
use crate::train::{self, LossWeights, TrainConfig, TrainError, TrainReport};

pub use kde::{kde_fit, Bandwidth, KdeEstimator};

/// Densities below this are treated as underflow in cross-entropies.
pub const DENSITY_FLOOR: f64 = 1e-300;
/// Default number of generator samples.
pub const DEFAULT_GENERATOR_SAMPLES: usize = 100_000;

#[derive(Debug, thiserror::Error)]
pub enum TuneError {
    #[error("invalid argument: {0}")]
    Invalid(String),
    #[error(transparent)]
    Flow(#[from] FlowError),
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error("every candidate failed: {0}")]
    AllFailed(String),
}

/// Which variables the cross-entropy KDE is built over.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CrossEntropyMode {
    /// Joint `(x0, xt)` pairs.
    #[default]
    Joint,
    /// Terminal states `xt` only.
    Terminal,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CrossEntropy {
    pub h: f64,
    /// Training rows whose KDE density fell below [`DENSITY_FLOOR`].
    pub underflows: usize,
}

/// `H = −(1/N) Σ ln p_KDE` at the training rows, with the KDE fitted to `m`
/// generator samples (`z0` uniform on `domain`, `zt ~ N(0, I)`, mapped by `g`).
pub fn cross_entropy(
    model: &PrnfModel,
    ds: &PairDataset,
    domain: &BoxDomain,
    m: usize,
    seed: u64,
    mode: CrossEntropyMode,
) -> Result<CrossEntropy, TuneError> {
    let d = model.dim();
    if ds.dim() != d || domain.dim() != d {
        return Err(TuneError::Invalid(format!("dimensions: model {d}, dataset {}, domain {}", ds.dim(), domain.dim())));
    }
    if m < 2 {
        return Err(TuneError::Invalid("need at least two generator samples".into()));
    }
    let (z0, xt) = model.sample_generator(&domain.lower, &domain.upper, m, seed)?;
    let widths: Vec<f64> = (0..d).map(|i| domain.width(i)).collect();
    let (points, queries, k, floor_widths) = match mode {
        CrossEntropyMode::Joint => {
            let interleave = |a: &[f64], b: &[f64]| -> Vec<f64> {
                a.chunks(d).zip(b.chunks(d)).flat_map(|(x, y)| x.iter().chain(y).copied()).collect()
            };
            (interleave(&z0, &xt), interleave(ds.x0(), ds.xt()), 2 * d, [widths.clone(), widths].concat())
        }
        CrossEntropyMode::Terminal => (xt, ds.xt().to_vec(), d, widths),
    };
    if points.iter().any(|v| !v.is_finite()) {
        // a generator producing non-finite output cannot explain the data
        return Ok(CrossEntropy { h: -DENSITY_FLOOR.ln(), underflows: ds.len() });
    }
    let kde = kde_fit(&points, k, &Bandwidth::Scott, Some(&floor_widths))?;
    let logs = kde.log_density_batch(&queries);
    let floor = DENSITY_FLOOR.ln();
    let mut underflows = 0;
    let mut total = 0.0;
    for l in logs {
        if l < floor || l.is_nan() {
            underflows += 1;
            total += floor;
        } else {
            total += l;
        }
    }
    Ok(CrossEntropy { h: -total / ds.len() as f64, underflows })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridOptions {
    /// Hidden layer widths of both blocks.
    pub hidden: Vec<usize>,
    pub generator_samples: usize,
    pub mode: CrossEntropyMode,
    pub master_seed: u64,
    /// Standardize inputs with dataset statistics.
    pub standardize: bool,
}

impl Default for GridOptions {
    fn default() -> Self {
        Self {
            hidden: vec![256],
            generator_samples: DEFAULT_GENERATOR_SAMPLES,
            mode: CrossEntropyMode::Joint,
            master_seed: 0,
            standardize: true,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Candidate {
    pub lambda: f64,
    pub cross_entropy: Option<CrossEntropy>,
    pub train_seconds: f64,
    pub final_l1: f64,
    pub final_l2: f64,
    /// Why the candidate was excluded, if it was.
    pub error: Option<String>,
    pub model: Option<PrnfModel>,
    pub report: Option<TrainReport>,
}

#[derive(Debug, Clone)]
pub struct GridSearchResult {
    pub candidates: Vec<Candidate>,
    pub selected: usize,
}

impl GridSearchResult {
    pub fn selected(&self) -> &Candidate {
        &self.candidates[self.selected]
    }

    pub fn selected_lambda(&self) -> f64 {
        self.selected().lambda
    }

    /// CSV with header `lambda,H,train_seconds,final_L1,final_L2`; excluded
    /// candidates report `NaN` for `H`.
    pub fn write_csv<W: std::io::Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "lambda,H,train_seconds,final_L1,final_L2")?;
        for c in &self.candidates {
            let h = c.cross_entropy.map_or(f64::NAN, |ce| ce.h);
            writeln!(w, "{:?},{:?},{:.6},{:?},{:?}", c.lambda, h, c.train_seconds, c.final_l1, c.final_l2)?;
        }
        Ok(())
    }
}

/// Seeds of candidate `j`: (network init, training shuffles).
pub fn candidate_seeds(master: u64, j: usize) -> (u64, u64) {
    (rng::derive_seed(master, 2 * j as u64 + 1), rng::derive_seed(master, 2 * j as u64 + 2))
}

/// Seed of the generator samples, shared by all candidates so their scores
/// use common random numbers.
pub fn scoring_seed(master: u64) -> u64 {
    rng::derive_seed(master, 0xce)
}

/// Trains one model per λ, scores each by cross-entropy and selects the
/// minimizer; ties go to the larger λ. Candidates whose training aborts are
/// kept in the result with their error and excluded from selection.
pub fn grid_search(
    ds: &PairDataset,
    domain: &BoxDomain,
    lambdas: &[f64],
    cfg: &TrainConfig,
    opts: &GridOptions,
) -> Result<GridSearchResult, TuneError> {
    if lambdas.len() < 2 {
        return Err(TuneError::Invalid("grid search needs at least two candidates".into()));
    }
    for &l in lambdas {
        LossWeights::new(l)?;
    }
    cfg.validate()?;
    let d = ds.dim();
    let st = if opts.standardize { Standardization::from_dataset(ds) } else { Standardization::identity(d) };
    let score_seed = scoring_seed(opts.master_seed);
    let candidates = par::map_indexed(lambdas.len(), |j| {
        let lambda = lambdas[j];
        let (init_seed, train_seed) = candidate_seeds(opts.master_seed, j);
        let start = Instant::now();
        let outcome = PrnfModel::init(d, &opts.hidden, init_seed, st.clone())
            .map_err(TuneError::from)
            .and_then(|m| {
                let cfg = TrainConfig { seed: train_seed, ..cfg.clone() };
                Ok(train::train(&m, ds, LossWeights { lambda }, &cfg)?)
            });
        let train_seconds = start.elapsed().as_secs_f64();
        match outcome {
            Ok((model, report)) => {
                let (final_l1, final_l2) = report.last().map_or((report.initial.l1, report.initial.l2), |r| (r.l1, r.l2));
                match cross_entropy(&model, ds, domain, opts.generator_samples, score_seed, opts.mode) {
                    Ok(ce) => Candidate {
                        lambda,
                        cross_entropy: Some(ce),
                        train_seconds,
                        final_l1,
                        final_l2,
                        error: None,
                        model: Some(model),
                        report: Some(report),
                    },
                    Err(e) => Candidate {
                        lambda,
                        cross_entropy: None,
                        train_seconds,
                        final_l1,
                        final_l2,
                        error: Some(e.to_string()),
                        model: Some(model),
                        report: Some(report),
                    },
                }
            }
            Err(e) => {
                log::warn!("candidate lambda={lambda} excluded: {e}");
                Candidate {
                    lambda,
                    cross_entropy: None,
                    train_seconds,
                    final_l1: f64::NAN,
                    final_l2: f64::NAN,
                    error: Some(e.to_string()),
                    model: None,
                    report: None,
                }
            }
        }
    });
    let selected = select(&candidates).ok_or_else(|| {
        TuneError::AllFailed(candidates.iter().filter_map(|c| c.error.clone()).collect::<Vec<_>>().join("; "))
    })?;
    Ok(GridSearchResult { candidates, selected })
}

/// Index of the smallest finite `H`, preferring the larger λ on ties.
fn select(candidates: &[Candidate]) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (j, c) in candidates.iter().enumerate() {
        let Some(ce) = c.cross_entropy else { continue };
        if !ce.h.is_finite() {
            continue;
        }
        best = match best {
            None => Some((j, ce.h)),
            Some((b, h)) if ce.h < h || (ce.h == h && c.lambda > candidates[b].lambda) => Some((j, ce.h)),
            keep => keep,
        };
    }
    best.map(|(j, _)| j)
}

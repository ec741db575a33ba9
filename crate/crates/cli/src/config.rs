//! Run configuration: one TOML document drives every subcommand.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use prnf::eval::{InitialDistribution, Integrand, Transform, TEST_1D};
use prnf::sde::{problem_catalog, CatalogParams, SdeProblem};
use prnf::train::TrainConfig;
use prnf::tune::CrossEntropyMode;
use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize};

use crate::Failure;

/// A real number written either as a TOML number or as a decimal string.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(transparent)]
pub struct Num(pub f64);

impl<'de> Deserialize<'de> for Num {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Int(i64),
            Float(f64),
            Text(String),
        }
        match Raw::deserialize(d)? {
            Raw::Int(i) => Ok(Num(i as f64)),
            Raw::Float(x) => Ok(Num(x)),
            Raw::Text(s) => s
                .trim()
                .parse::<f64>()
                .map(Num)
                .map_err(|_| D::Error::custom(format!("{s:?} is not a decimal number"))),
        }
    }
}

fn nums(xs: &[f64]) -> Vec<Num> {
    xs.iter().copied().map(Num).collect()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Master seed; every stage derives its own stream from it.
    #[serde(default)]
    pub seed: u64,
    /// Output directory. Not part of the configuration hash, so moving a run
    /// does not change its artifacts.
    #[serde(default = "default_out", skip_serializing)]
    pub out: PathBuf,
    pub problem: ProblemSection,
    #[serde(default)]
    pub data: DataSection,
    #[serde(default)]
    pub model: ModelSection,
    #[serde(default)]
    pub train: TrainSection,
    #[serde(default)]
    pub tune: TuneSection,
    #[serde(default)]
    pub sample: SampleSection,
    #[serde(default)]
    pub evaluate: EvaluateSection,
    #[serde(default)]
    pub qoi: QoiSection,
    #[serde(default)]
    pub hist: HistSection,
}

fn default_out() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemSection {
    /// Catalog name: sqrt1d, linear10d, runaway2d or abc3d.
    pub name: String,
    #[serde(default)]
    pub params: BTreeMap<String, Num>,
    #[serde(default = "default_dt")]
    pub dt: Num,
}

fn default_dt() -> Num {
    Num(prnf::sde::catalog::DEFAULT_DT)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataSection {
    pub n: usize,
    /// Dataset file; defaults to `<out>/dataset.bin`.
    pub path: Option<PathBuf>,
    /// Also write a CSV copy next to the binary file.
    pub csv: bool,
}

impl Default for DataSection {
    fn default() -> Self {
        Self { n: 20_000, path: None, csv: false }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSection {
    /// Hidden widths of each block.
    pub hidden: Vec<usize>,
    pub standardize: bool,
    /// Checkpoint file; defaults to `<out>/model.bin`.
    pub path: Option<PathBuf>,
}

impl Default for ModelSection {
    fn default() -> Self {
        Self { hidden: vec![256], standardize: true, path: None }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSection {
    pub lambda: Num,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: Num,
    pub adam_beta1: Num,
    pub adam_beta2: Num,
    pub adam_eps: Num,
    /// For sqrt1d, record the test-law KL divergences every this many epochs (0 = never).
    pub kl_every: usize,
}

impl Default for TrainSection {
    fn default() -> Self {
        let t = TrainConfig::default();
        Self {
            lambda: Num(50.0),
            epochs: t.epochs,
            batch_size: t.batch_size,
            learning_rate: Num(t.learning_rate),
            adam_beta1: Num(t.adam_beta1),
            adam_beta2: Num(t.adam_beta2),
            adam_eps: Num(t.adam_eps),
            kl_every: 0,
        }
    }
}

impl TrainSection {
    pub fn config(&self, seed: u64) -> TrainConfig {
        TrainConfig {
            epochs: self.epochs,
            batch_size: self.batch_size,
            learning_rate: self.learning_rate.0,
            adam_beta1: self.adam_beta1.0,
            adam_beta2: self.adam_beta2.0,
            adam_eps: self.adam_eps.0,
            seed,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TuneSection {
    pub lambdas: Vec<Num>,
    pub generator_samples: usize,
    pub mode: CrossEntropyMode,
}

impl Default for TuneSection {
    fn default() -> Self {
        Self {
            lambdas: nums(&[1.0, 10.0, 50.0, 100.0, 500.0]),
            generator_samples: prnf::tune::DEFAULT_GENERATOR_SAMPLES,
            mode: CrossEntropyMode::Joint,
        }
    }
}

/// Initial law by name. `law` is one of `domain` (uniform over the problem
/// domain), `delta`, `bar`, `sin2`, `ricker`, `maxwellian`, `abc_cloud` or
/// `normal10d`. Setting `x0` selects a point mass there.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InitialSpec {
    pub law: String,
    pub x0: Option<Vec<Num>>,
    /// Maxwellian temperature.
    pub t0: Num,
    /// Cloud centre `(xc, π, zc)`.
    pub xc: Num,
    pub zc: Num,
    pub transform: Transform,
}

impl Default for InitialSpec {
    fn default() -> Self {
        Self { law: "domain".into(), x0: None, t0: Num(1.0), xc: Num(PI), zc: Num(PI), transform: Transform::Identity }
    }
}

impl InitialSpec {
    pub fn resolve(&self, problem: &SdeProblem) -> Result<InitialDistribution, Failure> {
        let law = match self.law.as_str() {
            _ if self.x0.is_some() => InitialDistribution::Delta { x: self.x0.iter().flatten().map(|v| v.0).collect() },
            "domain" => InitialDistribution::Uniform {
                lower: problem.domain.lower.clone(),
                upper: problem.domain.upper.clone(),
            },
            name if TEST_1D.contains(&name) => {
                InitialDistribution::test_1d(name).map_err(|e| Failure::usage(e.to_string()))?
            }
            "maxwellian" => maxwellian_for(problem, self.t0.0),
            "abc_cloud" => InitialDistribution::abc_cloud(self.xc.0, self.zc.0),
            "normal10d" => InitialDistribution::normal_10d(self.transform),
            other => return Err(Failure::usage(format!("unknown initial law {other:?}"))),
        };
        if law.dim() != problem.d {
            return Err(Failure::usage(format!(
                "initial law {:?} has dimension {}, problem {} has {}",
                self.law,
                law.dim(),
                problem.name,
                problem.d
            )));
        }
        Ok(law)
    }
}

/// Maxwellian over the problem's momentum range.
pub fn maxwellian_for(problem: &SdeProblem, t0: f64) -> InitialDistribution {
    match InitialDistribution::maxwellian(t0) {
        InitialDistribution::Maxwellian { t0, t_tilde, .. } => InitialDistribution::Maxwellian {
            t0,
            t_tilde,
            p_min: problem.domain.lower[0],
            p_max: problem.domain.upper[0],
        },
        other => other,
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SampleSection {
    pub initial: InitialSpec,
    /// Initial draws.
    pub m: usize,
    /// Conditional draws per initial draw.
    pub n: usize,
}

impl Default for SampleSection {
    fn default() -> Self {
        Self { initial: InitialSpec::default(), m: 1, n: 10_000 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvaluateSection {
    /// Flow samples per KL estimate.
    pub samples: usize,
    pub grid_points: usize,
    /// Dataset rows used for the latent normality test.
    pub normality_rows: usize,
}

impl Default for EvaluateSection {
    fn default() -> Self {
        Self { samples: 100_000, grid_points: 1001, normality_rows: 5000 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QoiKind {
    /// Runaway fraction for each initial temperature.
    RunawaySweep,
    /// Scalar fraction in the target region for a grid of cloud centres.
    AbcGrid,
    /// `E[F(xt)]` for one initial law.
    Expectation,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct QoiSection {
    pub kind: QoiKind,
    /// Samples per sweep or grid point.
    pub samples: usize,
    pub temperatures: Vec<Num>,
    pub threshold: Num,
    /// Cloud centres per axis.
    pub grid: usize,
    pub integrand: Integrand,
    pub initial: InitialSpec,
    pub m: usize,
    pub n: usize,
    /// Also run the Monte Carlo reference.
    pub mc: bool,
}

impl Default for QoiSection {
    fn default() -> Self {
        Self {
            kind: QoiKind::Expectation,
            samples: 5000,
            temperatures: (1..=10).map(|t| Num(t as f64)).collect(),
            threshold: Num(prnf::eval::RUNAWAY_THRESHOLD),
            grid: 7,
            integrand: Integrand::One,
            initial: InitialSpec::default(),
            m: 100,
            n: 100,
            mc: true,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HistSection {
    /// Sample CSV; defaults to `<out>/samples.csv`.
    pub input: Option<PathBuf>,
    pub column: usize,
    pub bins: usize,
    pub lo: Option<Num>,
    pub hi: Option<Num>,
    /// Second column for a two-dimensional grid export.
    pub column_y: Option<usize>,
    pub bins_y: usize,
}

impl Default for HistSection {
    fn default() -> Self {
        Self { input: None, column: 0, bins: 100, lo: None, hi: None, column_y: None, bins_y: 100 }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, Failure> {
        let text = std::fs::read_to_string(path).map_err(|e| Failure::from_read(path, e))?;
        let cfg: RunConfig = toml::from_str(&text).map_err(|e| Failure::usage(format!("{}: {e}", path.display())))?;
        cfg.problem()?;
        Ok(cfg)
    }

    pub fn problem(&self) -> Result<SdeProblem, Failure> {
        let params: CatalogParams = self.problem.params.iter().map(|(k, v)| (k.clone(), v.0)).collect();
        problem_catalog(&self.problem.name, &params).map_err(|e| Failure::usage(e.to_string()))
    }

    pub fn dataset_path(&self) -> PathBuf {
        self.data.path.clone().unwrap_or_else(|| self.out.join("dataset.bin"))
    }

    pub fn model_path(&self) -> PathBuf {
        self.model.path.clone().unwrap_or_else(|| self.out.join("model.bin"))
    }

    pub fn samples_path(&self) -> PathBuf {
        self.out.join("samples.csv")
    }

    /// Hex SHA-256 of the effective configuration.
    pub fn hash(&self) -> String {
        use sha2::{Digest, Sha256};
        let json = serde_json::to_vec(self).expect("configuration serializes");
        Sha256::digest(&json).iter().map(|b| format!("{b:02x}")).collect()
    }
}

//! Fully-resolved run configurations. Each command writes one of these as
//! `config.json` (or a sidecar) and accepts it back through `--config`.

use std::path::{Path, PathBuf};
use std::str::FromStr;

use anyhow::{bail, Context};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use leo_core::baselines::NelderMeadConfig;
use leo_core::graph::SolverConfig;
use leo_core::hmc::HmcConfig;
use leo_core::leo::LeoConfig;
use leo_core::navsim::{self, DatasetId, Split};
use leo_core::toy1d::ToyConfig;
use leo_core::{seed, LeoError};
use leo_core::models::ThetaParams;

use crate::Usage;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Leo,
    Perceptron,
    NelderMead,
    Surrogate,
}

impl FromStr for Method {
    type Err = Usage;

    fn from_str(s: &str) -> Result<Self, Usage> {
        match s {
            "leo" => Ok(Method::Leo),
            "perceptron" => Ok(Method::Perceptron),
            "nelder-mead" => Ok(Method::NelderMead),
            "surrogate" => Ok(Method::Surrogate),
            _ => Err(Usage(format!(
                "unknown method '{s}' (leo | perceptron | nelder-mead | surrogate)"
            ))),
        }
    }
}

/// Starting parameters for a trainer.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ThetaInit {
    /// Every log-std set to one value.
    Constant { log_std: f64 },
    /// One uniform draw per (block, label) in `[lo, hi)`.
    Random { lo: f64, hi: f64, seed: u64 },
    File { path: PathBuf },
}

impl ThetaInit {
    /// Parses `const:V`, `random:LO:HI` or a θ file path; random draws take
    /// their seed from `seed_value`.
    pub fn parse(spec: &str, seed_value: u64) -> anyhow::Result<Self> {
        let num = |s: &str| -> anyhow::Result<f64> {
            s.parse::<f64>()
                .map_err(|_| Usage(format!("bad number '{s}' in --init '{spec}'")).into())
        };
        let parts: Vec<&str> = spec.split(':').collect();
        Ok(match parts.as_slice() {
            ["const", v] => ThetaInit::Constant { log_std: num(v)? },
            ["random", lo, hi] => ThetaInit::Random {
                lo: num(lo)?,
                hi: num(hi)?,
                seed: seed::derive(seed_value, &[0x1417]),
            },
            _ if parts.len() == 1 => ThetaInit::File { path: spec.into() },
            _ => bail!(Usage(format!("bad --init '{spec}' (const:V | random:LO:HI | PATH)"))),
        })
    }

    pub fn resolve(&self, id: DatasetId) -> anyhow::Result<ThetaParams> {
        Ok(match self {
            ThetaInit::Constant { log_std } => navsim::model_template(id, *log_std),
            ThetaInit::Random { lo, hi, seed } => {
                if !(lo < hi) {
                    bail!(Usage(format!("random init range [{lo}, {hi}) is empty")));
                }
                navsim::random_theta(id, *lo, *hi, *seed)
            }
            ThetaInit::File { path } => ThetaParams::load_json(path)?,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainRun {
    pub method: Method,
    pub dataset: PathBuf,
    pub init: ThetaInit,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub leo: Option<LeoConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nelder_mead: Option<NelderMeadConfig>,
    /// Solver used by the surrogate's evaluation.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub solver: Option<SolverConfig>,
}

impl TrainRun {
    pub fn solver(&self) -> SolverConfig {
        match (&self.leo, &self.nelder_mead, &self.solver) {
            (Some(l), _, _) => l.solver,
            (_, Some(n), _) => n.solver,
            (_, _, Some(s)) => *s,
            _ => SolverConfig::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalRun {
    pub theta: PathBuf,
    pub dataset: PathBuf,
    pub split: Split,
    pub solver: SolverConfig,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ToyMethod {
    Leo,
    UnrolledGd,
    UnrolledGn,
}

impl FromStr for ToyMethod {
    type Err = Usage;

    fn from_str(s: &str) -> Result<Self, Usage> {
        match s {
            "leo" => Ok(ToyMethod::Leo),
            "unrolled-gd" => Ok(ToyMethod::UnrolledGd),
            "unrolled-gn" => Ok(ToyMethod::UnrolledGn),
            _ => Err(Usage(format!("unknown toy method '{s}' (leo | unrolled-gd | unrolled-gn)"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ToyRun {
    pub method: ToyMethod,
    pub toy: ToyConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SurfaceRun {
    pub weights: PathBuf,
    pub grid: leo_core::toy1d::SurfaceGrid,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchRun {
    pub dataset: PathBuf,
    pub episode: usize,
    pub samples: usize,
    /// θ file; `None` fits the residual-moment surrogate on the training split.
    #[serde(default)]
    pub theta: Option<PathBuf>,
    pub solver: SolverConfig,
    pub hmc: HmcConfig,
}

pub fn load<T: DeserializeOwned>(path: &Path) -> anyhow::Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| LeoError::io(path, e))?;
    serde_json::from_str(&text)
        .map_err(|e| Usage(format!("invalid config {}: {e}", path.display())))
        .context("reading --config")
}

pub fn to_pretty<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("config serializes");
    s.push('\n');
    s
}

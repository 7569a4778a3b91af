//! JSON experiment configuration. Unknown fields are rejected.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::engine::{G0Mode, RunConfig, StopRule};
use crate::error::{Error, Result};
use crate::problems::{
    gen_quadratic, parse_libsvm, synthetic_logreg_dataset, LogRegProblem, Problem, QuadraticProblem,
    DEFAULT_LOGREG_LAMBDA,
};
use crate::rng::RngStream;
use crate::theory::{self, SmoothnessConstants, TheoryParams};
use crate::threepc::MethodSpec;

/// Default per-launch wall-clock limit.
pub const DEFAULT_TIME_LIMIT_SECS: f64 = 300.0;

fn default_logreg_lambda() -> f64 {
    DEFAULT_LOGREG_LAMBDA
}

fn default_samples() -> usize {
    1000
}

fn default_dim() -> usize {
    20
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ProblemSpec {
    Quadratic {
        n: usize,
        d: usize,
        lambda: f64,
        s: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        seed: Option<u64>,
    },
    QuadraticSnapshot {
        path: PathBuf,
    },
    Libsvm {
        path: PathBuf,
        n_clients: usize,
        #[serde(default = "default_logreg_lambda")]
        lambda: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        seed: Option<u64>,
    },
    SyntheticLogreg {
        #[serde(default = "default_samples")]
        samples: usize,
        #[serde(default = "default_dim")]
        dim: usize,
        n_clients: usize,
        #[serde(default = "default_logreg_lambda")]
        lambda: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        seed: Option<u64>,
    },
}

impl ProblemSpec {
    /// Build the problem. `run_seed` is used when the spec has no seed of its own.
    pub fn build(&self, run_seed: u64, base_dir: Option<&Path>) -> Result<Box<dyn Problem>> {
        let resolve = |p: &Path| -> PathBuf {
            match base_dir {
                Some(b) if p.is_relative() => b.join(p),
                _ => p.to_path_buf(),
            }
        };
        Ok(match self {
            ProblemSpec::Quadratic { n, d, lambda, s, seed } => {
                let rng = RngStream::new(seed.unwrap_or(run_seed)).derive("quadratic", 0);
                Box::new(gen_quadratic(*n, *d, *lambda, *s, &rng)?)
            }
            ProblemSpec::QuadraticSnapshot { path } => Box::new(QuadraticProblem::load(&resolve(path))?),
            ProblemSpec::Libsvm {
                path,
                n_clients,
                lambda,
                seed,
            } => {
                let data = parse_libsvm(&resolve(path))?;
                let rng = RngStream::new(seed.unwrap_or(run_seed)).derive("partition", 0);
                Box::new(LogRegProblem::from_dataset(&data, *n_clients, *lambda, &rng)?)
            }
            ProblemSpec::SyntheticLogreg {
                samples,
                dim,
                n_clients,
                lambda,
                seed,
            } => {
                let s = seed.unwrap_or(run_seed);
                let data = synthetic_logreg_dataset(*samples, *dim, &RngStream::new(s).derive("dataset", 0));
                let rng = RngStream::new(s).derive("partition", 0);
                Box::new(LogRegProblem::from_dataset(&data, *n_clients, *lambda, &rng)?)
            }
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepsizeRule {
    /// `1 / (L- + L+ sqrt(B/A))`.
    Noncvx,
    /// `min{1 / (L- + L+ sqrt(2B/A)), A / (2 mu)}`.
    Pl,
}

/// Either a theoretical rule or an explicit value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StepsizeSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rule: Option<StepsizeRule>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub value: Option<f64>,
}

impl Default for StepsizeSpec {
    fn default() -> Self {
        StepsizeSpec {
            rule: Some(StepsizeRule::Noncvx),
            value: None,
        }
    }
}

impl StepsizeSpec {
    pub fn resolve(&self, c: &SmoothnessConstants, tp: &TheoryParams) -> Result<f64> {
        match (self.rule, self.value) {
            (Some(StepsizeRule::Noncvx), None) => Ok(theory::stepsize_noncvx(c, tp)),
            (Some(StepsizeRule::Pl), None) => theory::stepsize_pl(c, tp),
            (None, Some(v)) if v > 0.0 && v.is_finite() => Ok(v),
            (None, Some(v)) => Err(Error::config(format!("stepsize value {v} must be positive"))),
            _ => Err(Error::config("stepsize needs exactly one of 'rule' or 'value'")),
        }
    }
}

fn one() -> f64 {
    1.0
}

fn default_rounds() -> usize {
    10_000
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub problem: ProblemSpec,
    pub method: MethodSpec,
    #[serde(default)]
    pub stepsize: StepsizeSpec,
    #[serde(default = "one")]
    pub stepsize_multiplier: f64,
    #[serde(default = "default_rounds")]
    pub max_rounds: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub g0_mode: G0Mode,
    #[serde(default)]
    pub stop: StopRule,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub threads: Option<usize>,
}

/// Everything derived from a config and its problem.
#[derive(Debug, Clone, Serialize)]
pub struct Resolved {
    pub run: RunConfig,
    pub theory: TheoryParams,
    pub constants: SmoothnessConstants,
    pub dim: usize,
    pub n_clients: usize,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json(&text)
    }

    pub fn resolve(&self, problem: &dyn Problem) -> Result<Resolved> {
        let d = problem.dim();
        let n = problem.n_clients();
        let theory = self
            .method
            .theory_params(d, n)
            .map_err(|e| Error::config(e.to_string()))?;
        let constants = problem.constants();
        let gamma = self.stepsize.resolve(&constants, &theory)?;
        if !(self.stepsize_multiplier > 0.0 && self.stepsize_multiplier.is_finite()) {
            return Err(Error::config("stepsize_multiplier must be positive"));
        }
        let mut stop = self.stop.clone();
        if stop.wall_clock_limit_secs.is_none() {
            stop.wall_clock_limit_secs = Some(DEFAULT_TIME_LIMIT_SECS);
        }
        Ok(Resolved {
            run: RunConfig {
                method: self.method.clone(),
                gamma,
                stepsize_multiplier: self.stepsize_multiplier,
                max_rounds: self.max_rounds,
                seed: self.seed,
                g0_mode: self.g0_mode,
                stop,
                threads: self.threads,
                keep_iterates: false,
            },
            theory,
            constants,
            dim: d,
            n_clients: n,
        })
    }
}

//! The distributed training loop.
//!
//! Each round the server broadcasts `x^{t+1} = x^t - gamma g^t`, every worker
//! computes its local gradient and runs its mechanism, and the server rebuilds
//! each worker's estimate from the messages alone before averaging.

use std::time::{Duration, Instant};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::compressors::{CompressCtx, Compressed};
use crate::error::{Error, Result};
use crate::problems::Problem;
use crate::rng::RngStream;
use crate::theory;
use crate::threepc::{replay, total_bits, MechanismState, Message, MethodSpec, StepCtx};
use crate::vector::DenseVector;

/// Iterates with norm above this count as diverged.
pub const DIVERGENCE_NORM: f64 = 1e100;

/// How the initial estimates `g_i^0` are formed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum G0Mode {
    #[default]
    FullGradient,
    Compressed,
    Zero,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StopRule {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grad_norm_sq_tol: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grad_norm_tol: Option<f64>,
    /// Stop once `f(x) - f*` falls to this level (needs a known minimum).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub suboptimality_tol: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bit_budget_per_worker: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wall_clock_limit_secs: Option<f64>,
}

impl StopRule {
    fn converged(&self, grad_norm_sq: f64, subopt: Option<f64>) -> bool {
        if let Some(tol) = self.grad_norm_sq_tol {
            if grad_norm_sq <= tol {
                return true;
            }
        }
        if let Some(tol) = self.grad_norm_tol {
            if grad_norm_sq.sqrt() < tol {
                return true;
            }
        }
        if let (Some(tol), Some(gap)) = (self.suboptimality_tol, subopt) {
            if gap <= tol {
                return true;
            }
        }
        false
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub method: MethodSpec,
    /// Base stepsize; the effective stepsize is `gamma * stepsize_multiplier`.
    pub gamma: f64,
    pub stepsize_multiplier: f64,
    pub max_rounds: usize,
    pub seed: u64,
    pub g0_mode: G0Mode,
    pub stop: StopRule,
    /// Worker pool size; `None` runs on the current rayon pool.
    pub threads: Option<usize>,
    /// Keep every iterate in the output.
    pub keep_iterates: bool,
}

impl RunConfig {
    pub fn new(method: MethodSpec, gamma: f64, max_rounds: usize) -> Self {
        RunConfig {
            method,
            gamma,
            stepsize_multiplier: 1.0,
            max_rounds,
            seed: 0,
            g0_mode: G0Mode::FullGradient,
            stop: StopRule::default(),
            threads: None,
            keep_iterates: false,
        }
    }

    pub fn effective_stepsize(&self) -> f64 {
        self.gamma * self.stepsize_multiplier
    }

    fn validate(&self, problem: &dyn Problem) -> Result<()> {
        let g = self.effective_stepsize();
        if !(g > 0.0 && g.is_finite()) {
            return Err(Error::config(format!("stepsize must be positive, got {g}")));
        }
        if self.max_rounds == 0 {
            return Err(Error::config("max_rounds must be at least 1"));
        }
        if problem.dim() == 0 || problem.n_clients() == 0 {
            return Err(Error::config("problem has no dimensions or no clients"));
        }
        self.method.validate(problem.dim(), problem.n_clients())
    }
}

/// One row of the run log.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub t: usize,
    pub f: f64,
    pub grad_norm_sq: f64,
    #[serde(rename = "G_t")]
    pub g_t: f64,
    pub bits_cum_per_worker: f64,
    pub transmitted_fraction: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    Converged,
    MaxRounds,
    Diverged,
    BitBudget,
    TimeLimit,
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub records: Vec<RunRecord>,
    /// `||x^{t+1} - x^t||^2`, one entry per completed round.
    pub move_sq: Vec<f64>,
    /// `f(x^t) - f*` per record, when the minimum is known.
    pub suboptimality: Vec<Option<f64>>,
    pub x_final: DenseVector,
    pub iterates: Vec<DenseVector>,
    pub termination: Termination,
    pub stepsize: f64,
}

impl RunOutput {
    pub fn last(&self) -> &RunRecord {
        self.records.last().expect("a run always has its initial record")
    }

    /// Bits per worker at the first record meeting the stop rule.
    pub fn bits_to_tolerance(&self) -> Option<f64> {
        (self.termination == Termination::Converged).then(|| self.last().bits_cum_per_worker)
    }

    pub fn g_series(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.g_t).collect()
    }
}

struct Worker {
    state: MechanismState,
    /// Server-side copy, rebuilt from messages only.
    server_g: DenseVector,
}

/// `(1/n) sum ||g_i - grad_i||^2`, or `||mean g_i - mean grad_i||^2` when aggregated.
pub fn compute_g(estimates: &[&DenseVector], grads: &[&DenseVector], aggregated: bool) -> f64 {
    let n = estimates.len() as f64;
    if aggregated {
        let d = estimates[0].len();
        let mut diff = DenseVector::zeros(d);
        for (g, y) in estimates.iter().zip(grads) {
            diff.add_assign(g);
            diff.axpy(-1.0, y);
        }
        diff.sq_norm() / (n * n)
    } else {
        estimates.iter().zip(grads).map(|(g, y)| g.sq_dist(y)).sum::<f64>() / n
    }
}

/// Wire cost of one step's messages.
pub fn bits_for(messages: &[Message], d: usize) -> u64 {
    total_bits(messages, d)
}

fn mean_of<'a>(vs: impl Iterator<Item = &'a DenseVector>, d: usize, n: usize) -> DenseVector {
    let mut acc = DenseVector::zeros(d);
    for v in vs {
        acc.add_assign(v);
    }
    acc.scale(1.0 / n as f64);
    acc
}

fn initial_estimate(
    cfg: &RunConfig,
    grad: &DenseVector,
    worker: usize,
    n: usize,
    root: &RngStream,
) -> Result<(DenseVector, u64)> {
    let d = grad.len();
    Ok(match cfg.g0_mode {
        G0Mode::FullGradient => (grad.clone(), d as u64 * crate::threepc::VALUE_BITS),
        G0Mode::Zero => (DenseVector::zeros(d), 0),
        G0Mode::Compressed => match cfg.method.primary_compressor() {
            None => (grad.clone(), d as u64 * crate::threepc::VALUE_BITS),
            Some(c) => {
                let shared = root.derive("init", 0);
                let private = shared.derive("worker", worker as u64);
                let ctx = CompressCtx {
                    worker,
                    n_workers: n,
                    private: &private,
                    shared: &shared,
                    coin: None,
                };
                let out = c.compress(grad, &ctx)?;
                let msg = match out {
                    Compressed::Identity => Some(Message::Replace(grad.clone())),
                    other => Message::from_compressed_delta(other, grad),
                };
                let msgs: Vec<Message> = msg.into_iter().collect();
                (replay(&DenseVector::zeros(d), &msgs), total_bits(&msgs, d))
            }
        },
    })
}

/// Run the training loop until a stop rule fires or `max_rounds` rounds are done.
pub fn run(problem: &dyn Problem, cfg: &RunConfig) -> Result<RunOutput> {
    cfg.validate(problem)?;
    match cfg.threads {
        None => run_inner(problem, cfg),
        Some(k) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(k)
                .build()
                .map_err(|e| Error::config(format!("cannot build worker pool: {e}")))?;
            pool.install(|| run_inner(problem, cfg))
        }
    }
}

fn run_inner(problem: &dyn Problem, cfg: &RunConfig) -> Result<RunOutput> {
    let start = Instant::now();
    let limit = cfg.stop.wall_clock_limit_secs.map(Duration::from_secs_f64);
    let d = problem.dim();
    let n = problem.n_clients();
    let gamma = cfg.effective_stepsize();
    let root = RngStream::new(cfg.seed);
    let aggregated = cfg.method.uses_aggregated_error();
    let coin_p = cfg.method.shared_coin_p();
    let smooth: Vec<f64> = match &cfg.method {
        MethodSpec::Lag {
            trigger: crate::threepc::Trigger::Iterate,
            ..
        }
        | MethodSpec::Clag {
            trigger: crate::threepc::Trigger::Iterate,
            ..
        } => (0..n).map(|i| problem.client_smoothness(i)).collect(),
        _ => vec![0.0; n],
    };

    let mut x = problem.x0();
    let init: Vec<(DenseVector, DenseVector, u64)> = (0..n)
        .into_par_iter()
        .map(|i| {
            let grad = problem.client_grad(i, &x);
            let (g, bits) = initial_estimate(cfg, &grad, i, n, &root)?;
            Ok((grad, g, bits))
        })
        .collect::<Result<_>>()?;
    let mut bits_total: u64 = init.iter().map(|w| w.2).sum();
    let mut workers: Vec<Worker> = init
        .into_iter()
        .map(|(grad, g, _)| Worker {
            state: MechanismState { h: g.clone(), y: grad },
            server_g: g,
        })
        .collect();

    let mut records = Vec::new();
    let mut move_sq = Vec::new();
    let mut subopt = Vec::new();
    let mut iterates = Vec::new();
    let mut fired_fraction = 1.0;

    let mut t = 0;
    let termination = loop {
        let full_grad = mean_of(workers.iter().map(|w| &w.state.y), d, n);
        let gns = full_grad.sq_norm();
        let g_t = compute_g(
            &workers.iter().map(|w| &w.server_g).collect::<Vec<_>>(),
            &workers.iter().map(|w| &w.state.y).collect::<Vec<_>>(),
            aggregated,
        );
        let gap = problem.suboptimality(&x);
        records.push(RunRecord {
            t,
            f: problem.value(&x),
            grad_norm_sq: gns,
            g_t,
            bits_cum_per_worker: bits_total as f64 / n as f64,
            transmitted_fraction: fired_fraction,
        });
        subopt.push(gap);
        if cfg.keep_iterates {
            iterates.push(x.clone());
        }
        if !gns.is_finite() || !x.is_finite() || x.sq_norm().sqrt() > DIVERGENCE_NORM {
            break Termination::Diverged;
        }
        if cfg.stop.converged(gns, gap) {
            break Termination::Converged;
        }
        if let Some(budget) = cfg.stop.bit_budget_per_worker {
            if bits_total as f64 / n as f64 >= budget as f64 {
                break Termination::BitBudget;
            }
        }
        if limit.is_some_and(|l| start.elapsed() >= l) {
            break Termination::TimeLimit;
        }
        if t >= cfg.max_rounds {
            break Termination::MaxRounds;
        }

        let g = mean_of(workers.iter().map(|w| &w.server_g), d, n);
        let x_next = {
            let mut v = x.clone();
            v.axpy(-gamma, &g);
            v
        };
        let step_sq = x_next.sq_dist(&x);
        move_sq.push(step_sq);
        if !x_next.is_finite() {
            x = x_next;
            t += 1;
            records.push(RunRecord {
                t,
                f: f64::NAN,
                grad_norm_sq: f64::NAN,
                g_t: f64::NAN,
                bits_cum_per_worker: bits_total as f64 / n as f64,
                transmitted_fraction: 0.0,
            });
            subopt.push(None);
            break Termination::Diverged;
        }

        let round = root.derive("round", t as u64);
        let coin = coin_p.map(|p| round.derive("coin", 0).coin(p));
        let results: Vec<(u64, bool)> = workers
            .par_iter_mut()
            .enumerate()
            .map(|(i, w)| -> Result<(u64, bool)> {
                let grad = problem.client_grad(i, &x_next);
                let private = round.derive("worker", i as u64);
                let ctx = StepCtx {
                    worker: i,
                    n_workers: n,
                    private: &private,
                    shared: &round,
                    coin,
                    iterate_move_sq: step_sq,
                    client_smoothness: smooth[i],
                };
                let out = cfg.method.step(&w.state, &grad, &ctx)?;
                let bits = bits_for(&out.messages, d);
                w.server_g = replay(&w.server_g, &out.messages);
                debug_assert_eq!(w.server_g, out.g_next);
                w.state = MechanismState { h: out.g_next, y: grad };
                Ok((bits, out.fired))
            })
            .collect::<Result<_>>()?;
        bits_total += results.iter().map(|r| r.0).sum::<u64>();
        fired_fraction = results.iter().filter(|r| r.1).count() as f64 / n as f64;
        x = x_next;
        t += 1;
    };

    Ok(RunOutput {
        records,
        move_sq,
        suboptimality: subopt,
        x_final: x,
        iterates,
        termination,
        stepsize: gamma,
    })
}

/// Outcome of checking `G^{t+1} <= (1 - A) G^t + B L^2 ||x^{t+1} - x^t||^2`.
#[derive(Debug, Clone, Serialize)]
pub struct RecursionReport {
    pub rounds_checked: usize,
    pub violations: usize,
    /// Largest excess of the left side over the right side (negative when slack).
    pub worst_excess: f64,
    pub pass: bool,
}

/// Pointwise check on a single run.
pub fn check_key_recursion(out: &RunOutput, a: f64, b: f64, l_sq: f64) -> RecursionReport {
    let g = out.g_series();
    let mut violations = 0;
    let mut worst = f64::NEG_INFINITY;
    let rounds = out.move_sq.len().min(g.len().saturating_sub(1));
    for t in 0..rounds {
        let rhs = (1.0 - a) * g[t] + b * l_sq * out.move_sq[t];
        let lhs = g[t + 1];
        let excess = lhs - rhs;
        worst = worst.max(excess);
        if excess > crate::threepc::verify::FP_SLACK * rhs.max(lhs) + f64::MIN_POSITIVE {
            violations += 1;
        }
    }
    RecursionReport {
        rounds_checked: rounds,
        violations,
        worst_excess: worst,
        pass: violations == 0,
    }
}

/// Ensemble check: per round, the mean of `lhs - rhs` over runs must not
/// exceed three standard errors.
pub fn check_key_recursion_ensemble(runs: &[RunOutput], a: f64, b: f64, l_sq: f64) -> RecursionReport {
    let rounds = runs
        .iter()
        .map(|r| r.move_sq.len().min(r.records.len().saturating_sub(1)))
        .min()
        .unwrap_or(0);
    let m = runs.len() as f64;
    let mut violations = 0;
    let mut worst = f64::NEG_INFINITY;
    for t in 0..rounds {
        let diffs: Vec<f64> = runs
            .iter()
            .map(|r| r.records[t + 1].g_t - ((1.0 - a) * r.records[t].g_t + b * l_sq * r.move_sq[t]))
            .collect();
        let scale: f64 = runs
            .iter()
            .map(|r| r.records[t + 1].g_t.abs() + r.records[t].g_t.abs())
            .sum::<f64>()
            / m;
        let mean = diffs.iter().sum::<f64>() / m;
        let var = diffs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (m - 1.0).max(1.0);
        let se = (var / m).sqrt();
        worst = worst.max(mean);
        if mean > 3.0 * se + crate::threepc::verify::FP_SLACK * scale {
            violations += 1;
        }
    }
    RecursionReport {
        rounds_checked: rounds,
        violations,
        worst_excess: worst,
        pass: violations == 0 && rounds > 0,
    }
}

/// Outcome of a convergence-bound check.
#[derive(Debug, Clone, Serialize)]
pub struct BoundReport {
    pub checked: usize,
    pub violations: usize,
    /// Largest observed `value / bound`.
    pub max_ratio: f64,
    pub pass: bool,
}

/// `(1/T) sum_{t<T} ||grad f(x^t)||^2 <= 2 Delta0 / (gamma T) + G0 / (A T)` for every prefix `T`.
pub fn check_noncvx_bound(out: &RunOutput, delta0: f64, a: f64) -> BoundReport {
    let g0 = out.records[0].g_t;
    let mut sum = 0.0;
    let mut violations = 0;
    let mut max_ratio: f64 = 0.0;
    let mut checked = 0;
    for (i, r) in out.records.iter().enumerate() {
        if !r.grad_norm_sq.is_finite() {
            violations += 1;
            break;
        }
        sum += r.grad_norm_sq;
        let t = i + 1;
        let avg = sum / t as f64;
        let bound = theory::bound_noncvx(delta0, out.stepsize, t, g0, a);
        max_ratio = max_ratio.max(avg / bound);
        if avg > bound * (1.0 + crate::threepc::verify::FP_SLACK) {
            violations += 1;
        }
        checked += 1;
    }
    BoundReport {
        checked,
        violations,
        max_ratio,
        pass: violations == 0,
    }
}

/// `f(x^t) - f* <= (1 - gamma mu)^t (Delta0 + gamma G0 / A)` at every recorded `t`.
pub fn check_pl_bound(out: &RunOutput, delta0: f64, mu: f64, a: f64) -> Result<BoundReport> {
    let g0 = out.records[0].g_t;
    let mut violations = 0;
    let mut max_ratio: f64 = 0.0;
    let mut checked = 0;
    for (r, gap) in out.records.iter().zip(&out.suboptimality) {
        let gap = gap.ok_or_else(|| Error::domain("the PL check needs a known minimum"))?;
        let bound = theory::bound_pl(delta0, out.stepsize, mu, r.t, g0, a);
        if bound > 0.0 {
            max_ratio = max_ratio.max(gap / bound);
        }
        if gap > bound * (1.0 + crate::threepc::verify::FP_SLACK) + f64::MIN_POSITIVE {
            violations += 1;
        }
        checked += 1;
    }
    Ok(BoundReport {
        checked,
        violations,
        max_ratio,
        pass: violations == 0,
    })
}

/// `f(x^0) - f*`, using the problem's lower bound when the minimum is unknown.
pub fn initial_gap(problem: &dyn Problem) -> f64 {
    let x0 = problem.x0();
    problem
        .suboptimality(&x0)
        .unwrap_or_else(|| problem.value(&x0) - problem.f_lower_bound())
}

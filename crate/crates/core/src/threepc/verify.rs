//! Monte-Carlo check of the three point inequality
//! `E||C_{h,y}(x) - x||^2 <= (1 - A)||h - y||^2 + B||x - y||^2`.

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::Serialize;
use statrs::distribution::{ContinuousCDF, Normal};

use super::{MechanismState, MethodSpec, StepCtx};
use crate::error::{Error, Result};
use crate::rng::RngStream;
use crate::vector::DenseVector;

/// Relative slack allowed for round-off in a deterministic comparison.
pub const FP_SLACK: f64 = 1e-12;

#[derive(Debug, Clone, Serialize)]
pub struct VerifyOptions {
    pub d: usize,
    pub n_workers: usize,
    /// Number of random Gaussian triples.
    pub random_triples: usize,
    /// Add the structured colinear triples that make Young's inequality tight.
    pub structured: bool,
    /// Draws per triple for randomized methods.
    pub trials: usize,
    pub seed: u64,
    /// Family-wise significance in standard errors: the per-triple threshold is
    /// raised so that the chance of any false alarm across all triples matches a
    /// single test at this many standard errors.
    pub sigmas: f64,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        VerifyOptions {
            d: 20,
            n_workers: 4,
            random_triples: 200,
            structured: true,
            trials: 400,
            seed: 0,
            sigmas: 3.0,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct VerifyReport {
    pub method: String,
    pub a: f64,
    pub b: f64,
    pub triples: usize,
    pub trials: usize,
    /// Largest `mean lhs / rhs` over all triples.
    pub max_ratio: f64,
    /// Index of the triple that attained `max_ratio`.
    pub worst_triple: usize,
    /// Per-triple threshold in standard errors after the family-wise correction.
    pub z: f64,
    /// Triples where the mean exceeded the bound by more than `z` standard errors.
    pub violations: usize,
    pub pass: bool,
}

struct Triple {
    h: DenseVector,
    y: DenseVector,
    x: DenseVector,
}

fn gaussian(d: usize, scale: f64, rng: &mut impl Rng) -> DenseVector {
    DenseVector::from_vec((0..d).map(|_| scale * rng.sample::<f64, _>(StandardNormal)).collect())
}

fn build_triples(opts: &VerifyOptions) -> Vec<Triple> {
    let d = opts.d;
    let root = RngStream::new(opts.seed).derive("triples", 0);
    let mut out = Vec::new();
    for i in 0..opts.random_triples {
        let mut rng = root.derive("random", i as u64).rng();
        // vary the relative sizes so both terms of the bound get exercised
        let sh = 10f64.powf(rng.gen_range(-2.0..2.0));
        let sx = 10f64.powf(rng.gen_range(-2.0..2.0));
        let y = gaussian(d, 1.0, &mut rng);
        let h = y.add(&gaussian(d, sh, &mut rng));
        let x = y.add(&gaussian(d, sx, &mut rng));
        out.push(Triple { h, y, x });
    }
    if opts.structured {
        let mut rng = root.derive("structured", 0).rng();
        let ratios: Vec<f64> = (0..=24).map(|k| 10f64.powf(-3.0 + 0.25 * k as f64)).collect();
        for r in ratios {
            let u = DenseVector::from_vec((0..d).map(|_| if rng.gen::<bool>() { 1.0 } else { -1.0 }).collect());
            let base = gaussian(d, 1.0, &mut rng);
            let h = base;
            let y = h.add(&u);
            let x = y.add(&u.scaled(r));
            out.push(Triple { h, y, x });
        }
        // degenerate directions
        let u = gaussian(d, 1.0, &mut rng);
        out.push(Triple {
            h: u.clone(),
            y: u.clone(),
            x: u.add(&gaussian(d, 1.0, &mut rng)),
        });
        out.push(Triple {
            h: gaussian(d, 1.0, &mut rng),
            y: u.clone(),
            x: u,
        });
    }
    out
}

/// `z` with `P(Z > z) = P(Z > sigmas) / tests` for standard normal `Z`.
pub fn family_threshold(sigmas: f64, tests: usize) -> f64 {
    let n = Normal::standard();
    let tail = (1.0 - n.cdf(sigmas)) / tests.max(1) as f64;
    n.inverse_cdf(1.0 - tail)
}

struct TripleOutcome {
    mean: f64,
    se: f64,
    rhs: f64,
}

/// Estimate both sides of the inequality on a catalog of triples.
pub fn verify_3pc_inequality(method: &MethodSpec, a: f64, b: f64, opts: &VerifyOptions) -> Result<VerifyReport> {
    if method.uses_aggregated_error() {
        return Err(Error::domain(format!(
            "{} does not bound the per-worker error; check it through the aggregated recursion",
            method.name()
        )));
    }
    method.validate(opts.d, opts.n_workers)?;
    let trials = if method.is_deterministic() {
        1
    } else {
        opts.trials.max(2)
    };
    let triples = build_triples(opts);
    let draws = RngStream::new(opts.seed).derive("draws", 0);

    let outcomes: Vec<TripleOutcome> = triples
        .par_iter()
        .enumerate()
        .map(|(i, t)| -> Result<TripleOutcome> {
            let state = MechanismState {
                h: t.h.clone(),
                y: t.y.clone(),
            };
            let mut sum = 0.0;
            let mut sum_sq = 0.0;
            let per_triple = draws.derive("triple", i as u64);
            for j in 0..trials {
                let shared = per_triple.derive("trial", j as u64);
                let private = shared.derive("worker", 0);
                let ctx = StepCtx::simple(0, opts.n_workers, &private, &shared);
                let out = method.step(&state, &t.x, &ctx)?;
                let e = out.g_next.sq_dist(&t.x);
                sum += e;
                sum_sq += e * e;
            }
            let m = trials as f64;
            let mean = sum / m;
            let se = if trials > 1 {
                let var = ((sum_sq - m * mean * mean) / (m - 1.0)).max(0.0);
                (var / m).sqrt()
            } else {
                0.0
            };
            let rhs = (1.0 - a) * t.h.sq_dist(&t.y) + b * t.x.sq_dist(&t.y);
            Ok(TripleOutcome { mean, se, rhs })
        })
        .collect::<Result<_>>()?;

    let z = family_threshold(opts.sigmas, outcomes.len());
    let mut max_ratio = 0.0f64;
    let mut worst = 0;
    let mut violations = 0;
    for (i, o) in outcomes.iter().enumerate() {
        let scale = o.rhs.max(o.mean);
        let allowed = o.rhs + FP_SLACK * scale + z * o.se;
        if o.mean > allowed {
            violations += 1;
        }
        let ratio = if o.rhs > 0.0 {
            o.mean / o.rhs
        } else if o.mean > 0.0 {
            f64::INFINITY
        } else {
            0.0
        };
        if ratio > max_ratio {
            max_ratio = ratio;
            worst = i;
        }
    }
    Ok(VerifyReport {
        method: method.name().to_owned(),
        a,
        b,
        triples: outcomes.len(),
        trials,
        max_ratio,
        worst_triple: worst,
        z,
        violations,
        pass: violations == 0,
    })
}

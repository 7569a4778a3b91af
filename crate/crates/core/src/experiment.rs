//! Experiment drivers behind the command line: single runs, stepsize sweeps,
//! CLAG `(K, zeta)` grids, inequality verification and instance generation.

use std::io::Write;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::compressors::CompressorSpec;
use crate::config::{ExperimentConfig, Resolved};
use crate::engine::{self, RunConfig, RunOutput, Termination};
use crate::error::{Error, Result};
use crate::problems::{gen_quadratic, Problem, QuadraticProblem};
use crate::rng::RngStream;
use crate::theory::SmoothnessConstants;
use crate::threepc::{verify_3pc_inequality, CoinMode, MethodSpec, Trigger, VerifyOptions, VerifyReport};

/// `2^0, 2^1, ..., 2^11`.
pub fn default_multipliers() -> Vec<f64> {
    (0..12).map(|k| 2f64.powi(k)).collect()
}

/// `{0, 2^0, ..., 2^11}`.
pub fn default_zeta_grid() -> Vec<f64> {
    std::iter::once(0.0).chain(default_multipliers()).collect()
}

/// `points` values of `K` spread evenly over `1..=d`, always including both ends.
pub fn even_k_grid(d: usize, points: usize) -> Vec<usize> {
    if points <= 1 || d == 1 {
        return vec![d];
    }
    let mut ks: Vec<usize> = (0..points)
        .map(|j| 1 + ((d - 1) as f64 * j as f64 / (points - 1) as f64).round() as usize)
        .collect();
    ks.dedup();
    ks
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SelectionMetric {
    #[default]
    BitsToTolerance,
    FinalGradNormSq,
}

fn default_points() -> usize {
    5
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    pub base: ExperimentConfig,
    #[serde(default = "default_multipliers")]
    pub multipliers: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k_grid: Option<Vec<usize>>,
    /// Number of evenly spread `K` values when `k_grid` is absent.
    #[serde(default = "default_points")]
    pub k_points: usize,
    #[serde(default = "default_zeta_grid")]
    pub zeta_grid: Vec<f64>,
    #[serde(default)]
    pub selection: SelectionMetric,
}

impl SweepSpec {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        serde_json::from_str(&text).map_err(|e| Error::config(e.to_string()))
    }
}

/// One launch of a sweep.
#[derive(Debug, Clone, Serialize)]
pub struct SweepRow {
    pub multiplier: f64,
    pub termination: Termination,
    pub rounds: usize,
    pub bits: f64,
    pub final_grad_norm_sq: f64,
    /// `None` when the run failed before starting.
    pub error: Option<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepResult {
    pub rows: Vec<SweepRow>,
    pub best_multiplier: Option<f64>,
    /// Selected value: bits-to-tolerance or final squared gradient norm; infinite when nothing converged.
    pub best_value: f64,
}

fn score(row: &SweepRow, metric: SelectionMetric) -> Option<f64> {
    match metric {
        SelectionMetric::BitsToTolerance => (row.termination == Termination::Converged).then_some(row.bits),
        SelectionMetric::FinalGradNormSq => {
            (row.termination != Termination::Diverged && row.error.is_none() && row.final_grad_norm_sq.is_finite())
                .then_some(row.final_grad_norm_sq)
        }
    }
}

/// Pick the smallest score; ties go to the smaller multiplier.
pub fn select_best(rows: &[SweepRow], metric: SelectionMetric) -> (Option<f64>, f64) {
    let mut best: Option<(f64, f64)> = None;
    for r in rows {
        if let Some(v) = score(r, metric) {
            let better = match best {
                None => true,
                Some((bv, bm)) => v < bv || (v == bv && r.multiplier < bm),
            };
            if better {
                best = Some((v, r.multiplier));
            }
        }
    }
    match best {
        Some((v, m)) => (Some(m), v),
        None => (None, f64::INFINITY),
    }
}

fn sweep_row(problem: &dyn Problem, base: &RunConfig, multiplier: f64) -> SweepRow {
    let cfg = RunConfig {
        stepsize_multiplier: multiplier,
        threads: Some(1),
        ..base.clone()
    };
    match engine::run(problem, &cfg) {
        Ok(out) => SweepRow {
            multiplier,
            termination: out.termination,
            rounds: out.last().t,
            bits: out.last().bits_cum_per_worker,
            final_grad_norm_sq: out.last().grad_norm_sq,
            error: None,
        },
        Err(e) => SweepRow {
            multiplier,
            termination: Termination::Diverged,
            rounds: 0,
            bits: f64::INFINITY,
            final_grad_norm_sq: f64::INFINITY,
            error: Some(e.to_string()),
        },
    }
}

/// Run `base` at every multiplier.
pub fn sweep(problem: &dyn Problem, base: &RunConfig, multipliers: &[f64], metric: SelectionMetric) -> SweepResult {
    let rows: Vec<SweepRow> = multipliers.par_iter().map(|&m| sweep_row(problem, base, m)).collect();
    let (best_multiplier, best_value) = select_best(&rows, metric);
    SweepResult {
        rows,
        best_multiplier,
        best_value,
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct HeatmapCell {
    pub k: usize,
    pub zeta: f64,
    pub best_multiplier: Option<f64>,
    pub bits: f64,
    /// "ef21" for the zeta = 0 column, "lag" for the K = d row.
    pub special: String,
    pub status: String,
}

fn clag_method(k: usize, zeta: f64, trigger: Trigger) -> MethodSpec {
    MethodSpec::Clag {
        zeta,
        compressor: CompressorSpec::TopK { k },
        trigger,
    }
}

/// Stepsize for a given method under the base config's rule.
fn base_for(cfg: &ExperimentConfig, problem: &dyn Problem, method: MethodSpec) -> Result<RunConfig> {
    let mut c = cfg.clone();
    c.method = method;
    Ok(c.resolve(problem)?.run)
}

/// Every `(K, zeta)` cell of the CLAG grid, each tuned over `multipliers`.
pub fn heatmap(
    problem: &dyn Problem,
    base: &ExperimentConfig,
    k_grid: &[usize],
    zeta_grid: &[f64],
    multipliers: &[f64],
    metric: SelectionMetric,
) -> Result<Vec<HeatmapCell>> {
    if k_grid.is_empty() || zeta_grid.is_empty() || multipliers.is_empty() {
        return Err(Error::config("heatmap grids must be nonempty"));
    }
    let d = problem.dim();
    let trigger = match &base.method {
        MethodSpec::Clag { trigger, .. } | MethodSpec::Lag { trigger, .. } => *trigger,
        _ => Trigger::Gradient,
    };
    let cells: Vec<(usize, f64)> = k_grid
        .iter()
        .flat_map(|&k| zeta_grid.iter().map(move |&z| (k, z)))
        .collect();
    let jobs: Vec<(usize, f64)> = cells
        .iter()
        .enumerate()
        .flat_map(|(c, _)| multipliers.iter().map(move |&m| (c, m)))
        .collect();
    let bases: Vec<std::result::Result<RunConfig, String>> = cells
        .iter()
        .map(|&(k, z)| base_for(base, problem, clag_method(k, z, trigger)).map_err(|e| e.to_string()))
        .collect();
    let rows: Vec<(usize, SweepRow)> = jobs
        .par_iter()
        .map(|&(c, m)| {
            let row = match &bases[c] {
                Ok(b) => sweep_row(problem, b, m),
                Err(e) => SweepRow {
                    multiplier: m,
                    termination: Termination::Diverged,
                    rounds: 0,
                    bits: f64::INFINITY,
                    final_grad_norm_sq: f64::INFINITY,
                    error: Some(e.clone()),
                },
            };
            (c, row)
        })
        .collect();
    let mut out = Vec::with_capacity(cells.len());
    for (c, &(k, zeta)) in cells.iter().enumerate() {
        let cell_rows: Vec<SweepRow> = rows.iter().filter(|r| r.0 == c).map(|r| r.1.clone()).collect();
        let (best_multiplier, bits) = select_best(&cell_rows, metric);
        let status = if let Some(e) = cell_rows.iter().find_map(|r| r.error.clone()) {
            format!("error: {e}")
        } else if best_multiplier.is_some() {
            "ok".to_owned()
        } else if cell_rows.iter().all(|r| r.termination == Termination::Diverged) {
            "all_diverged".to_owned()
        } else {
            "not_converged".to_owned()
        };
        let special = match (zeta == 0.0, k == d) {
            (true, true) => "ef21+lag",
            (true, false) => "ef21",
            (false, true) => "lag",
            _ => "",
        };
        out.push(HeatmapCell {
            k,
            zeta,
            best_multiplier,
            bits,
            special: special.to_owned(),
            status,
        });
    }
    Ok(out)
}

fn fmt_real(v: f64) -> String {
    if v.is_infinite() {
        "inf".to_owned()
    } else {
        format!("{v}")
    }
}

pub fn write_heatmap_csv(path: &Path, cells: &[HeatmapCell]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["K", "zeta", "best_multiplier", "bits", "special", "status"])?;
    for c in cells {
        w.write_record([
            c.k.to_string(),
            fmt_real(c.zeta),
            c.best_multiplier.map(fmt_real).unwrap_or_default(),
            fmt_real(c.bits),
            c.special.clone(),
            c.status.clone(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_sweep_csv(path: &Path, result: &SweepResult) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record([
        "multiplier",
        "termination",
        "rounds",
        "bits",
        "final_grad_norm_sq",
        "error",
    ])?;
    for r in &result.rows {
        w.write_record([
            fmt_real(r.multiplier),
            serde_json::to_value(r.termination)?
                .as_str()
                .unwrap_or_default()
                .to_owned(),
            r.rounds.to_string(),
            fmt_real(r.bits),
            fmt_real(r.final_grad_norm_sq),
            r.error.clone().unwrap_or_default(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// `t, f, grad_norm_sq, G_t, bits_cum_per_worker, transmitted_fraction`.
pub fn write_records_csv(path: &Path, out: &RunOutput) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in &out.records {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

/// Write `contents` next to `path` and rename it into place.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<()> {
    let tmp = path.with_extension("tmp");
    {
        let mut f = std::fs::File::create(&tmp)?;
        f.write_all(contents)?;
        f.sync_all()?;
    }
    std::fs::rename(&tmp, path)?;
    Ok(())
}

#[derive(Debug, Serialize)]
pub struct RunMeta<'a> {
    pub config: &'a ExperimentConfig,
    pub resolved: &'a Resolved,
    pub stepsize: f64,
    pub termination: Termination,
    pub rounds: usize,
    pub delta0: f64,
}

/// Run one experiment and write `records.csv` and `meta.json` into `out_dir`.
pub fn run_experiment(cfg: &ExperimentConfig, out_dir: &Path, base_dir: Option<&Path>) -> Result<RunOutput> {
    let problem = cfg.problem.build(cfg.seed, base_dir)?;
    let resolved = cfg.resolve(problem.as_ref())?;
    let out = engine::run(problem.as_ref(), &resolved.run)?;
    std::fs::create_dir_all(out_dir)?;
    write_records_csv(&out_dir.join("records.csv"), &out)?;
    let meta = RunMeta {
        config: cfg,
        resolved: &resolved,
        stepsize: out.stepsize,
        termination: out.termination,
        rounds: out.last().t,
        delta0: engine::initial_gap(problem.as_ref()),
    };
    write_atomic(&out_dir.join("meta.json"), &serde_json::to_vec_pretty(&meta)?)?;
    Ok(out)
}

/// Sweep the base config over its multipliers and write `sweep.csv` and `meta.json`.
pub fn run_sweep(spec: &SweepSpec, out_dir: &Path, base_dir: Option<&Path>) -> Result<SweepResult> {
    let problem = spec.base.problem.build(spec.base.seed, base_dir)?;
    let resolved = spec.base.resolve(problem.as_ref())?;
    let result = sweep(problem.as_ref(), &resolved.run, &spec.multipliers, spec.selection);
    std::fs::create_dir_all(out_dir)?;
    write_sweep_csv(&out_dir.join("sweep.csv"), &result)?;
    let meta = serde_json::json!({
        "spec": spec,
        "resolved": resolved,
        "best_multiplier": result.best_multiplier,
        "best_value": fmt_real(result.best_value),
        "tie_break": "equal scores go to the smaller multiplier",
    });
    write_atomic(&out_dir.join("meta.json"), &serde_json::to_vec_pretty(&meta)?)?;
    Ok(result)
}

/// Run the CLAG grid and write `heatmap.csv` and `meta.json`.
pub fn run_heatmap(spec: &SweepSpec, out_dir: &Path, base_dir: Option<&Path>) -> Result<Vec<HeatmapCell>> {
    let problem = spec.base.problem.build(spec.base.seed, base_dir)?;
    let d = problem.dim();
    let k_grid = spec.k_grid.clone().unwrap_or_else(|| even_k_grid(d, spec.k_points));
    if k_grid.iter().any(|&k| k == 0 || k > d) {
        return Err(Error::config(format!("K values must lie in 1..={d}")));
    }
    let cells = heatmap(
        problem.as_ref(),
        &spec.base,
        &k_grid,
        &spec.zeta_grid,
        &spec.multipliers,
        spec.selection,
    )?;
    std::fs::create_dir_all(out_dir)?;
    write_heatmap_csv(&out_dir.join("heatmap.csv"), &cells)?;
    let meta = serde_json::json!({
        "spec": spec,
        "dim": d,
        "n_clients": problem.n_clients(),
        "constants": problem.constants(),
        "k_grid": k_grid,
        "tie_break": "equal bits go to the smaller multiplier",
        "infinite_bits": "no multiplier reached the tolerance",
    });
    write_atomic(&out_dir.join("meta.json"), &serde_json::to_vec_pretty(&meta)?)?;
    Ok(cells)
}

/// One entry of a verification spec.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerifyEntry {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
    pub method: MethodSpec,
    /// Multiply the closed-form `B` by this factor (values below 1 make a negative control).
    #[serde(default = "one")]
    pub b_scale: f64,
    /// Whether this entry is expected to fail.
    #[serde(default)]
    pub expect_fail: bool,
}

fn one() -> f64 {
    1.0
}

fn three() -> f64 {
    3.0
}

fn default_dims() -> Vec<usize> {
    vec![2, 10, 100]
}

fn default_triples() -> usize {
    10_000
}

fn default_trials() -> usize {
    1000
}

fn default_workers() -> usize {
    2
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerifySpec {
    #[serde(default = "default_dims")]
    pub dims: Vec<usize>,
    #[serde(default = "default_triples")]
    pub triples: usize,
    #[serde(default = "default_trials")]
    pub trials: usize,
    #[serde(default = "default_workers")]
    pub n_workers: usize,
    #[serde(default)]
    pub seed: u64,
    /// Family-wise significance level in standard errors.
    #[serde(default = "three")]
    pub sigmas: f64,
    /// Entries whose `K` exceeds the dimension are clamped. When absent the
    /// standard catalog is used.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub methods: Option<Vec<VerifyEntry>>,
}

impl VerifySpec {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        serde_json::from_str(&text).map_err(|e| Error::config(e.to_string()))
    }
}

/// The standard catalog at dimension `d`, sized so every compressor is non-trivial.
pub fn method_catalog(d: usize) -> Vec<(String, MethodSpec)> {
    let k = (d / 4).max(1);
    let top = CompressorSpec::TopK { k };
    let crand = CompressorSpec::CRandK { k, shared_seed: false };
    let rand = CompressorSpec::RandK { k, shared_seed: false };
    vec![
        (
            "ef21-topk".into(),
            MethodSpec::Ef21 {
                compressor: top.clone(),
            },
        ),
        (
            "ef21-crandk".into(),
            MethodSpec::Ef21 {
                compressor: crand.clone(),
            },
        ),
        (
            "lag".into(),
            MethodSpec::Lag {
                zeta: 2.0,
                trigger: Trigger::Gradient,
            },
        ),
        (
            "clag-topk".into(),
            MethodSpec::Clag {
                zeta: 2.0,
                compressor: top.clone(),
                trigger: Trigger::Gradient,
            },
        ),
        (
            "clag-crandk".into(),
            MethodSpec::Clag {
                zeta: 0.5,
                compressor: crand.clone(),
                trigger: Trigger::Gradient,
            },
        ),
        (
            "v1-topk".into(),
            MethodSpec::V1 {
                compressor: top.clone(),
            },
        ),
        (
            "v2-randk-topk".into(),
            MethodSpec::V2 {
                q: rand.clone(),
                c: top.clone(),
                coin: CoinMode::Shared,
            },
        ),
        (
            "v2-randk-bernoulli".into(),
            MethodSpec::V2 {
                q: rand.clone(),
                c: CompressorSpec::Bernoulli { p: 0.3 },
                coin: CoinMode::PerWorker,
            },
        ),
        (
            "v3-ef21-topk".into(),
            MethodSpec::V3 {
                inner: Box::new(MethodSpec::Ef21 {
                    compressor: top.clone(),
                }),
                compressor: crand.clone(),
            },
        ),
        (
            "v3-lag-topk".into(),
            MethodSpec::V3 {
                inner: Box::new(MethodSpec::Lag {
                    zeta: 1.0,
                    trigger: Trigger::Gradient,
                }),
                compressor: top.clone(),
            },
        ),
        (
            "v4-topk-crandk".into(),
            MethodSpec::V4 {
                c1: top.clone(),
                c2: crand.clone(),
            },
        ),
        (
            "v5-topk".into(),
            MethodSpec::V5 {
                p: 0.5,
                compressor: top,
                coin: CoinMode::PerWorker,
            },
        ),
        (
            "v5-crandk".into(),
            MethodSpec::V5 {
                p: 0.2,
                compressor: crand,
                coin: CoinMode::PerWorker,
            },
        ),
    ]
}

#[derive(Debug, Clone, Serialize)]
pub struct VerifyRow {
    pub label: String,
    pub d: usize,
    pub b_scale: f64,
    pub expect_fail: bool,
    pub report: VerifyReport,
    /// The outcome matched the expectation.
    pub ok: bool,
}

fn clamp_k(spec: &CompressorSpec, d: usize) -> CompressorSpec {
    match spec {
        CompressorSpec::TopK { k } => CompressorSpec::TopK { k: (*k).min(d) },
        CompressorSpec::RandK { k, shared_seed } => CompressorSpec::RandK {
            k: (*k).min(d),
            shared_seed: *shared_seed,
        },
        CompressorSpec::CRandK { k, shared_seed } => CompressorSpec::CRandK {
            k: (*k).min(d),
            shared_seed: *shared_seed,
        },
        CompressorSpec::Compose(o, i) => CompressorSpec::Compose(Box::new(clamp_k(o, d)), Box::new(clamp_k(i, d))),
        other => other.clone(),
    }
}

fn clamp_method(m: &MethodSpec, d: usize) -> MethodSpec {
    match m.clone() {
        MethodSpec::Ef21 { compressor } => MethodSpec::Ef21 {
            compressor: clamp_k(&compressor, d),
        },
        MethodSpec::Clag {
            zeta,
            compressor,
            trigger,
        } => MethodSpec::Clag {
            zeta,
            compressor: clamp_k(&compressor, d),
            trigger,
        },
        MethodSpec::V1 { compressor } => MethodSpec::V1 {
            compressor: clamp_k(&compressor, d),
        },
        MethodSpec::V2 { q, c, coin } => MethodSpec::V2 {
            q: clamp_k(&q, d),
            c: clamp_k(&c, d),
            coin,
        },
        MethodSpec::V3 { inner, compressor } => MethodSpec::V3 {
            inner: Box::new(clamp_method(&inner, d)),
            compressor: clamp_k(&compressor, d),
        },
        MethodSpec::V4 { c1, c2 } => MethodSpec::V4 {
            c1: clamp_k(&c1, d),
            c2: clamp_k(&c2, d),
        },
        MethodSpec::V5 { p, compressor, coin } => MethodSpec::V5 {
            p,
            compressor: clamp_k(&compressor, d),
            coin,
        },
        MethodSpec::Marina { p, q, coin } => MethodSpec::Marina {
            p,
            q: clamp_k(&q, d),
            coin,
        },
        lag @ MethodSpec::Lag { .. } => lag,
    }
}

/// Check every entry at every dimension.
pub fn run_verify(spec: &VerifySpec) -> Result<Vec<VerifyRow>> {
    let mut rows = Vec::new();
    for &d in &spec.dims {
        let entries: Vec<VerifyEntry> = match &spec.methods {
            Some(list) => list.clone(),
            None => method_catalog(d)
                .into_iter()
                .map(|(label, method)| VerifyEntry {
                    label: Some(label),
                    method,
                    b_scale: 1.0,
                    expect_fail: false,
                })
                .collect(),
        };
        for (idx, e) in entries.iter().enumerate() {
            let method = clamp_method(&e.method, d);
            let tp = method.theory_params(d, spec.n_workers)?;
            let opts = VerifyOptions {
                d,
                n_workers: spec.n_workers,
                random_triples: spec.triples,
                structured: true,
                trials: spec.trials,
                seed: RngStream::new(spec.seed)
                    .derive("verify", d as u64)
                    .derive("entry", idx as u64)
                    .key(),
                sigmas: spec.sigmas,
            };
            let report = verify_3pc_inequality(&method, tp.a, tp.b * e.b_scale, &opts)?;
            let ok = report.pass != e.expect_fail;
            rows.push(VerifyRow {
                label: e.label.clone().unwrap_or_else(|| method.name().to_owned()),
                d,
                b_scale: e.b_scale,
                expect_fail: e.expect_fail,
                report,
                ok,
            });
        }
    }
    Ok(rows)
}

pub fn write_verify_csv(path: &Path, rows: &[VerifyRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record([
        "label",
        "d",
        "A",
        "B",
        "trials",
        "max_ratio",
        "violations",
        "pass",
        "expected",
    ])?;
    for r in rows {
        w.write_record([
            r.label.clone(),
            r.d.to_string(),
            format!("{}", r.report.a),
            format!("{}", r.report.b),
            r.report.trials.to_string(),
            fmt_real(r.report.max_ratio),
            r.report.violations.to_string(),
            r.report.pass.to_string(),
            (!r.expect_fail).to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, Serialize)]
pub struct GeneratedQuadratic {
    pub n: usize,
    pub d: usize,
    pub lambda: f64,
    pub s: f64,
    pub seed: u64,
    #[serde(flatten)]
    pub constants: SmoothnessConstants,
}

/// Generate an instance and write `quadratic.bin` and `constants.json`.
pub fn gen_quadratic_files(
    n: usize,
    d: usize,
    lambda: f64,
    s: f64,
    seed: u64,
    out_dir: &Path,
) -> Result<GeneratedQuadratic> {
    let rng = RngStream::new(seed).derive("quadratic", 0);
    let problem: QuadraticProblem = gen_quadratic(n, d, lambda, s, &rng)?;
    std::fs::create_dir_all(out_dir)?;
    problem.save(&out_dir.join("quadratic.bin"))?;
    let info = GeneratedQuadratic {
        n,
        d,
        lambda,
        s,
        seed,
        constants: problem.constants(),
    };
    write_atomic(&out_dir.join("constants.json"), &serde_json::to_vec_pretty(&info)?)?;
    Ok(info)
}

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use threepc::config::ExperimentConfig;
use threepc::engine::Termination;
use threepc::experiment::{self, SweepSpec, VerifySpec};
use threepc::Error;

/// Exit codes.
const EXIT_OTHER: u8 = 1;
const EXIT_CONFIG: u8 = 2;
const EXIT_DIVERGED: u8 = 3;
const EXIT_BUDGET: u8 = 4;
const EXIT_TIME: u8 = 5;
const EXIT_VERIFY_FAILED: u8 = 6;

#[derive(Parser)]
#[command(name = "threepc", version, about = "Three point compressor experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct Common {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Override the master seed.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    threads: Option<usize>,
    /// Wall-clock limit per launch.
    #[arg(long)]
    time_limit_secs: Option<f64>,
}

#[derive(Subcommand)]
enum Command {
    /// One training run.
    Run(Common),
    /// Stepsize-multiplier sweep of one config.
    Sweep(Common),
    /// CLAG (K, zeta) grid, each cell tuned over the multipliers.
    Heatmap(Common),
    /// Monte-Carlo check of the three point inequality.
    Verify {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        threads: Option<usize>,
    },
    /// Generate a synthetic quadratic instance.
    GenQuadratic {
        #[arg(long)]
        n: usize,
        #[arg(long)]
        d: usize,
        #[arg(long)]
        lambda: f64,
        #[arg(long)]
        s: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
}

fn exit_for(err: &Error) -> u8 {
    match err {
        Error::Config(_) | Error::Parameter(_) | Error::Json(_) => EXIT_CONFIG,
        _ => EXIT_OTHER,
    }
}

fn set_threads(threads: Option<usize>) {
    if let Some(t) = threads {
        // only fails if a pool already exists, which cannot happen this early
        let _ = rayon::ThreadPoolBuilder::new().num_threads(t).build_global();
    }
}

fn apply_overrides(cfg: &mut ExperimentConfig, c: &Common) {
    if let Some(s) = c.seed {
        cfg.seed = s;
    }
    if let Some(t) = c.threads {
        cfg.threads = Some(t);
    }
    if let Some(l) = c.time_limit_secs {
        cfg.stop.wall_clock_limit_secs = Some(l);
    }
}

fn base_dir(p: &Path) -> Option<&Path> {
    p.parent()
}

fn cmd_run(c: &Common) -> Result<u8, Error> {
    let mut cfg = ExperimentConfig::load(&c.config)?;
    apply_overrides(&mut cfg, c);
    let out = experiment::run_experiment(&cfg, &c.out, base_dir(&c.config))?;
    let last = out.last();
    println!(
        "{:?} after {} rounds: f = {:e}, |grad|^2 = {:e}, bits/worker = {}",
        out.termination, last.t, last.f, last.grad_norm_sq, last.bits_cum_per_worker
    );
    Ok(match out.termination {
        Termination::Converged | Termination::MaxRounds => 0,
        Termination::Diverged => EXIT_DIVERGED,
        Termination::BitBudget => EXIT_BUDGET,
        Termination::TimeLimit => EXIT_TIME,
    })
}

fn load_sweep(c: &Common) -> Result<SweepSpec, Error> {
    let mut spec = SweepSpec::load(&c.config)?;
    apply_overrides(&mut spec.base, c);
    spec.base.threads = None;
    set_threads(c.threads);
    Ok(spec)
}

fn cmd_sweep(c: &Common) -> Result<u8, Error> {
    let spec = load_sweep(c)?;
    let res = experiment::run_sweep(&spec, &c.out, base_dir(&c.config))?;
    match res.best_multiplier {
        Some(m) => println!("best multiplier {m}: {}", res.best_value),
        None => println!("no multiplier reached the tolerance"),
    }
    Ok(0)
}

fn cmd_heatmap(c: &Common) -> Result<u8, Error> {
    let spec = load_sweep(c)?;
    let cells = experiment::run_heatmap(&spec, &c.out, base_dir(&c.config))?;
    if let Some(best) = cells
        .iter()
        .filter(|c| c.bits.is_finite())
        .min_by(|a, b| a.bits.total_cmp(&b.bits))
    {
        println!(
            "best cell K = {}, zeta = {}: {} bits/worker",
            best.k, best.zeta, best.bits
        );
    } else {
        println!("no cell reached the tolerance");
    }
    Ok(0)
}

fn cmd_verify(config: Option<&Path>, out: &Path, seed: Option<u64>, threads: Option<usize>) -> Result<u8, Error> {
    set_threads(threads);
    let mut spec = match config {
        Some(p) => VerifySpec::load(p)?,
        None => serde_json::from_str("{}")?,
    };
    if let Some(s) = seed {
        spec.seed = s;
    }
    let rows = experiment::run_verify(&spec)?;
    std::fs::create_dir_all(out)?;
    experiment::write_verify_csv(&out.join("verify.csv"), &rows)?;
    println!("{:<22} {:>5} {:>12} {:>6}  result", "method", "d", "max ratio", "viol");
    for r in &rows {
        println!(
            "{:<22} {:>5} {:>12.6} {:>6}  {}{}",
            r.label,
            r.d,
            r.report.max_ratio,
            r.report.violations,
            if r.report.pass { "pass" } else { "fail" },
            if r.ok { "" } else { " (unexpected)" }
        );
    }
    Ok(if rows.iter().all(|r| r.ok) {
        0
    } else {
        EXIT_VERIFY_FAILED
    })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let res = match &cli.command {
        Command::Run(c) => cmd_run(c),
        Command::Sweep(c) => cmd_sweep(c),
        Command::Heatmap(c) => cmd_heatmap(c),
        Command::Verify {
            config,
            out,
            seed,
            threads,
        } => cmd_verify(config.as_deref(), out, *seed, *threads),
        Command::GenQuadratic {
            n,
            d,
            lambda,
            s,
            seed,
            out,
        } => experiment::gen_quadratic_files(*n, *d, *lambda, *s, *seed, out).map(|info| {
            println!(
                "L- = {}, L+ = {}, L+- = {}, mu = {:?}",
                info.constants.l_minus, info.constants.l_plus, info.constants.l_pm, info.constants.mu
            );
            0
        }),
    };
    match res {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_for(&e))
        }
    }
}

use proptest::prelude::*;

use threepc::config::ExperimentConfig;
use threepc::engine::{self, compute_g, G0Mode, RunConfig, StopRule, Termination};
use threepc::problems::{gen_quadratic, QuadraticProblem};
use threepc::threepc::{CoinMode, Trigger};
use threepc::{CompressorSpec, DenseVector, MethodSpec, RngStream};

fn quad(seed: u64) -> QuadraticProblem {
    gen_quadratic(6, 24, 1e-2, 0.8, &RngStream::new(seed)).unwrap()
}

fn dv(v: &[f64]) -> DenseVector {
    DenseVector::from_vec(v.to_vec())
}

#[test]
fn lazy_workers_with_huge_trigger_stay_frozen() {
    let p = quad(1);
    let d = 24;
    let method = MethodSpec::Lag {
        zeta: 1e30,
        trigger: Trigger::Gradient,
    };
    let mut cfg = RunConfig::new(method, 0.05, 50);
    cfg.keep_iterates = true;
    let out = engine::run(&p, &cfg).unwrap();
    // every round after the first moves x by the same frozen average
    let step0 = out.iterates[1].sub(&out.iterates[0]);
    for w in out.iterates.windows(2).skip(1) {
        assert!(w[1].sub(&w[0]).sq_dist(&step0) <= 1e-28 * step0.sq_norm());
    }
    for (t, r) in out.records.iter().enumerate() {
        assert_eq!(r.bits_cum_per_worker, (32 * d + t) as f64);
        if t > 0 {
            assert_eq!(r.transmitted_fraction, 0.0);
        }
    }
}

#[test]
fn error_measure_examples() {
    let g = [dv(&[1.0, 0.0]), dv(&[0.0, 1.0])];
    let y = [dv(&[0.0, 0.0]), dv(&[0.0, 0.0])];
    let gr: Vec<&DenseVector> = g.iter().collect();
    let yr: Vec<&DenseVector> = y.iter().collect();
    assert_eq!(compute_g(&gr, &yr, false), 1.0);
    assert_eq!(compute_g(&gr, &yr, true), 0.5);
    // opposite errors cancel in the aggregate
    let g = [dv(&[1.0]), dv(&[-1.0])];
    let y = [dv(&[0.0]), dv(&[0.0])];
    assert_eq!(
        compute_g(&g.iter().collect::<Vec<_>>(), &y.iter().collect::<Vec<_>>(), true),
        0.0
    );
}

#[test]
fn results_do_not_depend_on_thread_count() {
    let p = quad(2);
    let method = MethodSpec::V5 {
        p: 0.3,
        compressor: CompressorSpec::CRandK {
            k: 3,
            shared_seed: false,
        },
        coin: CoinMode::PerWorker,
    };
    let mut cfg = RunConfig::new(method, 0.02, 100);
    cfg.seed = 4;
    cfg.keep_iterates = true;
    let runs: Vec<_> = [1, 2, 4]
        .iter()
        .map(|&t| {
            let mut c = cfg.clone();
            c.threads = Some(t);
            engine::run(&p, &c).unwrap()
        })
        .collect();
    for r in &runs[1..] {
        assert_eq!(r.records, runs[0].records);
        assert_eq!(r.iterates, runs[0].iterates);
    }
}

#[test]
fn huge_stepsize_diverges() {
    let p = quad(3);
    let cfg = RunConfig::new(
        MethodSpec::Ef21 {
            compressor: CompressorSpec::Identity,
        },
        1e3,
        10_000,
    );
    let out = engine::run(&p, &cfg).unwrap();
    assert_eq!(out.termination, Termination::Diverged);
    assert!(out.last().t < 10_000);
}

#[test]
fn bit_budget_stops_the_run() {
    let p = quad(4);
    let mut cfg = RunConfig::new(
        MethodSpec::Ef21 {
            compressor: CompressorSpec::TopK { k: 2 },
        },
        0.01,
        100_000,
    );
    cfg.stop = StopRule {
        bit_budget_per_worker: Some(5000),
        ..StopRule::default()
    };
    let out = engine::run(&p, &cfg).unwrap();
    assert_eq!(out.termination, Termination::BitBudget);
    let bits: Vec<f64> = out.records.iter().map(|r| r.bits_cum_per_worker).collect();
    assert!(bits[bits.len() - 1] >= 5000.0 && bits[bits.len() - 2] < 5000.0);
}

#[test]
fn gradient_tolerance_converges_and_reports_bits() {
    let p = quad(5);
    let mut cfg = RunConfig::new(
        MethodSpec::Ef21 {
            compressor: CompressorSpec::Identity,
        },
        0.5,
        100_000,
    );
    cfg.stop = StopRule {
        grad_norm_tol: Some(1e-6),
        ..StopRule::default()
    };
    let out = engine::run(&p, &cfg).unwrap();
    assert_eq!(out.termination, Termination::Converged);
    assert!(out.last().grad_norm_sq.sqrt() < 1e-6);
    assert!(out.records[out.records.len() - 2].grad_norm_sq.sqrt() >= 1e-6);
    assert_eq!(out.bits_to_tolerance(), Some(out.last().bits_cum_per_worker));
}

#[test]
fn zero_init_starts_with_full_error() {
    let p = quad(6);
    let mut cfg = RunConfig::new(
        MethodSpec::Ef21 {
            compressor: CompressorSpec::TopK { k: 1 },
        },
        0.01,
        3,
    );
    cfg.g0_mode = G0Mode::Zero;
    let out = engine::run(&p, &cfg).unwrap();
    let x0 = threepc::problems::Problem::x0(&p);
    let expected: f64 = (0..6)
        .map(|i| threepc::problems::Problem::client_grad(&p, i, &x0).sq_norm())
        .sum::<f64>()
        / 6.0;
    assert!((out.records[0].g_t - expected).abs() <= 1e-12 * expected);
    assert_eq!(out.records[0].bits_cum_per_worker, 0.0);
}

#[test]
fn invalid_configs_are_rejected() {
    let p = quad(7);
    let cfg = RunConfig::new(
        MethodSpec::Ef21 {
            compressor: CompressorSpec::TopK { k: 100 },
        },
        0.01,
        3,
    );
    assert!(engine::run(&p, &cfg).is_err());
    let cfg = RunConfig::new(
        MethodSpec::Ef21 {
            compressor: CompressorSpec::Identity,
        },
        -1.0,
        3,
    );
    assert!(engine::run(&p, &cfg).is_err());
}

#[test]
fn config_file_resolves_theory_stepsize() {
    let cfg = ExperimentConfig::from_json(
        r#"{
            "problem": {"kind": "quadratic", "n": 4, "d": 10, "lambda": 0.01, "s": 0.5, "seed": 3},
            "method": {"method": "ef21", "compressor": {"kind": "top_k", "k": 2}},
            "max_rounds": 20
        }"#,
    )
    .unwrap();
    let problem = cfg.problem.build(cfg.seed, None).unwrap();
    let resolved = cfg.resolve(problem.as_ref()).unwrap();
    let tp = resolved.theory;
    let c = resolved.constants;
    let expected = 1.0 / (c.l_minus + c.l_plus * (tp.b / tp.a).sqrt());
    assert!((resolved.run.gamma - expected).abs() <= 1e-15 * expected);
    assert!(ExperimentConfig::from_json(r#"{"problem": {"kind": "quadratic"}, "bogus": 1}"#).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn aggregate_error_never_exceeds_average(vals in prop::collection::vec(-10.0f64..10.0, 12)) {
        let g: Vec<DenseVector> = vals[..6].chunks(2).map(dv).collect();
        let y: Vec<DenseVector> = vals[6..].chunks(2).map(dv).collect();
        let gr: Vec<&DenseVector> = g.iter().collect();
        let yr: Vec<&DenseVector> = y.iter().collect();
        prop_assert!(compute_g(&gr, &yr, true) <= compute_g(&gr, &yr, false) * (1.0 + 1e-12) + 1e-12);
    }

    #[test]
    fn runs_replay_from_the_seed(seed in 0u64..500) {
        let p = quad(8);
        let mut cfg = RunConfig::new(
            MethodSpec::Ef21 { compressor: CompressorSpec::CRandK { k: 4, shared_seed: false } },
            0.02,
            20,
        );
        cfg.seed = seed;
        let a = engine::run(&p, &cfg).unwrap();
        let b = engine::run(&p, &cfg).unwrap();
        prop_assert_eq!(a.records, b.records);
        prop_assert_eq!(a.x_final, b.x_final);
    }
}

use super::*;
use proptest::prelude::*;

fn v(x: &[f64]) -> DenseVector {
    DenseVector::from_vec(x.to_vec())
}

fn streams(seed: u64) -> (RngStream, RngStream) {
    let shared = RngStream::new(seed).derive("round", 0);
    (shared.derive("worker", 0), shared)
}

fn step(m: &MethodSpec, h: &[f64], y: &[f64], x: &[f64]) -> StepResult {
    let (p, s) = streams(1);
    let ctx = StepCtx::simple(0, 1, &p, &s);
    let state = MechanismState { h: v(h), y: v(y) };
    m.step(&state, &v(x), &ctx).unwrap()
}

fn top(k: usize) -> CompressorSpec {
    CompressorSpec::TopK { k }
}

#[test]
fn ef21_top1_moves_largest_residual() {
    let m = MethodSpec::Ef21 { compressor: top(1) };
    let r = step(&m, &[0.0, 0.0, 0.0], &[9.0, 9.0, 9.0], &[1.0, -3.0, 2.0]);
    assert_eq!(r.g_next.as_slice(), &[0.0, -3.0, 0.0]);
    assert_eq!(r.bits(3), 32 + 2);
}

#[test]
fn lag_skips_and_fires() {
    let m = MethodSpec::Lag {
        zeta: 1.0,
        trigger: Trigger::Gradient,
    };
    // ||x-h||^2 = 1, ||x-y||^2 = 4: skip
    let r = step(&m, &[1.0, 0.0], &[2.0, 0.0], &[0.0, 0.0]);
    assert!(!r.fired);
    assert_eq!(r.g_next.as_slice(), &[1.0, 0.0]);
    assert_eq!(r.messages, vec![Message::Flag(false)]);
    // ||x-h||^2 = 9 > 1: fire
    let r = step(&m, &[3.0, 0.0], &[1.0, 0.0], &[0.0, 0.0]);
    assert!(r.fired);
    assert_eq!(r.g_next.as_slice(), &[0.0, 0.0]);
    assert_eq!(r.bits(2), 1 + 64);
}

#[test]
fn lag_zero_zeta_sends_no_flag() {
    let m = MethodSpec::Lag {
        zeta: 0.0,
        trigger: Trigger::Gradient,
    };
    let r = step(&m, &[1.0], &[1.0], &[1.0]);
    assert_eq!(r.messages, vec![Message::Replace(v(&[1.0]))]);
}

#[test]
fn v1_anchors_at_previous_gradient() {
    let m = MethodSpec::V1 { compressor: top(1) };
    let r = step(&m, &[100.0, 100.0], &[1.0, 1.0], &[1.0, 4.0]);
    assert_eq!(r.g_next.as_slice(), &[1.0, 4.0]);
    let r = step(&m, &[100.0, 100.0], &[1.0, 1.0], &[3.0, 4.0]);
    assert_eq!(r.g_next.as_slice(), &[1.0, 4.0]);
}

#[test]
fn v4_applies_c2_then_c1() {
    let m = MethodSpec::V4 { c1: top(1), c2: top(1) };
    let r = step(&m, &[0.0, 0.0, 0.0], &[0.0; 3], &[1.0, 3.0, 2.0]);
    assert_eq!(r.g_next.as_slice(), &[0.0, 3.0, 2.0]);
}

#[test]
fn identity_compressors_land_exactly() {
    let x = [0.1, 0.2, 0.3];
    for m in [
        MethodSpec::Ef21 { compressor: top(3) },
        MethodSpec::Ef21 {
            compressor: CompressorSpec::Identity,
        },
        MethodSpec::V1 { compressor: top(3) },
        MethodSpec::V5 {
            p: 1.0,
            compressor: top(1),
            coin: CoinMode::Shared,
        },
    ] {
        let r = step(&m, &[7.0, 7.0, 7.0], &[1.0, 2.0, 3.0], &x);
        assert_eq!(r.g_next.as_slice(), &x, "{}", m.name());
        assert_eq!(r.messages.len(), 1);
    }
}

#[test]
fn shared_round_coin_overrides_private_draws() {
    let m = MethodSpec::Marina {
        p: 0.5,
        q: CompressorSpec::RandK {
            k: 1,
            shared_seed: false,
        },
        coin: CoinMode::Shared,
    };
    let (p, s) = streams(3);
    let state = MechanismState {
        h: v(&[1.0, 1.0]),
        y: v(&[1.0, 1.0]),
    };
    let mut ctx = StepCtx::simple(0, 1, &p, &s);
    ctx.coin = Some(true);
    let r = m.step(&state, &v(&[5.0, 6.0]), &ctx).unwrap();
    assert_eq!(r.g_next.as_slice(), &[5.0, 6.0]);
    ctx.coin = Some(false);
    let r = m.step(&state, &v(&[5.0, 6.0]), &ctx).unwrap();
    assert_ne!(r.g_next.as_slice(), &[5.0, 6.0]);
}

#[test]
fn json_round_trip() {
    let specs = [
        r#"{"method":"ef21","compressor":{"kind":"top_k","k":3}}"#,
        r#"{"method":"clag","zeta":4.0,"compressor":{"kind":"top_k","k":3},"trigger":"iterate"}"#,
        r#"{"method":"v3","inner":{"method":"lag","zeta":2.0},"compressor":{"kind":"top_k","k":1}}"#,
        r#"{"method":"marina","p":0.1,"q":{"kind":"rand_k","k":2}}"#,
    ];
    for s in specs {
        let m: MethodSpec = serde_json::from_str(s).unwrap();
        let back: MethodSpec = serde_json::from_str(&serde_json::to_string(&m).unwrap()).unwrap();
        assert_eq!(m, back);
    }
}

#[test]
fn json_rejects_bad_specs() {
    for s in [
        r#"{"method":"ef21"}"#,
        r#"{"method":"ef21","compressor":{"kind":"identity"},"zeta":1.0}"#,
        r#"{"method":"lag","zeta":-1.0}"#,
        r#"{"method":"v5","p":0.0,"compressor":{"kind":"identity"}}"#,
        r#"{"method":"nope"}"#,
        r#"{"method":"lag","zeta":1.0,"extra":1}"#,
    ] {
        assert!(serde_json::from_str::<MethodSpec>(s).is_err(), "{s}");
    }
}

#[test]
fn validate_checks_compressor_classes() {
    let bad = MethodSpec::Ef21 {
        compressor: CompressorSpec::RandK {
            k: 1,
            shared_seed: false,
        },
    };
    assert!(bad.validate(4, 1).is_err());
    let bad = MethodSpec::Marina {
        p: 0.5,
        q: top(1),
        coin: CoinMode::Shared,
    };
    assert!(bad.validate(4, 1).is_err());
    let ok = MethodSpec::V2 {
        q: CompressorSpec::PermK { shared_seed: true },
        c: top(1),
        coin: CoinMode::Shared,
    };
    assert!(ok.validate(4, 2).is_ok());
    assert!(ok.validate(5, 2).is_err());
}

#[test]
fn theory_params_follow_compressor_constants() {
    let m = MethodSpec::Clag {
        zeta: 100.0,
        compressor: top(25),
        trigger: Trigger::Gradient,
    };
    let tp = m.theory_params(100, 1).unwrap();
    let ef = theory::params_ef21(0.25).unwrap();
    assert_eq!(tp.a, ef.a);
    assert_eq!(tp.b, 100.0);
    let m = MethodSpec::Marina {
        p: 0.2,
        q: CompressorSpec::RandK {
            k: 10,
            shared_seed: false,
        },
        coin: CoinMode::Shared,
    };
    let tp = m.theory_params(100, 5).unwrap();
    assert_eq!(tp.a, 0.2);
    assert!((tp.b - 0.8 * 9.0 / 5.0).abs() < 1e-15);
    assert!(tp.aggregated);
}

#[test]
fn verify_accepts_true_constants_and_rejects_halved_b() {
    let opts = VerifyOptions {
        d: 12,
        random_triples: 50,
        ..Default::default()
    };
    let m = MethodSpec::Ef21 { compressor: top(3) };
    let tp = m.theory_params(12, 4).unwrap();
    let rep = verify_3pc_inequality(&m, tp.a, tp.b, &opts).unwrap();
    assert!(rep.pass, "{rep:?}");
    assert!(rep.max_ratio > 0.99);
    let rep = verify_3pc_inequality(&m, tp.a, tp.b / 2.0, &opts).unwrap();
    assert!(!rep.pass);
}

proptest! {
    #[test]
    fn replay_reproduces_worker_state(
        h in prop::collection::vec(-10.0f64..10.0, 6),
        y in prop::collection::vec(-10.0f64..10.0, 6),
        x in prop::collection::vec(-10.0f64..10.0, 6),
        seed in 0u64..1000,
        which in 0usize..6,
    ) {
        let methods = [
            MethodSpec::Ef21 { compressor: CompressorSpec::CRandK { k: 2, shared_seed: false } },
            MethodSpec::Clag { zeta: 0.5, compressor: top(2), trigger: Trigger::Gradient },
            MethodSpec::V2 {
                q: CompressorSpec::RandK { k: 3, shared_seed: true },
                c: CompressorSpec::Bernoulli { p: 0.5 },
                coin: CoinMode::PerWorker,
            },
            MethodSpec::V3 {
                inner: Box::new(MethodSpec::Lag { zeta: 1.0, trigger: Trigger::Gradient }),
                compressor: top(1),
            },
            MethodSpec::V5 { p: 0.3, compressor: top(2), coin: CoinMode::PerWorker },
            MethodSpec::Marina {
                p: 0.3,
                q: CompressorSpec::PermK { shared_seed: true },
                coin: CoinMode::PerWorker,
            },
        ];
        let (p, s) = streams(seed);
        let ctx = StepCtx::simple(1, 2, &p, &s);
        let state = MechanismState { h: v(&h), y: v(&y) };
        let r = methods[which].step(&state, &v(&x), &ctx).unwrap();
        prop_assert_eq!(replay(&state.h, &r.messages), r.g_next);
    }
}

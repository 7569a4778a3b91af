use proptest::prelude::*;
use rand::Rng;
use rand_distr::StandardNormal;

use threepc::linalg::SymBanded;
use threepc::problems::{
    gen_quadratic, partition_even, synthetic_logreg_dataset, Dataset, LogRegProblem, Problem, QuadraticProblem,
};
use threepc::{DenseVector, RngStream};

fn quad(n: usize, d: usize, lambda: f64, s: f64, seed: u64) -> QuadraticProblem {
    gen_quadratic(n, d, lambda, s, &RngStream::new(seed)).unwrap()
}

fn gaussian(d: usize, rng: &mut impl Rng) -> DenseVector {
    DenseVector::from_vec((0..d).map(|_| rng.sample::<f64, _>(StandardNormal)).collect())
}

/// Central differences of `f` against `grad`, relative to the gradient norm.
fn fd_error(f: impl Fn(&DenseVector) -> f64, grad: &DenseVector, x: &DenseVector) -> f64 {
    let h = 1e-6;
    let mut worst: f64 = 0.0;
    for i in 0..x.len() {
        let mut up = x.clone();
        let mut down = x.clone();
        up[i] += h;
        down[i] -= h;
        let fd = (f(&up) - f(&down)) / (2.0 * h);
        worst = worst.max((fd - grad[i]).abs());
    }
    worst / grad.sq_norm().sqrt().max(1.0)
}

fn dense_power(d: usize, a: &[f64]) -> f64 {
    let mut v = vec![1.0; d];
    let mut lambda = 0.0;
    for _ in 0..100_000 {
        let w: Vec<f64> = (0..d).map(|r| (0..d).map(|c| a[r * d + c] * v[c]).sum()).collect();
        let next: f64 = w.iter().zip(&v).map(|(x, y)| x * y).sum();
        let norm = w.iter().map(|x| x * x).sum::<f64>().sqrt();
        v = w.iter().map(|x| x / norm).collect();
        if (next - lambda).abs() < 1e-15 {
            return next;
        }
        lambda = next;
    }
    lambda
}

#[test]
fn quadratic_gradient_matches_finite_differences() {
    let p = quad(4, 12, 1e-2, 0.8, 1);
    let mut rng = RngStream::new(2).rng();
    for _ in 0..5 {
        let x = gaussian(12, &mut rng);
        assert!(fd_error(|z| p.value(z), &p.grad(&x), &x) < 1e-5);
    }
}

#[test]
fn quadratic_gradient_at_origin_is_minus_offset() {
    let p = quad(3, 6, 0.0, 0.5, 3);
    let zero = DenseVector::zeros(6);
    for i in 0..3 {
        assert_eq!(p.client_grad(i, &zero), p.offsets()[i].scaled(-1.0));
    }
}

#[test]
fn identity_quadratic_gradient_is_x() {
    let p = QuadraticProblem::new(
        vec![SymBanded::identity(3)],
        vec![DenseVector::zeros(3)],
        DenseVector::zeros(3),
        1.0,
        0.0,
    )
    .unwrap();
    let x = DenseVector::from_vec(vec![1.5, -2.0, 0.25]);
    assert_eq!(p.client_grad(0, &x), x);
}

#[test]
fn noiseless_instance_has_equal_clients() {
    let p = quad(5, 8, 1e-3, 0.0, 4);
    for m in p.matrices() {
        assert_eq!(m, &p.matrices()[0]);
    }
    let c = p.constants();
    assert!(c.l_pm < 1e-12);
    assert!((c.l_plus - c.l_minus).abs() < 1e-12);
}

#[test]
fn single_client_has_no_hessian_variance() {
    let c = quad(1, 10, 1e-3, 0.8, 5).constants();
    assert!(c.l_pm < 1e-12);
}

#[test]
fn shift_puts_smallest_mean_eigenvalue_at_lambda() {
    let p = quad(6, 4, 0.0, 0.0, 6);
    assert!(p.mean_matrix().min_eigenvalue().abs() < 1e-12);
    let p = quad(6, 30, 0.25, 0.9, 6);
    assert!((p.constants().mu.unwrap() - 0.25).abs() < 1e-9);
}

#[test]
fn hessian_variance_against_dense_oracles() {
    let p = quad(3, 5, 1e-3, 0.8, 7);
    let c = p.constants();
    // mean of squares minus square of mean, formed densely
    let dense: Vec<Vec<f64>> = p.matrices().iter().map(|m| m.to_dense()).collect();
    let d = 5;
    let mut mean = vec![0.0; d * d];
    for a in &dense {
        for (m, v) in mean.iter_mut().zip(a) {
            *m += v / 3.0;
        }
    }
    let mut var = vec![0.0; d * d];
    for a in &dense {
        for r in 0..d {
            for col in 0..d {
                let sq: f64 = (0..d).map(|k| a[r * d + k] * a[k * d + col]).sum();
                var[r * d + col] += sq / 3.0;
            }
        }
    }
    for r in 0..d {
        for col in 0..d {
            var[r * d + col] -= (0..d).map(|k| mean[r * d + k] * mean[k * d + col]).sum::<f64>();
        }
    }
    assert!((dense_power(d, &var) - c.l_pm.powi(2)).abs() < 1e-6);
    let mut rng = RngStream::new(8).rng();
    for _ in 0..10_000 {
        let v = gaussian(d, &mut rng);
        let num: f64 = (0..d)
            .map(|r| (0..d).map(|k| v[r] * var[r * d + k] * v[k]).sum::<f64>())
            .sum();
        assert!(num / v.sq_norm() <= c.l_pm.powi(2) + 1e-9);
    }
}

#[test]
fn snapshot_round_trip() {
    let p = quad(4, 9, 1e-2, 0.7, 9);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("q.bin");
    p.save(&path).unwrap();
    let q = QuadraticProblem::load(&path).unwrap();
    assert_eq!(p.matrices(), q.matrices());
    assert_eq!(p.offsets(), q.offsets());
    assert_eq!(p.x0(), q.x0());
    assert_eq!(p.constants(), q.constants());
}

#[test]
fn truncated_snapshot_is_rejected() {
    let p = quad(2, 5, 1e-2, 0.7, 10);
    let mut buf = Vec::new();
    p.write_snapshot(&mut buf).unwrap();
    buf.truncate(buf.len() - 3);
    assert!(QuadraticProblem::read_snapshot(buf.as_slice()).is_err());
    assert!(QuadraticProblem::read_snapshot(&b"NOTMAGIC"[..]).is_err());
}

#[test]
fn partition_drops_remainder() {
    let data = Dataset {
        features: (0..10).map(|i| vec![i as f64]).collect(),
        labels: vec![1.0; 10],
        dim: 1,
    };
    let shards = partition_even(&data, 3, &RngStream::new(0)).unwrap();
    assert_eq!(shards.iter().map(Dataset::len).collect::<Vec<_>>(), vec![3, 3, 3]);
    let mut seen: Vec<f64> = shards.iter().flat_map(|s| s.features.iter().map(|r| r[0])).collect();
    seen.sort_by(f64::total_cmp);
    seen.dedup();
    assert_eq!(seen.len(), 9);
    assert_eq!(partition_even(&data, 10, &RngStream::new(0)).unwrap().len(), 10);
    assert_eq!(partition_even(&data, 1, &RngStream::new(0)).unwrap()[0].len(), 10);
    assert!(partition_even(&data, 11, &RngStream::new(0)).is_err());
}

fn logreg(seed: u64) -> LogRegProblem {
    let data = synthetic_logreg_dataset(200, 6, &RngStream::new(seed));
    LogRegProblem::from_dataset(&data, 4, 0.1, &RngStream::new(seed + 1)).unwrap()
}

#[test]
fn logreg_gradient_matches_finite_differences() {
    let p = logreg(11);
    let mut rng = RngStream::new(12).rng();
    for _ in 0..5 {
        let x = gaussian(6, &mut rng).scaled(2.0);
        assert!(fd_error(|z| p.value(z), &p.grad(&x), &x) < 1e-5);
    }
}

#[test]
fn logreg_client_gradients_are_lipschitz() {
    let p = logreg(13);
    let mut rng = RngStream::new(14).rng();
    for _ in 0..2000 {
        let x = gaussian(6, &mut rng).scaled(3.0);
        let y = gaussian(6, &mut rng).scaled(3.0);
        for i in 0..p.n_clients() {
            let lhs = p.client_grad(i, &x).sq_dist(&p.client_grad(i, &y)).sqrt();
            assert!(lhs <= p.client_smoothness(i) * x.sq_dist(&y).sqrt() * (1.0 + 1e-12));
        }
    }
    let c = p.constants();
    assert!(c.l_minus <= c.l_plus + 1e-12);
    assert!(c.mu.is_none());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn hessian_variance_inequality(seed in 0u64..1000, s in 0.0f64..1.5, d in 2usize..12) {
        let p = quad(5, d, 1e-3, s, seed);
        let c = p.constants();
        prop_assert!(c.l_minus <= c.l_plus + 1e-9);
        prop_assert!(c.l_pm <= c.l_plus + 1e-9);
        let mut rng = RngStream::new(seed).derive("pairs", 0).rng();
        for _ in 0..20 {
            let x = gaussian(d, &mut rng);
            let y = gaussian(d, &mut rng);
            let spread: f64 = (0..5)
                .map(|i| p.client_grad(i, &x).sq_dist(&p.client_grad(i, &y)))
                .sum::<f64>() / 5.0;
            let lhs = spread - p.grad(&x).sq_dist(&p.grad(&y));
            let rhs = c.l_pm.powi(2) * x.sq_dist(&y);
            prop_assert!(lhs <= rhs + 1e-9 * (1.0 + spread));
            prop_assert!(spread <= c.l_plus.powi(2) * x.sq_dist(&y) * (1.0 + 1e-9) + 1e-12);
        }
    }

    #[test]
    fn generator_is_deterministic(seed in 0u64..1000) {
        let a = quad(3, 6, 1e-2, 0.8, seed);
        let b = quad(3, 6, 1e-2, 0.8, seed);
        prop_assert_eq!(a.matrices(), b.matrices());
        prop_assert_eq!(a.offsets(), b.offsets());
    }
}

//! Logistic regression with the nonconvex regularizer `lambda sum_j x_j^2 / (1 + x_j^2)`.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;

use super::{Dataset, Problem};
use crate::error::{Error, Result};
use crate::linalg::dense_max_eigenvalue;
use crate::rng::RngStream;
use crate::theory::SmoothnessConstants;
use crate::vector::DenseVector;

pub const DEFAULT_LOGREG_LAMBDA: f64 = 0.1;

/// One client's shard, rows stored contiguously.
#[derive(Debug, Clone)]
struct Shard {
    rows: Vec<f64>,
    labels: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct LogRegProblem {
    shards: Vec<Shard>,
    dim: usize,
    lambda: f64,
    client_l: Vec<f64>,
}

/// Shuffle by `rng`, drop the remainder and cut into `n` equal contiguous shards.
pub fn partition_even(data: &Dataset, n: usize, rng: &RngStream) -> Result<Vec<Dataset>> {
    if n == 0 || data.len() < n {
        return Err(Error::param(format!(
            "cannot split {} samples across {n} clients",
            data.len()
        )));
    }
    let mut order: Vec<usize> = (0..data.len()).collect();
    order.shuffle(&mut rng.rng());
    let per = data.len() / n;
    Ok((0..n)
        .map(|c| {
            let idx = &order[c * per..(c + 1) * per];
            Dataset {
                features: idx.iter().map(|&i| data.features[i].clone()).collect(),
                labels: idx.iter().map(|&i| data.labels[i]).collect(),
                dim: data.dim,
            }
        })
        .collect())
}

/// Per-client `L_i = lambda_max((1/N_i) sum a a^T) / 4 + 2 lambda`.
fn client_bound(shard: &Shard, d: usize, lambda: f64) -> f64 {
    let m = shard.labels.len();
    let mut gram = vec![0.0; d * d];
    for row in shard.rows.chunks_exact(d) {
        for i in 0..d {
            if row[i] == 0.0 {
                continue;
            }
            for j in 0..d {
                gram[i * d + j] += row[i] * row[j];
            }
        }
    }
    gram.iter_mut().for_each(|g| *g /= m as f64);
    let top = if d == 0 {
        0.0
    } else {
        dense_max_eigenvalue(d, &gram).max(0.0)
    };
    top / 4.0 + 2.0 * lambda
}

/// `L- = mean L_i`, `L+^2 = mean L_i^2`; `L+-` is reported as `L+`, which bounds it.
pub fn logreg_constants(client_l: &[f64]) -> SmoothnessConstants {
    let n = client_l.len() as f64;
    let l_minus = client_l.iter().sum::<f64>() / n;
    let l_plus = (client_l.iter().map(|l| l * l).sum::<f64>() / n).sqrt();
    SmoothnessConstants {
        l_minus,
        l_plus,
        l_pm: l_plus,
        mu: None,
    }
}

fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

/// `1 / (1 + e^z)` without overflow.
fn sigmoid_neg(z: f64) -> f64 {
    if z >= 0.0 {
        let e = (-z).exp();
        e / (1.0 + e)
    } else {
        1.0 / (1.0 + z.exp())
    }
}

impl LogRegProblem {
    pub fn new(shards: Vec<Dataset>, lambda: f64) -> Result<Self> {
        if shards.is_empty() {
            return Err(Error::param("need at least one client"));
        }
        let dim = shards[0].dim;
        if dim == 0 {
            return Err(Error::param("dataset has no features"));
        }
        if !(lambda >= 0.0 && lambda.is_finite()) {
            return Err(Error::param(format!("lambda = {lambda} must be finite and >= 0")));
        }
        let m = shards[0].len();
        let mut out = Vec::with_capacity(shards.len());
        for s in shards {
            if s.dim != dim || s.len() != m || m == 0 {
                return Err(Error::param(
                    "client shards must be nonempty and share size and dimension",
                ));
            }
            if s.labels.iter().any(|&y| y != 1.0 && y != -1.0) {
                return Err(Error::param("labels must be +1 or -1"));
            }
            if s.features.iter().any(|r| r.len() != dim) {
                return Err(Error::param("feature rows must all have the same length"));
            }
            out.push(Shard {
                rows: s.features.concat(),
                labels: s.labels,
            });
        }
        let client_l = out.iter().map(|s| client_bound(s, dim, lambda)).collect();
        Ok(LogRegProblem {
            shards: out,
            dim,
            lambda,
            client_l,
        })
    }

    /// Shuffle, split across `n` clients and build the problem.
    pub fn from_dataset(data: &Dataset, n: usize, lambda: f64, rng: &RngStream) -> Result<Self> {
        if data.is_empty() {
            return Err(Error::param("dataset is empty"));
        }
        Self::new(partition_even(data, n, rng)?, lambda)
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn client_value(&self, i: usize, x: &[f64]) -> f64 {
        let s = &self.shards[i];
        let d = self.dim;
        let loss: f64 = s
            .rows
            .chunks_exact(d)
            .zip(&s.labels)
            .map(|(a, y)| softplus(-y * crate::vector::dot(a, x)))
            .sum::<f64>()
            / s.labels.len() as f64;
        loss + self.regularizer(x)
    }

    fn regularizer(&self, x: &[f64]) -> f64 {
        self.lambda * x.iter().map(|v| v * v / (1.0 + v * v)).sum::<f64>()
    }
}

impl Problem for LogRegProblem {
    fn dim(&self) -> usize {
        self.dim
    }

    fn n_clients(&self) -> usize {
        self.shards.len()
    }

    fn client_grad_into(&self, i: usize, x: &[f64], out: &mut [f64]) {
        let s = &self.shards[i];
        let d = self.dim;
        out.iter_mut().for_each(|o| *o = 0.0);
        for (a, y) in s.rows.chunks_exact(d).zip(&s.labels) {
            let margin = y * crate::vector::dot(a, x);
            let w = -y * sigmoid_neg(margin);
            for (o, aj) in out.iter_mut().zip(a) {
                *o += w * aj;
            }
        }
        let inv = 1.0 / s.labels.len() as f64;
        for (o, xj) in out.iter_mut().zip(x) {
            let q = 1.0 + xj * xj;
            *o = *o * inv + 2.0 * self.lambda * xj / (q * q);
        }
    }

    fn value(&self, x: &DenseVector) -> f64 {
        (0..self.shards.len())
            .map(|i| self.client_value(i, x.as_slice()))
            .sum::<f64>()
            / self.shards.len() as f64
    }

    fn constants(&self) -> SmoothnessConstants {
        logreg_constants(&self.client_l)
    }

    fn client_smoothness(&self, i: usize) -> f64 {
        self.client_l[i]
    }

    fn x0(&self) -> DenseVector {
        DenseVector::zeros(self.dim)
    }

    fn f_lower_bound(&self) -> f64 {
        0.0
    }
}

/// A linearly separable-ish binary dataset: Gaussian features, labels from a
/// random hyperplane with 5% of them flipped.
pub fn synthetic_logreg_dataset(samples: usize, dim: usize, rng: &RngStream) -> Dataset {
    let mut r = rng.rng();
    let w: Vec<f64> = (0..dim).map(|_| r.sample(StandardNormal)).collect();
    let mut features = Vec::with_capacity(samples);
    let mut labels = Vec::with_capacity(samples);
    for _ in 0..samples {
        let a: Vec<f64> = (0..dim)
            .map(|_| r.sample::<f64, _>(StandardNormal) / (dim as f64).sqrt())
            .collect();
        let mut y = if crate::vector::dot(&a, &w) >= 0.0 { 1.0 } else { -1.0 };
        if r.gen::<f64>() < 0.05 {
            y = -y;
        }
        features.push(a);
        labels.push(y);
    }
    Dataset { features, labels, dim }
}

//! Synthetic quadratics `f_i(x) = 1/2 x^T A_i x - x^T b_i`.

use std::io::{Read, Write};
use std::path::Path;
use std::sync::OnceLock;

use rand::Rng;
use rand_distr::StandardNormal;

use super::Problem;
use crate::error::{Error, Result};
use crate::linalg::SymBanded;
use crate::rng::RngStream;
use crate::theory::SmoothnessConstants;
use crate::vector::DenseVector;

const SNAPSHOT_MAGIC: &[u8; 8] = b"TPCQUAD1";

#[derive(Debug)]
pub struct QuadraticProblem {
    matrices: Vec<SymBanded>,
    offsets: Vec<DenseVector>,
    x0: DenseVector,
    lambda_reg: f64,
    noise_scale: f64,
    constants: OnceLock<SmoothnessConstants>,
    client_l: OnceLock<Vec<f64>>,
    optimum: OnceLock<Option<(DenseVector, SymBanded)>>,
}

/// Draw an instance: `A_i = (nu_i / 4) tridiag(-1, 2, -1)`, `b_i = (nu_i / 4)(-1 + nu_b_i, 0, ..., 0)`
/// with `nu_i = 1 + s xi`, `nu_b_i = s xi'`, then shift every `A_i` so the
/// mean matrix has smallest eigenvalue `lambda`.
pub fn gen_quadratic(n: usize, d: usize, lambda: f64, s: f64, rng: &RngStream) -> Result<QuadraticProblem> {
    if n == 0 {
        return Err(Error::param("n must be at least 1"));
    }
    if d < 2 {
        return Err(Error::param("d must be at least 2"));
    }
    if !(lambda >= 0.0 && lambda.is_finite()) || !(s >= 0.0 && s.is_finite()) {
        return Err(Error::param("lambda and s must be finite and nonnegative"));
    }
    let mut matrices = Vec::with_capacity(n);
    let mut offsets = Vec::with_capacity(n);
    for i in 0..n {
        let mut r = rng.derive("client", i as u64).rng();
        let xi_s: f64 = r.sample(StandardNormal);
        let xi_b: f64 = r.sample(StandardNormal);
        let nu_s = 1.0 + s * xi_s;
        let nu_b = s * xi_b;
        let c = nu_s / 4.0;
        matrices.push(SymBanded::tridiagonal(vec![2.0 * c; d], vec![-c; d - 1])?);
        let mut b = DenseVector::zeros(d);
        b[0] = c * (-1.0 + nu_b);
        offsets.push(b);
    }
    let mean = mean_matrix(&matrices);
    let shift = lambda - mean.min_eigenvalue();
    for m in &mut matrices {
        m.add_diagonal(shift);
    }
    let mut x0 = DenseVector::zeros(d);
    x0[0] = (d as f64).sqrt();
    QuadraticProblem::new(matrices, offsets, x0, lambda, s)
}

fn mean_matrix(ms: &[SymBanded]) -> SymBanded {
    let mut acc = SymBanded::zeros(ms[0].dim(), 0);
    for m in ms {
        acc.add_scaled(1.0, m);
    }
    acc.scale(1.0 / ms.len() as f64);
    acc
}

impl QuadraticProblem {
    pub fn new(
        matrices: Vec<SymBanded>,
        offsets: Vec<DenseVector>,
        x0: DenseVector,
        lambda_reg: f64,
        noise_scale: f64,
    ) -> Result<Self> {
        if matrices.is_empty() || matrices.len() != offsets.len() {
            return Err(Error::param("need one offset per matrix and at least one client"));
        }
        let d = x0.len();
        if matrices.iter().any(|m| m.dim() != d) || offsets.iter().any(|b| b.len() != d) {
            return Err(Error::param("all matrices and offsets must match the dimension of x0"));
        }
        Ok(QuadraticProblem {
            matrices,
            offsets,
            x0,
            lambda_reg,
            noise_scale,
            constants: OnceLock::new(),
            client_l: OnceLock::new(),
            optimum: OnceLock::new(),
        })
    }

    pub fn matrices(&self) -> &[SymBanded] {
        &self.matrices
    }

    pub fn offsets(&self) -> &[DenseVector] {
        &self.offsets
    }

    pub fn lambda_reg(&self) -> f64 {
        self.lambda_reg
    }

    pub fn noise_scale(&self) -> f64 {
        self.noise_scale
    }

    pub fn mean_matrix(&self) -> SymBanded {
        mean_matrix(&self.matrices)
    }

    pub fn mean_offset(&self) -> DenseVector {
        let mut acc = DenseVector::zeros(self.x0.len());
        for b in &self.offsets {
            acc.add_assign(b);
        }
        acc.scale(1.0 / self.offsets.len() as f64);
        acc
    }

    /// `(1/n) sum_i A_i^2`.
    pub fn mean_square(&self) -> SymBanded {
        let mut acc = SymBanded::zeros(self.x0.len(), 0);
        for m in &self.matrices {
            acc.add_scaled(1.0, &m.square());
        }
        acc.scale(1.0 / self.matrices.len() as f64);
        acc
    }

    /// `(1/n) sum_i (A_i - A)^2` with `A` the mean matrix.
    pub fn hessian_variance_matrix(&self) -> SymBanded {
        let mean = self.mean_matrix();
        let mut acc = SymBanded::zeros(self.x0.len(), 0);
        for m in &self.matrices {
            let mut dev = m.clone();
            dev.add_scaled(-1.0, &mean);
            acc.add_scaled(1.0, &dev.square());
        }
        acc.scale(1.0 / self.matrices.len() as f64);
        acc
    }

    fn optimum(&self) -> Option<&(DenseVector, SymBanded)> {
        self.optimum
            .get_or_init(|| {
                let mean = self.mean_matrix();
                let x = mean.solve_spd(self.mean_offset().as_slice()).ok()?;
                Some((DenseVector::from_vec(x), mean))
            })
            .as_ref()
    }

    /// Minimizer of `f`, when the mean matrix is positive definite.
    pub fn minimizer(&self) -> Option<DenseVector> {
        self.optimum().map(|(x, _)| x.clone())
    }

    pub fn f_star(&self) -> Option<f64> {
        self.optimum().map(|(x, _)| -0.5 * self.mean_offset().dot(x))
    }

    /// Binary snapshot: magic, `n`, `d`, bandwidth, `lambda`, `s`, `x0`,
    /// then per client `b_i` followed by the band diagonals of `A_i`.
    /// All integers are u64 and all reals f64, little endian.
    pub fn write_snapshot(&self, mut w: impl Write) -> Result<()> {
        let d = self.x0.len();
        let bw = self.matrices.iter().map(SymBanded::bandwidth).max().unwrap_or(0);
        w.write_all(SNAPSHOT_MAGIC)?;
        for v in [self.matrices.len() as u64, d as u64, bw as u64] {
            w.write_all(&v.to_le_bytes())?;
        }
        let put = |w: &mut dyn Write, xs: &[f64]| -> std::io::Result<()> {
            for x in xs {
                w.write_all(&x.to_le_bytes())?;
            }
            Ok(())
        };
        put(&mut w, &[self.lambda_reg, self.noise_scale])?;
        put(&mut w, self.x0.as_slice())?;
        for (m, b) in self.matrices.iter().zip(&self.offsets) {
            put(&mut w, b.as_slice())?;
            for k in 0..=bw {
                if k <= m.bandwidth() {
                    put(&mut w, &m.diagonals()[k])?;
                } else {
                    put(&mut w, &vec![0.0; d - k])?;
                }
            }
        }
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let f = std::fs::File::create(path)?;
        let mut w = std::io::BufWriter::new(f);
        self.write_snapshot(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn read_snapshot(mut r: impl Read) -> Result<Self> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)
            .map_err(|_| Error::Snapshot("file too short".into()))?;
        if &magic != SNAPSHOT_MAGIC {
            return Err(Error::Snapshot("not a quadratic snapshot".into()));
        }
        let mut buf = [0u8; 8];
        let mut next = |r: &mut dyn Read| -> Result<[u8; 8]> {
            r.read_exact(&mut buf)
                .map_err(|_| Error::Snapshot("unexpected end of snapshot".into()))?;
            Ok(buf)
        };
        let n = u64::from_le_bytes(next(&mut r)?) as usize;
        let d = u64::from_le_bytes(next(&mut r)?) as usize;
        let bw = u64::from_le_bytes(next(&mut r)?) as usize;
        if n == 0 || d == 0 || bw >= d {
            return Err(Error::Snapshot(format!("bad header n={n} d={d} bandwidth={bw}")));
        }
        let mut reals = |r: &mut dyn Read, len: usize| -> Result<Vec<f64>> {
            (0..len).map(|_| Ok(f64::from_le_bytes(next(r)?))).collect()
        };
        let head = reals(&mut r, 2)?;
        let x0 = DenseVector::from_vec(reals(&mut r, d)?);
        let mut matrices = Vec::with_capacity(n);
        let mut offsets = Vec::with_capacity(n);
        for _ in 0..n {
            offsets.push(DenseVector::from_vec(reals(&mut r, d)?));
            let mut m = SymBanded::zeros(d, bw);
            let mut dense_band = Vec::with_capacity(bw + 1);
            for k in 0..=bw {
                dense_band.push(reals(&mut r, d - k)?);
            }
            m.set_diagonals(dense_band)?;
            matrices.push(m);
        }
        QuadraticProblem::new(matrices, offsets, x0, head[0], head[1])
    }

    pub fn load(path: &Path) -> Result<Self> {
        let f = std::fs::File::open(path)?;
        Self::read_snapshot(std::io::BufReader::new(f))
    }
}

impl Problem for QuadraticProblem {
    fn dim(&self) -> usize {
        self.x0.len()
    }

    fn n_clients(&self) -> usize {
        self.matrices.len()
    }

    fn client_grad_into(&self, i: usize, x: &[f64], out: &mut [f64]) {
        self.matrices[i].matvec_into(x, out);
        for (o, b) in out.iter_mut().zip(self.offsets[i].iter()) {
            *o -= b;
        }
    }

    fn value(&self, x: &DenseVector) -> f64 {
        let n = self.matrices.len() as f64;
        self.matrices
            .iter()
            .zip(&self.offsets)
            .map(|(a, b)| 0.5 * a.quad_form(x.as_slice()) - b.dot(x))
            .sum::<f64>()
            / n
    }

    fn constants(&self) -> SmoothnessConstants {
        *self.constants.get_or_init(|| {
            let mean = self.mean_matrix();
            let l_minus = mean.max_eigenvalue();
            let mu = mean.min_eigenvalue();
            let l_plus = self.mean_square().max_eigenvalue().max(0.0).sqrt();
            let l_pm = self.hessian_variance_matrix().max_eigenvalue().max(0.0).sqrt();
            SmoothnessConstants {
                l_minus,
                l_plus,
                l_pm,
                mu: Some(mu),
            }
        })
    }

    fn client_smoothness(&self, i: usize) -> f64 {
        self.client_l.get_or_init(|| {
            self.matrices
                .iter()
                .map(|m| m.max_eigenvalue().abs().max(m.min_eigenvalue().abs()))
                .collect()
        })[i]
    }

    fn x0(&self) -> DenseVector {
        self.x0.clone()
    }

    fn suboptimality(&self, x: &DenseVector) -> Option<f64> {
        let (xs, mean) = self.optimum()?;
        let e = x.sub(xs);
        Some(0.5 * mean.quad_form(e.as_slice()))
    }

    fn f_lower_bound(&self) -> f64 {
        self.f_star().unwrap_or(f64::NEG_INFINITY)
    }
}

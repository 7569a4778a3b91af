//! Symmetric banded matrices and the small amount of eigenvalue machinery the
//! problems need.
//!
//! Extreme eigenvalues of tridiagonal matrices come straight from Sturm-count
//! bisection. Wider bands are first reduced to tridiagonal form with
//! Householder reflections on a dense copy, which is fine up to d ~ 2000.

use crate::error::{Error, Result};

/// Symmetric matrix with half-bandwidth `bw`: entry `(i, j)` is zero when
/// `|i - j| > bw`. `diags[k][i]` holds `M[i][i + k]`.
#[derive(Debug, Clone, PartialEq)]
pub struct SymBanded {
    d: usize,
    diags: Vec<Vec<f64>>,
}

impl SymBanded {
    pub fn zeros(d: usize, bw: usize) -> Self {
        let bw = bw.min(d.saturating_sub(1));
        SymBanded {
            d,
            diags: (0..=bw).map(|k| vec![0.0; d - k]).collect(),
        }
    }

    pub fn identity(d: usize) -> Self {
        let mut m = SymBanded::zeros(d, 0);
        m.diags[0].iter_mut().for_each(|v| *v = 1.0);
        m
    }

    /// Tridiagonal matrix from its diagonal (length d) and off-diagonal (length d-1).
    pub fn tridiagonal(diag: Vec<f64>, off: Vec<f64>) -> Result<Self> {
        let d = diag.len();
        if d == 0 || off.len() + 1 != d {
            return Err(Error::param("tridiagonal: off-diagonal must have length d-1"));
        }
        let mut diags = vec![diag];
        if d > 1 {
            diags.push(off);
        }
        Ok(SymBanded { d, diags })
    }

    /// Build from a dense row-major matrix. The band is trimmed to the widest
    /// nonzero diagonal. Fails if the input is not symmetric within `tol`.
    pub fn from_dense(d: usize, data: &[f64], tol: f64) -> Result<Self> {
        if data.len() != d * d {
            return Err(Error::param("from_dense: expected d*d entries"));
        }
        let mut bw = 0;
        for i in 0..d {
            for j in (i + 1)..d {
                let (a, b) = (data[i * d + j], data[j * d + i]);
                if (a - b).abs() > tol * (1.0 + a.abs().max(b.abs())) {
                    return Err(Error::param(format!("matrix not symmetric at ({i}, {j}): {a} vs {b}")));
                }
                if a != 0.0 || b != 0.0 {
                    bw = bw.max(j - i);
                }
            }
        }
        let mut m = SymBanded::zeros(d, bw);
        for k in 0..=m.bandwidth() {
            for i in 0..(d - k) {
                m.diags[k][i] = 0.5 * (data[i * d + i + k] + data[(i + k) * d + i]);
            }
        }
        Ok(m)
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn bandwidth(&self) -> usize {
        self.diags.len() - 1
    }

    pub fn diagonals(&self) -> &[Vec<f64>] {
        &self.diags
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (i, j) = if i <= j { (i, j) } else { (j, i) };
        let k = j - i;
        if k > self.bandwidth() {
            0.0
        } else {
            self.diags[k][i]
        }
    }

    pub fn to_dense(&self) -> Vec<f64> {
        let d = self.d;
        let mut out = vec![0.0; d * d];
        for (k, diag) in self.diags.iter().enumerate() {
            for (i, v) in diag.iter().enumerate() {
                out[i * d + i + k] = *v;
                out[(i + k) * d + i] = *v;
            }
        }
        out
    }

    /// `out = M x`.
    pub fn matvec_into(&self, x: &[f64], out: &mut [f64]) {
        debug_assert_eq!(x.len(), self.d);
        debug_assert_eq!(out.len(), self.d);
        for (o, (m, xi)) in out.iter_mut().zip(self.diags[0].iter().zip(x)) {
            *o = m * xi;
        }
        for (k, diag) in self.diags.iter().enumerate().skip(1) {
            for (i, v) in diag.iter().enumerate() {
                out[i] += v * x[i + k];
                out[i + k] += v * x[i];
            }
        }
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.d];
        self.matvec_into(x, &mut out);
        out
    }

    /// `x^T M x`.
    pub fn quad_form(&self, x: &[f64]) -> f64 {
        let mut acc: f64 = self.diags[0].iter().zip(x).map(|(m, xi)| m * xi * xi).sum();
        for (k, diag) in self.diags.iter().enumerate().skip(1) {
            for (i, v) in diag.iter().enumerate() {
                acc += 2.0 * v * x[i] * x[i + k];
            }
        }
        acc
    }

    /// Replace the band. `diags[k]` must have length `d - k`.
    pub fn set_diagonals(&mut self, diags: Vec<Vec<f64>>) -> Result<()> {
        if diags.is_empty() || diags.len() > self.d || diags.iter().enumerate().any(|(k, v)| v.len() != self.d - k) {
            return Err(Error::param("band diagonals have the wrong shape"));
        }
        self.diags = diags;
        Ok(())
    }

    pub fn add_diagonal(&mut self, shift: f64) {
        self.diags[0].iter_mut().for_each(|v| *v += shift);
    }

    pub fn scale(&mut self, c: f64) {
        self.diags.iter_mut().flatten().for_each(|v| *v *= c);
    }

    /// `self += c * other`, widening the band if needed.
    pub fn add_scaled(&mut self, c: f64, other: &SymBanded) {
        assert_eq!(self.d, other.d, "dimension mismatch");
        while self.bandwidth() < other.bandwidth() {
            let k = self.diags.len();
            self.diags.push(vec![0.0; self.d - k]);
        }
        for (k, diag) in other.diags.iter().enumerate() {
            for (a, b) in self.diags[k].iter_mut().zip(diag) {
                *a += c * b;
            }
        }
    }

    /// `M * M` (symmetric, bandwidth doubles).
    pub fn square(&self) -> SymBanded {
        let d = self.d;
        let bw = self.bandwidth();
        let mut out = SymBanded::zeros(d, 2 * bw);
        let obw = out.bandwidth();
        for i in 0..d {
            for k in 0..=obw {
                let j = i + k;
                if j >= d {
                    break;
                }
                // sum_l M[i][l] M[l][j] with |i-l| <= bw and |l-j| <= bw
                let lo = j.saturating_sub(bw);
                let hi = (i + bw).min(d - 1);
                let mut acc = 0.0;
                for l in lo..=hi {
                    acc += self.get(i, l) * self.get(l, j);
                }
                out.diags[k][i] = acc;
            }
        }
        out
    }

    /// Largest eigenvalue.
    pub fn max_eigenvalue(&self) -> f64 {
        let (diag, off) = self.tridiagonal_form();
        tridiag_kth_eigenvalue(&diag, &off, self.d - 1)
    }

    /// Smallest eigenvalue.
    pub fn min_eigenvalue(&self) -> f64 {
        let (diag, off) = self.tridiagonal_form();
        tridiag_kth_eigenvalue(&diag, &off, 0)
    }

    /// Diagonal and off-diagonal of an orthogonally similar tridiagonal matrix.
    pub fn tridiagonal_form(&self) -> (Vec<f64>, Vec<f64>) {
        if self.bandwidth() <= 1 {
            let diag = self.diags[0].clone();
            let off = if self.bandwidth() == 1 {
                self.diags[1].clone()
            } else {
                vec![0.0; self.d.saturating_sub(1)]
            };
            return (diag, off);
        }
        let mut a = self.to_dense();
        householder_tridiagonalize(self.d, &mut a)
    }

    /// Solve `M x = b` for symmetric positive definite `M` by banded Cholesky.
    pub fn solve_spd(&self, b: &[f64]) -> Result<Vec<f64>> {
        let d = self.d;
        let bw = self.bandwidth();
        // lower factor L stored by rows: l[i][k] = L[i][i - bw + k]
        let mut l = vec![vec![0.0; bw + 1]; d];
        for i in 0..d {
            let j0 = i.saturating_sub(bw);
            for j in j0..=i {
                let mut s = self.get(i, j);
                let k0 = j0.max(j.saturating_sub(bw));
                for k in k0..j {
                    s -= l[i][k + bw - i] * l[j][k + bw - j];
                }
                if i == j {
                    if s <= 0.0 || !s.is_finite() {
                        return Err(Error::domain("matrix is not positive definite"));
                    }
                    l[i][bw] = s.sqrt();
                } else {
                    l[i][j + bw - i] = s / l[j][bw];
                }
            }
        }
        // forward: L z = b
        let mut z = vec![0.0; d];
        for i in 0..d {
            let mut s = b[i];
            for k in i.saturating_sub(bw)..i {
                s -= l[i][k + bw - i] * z[k];
            }
            z[i] = s / l[i][bw];
        }
        // backward: L^T x = z
        let mut x = vec![0.0; d];
        for i in (0..d).rev() {
            let mut s = z[i];
            for k in (i + 1)..(i + bw + 1).min(d) {
                s -= l[k][i + bw - k] * x[k];
            }
            x[i] = s / l[i][bw];
        }
        Ok(x)
    }
}

/// Number of eigenvalues of the symmetric tridiagonal matrix strictly below `x`.
pub fn sturm_count(diag: &[f64], off: &[f64], x: f64) -> usize {
    let mut count = 0;
    let mut q = 1.0_f64;
    for i in 0..diag.len() {
        let b2 = if i == 0 { 0.0 } else { off[i - 1] * off[i - 1] };
        q = diag[i] - x - if i == 0 { 0.0 } else { b2 / q };
        if q == 0.0 {
            q = f64::EPSILON * (diag[i].abs() + x.abs() + 1e-300);
        }
        if q < 0.0 {
            count += 1;
        }
    }
    count
}

/// The `k`-th smallest eigenvalue (0-based) of a symmetric tridiagonal matrix.
pub fn tridiag_kth_eigenvalue(diag: &[f64], off: &[f64], k: usize) -> f64 {
    let n = diag.len();
    assert!(k < n, "eigenvalue index out of range");
    // Gershgorin bounds
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for i in 0..n {
        let r = if i > 0 { off[i - 1].abs() } else { 0.0 } + if i + 1 < n { off[i].abs() } else { 0.0 };
        lo = lo.min(diag[i] - r);
        hi = hi.max(diag[i] + r);
    }
    let pad = 1e-12 * (1.0 + lo.abs().max(hi.abs()));
    lo -= pad;
    hi += pad;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if sturm_count(diag, off, mid) > k {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Reduce a dense symmetric row-major matrix to tridiagonal form in place.
/// Returns `(diagonal, off_diagonal)`.
fn householder_tridiagonalize(n: usize, a: &mut [f64]) -> (Vec<f64>, Vec<f64>) {
    let mut v = vec![0.0; n];
    let mut w = vec![0.0; n];
    for k in 0..n.saturating_sub(2) {
        let m = k + 1;
        let norm: f64 = (m..n).map(|i| a[i * n + k] * a[i * n + k]).sum::<f64>().sqrt();
        if norm == 0.0 {
            continue;
        }
        let x0 = a[m * n + k];
        let alpha = if x0 > 0.0 { -norm } else { norm };
        for i in m..n {
            v[i] = a[i * n + k];
        }
        v[m] -= alpha;
        let vnorm: f64 = (m..n).map(|i| v[i] * v[i]).sum::<f64>().sqrt();
        if vnorm == 0.0 {
            continue;
        }
        for i in m..n {
            v[i] /= vnorm;
        }
        // w = S v, c = v^T S v, q = w - c v
        for i in m..n {
            let row = &a[i * n + m..i * n + n];
            w[i] = row.iter().zip(&v[m..n]).map(|(s, vj)| s * vj).sum();
        }
        let c: f64 = (m..n).map(|i| v[i] * w[i]).sum();
        for i in m..n {
            w[i] -= c * v[i];
        }
        for i in m..n {
            let (vi, qi) = (v[i], w[i]);
            let row = &mut a[i * n + m..i * n + n];
            for (j, s) in row.iter_mut().enumerate() {
                let j = j + m;
                *s -= 2.0 * (vi * w[j] + qi * v[j]);
            }
        }
        a[m * n + k] = alpha;
        a[k * n + m] = alpha;
        for i in (m + 1)..n {
            a[i * n + k] = 0.0;
            a[k * n + i] = 0.0;
        }
    }
    let diag = (0..n).map(|i| a[i * n + i]).collect();
    let off = (0..n.saturating_sub(1)).map(|i| a[i * n + i + 1]).collect();
    (diag, off)
}

/// Largest eigenvalue of a dense symmetric row-major matrix.
pub fn dense_max_eigenvalue(n: usize, a: &[f64]) -> f64 {
    let mut work = a.to_vec();
    let (diag, off) = householder_tridiagonalize(n, &mut work);
    tridiag_kth_eigenvalue(&diag, &off, n - 1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn second_difference(d: usize) -> SymBanded {
        SymBanded::tridiagonal(vec![2.0; d], vec![-1.0; d - 1]).unwrap()
    }

    #[test]
    fn second_difference_spectrum_closed_form() {
        // eigenvalues 2 - 2 cos(k pi / (d + 1))
        let d = 40;
        let m = second_difference(d);
        let (diag, off) = m.tridiagonal_form();
        for k in 0..d {
            let want = 2.0 - 2.0 * (((k + 1) as f64) * std::f64::consts::PI / (d as f64 + 1.0)).cos();
            let got = tridiag_kth_eigenvalue(&diag, &off, k);
            assert!((got - want).abs() < 1e-12, "k={k}: {got} vs {want}");
        }
    }

    #[test]
    fn householder_matches_closed_form_for_square() {
        // T^2 has eigenvalues (2 - 2cos)^2; band is 2 so it goes through Householder
        let d = 30;
        let t2 = second_difference(d).square();
        assert_eq!(t2.bandwidth(), 2);
        let want = (2.0 - 2.0 * ((d as f64) * std::f64::consts::PI / (d as f64 + 1.0)).cos()).powi(2);
        assert!((t2.max_eigenvalue() - want).abs() < 1e-11);
        let want_min = (2.0 - 2.0 * (std::f64::consts::PI / (d as f64 + 1.0)).cos()).powi(2);
        assert!((t2.min_eigenvalue() - want_min).abs() < 1e-11);
    }

    #[test]
    fn square_matches_dense_product() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let d = 9;
        let mut m = SymBanded::zeros(d, 2);
        for k in 0..=2 {
            for i in 0..(d - k) {
                m.diags[k][i] = rng.gen_range(-1.0..1.0);
            }
        }
        let dense = m.to_dense();
        let sq = m.square().to_dense();
        for i in 0..d {
            for j in 0..d {
                let want: f64 = (0..d).map(|l| dense[i * d + l] * dense[l * d + j]).sum();
                assert!((sq[i * d + j] - want).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn from_dense_round_trip_and_band_detection() {
        let m = second_difference(6);
        let back = SymBanded::from_dense(6, &m.to_dense(), 1e-12).unwrap();
        assert_eq!(back.bandwidth(), 1);
        assert_eq!(back, m);
        let mut bad = m.to_dense();
        bad[1] = 5.0;
        assert!(SymBanded::from_dense(6, &bad, 1e-12).is_err());
    }

    #[test]
    fn cholesky_solve() {
        let d = 25;
        let mut m = second_difference(d).square();
        m.add_diagonal(0.5);
        let x: Vec<f64> = (0..d).map(|i| (i as f64).sin()).collect();
        let b = m.matvec(&x);
        let got = m.solve_spd(&b).unwrap();
        for (g, w) in got.iter().zip(&x) {
            assert!((g - w).abs() < 1e-10);
        }
        let mut neg = SymBanded::identity(3);
        neg.scale(-1.0);
        assert!(neg.solve_spd(&[1.0, 1.0, 1.0]).is_err());
    }

    #[test]
    fn dense_eigen_of_random_matrix_bounds_rayleigh_quotients() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let n = 12;
        let mut a = vec![0.0; n * n];
        for i in 0..n {
            for j in i..n {
                let v: f64 = rng.gen_range(-1.0..1.0);
                a[i * n + j] = v;
                a[j * n + i] = v;
            }
        }
        let top = dense_max_eigenvalue(n, &a);
        for _ in 0..2000 {
            let x: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let ax: Vec<f64> = (0..n).map(|i| (0..n).map(|j| a[i * n + j] * x[j]).sum()).collect();
            let rq = crate::vector::dot(&x, &ax) / crate::vector::sq_norm(&x);
            assert!(rq <= top + 1e-12);
        }
        // trace is preserved by the similarity transform
        let mut work = a.clone();
        let (diag, _) = householder_tridiagonalize(n, &mut work);
        let tr: f64 = (0..n).map(|i| a[i * n + i]).sum();
        assert!((diag.iter().sum::<f64>() - tr).abs() < 1e-12);
    }
}

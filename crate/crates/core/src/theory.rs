//! Closed-form constants, stepsizes and convergence bounds.
//!
//! Every method is summarized by a pair `(A, B)` such that
//! `E||C_{h,y}(x) - x||^2 <= (1 - A)||h - y||^2 + B||x - y||^2`.
//! Methods with a free Young's-inequality parameter `s` are reported at the
//! `s` minimizing `B/A`; the free-`s` forms are available as `*_with_s`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TheoryParams {
    pub a: f64,
    pub b: f64,
    /// Optimal free parameter, when the method has one and it is finite.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub s_star: Option<f64>,
    /// The constants bound the error of the aggregated estimate
    /// `||g - grad f||^2` rather than the per-worker average.
    #[serde(default)]
    pub aggregated: bool,
}

impl TheoryParams {
    fn new(a: f64, b: f64) -> Self {
        TheoryParams {
            a,
            b,
            s_star: None,
            aggregated: false,
        }
    }

    pub fn ratio(&self) -> f64 {
        self.b / self.a
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SmoothnessConstants {
    pub l_minus: f64,
    pub l_plus: f64,
    pub l_pm: f64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub mu: Option<f64>,
}

impl SmoothnessConstants {
    pub fn validate(&self) -> Result<()> {
        let tol = 1e-9 * (1.0 + self.l_plus.abs());
        if !(self.l_minus >= 0.0) || self.l_minus > self.l_plus + tol {
            return Err(Error::param(format!(
                "need 0 <= L- <= L+, got L- = {}, L+ = {}",
                self.l_minus, self.l_plus
            )));
        }
        if let Some(mu) = self.mu {
            if mu > self.l_minus + tol {
                return Err(Error::param(format!("mu = {mu} exceeds L- = {}", self.l_minus)));
            }
        }
        Ok(())
    }
}

fn check_unit(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v <= 1.0 {
        Ok(())
    } else {
        Err(Error::param(format!("{name} = {v} outside (0, 1]")))
    }
}

fn check_nonneg(name: &str, v: f64) -> Result<()> {
    if v >= 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::param(format!(
            "{name} = {v} must be a finite nonnegative number"
        )))
    }
}

/// `1 - (1 - a1)(1 - a2)`.
pub fn residual_alpha(alpha1: f64, alpha2: f64) -> f64 {
    1.0 - (1.0 - alpha1) * (1.0 - alpha2)
}

/// EF21-shaped constants for contraction `q = 1 - alpha` at the optimal `s`.
fn ef21_shape(alpha: f64) -> TheoryParams {
    if alpha == 1.0 {
        return TheoryParams::new(1.0, 0.0);
    }
    let root = (1.0 - alpha).sqrt();
    TheoryParams {
        a: 1.0 - root,
        b: (1.0 - alpha) / (1.0 - root),
        s_star: Some(-1.0 + 1.0 / root),
        aggregated: false,
    }
}

pub fn params_ef21(alpha: f64) -> Result<TheoryParams> {
    check_unit("alpha", alpha)?;
    Ok(ef21_shape(alpha))
}

/// EF21 constants for an arbitrary `0 < s < alpha/(1-alpha)`.
pub fn ef21_with_s(alpha: f64, s: f64) -> Result<TheoryParams> {
    check_unit("alpha", alpha)?;
    let a = 1.0 - (1.0 - alpha) * (1.0 + s);
    if !(s > 0.0) || !(a > 0.0) {
        return Err(Error::param(format!("s = {s} violates (1 - alpha)(1 + s) < 1")));
    }
    let mut tp = TheoryParams::new(a, (1.0 - alpha) * (1.0 + 1.0 / s));
    tp.s_star = Some(s);
    Ok(tp)
}

pub fn params_lag(zeta: f64) -> Result<TheoryParams> {
    check_nonneg("zeta", zeta)?;
    Ok(TheoryParams::new(1.0, zeta))
}

pub fn params_clag(alpha: f64, zeta: f64) -> Result<TheoryParams> {
    check_unit("alpha", alpha)?;
    check_nonneg("zeta", zeta)?;
    let mut tp = ef21_shape(alpha);
    tp.b = tp.b.max(zeta);
    Ok(tp)
}

pub fn params_v1(alpha: f64) -> Result<TheoryParams> {
    check_unit("alpha", alpha)?;
    Ok(TheoryParams::new(1.0, 1.0 - alpha))
}

pub fn params_v2(alpha: f64, omega: f64) -> Result<TheoryParams> {
    check_unit("alpha", alpha)?;
    check_nonneg("omega", omega)?;
    Ok(TheoryParams::new(alpha, (1.0 - alpha) * omega))
}

pub fn params_v3(alpha: f64, inner: &TheoryParams) -> Result<TheoryParams> {
    check_unit("alpha", alpha)?;
    check_unit("A1", inner.a)?;
    check_nonneg("B1", inner.b)?;
    Ok(TheoryParams::new(
        residual_alpha(alpha, inner.a),
        (1.0 - alpha) * inner.b,
    ))
}

pub fn params_v4(alpha1: f64, alpha2: f64) -> Result<TheoryParams> {
    check_unit("alpha1", alpha1)?;
    check_unit("alpha2", alpha2)?;
    Ok(ef21_shape(residual_alpha(alpha1, alpha2)))
}

/// 3PCv5 at the optimal `s`. `alpha` may be 0 here (the bound stays valid).
pub fn params_v5(p: f64, alpha: f64) -> Result<TheoryParams> {
    check_unit("p", p)?;
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::param(format!("alpha = {alpha} outside [0, 1]")));
    }
    if p == 1.0 {
        return Ok(TheoryParams::new(1.0, 0.0));
    }
    let root = (1.0 - p).sqrt();
    Ok(TheoryParams {
        a: 1.0 - root,
        b: (1.0 - p) * (1.0 - alpha) / (1.0 - root),
        s_star: Some(-1.0 + 1.0 / root),
        aggregated: false,
    })
}

/// 3PCv5 constants for an arbitrary `0 < s < p/(1-p)`.
pub fn v5_with_s(p: f64, alpha: f64, s: f64) -> Result<TheoryParams> {
    check_unit("p", p)?;
    let a = p - s * (1.0 - p);
    if !(s > 0.0) || !(a > 0.0) {
        return Err(Error::param(format!("s = {s} violates (1 - p)(1 + s) < 1")));
    }
    let mut tp = TheoryParams::new(a, (1.0 - p) * (1.0 + 1.0 / s) * (1.0 - alpha));
    tp.s_star = Some(s);
    Ok(tp)
}

/// MARINA's constants; they bound the aggregated error `||g - grad f||^2`.
pub fn params_marina(p: f64, omega: f64, n: usize) -> Result<TheoryParams> {
    check_unit("p", p)?;
    check_nonneg("omega", omega)?;
    if n == 0 {
        return Err(Error::param("n must be at least 1"));
    }
    let mut tp = TheoryParams::new(p, (1.0 - p) * omega / n as f64);
    tp.aggregated = true;
    Ok(tp)
}

/// `1 / (L- + L+ sqrt(B/A))`.
pub fn stepsize_noncvx(c: &SmoothnessConstants, tp: &TheoryParams) -> f64 {
    1.0 / (c.l_minus + c.l_plus * tp.ratio().sqrt())
}

/// `min{1 / (L- + L+ sqrt(2B/A)), A / (2 mu)}`.
pub fn stepsize_pl(c: &SmoothnessConstants, tp: &TheoryParams) -> Result<f64> {
    let mu =
        c.mu.ok_or_else(|| Error::domain("PL stepsize needs the PL constant mu"))?;
    if !(mu > 0.0) {
        return Err(Error::domain("PL constant mu must be positive"));
    }
    Ok((1.0 / (c.l_minus + c.l_plus * (2.0 * tp.ratio()).sqrt())).min(tp.a / (2.0 * mu)))
}

/// Average squared gradient norm bound after `t` rounds:
/// `2 delta0 / (gamma t) + g0 / (A t)`.
pub fn bound_noncvx(delta0: f64, gamma: f64, t: usize, g0: f64, a: f64) -> f64 {
    let t = t as f64;
    2.0 * delta0 / (gamma * t) + g0 / (a * t)
}

/// Suboptimality bound `(1 - gamma mu)^t (delta0 + gamma g0 / A)`.
pub fn bound_pl(delta0: f64, gamma: f64, mu: f64, t: usize, g0: f64, a: f64) -> f64 {
    (1.0 - gamma * mu).powf(t as f64) * (delta0 + gamma * g0 / a)
}

/// Rounds to reach average squared gradient norm `eps^2`, up to constants.
pub fn complexity_noncvx(delta0: f64, c: &SmoothnessConstants, tp: &TheoryParams, g0: f64, eps: f64) -> f64 {
    let m1 = c.l_minus + c.l_plus * tp.ratio().sqrt();
    delta0 * m1 / (eps * eps) + g0 / (tp.a * eps * eps)
}

/// Rounds to reach suboptimality `eps` under PL, up to constants.
/// The `max{., A}` is kept as written even though `A <= 1` never dominates.
pub fn complexity_pl(
    delta0: f64,
    c: &SmoothnessConstants,
    tp: &TheoryParams,
    g0: f64,
    gamma: f64,
    eps: f64,
) -> Result<f64> {
    let mu = c.mu.ok_or_else(|| Error::domain("PL complexity needs mu"))?;
    let m1 = c.l_minus + c.l_plus * tp.ratio().sqrt();
    Ok((m1 / mu).max(tp.a) * ((delta0 + g0 * gamma / tp.a) / eps).ln())
}

/// `a gamma^2 + b gamma <= 1`.
pub fn stepsize_fact_check(a: f64, b: f64, gamma: f64) -> bool {
    a * gamma * gamma + b * gamma <= 1.0
}

//! Three point compressors.
//!
//! A mechanism maps the worker's last estimate `h`, its previous gradient `y`
//! and its current gradient `x` to a new estimate. Each step also returns the
//! messages the worker sends, and the new estimate is always computed by
//! replaying those messages on `h`, so the server can never drift from the
//! worker.

mod message;
pub mod verify;

use serde::{Deserialize, Serialize};

pub use message::{index_bits, replay, total_bits, Message, Payload, PayloadKind, VALUE_BITS};
pub use verify::{verify_3pc_inequality, VerifyOptions, VerifyReport};

use crate::compressors::{alpha_of, omega_of, CompressCtx, Compressed, CompressorSpec};
use crate::error::{Error, Result};
use crate::rng::RngStream;
use crate::theory::{self, TheoryParams};
use crate::vector::DenseVector;

/// How a lazy-aggregation trigger measures "how much has changed".
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Trigger {
    /// `||x - h||^2 > zeta ||x - y||^2`.
    #[default]
    Gradient,
    /// `||x - h||^2 > zeta L_i^2 ||x^{t+1} - x^t||^2`.
    Iterate,
}

/// Whether a Bernoulli coin is drawn once per round for everybody or per worker.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CoinMode {
    #[default]
    Shared,
    PerWorker,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawMethod", into = "RawMethod")]
pub enum MethodSpec {
    Ef21 {
        compressor: CompressorSpec,
    },
    Lag {
        zeta: f64,
        trigger: Trigger,
    },
    Clag {
        zeta: f64,
        compressor: CompressorSpec,
        trigger: Trigger,
    },
    V1 {
        compressor: CompressorSpec,
    },
    V2 {
        q: CompressorSpec,
        c: CompressorSpec,
        coin: CoinMode,
    },
    V3 {
        inner: Box<MethodSpec>,
        compressor: CompressorSpec,
    },
    V4 {
        c1: CompressorSpec,
        c2: CompressorSpec,
    },
    V5 {
        p: f64,
        compressor: CompressorSpec,
        coin: CoinMode,
    },
    Marina {
        p: f64,
        q: CompressorSpec,
        coin: CoinMode,
    },
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawMethod {
    method: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    zeta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    p: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    compressor: Option<CompressorSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    q: Option<CompressorSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    c: Option<CompressorSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    c1: Option<CompressorSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    c2: Option<CompressorSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    inner: Option<Box<MethodSpec>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    trigger: Option<Trigger>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    coin: Option<CoinMode>,
}

impl RawMethod {
    fn only(&self, allowed: &[&str]) -> std::result::Result<(), String> {
        let present = [
            ("zeta", self.zeta.is_some()),
            ("p", self.p.is_some()),
            ("compressor", self.compressor.is_some()),
            ("q", self.q.is_some()),
            ("c", self.c.is_some()),
            ("c1", self.c1.is_some()),
            ("c2", self.c2.is_some()),
            ("inner", self.inner.is_some()),
            ("trigger", self.trigger.is_some()),
            ("coin", self.coin.is_some()),
        ];
        for (name, set) in present {
            if set && !allowed.contains(&name) {
                return Err(format!("field '{name}' is not used by method '{}'", self.method));
            }
        }
        Ok(())
    }
}

fn need<T>(v: Option<T>, method: &str, field: &str) -> std::result::Result<T, String> {
    v.ok_or_else(|| format!("method '{method}' needs field '{field}'"))
}

impl TryFrom<RawMethod> for MethodSpec {
    type Error = String;

    fn try_from(raw: RawMethod) -> std::result::Result<Self, String> {
        let m = raw.method.clone();
        let spec = match m.as_str() {
            "ef21" => {
                raw.only(&["compressor"])?;
                MethodSpec::Ef21 {
                    compressor: need(raw.compressor, &m, "compressor")?,
                }
            }
            "lag" => {
                raw.only(&["zeta", "trigger"])?;
                MethodSpec::Lag {
                    zeta: need(raw.zeta, &m, "zeta")?,
                    trigger: raw.trigger.unwrap_or_default(),
                }
            }
            "clag" => {
                raw.only(&["zeta", "compressor", "trigger"])?;
                MethodSpec::Clag {
                    zeta: need(raw.zeta, &m, "zeta")?,
                    compressor: need(raw.compressor, &m, "compressor")?,
                    trigger: raw.trigger.unwrap_or_default(),
                }
            }
            "v1" => {
                raw.only(&["compressor"])?;
                MethodSpec::V1 {
                    compressor: need(raw.compressor, &m, "compressor")?,
                }
            }
            "v2" => {
                raw.only(&["q", "c", "coin"])?;
                MethodSpec::V2 {
                    q: need(raw.q, &m, "q")?,
                    c: need(raw.c, &m, "c")?,
                    coin: raw.coin.unwrap_or_default(),
                }
            }
            "v3" => {
                raw.only(&["inner", "compressor"])?;
                MethodSpec::V3 {
                    inner: need(raw.inner, &m, "inner")?,
                    compressor: need(raw.compressor, &m, "compressor")?,
                }
            }
            "v4" => {
                raw.only(&["c1", "c2"])?;
                MethodSpec::V4 {
                    c1: need(raw.c1, &m, "c1")?,
                    c2: need(raw.c2, &m, "c2")?,
                }
            }
            "v5" => {
                raw.only(&["p", "compressor", "coin"])?;
                MethodSpec::V5 {
                    p: need(raw.p, &m, "p")?,
                    compressor: need(raw.compressor, &m, "compressor")?,
                    coin: raw.coin.unwrap_or_default(),
                }
            }
            "marina" => {
                raw.only(&["p", "q", "coin"])?;
                MethodSpec::Marina {
                    p: need(raw.p, &m, "p")?,
                    q: need(raw.q, &m, "q")?,
                    coin: raw.coin.unwrap_or_default(),
                }
            }
            other => return Err(format!("unknown method '{other}'")),
        };
        spec.check_scalars().map_err(|e| e.to_string())?;
        Ok(spec)
    }
}

impl From<MethodSpec> for RawMethod {
    fn from(spec: MethodSpec) -> Self {
        let mut raw = RawMethod {
            method: spec.name().to_owned(),
            ..Default::default()
        };
        match spec {
            MethodSpec::Ef21 { compressor } | MethodSpec::V1 { compressor } => raw.compressor = Some(compressor),
            MethodSpec::Lag { zeta, trigger } => {
                raw.zeta = Some(zeta);
                raw.trigger = Some(trigger);
            }
            MethodSpec::Clag {
                zeta,
                compressor,
                trigger,
            } => {
                raw.zeta = Some(zeta);
                raw.compressor = Some(compressor);
                raw.trigger = Some(trigger);
            }
            MethodSpec::V2 { q, c, coin } => {
                raw.q = Some(q);
                raw.c = Some(c);
                raw.coin = Some(coin);
            }
            MethodSpec::V3 { inner, compressor } => {
                raw.inner = Some(inner);
                raw.compressor = Some(compressor);
            }
            MethodSpec::V4 { c1, c2 } => {
                raw.c1 = Some(c1);
                raw.c2 = Some(c2);
            }
            MethodSpec::V5 { p, compressor, coin } => {
                raw.p = Some(p);
                raw.compressor = Some(compressor);
                raw.coin = Some(coin);
            }
            MethodSpec::Marina { p, q, coin } => {
                raw.p = Some(p);
                raw.q = Some(q);
                raw.coin = Some(coin);
            }
        }
        raw
    }
}

/// Per-worker mechanism memory: the last transmitted estimate `h = g_i^t`
/// and the previous local gradient `y = grad f_i(x^t)`.
#[derive(Debug, Clone, PartialEq)]
pub struct MechanismState {
    pub h: DenseVector,
    pub y: DenseVector,
}

/// Randomness and side information for one worker in one round.
#[derive(Debug, Clone, Copy)]
pub struct StepCtx<'a> {
    pub worker: usize,
    pub n_workers: usize,
    /// Keyed by (worker, round).
    pub private: &'a RngStream,
    /// Keyed by round only; identical for every worker.
    pub shared: &'a RngStream,
    /// Round-global coin for methods that share one.
    pub coin: Option<bool>,
    /// `||x^{t+1} - x^t||^2`, used by the iterate trigger.
    pub iterate_move_sq: f64,
    /// Smoothness constant of this worker's function, used by the iterate trigger.
    pub client_smoothness: f64,
}

impl<'a> StepCtx<'a> {
    /// Context with no trigger side information, for standalone use.
    pub fn simple(worker: usize, n_workers: usize, private: &'a RngStream, shared: &'a RngStream) -> Self {
        StepCtx {
            worker,
            n_workers,
            private,
            shared,
            coin: None,
            iterate_move_sq: 0.0,
            client_smoothness: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepResult {
    pub g_next: DenseVector,
    pub messages: Vec<Message>,
    /// For lazy methods: whether the worker sent an update this round.
    pub fired: bool,
}

impl StepResult {
    pub fn payloads(&self) -> Vec<Payload> {
        self.messages.iter().map(Message::payload).collect()
    }

    pub fn bits(&self, d: usize) -> u64 {
        total_bits(&self.messages, d)
    }
}

impl MethodSpec {
    pub fn name(&self) -> &'static str {
        match self {
            MethodSpec::Ef21 { .. } => "ef21",
            MethodSpec::Lag { .. } => "lag",
            MethodSpec::Clag { .. } => "clag",
            MethodSpec::V1 { .. } => "v1",
            MethodSpec::V2 { .. } => "v2",
            MethodSpec::V3 { .. } => "v3",
            MethodSpec::V4 { .. } => "v4",
            MethodSpec::V5 { .. } => "v5",
            MethodSpec::Marina { .. } => "marina",
        }
    }

    fn check_scalars(&self) -> Result<()> {
        match self {
            MethodSpec::Lag { zeta, .. } | MethodSpec::Clag { zeta, .. } => {
                if !(*zeta >= 0.0 && zeta.is_finite()) {
                    return Err(Error::param(format!("zeta = {zeta} must be finite and >= 0")));
                }
            }
            MethodSpec::V5 { p, .. } | MethodSpec::Marina { p, .. } => {
                if !(*p > 0.0 && *p <= 1.0) {
                    return Err(Error::param(format!("p = {p} outside (0, 1]")));
                }
            }
            MethodSpec::V3 { inner, .. } => inner.check_scalars()?,
            _ => {}
        }
        Ok(())
    }

    /// Check compressor kinds and sizes for dimension `d` and `n` workers.
    pub fn validate(&self, d: usize, n: usize) -> Result<()> {
        self.check_scalars()?;
        let contractive = |c: &CompressorSpec, role: &str| -> Result<()> {
            c.validate(d, n)?;
            if c.is_contractive() {
                Ok(())
            } else {
                Err(Error::config(format!(
                    "{}: {role} must be contractive, got {}",
                    self.name(),
                    c.kind_name()
                )))
            }
        };
        let unbiased = |c: &CompressorSpec, role: &str| -> Result<()> {
            c.validate(d, n)?;
            if c.is_unbiased() {
                Ok(())
            } else {
                Err(Error::config(format!(
                    "{}: {role} must be unbiased, got {}",
                    self.name(),
                    c.kind_name()
                )))
            }
        };
        match self {
            MethodSpec::Ef21 { compressor }
            | MethodSpec::Clag { compressor, .. }
            | MethodSpec::V1 { compressor }
            | MethodSpec::V5 { compressor, .. } => contractive(compressor, "compressor"),
            MethodSpec::Lag { .. } => Ok(()),
            MethodSpec::V2 { q, c, .. } => {
                unbiased(q, "q")?;
                contractive(c, "c")
            }
            MethodSpec::V3 { inner, compressor } => {
                inner.validate(d, n)?;
                if matches!(inner.as_ref(), MethodSpec::Marina { .. }) {
                    return Err(Error::config(
                        "v3: the inner mechanism must be a three point compressor",
                    ));
                }
                contractive(compressor, "compressor")
            }
            MethodSpec::V4 { c1, c2 } => {
                contractive(c1, "c1")?;
                contractive(c2, "c2")
            }
            MethodSpec::Marina { q, .. } => unbiased(q, "q"),
        }
    }

    /// Probability of the round-global coin, if this method draws one.
    pub fn shared_coin_p(&self) -> Option<f64> {
        match self {
            MethodSpec::V5 {
                p,
                coin: CoinMode::Shared,
                ..
            }
            | MethodSpec::Marina {
                p,
                coin: CoinMode::Shared,
                ..
            } => Some(*p),
            MethodSpec::V2 {
                c: CompressorSpec::Bernoulli { p },
                coin: CoinMode::Shared,
                ..
            } => Some(*p),
            MethodSpec::V3 { inner, .. } => inner.shared_coin_p(),
            _ => None,
        }
    }

    /// True when a step's output depends only on `(h, y, x)`.
    pub fn is_deterministic(&self) -> bool {
        match self {
            MethodSpec::Ef21 { compressor } | MethodSpec::Clag { compressor, .. } | MethodSpec::V1 { compressor } => {
                compressor.is_deterministic()
            }
            MethodSpec::Lag { .. } => true,
            MethodSpec::V2 { q, c, .. } => q.is_deterministic() && c.is_deterministic(),
            MethodSpec::V3 { inner, compressor } => inner.is_deterministic() && compressor.is_deterministic(),
            MethodSpec::V4 { c1, c2 } => c1.is_deterministic() && c2.is_deterministic(),
            MethodSpec::V5 { p, compressor, .. } => *p == 1.0 && compressor.is_deterministic(),
            MethodSpec::Marina { p, q, .. } => *p == 1.0 && q.is_deterministic(),
        }
    }

    /// True for the methods whose constants bound the aggregated error.
    pub fn uses_aggregated_error(&self) -> bool {
        matches!(self, MethodSpec::Marina { .. })
    }

    /// Compressor used to form compressed initial estimates.
    pub fn primary_compressor(&self) -> Option<&CompressorSpec> {
        match self {
            MethodSpec::Ef21 { compressor }
            | MethodSpec::Clag { compressor, .. }
            | MethodSpec::V1 { compressor }
            | MethodSpec::V3 { compressor, .. }
            | MethodSpec::V5 { compressor, .. } => Some(compressor),
            MethodSpec::V2 { c, .. } => Some(c),
            MethodSpec::V4 { c1, .. } => Some(c1),
            MethodSpec::Marina { q, .. } => Some(q),
            MethodSpec::Lag { .. } => None,
        }
    }

    /// `(A, B)` for this mechanism with dimension `d` and `n` workers.
    pub fn theory_params(&self, d: usize, n: usize) -> Result<TheoryParams> {
        self.validate(d, n)?;
        match self {
            MethodSpec::Ef21 { compressor } => theory::params_ef21(alpha_of(compressor, d, n)?),
            MethodSpec::Lag { zeta, .. } => theory::params_lag(*zeta),
            MethodSpec::Clag { zeta, compressor, .. } => theory::params_clag(alpha_of(compressor, d, n)?, *zeta),
            MethodSpec::V1 { compressor } => theory::params_v1(alpha_of(compressor, d, n)?),
            MethodSpec::V2 { q, c, .. } => theory::params_v2(alpha_of(c, d, n)?, omega_of(q, d, n)?),
            MethodSpec::V3 { inner, compressor } => {
                theory::params_v3(alpha_of(compressor, d, n)?, &inner.theory_params(d, n)?)
            }
            MethodSpec::V4 { c1, c2 } => theory::params_v4(alpha_of(c1, d, n)?, alpha_of(c2, d, n)?),
            MethodSpec::V5 { p, compressor, .. } => theory::params_v5(*p, alpha_of(compressor, d, n)?),
            MethodSpec::Marina { p, q, .. } => theory::params_marina(*p, omega_of(q, d, n)?, n),
        }
    }

    /// Advance one worker: new estimate plus the messages that encode it.
    pub fn step(&self, state: &MechanismState, x: &DenseVector, ctx: &StepCtx<'_>) -> Result<StepResult> {
        let mut run = Stepper::new(&state.h);
        let fired = self.step_into(&mut run, state, x, ctx)?;
        Ok(StepResult {
            g_next: run.cur,
            messages: run.messages,
            fired,
        })
    }

    fn step_into(&self, run: &mut Stepper, state: &MechanismState, x: &DenseVector, ctx: &StepCtx<'_>) -> Result<bool> {
        match self {
            MethodSpec::Ef21 { compressor } => {
                run.compress_toward(x, compressor, ctx, "c", None)?;
                Ok(true)
            }
            MethodSpec::Lag { zeta, trigger } => {
                let fire = lazy_fires(*zeta, *trigger, state, x, ctx);
                if *zeta > 0.0 {
                    run.send(Message::Flag(fire));
                }
                if fire {
                    run.send(Message::Replace(x.clone()));
                }
                Ok(fire)
            }
            MethodSpec::Clag {
                zeta,
                compressor,
                trigger,
            } => {
                let fire = lazy_fires(*zeta, *trigger, state, x, ctx);
                if *zeta > 0.0 {
                    run.send(Message::Flag(fire));
                }
                if fire {
                    run.compress_toward(x, compressor, ctx, "c", None)?;
                }
                Ok(fire)
            }
            MethodSpec::V1 { compressor } => {
                run.send(Message::Replace(state.y.clone()));
                run.compress_toward(x, compressor, ctx, "c", None)?;
                Ok(true)
            }
            MethodSpec::V2 { q, c, coin } => {
                let diff = x.sub(&state.y);
                run.add_compressed(&diff, q, ctx, "q")?;
                let shared = match (c, coin) {
                    (CompressorSpec::Bernoulli { .. }, CoinMode::Shared) => ctx.coin,
                    _ => None,
                };
                run.compress_toward(x, c, ctx, "c", shared)?;
                Ok(true)
            }
            MethodSpec::V3 { inner, compressor } => {
                let private = ctx.private.derive("inner", 0);
                let shared = ctx.shared.derive("inner", 0);
                let inner_ctx = StepCtx {
                    private: &private,
                    shared: &shared,
                    ..*ctx
                };
                inner.step_into(run, state, x, &inner_ctx)?;
                run.compress_toward(x, compressor, ctx, "outer", None)?;
                Ok(true)
            }
            MethodSpec::V4 { c1, c2 } => {
                run.compress_toward(x, c2, ctx, "c2", None)?;
                run.compress_toward(x, c1, ctx, "c1", None)?;
                Ok(true)
            }
            MethodSpec::V5 { p, compressor, coin } => {
                if draw_coin(*p, *coin, ctx, "coin") {
                    run.send(Message::Replace(x.clone()));
                } else {
                    let diff = x.sub(&state.y);
                    run.add_compressed(&diff, compressor, ctx, "c")?;
                }
                Ok(true)
            }
            MethodSpec::Marina { p, q, coin } => {
                if draw_coin(*p, *coin, ctx, "coin") {
                    run.send(Message::Replace(x.clone()));
                } else {
                    let diff = x.sub(&state.y);
                    run.add_compressed(&diff, q, ctx, "q")?;
                }
                Ok(true)
            }
        }
    }
}

fn lazy_fires(zeta: f64, trigger: Trigger, state: &MechanismState, x: &DenseVector, ctx: &StepCtx<'_>) -> bool {
    if zeta == 0.0 {
        // with a zero trigger the skip branch returns h = x, which is what firing gives too
        return true;
    }
    let lhs = x.sq_dist(&state.h);
    let rhs = match trigger {
        Trigger::Gradient => x.sq_dist(&state.y),
        Trigger::Iterate => ctx.client_smoothness * ctx.client_smoothness * ctx.iterate_move_sq,
    };
    lhs > zeta * rhs
}

fn draw_coin(p: f64, mode: CoinMode, ctx: &StepCtx<'_>, slot: &str) -> bool {
    match (mode, ctx.coin) {
        (CoinMode::Shared, Some(c)) => c,
        // standalone use without a round coin, or per-worker mode
        _ => ctx.private.derive(slot, 0).coin(p),
    }
}

/// Builds up the message list while tracking the value the server will hold.
struct Stepper {
    cur: DenseVector,
    messages: Vec<Message>,
}

impl Stepper {
    fn new(h: &DenseVector) -> Self {
        Stepper {
            cur: h.clone(),
            messages: Vec::new(),
        }
    }

    fn send(&mut self, m: Message) {
        if matches!(m, Message::Replace(_)) {
            // a full vector overwrites whatever was sent before it
            self.messages.retain(|old| matches!(old, Message::Flag(_)));
        }
        m.apply(&mut self.cur);
        self.messages.push(m);
    }

    fn compress_ctx<T>(ctx: &StepCtx<'_>, slot: &str, coin: Option<bool>, f: impl FnOnce(&CompressCtx<'_>) -> T) -> T {
        let private = ctx.private.derive(slot, 0);
        let shared = ctx.shared.derive(slot, 0);
        let cctx = CompressCtx {
            worker: ctx.worker,
            n_workers: ctx.n_workers,
            private: &private,
            shared: &shared,
            coin,
        };
        f(&cctx)
    }

    /// `cur <- cur + C(target - cur)`; an identity outcome lands exactly on `target`.
    fn compress_toward(
        &mut self,
        target: &DenseVector,
        spec: &CompressorSpec,
        ctx: &StepCtx<'_>,
        slot: &str,
        coin: Option<bool>,
    ) -> Result<()> {
        let residual = target.sub(&self.cur);
        let out = Self::compress_ctx(ctx, slot, coin, |c| spec.compress(&residual, c))?;
        match out {
            Compressed::Identity => self.send(Message::Replace(target.clone())),
            other => {
                if let Some(m) = Message::from_compressed_delta(other, &residual) {
                    self.send(m);
                }
            }
        }
        Ok(())
    }

    /// `cur <- cur + C(delta)`.
    fn add_compressed(
        &mut self,
        delta: &DenseVector,
        spec: &CompressorSpec,
        ctx: &StepCtx<'_>,
        slot: &str,
    ) -> Result<()> {
        let out = Self::compress_ctx(ctx, slot, None, |c| spec.compress(delta, c))?;
        if let Some(m) = Message::from_compressed_delta(out, delta) {
            self.send(m);
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests;

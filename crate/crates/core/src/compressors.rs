//! Primitive compression operators.
//!
//! Contractive compressors satisfy `E||C(x) - x||^2 <= (1 - alpha)||x||^2`;
//! unbiased ones satisfy `E[Q(x)] = x` and `E||Q(x) - x||^2 <= omega ||x||^2`.
//! Every operator maps the zero vector to zero.

use rand::seq::{index, SliceRandom};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::RngStream;
use crate::vector::DenseVector;

/// Declarative description of a compressor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawCompressor", into = "RawCompressor")]
pub enum CompressorSpec {
    Identity,
    /// Keep the `k` largest-magnitude entries.
    TopK {
        k: usize,
    },
    /// Keep `k` uniformly random entries scaled by `d/k` (unbiased).
    RandK {
        k: usize,
        shared_seed: bool,
    },
    /// Keep `k` uniformly random entries, unscaled (contractive).
    CRandK {
        k: usize,
        shared_seed: bool,
    },
    /// Block of a shared random permutation, scaled by `n` (unbiased).
    PermK {
        shared_seed: bool,
    },
    /// Perm-K block without the scaling (contractive).
    CPermK {
        shared_seed: bool,
    },
    /// `x` with probability `p`, zero otherwise.
    Bernoulli {
        p: f64,
    },
    /// Plain composition `outer(inner(x))`.
    Compose(Box<CompressorSpec>, Box<CompressorSpec>),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawCompressor {
    kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    k: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    p: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    shared_seed: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    outer: Option<Box<CompressorSpec>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    inner: Option<Box<CompressorSpec>>,
}

impl TryFrom<RawCompressor> for CompressorSpec {
    type Error = String;

    fn try_from(raw: RawCompressor) -> std::result::Result<Self, String> {
        let need_k = || {
            raw.k
                .ok_or_else(|| format!("compressor '{}' needs field 'k'", raw.kind))
        };
        let shared = raw.shared_seed.unwrap_or(false);
        let allow = |k: bool, p: bool, s: bool, nested: bool| -> std::result::Result<(), String> {
            let bad = (raw.k.is_some() && !k)
                || (raw.p.is_some() && !p)
                || (raw.shared_seed.is_some() && !s)
                || ((raw.outer.is_some() || raw.inner.is_some()) && !nested);
            if bad {
                Err(format!("unexpected field for compressor '{}'", raw.kind))
            } else {
                Ok(())
            }
        };
        let spec = match raw.kind.as_str() {
            "identity" => {
                allow(false, false, false, false)?;
                CompressorSpec::Identity
            }
            "top_k" => {
                allow(true, false, false, false)?;
                CompressorSpec::TopK { k: need_k()? }
            }
            "rand_k" => {
                allow(true, false, true, false)?;
                CompressorSpec::RandK {
                    k: need_k()?,
                    shared_seed: shared,
                }
            }
            "crand_k" => {
                allow(true, false, true, false)?;
                CompressorSpec::CRandK {
                    k: need_k()?,
                    shared_seed: shared,
                }
            }
            "perm_k" => {
                allow(false, false, true, false)?;
                CompressorSpec::PermK { shared_seed: shared }
            }
            "cperm_k" => {
                allow(false, false, true, false)?;
                CompressorSpec::CPermK { shared_seed: shared }
            }
            "bernoulli" => {
                allow(false, true, false, false)?;
                let p = raw.p.ok_or("compressor 'bernoulli' needs field 'p'")?;
                if !(p > 0.0 && p <= 1.0) {
                    return Err(format!("bernoulli p must lie in (0, 1], got {p}"));
                }
                CompressorSpec::Bernoulli { p }
            }
            "compose" => {
                allow(false, false, false, true)?;
                let outer = raw.outer.ok_or("compose needs 'outer'")?;
                let inner = raw.inner.ok_or("compose needs 'inner'")?;
                CompressorSpec::Compose(outer, inner)
            }
            other => return Err(format!("unknown compressor kind '{other}'")),
        };
        if let Some(0) = raw.k {
            return Err("k must be at least 1".into());
        }
        Ok(spec)
    }
}

impl From<CompressorSpec> for RawCompressor {
    fn from(spec: CompressorSpec) -> Self {
        let mut raw = RawCompressor {
            kind: spec.kind_name().to_owned(),
            k: None,
            p: None,
            shared_seed: None,
            outer: None,
            inner: None,
        };
        match spec {
            CompressorSpec::Identity => {}
            CompressorSpec::TopK { k } => raw.k = Some(k),
            CompressorSpec::RandK { k, shared_seed } | CompressorSpec::CRandK { k, shared_seed } => {
                raw.k = Some(k);
                raw.shared_seed = Some(shared_seed);
            }
            CompressorSpec::PermK { shared_seed } | CompressorSpec::CPermK { shared_seed } => {
                raw.shared_seed = Some(shared_seed)
            }
            CompressorSpec::Bernoulli { p } => raw.p = Some(p),
            CompressorSpec::Compose(o, i) => {
                raw.outer = Some(o);
                raw.inner = Some(i);
            }
        }
        raw
    }
}

/// Randomness available to a compressor invocation.
#[derive(Debug, Clone, Copy)]
pub struct CompressCtx<'a> {
    pub worker: usize,
    pub n_workers: usize,
    /// Stream private to this (worker, round, slot).
    pub private: &'a RngStream,
    /// Stream shared by all workers for this (round, slot).
    pub shared: &'a RngStream,
    /// Round-global Bernoulli coin, when the method shares one.
    pub coin: Option<bool>,
}

/// Result of compressing a vector.
#[derive(Debug, Clone, PartialEq)]
pub enum Compressed {
    /// Output equals the input bit for bit.
    Identity,
    Zero,
    Sparse {
        indices: Vec<usize>,
        values: Vec<f64>,
        /// Whether the receiver needs the indices on the wire.
        explicit_indices: bool,
    },
}

impl Compressed {
    pub fn to_dense(&self, input: &DenseVector) -> DenseVector {
        match self {
            Compressed::Identity => input.clone(),
            Compressed::Zero => DenseVector::zeros(input.len()),
            Compressed::Sparse { indices, values, .. } => {
                let mut out = DenseVector::zeros(input.len());
                for (i, v) in indices.iter().zip(values) {
                    out[*i] = *v;
                }
                out
            }
        }
    }
}

impl CompressorSpec {
    pub fn kind_name(&self) -> &'static str {
        match self {
            CompressorSpec::Identity => "identity",
            CompressorSpec::TopK { .. } => "top_k",
            CompressorSpec::RandK { .. } => "rand_k",
            CompressorSpec::CRandK { .. } => "crand_k",
            CompressorSpec::PermK { .. } => "perm_k",
            CompressorSpec::CPermK { .. } => "cperm_k",
            CompressorSpec::Bernoulli { .. } => "bernoulli",
            CompressorSpec::Compose(..) => "compose",
        }
    }

    pub fn is_contractive(&self) -> bool {
        match self {
            CompressorSpec::RandK { .. } | CompressorSpec::PermK { .. } => false,
            CompressorSpec::Compose(o, i) => o.is_contractive() && i.is_contractive(),
            _ => true,
        }
    }

    pub fn is_unbiased(&self) -> bool {
        match self {
            CompressorSpec::Identity | CompressorSpec::RandK { .. } | CompressorSpec::PermK { .. } => true,
            CompressorSpec::Compose(o, i) => o.is_unbiased() && i.is_unbiased(),
            _ => false,
        }
    }

    /// True when the output depends on nothing but the input.
    pub fn is_deterministic(&self) -> bool {
        match self {
            CompressorSpec::Identity | CompressorSpec::TopK { .. } => true,
            CompressorSpec::Compose(o, i) => o.is_deterministic() && i.is_deterministic(),
            _ => false,
        }
    }

    /// Check parameters against dimension `d` and worker count `n`.
    pub fn validate(&self, d: usize, n: usize) -> Result<()> {
        match self {
            CompressorSpec::TopK { k } | CompressorSpec::RandK { k, .. } | CompressorSpec::CRandK { k, .. } => {
                check_k(*k, d)
            }
            CompressorSpec::PermK { .. } | CompressorSpec::CPermK { .. } => check_perm(d, n),
            CompressorSpec::Bernoulli { p } => check_p(*p),
            CompressorSpec::Compose(o, i) => {
                o.validate(d, n)?;
                i.validate(d, n)
            }
            CompressorSpec::Identity => Ok(()),
        }
    }

    /// Apply the compressor.
    pub fn compress(&self, x: &DenseVector, ctx: &CompressCtx<'_>) -> Result<Compressed> {
        let d = x.len();
        Ok(match self {
            CompressorSpec::Identity => Compressed::Identity,
            CompressorSpec::TopK { k } => {
                check_k(*k, d)?;
                if *k == d {
                    Compressed::Identity
                } else {
                    let indices = top_k_indices(x.as_slice(), *k);
                    sparse(x, indices, 1.0, true)
                }
            }
            CompressorSpec::RandK { k, shared_seed } | CompressorSpec::CRandK { k, shared_seed } => {
                check_k(*k, d)?;
                if *k == d {
                    Compressed::Identity
                } else {
                    let scale = match self {
                        CompressorSpec::RandK { .. } => d as f64 / *k as f64,
                        _ => 1.0,
                    };
                    let indices = random_subset(d, *k, ctx.private);
                    sparse(x, indices, scale, !shared_seed)
                }
            }
            CompressorSpec::PermK { shared_seed } | CompressorSpec::CPermK { shared_seed } => {
                let n = ctx.n_workers;
                check_perm(d, n)?;
                if n == 1 {
                    Compressed::Identity
                } else {
                    let scale = match self {
                        CompressorSpec::PermK { .. } => n as f64,
                        _ => 1.0,
                    };
                    let perm = shared_permutation(d, ctx.shared);
                    let indices = perm_block(&perm, ctx.worker, n)?;
                    sparse(x, indices, scale, !shared_seed)
                }
            }
            CompressorSpec::Bernoulli { p } => {
                check_p(*p)?;
                let heads = ctx.coin.unwrap_or_else(|| ctx.private.coin(*p));
                if heads {
                    Compressed::Identity
                } else {
                    Compressed::Zero
                }
            }
            CompressorSpec::Compose(outer, inner) => {
                let inner_ctx_private = ctx.private.derive("compose-inner", 0);
                let inner_ctx_shared = ctx.shared.derive("compose-inner", 0);
                let inner_ctx = CompressCtx {
                    private: &inner_ctx_private,
                    shared: &inner_ctx_shared,
                    ..*ctx
                };
                let first = inner.compress(x, &inner_ctx)?;
                let z = match &first {
                    Compressed::Zero => return Ok(Compressed::Zero),
                    Compressed::Identity => return outer.compress(x, ctx),
                    other => other.to_dense(x),
                };
                match outer.compress(&z, ctx)? {
                    Compressed::Identity => first,
                    Compressed::Zero => Compressed::Zero,
                    Compressed::Sparse {
                        indices,
                        values,
                        explicit_indices,
                    } => {
                        let inner_explicit = matches!(
                            first,
                            Compressed::Sparse {
                                explicit_indices: true,
                                ..
                            }
                        );
                        Compressed::Sparse {
                            indices,
                            values,
                            explicit_indices: explicit_indices || inner_explicit,
                        }
                    }
                }
            }
        })
    }

    pub fn apply(&self, x: &DenseVector, ctx: &CompressCtx<'_>) -> Result<DenseVector> {
        Ok(self.compress(x, ctx)?.to_dense(x))
    }
}

fn sparse(x: &DenseVector, indices: Vec<usize>, scale: f64, explicit_indices: bool) -> Compressed {
    let values = indices.iter().map(|&i| x[i] * scale).collect();
    Compressed::Sparse {
        indices,
        values,
        explicit_indices,
    }
}

fn check_k(k: usize, d: usize) -> Result<()> {
    if k == 0 || k > d {
        Err(Error::param(format!("K = {k} outside 1..={d}")))
    } else {
        Ok(())
    }
}

fn check_p(p: f64) -> Result<()> {
    if p > 0.0 && p <= 1.0 {
        Ok(())
    } else {
        Err(Error::param(format!("p = {p} outside (0, 1]")))
    }
}

fn check_perm(d: usize, n: usize) -> Result<()> {
    if n == 0 || d % n != 0 {
        Err(Error::param(format!("Perm-K needs n | d, got d = {d}, n = {n}")))
    } else {
        Ok(())
    }
}

/// Indices of the `k` largest `|x_i|`, ties to the lower index, ascending.
pub fn top_k_indices(x: &[f64], k: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..x.len()).collect();
    let cmp = |a: &usize, b: &usize| x[*b].abs().total_cmp(&x[*a].abs()).then_with(|| a.cmp(b));
    if k < idx.len() {
        idx.select_nth_unstable_by(k, cmp);
        idx.truncate(k);
    }
    idx.sort_unstable();
    idx
}

fn random_subset(d: usize, k: usize, stream: &RngStream) -> Vec<usize> {
    let mut rng = stream.rng();
    let mut idx = index::sample(&mut rng, d, k).into_vec();
    idx.sort_unstable();
    idx
}

/// Permutation of `0..d` drawn from a stream shared by all workers.
pub fn shared_permutation(d: usize, shared: &RngStream) -> Vec<usize> {
    let mut perm: Vec<usize> = (0..d).collect();
    perm.shuffle(&mut shared.rng());
    perm
}

/// Worker `worker`'s block `perm[worker*d/n .. (worker+1)*d/n]`, sorted.
pub fn perm_block(perm: &[usize], worker: usize, n: usize) -> Result<Vec<usize>> {
    let d = perm.len();
    check_perm(d, n)?;
    if worker >= n {
        return Err(Error::param(format!("worker id {worker} >= n = {n}")));
    }
    let b = d / n;
    let mut block = perm[worker * b..(worker + 1) * b].to_vec();
    block.sort_unstable();
    Ok(block)
}

fn keep(x: &DenseVector, indices: &[usize], scale: f64) -> DenseVector {
    let mut out = DenseVector::zeros(x.len());
    for &i in indices {
        out[i] = x[i] * scale;
    }
    out
}

pub fn top_k(x: &DenseVector, k: usize) -> Result<DenseVector> {
    check_k(k, x.len())?;
    Ok(keep(x, &top_k_indices(x.as_slice(), k), 1.0))
}

pub fn rand_k_unbiased(x: &DenseVector, k: usize, rng: &RngStream) -> Result<DenseVector> {
    check_k(k, x.len())?;
    let d = x.len();
    if k == d {
        return Ok(x.clone());
    }
    Ok(keep(x, &random_subset(d, k, rng), d as f64 / k as f64))
}

/// Rand-K on an explicit index set.
pub fn rand_k_with(x: &DenseVector, subset: &[usize]) -> Result<DenseVector> {
    check_subset(x.len(), subset)?;
    Ok(keep(x, subset, x.len() as f64 / subset.len() as f64))
}

/// cRand-K on an explicit index set.
pub fn crand_k_with(x: &DenseVector, subset: &[usize]) -> Result<DenseVector> {
    check_subset(x.len(), subset)?;
    Ok(keep(x, subset, 1.0))
}

fn check_subset(d: usize, subset: &[usize]) -> Result<()> {
    check_k(subset.len(), d)?;
    if subset.windows(2).any(|w| w[0] >= w[1]) || subset.iter().any(|&i| i >= d) {
        return Err(Error::param("index set must be strictly increasing and below d"));
    }
    Ok(())
}

pub fn crand_k(x: &DenseVector, k: usize, rng: &RngStream) -> Result<DenseVector> {
    check_k(k, x.len())?;
    Ok(keep(x, &random_subset(x.len(), k, rng), 1.0))
}

pub fn perm_k(x: &DenseVector, worker: usize, n: usize, shared: &RngStream) -> Result<DenseVector> {
    check_perm(x.len(), n)?;
    perm_k_with(x, worker, n, &shared_permutation(x.len(), shared))
}

/// Perm-K against an explicit permutation.
pub fn perm_k_with(x: &DenseVector, worker: usize, n: usize, perm: &[usize]) -> Result<DenseVector> {
    Ok(keep(x, &perm_block(perm, worker, n)?, n as f64))
}

pub fn cperm_k(x: &DenseVector, worker: usize, n: usize, shared: &RngStream) -> Result<DenseVector> {
    check_perm(x.len(), n)?;
    cperm_k_with(x, worker, n, &shared_permutation(x.len(), shared))
}

pub fn cperm_k_with(x: &DenseVector, worker: usize, n: usize, perm: &[usize]) -> Result<DenseVector> {
    // Perm-K scale n times 1/(1 + omega) with omega = n - 1
    Ok(keep(x, &perm_block(perm, worker, n)?, 1.0))
}

pub fn bernoulli_c(x: &DenseVector, p: f64, coin: bool) -> Result<DenseVector> {
    check_p(p)?;
    Ok(if coin { x.clone() } else { DenseVector::zeros(x.len()) })
}

/// Contraction parameter alpha of a contractive compressor.
pub fn alpha_of(spec: &CompressorSpec, d: usize, n: usize) -> Result<f64> {
    spec.validate(d, n)?;
    match spec {
        CompressorSpec::Identity => Ok(1.0),
        CompressorSpec::TopK { k } | CompressorSpec::CRandK { k, .. } => Ok(*k as f64 / d as f64),
        CompressorSpec::CPermK { .. } => Ok(1.0 / n as f64),
        CompressorSpec::Bernoulli { p } => Ok(*p),
        CompressorSpec::Compose(o, i) => match (o.as_ref(), i.as_ref()) {
            (CompressorSpec::Identity, c) | (c, CompressorSpec::Identity) => alpha_of(c, d, n),
            _ => Err(Error::domain(
                "contraction parameter of a general composition is not known in closed form",
            )),
        },
        CompressorSpec::RandK { .. } | CompressorSpec::PermK { .. } => Err(Error::domain(format!(
            "{} is unbiased, not contractive",
            spec.kind_name()
        ))),
    }
}

/// Variance parameter omega of an unbiased compressor.
pub fn omega_of(spec: &CompressorSpec, d: usize, n: usize) -> Result<f64> {
    spec.validate(d, n)?;
    match spec {
        CompressorSpec::Identity => Ok(0.0),
        CompressorSpec::RandK { k, .. } => Ok(d as f64 / *k as f64 - 1.0),
        CompressorSpec::PermK { .. } => Ok(n as f64 - 1.0),
        CompressorSpec::Compose(o, i) if o.is_unbiased() && i.is_unbiased() => {
            // independent unbiased stages: (1 + w1)(1 + w2) - 1
            Ok((1.0 + omega_of(o, d, n)?) * (1.0 + omega_of(i, d, n)?) - 1.0)
        }
        _ => Err(Error::domain(format!("{} is not unbiased", spec.kind_name()))),
    }
}

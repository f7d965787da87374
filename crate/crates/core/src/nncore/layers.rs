//! Attention and transformer blocks built from tape primitives.
//!
//! Blocks are pre-norm residual: `x + Attn(LN(x))` followed by
//! `x + FFN(LN(x))`, with a two-layer ReLU FFN. Parameters live in a
//! [`ParamStore`] under dotted names rooted at the block's prefix.

use rand::Rng;

use super::params::{Bound, ParamStore};
use super::tape::{Tape, Var};
use super::{NnError, Tensor};

/// Plain-tensor parameters of one multi-head attention layer.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionParams {
    pub wq: Tensor,
    pub wk: Tensor,
    pub wv: Tensor,
    pub wo: Tensor,
    pub bq: Tensor,
    pub bk: Tensor,
    pub bv: Tensor,
    pub bo: Tensor,
    pub heads: usize,
}

impl AttentionParams {
    /// All projections identity, all biases zero.
    pub fn identity(channels: usize, heads: usize) -> Self {
        let eye = Tensor::eye(channels);
        let zero = Tensor::zeros([channels]);
        Self {
            wq: eye.clone(),
            wk: eye.clone(),
            wv: eye.clone(),
            wo: eye,
            bq: zero.clone(),
            bk: zero.clone(),
            bv: zero.clone(),
            bo: zero,
            heads,
        }
    }

    pub fn random<R: Rng + ?Sized>(channels: usize, heads: usize, rng: &mut R) -> Self {
        let bound = init_bound(channels);
        let mut m = || Tensor::uniform([channels, channels], bound, rng);
        let (wq, wk, wv, wo) = (m(), m(), m(), m());
        let mut v = || Tensor::uniform([channels], bound, rng);
        let (bq, bk, bv, bo) = (v(), v(), v(), v());
        Self {
            wq,
            wk,
            wv,
            wo,
            bq,
            bk,
            bv,
            bo,
            heads,
        }
    }

    pub fn channels(&self) -> usize {
        self.wq.shape()[0]
    }

    pub fn validate(&self) -> Result<(), NnError> {
        let c = self.channels();
        if self.heads == 0 || !c.is_multiple_of(self.heads) {
            return Err(NnError::Argument(format!(
                "{c} channels not divisible by {} heads",
                self.heads
            )));
        }
        for w in [&self.wq, &self.wk, &self.wv, &self.wo] {
            if w.shape() != [c, c] {
                return Err(NnError::Shape(format!(
                    "attention weight {:?}, expected [{c}, {c}]",
                    w.shape()
                )));
            }
        }
        for b in [&self.bq, &self.bk, &self.bv, &self.bo] {
            if b.shape() != [c] {
                return Err(NnError::Shape(format!(
                    "attention bias {:?}, expected [{c}]",
                    b.shape()
                )));
            }
        }
        Ok(())
    }

    pub fn bind(&self, tape: &mut Tape) -> AttentionVars {
        AttentionVars {
            wq: tape.leaf(self.wq.clone()),
            wk: tape.leaf(self.wk.clone()),
            wv: tape.leaf(self.wv.clone()),
            wo: tape.leaf(self.wo.clone()),
            bq: tape.leaf(self.bq.clone()),
            bk: tape.leaf(self.bk.clone()),
            bv: tape.leaf(self.bv.clone()),
            bo: tape.leaf(self.bo.clone()),
            heads: self.heads,
        }
    }

    pub fn store(self, store: &mut ParamStore, prefix: &str) {
        for (suffix, t) in [
            ("wq", self.wq),
            ("wk", self.wk),
            ("wv", self.wv),
            ("wo", self.wo),
            ("bq", self.bq),
            ("bk", self.bk),
            ("bv", self.bv),
            ("bo", self.bo),
        ] {
            store.insert(format!("{prefix}.{suffix}"), t);
        }
    }
}

/// Tape variables of one attention layer.
#[derive(Debug, Clone, Copy)]
pub struct AttentionVars {
    pub wq: Var,
    pub wk: Var,
    pub wv: Var,
    pub wo: Var,
    pub bq: Var,
    pub bk: Var,
    pub bv: Var,
    pub bo: Var,
    pub heads: usize,
}

impl AttentionVars {
    pub fn from_bound(bound: &Bound, prefix: &str, heads: usize) -> Result<Self, NnError> {
        let v = |s: &str| bound.var(&format!("{prefix}.{s}"));
        Ok(Self {
            wq: v("wq")?,
            wk: v("wk")?,
            wv: v("wv")?,
            wo: v("wo")?,
            bq: v("bq")?,
            bk: v("bk")?,
            bv: v("bv")?,
            bo: v("bo")?,
            heads,
        })
    }
}

/// Initialization half-width `1/√C`.
pub fn init_bound(fan_in: usize) -> f64 {
    1.0 / (fan_in.max(1) as f64).sqrt()
}

/// Scaled dot-product attention per head (scale `1/√(C/h)`), heads
/// concatenated, then the output projection.
pub fn attention(
    tape: &mut Tape,
    q: Var,
    k: Var,
    v: Var,
    p: &AttentionVars,
) -> Result<Var, NnError> {
    let (_, c) = tape.value(q).dims2()?;
    let (nk, ck) = tape.value(k).dims2()?;
    let (nv, cv) = tape.value(v).dims2()?;
    if ck != c || cv != c || nv != nk {
        return Err(NnError::Shape(format!(
            "attention: q {:?}, k {:?}, v {:?}",
            tape.shape(q),
            tape.shape(k),
            tape.shape(v)
        )));
    }
    if nk == 0 {
        return Err(NnError::Argument("attention needs at least one key".into()));
    }
    if tape.shape(p.wq) != [c, c] {
        return Err(NnError::Shape(format!(
            "attention weights {:?} for width {c}",
            tape.shape(p.wq)
        )));
    }
    if p.heads == 0 || c % p.heads != 0 {
        return Err(NnError::Argument(format!(
            "{c} channels not divisible by {} heads",
            p.heads
        )));
    }
    let qp = tape.linear(q, p.wq, p.bq)?;
    let kp = tape.linear(k, p.wk, p.bk)?;
    let vp = tape.linear(v, p.wv, p.bv)?;
    let dh = c / p.heads;
    let scale = 1.0 / (dh as f64).sqrt();
    let mut outs = Vec::with_capacity(p.heads);
    for h in 0..p.heads {
        let (qh, kh, vh) = if p.heads == 1 {
            (qp, kp, vp)
        } else {
            (
                tape.slice_cols(qp, h * dh, dh)?,
                tape.slice_cols(kp, h * dh, dh)?,
                tape.slice_cols(vp, h * dh, dh)?,
            )
        };
        let kt = tape.transpose(kh)?;
        let scores = tape.matmul(qh, kt)?;
        let scores = tape.scale(scores, scale);
        let weights = tape.softmax_rows(scores)?;
        outs.push(tape.matmul(weights, vh)?);
    }
    let merged = if outs.len() == 1 {
        outs[0]
    } else {
        tape.concat_cols(&outs)?
    };
    tape.linear(merged, p.wo, p.bo)
}

pub fn init_layer_norm(store: &mut ParamStore, prefix: &str, channels: usize) {
    store.insert(format!("{prefix}.gamma"), Tensor::full([channels], 1.0));
    store.insert(format!("{prefix}.beta"), Tensor::zeros([channels]));
}

pub fn init_linear<R: Rng + ?Sized>(
    store: &mut ParamStore,
    prefix: &str,
    c_in: usize,
    c_out: usize,
    rng: &mut R,
) {
    let bound = init_bound(c_in);
    store.insert(
        format!("{prefix}.w"),
        Tensor::uniform([c_in, c_out], bound, rng),
    );
    store.insert(format!("{prefix}.b"), Tensor::uniform([c_out], bound, rng));
}

pub fn layer_norm_on(tape: &mut Tape, bound: &Bound, prefix: &str, x: Var) -> Result<Var, NnError> {
    let g = bound.var(&format!("{prefix}.gamma"))?;
    let b = bound.var(&format!("{prefix}.beta"))?;
    tape.layer_norm(x, g, b)
}

pub fn linear_on(tape: &mut Tape, bound: &Bound, prefix: &str, x: Var) -> Result<Var, NnError> {
    let w = bound.var(&format!("{prefix}.w"))?;
    let b = bound.var(&format!("{prefix}.b"))?;
    tape.linear(x, w, b)
}

/// Shape of a residual attention block.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BlockSpec {
    pub channels: usize,
    pub heads: usize,
    pub ffn_hidden: usize,
}

impl BlockSpec {
    pub fn new(channels: usize, heads: usize) -> Self {
        Self {
            channels,
            heads,
            ffn_hidden: 4 * channels,
        }
    }
}

/// Registers parameters for a block. Cross blocks get a separate norm for the
/// key/value memory (`ln_kv`).
pub fn init_block<R: Rng + ?Sized>(
    store: &mut ParamStore,
    prefix: &str,
    spec: BlockSpec,
    cross: bool,
    rng: &mut R,
) {
    let c = spec.channels;
    init_layer_norm(store, &format!("{prefix}.ln_q"), c);
    if cross {
        init_layer_norm(store, &format!("{prefix}.ln_kv"), c);
    }
    AttentionParams::random(c, spec.heads, rng).store(store, &format!("{prefix}.attn"));
    init_layer_norm(store, &format!("{prefix}.ln_ffn"), c);
    init_linear(store, &format!("{prefix}.ffn1"), c, spec.ffn_hidden, rng);
    init_linear(store, &format!("{prefix}.ffn2"), spec.ffn_hidden, c, rng);
}

/// Names of the parameters whose zeroing turns the block into the identity.
pub fn block_output_params(prefix: &str) -> [String; 4] {
    [
        format!("{prefix}.attn.wo"),
        format!("{prefix}.attn.bo"),
        format!("{prefix}.ffn2.w"),
        format!("{prefix}.ffn2.b"),
    ]
}

fn ffn_residual(tape: &mut Tape, bound: &Bound, prefix: &str, x: Var) -> Result<Var, NnError> {
    let n = layer_norm_on(tape, bound, &format!("{prefix}.ln_ffn"), x)?;
    let h = linear_on(tape, bound, &format!("{prefix}.ffn1"), n)?;
    let h = tape.relu(h);
    let o = linear_on(tape, bound, &format!("{prefix}.ffn2"), h)?;
    tape.add(x, o)
}

/// Self-attention block over the rows of `x`.
pub fn self_block(
    tape: &mut Tape,
    bound: &Bound,
    prefix: &str,
    heads: usize,
    x: Var,
) -> Result<Var, NnError> {
    let attn = AttentionVars::from_bound(bound, &format!("{prefix}.attn"), heads)?;
    let n = layer_norm_on(tape, bound, &format!("{prefix}.ln_q"), x)?;
    let a = attention(tape, n, n, n, &attn)?;
    let x = tape.add(x, a)?;
    ffn_residual(tape, bound, prefix, x)
}

/// Cross-attention block: rows of `x` attend to rows of `memory`.
pub fn cross_block(
    tape: &mut Tape,
    bound: &Bound,
    prefix: &str,
    heads: usize,
    x: Var,
    memory: Var,
) -> Result<Var, NnError> {
    let attn = AttentionVars::from_bound(bound, &format!("{prefix}.attn"), heads)?;
    let nq = layer_norm_on(tape, bound, &format!("{prefix}.ln_q"), x)?;
    let nkv = layer_norm_on(tape, bound, &format!("{prefix}.ln_kv"), memory)?;
    let a = attention(tape, nq, nkv, nkv, &attn)?;
    let x = tape.add(x, a)?;
    ffn_residual(tape, bound, prefix, x)
}

//! Forward-only entry points on plain tensors, plus spatial composites on the tape.

use std::sync::Arc;

use super::layers::{attention, AttentionParams};
use super::resample::Resampler;
use super::tape::{Tape, Var};
use super::{NnError, Tensor};

fn run1(
    x: &Tensor,
    f: impl FnOnce(&mut Tape, Var) -> Result<Var, NnError>,
) -> Result<Tensor, NnError> {
    let mut tape = Tape::new();
    let v = tape.leaf(x.clone());
    let out = f(&mut tape, v)?;
    Ok(tape.value(out).clone())
}

pub fn linear(x: &Tensor, w: &Tensor, b: &Tensor) -> Result<Tensor, NnError> {
    run1(x, |t, xv| {
        let (wv, bv) = (t.leaf(w.clone()), t.leaf(b.clone()));
        t.linear(xv, wv, bv)
    })
}

pub fn softmax_rows(x: &Tensor) -> Result<Tensor, NnError> {
    run1(x, |t, v| t.softmax_rows(v))
}

pub fn layer_norm(x: &Tensor, gamma: &Tensor, beta: &Tensor) -> Result<Tensor, NnError> {
    run1(x, |t, xv| {
        let (g, b) = (t.leaf(gamma.clone()), t.leaf(beta.clone()));
        t.layer_norm(xv, g, b)
    })
}

pub fn multi_head_attention(
    q: &Tensor,
    k: &Tensor,
    v: &Tensor,
    p: &AttentionParams,
) -> Result<Tensor, NnError> {
    p.validate()?;
    let mut tape = Tape::new();
    let (qv, kv, vv) = (
        tape.leaf(q.clone()),
        tape.leaf(k.clone()),
        tape.leaf(v.clone()),
    );
    let pv = p.bind(&mut tape);
    let out = attention(&mut tape, qv, kv, vv, &pv)?;
    Ok(tape.value(out).clone())
}

pub fn adaptive_avg_pool(x: &Tensor, h_out: usize, w_out: usize) -> Result<Tensor, NnError> {
    run1(x, |t, v| adaptive_avg_pool_on(t, v, h_out, w_out))
}

pub fn upsample_bilinear(x: &Tensor, h_out: usize, w_out: usize) -> Result<Tensor, NnError> {
    run1(x, |t, v| upsample_bilinear_on(t, v, h_out, w_out))
}

pub fn conv_channel_mix(x: &Tensor, w: &Tensor, b: &Tensor) -> Result<Tensor, NnError> {
    run1(x, |t, xv| {
        let (wv, bv) = (t.leaf(w.clone()), t.leaf(b.clone()));
        conv_channel_mix_on(t, xv, wv, bv)
    })
}

pub fn adaptive_avg_pool_on(
    tape: &mut Tape,
    x: Var,
    h_out: usize,
    w_out: usize,
) -> Result<Var, NnError> {
    let (h, w, _) = tape.value(x).dims3()?;
    let map = Resampler::adaptive_avg_pool(h, w, h_out, w_out)?;
    tape.resample(x, Arc::new(map))
}

/// Bilinear resize of an `H × W × C` map (also used for shrinking).
pub fn upsample_bilinear_on(
    tape: &mut Tape,
    x: Var,
    h_out: usize,
    w_out: usize,
) -> Result<Var, NnError> {
    let (h, w, _) = tape.value(x).dims3()?;
    if (h, w) == (h_out, w_out) {
        return Ok(x);
    }
    let map = Resampler::bilinear(h, w, h_out, w_out)?;
    tape.resample(x, Arc::new(map))
}

/// 1×1 convolution: the same `C_in × C_out` linear map at every pixel.
pub fn conv_channel_mix_on(tape: &mut Tape, x: Var, w: Var, b: Var) -> Result<Var, NnError> {
    let (h, wd, c) = tape.value(x).dims3()?;
    let flat = tape.reshape(x, &[h * wd, c])?;
    let y = tape.linear(flat, w, b)?;
    let c_out = tape.shape(y)[1];
    tape.reshape(y, &[h, wd, c_out])
}

/// `H × W × C` map to `HW × C` tokens, row-major over pixels.
pub fn to_tokens(tape: &mut Tape, x: Var) -> Result<Var, NnError> {
    let (h, w, c) = tape.value(x).dims3()?;
    tape.reshape(x, &[h * w, c])
}

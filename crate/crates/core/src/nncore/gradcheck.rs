//! Central finite-difference verification of tape gradients.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::layers::{attention, AttentionParams};
use super::ops::{adaptive_avg_pool_on, conv_channel_mix_on, upsample_bilinear_on};
use super::tape::{Tape, Var};
use super::{NnError, Tensor};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheckConfig {
    /// Finite-difference step.
    pub eps: f64,
    /// Threshold above which a coordinate counts as failing.
    pub tolerance: f64,
    /// Coordinates examined per input; larger inputs are checked on an evenly
    /// strided subset.
    pub max_coords_per_input: usize,
    /// Seed for the random output projection that reduces the function to a scalar.
    pub seed: u64,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        Self {
            eps: 1e-5,
            tolerance: 1e-4,
            max_coords_per_input: 64,
            seed: 0,
        }
    }
}

/// A coordinate where the one-sided slopes disagree, i.e. the function is
/// not differentiable there.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Kink {
    pub input: usize,
    pub index: usize,
    pub left_slope: f64,
    pub right_slope: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    /// Largest relative error over checked, differentiable coordinates.
    pub max_rel_error: f64,
    pub per_input: Vec<f64>,
    pub checked: usize,
    pub kinks: Vec<Kink>,
}

impl GradCheckReport {
    pub fn passed(&self, tolerance: f64) -> bool {
        self.max_rel_error < tolerance
    }
}

/// `|a − b| / max(|a|, |b|, 1e-8)`.
pub fn relative_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-8)
}

fn checked_indices(len: usize, cap: usize) -> Vec<usize> {
    if len <= cap || cap == 0 {
        return (0..len).collect();
    }
    let stride = len.div_ceil(cap);
    (0..len).step_by(stride).collect()
}

/// Compares reverse-mode gradients of `f` with central differences.
///
/// `f` builds its output from the supplied input variables. The output is
/// reduced to a scalar by a fixed random projection with weights in `[-1, 1]`.
pub fn grad_check<F>(
    f: F,
    inputs: &[Tensor],
    cfg: &GradCheckConfig,
) -> Result<GradCheckReport, NnError>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var, NnError>,
{
    let run = |values: &[Tensor],
               weights: Option<&Tensor>|
     -> Result<(Tape, Var, Vec<Var>, Tensor), NnError> {
        let mut tape = Tape::new();
        let vars: Vec<Var> = values.iter().map(|t| tape.leaf(t.clone())).collect();
        let out = f(&mut tape, &vars)?;
        let w = match weights {
            Some(w) => w.clone(),
            None => {
                let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
                Tensor::uniform(tape.shape(out).to_vec(), 1.0, &mut rng)
            }
        };
        let loss = tape.weighted_sum(out, w.clone())?;
        Ok((tape, loss, vars, w))
    };

    let (tape, loss, vars, weights) = run(inputs, None)?;
    let grads = tape.backward(loss)?;
    let base = tape.value(loss).data()[0];
    drop(tape);

    let eval = |values: &[Tensor]| -> Result<f64, NnError> {
        let (tape, loss, _, _) = run(values, Some(&weights))?;
        Ok(tape.value(loss).data()[0])
    };

    let mut work: Vec<Tensor> = inputs.to_vec();
    let mut per_input = Vec::with_capacity(inputs.len());
    let mut kinks = Vec::new();
    let mut checked = 0;
    for (i, var) in vars.iter().enumerate() {
        let analytic = grads.get_or_zeros(*var, inputs[i].shape());
        let mut worst: f64 = 0.0;
        for idx in checked_indices(inputs[i].len(), cfg.max_coords_per_input) {
            let x0 = inputs[i].data()[idx];
            work[i].data_mut()[idx] = x0 + cfg.eps;
            let plus = eval(&work)?;
            work[i].data_mut()[idx] = x0 - cfg.eps;
            let minus = eval(&work)?;
            work[i].data_mut()[idx] = x0;

            let numeric = (plus - minus) / (2.0 * cfg.eps);
            let err = relative_error(analytic.data()[idx], numeric);
            checked += 1;
            if err > cfg.tolerance {
                let right = (plus - base) / cfg.eps;
                let left = (base - minus) / cfg.eps;
                if relative_error(left, right) > cfg.tolerance {
                    kinks.push(Kink {
                        input: i,
                        index: idx,
                        left_slope: left,
                        right_slope: right,
                    });
                    continue;
                }
            }
            worst = worst.max(err);
        }
        per_input.push(worst);
    }
    let max_rel_error = per_input.iter().copied().fold(0.0, f64::max);
    Ok(GradCheckReport {
        max_rel_error,
        per_input,
        checked,
        kinks,
    })
}

/// Names of the operations covered by [`op_suite`], in report order.
pub const SUITE_OPS: [&str; 7] = [
    "linear",
    "softmax",
    "layer_norm",
    "attention",
    "pooling",
    "upsampling",
    "conv_channel_mix",
];

/// Checks every differentiable primitive on small seeded random inputs.
pub fn op_suite(
    seed: u64,
    cfg: &GradCheckConfig,
) -> Result<Vec<(&'static str, GradCheckReport)>, NnError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut r = |shape: &[usize]| Tensor::uniform(shape.to_vec(), 1.0, &mut rng);
    let lin = [r(&[3, 4]), r(&[4, 2]), r(&[2])];
    let soft = [r(&[4, 5])];
    let ln = [r(&[3, 6]), r(&[6]), r(&[6])];
    let (q, k, v) = (r(&[3, 4]), r(&[5, 4]), r(&[5, 4]));
    let pool = [r(&[5, 4, 2])];
    let up = [r(&[3, 2, 2])];
    let conv = [r(&[3, 3, 2]), r(&[2, 3]), r(&[3])];
    let attn = AttentionParams::random(4, 2, &mut ChaCha8Rng::seed_from_u64(seed ^ 0xa77e));
    let attn_inputs = [
        q,
        k,
        v,
        attn.wq.clone(),
        attn.wk.clone(),
        attn.wv.clone(),
        attn.wo.clone(),
    ];

    Ok(vec![
        (
            "linear",
            grad_check(|t, x| t.linear(x[0], x[1], x[2]), &lin, cfg)?,
        ),
        (
            "softmax",
            grad_check(|t, x| t.softmax_rows(x[0]), &soft, cfg)?,
        ),
        (
            "layer_norm",
            grad_check(|t, x| t.layer_norm(x[0], x[1], x[2]), &ln, cfg)?,
        ),
        (
            "attention",
            grad_check(
                |t, x| {
                    let mut p = attn.bind(t);
                    (p.wq, p.wk, p.wv, p.wo) = (x[3], x[4], x[5], x[6]);
                    attention(t, x[0], x[1], x[2], &p)
                },
                &attn_inputs,
                cfg,
            )?,
        ),
        (
            "pooling",
            grad_check(|t, x| adaptive_avg_pool_on(t, x[0], 3, 2), &pool, cfg)?,
        ),
        (
            "upsampling",
            grad_check(|t, x| upsample_bilinear_on(t, x[0], 5, 4), &up, cfg)?,
        ),
        (
            "conv_channel_mix",
            grad_check(|t, x| conv_channel_mix_on(t, x[0], x[1], x[2]), &conv, cfg)?,
        ),
    ])
}

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{FeaturePyramid, HsseConfig, HsseError, LanguageFeatures};
use crate::nncore::layers::{self, BlockSpec};
use crate::nncore::ops::{
    adaptive_avg_pool_on, conv_channel_mix_on, to_tokens, upsample_bilinear_on,
};
use crate::nncore::{
    grad_check, Bound, GradCheckConfig, GradCheckReport, NnError, ParamStore, Tape, Tensor, Var,
};

const VIEW_CROSS: &str = "view_cross";
const VIEW_SELF: &str = "view_self";
const BROADCAST: &str = "broadcast";
const REF_CONV: &str = "ref_conv";

fn input_proj(scale: usize) -> String {
    format!("input_proj.{scale}")
}

fn scene_layer(layer: usize) -> String {
    format!("scene.{layer}")
}

/// Fixed 2D sinusoidal table `H × W × C`. The first `⌊C/2⌋` channels encode
/// the row, the rest the column; within an axis channels alternate sin/cos
/// at geometrically spaced frequencies.
pub fn sinusoidal_2d(h: usize, w: usize, c: usize) -> Tensor {
    let cy = c / 2;
    let cx = c - cy;
    let enc = |pos: usize, k: usize, d: usize| {
        let freq = 1.0 / 10_000f64.powf((2 * (k / 2)) as f64 / d as f64);
        let a = pos as f64 * freq;
        if k.is_multiple_of(2) {
            a.sin()
        } else {
            a.cos()
        }
    };
    let mut data = Vec::with_capacity(h * w * c);
    for y in 0..h {
        for x in 0..w {
            data.extend((0..cy).map(|k| enc(y, k, cy)));
            data.extend((0..cx).map(|k| enc(x, k, cx)));
        }
    }
    Tensor::new([h, w, c], data).expect("table size")
}

/// Per-scale 1×1 projections to the common width.
pub fn harmonize(tape: &mut Tape, bound: &Bound, scales: &[Var]) -> Result<Vec<Var>, HsseError> {
    scales
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let p = input_proj(i + 1);
            let (w, b) = (bound.var(&format!("{p}.w"))?, bound.var(&format!("{p}.b"))?);
            Ok(conv_channel_mix_on(tape, x, w, b)?)
        })
        .collect()
}

fn reference_index(cfg: &HsseConfig, num_scales: usize) -> Result<usize, HsseError> {
    if cfg.reference_scale == 0 || cfg.reference_scale > num_scales {
        return Err(HsseError::Config(format!(
            "reference scale {} outside 1..={num_scales}",
            cfg.reference_scale
        )));
    }
    Ok(cfg.reference_scale - 1)
}

/// Resizes scales `1..=s*` to the reference resolution, sums them and applies
/// the reference 1×1 convolution.
pub fn fuse_reference(
    tape: &mut Tape,
    bound: &Bound,
    cfg: &HsseConfig,
    scales: &[Var],
) -> Result<Var, HsseError> {
    let r = reference_index(cfg, scales.len())?;
    let (h, w, c) = tape.value(scales[r]).dims3()?;
    let mut sum: Option<Var> = None;
    for &x in &scales[..=r] {
        if tape.shape(x)[2] != c {
            return Err(HsseError::Shape(format!(
                "scale widths differ: {:?} vs {c}",
                tape.shape(x)
            )));
        }
        let up = upsample_bilinear_on(tape, x, h, w)?;
        sum = Some(match sum {
            None => up,
            Some(s) => tape.add(s, up)?,
        });
    }
    let sum = sum.expect("at least one scale");
    let (cw, cb) = (
        bound.var(&format!("{REF_CONV}.w"))?,
        bound.var(&format!("{REF_CONV}.b"))?,
    );
    Ok(conv_channel_mix_on(tape, sum, cw, cb)?)
}

pub fn pool_view_queries(tape: &mut Tape, cfg: &HsseConfig, f_ref: Var) -> Result<Var, HsseError> {
    let [ph, pw] = cfg.pooled_size;
    Ok(adaptive_avg_pool_on(tape, f_ref, ph, pw)?)
}

/// Pooled queries attend to every reference token of the same view.
/// Returns `h_s·w_s × C` tokens.
pub fn aggregate_view(
    tape: &mut Tape,
    bound: &Bound,
    cfg: &HsseConfig,
    f_q: Var,
    f_ref: Var,
) -> Result<Var, HsseError> {
    let q = to_tokens(tape, f_q)?;
    let kv = to_tokens(tape, f_ref)?;
    if tape.shape(q)[1] != tape.shape(kv)[1] {
        return Err(HsseError::Shape(format!(
            "query width {} vs reference width {}",
            tape.shape(q)[1],
            tape.shape(kv)[1]
        )));
    }
    Ok(layers::cross_block(
        tape, bound, VIEW_CROSS, cfg.heads, q, kv,
    )?)
}

pub fn refine_view(
    tape: &mut Tape,
    bound: &Bound,
    cfg: &HsseConfig,
    tokens: Var,
) -> Result<Var, HsseError> {
    Ok(layers::self_block(
        tape, bound, VIEW_SELF, cfg.heads, tokens,
    )?)
}

/// Joint self-attention over all views' query tokens followed by the language
/// tokens. Returns the per-view blocks and the language block.
pub fn scene_interaction(
    tape: &mut Tape,
    bound: &Bound,
    cfg: &HsseConfig,
    view_tokens: &[Var],
    lang: Var,
) -> Result<(Vec<Var>, Var), HsseError> {
    let (_, c) = tape.value(lang).dims2()?;
    let mut lens = Vec::with_capacity(view_tokens.len());
    for &v in view_tokens {
        let (n, cv) = tape.value(v).dims2()?;
        if cv != c {
            return Err(HsseError::Shape(format!(
                "view tokens have width {cv}, language has {c}"
            )));
        }
        lens.push(n);
    }
    let mut parts = view_tokens.to_vec();
    parts.push(lang);
    let mut x = tape.concat_rows(&parts)?;
    for l in 1..=cfg.scene_layers {
        x = layers::self_block(tape, bound, &scene_layer(l), cfg.heads, x)?;
    }
    let mut start = 0;
    let mut views = Vec::with_capacity(lens.len());
    for n in lens {
        views.push(tape.slice_rows(x, start, n)?);
        start += n;
    }
    let t = tape.value(lang).shape()[0];
    let lang_out = tape.slice_rows(x, start, t)?;
    Ok((views, lang_out))
}

/// Every spatial position of every scale attends to the view's scene tokens.
pub fn broadcast_semantics(
    tape: &mut Tape,
    bound: &Bound,
    cfg: &HsseConfig,
    scales: &[Var],
    scene_tokens: Var,
) -> Result<Vec<Var>, HsseError> {
    scales
        .iter()
        .map(|&x| {
            let shape = tape.shape(x).to_vec();
            let q = to_tokens(tape, x)?;
            let y = layers::cross_block(tape, bound, BROADCAST, cfg.heads, q, scene_tokens)?;
            Ok(tape.reshape(y, &shape)?)
        })
        .collect()
}

/// Tape handles produced by [`hsse_forward`].
#[derive(Debug, Clone)]
pub struct TapeOutput {
    pub pyramids: Vec<Vec<Var>>,
    pub lang: Var,
    /// Per-view query tokens after the scene-level pass.
    pub view_tokens: Vec<Var>,
}

/// Full forward over `views[v][s]` raw maps and `T × C` language tokens.
pub fn hsse_forward(
    tape: &mut Tape,
    bound: &Bound,
    cfg: &HsseConfig,
    views: &[Vec<Var>],
    lang: Var,
) -> Result<TapeOutput, HsseError> {
    cfg.validate()?;
    let first = views
        .first()
        .ok_or_else(|| HsseError::Shape("no views".into()))?;
    let shapes: Vec<Vec<usize>> = first.iter().map(|&x| tape.shape(x).to_vec()).collect();
    for (v, view) in views.iter().enumerate() {
        let other: Vec<Vec<usize>> = view.iter().map(|&x| tape.shape(x).to_vec()).collect();
        if other != shapes {
            return Err(HsseError::Shape(format!(
                "view {v} has scale shapes {other:?}, view 0 has {shapes:?}"
            )));
        }
    }
    reference_index(cfg, shapes.len())?;

    let mut harmonized = Vec::with_capacity(views.len());
    let mut queries = Vec::with_capacity(views.len());
    for view in views {
        let h = harmonize(tape, bound, view)?;
        let f_ref = fuse_reference(tape, bound, cfg, &h)?;
        let (rh, rw, rc) = tape.value(f_ref).dims3()?;
        let pe = tape.leaf(sinusoidal_2d(rh, rw, rc));
        let f_ref = tape.add(f_ref, pe)?;
        let f_q = pool_view_queries(tape, cfg, f_ref)?;
        let agg = aggregate_view(tape, bound, cfg, f_q, f_ref)?;
        queries.push(refine_view(tape, bound, cfg, agg)?);
        harmonized.push(h);
    }
    let (view_tokens, lang) = scene_interaction(tape, bound, cfg, &queries, lang)?;
    let pyramids = harmonized
        .iter()
        .zip(&view_tokens)
        .map(|(h, &tokens)| broadcast_semantics(tape, bound, cfg, h, tokens))
        .collect::<Result<_, _>>()?;
    Ok(TapeOutput {
        pyramids,
        lang,
        view_tokens,
    })
}

/// Plain-tensor result of [`HsseModel::forward`].
#[derive(Debug, Clone, PartialEq)]
pub struct HsseOutput {
    pub pyramids: Vec<FeaturePyramid>,
    pub lang: LanguageFeatures,
    pub view_tokens: Vec<Tensor>,
}

/// Configuration, expected input widths and named parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct HsseModel {
    config: HsseConfig,
    input_channels: Vec<usize>,
    params: ParamStore,
}

impl HsseModel {
    /// Random initialization from `seed`.
    pub fn new(
        config: HsseConfig,
        input_channels: Vec<usize>,
        seed: u64,
    ) -> Result<Self, HsseError> {
        config.validate()?;
        reference_index(&config, input_channels.len())?;
        let c = config.channels;
        let spec = BlockSpec::new(c, config.heads);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ParamStore::new();
        for (i, &cs) in input_channels.iter().enumerate() {
            layers::init_linear(&mut params, &input_proj(i + 1), cs, c, &mut rng);
        }
        layers::init_linear(&mut params, REF_CONV, c, c, &mut rng);
        layers::init_block(&mut params, VIEW_CROSS, spec, true, &mut rng);
        layers::init_block(&mut params, VIEW_SELF, spec, false, &mut rng);
        for l in 1..=config.scene_layers {
            layers::init_block(&mut params, &scene_layer(l), spec, false, &mut rng);
        }
        layers::init_block(&mut params, BROADCAST, spec, true, &mut rng);
        Ok(Self {
            config,
            input_channels,
            params,
        })
    }

    /// Wraps existing parameters, e.g. from a checkpoint.
    pub fn from_params(
        config: HsseConfig,
        input_channels: Vec<usize>,
        params: ParamStore,
    ) -> Result<Self, HsseError> {
        let reference = Self::new(config, input_channels, 0)?;
        for (name, p) in reference.params.iter() {
            let got = params.get(name)?;
            if got.shape() != p.value.shape() {
                return Err(HsseError::Shape(format!(
                    "parameter {name}: expected {:?}, got {:?}",
                    p.value.shape(),
                    got.shape()
                )));
            }
        }
        Ok(Self {
            params,
            ..reference
        })
    }

    pub fn config(&self) -> &HsseConfig {
        &self.config
    }

    pub fn input_channels(&self) -> &[usize] {
        &self.input_channels
    }

    pub fn params(&self) -> &ParamStore {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.params
    }

    /// Prefixes of every residual block.
    pub fn block_prefixes(&self) -> Vec<String> {
        let mut out = vec![VIEW_CROSS.to_string(), VIEW_SELF.to_string()];
        out.extend((1..=self.config.scene_layers).map(scene_layer));
        out.push(BROADCAST.to_string());
        out
    }

    /// Zeroes the attention and FFN output projections of every block.
    pub fn zero_output_projections(&mut self) {
        for prefix in self.block_prefixes() {
            for name in layers::block_output_params(&prefix) {
                let t = self.params.get_mut(&name).expect("block parameter");
                t.data_mut().iter_mut().for_each(|v| *v = 0.0);
            }
        }
    }

    /// Sets every input projection to the identity; needs `C_s = C`.
    pub fn set_identity_input_projections(&mut self) -> Result<(), HsseError> {
        let c = self.config.channels;
        for (i, &cs) in self.input_channels.iter().enumerate() {
            if cs != c {
                return Err(HsseError::Shape(format!(
                    "scale {} has width {cs}, common width is {c}",
                    i + 1
                )));
            }
            let p = input_proj(i + 1);
            *self.params.get_mut(&format!("{p}.w"))? = Tensor::eye(c);
            *self.params.get_mut(&format!("{p}.b"))? = Tensor::zeros([c]);
        }
        Ok(())
    }

    fn check_inputs(
        &self,
        views: &[FeaturePyramid],
        lang: &LanguageFeatures,
    ) -> Result<(), HsseError> {
        for (v, p) in views.iter().enumerate() {
            if p.channels() != self.input_channels {
                return Err(HsseError::Shape(format!(
                    "view {v} has channels {:?}, model expects {:?}",
                    p.channels(),
                    self.input_channels
                )));
            }
        }
        if lang.channels() != self.config.channels {
            return Err(HsseError::Shape(format!(
                "language width {} differs from model width {}",
                lang.channels(),
                self.config.channels
            )));
        }
        Ok(())
    }

    pub fn forward(
        &self,
        views: &[FeaturePyramid],
        lang: &LanguageFeatures,
    ) -> Result<HsseOutput, HsseError> {
        self.check_inputs(views, lang)?;
        let mut tape = Tape::new();
        let bound = self.params.bind(&mut tape);
        let inputs: Vec<Vec<Var>> = views
            .iter()
            .map(|p| p.scales().iter().map(|t| tape.leaf(t.clone())).collect())
            .collect();
        let lang_var = tape.leaf(lang.tensor().clone());
        let out = hsse_forward(&mut tape, &bound, &self.config, &inputs, lang_var)?;
        let pyramids = out
            .pyramids
            .iter()
            .map(|vars| FeaturePyramid::new(vars.iter().map(|&v| tape.value(v).clone()).collect()))
            .collect::<Result<_, _>>()?;
        Ok(HsseOutput {
            pyramids,
            lang: LanguageFeatures::new(tape.value(out.lang).clone())?,
            view_tokens: out
                .view_tokens
                .iter()
                .map(|&v| tape.value(v).clone())
                .collect(),
        })
    }
}

/// Parameters differentiated by [`HsseModel::gradient_check`] alongside the
/// raw inputs: one tensor from each stage.
pub const GRADCHECK_PARAMS: [&str; 6] = [
    "input_proj.1.w",
    "ref_conv.w",
    "view_cross.attn.wk",
    "view_self.ffn1.w",
    "scene.1.attn.wq",
    "broadcast.attn.wv",
];

impl HsseModel {
    /// Finite-difference check of the whole forward pass with respect to the
    /// language tokens, every input map and [`GRADCHECK_PARAMS`]. All outputs
    /// (pyramids and language) are flattened into one vector.
    pub fn gradient_check(
        &self,
        views: &[FeaturePyramid],
        lang: &LanguageFeatures,
        gc: &GradCheckConfig,
    ) -> Result<GradCheckReport, HsseError> {
        self.check_inputs(views, lang)?;
        let num_scales = self.input_channels.len();
        let mut inputs = vec![lang.tensor().clone()];
        for p in views {
            inputs.extend(p.scales().iter().cloned());
        }
        for name in GRADCHECK_PARAMS {
            inputs.push(self.params.get(name)?.clone());
        }
        let report =
            grad_check(
                |tape, vars| {
                    let mut bound = self.params.bind(tape);
                    let param_vars = &vars[1 + views.len() * num_scales..];
                    for (name, &v) in GRADCHECK_PARAMS.iter().zip(param_vars) {
                        bound.set(*name, v);
                    }
                    let view_vars: Vec<Vec<Var>> = vars[1..1 + views.len() * num_scales]
                        .chunks(num_scales)
                        .map(<[Var]>::to_vec)
                        .collect();
                    let out = hsse_forward(tape, &bound, &self.config, &view_vars, vars[0])
                        .map_err(|e| match e {
                            HsseError::Nn(e) => e,
                            other => NnError::Argument(other.to_string()),
                        })?;
                    let mut flat = Vec::new();
                    for v in out.pyramids.iter().flatten().copied().chain([out.lang]) {
                        let n = tape.value(v).len();
                        flat.push(tape.reshape(v, &[n, 1])?);
                    }
                    tape.concat_rows(&flat)
                },
                &inputs,
                gc,
            )?;
        Ok(report)
    }
}

/// Random model and inputs for a composed gradient check: `views` views of
/// `scales` scales, scale `s` being `s·pooled` cells on a side with width
/// `s·C / scales`, and `tokens` language tokens.
pub fn gradcheck_fixture(
    config: &HsseConfig,
    views: usize,
    scales: usize,
    tokens: usize,
    seed: u64,
) -> Result<(HsseModel, Vec<FeaturePyramid>, LanguageFeatures), HsseError> {
    let widths: Vec<usize> = (1..=scales)
        .map(|s| (s * config.channels / scales).max(1))
        .collect();
    let model = HsseModel::new(config.clone(), widths.clone(), seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(1));
    let [ph, pw] = config.pooled_size;
    let pyramids = (0..views)
        .map(|_| {
            let maps = widths
                .iter()
                .enumerate()
                .map(|(i, &c)| Tensor::uniform([ph * (i + 1), pw * (i + 1), c], 1.0, &mut rng));
            FeaturePyramid::new(maps.collect())
        })
        .collect::<Result<_, _>>()?;
    let lang = LanguageFeatures::new(Tensor::uniform([tokens, config.channels], 1.0, &mut rng))?;
    Ok((model, pyramids, lang))
}

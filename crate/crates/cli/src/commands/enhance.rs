use std::fs;

use serde::Serialize;

use dg_core::formats::encode_pyramid;
use dg_core::hsse::{gradcheck_fixture, FeaturePyramid, HsseConfig, HsseModel, ToyEmbedder};
use dg_core::nncore::{op_suite, GradCheckConfig, GradCheckReport};
use dg_core::pointcloud::{load_pyramids, load_scan};

use super::{load_hsse_config, say, write_output};
use crate::error::{require_file, CliError, CliResult};
use crate::{GradcheckArgs, HsseDemoArgs, RunConfig};

/// Largest tolerated difference between a forward pass and the same pass
/// with views reversed.
const EQUIVARIANCE_TOL: f64 = 1e-12;

#[derive(Serialize)]
struct Checks {
    shapes_preserved: bool,
    finite: bool,
    view_permutation_max_abs_diff: f64,
    /// Absent when input widths differ from the common width.
    residual_identity: Option<bool>,
}

#[derive(Serialize)]
struct DemoReport {
    scene_id: String,
    seed: u64,
    config: HsseConfig,
    text: String,
    language_tokens: usize,
    input_shapes: Vec<Vec<[usize; 3]>>,
    output_shapes: Vec<Vec<[usize; 3]>>,
    outputs: Vec<String>,
    checks: Checks,
}

fn max_diff(a: &[FeaturePyramid], b: &[FeaturePyramid]) -> f64 {
    a.iter()
        .zip(b)
        .flat_map(|(p, q)| p.scales().iter().zip(q.scales()))
        .map(|(x, y)| x.max_abs_diff(y))
        .fold(0.0, f64::max)
}

pub fn hsse_demo(cfg: &RunConfig, args: &HsseDemoArgs) -> CliResult<()> {
    require_file(&args.scene)?;
    let hcfg = load_hsse_config(args.config.as_deref())?;
    let scan = load_scan(&args.scene)?;
    let views = load_pyramids(&scan)?;
    let widths = views[0].channels();
    let model = HsseModel::new(hcfg.clone(), widths.clone(), cfg.seed)?;
    let lang = ToyEmbedder::new(hcfg.channels, cfg.seed).embed(&args.text);
    let out = model.forward(&views, &lang)?;

    let shapes_preserved = views.iter().zip(&out.pyramids).all(|(i, o)| {
        i.num_scales() == o.num_scales()
            && i.shapes()
                .iter()
                .zip(o.shapes())
                .all(|(a, b)| a[..2] == b[..2] && b[2] == hcfg.channels)
    });
    let finite = out
        .pyramids
        .iter()
        .flat_map(FeaturePyramid::scales)
        .all(|t| t.all_finite())
        && out.lang.tensor().all_finite();
    let reversed: Vec<FeaturePyramid> = views.iter().rev().cloned().collect();
    let mut out_rev = model.forward(&reversed, &lang)?.pyramids;
    out_rev.reverse();
    let perm_diff = max_diff(&out.pyramids, &out_rev);
    let residual_identity = if widths.iter().all(|&c| c == hcfg.channels) {
        let mut m = model.clone();
        m.zero_output_projections();
        m.set_identity_input_projections()?;
        Some(m.forward(&views, &lang)?.pyramids == views)
    } else {
        None
    };

    fs::create_dir_all(&args.out)
        .map_err(|e| CliError::Input(format!("cannot create {}: {e}", args.out.display())))?;
    let mut outputs = Vec::new();
    for (v, p) in out.pyramids.iter().enumerate() {
        let name = format!("view_{v:03}.dgf");
        write_output(&args.out.join(&name), &encode_pyramid(p)?)?;
        outputs.push(name);
    }
    let report = DemoReport {
        scene_id: scan.scene_id.clone(),
        seed: cfg.seed,
        config: hcfg,
        text: args.text.clone(),
        language_tokens: lang.len(),
        input_shapes: views.iter().map(FeaturePyramid::shapes).collect(),
        output_shapes: out.pyramids.iter().map(FeaturePyramid::shapes).collect(),
        outputs,
        checks: Checks {
            shapes_preserved,
            finite,
            view_permutation_max_abs_diff: perm_diff,
            residual_identity,
        },
    };
    let mut json = serde_json::to_string_pretty(&report).expect("serializable report");
    json.push('\n');
    write_output(&args.out.join("report.json"), json.as_bytes())?;

    let mut broken = Vec::new();
    if !shapes_preserved {
        broken.push("output shapes differ from input shapes".to_string());
    }
    if !finite {
        broken.push("non-finite output".to_string());
    }
    if perm_diff > EQUIVARIANCE_TOL {
        broken.push(format!("view permutation changes outputs by {perm_diff:e}"));
    }
    if residual_identity == Some(false) {
        broken.push("zeroed residual branches do not reproduce the input".to_string());
    }
    if !broken.is_empty() {
        return Err(CliError::Invariant(broken.join("; ")));
    }
    say(
        cfg,
        format!(
            "hsse-demo: {} views enhanced, permutation diff {perm_diff:e}",
            out.pyramids.len()
        ),
    );
    Ok(())
}

fn report_line(name: &str, r: &GradCheckReport) -> String {
    format!(
        "{name:<18} max_rel_error={:.3e} checked={} kinks={}",
        r.max_rel_error,
        r.checked,
        r.kinks.len()
    )
}

pub fn gradcheck(cfg: &RunConfig, args: &GradcheckArgs) -> CliResult<()> {
    let hcfg = load_hsse_config(args.config.as_deref())?;
    let gc = GradCheckConfig {
        seed: cfg.seed,
        ..GradCheckConfig::default()
    };
    let mut results = op_suite(cfg.seed, &gc)?;
    let scales = hcfg.reference_scale.max(2);
    let (model, views, lang) = gradcheck_fixture(&hcfg, 2, scales, 4, cfg.seed)?;
    results.push(("hsse_forward", model.gradient_check(&views, &lang, &gc)?));

    let mut failed = Vec::new();
    for (name, r) in &results {
        say(cfg, report_line(name, r));
        if !r.passed(gc.tolerance) {
            failed.push(*name);
        }
    }
    if failed.is_empty() {
        Ok(())
    } else {
        Err(CliError::Invariant(format!(
            "gradient check above {:e} for: {}",
            gc.tolerance,
            failed.join(", ")
        )))
    }
}

mod common;

use std::fs;
use std::path::Path;

use common::{dg, path_str, write_fixture, Fixture};
use dg_core::formats::{decode_points, read_pyramid};
use dg_core::jsonl::to_jsonl;
use dg_core::lse::{build_sidb, AnnotationBoxes};
use serde_json::Value;
use tempfile::TempDir;

fn setup() -> (TempDir, Fixture) {
    let tmp = TempDir::new().unwrap();
    let fx = write_fixture(tmp.path());
    (tmp, fx)
}

fn ok(args: &[&str]) -> String {
    let out = dg(args);
    assert!(
        out.status.success(),
        "dg {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn code(args: &[&str]) -> (i32, String) {
    let out = dg(args);
    (
        out.status.code().unwrap(),
        String::from_utf8_lossy(&out.stderr).into_owned(),
    )
}

fn read_json(p: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(p).unwrap()).unwrap()
}

#[test]
fn sidb_build_matches_library() {
    let (tmp, _) = setup();
    let anns = &common::annotations()[..2];
    let input = tmp.path().join("two.jsonl");
    fs::write(&input, to_jsonl(anns)).unwrap();
    let out = tmp.path().join("sidb.json");
    ok(&[
        "sidb-build",
        "--annotations",
        path_str(&input),
        "--out",
        path_str(&out),
    ]);
    let want = build_sidb(anns, &AnnotationBoxes).unwrap().to_json();
    assert_eq!(fs::read_to_string(&out).unwrap(), want);

    let empty = tmp.path().join("empty.jsonl");
    fs::write(&empty, "").unwrap();
    ok(&[
        "sidb-build",
        "--annotations",
        path_str(&empty),
        "--out",
        path_str(&out),
        "--quiet",
    ]);
    assert_eq!(
        read_json(&out),
        serde_json::json!({"version": 1, "scenes": {}})
    );
}

#[test]
fn sidb_build_input_errors() {
    let (tmp, fx) = setup();
    let out = tmp.path().join("sidb.json");
    let text = fs::read_to_string(&fx.annotations).unwrap();
    let first = text.lines().next().unwrap();

    let dup = tmp.path().join("dup.jsonl");
    fs::write(&dup, format!("{first}\n{first}\n")).unwrap();
    let (c, err) = code(&[
        "sidb-build",
        "--annotations",
        path_str(&dup),
        "--out",
        path_str(&out),
    ]);
    assert_eq!(c, 2, "{err}");
    assert!(err.contains("d00"));

    let bad = tmp.path().join("bad.jsonl");
    fs::write(&bad, format!("{first}\n{{not json\n")).unwrap();
    let (c, err) = code(&[
        "sidb-build",
        "--annotations",
        path_str(&bad),
        "--out",
        path_str(&out),
    ]);
    assert_eq!(c, 2);
    assert!(err.contains("line 2"), "{err}");

    let (c, _) = code(&[
        "sidb-build",
        "--annotations",
        "/nonexistent.jsonl",
        "--out",
        path_str(&out),
    ]);
    assert_eq!(c, 2);
    assert!(!out.exists());
}

#[test]
fn augment_mock_is_deterministic_and_defaults_k() {
    let (tmp, fx) = setup();
    let sidb = tmp.path().join("sidb.json");
    ok(&[
        "sidb-build",
        "--annotations",
        path_str(&fx.annotations),
        "--out",
        path_str(&sidb),
    ]);
    let run = |name: &str, extra: &[&str]| {
        let out = tmp.path().join(name);
        let mut args = vec![
            "augment",
            "--sidb",
            path_str(&sidb),
            "--annotations",
            path_str(&fx.annotations),
            "--out",
            path_str(&out),
            "--seed",
            "3",
        ];
        args.extend_from_slice(extra);
        ok(&args);
        fs::read(out).unwrap()
    };
    let a = run("a.jsonl", &[]);
    assert_eq!(a, run("b.jsonl", &[]));
    assert_eq!(a, run("k50.jsonl", &["--k", "50"]));
    assert_eq!(a, run("serial.jsonl", &["--max-in-flight", "1"]));

    let text = String::from_utf8(a).unwrap();
    let records: Vec<Value> = text
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    assert_eq!(records.len(), common::annotations().len());
    for (r, a) in records.iter().zip(common::annotations()) {
        assert_eq!(r["desc_id"], a.desc_id.as_str());
        assert!(r["text"].as_str().unwrap().contains(&a.target_class));
    }
}

#[test]
fn augment_missing_scene_and_credentials() {
    let (tmp, fx) = setup();
    let sidb = tmp.path().join("sidb.json");
    let only_first = tmp.path().join("first.jsonl");
    fs::write(&only_first, to_jsonl(&common::annotations()[..1])).unwrap();
    ok(&[
        "sidb-build",
        "--annotations",
        path_str(&only_first),
        "--out",
        path_str(&sidb),
    ]);
    let out = tmp.path().join("aug.jsonl");
    ok(&[
        "augment",
        "--sidb",
        path_str(&sidb),
        "--annotations",
        path_str(&fx.annotations),
        "--out",
        path_str(&out),
    ]);
    let last: Value =
        serde_json::from_str(fs::read_to_string(&out).unwrap().lines().last().unwrap()).unwrap();
    assert_eq!(last["fallback_reason"], "scene-not-found");
    assert_eq!(last["augmented"], false);

    let (c, err) = code(&[
        "augment",
        "--sidb",
        path_str(&sidb),
        "--annotations",
        path_str(&fx.annotations),
        "--out",
        path_str(&out),
        "--backend",
        "http",
    ]);
    assert_eq!(c, 3);
    assert!(err.contains("DG_LLM_API_KEY"), "{err}");
}

fn eval_run(fx: &Fixture, preds: &Path, out: &Path, extra: &[&str]) -> (i32, String, String) {
    let mut args = vec![
        "eval",
        "--preds",
        path_str(preds),
        "--gt",
        path_str(&fx.annotations),
        "--scenes",
        path_str(&fx.scenes),
        "--out",
        path_str(out),
    ];
    args.extend_from_slice(extra);
    let o = dg(&args);
    (
        o.status.code().unwrap(),
        String::from_utf8(o.stdout).unwrap(),
        String::from_utf8(o.stderr).unwrap(),
    )
}

#[test]
fn eval_perfect_and_threshold() {
    let (tmp, fx) = setup();
    let perfect: String = common::annotations()
        .iter()
        .map(|a| {
            format!(
                "{}\n",
                serde_json::json!({"desc_id": a.desc_id, "pred_box": a.target_box})
            )
        })
        .collect();
    let preds = tmp.path().join("perfect.jsonl");
    fs::write(&preds, perfect).unwrap();
    let out = tmp.path().join("report.json");
    let (c, stdout, _) = eval_run(&fx, &preds, &out, &[]);
    assert_eq!(c, 0);
    assert_eq!(
        stdout.trim(),
        "overall=1.0000 easy=1.0000 hard=1.0000 dep=1.0000 indep=1.0000"
    );
    let r = read_json(&out);
    assert_eq!(r["threshold"], 0.25);
    for b in ["overall", "easy", "hard", "dep", "indep"] {
        assert!(r[b]["n"].as_u64().unwrap() > 0, "{b} is empty");
    }

    let noisy = tmp.path().join("noisy.jsonl");
    fs::write(&noisy, common::synthetic_predictions(1)).unwrap();
    let (_, loose, _) = eval_run(&fx, &noisy, &out, &["--quiet"]);
    assert!(loose.is_empty());
    let at25 = read_json(&out);
    eval_run(&fx, &noisy, &out, &["--threshold", "0.5"]);
    let at50 = read_json(&out);
    assert_eq!(at50["threshold"], 0.5);
    assert!(at50["overall"]["correct"].as_u64() <= at25["overall"]["correct"].as_u64());
    assert_eq!(at50["overall"]["n"], at25["overall"]["n"]);

    let (c, _, err) = eval_run(&fx, &noisy, &out, &["--threshold", "1.5"]);
    assert_eq!(c, 3, "{err}");
}

#[test]
fn eval_four_sample_fixture() {
    let (tmp, fx) = setup();
    let anns: Vec<_> = common::annotations()
        .into_iter()
        .take(4)
        .map(|mut a| {
            a.target_box =
                Some(dg_core::geometry::Box9DoF::axis_aligned([0.0; 3], [1.0; 3]).unwrap());
            a
        })
        .collect();
    let gt = tmp.path().join("gt4.jsonl");
    fs::write(&gt, to_jsonl(&anns)).unwrap();
    let preds: String = anns
        .iter()
        .zip([0.3, 0.2, 0.26, 0.9])
        .map(|(a, iou)| {
            let b = [0.0, 0.0, 0.0, 1.0, 1.0, 1.0 / iou, 0.0, 0.0, 0.0];
            format!(
                "{}\n",
                serde_json::json!({"desc_id": a.desc_id, "pred_box": b})
            )
        })
        .collect();
    let p = tmp.path().join("p4.jsonl");
    fs::write(&p, preds).unwrap();
    let out = tmp.path().join("r4.json");
    let fx4 = Fixture {
        annotations: gt,
        ..fx
    };
    let (c, stdout, _) = eval_run(&fx4, &p, &out, &[]);
    assert_eq!(c, 0);
    assert!(stdout.starts_with("overall=0.7500 "), "{stdout}");
}

#[test]
fn eval_unmatched_ids() {
    let (tmp, fx) = setup();
    let preds = tmp.path().join("p.jsonl");
    let mut text = common::synthetic_predictions(0);
    text.push_str("{\"desc_id\": \"ghost1\", \"pred_box\": null}\n{\"desc_id\": \"ghost2\", \"pred_box\": null}\n");
    fs::write(&preds, text).unwrap();
    let (c, _, err) = eval_run(&fx, &preds, &tmp.path().join("r.json"), &[]);
    assert_eq!(c, 2);
    assert!(err.contains("ghost1, ghost2"), "{err}");
}

#[test]
fn unproject_formats() {
    let (tmp, fx) = setup();
    let jsonl = tmp.path().join("points.jsonl");
    let bin = tmp.path().join("points.bin");
    let stdout = ok(&[
        "unproject",
        "--scene",
        path_str(&fx.manifest),
        "--out",
        path_str(&jsonl),
        "--lift-scale",
        "1",
    ]);
    assert!(stdout.contains("of"), "{stdout}");
    ok(&[
        "unproject",
        "--scene",
        path_str(&fx.manifest),
        "--out",
        path_str(&bin),
        "--lift-scale",
        "1",
        "--format",
        "bin",
    ]);
    let text = fs::read_to_string(&jsonl).unwrap();
    let rows: Vec<Value> = text
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    let (points, feats) = decode_points(&fs::read(&bin).unwrap()).unwrap();
    assert_eq!(rows.len(), points.len());
    let feats = feats.unwrap();
    assert_eq!(feats.shape()[1], common::CHANNELS);
    for (i, r) in rows.iter().enumerate() {
        assert_eq!(r["features"].as_array().unwrap().len(), common::CHANNELS);
        for k in 0..3 {
            let x = r["xyz"][k].as_f64().unwrap();
            assert!((x - points[i][k]).abs() < 1e-5);
        }
    }
    // 2 views of 40×30 pixels minus every 17th diagonal
    let valid: usize = (0..2)
        .map(|v| {
            (0..30u32)
                .flat_map(|y| (0..40u32).map(move |x| (x + y + v) % 17 != 0))
                .filter(|&b| b)
                .count()
        })
        .sum();
    assert_eq!(rows.len(), (valid as f64 * 0.02 - 1e-9).ceil() as usize);

    let (c, _) = code(&[
        "unproject",
        "--scene",
        path_str(&fx.manifest),
        "--out",
        path_str(&bin),
        "--ratio",
        "0",
    ]);
    assert_eq!(c, 3);
    let all = tmp.path().join("all.jsonl");
    ok(&[
        "unproject",
        "--scene",
        path_str(&fx.manifest),
        "--out",
        path_str(&all),
        "--ratio",
        "1",
    ]);
    assert_eq!(fs::read_to_string(&all).unwrap().lines().count(), valid);
}

#[test]
fn hsse_demo_is_reproducible() {
    let (tmp, fx) = setup();
    let run = |name: &str| {
        let out = tmp.path().join(name);
        ok(&[
            "hsse-demo",
            "--scene",
            path_str(&fx.manifest),
            "--config",
            path_str(&fx.hsse_config),
            "--seed",
            "9",
            "--out",
            path_str(&out),
        ]);
        out
    };
    let (a, b) = (run("a"), run("b"));
    for f in ["view_000.dgf", "view_001.dgf", "report.json"] {
        assert_eq!(
            fs::read(a.join(f)).unwrap(),
            fs::read(b.join(f)).unwrap(),
            "{f}"
        );
    }
    let report = read_json(&a.join("report.json"));
    assert_eq!(report["checks"]["residual_identity"], true);
    assert_eq!(report["config"]["scene_layers"], 3);
    assert_eq!(report["config"]["pooled_size"], serde_json::json!([5, 5]));
    let p = read_pyramid(&a.join("view_001.dgf")).unwrap();
    assert_eq!(p.shapes(), [[5, 6, 8], [10, 12, 8]]);
}

#[test]
fn hsse_demo_config_errors() {
    let (tmp, fx) = setup();
    let out = tmp.path().join("o");
    let big = tmp.path().join("big.json");
    fs::write(&big, r#"{"channels": 8, "heads": 2, "pooled_size": 20}"#).unwrap();
    let (c, err) = code(&[
        "hsse-demo",
        "--scene",
        path_str(&fx.manifest),
        "--config",
        path_str(&big),
        "--out",
        path_str(&out),
    ]);
    assert_eq!(c, 2, "{err}");

    let bad = tmp.path().join("bad.json");
    fs::write(&bad, r#"{"channels": 8, "heads": 3}"#).unwrap();
    let (c, _) = code(&[
        "hsse-demo",
        "--scene",
        path_str(&fx.manifest),
        "--config",
        path_str(&bad),
        "--out",
        path_str(&out),
    ]);
    assert_eq!(c, 3);
    let (c, _) = code(&["gradcheck", "--config", path_str(&bad)]);
    assert_eq!(c, 3);
}

#[test]
fn gradcheck_passes_on_default_config() {
    let stdout = ok(&["gradcheck"]);
    let lines: Vec<&str> = stdout.lines().collect();
    assert_eq!(lines.len(), 8);
    assert!(lines.last().unwrap().starts_with("hsse_forward"));
}

#[test]
fn usage_errors_exit_2() {
    assert_eq!(dg(&["no-such-command"]).status.code(), Some(2));
    assert_eq!(dg(&["eval"]).status.code(), Some(2));
    assert!(dg(&["--help"]).status.success());
}

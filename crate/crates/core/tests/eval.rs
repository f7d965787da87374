use std::collections::BTreeMap;

use dg_core::eval::{
    classify_difficulty, evaluate, evaluate_samples, index_scenes, join_samples, Difficulty,
    EvalError, GroundingSample, Prediction, SceneObject, SceneObjects, ViewDependency, ViewLexicon,
    DEFAULT_IOU_THRESHOLD,
};
use dg_core::geometry::{iou_9dof, Box9DoF};
use dg_core::lse::Annotation;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn unit() -> Box9DoF {
    Box9DoF::axis_aligned([0.0; 3], [1.0; 3]).unwrap()
}

/// A box containing the unit cube whose IoU with it is `1 / z`.
fn stretched(z: f64) -> Box9DoF {
    Box9DoF::axis_aligned([0.0; 3], [1.0, 1.0, z]).unwrap()
}

fn scene(id: &str, classes: &[&str]) -> SceneObjects {
    SceneObjects {
        scene_id: id.into(),
        objects: classes
            .iter()
            .map(|c| SceneObject {
                class: c.to_string(),
                bbox: unit(),
            })
            .collect(),
    }
}

fn sample(
    id: &str,
    scene: &str,
    text: &str,
    class: &str,
    pred: Option<Box9DoF>,
) -> GroundingSample {
    GroundingSample {
        desc_id: id.into(),
        scene_id: scene.into(),
        text: text.into(),
        target_class: class.into(),
        gt_box: unit(),
        pred_box: pred,
    }
}

#[test]
fn accuracy_example() {
    let scenes = index_scenes(vec![scene("s", &["chair", "table"])]).unwrap();
    let samples: Vec<_> = [0.3, 0.2, 0.26, 0.9]
        .iter()
        .enumerate()
        .map(|(i, t)| {
            sample(
                &i.to_string(),
                "s",
                "the chair",
                "chair",
                Some(stretched(1.0 / t)),
            )
        })
        .collect();
    let r = evaluate(
        &samples,
        &scenes,
        DEFAULT_IOU_THRESHOLD,
        &ViewLexicon::default(),
    )
    .unwrap();
    assert_eq!((r.overall.n, r.overall.correct), (4, 3));
    assert_eq!(r.overall.acc, 0.75);
    assert_eq!(r.easy.n, 4);
    assert_eq!(r.hard, Default::default());
    assert_eq!(r.indep.n, 4);
}

#[test]
fn threshold_is_strict() {
    let pred = stretched(4.0);
    assert_eq!(iou_9dof(&pred, &unit()), 0.25);
    let scenes = index_scenes(vec![scene("s", &["chair"])]).unwrap();
    let r = evaluate(
        &[sample("a", "s", "x", "chair", Some(pred))],
        &scenes,
        0.25,
        &ViewLexicon::default(),
    )
    .unwrap();
    assert_eq!(r.overall.correct, 0);
    let r = evaluate(
        &[sample("a", "s", "x", "chair", Some(pred))],
        &scenes,
        0.2499,
        &ViewLexicon::default(),
    )
    .unwrap();
    assert_eq!(r.overall.correct, 1);
}

#[test]
fn missing_prediction_is_incorrect() {
    let scenes = index_scenes(vec![scene("s", &["chair"])]).unwrap();
    let samples = [
        sample("a", "s", "x", "chair", None),
        sample("b", "s", "x", "chair", Some(unit())),
    ];
    let out = evaluate_samples(&samples, &scenes, 0.25, &ViewLexicon::default()).unwrap();
    assert_eq!(out[0].iou, None);
    assert!(!out[0].correct);
    assert!(out[1].correct);
}

#[test]
fn rejects_bad_inputs() {
    let scenes = index_scenes(vec![scene("s", &["chair"])]).unwrap();
    let lex = ViewLexicon::default();
    let orphan = [sample("a", "nowhere", "x", "chair", None)];
    assert!(matches!(
        evaluate(&orphan, &scenes, 0.25, &lex),
        Err(EvalError::UnknownScene(_))
    ));
    assert!(matches!(
        evaluate(&[], &scenes, 1.5, &lex),
        Err(EvalError::Threshold(_))
    ));
    let empty = evaluate(&[], &scenes, 0.25, &lex).unwrap();
    assert_eq!(empty.overall.acc, 0.0);
    assert!(empty.per_class.is_empty());
}

fn annotation(id: &str, with_box: bool) -> Annotation {
    Annotation {
        desc_id: id.into(),
        scene_id: "s".into(),
        text: "the chair".into(),
        target_class: "chair".into(),
        anchor_classes: vec![],
        target_box: with_box.then(unit),
    }
}

#[test]
fn join_by_desc_id() {
    let anns = [annotation("a", true), annotation("b", true)];
    let preds = [
        Prediction {
            desc_id: "b".into(),
            pred_box: None,
        },
        Prediction {
            desc_id: "a".into(),
            pred_box: Some(unit()),
        },
    ];
    let s = join_samples(&anns, &preds).unwrap();
    assert_eq!(
        s.iter().map(|s| s.desc_id.as_str()).collect::<Vec<_>>(),
        ["a", "b"]
    );
    assert_eq!(s[0].pred_box, Some(unit()));
    assert_eq!(s[1].pred_box, None);

    assert!(
        matches!(join_samples(&anns, &preds[..1]), Err(EvalError::MissingPrediction(ids)) if ids == ["a"])
    );
    let extra = [
        preds[0].clone(),
        preds[1].clone(),
        Prediction {
            desc_id: "z".into(),
            pred_box: None,
        },
    ];
    assert!(
        matches!(join_samples(&anns, &extra), Err(EvalError::UnmatchedPrediction(ids)) if ids == ["z"])
    );
    let twice = [preds[0].clone(), preds[0].clone()];
    assert!(matches!(
        join_samples(&anns, &twice),
        Err(EvalError::DuplicatePrediction(_))
    ));
    assert!(matches!(
        join_samples(&[annotation("a", false)], &preds[1..]),
        Err(EvalError::MissingGtBox(_))
    ));
}

#[test]
fn prediction_json_accepts_null() {
    let p: Prediction = serde_json::from_str(r#"{"desc_id": "a", "pred_box": null}"#).unwrap();
    assert_eq!(p.pred_box, None);
}

const CLASSES: [&str; 4] = ["chair", "table", "lamp", "door"];
const TEXTS: [&str; 4] = [
    "the one on the left",
    "the red one",
    "facing the window",
    "next to the bed",
];

fn random_case(seed: u64) -> (BTreeMap<String, SceneObjects>, Vec<GroundingSample>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let scenes: Vec<SceneObjects> = (0..3)
        .map(|s| {
            let classes: Vec<&str> = (0..rng.gen_range(1..8))
                .map(|_| CLASSES[rng.gen_range(0..4)])
                .collect();
            scene(&format!("s{s}"), &classes)
        })
        .collect();
    let samples = (0..rng.gen_range(0..60))
        .map(|i| {
            let pred = match rng.gen_range(0..4) {
                0 => None,
                _ => Some(stretched(rng.gen_range(1.0..8.0))),
            };
            sample(
                &format!("d{i}"),
                &format!("s{}", rng.gen_range(0..3)),
                TEXTS[rng.gen_range(0..4)],
                CLASSES[rng.gen_range(0..4)],
                pred,
            )
        })
        .collect();
    (index_scenes(scenes).unwrap(), samples)
}

#[test]
fn report_matches_brute_force_recount() {
    let lex = ViewLexicon::default();
    for seed in 0..50 {
        let (scenes, samples) = random_case(seed);
        let r = evaluate(&samples, &scenes, 0.25, &lex).unwrap();

        let correct =
            |s: &GroundingSample| s.pred_box.is_some_and(|p| iou_9dof(&p, &s.gt_box) > 0.25);
        let hard = |s: &GroundingSample| {
            scenes[&s.scene_id]
                .objects
                .iter()
                .filter(|o| o.class == s.target_class)
                .count()
                >= 3
        };
        let dep = |s: &GroundingSample| {
            ["left", "facing"]
                .iter()
                .any(|w| s.text.split(' ').any(|t| t == *w))
        };
        let count = |f: &dyn Fn(&GroundingSample) -> bool| {
            let n = samples.iter().filter(|s| f(s)).count() as u64;
            let c = samples.iter().filter(|s| f(s) && correct(s)).count() as u64;
            (n, c)
        };
        assert_eq!((r.overall.n, r.overall.correct), count(&|_| true));
        assert_eq!((r.hard.n, r.hard.correct), count(&hard));
        assert_eq!((r.easy.n, r.easy.correct), count(&|s| !hard(s)));
        assert_eq!((r.dep.n, r.dep.correct), count(&dep));
        assert_eq!((r.indep.n, r.indep.correct), count(&|s| !dep(s)));

        assert_eq!(r.easy.n + r.hard.n, r.overall.n);
        assert_eq!(r.dep.n + r.indep.n, r.overall.n);
        assert_eq!(r.easy.correct + r.hard.correct, r.overall.correct);
        assert_eq!(r.per_class.values().map(|b| b.n).sum::<u64>(), r.overall.n);
        let weighted: f64 = r.per_class.values().map(|b| b.acc * b.n as f64).sum();
        if r.overall.n > 0 {
            assert!((weighted / r.overall.n as f64 - r.overall.acc).abs() < 1e-12);
        }
        for b in [r.overall, r.easy, r.hard, r.dep, r.indep] {
            assert!(b.correct <= b.n && (0.0..=1.0).contains(&b.acc));
        }
    }
}

#[test]
fn report_is_permutation_invariant() {
    let lex = ViewLexicon::default();
    for seed in 0..20 {
        let (scenes, mut samples) = random_case(seed);
        let base = evaluate(&samples, &scenes, 0.25, &lex).unwrap().to_json();
        samples.shuffle(&mut ChaCha8Rng::seed_from_u64(seed + 1000));
        assert_eq!(
            evaluate(&samples, &scenes, 0.25, &lex).unwrap().to_json(),
            base
        );
    }
}

#[test]
fn report_json_layout() {
    let scenes = index_scenes(vec![scene("s", &["chair", "chair", "chair"])]).unwrap();
    let samples = [sample(
        "a",
        "s",
        "the chair on the left",
        "chair",
        Some(unit()),
    )];
    let r = evaluate(&samples, &scenes, 0.25, &ViewLexicon::default()).unwrap();
    let v: serde_json::Value = serde_json::from_str(&r.to_json()).unwrap();
    assert_eq!(v["threshold"], 0.25);
    assert_eq!(v["hard"]["n"], 1);
    assert_eq!(v["dep"]["acc"], 1.0);
    assert_eq!(v["per_class"]["chair"]["correct"], 1);
    assert_eq!(classify_difficulty(&scenes["s"], "chair"), Difficulty::Hard);
    assert_eq!(
        ViewLexicon::default().classify(&samples[0].text),
        ViewDependency::Dep
    );
    assert_eq!(
        r.summary(),
        "overall=1.0000 easy=0.0000 hard=1.0000 dep=1.0000 indep=0.0000"
    );
}

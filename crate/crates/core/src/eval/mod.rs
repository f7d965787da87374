//! Grounding accuracy at an IoU threshold, split by difficulty, view
//! dependency and target class.

mod lexicon;

pub use lexicon::{classify_view_dependency, ViewDependency, ViewLexicon, DEFAULT_LEXICON};

use std::collections::{BTreeMap, BTreeSet};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::geometry::{iou_9dof, Box9DoF};
use crate::lse::Annotation;

/// A prediction counts when its IoU with the ground truth exceeds this.
pub const DEFAULT_IOU_THRESHOLD: f64 = 0.25;
/// Same-class instance count at which a scene is hard for that class.
pub const HARD_MIN_SAME_CLASS: usize = 3;

#[derive(Debug, thiserror::Error)]
pub enum EvalError {
    #[error("scene `{0}` is not in the scene list")]
    UnknownScene(String),
    #[error("scene `{0}` is listed twice")]
    DuplicateScene(String),
    #[error("scene `{0}` has an object with an empty class label")]
    EmptyClass(String),
    #[error("`{0}` has no ground-truth box")]
    MissingGtBox(String),
    #[error("no prediction for: {}", .0.join(", "))]
    MissingPrediction(Vec<String>),
    #[error("predictions match no annotation: {}", .0.join(", "))]
    UnmatchedPrediction(Vec<String>),
    #[error("`{0}` is predicted more than once")]
    DuplicatePrediction(String),
    #[error("threshold {0} outside [0, 1)")]
    Threshold(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneObject {
    pub class: String,
    #[serde(rename = "box")]
    pub bbox: Box9DoF,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneObjects {
    pub scene_id: String,
    pub objects: Vec<SceneObject>,
}

fn same_class(a: &str, b: &str) -> bool {
    a.trim().eq_ignore_ascii_case(b.trim())
}

/// Indexes scenes by id, rejecting duplicates and empty labels.
pub fn index_scenes(
    scenes: Vec<SceneObjects>,
) -> Result<BTreeMap<String, SceneObjects>, EvalError> {
    let mut map = BTreeMap::new();
    for s in scenes {
        if s.objects.iter().any(|o| o.class.trim().is_empty()) {
            return Err(EvalError::EmptyClass(s.scene_id));
        }
        if map.contains_key(&s.scene_id) {
            return Err(EvalError::DuplicateScene(s.scene_id));
        }
        map.insert(s.scene_id.clone(), s);
    }
    Ok(map)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Difficulty {
    Easy,
    Hard,
}

/// Hard when the scene holds at least three objects of the target's class.
pub fn classify_difficulty(scene: &SceneObjects, target_class: &str) -> Difficulty {
    let n = scene
        .objects
        .iter()
        .filter(|o| same_class(&o.class, target_class))
        .count();
    if n >= HARD_MIN_SAME_CLASS {
        Difficulty::Hard
    } else {
        Difficulty::Easy
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub desc_id: String,
    pub pred_box: Option<Box9DoF>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroundingSample {
    pub desc_id: String,
    pub scene_id: String,
    pub text: String,
    pub target_class: String,
    pub gt_box: Box9DoF,
    pub pred_box: Option<Box9DoF>,
}

/// Pairs annotations with predictions by `desc_id`, in annotation order.
/// Every annotation needs a box and exactly one prediction, and every
/// prediction must match an annotation.
pub fn join_samples(
    annotations: &[Annotation],
    predictions: &[Prediction],
) -> Result<Vec<GroundingSample>, EvalError> {
    let mut preds = BTreeMap::new();
    for p in predictions {
        if preds.insert(p.desc_id.as_str(), p.pred_box).is_some() {
            return Err(EvalError::DuplicatePrediction(p.desc_id.clone()));
        }
    }
    let known: BTreeSet<&str> = annotations.iter().map(|a| a.desc_id.as_str()).collect();
    let unmatched: Vec<String> = predictions
        .iter()
        .filter(|p| !known.contains(p.desc_id.as_str()))
        .map(|p| p.desc_id.clone())
        .collect();
    if !unmatched.is_empty() {
        return Err(EvalError::UnmatchedPrediction(unmatched));
    }
    let missing: Vec<String> = annotations
        .iter()
        .filter(|a| !preds.contains_key(a.desc_id.as_str()))
        .map(|a| a.desc_id.clone())
        .collect();
    if !missing.is_empty() {
        return Err(EvalError::MissingPrediction(missing));
    }
    annotations
        .iter()
        .map(|a| {
            let gt_box = a
                .target_box
                .ok_or_else(|| EvalError::MissingGtBox(a.desc_id.clone()))?;
            Ok(GroundingSample {
                desc_id: a.desc_id.clone(),
                scene_id: a.scene_id.clone(),
                text: a.text.clone(),
                target_class: a.target_class.clone(),
                gt_box,
                pred_box: preds[a.desc_id.as_str()],
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Bucket {
    pub n: u64,
    pub correct: u64,
    /// `correct / n`, or 0 for an empty bucket.
    pub acc: f64,
}

impl Bucket {
    fn add(&mut self, correct: bool) {
        self.n += 1;
        self.correct += u64::from(correct);
    }

    fn finish(&mut self) {
        self.acc = if self.n == 0 {
            0.0
        } else {
            self.correct as f64 / self.n as f64
        };
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub threshold: f64,
    pub overall: Bucket,
    pub easy: Bucket,
    pub hard: Bucket,
    pub dep: Bucket,
    pub indep: Bucket,
    pub per_class: BTreeMap<String, Bucket>,
}

impl EvalReport {
    /// Pretty JSON with a trailing newline.
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("serializable report");
        s.push('\n');
        s
    }

    /// `overall=0.7500 easy=… hard=… dep=… indep=…`
    pub fn summary(&self) -> String {
        format!(
            "overall={:.4} easy={:.4} hard={:.4} dep={:.4} indep={:.4}",
            self.overall.acc, self.easy.acc, self.hard.acc, self.dep.acc, self.indep.acc
        )
    }
}

/// Per-sample result, for auditing a report.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleOutcome {
    pub desc_id: String,
    pub iou: Option<f64>,
    pub correct: bool,
    pub difficulty: Difficulty,
    pub view: ViewDependency,
}

pub fn evaluate_samples(
    samples: &[GroundingSample],
    scenes: &BTreeMap<String, SceneObjects>,
    threshold: f64,
    lexicon: &ViewLexicon,
) -> Result<Vec<SampleOutcome>, EvalError> {
    if !(0.0..1.0).contains(&threshold) {
        return Err(EvalError::Threshold(threshold));
    }
    samples
        .par_iter()
        .map(|s| {
            let scene = scenes
                .get(&s.scene_id)
                .ok_or_else(|| EvalError::UnknownScene(s.scene_id.clone()))?;
            let iou = s.pred_box.map(|p| iou_9dof(&p, &s.gt_box));
            Ok(SampleOutcome {
                desc_id: s.desc_id.clone(),
                iou,
                correct: iou.is_some_and(|v| v > threshold),
                difficulty: classify_difficulty(scene, &s.target_class),
                view: lexicon.classify(&s.text),
            })
        })
        .collect()
}

pub fn evaluate(
    samples: &[GroundingSample],
    scenes: &BTreeMap<String, SceneObjects>,
    threshold: f64,
    lexicon: &ViewLexicon,
) -> Result<EvalReport, EvalError> {
    let outcomes = evaluate_samples(samples, scenes, threshold, lexicon)?;
    let mut r = EvalReport {
        threshold,
        overall: Bucket::default(),
        easy: Bucket::default(),
        hard: Bucket::default(),
        dep: Bucket::default(),
        indep: Bucket::default(),
        per_class: BTreeMap::new(),
    };
    for (s, o) in samples.iter().zip(&outcomes) {
        r.overall.add(o.correct);
        match o.difficulty {
            Difficulty::Easy => r.easy.add(o.correct),
            Difficulty::Hard => r.hard.add(o.correct),
        }
        match o.view {
            ViewDependency::Dep => r.dep.add(o.correct),
            ViewDependency::Indep => r.indep.add(o.correct),
        }
        r.per_class
            .entry(s.target_class.clone())
            .or_default()
            .add(o.correct);
    }
    for b in [
        &mut r.overall,
        &mut r.easy,
        &mut r.hard,
        &mut r.dep,
        &mut r.indep,
    ]
    .into_iter()
    .chain(r.per_class.values_mut())
    {
        b.finish();
    }
    Ok(r)
}

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::LseError;
use crate::geometry::Box9DoF;

/// One grounding description as it appears in the annotation JSONL.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Annotation {
    pub desc_id: String,
    pub scene_id: String,
    pub text: String,
    pub target_class: String,
    #[serde(default)]
    pub anchor_classes: Vec<String>,
    #[serde(default)]
    pub target_box: Option<Box9DoF>,
}

impl Annotation {
    pub fn validate(&self) -> Result<(), LseError> {
        let bad = |reason: &str| LseError::InvalidAnnotation {
            desc_id: self.desc_id.clone(),
            reason: reason.into(),
        };
        if self.desc_id.is_empty() {
            return Err(bad("empty desc_id"));
        }
        if self.text.trim().is_empty() {
            return Err(bad("empty text"));
        }
        if self.target_class.trim().is_empty() {
            return Err(bad("empty target_class"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SidbEntry {
    pub desc_id: String,
    pub text: String,
    pub object_class: String,
    pub center: Option<[f64; 3]>,
    #[serde(rename = "box")]
    pub bbox: Option<Box9DoF>,
}

/// Supplies the location of the object a description refers to.
pub trait BoxSource {
    fn box_for(&self, annotation: &Annotation) -> Option<Box9DoF>;
}

/// Uses each annotation's own `target_box`.
#[derive(Debug, Clone, Copy, Default)]
pub struct AnnotationBoxes;

impl BoxSource for AnnotationBoxes {
    fn box_for(&self, annotation: &Annotation) -> Option<Box9DoF> {
        annotation.target_box
    }
}

/// Externally predicted boxes keyed by `desc_id`.
impl BoxSource for BTreeMap<String, Box9DoF> {
    fn box_for(&self, annotation: &Annotation) -> Option<Box9DoF> {
        self.get(&annotation.desc_id).copied()
    }
}

pub const SIDB_VERSION: u32 = 1;

/// Descriptions grouped per scene, each carrying its object's location.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneInfoDB {
    pub version: u32,
    pub scenes: BTreeMap<String, Vec<SidbEntry>>,
}

impl Default for SceneInfoDB {
    fn default() -> Self {
        Self {
            version: SIDB_VERSION,
            scenes: BTreeMap::new(),
        }
    }
}

impl SceneInfoDB {
    pub fn scene(&self, scene_id: &str) -> Option<&[SidbEntry]> {
        self.scenes.get(scene_id).map(Vec::as_slice)
    }

    pub fn len(&self) -> usize {
        self.scenes.values().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn validate(&self) -> Result<(), LseError> {
        if self.version != SIDB_VERSION {
            return Err(LseError::Sidb(format!(
                "unsupported version {}",
                self.version
            )));
        }
        let mut seen = BTreeSet::new();
        for entry in self.scenes.values().flatten() {
            if !seen.insert(entry.desc_id.as_str()) {
                return Err(LseError::DuplicateDescId(entry.desc_id.clone()));
            }
            if let Some(b) = &entry.bbox {
                if entry.center != Some(b.center) {
                    return Err(LseError::Sidb(format!(
                        "{}: center does not match box center",
                        entry.desc_id
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self, LseError> {
        let db: Self = serde_json::from_str(text)?;
        db.validate()?;
        Ok(db)
    }

    /// Pretty JSON with a trailing newline; scenes sorted by id.
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("serializable database");
        s.push('\n');
        s
    }
}

/// Groups annotations by scene in input order, attaching object locations
/// from `boxes`.
pub fn build_sidb(
    annotations: &[Annotation],
    boxes: &dyn BoxSource,
) -> Result<SceneInfoDB, LseError> {
    let mut db = SceneInfoDB::default();
    let mut seen = BTreeSet::new();
    for a in annotations {
        a.validate()?;
        if !seen.insert(a.desc_id.as_str()) {
            return Err(LseError::DuplicateDescId(a.desc_id.clone()));
        }
        let bbox = boxes.box_for(a);
        db.scenes
            .entry(a.scene_id.clone())
            .or_default()
            .push(SidbEntry {
                desc_id: a.desc_id.clone(),
                text: a.text.clone(),
                object_class: a.target_class.clone(),
                center: bbox.map(|b| b.center),
                bbox,
            });
    }
    Ok(db)
}

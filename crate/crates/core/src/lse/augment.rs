use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::client::{consistency_gate, LlmClient};
use super::prompt::{assemble_prompt, PromptBundle, PromptTemplate};
use super::select::{item_seed, select_context, DEFAULT_CONTEXT_K};
use super::sidb::{Annotation, SceneInfoDB};
use super::LseError;

/// Output line of batch augmentation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AugmentedRecord {
    pub desc_id: String,
    pub text: String,
    pub augmented: bool,
    pub fallback_reason: Option<String>,
}

impl AugmentedRecord {
    fn fallback(raw: &Annotation, reason: impl Into<String>) -> Self {
        Self {
            desc_id: raw.desc_id.clone(),
            text: raw.text.clone(),
            augmented: false,
            fallback_reason: Some(reason.into()),
        }
    }
}

/// Calls the client and applies the consistency gate. A rejected output
/// yields the raw text with the gate's reason.
pub fn augment_description(
    client: &dyn LlmClient,
    bundle: &PromptBundle,
    raw: &Annotation,
) -> Result<AugmentedRecord, LseError> {
    let out = client.complete(bundle).map_err(|source| LseError::Client {
        desc_id: raw.desc_id.clone(),
        source,
    })?;
    Ok(match consistency_gate(&out, &raw.target_class) {
        Ok(()) => AugmentedRecord {
            desc_id: raw.desc_id.clone(),
            text: out,
            augmented: true,
            fallback_reason: None,
        },
        Err(why) => AugmentedRecord::fallback(raw, why.as_str()),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AugmentOptions {
    pub k: usize,
    pub seed: u64,
    /// Concurrent client calls; 1 runs sequentially on the calling thread.
    pub max_in_flight: usize,
}

impl Default for AugmentOptions {
    fn default() -> Self {
        Self {
            k: DEFAULT_CONTEXT_K,
            seed: 0,
            max_in_flight: 1,
        }
    }
}

pub const SCENE_NOT_FOUND: &str = "scene-not-found";

fn augment_one(
    client: &dyn LlmClient,
    db: &SceneInfoDB,
    template: &PromptTemplate,
    opts: &AugmentOptions,
    raw: &Annotation,
) -> Result<AugmentedRecord, LseError> {
    let context = match select_context(db, raw, opts.k, item_seed(opts.seed, &raw.desc_id)) {
        Ok(c) => c,
        Err(LseError::SceneNotFound(_)) => {
            return Ok(AugmentedRecord::fallback(raw, SCENE_NOT_FOUND))
        }
        Err(e) => return Err(e),
    };
    let bundle = assemble_prompt(raw, &context, template);
    match augment_description(client, &bundle, raw) {
        Err(LseError::Client { source, .. }) => Ok(AugmentedRecord::fallback(
            raw,
            format!("client-error: {source}"),
        )),
        other => other,
    }
}

/// Augments every annotation; records come back in input order. Missing
/// scenes, gate rejections and client failures become fallback records.
pub fn augment_batch(
    client: &dyn LlmClient,
    db: &SceneInfoDB,
    annotations: &[Annotation],
    template: &PromptTemplate,
    opts: &AugmentOptions,
) -> Result<Vec<AugmentedRecord>, LseError> {
    for a in annotations {
        a.validate()?;
    }
    if opts.max_in_flight <= 1 {
        return annotations
            .iter()
            .map(|a| augment_one(client, db, template, opts, a))
            .collect();
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(opts.max_in_flight)
        .build()
        .map_err(|e| LseError::Argument(e.to_string()))?;
    pool.install(|| {
        annotations
            .par_iter()
            .map(|a| augment_one(client, db, template, opts, a))
            .collect()
    })
}

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::sidb::{Annotation, SceneInfoDB, SidbEntry};
use super::LseError;

/// Context descriptions handed to the LLM per raw description.
pub const DEFAULT_CONTEXT_K: usize = 50;

/// Lowercase alphanumeric words.
pub fn tokens(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .collect()
}

/// Whether the words of `phrase` occur contiguously in `text_tokens`.
pub fn contains_phrase(text_tokens: &[String], phrase: &str) -> bool {
    let p = tokens(phrase);
    !p.is_empty() && text_tokens.windows(p.len()).any(|w| w == p.as_slice())
}

/// Per-description seed so results do not depend on batch order.
pub fn item_seed(seed: u64, key: &str) -> u64 {
    key.bytes().fold(seed ^ 0xcbf2_9ce4_8422_2325, |h, b| {
        (h ^ u64::from(b)).wrapping_mul(0x0100_0000_01b3)
    })
}

fn sample_sorted(pool: &[usize], count: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    if count >= pool.len() {
        return pool.to_vec();
    }
    let mut picked: Vec<usize> = rand::seq::index::sample(rng, pool.len(), count)
        .into_iter()
        .map(|i| pool[i])
        .collect();
    picked.sort_unstable();
    picked
}

/// Up to `k` same-scene context entries for `raw`. Entries whose text names
/// the target or an anchor class come first; when fewer than `k` qualify the
/// rest is drawn from the remaining entries of the scene. Both groups keep
/// database order.
pub fn select_context<'a>(
    db: &'a SceneInfoDB,
    raw: &Annotation,
    k: usize,
    seed: u64,
) -> Result<Vec<&'a SidbEntry>, LseError> {
    if k == 0 {
        return Err(LseError::Argument("k must be at least 1".into()));
    }
    let entries = db
        .scene(&raw.scene_id)
        .ok_or_else(|| LseError::SceneNotFound(raw.scene_id.clone()))?;
    let classes: Vec<&str> = std::iter::once(raw.target_class.as_str())
        .chain(raw.anchor_classes.iter().map(String::as_str))
        .collect();
    let (mut qualifying, mut others) = (Vec::new(), Vec::new());
    for (i, e) in entries.iter().enumerate() {
        if e.desc_id == raw.desc_id {
            continue;
        }
        let t = tokens(&e.text);
        if classes.iter().any(|c| contains_phrase(&t, c)) {
            qualifying.push(i);
        } else {
            others.push(i);
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut chosen = sample_sorted(&qualifying, k, &mut rng);
    if chosen.len() < k {
        chosen.extend(sample_sorted(&others, k - chosen.len(), &mut rng));
    }
    Ok(chosen.into_iter().map(|i| &entries[i]).collect())
}

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::LanguageFeatures;
use crate::nncore::Tensor;

/// Stand-in for a text encoder: every lowercase word maps to a fixed
/// pseudo-random vector in `[-1, 1]^C` derived from its FNV-1a hash.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ToyEmbedder {
    pub dim: usize,
    pub seed: u64,
}

fn fnv1a(bytes: &[u8]) -> u64 {
    bytes.iter().fold(0xcbf2_9ce4_8422_2325, |h, b| {
        (h ^ u64::from(*b)).wrapping_mul(0x0100_0000_01b3)
    })
}

impl ToyEmbedder {
    pub fn new(dim: usize, seed: u64) -> Self {
        Self { dim, seed }
    }

    pub fn tokenize(text: &str) -> Vec<String> {
        text.split(|c: char| !c.is_alphanumeric())
            .filter(|t| !t.is_empty())
            .map(str::to_lowercase)
            .collect()
    }

    pub fn embed_token(&self, token: &str) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(fnv1a(token.as_bytes()) ^ self.seed);
        Tensor::uniform([self.dim], 1.0, &mut rng).into_data()
    }

    /// One row per word; an empty text yields a single `<empty>` token.
    pub fn embed(&self, text: &str) -> LanguageFeatures {
        let mut tokens = Self::tokenize(text);
        if tokens.is_empty() {
            tokens.push("<empty>".into());
        }
        let rows: Vec<Vec<f64>> = tokens.iter().map(|t| self.embed_token(t)).collect();
        LanguageFeatures::new(Tensor::from_rows(&rows).expect("equal-width rows"))
            .expect("at least one token")
    }
}

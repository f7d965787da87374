use crate::lse::tokens;

/// Phrases that make a description depend on the observer's viewpoint. A
/// line of the form `a ... b` matches `a` followed later by `b`.
pub const DEFAULT_LEXICON: &str = "\
left
right
front
behind
back
facing
opposite
between ... from
nearest to me
looking
";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ViewDependency {
    Dep,
    Indep,
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Pattern {
    Phrase(Vec<String>),
    Gap(Vec<String>, Vec<String>),
}

fn find(haystack: &[String], needle: &[String], from: usize) -> Option<usize> {
    if needle.is_empty() || haystack.len() < needle.len() {
        return None;
    }
    (from..=haystack.len() - needle.len()).find(|&i| haystack[i..i + needle.len()] == *needle)
}

impl Pattern {
    fn matches(&self, text: &[String]) -> bool {
        match self {
            Pattern::Phrase(p) => find(text, p, 0).is_some(),
            Pattern::Gap(a, b) => {
                find(text, a, 0).is_some_and(|i| find(text, b, i + a.len()).is_some())
            }
        }
    }
}

/// Whole-word, case-insensitive view-dependency matcher.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ViewLexicon {
    patterns: Vec<Pattern>,
}

impl Default for ViewLexicon {
    fn default() -> Self {
        Self::parse(DEFAULT_LEXICON)
    }
}

impl ViewLexicon {
    /// One pattern per line; blank lines and `#` comments are ignored.
    /// `...` or `…` splits a gapped pattern.
    pub fn parse(text: &str) -> Self {
        let patterns = text
            .lines()
            .map(|l| l.split('#').next().unwrap_or("").trim())
            .filter(|l| !l.is_empty())
            .filter_map(|l| {
                let l = l.replace('…', "...");
                match l.split_once("...") {
                    Some((a, b)) => {
                        let (a, b) = (tokens(a), tokens(b));
                        (!a.is_empty() && !b.is_empty()).then_some(Pattern::Gap(a, b))
                    }
                    None => {
                        let p = tokens(&l);
                        (!p.is_empty()).then_some(Pattern::Phrase(p))
                    }
                }
            })
            .collect();
        Self { patterns }
    }

    pub fn len(&self) -> usize {
        self.patterns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.patterns.is_empty()
    }

    pub fn classify(&self, text: &str) -> ViewDependency {
        let t = tokens(text);
        if self.patterns.iter().any(|p| p.matches(&t)) {
            ViewDependency::Dep
        } else {
            ViewDependency::Indep
        }
    }
}

pub fn classify_view_dependency(text: &str) -> ViewDependency {
    ViewLexicon::default().classify(text)
}

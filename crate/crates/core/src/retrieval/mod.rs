//! Training-example storage and top-M retrieval by normalized edit
//! distance over word tokens.

mod store;

use std::collections::HashSet;
use std::sync::Arc;

use rayon::prelude::*;
use thiserror::Error;

use crate::grammar::Grammar;
use crate::pieces;
use crate::transducer::{ActionTree, TransduceError};

pub use store::{load_index, save_index, IndexHeader, FORMAT_VERSION};

#[derive(Debug, Error)]
pub enum RetrievalError {
    #[error("similarity is undefined for two empty sentences")]
    UndefinedSimilarity,
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("duplicate example id `{0}`")]
    DuplicateId(String),
    #[error("example `{0}` has an empty description")]
    EmptyDescription(String),
    #[error("index format version {found} is not supported (expected {expected})")]
    VersionMismatch { found: u32, expected: u32 },
    #[error("index was built for grammar {found}, current grammar is {expected}")]
    GrammarMismatch { found: String, expected: String },
    #[error("corrupt index: {0}")]
    Corrupt(String),
    #[error("norm constant unavailable: {0}")]
    Normalization(#[from] pieces::PieceError),
    #[error("example `{id}`: {source}")]
    Example {
        id: String,
        #[source]
        source: TransduceError,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Token-level Levenshtein distance with unit costs.
pub fn edit_distance<S: AsRef<str>>(a: &[S], b: &[S]) -> usize {
    if a.is_empty() {
        return b.len();
    }
    if b.is_empty() {
        return a.len();
    }
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut cur = vec![0; b.len() + 1];
    for (i, x) in a.iter().enumerate() {
        cur[0] = i + 1;
        for (j, y) in b.iter().enumerate() {
            let sub = prev[j] + usize::from(x.as_ref() != y.as_ref());
            cur[j + 1] = sub.min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// `1 - d(q, qm) / max(|q|, |qm|)`.
pub fn similarity<S: AsRef<str>>(q: &[S], qm: &[S]) -> Result<f64, RetrievalError> {
    let longest = q.len().max(qm.len());
    if longest == 0 {
        return Err(RetrievalError::UndefinedSimilarity);
    }
    Ok(1.0 - edit_distance(q, qm) as f64 / longest as f64)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TrainingExample {
    pub id: String,
    pub nl: Vec<String>,
    pub tree: ActionTree,
    pub code_tokens: Vec<String>,
}

#[derive(Debug, Clone, Copy)]
pub struct Neighbor<'a> {
    pub example: &'a TrainingExample,
    pub similarity: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IndexOptions {
    /// Compare descriptions after lowercasing.
    pub lowercase: bool,
    /// Use this value instead of the leave-one-out average.
    pub norm_constant: Option<f64>,
}

impl Default for IndexOptions {
    fn default() -> Self {
        IndexOptions {
            lowercase: true,
            norm_constant: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RetrievalIndex {
    grammar: Arc<Grammar>,
    examples: Vec<TrainingExample>,
    /// Descriptions as compared during retrieval (lowercased if enabled).
    keys: Vec<Vec<String>>,
    norm_constant: f64,
    lowercase: bool,
}

/// Builds an index and computes its norm constant once.
///
/// With fewer than two examples and no override, the norm constant falls
/// back to zero.
pub fn build_index(
    grammar: Arc<Grammar>,
    examples: Vec<TrainingExample>,
    options: IndexOptions,
) -> Result<RetrievalIndex, RetrievalError> {
    let mut seen = HashSet::new();
    for ex in &examples {
        if !seen.insert(ex.id.as_str()) {
            return Err(RetrievalError::DuplicateId(ex.id.clone()));
        }
        if ex.nl.is_empty() {
            return Err(RetrievalError::EmptyDescription(ex.id.clone()));
        }
    }
    let mut index = RetrievalIndex::assemble(grammar, examples, 0.0, options.lowercase);
    index.norm_constant = match options.norm_constant {
        Some(value) => check_norm_constant(value)?,
        None if index.len() < 2 => {
            log::warn!(
                "index has {} example(s); norm constant set to 0",
                index.len()
            );
            0.0
        }
        None => pieces::compute_norm_constant(&index)?,
    };
    Ok(index)
}

fn check_norm_constant(value: f64) -> Result<f64, RetrievalError> {
    if value.is_finite() && (0.0..=1.0).contains(&value) {
        Ok(value)
    } else {
        Err(RetrievalError::InvalidArgument(format!(
            "norm constant {value} outside [0, 1]"
        )))
    }
}

impl RetrievalIndex {
    fn assemble(
        grammar: Arc<Grammar>,
        examples: Vec<TrainingExample>,
        norm_constant: f64,
        lowercase: bool,
    ) -> Self {
        let keys = examples
            .iter()
            .map(|e| normalize_tokens(&e.nl, lowercase))
            .collect();
        RetrievalIndex {
            grammar,
            examples,
            keys,
            norm_constant,
            lowercase,
        }
    }

    pub fn grammar(&self) -> &Arc<Grammar> {
        &self.grammar
    }

    pub fn examples(&self) -> &[TrainingExample] {
        &self.examples
    }

    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    pub fn norm_constant(&self) -> f64 {
        self.norm_constant
    }

    pub fn set_norm_constant(&mut self, value: f64) -> Result<(), RetrievalError> {
        self.norm_constant = check_norm_constant(value)?;
        Ok(())
    }

    pub fn lowercase(&self) -> bool {
        self.lowercase
    }

    /// Query tokens in the form used for comparison.
    pub fn normalize(&self, q: &[String]) -> Vec<String> {
        normalize_tokens(q, self.lowercase)
    }

    pub(crate) fn key(&self, idx: usize) -> &[String] {
        &self.keys[idx]
    }

    /// Similarity of every stored example to `q`, in storage order.
    pub fn score_all(&self, q: &[String]) -> Vec<f64> {
        let q = self.normalize(q);
        self.keys
            .par_iter()
            .map(|k| similarity(&q, k).unwrap_or(0.0))
            .collect()
    }
}

fn normalize_tokens(tokens: &[String], lowercase: bool) -> Vec<String> {
    if lowercase {
        tokens.iter().map(|t| t.to_lowercase()).collect()
    } else {
        tokens.to_vec()
    }
}

/// Up to `m` most similar examples, by similarity descending then id
/// ascending.
pub fn retrieve<'a>(
    index: &'a RetrievalIndex,
    q: &[String],
    m: usize,
) -> Result<Vec<Neighbor<'a>>, RetrievalError> {
    if m == 0 {
        return Err(RetrievalError::InvalidArgument(
            "M must be at least 1".into(),
        ));
    }
    if index.is_empty() {
        return Ok(Vec::new());
    }
    let scores = index.score_all(q);
    let mut order: Vec<usize> = (0..index.len()).collect();
    order.sort_by(|&a, &b| {
        scores[b]
            .total_cmp(&scores[a])
            .then_with(|| index.examples[a].id.cmp(&index.examples[b].id))
    });
    Ok(order
        .into_iter()
        .take(m)
        .map(|i| Neighbor {
            example: &index.examples[i],
            similarity: scores[i],
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn toks(s: &str) -> Vec<String> {
        s.split_whitespace().map(str::to_string).collect()
    }

    #[test]
    fn distance_examples() {
        assert_eq!(edit_distance(&toks("a b c"), &toks("a b c")), 0);
        assert_eq!(edit_distance(&[] as &[String], &toks("x y")), 2);
        assert_eq!(
            edit_distance(
                &toks("params is an empty list"),
                &toks("lst is an empty list")
            ),
            1
        );
    }

    #[test]
    fn similarity_examples() {
        let q = toks("params is an empty list");
        assert_eq!(similarity(&q, &q).unwrap(), 1.0);
        let sim = similarity(&q, &toks("lst is an empty list")).unwrap();
        assert!((sim - 0.8).abs() <= 1e-12);
        assert_eq!(similarity(&toks("a b c"), &toks("x y z")).unwrap(), 0.0);
        assert!(matches!(
            similarity::<String>(&[], &[]),
            Err(RetrievalError::UndefinedSimilarity)
        ));
    }

    fn words() -> impl Strategy<Value = Vec<String>> {
        prop::collection::vec(
            prop::sample::select(vec!["a", "b", "c", "d"]).prop_map(String::from),
            0..8,
        )
    }

    proptest! {
        #[test]
        fn distance_is_a_metric(a in words(), b in words(), c in words()) {
            let ab = edit_distance(&a, &b);
            prop_assert_eq!(ab, edit_distance(&b, &a));
            prop_assert_eq!(ab == 0, a == b);
            prop_assert!(edit_distance(&a, &c) <= ab + edit_distance(&b, &c));
        }

        #[test]
        fn similarity_is_bounded_and_symmetric(a in words(), b in words()) {
            prop_assume!(!a.is_empty() || !b.is_empty());
            let s = similarity(&a, &b).unwrap();
            prop_assert!((0.0..=1.0).contains(&s));
            prop_assert_eq!(s, similarity(&b, &a).unwrap());
            prop_assert_eq!(s == 1.0, a == b);
        }
    }
}

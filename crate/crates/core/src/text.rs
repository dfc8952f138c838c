//! Tokenization, top-k vocabularies and bag-of-words vectors.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::corpus::Profile;
use crate::error::{Error, Result};
use crate::vector::SparseVector;

pub const BOW_SMALL: usize = 2000;
pub const BOW_LARGE: usize = 10_000;

/// Lowercased maximal runs of letters and digits.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(|t| t.to_lowercase())
        .collect()
}

/// All tokens of a profile's tweets, in posting order.
pub fn profile_tokens(profile: &Profile) -> Vec<String> {
    profile.tweets.iter().flat_map(|t| tokenize(t)).collect()
}

/// Ordered term list; dimension `i` is `terms[i]`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<String>", into = "Vec<String>")]
pub struct Vocabulary {
    terms: Vec<String>,
    index: HashMap<String, u32>,
}

impl TryFrom<Vec<String>> for Vocabulary {
    type Error = Error;

    fn try_from(terms: Vec<String>) -> Result<Self> {
        Vocabulary::from_terms(terms)
    }
}

impl From<Vocabulary> for Vec<String> {
    fn from(v: Vocabulary) -> Self {
        v.terms
    }
}

impl Vocabulary {
    pub fn from_terms(terms: Vec<String>) -> Result<Self> {
        let mut index = HashMap::with_capacity(terms.len());
        for (i, t) in terms.iter().enumerate() {
            if index.insert(t.clone(), i as u32).is_some() {
                return Err(Error::InvalidInput(format!("duplicate vocabulary term `{t}`")));
            }
        }
        Ok(Vocabulary { terms, index })
    }

    pub fn terms(&self) -> &[String] {
        &self.terms
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn get(&self, term: &str) -> Option<u32> {
        self.index.get(term).copied()
    }
}

/// The `k` most frequent terms across `docs`; ties go to the
/// lexicographically smaller term.
pub fn build_vocabulary<D, T>(docs: D, k: usize) -> Result<Vocabulary>
where
    D: IntoIterator,
    D::Item: IntoIterator<Item = T>,
    T: AsRef<str>,
{
    if k == 0 {
        return Err(Error::InvalidConfig("vocabulary size must be at least 1".into()));
    }
    let mut counts: HashMap<String, u64> = HashMap::new();
    for doc in docs {
        for tok in doc {
            let tok = tok.as_ref();
            if let Some(c) = counts.get_mut(tok) {
                *c += 1;
            } else {
                counts.insert(tok.to_string(), 1);
            }
        }
    }
    let mut ranked: Vec<(String, u64)> = counts.into_iter().collect();
    ranked.sort_unstable_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    ranked.truncate(k);
    Vocabulary::from_terms(ranked.into_iter().map(|(t, _)| t).collect())
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Weighting {
    /// Raw term counts.
    #[default]
    Counts,
    /// 1 for every present term.
    Binary,
}

pub fn vectorize<T: AsRef<str>>(tokens: &[T], vocab: &Vocabulary) -> SparseVector {
    vectorize_with(tokens, vocab, Weighting::Counts)
}

pub fn vectorize_with<T: AsRef<str>>(tokens: &[T], vocab: &Vocabulary, weighting: Weighting) -> SparseVector {
    let mut counts: HashMap<u32, f64> = HashMap::new();
    for t in tokens {
        if let Some(i) = vocab.get(t.as_ref()) {
            *counts.entry(i).or_insert(0.0) += 1.0;
        }
    }
    let mut entries: Vec<(u32, f64)> = counts
        .into_iter()
        .map(|(i, c)| match weighting {
            Weighting::Counts => (i, c),
            Weighting::Binary => (i, 1.0),
        })
        .collect();
    entries.sort_unstable_by_key(|e| e.0);
    SparseVector::new(vocab.len(), entries).expect("vocabulary indices are in range")
}

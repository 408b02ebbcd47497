//! Tokenization and tf-idf featurization.
//!
//! Tokens are maximal runs of Unicode alphanumeric characters, lowercased,
//! at least two characters long. Inverse document frequency is smoothed:
//! `idf(t) = ln((1 + N) / (1 + df(t))) + 1`, and every transformed vector is
//! L2-normalized.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Name of the tokenization rule, shipped with exported vectorizers.
pub const TOKENIZER_NAME: &str = "unicode_alnum_min2_lower";

pub fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|run| run.chars().count() >= 2)
        .map(str::to_lowercase)
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Vocabulary {
    tokens: Vec<String>,
    document_frequency: Vec<usize>,
    corpus_size: usize,
    idf: Vec<f64>,
    #[serde(skip)]
    index: HashMap<String, usize>,
}

impl Vocabulary {
    /// Fits over `corpus`, keeping at most `max_vocabulary` tokens ranked by
    /// document frequency (ties broken lexicographically). Kept tokens are
    /// stored in lexicographic order.
    pub fn fit<S: AsRef<str>>(corpus: &[S], max_vocabulary: usize) -> Result<Self> {
        if corpus.is_empty() {
            return Err(Error::InvalidInput("empty corpus".into()));
        }
        let mut df: BTreeMap<String, usize> = BTreeMap::new();
        for doc in corpus {
            let mut tokens = tokenize(doc.as_ref());
            tokens.sort_unstable();
            tokens.dedup();
            for t in tokens {
                *df.entry(t).or_default() += 1;
            }
        }
        if df.is_empty() {
            return Err(Error::EmptyVocabulary);
        }

        let mut ranked: Vec<(String, usize)> = df.into_iter().collect();
        if ranked.len() > max_vocabulary {
            // stable sort keeps lexicographic order among equal frequencies
            ranked.sort_by(|a, b| b.1.cmp(&a.1));
            ranked.truncate(max_vocabulary);
            ranked.sort_by(|a, b| a.0.cmp(&b.0));
        }

        let corpus_size = corpus.len();
        let (tokens, document_frequency): (Vec<String>, Vec<usize>) = ranked.into_iter().unzip();
        let idf = document_frequency
            .iter()
            .map(|&d| smoothed_idf(corpus_size, d))
            .collect();
        Ok(Self::assemble(tokens, document_frequency, corpus_size, idf))
    }

    /// Rebuilds a vocabulary from exported parts (tokens and idf only).
    pub fn from_parts(tokens: Vec<String>, idf: Vec<f64>) -> Result<Self> {
        if tokens.len() != idf.len() {
            return Err(Error::DimensionMismatch {
                expected: tokens.len(),
                actual: idf.len(),
            });
        }
        let n = tokens.len();
        Ok(Self::assemble(tokens, vec![0; n], 0, idf))
    }

    fn assemble(
        tokens: Vec<String>,
        document_frequency: Vec<usize>,
        corpus_size: usize,
        idf: Vec<f64>,
    ) -> Self {
        let index = tokens
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i))
            .collect();
        Self {
            tokens,
            document_frequency,
            corpus_size,
            idf,
            index,
        }
    }

    /// Restores the lookup table after deserialization.
    pub fn reindex(&mut self) {
        self.index = self
            .tokens
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i))
            .collect();
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn idf(&self) -> &[f64] {
        &self.idf
    }

    pub fn document_frequency(&self) -> &[usize] {
        &self.document_frequency
    }

    pub fn corpus_size(&self) -> usize {
        self.corpus_size
    }

    pub fn token_index(&self, token: &str) -> Option<usize> {
        if self.index.is_empty() && !self.tokens.is_empty() {
            return self.tokens.binary_search_by(|t| t.as_str().cmp(token)).ok();
        }
        self.index.get(token).copied()
    }

    pub fn transform(&self, text: &str) -> SparseVector {
        let mut counts: BTreeMap<usize, f64> = BTreeMap::new();
        for token in tokenize(text) {
            if let Some(i) = self.token_index(&token) {
                *counts.entry(i).or_default() += 1.0;
            }
        }
        let mut entries: Vec<(usize, f64)> = counts
            .into_iter()
            .map(|(i, c)| (i, c * self.idf[i]))
            .collect();
        let norm = entries.iter().map(|(_, v)| v * v).sum::<f64>().sqrt();
        if norm > 0.0 {
            for (_, v) in &mut entries {
                *v /= norm;
            }
        }
        SparseVector {
            dimension: self.len(),
            entries,
        }
    }
}

pub fn smoothed_idf(corpus_size: usize, df: usize) -> f64 {
    ((1.0 + corpus_size as f64) / (1.0 + df as f64)).ln() + 1.0
}

/// A sparse feature vector with entries sorted by index.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SparseVector {
    pub dimension: usize,
    pub entries: Vec<(usize, f64)>,
}

impl SparseVector {
    pub fn zero(dimension: usize) -> Self {
        Self {
            dimension,
            entries: Vec::new(),
        }
    }

    pub fn from_dense(values: &[f64]) -> Self {
        Self {
            dimension: values.len(),
            entries: values
                .iter()
                .enumerate()
                .filter(|(_, v)| **v != 0.0)
                .map(|(i, v)| (i, *v))
                .collect(),
        }
    }

    pub fn get(&self, index: usize) -> f64 {
        self.entries
            .binary_search_by_key(&index, |(i, _)| *i)
            .map(|pos| self.entries[pos].1)
            .unwrap_or(0.0)
    }

    pub fn is_zero(&self) -> bool {
        self.entries.iter().all(|(_, v)| *v == 0.0)
    }

    pub fn norm(&self) -> f64 {
        self.entries.iter().map(|(_, v)| v * v).sum::<f64>().sqrt()
    }

    pub fn dot(&self, dense: &[f64]) -> f64 {
        self.entries.iter().map(|(i, v)| v * dense[*i]).sum()
    }
}

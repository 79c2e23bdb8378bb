//! Tokenization, context-window truncation, and n-gram bag-of-words features.
//!
//! A token is a maximal lowercase alphanumeric run; documents become sparse
//! vectors of relative n-gram frequencies over a vocabulary built from
//! training data only.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::corpus::Dataset;
use crate::error::{Error, Result};

/// A tokenized text with byte spans back into the source string.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct TokenSequence {
    pub tokens: Vec<String>,
    /// Per-token `(start, end)` byte offsets into the source text;
    /// non-overlapping and strictly increasing.
    pub spans: Vec<(usize, usize)>,
}

impl TokenSequence {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    /// Builds a sequence directly from tokens, without source spans.
    /// Useful for reconstructed documents (e.g. token-subset evaluation).
    pub fn from_tokens(tokens: Vec<String>) -> Self {
        let spans = vec![(0, 0); tokens.len()];
        TokenSequence { tokens, spans }
    }
}

/// Lowercases and splits `text` into alphanumeric runs, recording where each
/// token came from. Deterministic; empty text gives an empty sequence.
pub fn tokenize(text: &str) -> TokenSequence {
    let mut tokens = Vec::new();
    let mut spans = Vec::new();
    let mut start: Option<usize> = None;
    for (i, c) in text.char_indices() {
        if c.is_alphanumeric() {
            if start.is_none() {
                start = Some(i);
            }
        } else if let Some(s) = start.take() {
            tokens.push(text[s..i].to_lowercase());
            spans.push((s, i));
        }
    }
    if let Some(s) = start {
        tokens.push(text[s..].to_lowercase());
        spans.push((s, text.len()));
    }
    TokenSequence { tokens, spans }
}

/// Truncates raw text at the end of its `window`-th token, preserving the
/// original formatting of everything kept. Used when a prompt needs the
/// untokenized text limited to a context window.
pub fn truncate_text(text: &str, window: usize) -> &str {
    if window == 0 {
        return "";
    }
    let seq = tokenize(text);
    if seq.len() <= window {
        text
    } else {
        &text[..seq.spans[window - 1].1]
    }
}

/// Keeps the first `window` tokens. Identity when the sequence is shorter.
pub fn truncate(seq: &TokenSequence, window: usize) -> Result<TokenSequence> {
    if window == 0 {
        return Err(Error::validation("window", "must be at least 1"));
    }
    let n = seq.len().min(window);
    Ok(TokenSequence {
        tokens: seq.tokens[..n].to_vec(),
        spans: seq.spans[..n].to_vec(),
    })
}

/// All contiguous n-grams for each order in `[n_min, n_max]`, joined with
/// single spaces, with multiplicities. Order information is discarded.
pub fn extract_ngrams(
    seq: &TokenSequence,
    n_min: usize,
    n_max: usize,
) -> Result<HashMap<String, usize>> {
    if n_min < 1 || n_min > n_max {
        return Err(Error::validation(
            "ngram_order",
            format!("need 1 <= n_min <= n_max, got ({n_min}, {n_max})"),
        ));
    }
    let mut counts = HashMap::new();
    for n in n_min..=n_max {
        if seq.len() < n {
            continue;
        }
        for window in seq.tokens.windows(n) {
            *counts.entry(window.join(" ")).or_insert(0) += 1;
        }
    }
    Ok(counts)
}

/// An n-gram vocabulary built from training documents.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Vocab {
    pub n_min: usize,
    pub n_max: usize,
    /// N-gram strings in index order: `grams[i]` has vocabulary index `i`.
    grams: Vec<String>,
    /// Training-document frequency of `grams[i]`.
    doc_frequencies: Vec<u32>,
    #[serde(skip)]
    index: HashMap<String, usize>,
}

/// Parameters for [`build_vocab`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VocabConfig {
    pub window: usize,
    pub n_min: usize,
    pub n_max: usize,
    /// Minimum number of training documents an n-gram must appear in.
    pub min_doc_freq: u32,
    pub max_size: usize,
}

impl Default for VocabConfig {
    fn default() -> Self {
        VocabConfig {
            window: 800,
            n_min: 1,
            n_max: 3,
            min_doc_freq: 2,
            max_size: 50_000,
        }
    }
}

impl Vocab {
    fn from_ranked(n_min: usize, n_max: usize, ranked: Vec<(String, u32)>) -> Self {
        let mut grams = Vec::with_capacity(ranked.len());
        let mut doc_frequencies = Vec::with_capacity(ranked.len());
        let mut index = HashMap::with_capacity(ranked.len());
        for (i, (gram, df)) in ranked.into_iter().enumerate() {
            index.insert(gram.clone(), i);
            grams.push(gram);
            doc_frequencies.push(df);
        }
        Vocab {
            n_min,
            n_max,
            grams,
            doc_frequencies,
            index,
        }
    }

    /// Rebuilds the lookup index after deserialization.
    pub fn rebuild_index(&mut self) {
        self.index = self
            .grams
            .iter()
            .enumerate()
            .map(|(i, g)| (g.clone(), i))
            .collect();
    }

    pub fn len(&self) -> usize {
        self.grams.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grams.is_empty()
    }

    pub fn index_of(&self, gram: &str) -> Option<usize> {
        self.index.get(gram).copied()
    }

    pub fn gram(&self, index: usize) -> Option<&str> {
        self.grams.get(index).map(|s| s.as_str())
    }

    pub fn doc_frequency(&self, index: usize) -> Option<u32> {
        self.doc_frequencies.get(index).copied()
    }

    /// Entries in `(gram, doc_frequency)` form, in index order.
    pub fn entries(&self) -> impl Iterator<Item = (&str, u32)> {
        self.grams
            .iter()
            .map(|g| g.as_str())
            .zip(self.doc_frequencies.iter().copied())
    }

    /// The unigram subset in vocabulary-index order, as `(token, position)`
    /// pairs where `position` is a dense id in `[0, n_unigrams)`. The CNN
    /// branch embeds tokens through this table.
    pub fn unigram_table(&self) -> HashMap<String, usize> {
        let mut table = HashMap::new();
        for gram in &self.grams {
            if !gram.contains(' ') {
                let next = table.len();
                table.entry(gram.clone()).or_insert(next);
            }
        }
        table
    }
}

/// Builds a vocabulary from `train` only. N-grams are counted per document
/// (after truncation to `cfg.window` tokens), kept when they appear in at
/// least `min_doc_freq` documents, ranked by document frequency descending
/// with lexicographic tie-breaks, and capped at `max_size`.
pub fn build_vocab(train: &Dataset, cfg: &VocabConfig) -> Result<Vocab> {
    if train.is_empty() {
        return Err(Error::validation("train", "training dataset is empty"));
    }
    if cfg.min_doc_freq == 0 {
        return Err(Error::validation("min_doc_freq", "must be at least 1"));
    }
    if cfg.max_size == 0 {
        return Err(Error::validation("max_size", "must be at least 1"));
    }

    let mut doc_freq: HashMap<String, u32> = HashMap::new();
    for doc in &train.documents {
        let seq = truncate(&tokenize(&doc.text), cfg.window)?;
        let grams = extract_ngrams(&seq, cfg.n_min, cfg.n_max)?;
        for gram in grams.into_keys() {
            *doc_freq.entry(gram).or_insert(0) += 1;
        }
    }

    let mut ranked: Vec<(String, u32)> = doc_freq
        .into_iter()
        .filter(|(_, df)| *df >= cfg.min_doc_freq)
        .collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    ranked.truncate(cfg.max_size);

    if ranked.is_empty() {
        return Err(Error::Config(format!(
            "no n-gram appears in at least {} training documents; lower min_doc_freq",
            cfg.min_doc_freq
        )));
    }
    Ok(Vocab::from_ranked(cfg.n_min, cfg.n_max, ranked))
}

/// Sparse relative-frequency feature vector.
///
/// `values[k]` is the count of `indices[k]`'s n-gram divided by the total
/// n-gram count of the (truncated) document, so out-of-vocabulary grams
/// shrink the in-vocabulary mass but never appear themselves.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct FeatureVector {
    /// Strictly increasing vocabulary indices.
    pub indices: Vec<usize>,
    /// Positive relative frequencies aligned with `indices`.
    pub values: Vec<f64>,
}

impl FeatureVector {
    pub fn nnz(&self) -> usize {
        self.indices.len()
    }

    pub fn sum(&self) -> f64 {
        self.values.iter().sum()
    }
}

/// Truncates, extracts n-grams at the vocabulary's orders, and produces the
/// sparse frequency vector. All-out-of-vocabulary documents give an empty
/// vector.
pub fn vectorize(seq: &TokenSequence, vocab: &Vocab, window: usize) -> Result<FeatureVector> {
    let seq = truncate(seq, window)?;
    let counts = extract_ngrams(&seq, vocab.n_min, vocab.n_max)?;
    let total: usize = counts.values().sum();
    if total == 0 {
        return Ok(FeatureVector::default());
    }

    let mut pairs: Vec<(usize, f64)> = counts
        .iter()
        .filter_map(|(gram, count)| {
            vocab
                .index_of(gram)
                .map(|idx| (idx, *count as f64 / total as f64))
        })
        .collect();
    pairs.sort_by_key(|(idx, _)| *idx);

    Ok(FeatureVector {
        indices: pairs.iter().map(|(i, _)| *i).collect(),
        values: pairs.iter().map(|(_, v)| *v).collect(),
    })
}

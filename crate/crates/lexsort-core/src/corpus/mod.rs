//! Document/label data model and synthetic corpus generation.
//!
//! The original courthouse corpus cannot be shipped, so experiments run on
//! generated datasets: every document is shared legal boilerplate with one
//! category-specific signature phrase planted in it, which makes the accuracy
//! ceiling analytically known. Label noise is injected separately so the
//! noisy-data accuracy ceiling (`1 - rate`) can be reproduced and tested.

mod jsonl;
mod label;

pub use jsonl::{load_jsonl, save_jsonl};
pub use label::{BinaryLabel, Label, LabelTaxonomy, Subclass, Task};

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One text record with identifiers, source metadata, and labels.
///
/// `true_label` is the generation-time ground truth; `observed_label` is what
/// an annotator would have recorded and is the only label training may see.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Document {
    pub id: String,
    pub text: String,
    pub state: String,
    pub county: String,
    pub true_label: Label,
    pub observed_label: Label,
}

/// Where a signature phrase may start inside a document.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SignaturePosition {
    /// Uniformly anywhere the phrase fits.
    Uniform,
    /// Uniformly at or after the given token offset (clamped so the phrase
    /// still fits). Lets experiments plant the signal beyond a context window.
    AfterOffset(usize),
}

/// Class probabilities for generation: `Other` plus the nine subclasses.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassMix {
    pub other: f64,
    pub subclasses: [f64; 9],
}

impl ClassMix {
    /// 50% `Other`, 50% spread uniformly over the nine subclasses, so binary
    /// chance level is 0.5.
    pub fn balanced() -> Self {
        ClassMix {
            other: 0.5,
            subclasses: [0.5 / 9.0; 9],
        }
    }

    fn sum(&self) -> f64 {
        self.other + self.subclasses.iter().sum::<f64>()
    }
}

/// Per-category discriminative word sequences.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignaturePhrases {
    pub other: Vec<String>,
    pub subclasses: [Vec<String>; 9],
}

impl SignaturePhrases {
    fn for_category(&self, category: Option<Subclass>) -> &[String] {
        match category {
            None => &self.other,
            Some(s) => &self.subclasses[s.index()],
        }
    }

    fn max_phrase_tokens(&self) -> usize {
        std::iter::once(&self.other)
            .chain(self.subclasses.iter())
            .flatten()
            .map(|p| p.split_whitespace().count())
            .max()
            .unwrap_or(0)
    }
}

impl Default for SignaturePhrases {
    fn default() -> Self {
        let sub = |phrases: &[&str]| phrases.iter().map(|p| p.to_string()).collect::<Vec<_>>();
        SignaturePhrases {
            other: sub(&[
                "quitclaim deed of conveyance",
                "warranty deed duly recorded",
                "mortgage security instrument with power of sale",
            ]),
            subclasses: [
                sub(&["affidavit of non production stating cessation of operations"]),
                sub(&["affidavit of production with wells producing in paying quantities"]),
                sub(&["assignment of oil and gas lease from assignor to assignee"]),
                sub(&["correction of scrivener error in prior instrument"]),
                sub(&["extension of the primary term of said lease"]),
                sub(&["memorandum of lease providing constructive notice"]),
                sub(&["oil and gas lease granting exploration and drilling rights"]),
                sub(&["release and surrender of oil and gas lease"]),
                sub(&["top lease subject to existing unexpired lease"]),
            ],
        }
    }
}

/// Everything the generator needs; fixed seed gives a fixed corpus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusSpec {
    pub n_documents: usize,
    pub class_mix: ClassMix,
    /// Inclusive `[min_tokens, max_tokens]` range of document lengths.
    pub doc_length_range: (usize, usize),
    pub signature_phrases: SignaturePhrases,
    pub boilerplate_vocab_size: usize,
    pub signature_position: SignaturePosition,
    /// Fraction of labels to corrupt when noise is applied; in `[0, 0.5)`.
    pub noise_rate: f64,
    pub seed: u64,
}

impl CorpusSpec {
    pub fn with_size(n_documents: usize, seed: u64) -> Self {
        CorpusSpec {
            n_documents,
            seed,
            ..CorpusSpec::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_documents == 0 {
            return Err(Error::validation("n_documents", "must be at least 1"));
        }
        let sum = self.class_mix.sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::validation(
                "class_mix",
                format!("entries must sum to 1, got {sum}"),
            ));
        }
        if self.class_mix.other < 0.0 || self.class_mix.subclasses.iter().any(|p| *p < 0.0) {
            return Err(Error::validation("class_mix", "entries must be non-negative"));
        }
        let (min, max) = self.doc_length_range;
        if min == 0 || min > max {
            return Err(Error::validation(
                "doc_length_range",
                format!("need 1 <= min <= max, got ({min}, {max})"),
            ));
        }
        for (name, phrases) in std::iter::once(("Other", &self.signature_phrases.other)).chain(
            Subclass::ALL
                .iter()
                .map(|s| (s.as_str(), &self.signature_phrases.subclasses[s.index()])),
        ) {
            if phrases.is_empty() {
                return Err(Error::validation(
                    "signature_phrases",
                    format!("category {name:?} has no signature phrase"),
                ));
            }
            if phrases.iter().any(|p| p.split_whitespace().count() == 0) {
                return Err(Error::validation(
                    "signature_phrases",
                    format!("category {name:?} has an empty phrase"),
                ));
            }
        }
        let longest = self.signature_phrases.max_phrase_tokens();
        if min < longest {
            return Err(Error::validation(
                "doc_length_range",
                format!("min length {min} is shorter than the longest signature phrase ({longest} tokens)"),
            ));
        }
        if self.boilerplate_vocab_size == 0 {
            return Err(Error::validation("boilerplate_vocab_size", "must be at least 1"));
        }
        if !(0.0..0.5).contains(&self.noise_rate) {
            return Err(Error::validation(
                "noise_rate",
                format!("must be in [0, 0.5), got {}", self.noise_rate),
            ));
        }
        Ok(())
    }
}

impl Default for CorpusSpec {
    fn default() -> Self {
        CorpusSpec {
            n_documents: 1000,
            class_mix: ClassMix::balanced(),
            doc_length_range: (80, 240),
            signature_phrases: SignaturePhrases::default(),
            boilerplate_vocab_size: 400,
            signature_position: SignaturePosition::Uniform,
            noise_rate: 0.05,
            seed: 0,
        }
    }
}

/// How a dataset came to exist.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    Generated(Box<CorpusSpec>),
    Ingested { path: String },
}

/// An immutable, validated collection of documents.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub documents: Vec<Document>,
    pub taxonomy: LabelTaxonomy,
    pub provenance: Provenance,
}

impl Dataset {
    /// Validates the dataset invariants: non-empty, unique ids, non-empty
    /// text, and full (taxonomy-conforming) labels on every document.
    pub fn new(documents: Vec<Document>, provenance: Provenance) -> Result<Self> {
        if documents.is_empty() {
            return Err(Error::validation("documents", "dataset is empty"));
        }
        let mut seen = std::collections::HashSet::with_capacity(documents.len());
        for doc in &documents {
            if !seen.insert(doc.id.as_str()) {
                return Err(Error::validation("id", format!("duplicate id {:?}", doc.id)));
            }
            if doc.text.is_empty() {
                return Err(Error::validation("text", format!("document {:?} has empty text", doc.id)));
            }
            doc.true_label.validate_full()?;
            doc.observed_label.validate_full()?;
        }
        Ok(Dataset {
            documents,
            taxonomy: LabelTaxonomy,
            provenance,
        })
    }

    pub fn len(&self) -> usize {
        self.documents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.documents.is_empty()
    }

    /// Documents whose observed label carries a subclass, i.e. the records a
    /// multi-class experiment can train and score on.
    pub fn with_observed_subclass(&self) -> Dataset {
        Dataset {
            documents: self
                .documents
                .iter()
                .filter(|d| d.observed_label.subclass().is_some())
                .cloned()
                .collect(),
            taxonomy: self.taxonomy,
            provenance: self.provenance.clone(),
        }
    }
}

const STATES: [&str; 12] = [
    "TX", "OK", "LA", "NM", "ND", "CO", "WY", "PA", "OH", "WV", "KS", "MT",
];

const COUNTIES: [&str; 24] = [
    "Adams", "Blaine", "Carter", "Dawson", "Ellis", "Fallon", "Garfield", "Harding", "Irion",
    "Jackson", "Kiowa", "Logan", "McKenzie", "Noble", "Osage", "Payne", "Quay", "Reeves",
    "Sterling", "Tioga", "Upton", "Venango", "Ward", "Yoakum",
];

// Category-independent legal filler. Deliberately avoids every content word
// used by the default signature phrases so planted signals stay clean.
const BOILERPLATE_BASE: [&str; 96] = [
    "the", "this", "that", "state", "county", "witnesseth", "whereas", "party", "parties",
    "first", "second", "herein", "hereby", "hereinafter", "recorded", "book", "page", "volume",
    "consideration", "sum", "dollars", "paid", "receipt", "whereof", "acknowledged", "described",
    "premises", "situated", "lying", "being", "together", "singular", "members", "appurtenances",
    "thereto", "belonging", "unto", "heirs", "successors", "forever", "executed", "presence",
    "witness", "notary", "public", "commission", "expires", "signed", "sealed", "delivered",
    "day", "month", "year", "between", "covenant", "agree", "bind", "undersigned", "certify",
    "personally", "appeared", "known", "person", "whose", "name", "subscribed", "foregoing",
    "acknowledge", "same", "purposes", "therein", "expressed", "given", "under", "hand", "seal",
    "office", "aforesaid", "district", "tract", "section", "township", "range", "quarter",
    "acres", "more", "less", "bounded", "follows", "beginning", "thence", "feet", "corner",
    "survey", "abstract", "filed",
];

fn boilerplate_vocab(size: usize) -> Vec<String> {
    let mut vocab: Vec<String> = BOILERPLATE_BASE
        .iter()
        .take(size)
        .map(|w| w.to_string())
        .collect();
    for i in vocab.len()..size {
        vocab.push(format!("clause{i}"));
    }
    vocab
}

fn sample_category(rng: &mut ChaCha8Rng, mix: &ClassMix) -> Option<Subclass> {
    let r: f64 = rng.gen();
    let mut acc = mix.other;
    if r < acc {
        return None;
    }
    for (i, p) in mix.subclasses.iter().enumerate() {
        acc += p;
        if r < acc {
            return Some(Subclass::ALL[i]);
        }
    }
    // Degenerate rounding tail: the last category with positive mass.
    (0..9)
        .rev()
        .find(|i| mix.subclasses[*i] > 0.0)
        .map(|i| Subclass::ALL[i])
}

/// Generates exactly `spec.n_documents` labeled documents: shared boilerplate
/// with one category signature phrase planted per document. Observed labels
/// start out equal to the true labels; apply [`inject_label_noise`] afterwards
/// to model annotator error.
pub fn generate_corpus(spec: &CorpusSpec) -> Result<Dataset> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let vocab = boilerplate_vocab(spec.boilerplate_vocab_size);
    let (min_len, max_len) = spec.doc_length_range;

    let mut documents = Vec::with_capacity(spec.n_documents);
    for i in 0..spec.n_documents {
        let category = sample_category(&mut rng, &spec.class_mix);
        let len = rng.gen_range(min_len..=max_len);
        let mut tokens: Vec<&str> = (0..len)
            .map(|_| vocab[rng.gen_range(0..vocab.len())].as_str())
            .collect();

        let phrases = spec.signature_phrases.for_category(category);
        let phrase = &phrases[rng.gen_range(0..phrases.len())];
        let phrase_tokens: Vec<&str> = phrase.split_whitespace().collect();
        let max_start = len - phrase_tokens.len();
        let start = match spec.signature_position {
            SignaturePosition::Uniform => rng.gen_range(0..=max_start),
            SignaturePosition::AfterOffset(k) => rng.gen_range(k.min(max_start)..=max_start),
        };
        tokens[start..start + phrase_tokens.len()].copy_from_slice(&phrase_tokens);

        let label = match category {
            None => Label::Other,
            Some(s) => Label::oil_and_gas(s),
        };
        documents.push(Document {
            id: format!("doc-{i:06}"),
            text: tokens.join(" "),
            state: STATES[rng.gen_range(0..STATES.len())].to_string(),
            county: COUNTIES[rng.gen_range(0..COUNTIES.len())].to_string(),
            true_label: label,
            observed_label: label,
        });
    }

    Dataset::new(documents, Provenance::Generated(Box::new(spec.clone())))
}

/// All ten full labels, in a fixed order.
fn full_label_space() -> [Label; 10] {
    let mut labels = [Label::Other; 10];
    for (i, s) in Subclass::ALL.iter().enumerate() {
        labels[i + 1] = Label::oil_and_gas(*s);
    }
    labels
}

/// Corrupts each document's observed label independently with probability
/// `rate`, replacing it with a uniformly random *different* label from the
/// full ten-label space. A corrupted oil-and-gas label may flip to `Other`
/// (dropping its subclass) or move to another subclass; true labels are
/// untouched. Deterministic for a fixed seed.
pub fn inject_label_noise(dataset: &Dataset, rate: f64, seed: u64) -> Result<Dataset> {
    if !(0.0..0.5).contains(&rate) {
        return Err(Error::validation(
            "rate",
            format!("must be in [0, 0.5), got {rate}"),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let space = full_label_space();
    let documents = dataset
        .documents
        .iter()
        .map(|doc| {
            let mut doc = doc.clone();
            if rng.gen::<f64>() < rate {
                let alternatives: Vec<Label> = space
                    .iter()
                    .copied()
                    .filter(|l| *l != doc.observed_label)
                    .collect();
                doc.observed_label = alternatives[rng.gen_range(0..alternatives.len())];
            }
            doc
        })
        .collect();
    Ok(Dataset {
        documents,
        taxonomy: dataset.taxonomy,
        provenance: dataset.provenance.clone(),
    })
}

/// Maximum accuracy attainable against labels corrupted at `rate`.
pub fn noise_ceiling(rate: f64) -> Result<f64> {
    if !(0.0..0.5).contains(&rate) {
        return Err(Error::validation(
            "rate",
            format!("must be in [0, 0.5), got {rate}"),
        ));
    }
    Ok(1.0 - rate)
}

/// Largest-remainder apportionment of `n` items to `fractions`.
fn largest_remainder_counts(n: usize, fractions: &[f64]) -> Vec<usize> {
    let quotas: Vec<f64> = fractions.iter().map(|f| f * n as f64).collect();
    let mut counts: Vec<usize> = quotas.iter().map(|q| q.floor() as usize).collect();
    let assigned: usize = counts.iter().sum();
    let mut order: Vec<usize> = (0..fractions.len()).collect();
    // Largest fractional remainder first; ties go to the earlier part.
    order.sort_by(|&a, &b| {
        let ra = quotas[a] - quotas[a].floor();
        let rb = quotas[b] - quotas[b].floor();
        rb.partial_cmp(&ra).unwrap().then(a.cmp(&b))
    });
    for i in 0..(n - assigned) {
        counts[order[i % order.len()]] += 1;
    }
    counts
}

/// Deterministic shuffled partition into train/val/test. Sizes follow
/// largest-remainder rounding, so the parts are disjoint and cover every
/// document exactly once. A part may be empty when its fraction rounds to
/// zero documents.
pub fn split(
    dataset: &Dataset,
    fractions: (f64, f64, f64),
    seed: u64,
) -> Result<(Dataset, Dataset, Dataset)> {
    let (ft, fv, fs) = fractions;
    if ft <= 0.0 || fv <= 0.0 || fs <= 0.0 {
        return Err(Error::validation("fractions", "all fractions must be positive"));
    }
    let sum = ft + fv + fs;
    if (sum - 1.0).abs() > 1e-9 {
        return Err(Error::validation(
            "fractions",
            format!("must sum to 1, got {sum}"),
        ));
    }

    let mut indices: Vec<usize> = (0..dataset.len()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    use rand::seq::SliceRandom;
    indices.shuffle(&mut rng);

    let counts = largest_remainder_counts(dataset.len(), &[ft, fv, fs]);
    let take = |range: std::ops::Range<usize>| Dataset {
        documents: indices[range]
            .iter()
            .map(|&i| dataset.documents[i].clone())
            .collect(),
        taxonomy: dataset.taxonomy,
        provenance: dataset.provenance.clone(),
    };
    let train = take(0..counts[0]);
    let val = take(counts[0]..counts[0] + counts[1]);
    let test = take(counts[0] + counts[1]..dataset.len());
    Ok((train, val, test))
}

//! Combines the bag-of-words and CNN branches into the final classifier and
//! owns model-bundle serialization.
//!
//! The combination rule is a linear opinion pool: `alpha * p_bow +
//! (1 - alpha) * p_cnn`, with `alpha` tuned on validation accuracy over the
//! grid `{0.0, 0.1, ..., 1.0}` (larger `alpha` wins ties). The endpoints
//! expose each branch alone for ablation.
//!
//! ## Bundle file layout
//!
//! ```text
//! magic           4 bytes  "LXS1"
//! format_version  u32 little-endian
//! header_len      u64 little-endian
//! header          JSON: task, window, combine_weight, branch dimensions,
//!                 vocabulary entries (gram, document frequency) in index order
//! payload         f64 little-endian arrays, in order:
//!                 bow.w1, bow.b1, bow.w2, bow.b2,
//!                 cnn.embedding, cnn.filters, cnn.attention,
//!                 cnn.w_out, cnn.b_out
//! ```
//!
//! Round trips are bit-exact, so a reloaded bundle produces identical
//! predictions.

use std::collections::HashMap;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::bow::{BowNet, TrainConfig, TrainHistory};
use crate::cnn::AttnCnn;
use crate::corpus::{Dataset, Document, Label, Task};
use crate::error::{Error, Result};
use crate::featurize::{
    build_vocab, tokenize, vectorize, FeatureVector, TokenSequence, Vocab, VocabConfig,
};
use crate::num::argmax;

pub const BUNDLE_MAGIC: [u8; 4] = *b"LXS1";
pub const FORMAT_VERSION: u32 = 1;

/// The serialized ensemble: vocabulary, both branches, and the combination
/// weight, plus the context window everything was trained with.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelBundle {
    pub task: Task,
    pub vocab: Vocab,
    pub bow: BowNet,
    pub cnn: AttnCnn,
    /// Linear-pool weight on the bag-of-words branch, in `[0, 1]`.
    pub combine_weight: f64,
    pub window: usize,
    pub format_version: u32,
    unigram_table: HashMap<String, usize>,
}

/// One classified document: the winning label, the combined distribution,
/// and both branch distributions.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionResult {
    pub label: Label,
    pub probabilities: Vec<f64>,
    /// `(bag-of-words, cnn)` branch distributions.
    pub branch_probabilities: (Vec<f64>, Vec<f64>),
}

/// Linear opinion pool of two distributions.
pub fn combine(p_bow: &[f64], p_cnn: &[f64], alpha: f64) -> Result<Vec<f64>> {
    if p_bow.len() != p_cnn.len() {
        return Err(Error::validation(
            "distributions",
            format!("length mismatch: {} vs {}", p_bow.len(), p_cnn.len()),
        ));
    }
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::validation("alpha", "must be in [0, 1]"));
    }
    for (name, p) in [("bow", p_bow), ("cnn", p_cnn)] {
        let sum: f64 = p.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::validation(
                "distributions",
                format!("{name} distribution sums to {sum}, not 1"),
            ));
        }
    }
    Ok(p_bow
        .iter()
        .zip(p_cnn)
        .map(|(b, c)| alpha * b + (1.0 - alpha) * c)
        .collect())
}

impl ModelBundle {
    pub fn new(
        task: Task,
        vocab: Vocab,
        bow: BowNet,
        cnn: AttnCnn,
        combine_weight: f64,
        window: usize,
    ) -> Result<Self> {
        if bow.n_labels() != task.n_labels() || cnn.n_labels() != task.n_labels() {
            return Err(Error::validation(
                "n_labels",
                format!(
                    "branches disagree with the task: bow={} cnn={} task={}",
                    bow.n_labels(),
                    cnn.n_labels(),
                    task.n_labels()
                ),
            ));
        }
        if bow.vocab_size() != vocab.len() {
            return Err(Error::validation(
                "vocab",
                format!(
                    "bow expects {} features but the vocabulary has {}",
                    bow.vocab_size(),
                    vocab.len()
                ),
            ));
        }
        let unigram_table = vocab.unigram_table();
        if cnn.n_unigrams() != unigram_table.len() {
            return Err(Error::validation(
                "vocab",
                format!(
                    "cnn embeds {} unigrams but the vocabulary has {}",
                    cnn.n_unigrams(),
                    unigram_table.len()
                ),
            ));
        }
        if !(0.0..=1.0).contains(&combine_weight) {
            return Err(Error::validation("combine_weight", "must be in [0, 1]"));
        }
        if window == 0 {
            return Err(Error::validation("window", "must be at least 1"));
        }
        Ok(ModelBundle {
            task,
            vocab,
            bow,
            cnn,
            combine_weight,
            window,
            format_version: FORMAT_VERSION,
            unigram_table,
        })
    }

    pub fn unigram_table(&self) -> &HashMap<String, usize> {
        &self.unigram_table
    }

    /// Classifies an already-tokenized text. The sequence is truncated to the
    /// bundle's window; both branches run on the same truncated tokens.
    pub fn predict_tokens(&self, seq: &TokenSequence) -> Result<PredictionResult> {
        let features = vectorize(seq, &self.vocab, self.window)?;
        let p_bow = self.bow.forward(&features)?;
        let ids = self.cnn.resolve_ids(seq, &self.unigram_table, self.window)?;
        let (p_cnn, _) = self.cnn.forward_ids(&ids)?;
        let probabilities = combine(&p_bow, &p_cnn, self.combine_weight)?;
        let label = Label::from_task_index(self.task, argmax(&probabilities))
            .expect("argmax index is within the task's label range");
        Ok(PredictionResult {
            label,
            probabilities,
            branch_probabilities: (p_bow, p_cnn),
        })
    }

    /// Tokenize-truncate-vectorize-classify one document.
    pub fn predict(&self, doc: &Document) -> Result<PredictionResult> {
        self.predict_tokens(&tokenize(&doc.text))
    }

    /// Probability of the label at `target` index for a token sequence.
    pub fn target_probability(&self, seq: &TokenSequence, target: usize) -> Result<f64> {
        let result = self.predict_tokens(seq)?;
        result.probabilities.get(target).copied().ok_or_else(|| {
            Error::validation(
                "target",
                format!(
                    "label index {target} out of range for {} classes",
                    self.task.n_labels()
                ),
            )
        })
    }
}

#[derive(Serialize, Deserialize)]
struct BowDims {
    vocab_size: usize,
    hidden_size: usize,
    n_labels: usize,
}

#[derive(Serialize, Deserialize)]
struct CnnDims {
    n_unigrams: usize,
    d_embed: usize,
    n_filters: usize,
    kernel_width: usize,
    n_labels: usize,
}

#[derive(Serialize, Deserialize)]
struct BundleHeader {
    task: Task,
    window: usize,
    combine_weight: f64,
    bow: BowDims,
    cnn: CnnDims,
    vocab: Vocab,
}

fn write_f64s(writer: &mut impl Write, values: &[f64], path: &Path) -> Result<()> {
    for v in values {
        writer
            .write_all(&v.to_le_bytes())
            .map_err(|e| Error::io(path.display().to_string(), e))?;
    }
    Ok(())
}

fn read_f64s(reader: &mut impl Read, count: usize) -> Result<Vec<f64>> {
    let mut buf = vec![0u8; count * 8];
    reader
        .read_exact(&mut buf)
        .map_err(|_| Error::Corrupt("parameter payload is truncated".into()))?;
    Ok(buf
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect())
}

pub fn save_bundle(bundle: &ModelBundle, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = std::fs::File::create(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    let mut writer = BufWriter::new(file);

    let header = BundleHeader {
        task: bundle.task,
        window: bundle.window,
        combine_weight: bundle.combine_weight,
        bow: BowDims {
            vocab_size: bundle.bow.vocab_size(),
            hidden_size: bundle.bow.hidden_size(),
            n_labels: bundle.bow.n_labels(),
        },
        cnn: CnnDims {
            n_unigrams: bundle.cnn.n_unigrams(),
            d_embed: bundle.cnn.d_embed(),
            n_filters: bundle.cnn.n_filters(),
            kernel_width: bundle.cnn.kernel_width(),
            n_labels: bundle.cnn.n_labels(),
        },
        vocab: bundle.vocab.clone(),
    };
    let header_bytes = serde_json::to_vec(&header)?;

    let io_err = |e| Error::io(path.display().to_string(), e);
    writer.write_all(&BUNDLE_MAGIC).map_err(io_err)?;
    writer.write_all(&bundle.format_version.to_le_bytes()).map_err(io_err)?;
    writer
        .write_all(&(header_bytes.len() as u64).to_le_bytes())
        .map_err(io_err)?;
    writer.write_all(&header_bytes).map_err(io_err)?;

    for arr in [
        bundle.bow.w1(),
        bundle.bow.b1(),
        bundle.bow.w2(),
        bundle.bow.b2(),
        bundle.cnn.embedding(),
        bundle.cnn.filters(),
        bundle.cnn.attention(),
        bundle.cnn.w_out(),
        bundle.cnn.b_out(),
    ] {
        write_f64s(&mut writer, arr, path)?;
    }
    writer.flush().map_err(io_err)
}

pub fn load_bundle(path: impl AsRef<Path>) -> Result<ModelBundle> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    let mut reader = BufReader::new(file);

    let mut magic = [0u8; 4];
    reader
        .read_exact(&mut magic)
        .map_err(|_| Error::Corrupt("file is too short for the magic bytes".into()))?;
    if magic != BUNDLE_MAGIC {
        return Err(Error::Corrupt(format!("bad magic bytes {magic:?}")));
    }
    let mut word = [0u8; 4];
    reader
        .read_exact(&mut word)
        .map_err(|_| Error::Corrupt("missing format version".into()))?;
    let version = u32::from_le_bytes(word);
    if version > FORMAT_VERSION {
        return Err(Error::UnsupportedVersion {
            found: version,
            supported: FORMAT_VERSION,
        });
    }
    let mut len_bytes = [0u8; 8];
    reader
        .read_exact(&mut len_bytes)
        .map_err(|_| Error::Corrupt("missing header length".into()))?;
    let header_len = u64::from_le_bytes(len_bytes) as usize;
    let mut header_bytes = vec![0u8; header_len];
    reader
        .read_exact(&mut header_bytes)
        .map_err(|_| Error::Corrupt("header is truncated".into()))?;
    let header: BundleHeader = serde_json::from_slice(&header_bytes)
        .map_err(|e| Error::Corrupt(format!("header does not parse: {e}")))?;

    let b = &header.bow;
    let w1 = read_f64s(&mut reader, b.hidden_size * b.vocab_size)?;
    let b1 = read_f64s(&mut reader, b.hidden_size)?;
    let w2 = read_f64s(&mut reader, b.n_labels * b.hidden_size)?;
    let b2 = read_f64s(&mut reader, b.n_labels)?;
    let bow = BowNet::from_parts(b.vocab_size, b.hidden_size, b.n_labels, w1, b1, w2, b2)?;

    let c = &header.cnn;
    let embedding = read_f64s(&mut reader, (c.n_unigrams + 1) * c.d_embed)?;
    let filters = read_f64s(&mut reader, c.n_filters * c.kernel_width * c.d_embed)?;
    let attention = read_f64s(&mut reader, c.n_filters)?;
    let w_out = read_f64s(&mut reader, c.n_labels * c.n_filters)?;
    let b_out = read_f64s(&mut reader, c.n_labels)?;
    let cnn = AttnCnn::from_parts(
        c.n_unigrams,
        c.d_embed,
        c.n_filters,
        c.kernel_width,
        c.n_labels,
        embedding,
        filters,
        attention,
        w_out,
        b_out,
    )?;

    let mut trailing = [0u8; 1];
    if reader
        .read(&mut trailing)
        .map_err(|e| Error::io(path.display().to_string(), e))?
        != 0
    {
        return Err(Error::Corrupt("unexpected trailing bytes".into()));
    }

    let mut vocab = header.vocab;
    vocab.rebuild_index();
    let mut bundle = ModelBundle::new(
        header.task,
        vocab,
        bow,
        cnn,
        header.combine_weight,
        header.window,
    )?;
    bundle.format_version = version;
    Ok(bundle)
}

/// Full two-branch training configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleConfig {
    pub task: Task,
    /// Context window in tokens; defaults follow the tuned per-task values
    /// (800 binary, 1500 multi-class).
    pub window: usize,
    pub n_min: usize,
    pub n_max: usize,
    pub min_doc_freq: u32,
    pub max_vocab: usize,
    pub hidden_size: usize,
    pub d_embed: usize,
    pub n_filters: usize,
    pub kernel_width: usize,
    pub epochs: usize,
    /// The CNN branch converges on planted-signal corpora in fewer epochs and
    /// dominates training cost, so it gets its own budget.
    pub cnn_epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub cnn_learning_rate: f64,
    pub l2: f64,
    pub seed: u64,
}

impl EnsembleConfig {
    pub fn for_task(task: Task) -> Self {
        EnsembleConfig {
            task,
            window: match task {
                Task::Binary => 800,
                Task::MultiClass => 1500,
            },
            n_min: 1,
            n_max: 3,
            min_doc_freq: 2,
            max_vocab: 50_000,
            hidden_size: 128,
            d_embed: 32,
            n_filters: 64,
            kernel_width: 3,
            epochs: 20,
            cnn_epochs: 8,
            batch_size: 32,
            learning_rate: 0.1,
            cnn_learning_rate: 0.1,
            l2: 1e-5,
            seed: 0,
        }
    }

    fn bow_train_config(&self) -> TrainConfig {
        TrainConfig {
            epochs: self.epochs,
            batch_size: self.batch_size,
            learning_rate: self.learning_rate,
            hidden_size: self.hidden_size,
            l2: self.l2,
            seed: self.seed,
            window: self.window,
        }
    }

    fn cnn_train_config(&self) -> TrainConfig {
        TrainConfig {
            epochs: self.cnn_epochs,
            learning_rate: self.cnn_learning_rate,
            ..self.bow_train_config()
        }
    }
}

/// Everything recorded during one ensemble training run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleHistory {
    pub bow: TrainHistory,
    pub cnn: TrainHistory,
    /// `(alpha, validation accuracy)` for each grid point.
    pub alpha_grid: Vec<(f64, f64)>,
    pub chosen_alpha: f64,
    pub val_accuracy: f64,
}

/// Observed-label task indices for every document; multi-class training uses
/// only documents whose observed label carries a subclass.
fn task_examples(dataset: &Dataset, task: Task) -> Result<Vec<(TokenSequence, usize)>> {
    let filtered = match task {
        Task::Binary => dataset.clone(),
        Task::MultiClass => dataset.with_observed_subclass(),
    };
    if filtered.is_empty() {
        return Err(Error::validation(
            "dataset",
            "no documents with a subclass label for the multi-class task",
        ));
    }
    Ok(filtered
        .documents
        .iter()
        .map(|d| {
            let label = d
                .observed_label
                .task_index(task)
                .expect("filtered documents decide the task level");
            (tokenize(&d.text), label)
        })
        .collect())
}

/// Trains both branches on `train`, tunes the combination weight on `val`,
/// and assembles the bundle. Deterministic for a fixed config.
pub fn train_ensemble(
    train: &Dataset,
    val: &Dataset,
    cfg: &EnsembleConfig,
) -> Result<(ModelBundle, EnsembleHistory)> {
    let train_seqs = task_examples(train, cfg.task)?;
    let val_seqs = task_examples(val, cfg.task)?;

    let vocab_train = match cfg.task {
        Task::Binary => train.clone(),
        Task::MultiClass => train.with_observed_subclass(),
    };
    let vocab = build_vocab(
        &vocab_train,
        &VocabConfig {
            window: cfg.window,
            n_min: cfg.n_min,
            n_max: cfg.n_max,
            min_doc_freq: cfg.min_doc_freq,
            max_size: cfg.max_vocab,
        },
    )?;
    let table = vocab.unigram_table();
    let n_labels = cfg.task.n_labels();

    let featurized = |seqs: &[(TokenSequence, usize)]| -> Result<Vec<(FeatureVector, usize)>> {
        seqs.iter()
            .map(|(seq, y)| Ok((vectorize(seq, &vocab, cfg.window)?, *y)))
            .collect()
    };
    let bow_train = featurized(&train_seqs)?;
    let bow_val = featurized(&val_seqs)?;

    let bow_init = BowNet::init(vocab.len(), cfg.hidden_size, n_labels, cfg.seed)?;
    let (bow, bow_history) = bow_init.train(&bow_train, &bow_val, &cfg.bow_train_config())?;

    let cnn_init = AttnCnn::init(
        table.len(),
        cfg.d_embed,
        cfg.n_filters,
        cfg.kernel_width,
        n_labels,
        cfg.seed.wrapping_add(1),
    )?;
    let to_ids = |seqs: &[(TokenSequence, usize)]| -> Result<Vec<(Vec<usize>, usize)>> {
        seqs.iter()
            .map(|(seq, y)| Ok((cnn_init.resolve_ids(seq, &table, cfg.window)?, *y)))
            .collect()
    };
    let cnn_train = to_ids(&train_seqs)?;
    let cnn_val = to_ids(&val_seqs)?;
    let (cnn, cnn_history) = cnn_init.train(&cnn_train, &cnn_val, &cfg.cnn_train_config())?;

    // Tune the pool weight on validation; larger alpha wins ties, so the
    // ascending grid walk replaces on >=.
    let val_bow: Vec<Vec<f64>> = bow_val
        .iter()
        .map(|(x, _)| bow.forward(x))
        .collect::<Result<_>>()?;
    let val_cnn: Vec<Vec<f64>> = cnn_val
        .iter()
        .map(|(ids, _)| Ok(cnn.forward_ids(ids)?.0))
        .collect::<Result<_>>()?;
    let labels: Vec<usize> = bow_val.iter().map(|(_, y)| *y).collect();

    let mut alpha_grid = Vec::with_capacity(11);
    let mut chosen = (0.0, f64::NEG_INFINITY);
    for step in 0..=10u32 {
        let alpha = f64::from(step) / 10.0;
        let mut correct = 0usize;
        for ((pb, pc), y) in val_bow.iter().zip(&val_cnn).zip(&labels) {
            if argmax(&combine(pb, pc, alpha)?) == *y {
                correct += 1;
            }
        }
        let accuracy = correct as f64 / labels.len() as f64;
        alpha_grid.push((alpha, accuracy));
        if accuracy >= chosen.1 {
            chosen = (alpha, accuracy);
        }
    }

    let bundle = ModelBundle::new(cfg.task, vocab, bow, cnn, chosen.0, cfg.window)?;
    Ok((
        bundle,
        EnsembleHistory {
            bow: bow_history,
            cnn: cnn_history,
            alpha_grid,
            chosen_alpha: chosen.0,
            val_accuracy: chosen.1,
        },
    ))
}

/// Accuracy of the bundle on a dataset at the chosen truth level.
pub fn bundle_accuracy(bundle: &ModelBundle, dataset: &Dataset, against_true: bool) -> Result<f64> {
    let scorable: Vec<&Document> = dataset
        .documents
        .iter()
        .filter(|d| {
            let truth = if against_true { d.true_label } else { d.observed_label };
            truth.task_index(bundle.task).is_some()
        })
        .collect();
    if scorable.is_empty() {
        return Err(Error::validation("dataset", "no scorable documents for this task"));
    }
    let mut correct = 0usize;
    for doc in &scorable {
        let truth = if against_true { doc.true_label } else { doc.observed_label };
        let truth_idx = truth.task_index(bundle.task).expect("filtered above");
        let predicted = bundle.predict(doc)?;
        if predicted.label.task_index(bundle.task) == Some(truth_idx) {
            correct += 1;
        }
    }
    Ok(correct as f64 / scorable.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{generate_corpus, BinaryLabel, CorpusSpec};
    use proptest::prelude::*;

    fn zero_bundle(task: Task) -> ModelBundle {
        let vocab = {
            let ds = generate_corpus(&CorpusSpec {
                doc_length_range: (20, 30),
                ..CorpusSpec::with_size(30, 77)
            })
            .unwrap();
            build_vocab(
                &ds,
                &VocabConfig {
                    window: 30,
                    ..VocabConfig::default()
                },
            )
            .unwrap()
        };
        let n = task.n_labels();
        let hidden = 4;
        let bow = BowNet::from_parts(
            vocab.len(),
            hidden,
            n,
            vec![0.0; hidden * vocab.len()],
            vec![0.0; hidden],
            vec![0.0; n * hidden],
            vec![0.0; n],
        )
        .unwrap();
        let unigrams = vocab.unigram_table().len();
        let (d, nf, k) = (3, 2, 2);
        let cnn = AttnCnn::from_parts(
            unigrams,
            d,
            nf,
            k,
            n,
            vec![0.0; (unigrams + 1) * d],
            vec![0.0; nf * k * d],
            vec![0.0; nf],
            vec![0.0; n * nf],
            vec![0.0; n],
        )
        .unwrap();
        ModelBundle::new(task, vocab, bow, cnn, 0.5, 20).unwrap()
    }

    #[test]
    fn combine_endpoints_and_arithmetic() {
        let b = vec![0.8, 0.2];
        let c = vec![0.4, 0.6];
        assert_eq!(combine(&b, &c, 1.0).unwrap(), b);
        assert_eq!(combine(&b, &c, 0.0).unwrap(), c);
        let half = combine(&b, &c, 0.5).unwrap();
        assert!((half[0] - 0.6).abs() < 1e-15);
        assert!((half[1] - 0.4).abs() < 1e-15);
        assert!(combine(&b, &[0.5, 0.3, 0.2], 0.5).is_err());
        assert!(combine(&b, &[0.9, 0.9], 0.5).is_err());
    }

    #[test]
    fn combine_outputs_sum_to_one_on_random_pairs() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        for _ in 0..100 {
            let n = rng.gen_range(2..6);
            let make = |rng: &mut rand_chacha::ChaCha8Rng| {
                let raw: Vec<f64> = (0..n).map(|_| rng.gen_range(0.01..1.0)).collect();
                let s: f64 = raw.iter().sum();
                raw.into_iter().map(|v| v / s).collect::<Vec<f64>>()
            };
            let b = make(&mut rng);
            let c = make(&mut rng);
            let alpha = rng.gen_range(0.0..=1.0);
            let out = combine(&b, &c, alpha).unwrap();
            assert!((out.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn empty_document_with_zero_nets_predicts_first_label() {
        let bundle = zero_bundle(Task::Binary);
        let doc = Document {
            id: "empty".into(),
            text: " .,;. ".into(),
            state: "TX".into(),
            county: "Ward".into(),
            true_label: Label::Other,
            observed_label: Label::Other,
        };
        let result = bundle.predict(&doc).unwrap();
        for p in &result.probabilities {
            assert!((p - 0.5).abs() < 1e-12);
        }
        // Tie-break: lowest label index, i.e. the first taxonomy entry.
        assert_eq!(result.label.binary(), BinaryLabel::OilAndGas);
    }

    #[test]
    fn alpha_one_predicts_the_bow_argmax() {
        let ds = generate_corpus(&CorpusSpec {
            doc_length_range: (20, 40),
            ..CorpusSpec::with_size(60, 8)
        })
        .unwrap();
        let cfg = EnsembleConfig {
            window: 40,
            hidden_size: 8,
            d_embed: 4,
            n_filters: 4,
            epochs: 3,
            cnn_epochs: 2,
            min_doc_freq: 1,
            ..EnsembleConfig::for_task(Task::Binary)
        };
        let (bundle, _) = train_ensemble(&ds, &ds, &cfg).unwrap();
        let forced = ModelBundle::new(
            bundle.task,
            bundle.vocab.clone(),
            bundle.bow.clone(),
            bundle.cnn.clone(),
            1.0,
            bundle.window,
        )
        .unwrap();
        for doc in ds.documents.iter().take(20) {
            let r = forced.predict(doc).unwrap();
            let bow_label = argmax(&r.branch_probabilities.0);
            assert_eq!(r.label.task_index(Task::Binary), Some(bow_label));
        }
    }

    #[test]
    fn predict_agrees_with_manually_chained_modules() {
        let ds = generate_corpus(&CorpusSpec {
            doc_length_range: (15, 40),
            ..CorpusSpec::with_size(50, 23)
        })
        .unwrap();
        let cfg = EnsembleConfig {
            window: 30,
            hidden_size: 6,
            d_embed: 4,
            n_filters: 3,
            epochs: 2,
            cnn_epochs: 2,
            min_doc_freq: 1,
            ..EnsembleConfig::for_task(Task::Binary)
        };
        let (bundle, _) = train_ensemble(&ds, &ds, &cfg).unwrap();
        for doc in &ds.documents {
            let got = bundle.predict(doc).unwrap();

            // Composition oracle: chain the module operations by hand.
            let seq = crate::featurize::truncate(&tokenize(&doc.text), bundle.window).unwrap();
            let fv = vectorize(&seq, &bundle.vocab, bundle.window).unwrap();
            let pb = bundle.bow.forward(&fv).unwrap();
            let ids = bundle
                .cnn
                .resolve_ids(&seq, bundle.unigram_table(), bundle.window)
                .unwrap();
            let (pc, _) = bundle.cnn.forward_ids(&ids).unwrap();
            let expected = combine(&pb, &pc, bundle.combine_weight).unwrap();
            assert_eq!(got.probabilities, expected);
            assert_eq!(got.label.task_index(Task::Binary), Some(argmax(&expected)));
        }
    }

    fn trained_small_bundle() -> (ModelBundle, Dataset) {
        let ds = generate_corpus(&CorpusSpec {
            doc_length_range: (15, 30),
            ..CorpusSpec::with_size(80, 4)
        })
        .unwrap();
        let cfg = EnsembleConfig {
            window: 25,
            hidden_size: 6,
            d_embed: 4,
            n_filters: 3,
            epochs: 3,
            cnn_epochs: 2,
            min_doc_freq: 1,
            ..EnsembleConfig::for_task(Task::Binary)
        };
        let (bundle, _) = train_ensemble(&ds, &ds, &cfg).unwrap();
        (bundle, ds)
    }

    #[test]
    fn bundle_round_trip_preserves_predictions_exactly() {
        let (bundle, ds) = trained_small_bundle();
        let dir = std::env::temp_dir().join("lexsort-bundle-tests");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("roundtrip.lxs");
        save_bundle(&bundle, &path).unwrap();
        let loaded = load_bundle(&path).unwrap();
        assert_eq!(bundle, loaded);
        for doc in ds.documents.iter().take(20) {
            let a = bundle.predict(doc).unwrap();
            let b = loaded.predict(doc).unwrap();
            assert_eq!(a, b);
        }
    }

    #[test]
    fn future_version_is_rejected() {
        let (bundle, _) = trained_small_bundle();
        let dir = std::env::temp_dir().join("lexsort-bundle-tests");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("future.lxs");
        save_bundle(&bundle, &path).unwrap();
        let mut bytes = std::fs::read(&path).unwrap();
        bytes[4..8].copy_from_slice(&(FORMAT_VERSION + 1).to_le_bytes());
        std::fs::write(&path, bytes).unwrap();
        let err = load_bundle(&path).unwrap_err();
        assert!(matches!(err, Error::UnsupportedVersion { found, .. } if found == FORMAT_VERSION + 1));
    }

    #[test]
    fn truncated_file_is_a_corruption_error() {
        let (bundle, _) = trained_small_bundle();
        let dir = std::env::temp_dir().join("lexsort-bundle-tests");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("truncated.lxs");
        save_bundle(&bundle, &path).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        for keep in [2usize, 6, 14, 40, bytes.len() - 9] {
            std::fs::write(&path, &bytes[..keep]).unwrap();
            let err = load_bundle(&path).unwrap_err();
            assert!(matches!(err, Error::Corrupt(_)), "keep={keep}: got {err}");
        }
    }

    proptest! {
        #[test]
        fn combine_is_commutative_under_alpha_flip(
            raw_b in proptest::collection::vec(0.01f64..1.0, 3),
            raw_c in proptest::collection::vec(0.01f64..1.0, 3),
            alpha in 0.0f64..=1.0,
        ) {
            let norm = |raw: &[f64]| {
                let s: f64 = raw.iter().sum();
                raw.iter().map(|v| v / s).collect::<Vec<f64>>()
            };
            let b = norm(&raw_b);
            let c = norm(&raw_c);
            let left = combine(&b, &c, alpha).unwrap();
            let right = combine(&c, &b, 1.0 - alpha).unwrap();
            for (x, y) in left.iter().zip(&right) {
                prop_assert!((x - y).abs() < 1e-12);
            }
        }

        #[test]
        fn argmax_is_invariant_to_positive_rescaling(
            raw_b in proptest::collection::vec(0.01f64..1.0, 4),
            raw_c in proptest::collection::vec(0.01f64..1.0, 4),
            alpha in 0.0f64..=1.0,
            scale in 0.001f64..1000.0,
        ) {
            let norm = |raw: &[f64]| {
                let s: f64 = raw.iter().sum();
                raw.iter().map(|v| v / s).collect::<Vec<f64>>()
            };
            let b = norm(&raw_b);
            let c = norm(&raw_c);
            let combined = combine(&b, &c, alpha).unwrap();
            let rescaled: Vec<f64> = combined.iter().map(|v| v * scale).collect();
            prop_assert_eq!(argmax(&combined), argmax(&rescaled));
        }
    }
}

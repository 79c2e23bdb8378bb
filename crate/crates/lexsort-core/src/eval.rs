//! Metrics, the context-window hyperparameter search, the fine-tuning
//! learning-curve harness, and plot-ready report files.

use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::bow::{BowNet, TrainConfig};
use crate::corpus::{noise_ceiling, BinaryLabel, Dataset, Label, Task};
use crate::ensemble::{train_ensemble, EnsembleConfig};
use crate::error::{Error, Result};
use crate::featurize::{build_vocab, tokenize, vectorize, FeatureVector, VocabConfig};

/// Classification quality on one evaluation set.
///
/// The confusion matrix has one row per true label and one column per
/// predicted label **plus a trailing invalid column**, so its entries always
/// sum to `n` even when some predictions failed validation; accuracy is the
/// trace of the square part over `n`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub task: Task,
    pub accuracy: f64,
    /// `[n_labels x (n_labels + 1)]`: rows = truth, columns = prediction,
    /// last column = invalid predictions.
    pub confusion: Vec<Vec<usize>>,
    /// Among true-negative (Other) documents, the fraction predicted
    /// oil-and-gas; 0 when there are no true negatives. Binary task only.
    pub false_positive_rate: Option<f64>,
    /// The alternative reading: false positives over all documents.
    pub false_positive_share: Option<f64>,
    pub invalid_count: usize,
    pub n: usize,
}

/// Chance-level accuracy under balanced truths.
pub fn chance_level(task: Task) -> f64 {
    1.0 / task.n_labels() as f64
}

/// Scores predictions against truths at the task's label level. Invalid
/// predictions (`None`) count as wrong and are tallied separately. For the
/// multi-class task every truth must carry a subclass.
pub fn evaluate(predictions: &[Option<Label>], truths: &[Label], task: Task) -> Result<Metrics> {
    if predictions.len() != truths.len() {
        return Err(Error::validation(
            "predictions",
            format!("{} predictions vs {} truths", predictions.len(), truths.len()),
        ));
    }
    if truths.is_empty() {
        return Err(Error::validation("truths", "empty evaluation set"));
    }
    let n_labels = task.n_labels();
    let mut confusion = vec![vec![0usize; n_labels + 1]; n_labels];
    let mut invalid_count = 0usize;

    for (prediction, truth) in predictions.iter().zip(truths) {
        let truth_idx = truth.task_index(task).ok_or_else(|| {
            Error::validation(
                "truths",
                format!("truth label {truth} does not decide the {task} task"),
            )
        })?;
        match prediction.and_then(|p| p.task_index(task)) {
            Some(pred_idx) => confusion[truth_idx][pred_idx] += 1,
            None => {
                confusion[truth_idx][n_labels] += 1;
                invalid_count += 1;
            }
        }
    }

    let n = truths.len();
    let correct: usize = (0..n_labels).map(|i| confusion[i][i]).sum();
    let accuracy = correct as f64 / n as f64;

    let (false_positive_rate, false_positive_share) = match task {
        Task::Binary => {
            let oil = BinaryLabel::OilAndGas.index();
            let other = BinaryLabel::Other.index();
            let false_positives = confusion[other][oil];
            let true_others: usize = confusion[other].iter().sum();
            let rate = if true_others == 0 {
                0.0
            } else {
                false_positives as f64 / true_others as f64
            };
            (Some(rate), Some(false_positives as f64 / n as f64))
        }
        Task::MultiClass => (None, None),
    };

    Ok(Metrics {
        task,
        accuracy,
        confusion,
        false_positive_rate,
        false_positive_share,
        invalid_count,
        n,
    })
}

/// Context-window search result.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HpoResult {
    pub grid: Vec<usize>,
    pub val_accuracy: Vec<f64>,
    pub chosen_window: usize,
}

/// Default search grids, anchored at the tuned per-task windows.
pub fn default_window_grid(task: Task) -> Vec<usize> {
    match task {
        Task::Binary => vec![100, 200, 400, 800, 1500],
        Task::MultiClass => vec![200, 400, 800, 1500, 3000],
    }
}

/// Retrains the full ensemble once per window in the grid (fixed seed) and
/// picks the window with the best validation accuracy; ties go to the
/// smallest window.
pub fn hpo_context_window(
    grid: &[usize],
    train: &Dataset,
    val: &Dataset,
    base_config: &EnsembleConfig,
) -> Result<HpoResult> {
    if grid.is_empty() {
        return Err(Error::validation("grid", "must contain at least one window"));
    }
    if grid.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::validation("grid", "windows must be strictly ascending"));
    }

    let mut val_accuracy = Vec::with_capacity(grid.len());
    let mut chosen = (grid[0], f64::NEG_INFINITY);
    for &window in grid {
        let config = EnsembleConfig {
            window,
            ..base_config.clone()
        };
        let (_, history) = train_ensemble(train, val, &config).map_err(|e| Error::Hpo {
            window,
            message: e.to_string(),
        })?;
        val_accuracy.push(history.val_accuracy);
        if history.val_accuracy > chosen.1 {
            chosen = (window, history.val_accuracy);
        }
    }
    Ok(HpoResult {
        grid: grid.to_vec(),
        val_accuracy,
        chosen_window: chosen.0,
    })
}

/// One learning-curve measurement.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LearningCurvePoint {
    pub n_finetune_docs: usize,
    pub mean_accuracy: f64,
    /// Population standard deviation across seeds.
    pub std_accuracy: f64,
    pub n_seeds: usize,
}

/// Anything that can turn a fine-tune subset into a test accuracy: the
/// offline simulator below, or a wrapper around a real fine-tuned endpoint.
pub trait CurveTrainer {
    fn train_and_eval(&self, subset: &Dataset, test: &Dataset) -> Result<f64>;
}

impl<F> CurveTrainer for F
where
    F: Fn(&Dataset, &Dataset) -> Result<f64>,
{
    fn train_and_eval(&self, subset: &Dataset, test: &Dataset) -> Result<f64> {
        self(subset, test)
    }
}

/// Seeded subset of `size` documents drawn without replacement.
fn sample_subset(pool: &Dataset, size: usize, seed: u64) -> Dataset {
    let mut indices: Vec<usize> = (0..pool.len()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    indices.shuffle(&mut rng);
    indices.truncate(size);
    Dataset {
        documents: indices.iter().map(|&i| pool.documents[i].clone()).collect(),
        taxonomy: pool.taxonomy,
        provenance: pool.provenance.clone(),
    }
}

/// For every `size x seed` cell, samples a subset of the pool, hands it to
/// the trainer, and aggregates mean and standard deviation per size against
/// the fixed test set. Deterministic when the trainer is.
pub fn learning_curve(
    sizes: &[usize],
    seeds: &[u64],
    trainer: &dyn CurveTrainer,
    pool: &Dataset,
    test: &Dataset,
) -> Result<Vec<LearningCurvePoint>> {
    if sizes.is_empty() || seeds.is_empty() {
        return Err(Error::validation("sizes", "sizes and seeds must be non-empty"));
    }
    if sizes.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::validation("sizes", "must be strictly ascending"));
    }
    if *sizes.last().unwrap() > pool.len() {
        return Err(Error::validation(
            "sizes",
            format!("largest size {} exceeds pool of {}", sizes.last().unwrap(), pool.len()),
        ));
    }

    let mut points = Vec::with_capacity(sizes.len());
    for &size in sizes {
        let mut accuracies = Vec::with_capacity(seeds.len());
        for &seed in seeds {
            let subset = sample_subset(pool, size, seed);
            accuracies.push(trainer.train_and_eval(&subset, test)?);
        }
        let n = accuracies.len() as f64;
        let mean = accuracies.iter().sum::<f64>() / n;
        let variance = accuracies.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / n;
        points.push(LearningCurvePoint {
            n_finetune_docs: size,
            mean_accuracy: mean,
            std_accuracy: variance.sqrt(),
            n_seeds: seeds.len(),
        });
    }
    Ok(points)
}

/// Offline stand-in for fine-tuning: retrains a small bag-of-words net on
/// each subset and scores it on the test set against observed labels. Shows
/// the same rise-then-plateau behaviour as fine-tuning a language model on
/// a noisy pool.
#[derive(Debug, Clone)]
pub struct BowSimTrainer {
    pub task: Task,
    pub window: usize,
    pub hidden_size: usize,
    pub epochs: usize,
    pub seed: u64,
}

impl Default for BowSimTrainer {
    fn default() -> Self {
        BowSimTrainer {
            task: Task::Binary,
            window: 200,
            hidden_size: 32,
            epochs: 8,
            seed: 0,
        }
    }
}

impl BowSimTrainer {
    fn examples(&self, dataset: &Dataset, vocab: &crate::featurize::Vocab) -> Result<Vec<(FeatureVector, usize)>> {
        let filtered = match self.task {
            Task::Binary => dataset.clone(),
            Task::MultiClass => dataset.with_observed_subclass(),
        };
        if filtered.is_empty() {
            return Err(Error::validation("dataset", "no scorable documents"));
        }
        filtered
            .documents
            .iter()
            .map(|d| {
                let y = d.observed_label.task_index(self.task).expect("filtered");
                Ok((vectorize(&tokenize(&d.text), vocab, self.window)?, y))
            })
            .collect()
    }
}

impl CurveTrainer for BowSimTrainer {
    fn train_and_eval(&self, subset: &Dataset, test: &Dataset) -> Result<f64> {
        let vocab = build_vocab(
            subset,
            &VocabConfig {
                window: self.window,
                n_min: 1,
                n_max: 2,
                min_doc_freq: 1,
                max_size: 30_000,
            },
        )?;
        let train = self.examples(subset, &vocab)?;
        let test_examples = self.examples(test, &vocab)?;
        let net = BowNet::init(vocab.len(), self.hidden_size, self.task.n_labels(), self.seed)?;
        let config = TrainConfig {
            epochs: self.epochs,
            batch_size: 32,
            learning_rate: 0.1,
            hidden_size: self.hidden_size,
            l2: 1e-5,
            seed: self.seed,
            window: self.window,
        };
        // Self-validation: the simulator has no held-out split of its own.
        let (trained, _) = net.train(&train, &train, &config)?;
        trained.accuracy(&test_examples)
    }
}

/// Report payloads that [`emit_report`] can write.
#[derive(Debug, Clone, Copy)]
pub enum ReportKind<'a> {
    Metrics(&'a Metrics),
    Curve(&'a [LearningCurvePoint]),
    Hpo(&'a HpoResult),
}

/// Reference-line metadata attached to JSON reports: the chance level
/// (assuming balanced truths) and the noise ceiling when the label-noise
/// rate is known.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReportMeta {
    pub task: Task,
    pub noise_rate: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReportFormat {
    Json,
    Csv,
}

#[derive(Serialize, Deserialize)]
struct ReportMetadata {
    chance_level: f64,
    chance_level_assumes_balanced_truths: bool,
    noise_ceiling: Option<f64>,
}

fn metadata(meta: &ReportMeta) -> Result<ReportMetadata> {
    Ok(ReportMetadata {
        chance_level: chance_level(meta.task),
        chance_level_assumes_balanced_truths: true,
        noise_ceiling: meta.noise_rate.map(noise_ceiling).transpose()?,
    })
}

/// Writes a plot-ready report. CSV rows are the bare table (curve:
/// `n_docs,mean_accuracy,std_accuracy,n_seeds`); JSON mirrors the type's
/// fields and carries the reference-line metadata.
pub fn emit_report(
    report: ReportKind<'_>,
    meta: &ReportMeta,
    format: ReportFormat,
    path: impl AsRef<Path>,
) -> Result<()> {
    let path = path.as_ref();
    let file = std::fs::File::create(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    let mut writer = std::io::BufWriter::new(file);
    let io_err = |e| Error::io(path.display().to_string(), e);

    match format {
        ReportFormat::Json => {
            let body = match report {
                ReportKind::Metrics(m) => serde_json::json!({
                    "type": "metrics",
                    "data": m,
                    "metadata": metadata(meta)?,
                }),
                ReportKind::Curve(points) => serde_json::json!({
                    "type": "learning_curve",
                    "data": points,
                    "metadata": metadata(meta)?,
                }),
                ReportKind::Hpo(h) => serde_json::json!({
                    "type": "hpo",
                    "data": h,
                    "metadata": metadata(meta)?,
                }),
            };
            serde_json::to_writer_pretty(&mut writer, &body)?;
            writer.write_all(b"\n").map_err(io_err)?;
        }
        ReportFormat::Csv => match report {
            ReportKind::Metrics(m) => {
                writeln!(writer, "metric,value").map_err(io_err)?;
                writeln!(writer, "accuracy,{}", m.accuracy).map_err(io_err)?;
                if let Some(rate) = m.false_positive_rate {
                    writeln!(writer, "false_positive_rate,{rate}").map_err(io_err)?;
                }
                if let Some(share) = m.false_positive_share {
                    writeln!(writer, "false_positive_share,{share}").map_err(io_err)?;
                }
                writeln!(writer, "invalid_count,{}", m.invalid_count).map_err(io_err)?;
                writeln!(writer, "n,{}", m.n).map_err(io_err)?;
                for (i, row) in m.confusion.iter().enumerate() {
                    for (j, count) in row.iter().enumerate() {
                        writeln!(writer, "confusion_{i}_{j},{count}").map_err(io_err)?;
                    }
                }
            }
            ReportKind::Curve(points) => {
                writeln!(writer, "n_docs,mean_accuracy,std_accuracy,n_seeds").map_err(io_err)?;
                for p in points {
                    writeln!(
                        writer,
                        "{},{},{},{}",
                        p.n_finetune_docs, p.mean_accuracy, p.std_accuracy, p.n_seeds
                    )
                    .map_err(io_err)?;
                }
            }
            ReportKind::Hpo(h) => {
                writeln!(writer, "window,val_accuracy,chosen").map_err(io_err)?;
                for (w, acc) in h.grid.iter().zip(&h.val_accuracy) {
                    writeln!(writer, "{},{},{}", w, acc, *w == h.chosen_window).map_err(io_err)?;
                }
            }
        },
    }
    writer.flush().map_err(io_err)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{generate_corpus, CorpusSpec, SignaturePosition, Subclass};
    use rand::Rng;

    fn oil(s: Subclass) -> Label {
        Label::oil_and_gas(s)
    }

    #[test]
    fn all_correct_scores_one() {
        let truths = vec![oil(Subclass::Release), Label::Other, Label::Other];
        let preds: Vec<Option<Label>> = truths.iter().copied().map(Some).collect();
        let m = evaluate(&preds, &truths, Task::Binary).unwrap();
        assert_eq!(m.accuracy, 1.0);
        assert_eq!(m.false_positive_rate, Some(0.0));
        assert_eq!(m.invalid_count, 0);
    }

    #[test]
    fn hand_counted_binary_metrics() {
        // truths (O&G, Other, Other), preds (O&G, O&G, Other).
        let truths = vec![oil(Subclass::Extension), Label::Other, Label::Other];
        let preds = vec![
            Some(Label::OilAndGas(None)),
            Some(Label::OilAndGas(None)),
            Some(Label::Other),
        ];
        let m = evaluate(&preds, &truths, Task::Binary).unwrap();
        assert!((m.accuracy - 2.0 / 3.0).abs() < 1e-12);
        assert_eq!(m.false_positive_rate, Some(0.5));
        assert!((m.false_positive_share.unwrap() - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn accuracy_equals_trace_over_n_and_entries_sum_to_n() {
        use rand::SeedableRng;
        let mut rng = ChaCha8Rng::seed_from_u64(40);
        let labels = [
            Label::Other,
            oil(Subclass::Release),
            oil(Subclass::Extension),
            oil(Subclass::TopLease),
        ];
        let truths: Vec<Label> = (0..500).map(|_| labels[rng.gen_range(0..4)]).collect();
        let preds: Vec<Option<Label>> = (0..500)
            .map(|_| {
                if rng.gen_bool(0.1) {
                    None
                } else {
                    Some(labels[rng.gen_range(0..4)])
                }
            })
            .collect();
        let m = evaluate(&preds, &truths, Task::Binary).unwrap();

        let total: usize = m.confusion.iter().flatten().sum();
        assert_eq!(total, 500);
        let trace: usize = (0..2).map(|i| m.confusion[i][i]).sum();
        assert!((m.accuracy - trace as f64 / 500.0).abs() < 1e-12);
        assert_eq!(
            m.invalid_count,
            preds.iter().filter(|p| p.is_none()).count()
        );
    }

    #[test]
    fn uniform_random_predictions_hit_the_chance_line() {
        use rand::SeedableRng;
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let truths: Vec<Label> = (0..10_000)
            .map(|i| {
                if i % 2 == 0 {
                    Label::Other
                } else {
                    oil(Subclass::OilAndGasLease)
                }
            })
            .collect();
        let preds: Vec<Option<Label>> = (0..10_000)
            .map(|_| {
                Some(if rng.gen_bool(0.5) {
                    Label::Other
                } else {
                    Label::OilAndGas(None)
                })
            })
            .collect();
        let m = evaluate(&preds, &truths, Task::Binary).unwrap();
        assert!(
            (m.accuracy - 0.5).abs() < 0.02,
            "accuracy {} strays from the chance line",
            m.accuracy
        );
        assert!((m.accuracy - chance_level(Task::Binary)).abs() < 0.02);
    }

    #[test]
    fn metrics_are_invariant_to_input_order() {
        use rand::SeedableRng;
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let truths: Vec<Label> = (0..200)
            .map(|_| if rng.gen_bool(0.5) { Label::Other } else { oil(Subclass::Correction) })
            .collect();
        let preds: Vec<Option<Label>> = (0..200)
            .map(|_| {
                if rng.gen_bool(0.1) {
                    None
                } else if rng.gen_bool(0.5) {
                    Some(Label::Other)
                } else {
                    Some(Label::OilAndGas(None))
                }
            })
            .collect();
        let m1 = evaluate(&preds, &truths, Task::Binary).unwrap();

        let mut paired: Vec<(Option<Label>, Label)> =
            preds.iter().copied().zip(truths.iter().copied()).collect();
        paired.reverse();
        paired.swap(3, 77);
        let (p2, t2): (Vec<_>, Vec<_>) = paired.into_iter().unzip();
        let m2 = evaluate(&p2, &t2, Task::Binary).unwrap();
        assert_eq!(m1.accuracy, m2.accuracy);
        assert_eq!(m1.false_positive_rate, m2.false_positive_rate);
    }

    #[test]
    fn multiclass_truth_without_subclass_is_rejected() {
        let truths = vec![Label::Other];
        let preds = vec![Some(oil(Subclass::Release))];
        assert!(evaluate(&preds, &truths, Task::MultiClass).is_err());
    }

    #[test]
    fn multiclass_binary_only_prediction_counts_invalid() {
        let truths = vec![oil(Subclass::Release); 4];
        let preds = vec![
            Some(oil(Subclass::Release)),
            Some(Label::Other),
            Some(Label::OilAndGas(None)),
            None,
        ];
        let m = evaluate(&preds, &truths, Task::MultiClass).unwrap();
        assert_eq!(m.invalid_count, 3);
        assert_eq!(m.accuracy, 0.25);
    }

    #[test]
    fn length_mismatch_is_rejected() {
        assert!(evaluate(&[Some(Label::Other)], &[], Task::Binary).is_err());
    }

    #[test]
    fn hpo_single_entry_grid_chooses_it() {
        let ds = generate_corpus(&CorpusSpec {
            doc_length_range: (15, 25),
            ..CorpusSpec::with_size(60, 14)
        })
        .unwrap();
        let cfg = EnsembleConfig {
            hidden_size: 6,
            d_embed: 3,
            n_filters: 3,
            epochs: 2,
            cnn_epochs: 1,
            min_doc_freq: 1,
            ..EnsembleConfig::for_task(Task::Binary)
        };
        let result = hpo_context_window(&[12], &ds, &ds, &cfg).unwrap();
        assert_eq!(result.chosen_window, 12);
        assert_eq!(result.grid, vec![12]);
        assert_eq!(result.val_accuracy.len(), 1);
    }

    #[test]
    fn hpo_recovers_a_late_planted_signal() {
        // Signatures planted after token 12 in 20-28 token documents:
        // a 4-token window sees pure boilerplate, a 28-token window sees
        // every signature.
        let ds = generate_corpus(&CorpusSpec {
            doc_length_range: (20, 28),
            signature_position: SignaturePosition::AfterOffset(12),
            ..CorpusSpec::with_size(240, 5)
        })
        .unwrap();
        let (train, val, _) = crate::corpus::split(&ds, (0.6, 0.3, 0.1), 2).unwrap();
        let cfg = EnsembleConfig {
            hidden_size: 16,
            d_embed: 4,
            n_filters: 4,
            epochs: 6,
            cnn_epochs: 3,
            min_doc_freq: 1,
            ..EnsembleConfig::for_task(Task::Binary)
        };
        let result = hpo_context_window(&[4, 16, 28], &train, &val, &cfg).unwrap();
        assert!(
            result.chosen_window >= 16,
            "chose {} with accuracies {:?}",
            result.chosen_window,
            result.val_accuracy
        );
    }

    #[test]
    fn hpo_rejects_unsorted_grids() {
        let ds = generate_corpus(&CorpusSpec {
            doc_length_range: (15, 20),
            ..CorpusSpec::with_size(10, 1)
        })
        .unwrap();
        let cfg = EnsembleConfig::for_task(Task::Binary);
        assert!(hpo_context_window(&[], &ds, &ds, &cfg).is_err());
        assert!(hpo_context_window(&[800, 400], &ds, &ds, &cfg).is_err());
    }

    fn curve_pool(n: usize, seed: u64) -> Dataset {
        generate_corpus(&CorpusSpec {
            doc_length_range: (15, 30),
            ..CorpusSpec::with_size(n, seed)
        })
        .unwrap()
    }

    #[test]
    fn curve_has_one_point_per_size() {
        let pool = curve_pool(60, 3);
        let test = curve_pool(20, 4);
        let trainer = |subset: &Dataset, _test: &Dataset| Ok(subset.len() as f64 / 100.0);
        let points = learning_curve(&[10, 20, 40], &[1, 2, 3], &trainer, &pool, &test).unwrap();
        assert_eq!(points.len(), 3);
        for p in &points {
            assert_eq!(p.n_seeds, 3);
            // Accuracy depends only on size, so the spread is zero.
            assert!(p.std_accuracy < 1e-12);
        }
        assert!((points[0].mean_accuracy - 0.1).abs() < 1e-12);
    }

    #[test]
    fn curve_means_are_invariant_to_seed_order() {
        let pool = curve_pool(50, 5);
        let test = curve_pool(20, 6);
        // Accuracy keyed on the subset's contents, not its sampling order.
        let trainer = |subset: &Dataset, _test: &Dataset| {
            let key: usize = subset
                .documents
                .iter()
                .map(|d| d.id.bytes().map(usize::from).sum::<usize>())
                .sum();
            Ok((key % 97) as f64 / 97.0)
        };
        let a = learning_curve(&[10, 30], &[1, 2, 3], &trainer, &pool, &test).unwrap();
        let b = learning_curve(&[10, 30], &[3, 1, 2], &trainer, &pool, &test).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert!((x.mean_accuracy - y.mean_accuracy).abs() < 1e-12);
        }
    }

    #[test]
    fn curve_rejects_oversized_requests() {
        let pool = curve_pool(30, 7);
        let test = curve_pool(10, 8);
        let trainer = |_: &Dataset, _: &Dataset| Ok(0.5);
        assert!(learning_curve(&[10, 40], &[1], &trainer, &pool, &test).is_err());
        assert!(learning_curve(&[20, 10], &[1], &trainer, &pool, &test).is_err());
    }

    fn temp_path(name: &str) -> std::path::PathBuf {
        let dir = std::env::temp_dir().join("lexsort-eval-tests");
        std::fs::create_dir_all(&dir).unwrap();
        dir.join(name)
    }

    #[test]
    fn curve_csv_has_header_plus_one_row_per_point() {
        let points: Vec<LearningCurvePoint> = (0..5)
            .map(|i| LearningCurvePoint {
                n_finetune_docs: 200 * (i + 1),
                mean_accuracy: 0.8 + i as f64 * 0.01,
                std_accuracy: 0.02,
                n_seeds: 3,
            })
            .collect();
        let meta = ReportMeta {
            task: Task::Binary,
            noise_rate: Some(0.05),
        };
        let path = temp_path("curve.csv");
        emit_report(ReportKind::Curve(&points), &meta, ReportFormat::Csv, &path).unwrap();
        let contents = std::fs::read_to_string(&path).unwrap();
        let lines: Vec<&str> = contents.lines().collect();
        assert_eq!(lines.len(), 6);
        assert_eq!(lines[0], "n_docs,mean_accuracy,std_accuracy,n_seeds");
        assert!(lines[1].starts_with("200,"));
    }

    #[test]
    fn json_report_carries_reference_lines_and_round_trips() {
        let points = vec![LearningCurvePoint {
            n_finetune_docs: 200,
            mean_accuracy: 0.9,
            std_accuracy: 0.01,
            n_seeds: 3,
        }];
        let meta = ReportMeta {
            task: Task::Binary,
            noise_rate: Some(0.05),
        };
        let path = temp_path("curve.json");
        emit_report(ReportKind::Curve(&points), &meta, ReportFormat::Json, &path).unwrap();
        let value: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
        assert_eq!(value["metadata"]["noise_ceiling"], 0.95);
        assert_eq!(value["metadata"]["chance_level"], 0.5);
        let parsed: Vec<LearningCurvePoint> =
            serde_json::from_value(value["data"].clone()).unwrap();
        assert_eq!(parsed, points);
    }

    #[test]
    fn metrics_json_round_trips() {
        let truths = vec![oil(Subclass::Release), Label::Other];
        let preds = vec![Some(Label::OilAndGas(None)), None];
        let m = evaluate(&preds, &truths, Task::Binary).unwrap();
        let meta = ReportMeta {
            task: Task::Binary,
            noise_rate: None,
        };
        let path = temp_path("metrics.json");
        emit_report(ReportKind::Metrics(&m), &meta, ReportFormat::Json, &path).unwrap();
        let value: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
        let parsed: Metrics = serde_json::from_value(value["data"].clone()).unwrap();
        assert_eq!(parsed, m);
        assert_eq!(value["metadata"]["noise_ceiling"], serde_json::Value::Null);
    }
}

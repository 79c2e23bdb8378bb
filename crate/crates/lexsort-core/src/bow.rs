//! The bag-of-words branch: a single-hidden-layer feed-forward network with a
//! softmax output, trained by mini-batch gradient descent on sparse n-gram
//! frequency vectors. Gradients are hand-derived and verified against central
//! finite differences.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::featurize::FeatureVector;
use crate::num::{argmax, log_sum_exp, relative_error, softmax};

/// Training hyperparameters, shared by both ensemble branches.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub hidden_size: usize,
    pub l2: f64,
    pub seed: u64,
    /// Context window in tokens. Carried here because it is searched over
    /// during hyperparameter optimization alongside the other tunables.
    pub window: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 20,
            batch_size: 32,
            learning_rate: 0.1,
            hidden_size: 128,
            l2: 1e-5,
            seed: 0,
            window: 800,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::validation("epochs", "must be at least 1"));
        }
        if self.batch_size == 0 {
            return Err(Error::validation("batch_size", "must be at least 1"));
        }
        if self.hidden_size == 0 {
            return Err(Error::validation("hidden_size", "must be at least 1"));
        }
        if self.window == 0 {
            return Err(Error::validation("window", "must be at least 1"));
        }
        if !(self.learning_rate > 0.0) {
            return Err(Error::validation("learning_rate", "must be positive"));
        }
        if self.l2 < 0.0 {
            return Err(Error::validation("l2", "must be non-negative"));
        }
        Ok(())
    }
}

/// One epoch of training statistics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub train_loss: f64,
    pub val_accuracy: f64,
}

pub type TrainHistory = Vec<EpochStats>;

/// W1 `[hidden x vocab]`, b1, ReLU, W2 `[n_labels x hidden]`, b2, softmax.
#[derive(Debug, Clone, PartialEq)]
pub struct BowNet {
    vocab_size: usize,
    hidden_size: usize,
    n_labels: usize,
    w1: Vec<f64>,
    b1: Vec<f64>,
    w2: Vec<f64>,
    b2: Vec<f64>,
}

/// Gradients with the same shapes as the parameters.
#[derive(Debug, Clone)]
pub struct BowGrads {
    pub w1: Vec<f64>,
    pub b1: Vec<f64>,
    pub w2: Vec<f64>,
    pub b2: Vec<f64>,
}

impl BowNet {
    /// Weights drawn uniformly from `[-1/sqrt(fan_in), 1/sqrt(fan_in))`,
    /// biases zero. Deterministic for a fixed seed.
    pub fn init(vocab_size: usize, hidden_size: usize, n_labels: usize, seed: u64) -> Result<Self> {
        if vocab_size == 0 || hidden_size == 0 || n_labels == 0 {
            return Err(Error::validation(
                "dimensions",
                format!("all dimensions must be >= 1, got vocab={vocab_size} hidden={hidden_size} labels={n_labels}"),
            ));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let bound1 = 1.0 / (vocab_size as f64).sqrt();
        let bound2 = 1.0 / (hidden_size as f64).sqrt();
        let w1 = (0..hidden_size * vocab_size)
            .map(|_| rng.gen_range(-bound1..bound1))
            .collect();
        let w2 = (0..n_labels * hidden_size)
            .map(|_| rng.gen_range(-bound2..bound2))
            .collect();
        Ok(BowNet {
            vocab_size,
            hidden_size,
            n_labels,
            w1,
            b1: vec![0.0; hidden_size],
            w2,
            b2: vec![0.0; n_labels],
        })
    }

    /// Reassembles a network from raw parameter arrays (shape-checked).
    pub fn from_parts(
        vocab_size: usize,
        hidden_size: usize,
        n_labels: usize,
        w1: Vec<f64>,
        b1: Vec<f64>,
        w2: Vec<f64>,
        b2: Vec<f64>,
    ) -> Result<Self> {
        if w1.len() != hidden_size * vocab_size
            || b1.len() != hidden_size
            || w2.len() != n_labels * hidden_size
            || b2.len() != n_labels
        {
            return Err(Error::validation("parameters", "array shapes do not match dimensions"));
        }
        Ok(BowNet {
            vocab_size,
            hidden_size,
            n_labels,
            w1,
            b1,
            w2,
            b2,
        })
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab_size
    }

    pub fn hidden_size(&self) -> usize {
        self.hidden_size
    }

    pub fn n_labels(&self) -> usize {
        self.n_labels
    }

    pub fn w1(&self) -> &[f64] {
        &self.w1
    }

    pub fn b1(&self) -> &[f64] {
        &self.b1
    }

    pub fn w2(&self) -> &[f64] {
        &self.w2
    }

    pub fn b2(&self) -> &[f64] {
        &self.b2
    }

    fn check_indices(&self, x: &FeatureVector) -> Result<()> {
        if let Some(&max) = x.indices.last() {
            if max >= self.vocab_size {
                return Err(Error::validation(
                    "feature_vector",
                    format!("index {max} out of range for vocabulary size {}", self.vocab_size),
                ));
            }
        }
        Ok(())
    }

    /// Hidden pre-activations `W1 x + b1` without densifying `x`.
    fn hidden_pre(&self, x: &FeatureVector) -> Vec<f64> {
        let mut z1 = self.b1.clone();
        for (j, z) in z1.iter_mut().enumerate() {
            let row = &self.w1[j * self.vocab_size..(j + 1) * self.vocab_size];
            let mut acc = 0.0;
            for (&i, &v) in x.indices.iter().zip(&x.values) {
                acc += row[i] * v;
            }
            *z += acc;
        }
        z1
    }

    fn logits_from_hidden(&self, h: &[f64]) -> Vec<f64> {
        let mut z2 = self.b2.clone();
        for (k, z) in z2.iter_mut().enumerate() {
            let row = &self.w2[k * self.hidden_size..(k + 1) * self.hidden_size];
            *z += row.iter().zip(h).map(|(w, a)| w * a).sum::<f64>();
        }
        z2
    }

    fn logits(&self, x: &FeatureVector) -> Vec<f64> {
        let mut h = self.hidden_pre(x);
        for v in &mut h {
            *v = v.max(0.0);
        }
        self.logits_from_hidden(&h)
    }

    /// Softmax class probabilities for one sparse input.
    pub fn forward(&self, x: &FeatureVector) -> Result<Vec<f64>> {
        self.check_indices(x)?;
        Ok(softmax(&self.logits(x)))
    }

    /// Predicted label index (ties go to the lowest index).
    pub fn predict(&self, x: &FeatureVector) -> Result<usize> {
        Ok(argmax(&self.forward(x)?))
    }

    /// Fraction of examples whose argmax matches the label.
    pub fn accuracy(&self, examples: &[(FeatureVector, usize)]) -> Result<f64> {
        if examples.is_empty() {
            return Err(Error::validation("examples", "empty evaluation set"));
        }
        let mut correct = 0usize;
        for (x, y) in examples {
            if self.predict(x)? == *y {
                correct += 1;
            }
        }
        Ok(correct as f64 / examples.len() as f64)
    }

    /// Mean cross-entropy loss over the batch plus `(l2/2)(|W1|^2 + |W2|^2)`,
    /// with its exact analytic gradients.
    pub fn loss_and_grad(
        &self,
        batch: &[(FeatureVector, usize)],
        l2: f64,
    ) -> Result<(f64, BowGrads)> {
        if batch.is_empty() {
            return Err(Error::validation("batch", "empty batch"));
        }
        let mut grads = BowGrads {
            w1: vec![0.0; self.w1.len()],
            b1: vec![0.0; self.b1.len()],
            w2: vec![0.0; self.w2.len()],
            b2: vec![0.0; self.b2.len()],
        };
        let scale = 1.0 / batch.len() as f64;
        let mut loss = 0.0;

        for (x, y) in batch {
            self.check_indices(x)?;
            if *y >= self.n_labels {
                return Err(Error::validation(
                    "label",
                    format!("label {y} out of range for {} classes", self.n_labels),
                ));
            }
            let z1 = self.hidden_pre(x);
            let h: Vec<f64> = z1.iter().map(|z| z.max(0.0)).collect();
            let z2 = self.logits_from_hidden(&h);
            loss += scale * (log_sum_exp(&z2) - z2[*y]);

            // dL/dz2 = p - onehot(y), scaled by the batch mean.
            let mut dz2 = softmax(&z2);
            dz2[*y] -= 1.0;
            for d in &mut dz2 {
                *d *= scale;
            }

            // Output layer.
            for (k, dk) in dz2.iter().enumerate() {
                grads.b2[k] += dk;
                let row = &mut grads.w2[k * self.hidden_size..(k + 1) * self.hidden_size];
                for (g, a) in row.iter_mut().zip(&h) {
                    *g += dk * a;
                }
            }

            // Backprop into the hidden layer through the ReLU.
            let mut dz1 = vec![0.0; self.hidden_size];
            for (k, dk) in dz2.iter().enumerate() {
                let row = &self.w2[k * self.hidden_size..(k + 1) * self.hidden_size];
                for (j, w) in row.iter().enumerate() {
                    dz1[j] += dk * w;
                }
            }
            for (d, z) in dz1.iter_mut().zip(&z1) {
                if *z <= 0.0 {
                    *d = 0.0;
                }
            }

            for (j, dj) in dz1.iter().enumerate() {
                if *dj == 0.0 {
                    continue;
                }
                grads.b1[j] += dj;
                let row = &mut grads.w1[j * self.vocab_size..(j + 1) * self.vocab_size];
                for (&i, &v) in x.indices.iter().zip(&x.values) {
                    row[i] += dj * v;
                }
            }
        }

        if l2 > 0.0 {
            let mut penalty = 0.0;
            for (g, w) in grads.w1.iter_mut().zip(&self.w1) {
                penalty += w * w;
                *g += l2 * w;
            }
            for (g, w) in grads.w2.iter_mut().zip(&self.w2) {
                penalty += w * w;
                *g += l2 * w;
            }
            loss += 0.5 * l2 * penalty;
        }
        Ok((loss, grads))
    }

    fn sgd_step(&mut self, grads: &BowGrads, lr: f64) {
        for (w, g) in self.w1.iter_mut().zip(&grads.w1) {
            *w -= lr * g;
        }
        for (w, g) in self.b1.iter_mut().zip(&grads.b1) {
            *w -= lr * g;
        }
        for (w, g) in self.w2.iter_mut().zip(&grads.w2) {
            *w -= lr * g;
        }
        for (w, g) in self.b2.iter_mut().zip(&grads.b2) {
            *w -= lr * g;
        }
    }

    /// Seeded-shuffle mini-batch gradient descent. Returns the parameter
    /// snapshot with the best validation accuracy and the per-epoch history.
    pub fn train(
        &self,
        train: &[(FeatureVector, usize)],
        val: &[(FeatureVector, usize)],
        config: &TrainConfig,
    ) -> Result<(BowNet, TrainHistory)> {
        config.validate()?;
        if train.is_empty() || val.is_empty() {
            return Err(Error::validation("dataset", "train and validation sets must be non-empty"));
        }

        let mut net = self.clone();
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut indices: Vec<usize> = (0..train.len()).collect();
        let mut history = Vec::with_capacity(config.epochs);
        let mut best: Option<(f64, BowNet)> = None;

        for epoch in 0..config.epochs {
            use rand::seq::SliceRandom;
            indices.shuffle(&mut rng);

            let mut epoch_loss = 0.0;
            for chunk in indices.chunks(config.batch_size) {
                let batch: Vec<(FeatureVector, usize)> =
                    chunk.iter().map(|&i| train[i].clone()).collect();
                let (loss, grads) = net.loss_and_grad(&batch, config.l2)?;
                if !loss.is_finite() {
                    return Err(Error::Training {
                        epoch,
                        message: format!("non-finite batch loss {loss}"),
                    });
                }
                epoch_loss += loss * chunk.len() as f64;
                net.sgd_step(&grads, config.learning_rate);
            }
            let train_loss = epoch_loss / train.len() as f64;
            let val_accuracy = net.accuracy(val)?;
            history.push(EpochStats {
                train_loss,
                val_accuracy,
            });
            if best.as_ref().map_or(true, |(acc, _)| val_accuracy > *acc) {
                best = Some((val_accuracy, net.clone()));
            }
        }
        Ok((best.unwrap().1, history))
    }

    fn param_count(&self) -> usize {
        self.w1.len() + self.b1.len() + self.w2.len() + self.b2.len()
    }

    fn param_mut(&mut self, i: usize) -> &mut f64 {
        let mut i = i;
        if i < self.w1.len() {
            return &mut self.w1[i];
        }
        i -= self.w1.len();
        if i < self.b1.len() {
            return &mut self.b1[i];
        }
        i -= self.b1.len();
        if i < self.w2.len() {
            return &mut self.w2[i];
        }
        i -= self.w2.len();
        &mut self.b2[i]
    }

    fn grad_at(grads: &BowGrads, i: usize) -> f64 {
        let mut i = i;
        if i < grads.w1.len() {
            return grads.w1[i];
        }
        i -= grads.w1.len();
        if i < grads.b1.len() {
            return grads.b1[i];
        }
        i -= grads.b1.len();
        if i < grads.w2.len() {
            return grads.w2[i];
        }
        i -= grads.w2.len();
        grads.b2[i]
    }

    /// Central-finite-difference check of every analytic gradient entry.
    /// Returns the maximum relative error across all parameters.
    pub fn gradient_check(
        &self,
        batch: &[(FeatureVector, usize)],
        l2: f64,
        h: f64,
    ) -> Result<f64> {
        if !(h > 0.0) {
            return Err(Error::validation("h", "step must be positive"));
        }
        let (_, grads) = self.loss_and_grad(batch, l2)?;
        let mut worst = 0.0f64;
        for i in 0..self.param_count() {
            let mut plus = self.clone();
            *plus.param_mut(i) += h;
            let mut minus = self.clone();
            *minus.param_mut(i) -= h;
            let numeric =
                (plus.loss_and_grad(batch, l2)?.0 - minus.loss_and_grad(batch, l2)?.0) / (2.0 * h);
            let analytic = Self::grad_at(&grads, i);
            if analytic == 0.0 && numeric == 0.0 {
                continue;
            }
            worst = worst.max(relative_error(analytic, numeric));
        }
        Ok(worst)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn sparse(pairs: &[(usize, f64)]) -> FeatureVector {
        FeatureVector {
            indices: pairs.iter().map(|(i, _)| *i).collect(),
            values: pairs.iter().map(|(_, v)| *v).collect(),
        }
    }

    fn random_example(rng: &mut ChaCha8Rng, vocab: usize, n_labels: usize) -> (FeatureVector, usize) {
        let nnz = rng.gen_range(1..=vocab);
        let mut idx: Vec<usize> = (0..vocab).collect();
        use rand::seq::SliceRandom;
        idx.shuffle(rng);
        idx.truncate(nnz);
        idx.sort_unstable();
        let pairs: Vec<(usize, f64)> = idx.into_iter().map(|i| (i, rng.gen_range(0.01..1.0))).collect();
        (sparse(&pairs), rng.gen_range(0..n_labels))
    }

    #[test]
    fn init_is_deterministic_with_zero_biases() {
        let a = BowNet::init(50, 8, 2, 5).unwrap();
        let b = BowNet::init(50, 8, 2, 5).unwrap();
        assert_eq!(a, b);
        assert!(a.b1().iter().all(|v| *v == 0.0));
        assert!(a.b2().iter().all(|v| *v == 0.0));
        assert_eq!(a.w1().len(), 8 * 50);

        let c = BowNet::init(50, 8, 2, 6).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn init_rejects_zero_dimensions() {
        assert!(BowNet::init(0, 8, 2, 1).is_err());
        assert!(BowNet::init(10, 0, 2, 1).is_err());
        assert!(BowNet::init(10, 8, 0, 1).is_err());
    }

    #[test]
    fn zero_net_outputs_uniform() {
        let net = BowNet::from_parts(6, 4, 3, vec![0.0; 24], vec![0.0; 4], vec![0.0; 12], vec![0.0; 3])
            .unwrap();
        let p = net.forward(&sparse(&[(0, 0.5), (3, 0.5)])).unwrap();
        for v in &p {
            assert!((v - 1.0 / 3.0).abs() < 1e-15);
        }
    }

    #[test]
    fn equal_logits_give_half_half() {
        let net = BowNet::from_parts(2, 2, 2, vec![0.0; 4], vec![0.0; 2], vec![0.0; 4], vec![7.5; 2])
            .unwrap();
        let p = net.forward(&sparse(&[(0, 1.0)])).unwrap();
        assert!((p[0] - 0.5).abs() < 1e-15);
        assert!((p[1] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn forward_rejects_out_of_range_indices() {
        let net = BowNet::init(4, 3, 2, 1).unwrap();
        assert!(net.forward(&sparse(&[(4, 1.0)])).is_err());
    }

    #[test]
    fn forward_matches_dense_oracle() {
        // Dense matrix-multiply reimplementation of the same network.
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let (vocab, hidden, labels) = (6, 4, 3);
        let net = BowNet::init(vocab, hidden, labels, 3).unwrap();
        for _ in 0..20 {
            let (x, _) = random_example(&mut rng, vocab, labels);
            let mut dense = vec![0.0; vocab];
            for (&i, &v) in x.indices.iter().zip(&x.values) {
                dense[i] = v;
            }
            let mut h = vec![0.0; hidden];
            for (j, hj) in h.iter_mut().enumerate() {
                let mut acc = net.b1()[j];
                for (i, dv) in dense.iter().enumerate() {
                    acc += net.w1()[j * vocab + i] * dv;
                }
                *hj = acc.max(0.0);
            }
            let mut z = vec![0.0; labels];
            for (k, zk) in z.iter_mut().enumerate() {
                let mut acc = net.b2()[k];
                for (j, hj) in h.iter().enumerate() {
                    acc += net.w2()[k * hidden + j] * hj;
                }
                *zk = acc;
            }
            let expected = softmax(&z);
            let got = net.forward(&x).unwrap();
            for (a, b) in got.iter().zip(&expected) {
                assert!((a - b).abs() < 1e-12);
            }
            assert!((got.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn perfect_prediction_has_zero_loss_and_output_gradient() {
        // Saturated logits make softmax exactly (1, 0) in f64.
        let net = BowNet::from_parts(
            3,
            2,
            2,
            vec![0.0; 6],
            vec![0.0; 2],
            vec![0.0; 4],
            vec![400.0, -400.0],
        )
        .unwrap();
        let (loss, grads) = net.loss_and_grad(&[(sparse(&[(0, 1.0)]), 0)], 0.0).unwrap();
        assert_eq!(loss, 0.0);
        assert!(grads.w2.iter().all(|g| *g == 0.0));
        assert!(grads.b2.iter().all(|g| *g == 0.0));
    }

    #[test]
    fn uniform_prediction_loss_is_ln2() {
        let net = BowNet::from_parts(3, 2, 2, vec![0.0; 6], vec![0.0; 2], vec![0.0; 4], vec![0.0; 2])
            .unwrap();
        let (loss, _) = net.loss_and_grad(&[(sparse(&[(1, 1.0)]), 1)], 0.0).unwrap();
        assert!((loss - std::f64::consts::LN_2).abs() < 1e-12);
    }

    #[test]
    fn gradients_match_finite_differences() {
        // DERIVED oracle: central differences at h = 1e-5 on a random small
        // net (hidden 3, vocabulary 5, batch 4).
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let net = BowNet::init(5, 3, 2, 41).unwrap();
        let batch: Vec<(FeatureVector, usize)> =
            (0..4).map(|_| random_example(&mut rng, 5, 2)).collect();
        let err = net.gradient_check(&batch, 1e-4, 1e-5).unwrap();
        assert!(err < 1e-4, "max relative error {err}");
    }

    #[test]
    fn gradient_check_many_random_instances() {
        let mut rng = ChaCha8Rng::seed_from_u64(123);
        for trial in 0..20 {
            let vocab = rng.gen_range(3..8);
            let hidden = rng.gen_range(2..5);
            let labels = if rng.gen_bool(0.5) { 2 } else { 3 };
            let net = BowNet::init(vocab, hidden, labels, trial).unwrap();
            let batch: Vec<(FeatureVector, usize)> = (0..rng.gen_range(1..4))
                .map(|_| random_example(&mut rng, vocab, labels))
                .collect();
            let err = net.gradient_check(&batch, 1e-5, 1e-5).unwrap();
            assert!(err < 1e-4, "trial {trial}: max relative error {err}");
        }
    }

    #[test]
    fn gradient_check_rejects_zero_step() {
        let net = BowNet::init(3, 2, 2, 1).unwrap();
        assert!(net.gradient_check(&[(sparse(&[(0, 1.0)]), 0)], 0.0, 0.0).is_err());
    }

    fn separable_set(n_per_class: usize) -> Vec<(FeatureVector, usize)> {
        // Class 0 fires feature 0, class 1 fires feature 1: linearly separable.
        (0..n_per_class)
            .flat_map(|i| {
                let jitter = 0.5 + 0.4 * (i as f64 / n_per_class as f64);
                vec![
                    (sparse(&[(0, jitter), (2, 0.1)]), 0usize),
                    (sparse(&[(1, jitter), (2, 0.1)]), 1usize),
                ]
            })
            .collect()
    }

    #[test]
    fn training_fits_a_separable_set() {
        let data = separable_set(10);
        let net = BowNet::init(3, 4, 2, 7).unwrap();
        let config = TrainConfig {
            epochs: 20,
            batch_size: 4,
            learning_rate: 0.5,
            hidden_size: 4,
            l2: 0.0,
            seed: 3,
            window: 10,
        };
        let (trained, history) = net.train(&data, &data, &config).unwrap();
        assert_eq!(history.len(), 20);
        assert_eq!(trained.accuracy(&data).unwrap(), 1.0);
    }

    #[test]
    fn training_is_deterministic() {
        let data = separable_set(6);
        let net = BowNet::init(3, 4, 2, 7).unwrap();
        let config = TrainConfig {
            epochs: 5,
            batch_size: 3,
            learning_rate: 0.2,
            hidden_size: 4,
            l2: 1e-4,
            seed: 9,
            window: 10,
        };
        let (a, ha) = net.train(&data, &data, &config).unwrap();
        let (b, hb) = net.train(&data, &data, &config).unwrap();
        assert_eq!(a, b);
        assert_eq!(ha, hb);
    }

    #[test]
    fn training_rejects_zero_epochs() {
        let data = separable_set(2);
        let net = BowNet::init(3, 4, 2, 7).unwrap();
        let config = TrainConfig {
            epochs: 0,
            ..TrainConfig::default()
        };
        assert!(net.train(&data, &data, &config).is_err());
    }

    #[test]
    fn full_batch_small_lr_loss_is_monotone() {
        let data = separable_set(5);
        let net = BowNet::init(3, 4, 2, 11).unwrap();
        let config = TrainConfig {
            epochs: 30,
            batch_size: data.len(),
            learning_rate: 0.01,
            hidden_size: 4,
            l2: 0.0,
            seed: 1,
            window: 10,
        };
        let (_, history) = net.train(&data, &data, &config).unwrap();
        for pair in history.windows(2) {
            assert!(
                pair[1].train_loss <= pair[0].train_loss + 1e-12,
                "loss increased: {} -> {}",
                pair[0].train_loss,
                pair[1].train_loss
            );
        }
    }

    #[test]
    fn output_is_invariant_to_logit_shift() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let net = BowNet::init(6, 4, 3, 8).unwrap();
        let shifted = {
            let mut b2 = net.b2().to_vec();
            for v in &mut b2 {
                *v += 13.5;
            }
            BowNet::from_parts(6, 4, 3, net.w1().to_vec(), net.b1().to_vec(), net.w2().to_vec(), b2)
                .unwrap()
        };
        for _ in 0..10 {
            let (x, _) = random_example(&mut rng, 6, 3);
            let p = net.forward(&x).unwrap();
            let q = shifted.forward(&x).unwrap();
            for (a, b) in p.iter().zip(&q) {
                assert!((a - b).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn hidden_unit_permutation_leaves_output_unchanged() {
        let (vocab, hidden, labels) = (5, 4, 2);
        let net = BowNet::init(vocab, hidden, labels, 19).unwrap();
        let perm = [2usize, 0, 3, 1];
        let mut w1 = vec![0.0; hidden * vocab];
        let mut b1 = vec![0.0; hidden];
        let mut w2 = vec![0.0; labels * hidden];
        for (new_j, &old_j) in perm.iter().enumerate() {
            w1[new_j * vocab..(new_j + 1) * vocab]
                .copy_from_slice(&net.w1()[old_j * vocab..(old_j + 1) * vocab]);
            b1[new_j] = net.b1()[old_j];
            for k in 0..labels {
                w2[k * hidden + new_j] = net.w2()[k * hidden + old_j];
            }
        }
        let permuted =
            BowNet::from_parts(vocab, hidden, labels, w1, b1, w2, net.b2().to_vec()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..10 {
            let (x, _) = random_example(&mut rng, vocab, labels);
            assert_eq!(net.forward(&x).unwrap(), permuted.forward(&x).unwrap());
        }
    }
}

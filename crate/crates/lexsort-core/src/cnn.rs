//! The sequence branch: token embeddings, a 1-D convolution with ReLU, dot
//! product attention pooling over positions, and a softmax output layer.
//! Complements the order-free bag-of-words branch by seeing token order.
//!
//! Tokens are embedded by unigram id; out-of-vocabulary tokens share one
//! unknown id, which also serves as padding. Convolution windows that reach
//! into padding are masked out of the attention softmax, so appending pad
//! tokens never changes the output.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::bow::{EpochStats, TrainConfig, TrainHistory};
use crate::error::{Error, Result};
use crate::featurize::TokenSequence;
use crate::num::{argmax, log_sum_exp, relative_error, softmax};

/// A token-id sequence ready for the CNN: ids resolved through the unigram
/// table with out-of-vocabulary tokens mapped to the unknown id.
pub type IdSequence = Vec<usize>;

/// Embedding + convolution + attention + softmax classifier.
#[derive(Debug, Clone, PartialEq)]
pub struct AttnCnn {
    n_unigrams: usize,
    d_embed: usize,
    n_filters: usize,
    kernel_width: usize,
    n_labels: usize,
    /// `[(n_unigrams + 1) x d_embed]`; the extra final row embeds the shared
    /// unknown/padding id.
    embedding: Vec<f64>,
    /// `[n_filters x kernel_width x d_embed]`.
    filters: Vec<f64>,
    /// `[n_filters]` attention scoring vector.
    attention: Vec<f64>,
    /// `[n_labels x n_filters]` output layer.
    w_out: Vec<f64>,
    b_out: Vec<f64>,
}

/// Dense gradients matching [`AttnCnn`]'s parameter shapes.
#[derive(Debug, Clone)]
pub struct CnnGrads {
    pub embedding: Vec<f64>,
    pub filters: Vec<f64>,
    pub attention: Vec<f64>,
    pub w_out: Vec<f64>,
    pub b_out: Vec<f64>,
}

/// Per-example backward results with the embedding gradient kept sparse.
struct ExampleGrad {
    loss: f64,
    filters: Vec<f64>,
    attention: Vec<f64>,
    w_out: Vec<f64>,
    b_out: Vec<f64>,
    /// `(unigram id, d_embed gradient)` pairs, sorted by id.
    embedding: Vec<(usize, Vec<f64>)>,
}

impl AttnCnn {
    /// Weights drawn uniformly from `[-1/sqrt(fan_in), 1/sqrt(fan_in))`,
    /// biases zero. Deterministic for a fixed seed.
    pub fn init(
        n_unigrams: usize,
        d_embed: usize,
        n_filters: usize,
        kernel_width: usize,
        n_labels: usize,
        seed: u64,
    ) -> Result<Self> {
        if n_unigrams == 0 || d_embed == 0 || n_filters == 0 || kernel_width == 0 || n_labels == 0 {
            return Err(Error::validation(
                "dimensions",
                "all model dimensions must be >= 1",
            ));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let be = 1.0 / (d_embed as f64).sqrt();
        let bf = 1.0 / ((kernel_width * d_embed) as f64).sqrt();
        let ba = 1.0 / (n_filters as f64).sqrt();
        let bo = 1.0 / (n_filters as f64).sqrt();
        Ok(AttnCnn {
            n_unigrams,
            d_embed,
            n_filters,
            kernel_width,
            n_labels,
            embedding: (0..(n_unigrams + 1) * d_embed)
                .map(|_| rng.gen_range(-be..be))
                .collect(),
            filters: (0..n_filters * kernel_width * d_embed)
                .map(|_| rng.gen_range(-bf..bf))
                .collect(),
            attention: (0..n_filters).map(|_| rng.gen_range(-ba..ba)).collect(),
            w_out: (0..n_labels * n_filters).map(|_| rng.gen_range(-bo..bo)).collect(),
            b_out: vec![0.0; n_labels],
        })
    }

    #[allow(clippy::too_many_arguments)]
    pub fn from_parts(
        n_unigrams: usize,
        d_embed: usize,
        n_filters: usize,
        kernel_width: usize,
        n_labels: usize,
        embedding: Vec<f64>,
        filters: Vec<f64>,
        attention: Vec<f64>,
        w_out: Vec<f64>,
        b_out: Vec<f64>,
    ) -> Result<Self> {
        if embedding.len() != (n_unigrams + 1) * d_embed
            || filters.len() != n_filters * kernel_width * d_embed
            || attention.len() != n_filters
            || w_out.len() != n_labels * n_filters
            || b_out.len() != n_labels
        {
            return Err(Error::validation("parameters", "array shapes do not match dimensions"));
        }
        Ok(AttnCnn {
            n_unigrams,
            d_embed,
            n_filters,
            kernel_width,
            n_labels,
            embedding,
            filters,
            attention,
            w_out,
            b_out,
        })
    }

    /// The shared unknown/padding id.
    pub fn unknown_id(&self) -> usize {
        self.n_unigrams
    }

    pub fn n_unigrams(&self) -> usize {
        self.n_unigrams
    }

    pub fn d_embed(&self) -> usize {
        self.d_embed
    }

    pub fn n_filters(&self) -> usize {
        self.n_filters
    }

    pub fn kernel_width(&self) -> usize {
        self.kernel_width
    }

    pub fn n_labels(&self) -> usize {
        self.n_labels
    }

    pub fn embedding(&self) -> &[f64] {
        &self.embedding
    }

    pub fn filters(&self) -> &[f64] {
        &self.filters
    }

    pub fn attention(&self) -> &[f64] {
        &self.attention
    }

    pub fn w_out(&self) -> &[f64] {
        &self.w_out
    }

    pub fn b_out(&self) -> &[f64] {
        &self.b_out
    }

    /// Resolves tokens to unigram ids, truncating to `window` first.
    pub fn resolve_ids(
        &self,
        seq: &TokenSequence,
        table: &std::collections::HashMap<String, usize>,
        window: usize,
    ) -> Result<IdSequence> {
        if window == 0 {
            return Err(Error::validation("window", "must be at least 1"));
        }
        Ok(seq
            .tokens
            .iter()
            .take(window)
            .map(|t| table.get(t).copied().unwrap_or(self.unknown_id()))
            .collect())
    }

    fn check_ids(&self, ids: &[usize]) -> Result<()> {
        if let Some(&bad) = ids.iter().find(|&&id| id > self.n_unigrams) {
            return Err(Error::validation(
                "ids",
                format!("token id {bad} out of range (unknown id is {})", self.n_unigrams),
            ));
        }
        Ok(())
    }

    /// Pads with the unknown id up to the kernel width so at least one
    /// convolution position exists. Returns the padded ids and the real count.
    fn padded(&self, ids: &[usize]) -> (Vec<usize>, usize) {
        let n_real = ids.len();
        let mut padded = ids.to_vec();
        while padded.len() < self.kernel_width {
            padded.push(self.unknown_id());
        }
        (padded, n_real)
    }

    fn embed(&self, id: usize) -> &[f64] {
        &self.embedding[id * self.d_embed..(id + 1) * self.d_embed]
    }

    /// ReLU conv outputs for every position: `[positions x n_filters]`.
    fn conv(&self, ids: &[usize]) -> Vec<Vec<f64>> {
        let positions = ids.len() + 1 - self.kernel_width;
        let mut out = Vec::with_capacity(positions);
        for t in 0..positions {
            let mut c = vec![0.0; self.n_filters];
            for (f, cf) in c.iter_mut().enumerate() {
                let mut acc = 0.0;
                for j in 0..self.kernel_width {
                    let weights = &self.filters[(f * self.kernel_width + j) * self.d_embed
                        ..(f * self.kernel_width + j + 1) * self.d_embed];
                    let e = self.embed(ids[t + j]);
                    for (w, x) in weights.iter().zip(e) {
                        acc += w * x;
                    }
                }
                *cf = acc.max(0.0);
            }
            out.push(c);
        }
        out
    }

    /// Attention weights over conv positions. Positions whose window reaches
    /// into padding are masked out of the softmax; if every position is
    /// masked (the document is shorter than the kernel), attention falls back
    /// to uniform over all positions.
    fn attention_weights(&self, conv: &[Vec<f64>], n_real: usize) -> (Vec<f64>, bool) {
        let positions = conv.len();
        let unmasked = n_real.saturating_sub(self.kernel_width - 1).min(positions);
        if unmasked == 0 {
            return (vec![1.0 / positions as f64; positions], true);
        }
        let scores: Vec<f64> = conv[..unmasked]
            .iter()
            .map(|c| c.iter().zip(&self.attention).map(|(x, a)| x * a).sum())
            .collect();
        let mut weights = softmax(&scores);
        weights.resize(positions, 0.0);
        (weights, false)
    }

    /// Full forward pass on resolved ids. Returns the class distribution and
    /// the attention weights per convolution position.
    pub fn forward_ids(&self, ids: &[usize]) -> Result<(Vec<f64>, Vec<f64>)> {
        self.check_ids(ids)?;
        let (padded, n_real) = self.padded(ids);
        let conv = self.conv(&padded);
        let (weights, _) = self.attention_weights(&conv, n_real);

        let mut pooled = vec![0.0; self.n_filters];
        for (w, c) in weights.iter().zip(&conv) {
            if *w == 0.0 {
                continue;
            }
            for (p, x) in pooled.iter_mut().zip(c) {
                *p += w * x;
            }
        }
        let mut logits = self.b_out.clone();
        for (k, z) in logits.iter_mut().enumerate() {
            let row = &self.w_out[k * self.n_filters..(k + 1) * self.n_filters];
            *z += row.iter().zip(&pooled).map(|(w, x)| w * x).sum::<f64>();
        }
        Ok((softmax(&logits), weights))
    }

    /// Tokenized-text convenience wrapper around [`AttnCnn::forward_ids`].
    pub fn forward_tokens(
        &self,
        seq: &TokenSequence,
        table: &std::collections::HashMap<String, usize>,
        window: usize,
    ) -> Result<(Vec<f64>, Vec<f64>)> {
        let ids = self.resolve_ids(seq, table, window)?;
        self.forward_ids(&ids)
    }

    pub fn predict_ids(&self, ids: &[usize]) -> Result<usize> {
        Ok(argmax(&self.forward_ids(ids)?.0))
    }

    pub fn accuracy(&self, examples: &[(IdSequence, usize)]) -> Result<f64> {
        if examples.is_empty() {
            return Err(Error::validation("examples", "empty evaluation set"));
        }
        let mut correct = 0usize;
        for (ids, y) in examples {
            if self.predict_ids(ids)? == *y {
                correct += 1;
            }
        }
        Ok(correct as f64 / examples.len() as f64)
    }

    fn example_grad(&self, ids: &[usize], label: usize, scale: f64) -> Result<ExampleGrad> {
        self.check_ids(ids)?;
        if label >= self.n_labels {
            return Err(Error::validation(
                "label",
                format!("label {label} out of range for {} classes", self.n_labels),
            ));
        }
        let (padded, n_real) = self.padded(ids);
        let positions = padded.len() + 1 - self.kernel_width;

        // Forward, keeping pre-activations for the ReLU mask.
        let mut pre = Vec::with_capacity(positions);
        for t in 0..positions {
            let mut z = vec![0.0; self.n_filters];
            for (f, zf) in z.iter_mut().enumerate() {
                let mut acc = 0.0;
                for j in 0..self.kernel_width {
                    let weights = &self.filters[(f * self.kernel_width + j) * self.d_embed
                        ..(f * self.kernel_width + j + 1) * self.d_embed];
                    let e = self.embed(padded[t + j]);
                    for (w, x) in weights.iter().zip(e) {
                        acc += w * x;
                    }
                }
                *zf = acc;
            }
            pre.push(z);
        }
        let conv: Vec<Vec<f64>> = pre
            .iter()
            .map(|z| z.iter().map(|v| v.max(0.0)).collect())
            .collect();
        let (weights, uniform_fallback) = self.attention_weights(&conv, n_real);

        let mut pooled = vec![0.0; self.n_filters];
        for (w, c) in weights.iter().zip(&conv) {
            if *w == 0.0 {
                continue;
            }
            for (p, x) in pooled.iter_mut().zip(c) {
                *p += w * x;
            }
        }
        let mut logits = self.b_out.clone();
        for (k, z) in logits.iter_mut().enumerate() {
            let row = &self.w_out[k * self.n_filters..(k + 1) * self.n_filters];
            *z += row.iter().zip(&pooled).map(|(w, x)| w * x).sum::<f64>();
        }
        let loss = scale * (log_sum_exp(&logits) - logits[label]);

        // Backward.
        let mut du = softmax(&logits);
        du[label] -= 1.0;
        for d in &mut du {
            *d *= scale;
        }

        let mut g_w_out = vec![0.0; self.w_out.len()];
        let mut g_b_out = vec![0.0; self.b_out.len()];
        let mut d_pooled = vec![0.0; self.n_filters];
        for (k, dk) in du.iter().enumerate() {
            g_b_out[k] = *dk;
            let row = &mut g_w_out[k * self.n_filters..(k + 1) * self.n_filters];
            for (f, g) in row.iter_mut().enumerate() {
                *g = dk * pooled[f];
            }
            let w_row = &self.w_out[k * self.n_filters..(k + 1) * self.n_filters];
            for (dp, w) in d_pooled.iter_mut().zip(w_row) {
                *dp += dk * w;
            }
        }

        // Positions that actually pooled (weights can be zero only for masked
        // positions or exact zeros in the fallback, which contribute nothing).
        let mut d_conv: Vec<Vec<f64>> = vec![vec![0.0; self.n_filters]; positions];
        let mut d_scores = vec![0.0; positions];
        for (t, w) in weights.iter().enumerate() {
            if *w == 0.0 {
                continue;
            }
            let dw: f64 = d_pooled.iter().zip(&conv[t]).map(|(dp, c)| dp * c).sum();
            d_scores[t] = dw;
            for (dc, dp) in d_conv[t].iter_mut().zip(&d_pooled) {
                *dc = w * dp;
            }
        }

        let mut g_attention = vec![0.0; self.n_filters];
        if !uniform_fallback {
            // Softmax backward over the unmasked positions; in the fallback
            // the weights are constants and no gradient flows to the scores.
            let mean: f64 = weights
                .iter()
                .zip(&d_scores)
                .map(|(w, ds)| w * ds)
                .sum();
            for (t, w) in weights.iter().enumerate() {
                if *w == 0.0 {
                    continue;
                }
                let ds = w * (d_scores[t] - mean);
                for (ga, c) in g_attention.iter_mut().zip(&conv[t]) {
                    *ga += ds * c;
                }
                for (dc, a) in d_conv[t].iter_mut().zip(&self.attention) {
                    *dc += ds * a;
                }
            }
        }

        let mut g_filters = vec![0.0; self.filters.len()];
        let mut g_embed: std::collections::HashMap<usize, Vec<f64>> =
            std::collections::HashMap::new();
        for t in 0..positions {
            for f in 0..self.n_filters {
                let mut dz = d_conv[t][f];
                if pre[t][f] <= 0.0 {
                    dz = 0.0;
                }
                if dz == 0.0 {
                    continue;
                }
                for j in 0..self.kernel_width {
                    let base = (f * self.kernel_width + j) * self.d_embed;
                    let e = self.embed(padded[t + j]);
                    for m in 0..self.d_embed {
                        g_filters[base + m] += dz * e[m];
                    }
                    let slot = g_embed
                        .entry(padded[t + j])
                        .or_insert_with(|| vec![0.0; self.d_embed]);
                    let weights = &self.filters[base..base + self.d_embed];
                    for (s, w) in slot.iter_mut().zip(weights) {
                        *s += dz * w;
                    }
                }
            }
        }
        let mut embedding: Vec<(usize, Vec<f64>)> = g_embed.into_iter().collect();
        embedding.sort_by_key(|(id, _)| *id);

        Ok(ExampleGrad {
            loss,
            filters: g_filters,
            attention: g_attention,
            w_out: g_w_out,
            b_out: g_b_out,
            embedding,
        })
    }

    /// Mean cross-entropy over the batch plus an L2 penalty on all weights
    /// (embedding, filters, attention, output layer; not the output bias),
    /// with exact analytic gradients. Per-example work runs in parallel;
    /// accumulation order is fixed by batch index, so results are
    /// deterministic.
    pub fn loss_and_grad(
        &self,
        batch: &[(IdSequence, usize)],
        l2: f64,
    ) -> Result<(f64, CnnGrads)> {
        if batch.is_empty() {
            return Err(Error::validation("batch", "empty batch"));
        }
        let scale = 1.0 / batch.len() as f64;
        let partials: Vec<ExampleGrad> = batch
            .par_iter()
            .map(|(ids, y)| self.example_grad(ids, *y, scale))
            .collect::<Result<Vec<_>>>()?;

        let mut grads = CnnGrads {
            embedding: vec![0.0; self.embedding.len()],
            filters: vec![0.0; self.filters.len()],
            attention: vec![0.0; self.attention.len()],
            w_out: vec![0.0; self.w_out.len()],
            b_out: vec![0.0; self.b_out.len()],
        };
        let mut loss = 0.0;
        for p in &partials {
            loss += p.loss;
            for (g, d) in grads.filters.iter_mut().zip(&p.filters) {
                *g += d;
            }
            for (g, d) in grads.attention.iter_mut().zip(&p.attention) {
                *g += d;
            }
            for (g, d) in grads.w_out.iter_mut().zip(&p.w_out) {
                *g += d;
            }
            for (g, d) in grads.b_out.iter_mut().zip(&p.b_out) {
                *g += d;
            }
            for (id, d) in &p.embedding {
                let slot = &mut grads.embedding[id * self.d_embed..(id + 1) * self.d_embed];
                for (g, v) in slot.iter_mut().zip(d) {
                    *g += v;
                }
            }
        }

        if l2 > 0.0 {
            let mut penalty = 0.0;
            for (g, w) in grads.embedding.iter_mut().zip(&self.embedding) {
                penalty += w * w;
                *g += l2 * w;
            }
            for (g, w) in grads.filters.iter_mut().zip(&self.filters) {
                penalty += w * w;
                *g += l2 * w;
            }
            for (g, w) in grads.attention.iter_mut().zip(&self.attention) {
                penalty += w * w;
                *g += l2 * w;
            }
            for (g, w) in grads.w_out.iter_mut().zip(&self.w_out) {
                penalty += w * w;
                *g += l2 * w;
            }
            loss += 0.5 * l2 * penalty;
        }
        Ok((loss, grads))
    }

    fn sgd_step(&mut self, grads: &CnnGrads, lr: f64) {
        for (w, g) in self.embedding.iter_mut().zip(&grads.embedding) {
            *w -= lr * g;
        }
        for (w, g) in self.filters.iter_mut().zip(&grads.filters) {
            *w -= lr * g;
        }
        for (w, g) in self.attention.iter_mut().zip(&grads.attention) {
            *w -= lr * g;
        }
        for (w, g) in self.w_out.iter_mut().zip(&grads.w_out) {
            *w -= lr * g;
        }
        for (w, g) in self.b_out.iter_mut().zip(&grads.b_out) {
            *w -= lr * g;
        }
    }

    /// Same training contract as the bag-of-words branch: seeded-shuffle
    /// mini-batch gradient descent, best-validation-accuracy snapshot,
    /// divergence reported as an error naming the epoch.
    pub fn train(
        &self,
        train: &[(IdSequence, usize)],
        val: &[(IdSequence, usize)],
        config: &TrainConfig,
    ) -> Result<(AttnCnn, TrainHistory)> {
        config.validate()?;
        if train.is_empty() || val.is_empty() {
            return Err(Error::validation("dataset", "train and validation sets must be non-empty"));
        }

        let mut net = self.clone();
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut indices: Vec<usize> = (0..train.len()).collect();
        let mut history = Vec::with_capacity(config.epochs);
        let mut best: Option<(f64, AttnCnn)> = None;

        for epoch in 0..config.epochs {
            use rand::seq::SliceRandom;
            indices.shuffle(&mut rng);

            let mut epoch_loss = 0.0;
            for chunk in indices.chunks(config.batch_size) {
                let batch: Vec<(IdSequence, usize)> =
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
        self.embedding.len()
            + self.filters.len()
            + self.attention.len()
            + self.w_out.len()
            + self.b_out.len()
    }

    fn param_mut(&mut self, i: usize) -> &mut f64 {
        let mut i = i;
        for arr in [
            &mut self.embedding,
            &mut self.filters,
            &mut self.attention,
            &mut self.w_out,
            &mut self.b_out,
        ] {
            if i < arr.len() {
                return &mut arr[i];
            }
            i -= arr.len();
        }
        unreachable!("parameter index out of range")
    }

    fn grad_at(grads: &CnnGrads, i: usize) -> f64 {
        let mut i = i;
        for arr in [
            &grads.embedding,
            &grads.filters,
            &grads.attention,
            &grads.w_out,
            &grads.b_out,
        ] {
            if i < arr.len() {
                return arr[i];
            }
            i -= arr.len();
        }
        unreachable!("gradient index out of range")
    }

    /// Central-finite-difference verification of every gradient entry.
    pub fn gradient_check(
        &self,
        batch: &[(IdSequence, usize)],
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

//! Shapley-value attribution of tokens to a prediction, rendered as an
//! overlay on the source text.
//!
//! The characteristic function is deletion-based: `v(S)` is the predicted
//! probability of the target label when the document is rebuilt from only the
//! tokens in `S` (original order, everything else removed) and re-classified.
//! Attribution operates on the truncated context window; tokens beyond it
//! cannot affect the decision.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::corpus::{Document, Label};
use crate::ensemble::ModelBundle;
use crate::error::{Error, Result};
use crate::featurize::{tokenize, truncate, TokenSequence};

/// Exact enumeration is capped at `2^15` subset evaluations.
pub const EXACT_TOKEN_LIMIT: usize = 15;

/// Per-token Shapley values for one prediction.
#[derive(Debug, Clone, PartialEq)]
pub struct Attribution {
    /// Byte spans of the attributed (window-truncated) tokens in the source.
    pub token_spans: Vec<(usize, usize)>,
    /// One Shapley value per span: probability contribution to the target.
    pub values: Vec<f64>,
    /// Per-token standard errors (sampled estimator only).
    pub std_errors: Option<Vec<f64>>,
    pub target_label: Label,
    /// `v(empty set)`.
    pub baseline_value: f64,
    /// `v(full token set)`.
    pub full_value: f64,
}

impl Attribution {
    /// `sum(values) - (full - baseline)`, which the efficiency axiom pins to
    /// zero for the exact method.
    pub fn efficiency_gap(&self) -> f64 {
        self.values.iter().sum::<f64>() - (self.full_value - self.baseline_value)
    }
}

/// The window-truncated token sequence a document is attributed over.
pub fn attribution_window(bundle: &ModelBundle, doc: &Document) -> Result<TokenSequence> {
    truncate(&tokenize(&doc.text), bundle.window)
}

fn subsequence(seq: &TokenSequence, keep: impl Iterator<Item = usize>) -> TokenSequence {
    let mut tokens = Vec::new();
    let mut spans = Vec::new();
    for i in keep {
        tokens.push(seq.tokens[i].clone());
        spans.push(seq.spans[i]);
    }
    TokenSequence { tokens, spans }
}

/// `v(S)`: the target-label probability after deleting every token outside
/// `subset` from the (truncated) document and re-classifying.
pub fn value_function(
    bundle: &ModelBundle,
    doc: &Document,
    subset: &[usize],
    target: usize,
) -> Result<f64> {
    let seq = attribution_window(bundle, doc)?;
    let mut sorted = subset.to_vec();
    sorted.sort_unstable();
    sorted.dedup();
    if let Some(&bad) = sorted.iter().find(|&&i| i >= seq.len()) {
        return Err(Error::validation(
            "subset",
            format!("token index {bad} out of range for {} window tokens", seq.len()),
        ));
    }
    let sub = subsequence(&seq, sorted.into_iter());
    bundle.target_probability(&sub, target)
}

/// Exact Shapley values of a characteristic function given as a closure over
/// subset bitmasks. Exposed so the estimators can be verified against stub
/// value functions with known attributions.
pub fn exact_from_value_fn(
    m: usize,
    mut v: impl FnMut(u32) -> Result<f64>,
) -> Result<(Vec<f64>, f64, f64)> {
    if m > EXACT_TOKEN_LIMIT {
        return Err(Error::TooManyTokens {
            count: m,
            max: EXACT_TOKEN_LIMIT,
        });
    }
    let full: u32 = if m == 32 { u32::MAX } else { (1u32 << m) - 1 };
    let mut table = vec![0.0f64; 1usize << m];
    for (mask, slot) in table.iter_mut().enumerate() {
        *slot = v(mask as u32)?;
    }

    // weight[s] = s! (m-1-s)! / m!
    let mut weights = vec![0.0f64; m.max(1)];
    let factorial = |n: usize| -> f64 { (1..=n).map(|k| k as f64).product() };
    for (s, w) in weights.iter_mut().enumerate() {
        *w = factorial(s) * factorial(m - 1 - s) / factorial(m);
    }

    let mut values = vec![0.0f64; m];
    for (i, phi) in values.iter_mut().enumerate() {
        let bit = 1u32 << i;
        for mask in 0..table.len() as u32 {
            if mask & bit != 0 {
                continue;
            }
            let s = mask.count_ones() as usize;
            *phi += weights[s] * (table[(mask | bit) as usize] - table[mask as usize]);
        }
    }
    Ok((values, table[0], table[full as usize]))
}

/// Permutation-sampling Shapley estimator over a closure taking kept-index
/// subsets. Returns `(means, standard errors, baseline, full)`.
pub fn sampled_from_value_fn(
    m: usize,
    mut v: impl FnMut(&[usize]) -> Result<f64>,
    n_permutations: usize,
    seed: u64,
) -> Result<(Vec<f64>, Vec<f64>, f64, f64)> {
    if n_permutations == 0 {
        return Err(Error::validation("n_permutations", "must be at least 1"));
    }
    let baseline = v(&[])?;
    let all: Vec<usize> = (0..m).collect();
    let full = v(&all)?;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut sums = vec![0.0f64; m];
    let mut sq_sums = vec![0.0f64; m];
    let mut order: Vec<usize> = (0..m).collect();
    let mut kept: Vec<usize> = Vec::with_capacity(m);

    for _ in 0..n_permutations {
        order.shuffle(&mut rng);
        kept.clear();
        let mut prev = baseline;
        for &i in &order {
            // Keep the subset sorted so the rebuilt document preserves the
            // original token order.
            let pos = kept.partition_point(|&j| j < i);
            kept.insert(pos, i);
            let value = v(&kept)?;
            let marginal = value - prev;
            sums[i] += marginal;
            sq_sums[i] += marginal * marginal;
            prev = value;
        }
    }

    let n = n_permutations as f64;
    let means: Vec<f64> = sums.iter().map(|s| s / n).collect();
    let std_errors: Vec<f64> = sums
        .iter()
        .zip(&sq_sums)
        .map(|(s, sq)| {
            if n_permutations < 2 {
                0.0
            } else {
                let var = ((sq - s * s / n) / (n - 1.0)).max(0.0);
                (var / n).sqrt()
            }
        })
        .collect();
    Ok((means, std_errors, baseline, full))
}

fn target_label(bundle: &ModelBundle, target: usize) -> Result<Label> {
    Label::from_task_index(bundle.task, target).ok_or_else(|| {
        Error::validation(
            "target",
            format!(
                "label index {target} out of range for {} classes",
                bundle.task.n_labels()
            ),
        )
    })
}

/// Exact Shapley attribution by full subset enumeration (window must hold at
/// most [`EXACT_TOKEN_LIMIT`] tokens).
pub fn shapley_exact(bundle: &ModelBundle, doc: &Document, target: usize) -> Result<Attribution> {
    let label = target_label(bundle, target)?;
    let seq = attribution_window(bundle, doc)?;
    let m = seq.len();
    if m > EXACT_TOKEN_LIMIT {
        return Err(Error::TooManyTokens {
            count: m,
            max: EXACT_TOKEN_LIMIT,
        });
    }
    let (values, baseline, full) = exact_from_value_fn(m, |mask| {
        let sub = subsequence(&seq, (0..m).filter(|i| mask & (1 << i) != 0));
        bundle.target_probability(&sub, target)
    })?;
    Ok(Attribution {
        token_spans: seq.spans.clone(),
        values,
        std_errors: None,
        target_label: label,
        baseline_value: baseline,
        full_value: full,
    })
}

/// Permutation-sampling Shapley attribution; deterministic for a fixed seed.
pub fn shapley_sampled(
    bundle: &ModelBundle,
    doc: &Document,
    target: usize,
    n_permutations: usize,
    seed: u64,
) -> Result<Attribution> {
    let label = target_label(bundle, target)?;
    let seq = attribution_window(bundle, doc)?;
    let m = seq.len();
    let (values, std_errors, baseline, full) = sampled_from_value_fn(
        m,
        |kept| {
            let sub = subsequence(&seq, kept.iter().copied());
            bundle.target_probability(&sub, target)
        },
        n_permutations,
        seed,
    )?;
    Ok(Attribution {
        token_spans: seq.spans.clone(),
        values,
        std_errors: Some(std_errors),
        target_label: label,
        baseline_value: baseline,
        full_value: full,
    })
}

/// Output format for [`render_overlay`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OverlayFormat {
    Ansi,
    Html,
}

fn html_escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Renders the source text with each attributed span wrapped in an intensity
/// marker proportional to `|value| / max |value|`; positive contributions are
/// green, negative red. Text outside the markers is emitted byte-for-byte.
pub fn render_overlay(
    doc: &Document,
    attribution: &Attribution,
    format: OverlayFormat,
) -> Result<String> {
    let text = &doc.text;
    let mut prev_end = 0usize;
    for &(start, end) in &attribution.token_spans {
        if start < prev_end {
            return Err(Error::validation(
                "token_spans",
                format!("span ({start}, {end}) overlaps the previous span"),
            ));
        }
        if end > text.len() || start > end {
            return Err(Error::validation(
                "token_spans",
                format!("span ({start}, {end}) outside the document text"),
            ));
        }
        prev_end = end;
    }
    if attribution.token_spans.len() != attribution.values.len() {
        return Err(Error::validation(
            "attribution",
            "span and value counts differ",
        ));
    }

    let max_abs = attribution
        .values
        .iter()
        .fold(0.0f64, |acc, v| acc.max(v.abs()));

    let mut out = String::with_capacity(text.len() * 2);
    let mut cursor = 0usize;
    match format {
        OverlayFormat::Ansi => {
            for (&(start, end), &phi) in attribution.token_spans.iter().zip(&attribution.values) {
                out.push_str(&text[cursor..start]);
                let intensity = if max_abs > 0.0 { phi.abs() / max_abs } else { 0.0 };
                let k = (200.0 * intensity).round() as u8;
                let (r, g, b) = if phi >= 0.0 {
                    (255 - k, 255, 255 - k)
                } else {
                    (255, 255 - k, 255 - k)
                };
                out.push_str(&format!("\x1b[48;2;{r};{g};{b}m\x1b[30m"));
                out.push_str(&text[start..end]);
                out.push_str("\x1b[0m");
                cursor = end;
            }
            out.push_str(&text[cursor..]);
        }
        OverlayFormat::Html => {
            out.push_str(
                "<!DOCTYPE html>\n<html>\n<head>\n<meta charset=\"utf-8\">\n<title>token attribution</title>\n</head>\n<body>\n<pre style=\"white-space: pre-wrap; font-size: 14px;\">",
            );
            for (&(start, end), &phi) in attribution.token_spans.iter().zip(&attribution.values) {
                out.push_str(&html_escape(&text[cursor..start]));
                let intensity = if max_abs > 0.0 { phi.abs() / max_abs } else { 0.0 };
                let color = if phi >= 0.0 { "46,160,67" } else { "248,81,73" };
                out.push_str(&format!(
                    "<span style=\"background-color: rgba({color},{intensity:.3})\" title=\"{phi:+.6}\">"
                ));
                out.push_str(&html_escape(&text[start..end]));
                out.push_str("</span>");
                cursor = end;
            }
            out.push_str(&html_escape(&text[cursor..]));
            out.push_str("</pre>\n</body>\n</html>\n");
        }
    }
    Ok(out)
}

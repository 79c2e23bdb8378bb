//! Chat-completion classification: prompt construction, response validation
//! against the closed taxonomy, an HTTP client with bounded parallelism and
//! retry, and the fine-tuning file builder.
//!
//! The wire format is OpenAI-compatible (`POST {base_url}/v1/chat/completions`
//! with `{"model", "messages", "temperature": 0}`), so the client talks to
//! any compatible endpoint, including the scriptable [`mock`] server used in
//! tests. The API key travels only in the `Authorization` header and is read
//! from the `LEXSORT_API_KEY` environment variable.

pub mod mock;

use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::time::{Duration, Instant};

use futures::StreamExt;
use serde::{Deserialize, Serialize};

use crate::corpus::{BinaryLabel, Dataset, Document, Label, Subclass, Task};
use crate::error::{Error, Result};
use crate::featurize::truncate_text;

/// Environment variable holding the API key.
pub const API_KEY_ENV: &str = "LEXSORT_API_KEY";

/// Verbatim system prompt for the binary task.
pub const BINARY_PROMPT: &str =
    "Classify documents as either 'Oil and Gas Document' or 'Other' based on text entered.";

/// Verbatim system prompt for the multi-class task.
pub const MULTICLASS_PROMPT: &str = "Classify documents as one of the following: 'Affidavits of Non-Production', 'Affidavits of Production', 'Assignment of Oil and Gas Lease', 'Correction Documents', 'Extension', 'Memorandum of Lease', 'Oil and Gas Lease', 'Releases', 'Top Lease'.";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: Role,
    pub content: String,
}

impl ChatMessage {
    pub fn system(content: impl Into<String>) -> Self {
        ChatMessage {
            role: Role::System,
            content: content.into(),
        }
    }

    pub fn user(content: impl Into<String>) -> Self {
        ChatMessage {
            role: Role::User,
            content: content.into(),
        }
    }

    pub fn assistant(content: impl Into<String>) -> Self {
        ChatMessage {
            role: Role::Assistant,
            content: content.into(),
        }
    }
}

/// System prompt plus the document text truncated to `window` tokens.
pub fn build_prompt(task: Task, text: &str, window: usize) -> Vec<ChatMessage> {
    let system = match task {
        Task::Binary => BINARY_PROMPT,
        Task::MultiClass => MULTICLASS_PROMPT,
    };
    vec![
        ChatMessage::system(system),
        ChatMessage::user(truncate_text(text, window)),
    ]
}

/// Why a response failed validation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InvalidReason {
    /// The response names a label outside the closed taxonomy
    /// (a hallucination, in this task's terms).
    OutOfTaxonomy,
    Empty,
    TransportError,
}

/// A validated response: a taxonomy label or a reason it was rejected.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParsedLabel {
    Valid(Label),
    Invalid(InvalidReason),
}

impl ParsedLabel {
    pub fn valid(&self) -> Option<Label> {
        match self {
            ParsedLabel::Valid(label) => Some(*label),
            ParsedLabel::Invalid(_) => None,
        }
    }
}

fn strip_quotes(s: &str) -> &str {
    s.trim()
        .trim_matches(|c| matches!(c, '"' | '\'' | '\u{2018}' | '\u{2019}' | '\u{201c}' | '\u{201d}'))
        .trim()
}

/// Total validation of a raw model response against the task's closed label
/// set: trims whitespace and quotes, matches case-insensitively, and accepts
/// the singular/plural naming variants the prompts themselves use. Never
/// fails; anything unrecognized becomes [`InvalidReason::OutOfTaxonomy`].
pub fn parse_label(raw: &str, task: Task) -> ParsedLabel {
    let cleaned = strip_quotes(raw);
    if cleaned.is_empty() {
        return ParsedLabel::Invalid(InvalidReason::Empty);
    }
    let lower = cleaned.to_lowercase();
    let label = match task {
        Task::Binary => match lower.as_str() {
            "oil and gas document" | "oil and gas documents" => {
                Some(Label::OilAndGas(None))
            }
            "other" => Some(Label::Other),
            _ => None,
        },
        Task::MultiClass => {
            let subclass = match lower.as_str() {
                "affidavit of non-production" | "affidavits of non-production" => {
                    Some(Subclass::AffidavitOfNonProduction)
                }
                "affidavit of production" | "affidavits of production" => {
                    Some(Subclass::AffidavitOfProduction)
                }
                "assignment of oil and gas lease" => Some(Subclass::AssignmentOfOilAndGasLease),
                "correction" | "correction documents" => Some(Subclass::Correction),
                "extension" => Some(Subclass::Extension),
                "memorandum of lease" => Some(Subclass::MemorandumOfLease),
                "oil and gas lease" => Some(Subclass::OilAndGasLease),
                "release" | "releases" => Some(Subclass::Release),
                "top lease" => Some(Subclass::TopLease),
                _ => None,
            };
            subclass.map(Label::oil_and_gas)
        }
    };
    match label {
        Some(l) => ParsedLabel::Valid(l),
        None => ParsedLabel::Invalid(InvalidReason::OutOfTaxonomy),
    }
}

/// Strict variant: the raw string must equal a canonical label name exactly.
pub fn parse_label_strict(raw: &str, task: Task) -> ParsedLabel {
    if raw.is_empty() {
        return ParsedLabel::Invalid(InvalidReason::Empty);
    }
    let label = match task {
        Task::Binary => match raw {
            s if s == BinaryLabel::OilAndGas.as_str() => Some(Label::OilAndGas(None)),
            s if s == BinaryLabel::Other.as_str() => Some(Label::Other),
            _ => None,
        },
        Task::MultiClass => Subclass::from_canonical(raw).map(Label::oil_and_gas),
    };
    match label {
        Some(l) => ParsedLabel::Valid(l),
        None => ParsedLabel::Invalid(InvalidReason::OutOfTaxonomy),
    }
}

/// Endpoint, model, and client policy for remote classification.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LlmConfig {
    pub base_url: String,
    pub model_name: String,
    /// Sent only as `Authorization: Bearer <key>`; never serialized.
    #[serde(skip)]
    pub api_key: Option<String>,
    pub max_parallel: usize,
    pub timeout: Duration,
    pub max_attempts: usize,
    pub backoff_base: Duration,
    /// Truncate document text to this many tokens before prompting.
    pub window: usize,
    /// Use exact canonical matching instead of the lenient parser.
    pub strict_parse: bool,
}

impl LlmConfig {
    /// Reads the API key from [`API_KEY_ENV`] if present.
    pub fn new(base_url: impl Into<String>, model_name: impl Into<String>) -> Self {
        LlmConfig {
            base_url: base_url.into(),
            model_name: model_name.into(),
            api_key: std::env::var(API_KEY_ENV).ok(),
            max_parallel: 4,
            timeout: Duration::from_secs(30),
            max_attempts: 3,
            backoff_base: Duration::from_millis(250),
            window: 800,
            strict_parse: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.max_parallel == 0 {
            return Err(Error::validation("max_parallel", "must be at least 1"));
        }
        if self.max_attempts == 0 {
            return Err(Error::validation("max_attempts", "must be at least 1"));
        }
        if self.window == 0 {
            return Err(Error::validation("window", "must be at least 1"));
        }
        if reqwest::Url::parse(&self.base_url).is_err() {
            return Err(Error::validation(
                "base_url",
                format!("{:?} is not a valid URL", self.base_url),
            ));
        }
        Ok(())
    }

    fn completions_url(&self) -> String {
        format!("{}/v1/chat/completions", self.base_url.trim_end_matches('/'))
    }
}

/// One document's classification outcome. Per-document failures never raise;
/// they surface as [`InvalidReason::TransportError`] outcomes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LlmOutcome {
    pub doc_id: String,
    pub raw_response: String,
    pub parsed: ParsedLabel,
    pub latency: Duration,
    pub attempts: u32,
}

#[derive(Serialize)]
struct CompletionRequest<'a> {
    model: &'a str,
    messages: &'a [ChatMessage],
    temperature: f64,
}

#[derive(Deserialize)]
struct CompletionResponse {
    choices: Vec<CompletionChoice>,
}

#[derive(Deserialize)]
struct CompletionChoice {
    message: CompletionMessage,
}

#[derive(Deserialize)]
struct CompletionMessage {
    content: Option<String>,
}

enum AttemptOutcome {
    Content(String),
    Retry(String),
    Fail(String),
}

async fn attempt_request(
    client: &reqwest::Client,
    config: &LlmConfig,
    messages: &[ChatMessage],
) -> AttemptOutcome {
    let request = CompletionRequest {
        model: &config.model_name,
        messages,
        temperature: 0.0,
    };
    let mut builder = client.post(config.completions_url()).json(&request);
    if let Some(key) = &config.api_key {
        builder = builder.bearer_auth(key);
    }
    let response = match builder.send().await {
        Ok(r) => r,
        Err(e) => return AttemptOutcome::Retry(format!("transport failure: {e}")),
    };
    let status = response.status();
    if status.is_server_error() || status.as_u16() == 429 {
        return AttemptOutcome::Retry(format!("server returned {status}"));
    }
    if !status.is_success() {
        return AttemptOutcome::Fail(format!("server returned {status}"));
    }
    match response.json::<CompletionResponse>().await {
        Ok(body) => match body.choices.into_iter().next().and_then(|c| c.message.content) {
            Some(content) => AttemptOutcome::Content(content),
            None => AttemptOutcome::Content(String::new()),
        },
        Err(e) => AttemptOutcome::Fail(format!("unparseable response body: {e}")),
    }
}

async fn classify_one(
    client: &reqwest::Client,
    config: &LlmConfig,
    doc: &Document,
    task: Task,
) -> LlmOutcome {
    let messages = build_prompt(task, &doc.text, config.window);
    let started = Instant::now();
    let mut attempts = 0u32;
    let mut last_error = String::new();

    while attempts < config.max_attempts as u32 {
        attempts += 1;
        match attempt_request(client, config, &messages).await {
            AttemptOutcome::Content(content) => {
                let parsed = if content.trim().is_empty() {
                    ParsedLabel::Invalid(InvalidReason::Empty)
                } else if config.strict_parse {
                    parse_label_strict(&content, task)
                } else {
                    parse_label(&content, task)
                };
                return LlmOutcome {
                    doc_id: doc.id.clone(),
                    raw_response: content,
                    parsed,
                    latency: started.elapsed(),
                    attempts,
                };
            }
            AttemptOutcome::Retry(message) => {
                last_error = message;
                if attempts < config.max_attempts as u32 {
                    let backoff = config.backoff_base * 2u32.saturating_pow(attempts - 1);
                    tokio::time::sleep(backoff).await;
                }
            }
            AttemptOutcome::Fail(message) => {
                last_error = message;
                break;
            }
        }
    }
    LlmOutcome {
        doc_id: doc.id.clone(),
        raw_response: last_error,
        parsed: ParsedLabel::Invalid(InvalidReason::TransportError),
        latency: started.elapsed(),
        attempts,
    }
}

/// Classifies every document through the configured endpoint with at most
/// `max_parallel` requests in flight. Outcomes are returned in input order.
pub async fn classify_remote_async(
    config: &LlmConfig,
    docs: &[Document],
    task: Task,
) -> Result<Vec<LlmOutcome>> {
    config.validate()?;
    let client = reqwest::Client::builder()
        .timeout(config.timeout)
        .build()
        .map_err(|e| Error::Config(format!("http client: {e}")))?;
    let outcomes = futures::stream::iter(docs.iter())
        .map(|doc| classify_one(&client, config, doc, task))
        .buffered(config.max_parallel)
        .collect::<Vec<_>>()
        .await;
    Ok(outcomes)
}

/// Blocking wrapper around [`classify_remote_async`].
pub fn classify_remote(config: &LlmConfig, docs: &[Document], task: Task) -> Result<Vec<LlmOutcome>> {
    config.validate()?;
    let runtime = tokio::runtime::Builder::new_current_thread()
        .enable_all()
        .build()
        .map_err(|e| Error::Config(format!("async runtime: {e}")))?;
    runtime.block_on(classify_remote_async(config, docs, task))
}

#[derive(Serialize, Deserialize)]
struct FineTuneRecord {
    messages: Vec<ChatMessage>,
}

/// Writes one chat-format record per document: the task's system prompt, the
/// truncated document text, and the observed label string as the assistant
/// turn. For the multi-class task every document must carry a subclass.
/// Returns the number of records written.
pub fn build_finetune_file(
    dataset: &Dataset,
    task: Task,
    window: usize,
    path: impl AsRef<Path>,
) -> Result<usize> {
    let path = path.as_ref();
    if window == 0 {
        return Err(Error::validation("window", "must be at least 1"));
    }
    let file = std::fs::File::create(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    let mut writer = BufWriter::new(file);
    let mut count = 0usize;
    for doc in &dataset.documents {
        let label = doc.observed_label.task_str(task).ok_or_else(|| {
            Error::validation(
                "dataset",
                format!(
                    "document {:?} has no subclass label; filter the dataset before building a multi-class fine-tune file",
                    doc.id
                ),
            )
        })?;
        let mut messages = build_prompt(task, &doc.text, window);
        messages.push(ChatMessage::assistant(label));
        serde_json::to_writer(&mut writer, &FineTuneRecord { messages })?;
        writer
            .write_all(b"\n")
            .map_err(|e| Error::io(path.display().to_string(), e))?;
        count += 1;
    }
    writer
        .flush()
        .map_err(|e| Error::io(path.display().to_string(), e))?;
    Ok(count)
}

/// Reads a fine-tune file back to `(document text, label string)` pairs.
pub fn read_finetune_file(path: impl AsRef<Path>) -> Result<Vec<(String, String)>> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    let reader = BufReader::new(file);
    let mut pairs = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let line = line.map_err(|e| Error::io(path.display().to_string(), e))?;
        if line.trim().is_empty() {
            continue;
        }
        let record: FineTuneRecord = serde_json::from_str(&line).map_err(|e| Error::JsonlLine {
            line: line_no,
            message: e.to_string(),
        })?;
        let roles: Vec<Role> = record.messages.iter().map(|m| m.role).collect();
        if roles != [Role::System, Role::User, Role::Assistant] {
            return Err(Error::JsonlLine {
                line: line_no,
                message: format!("expected [system, user, assistant] messages, got {roles:?}"),
            });
        }
        pairs.push((
            record.messages[1].content.clone(),
            record.messages[2].content.clone(),
        ));
    }
    Ok(pairs)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn binary_prompt_is_verbatim() {
        let messages = build_prompt(Task::Binary, "some text", 10);
        assert_eq!(
            messages[0].content,
            "Classify documents as either 'Oil and Gas Document' or 'Other' based on text entered."
        );
        assert_eq!(messages[0].role, Role::System);
        assert_eq!(messages[1].content, "some text");
    }

    #[test]
    fn multiclass_prompt_lists_all_nine_categories_in_order() {
        let messages = build_prompt(Task::MultiClass, "text", 10);
        let system = &messages[0].content;
        let names = [
            "Affidavits of Non-Production",
            "Affidavits of Production",
            "Assignment of Oil and Gas Lease",
            "Correction Documents",
            "Extension",
            "Memorandum of Lease",
            "Oil and Gas Lease",
            "Releases",
            "Top Lease",
        ];
        let mut last = 0;
        for name in names {
            let pos = system[last..]
                .find(name)
                .unwrap_or_else(|| panic!("{name:?} missing or out of order"));
            last += pos + name.len();
        }
    }

    #[test]
    fn empty_text_still_builds_a_well_formed_prompt() {
        let messages = build_prompt(Task::Binary, "", 10);
        assert_eq!(messages.len(), 2);
        assert_eq!(messages[1].content, "");
        assert!(!messages[0].content.is_empty());
    }

    #[test]
    fn prompt_truncates_the_user_text_to_the_window() {
        let text = "one two three four five";
        let messages = build_prompt(Task::Binary, text, 3);
        assert_eq!(messages[1].content, "one two three");
    }

    #[test]
    fn parse_label_exact_and_variants() {
        assert_eq!(
            parse_label("Oil and Gas Lease", Task::MultiClass),
            ParsedLabel::Valid(Label::oil_and_gas(Subclass::OilAndGasLease))
        );
        assert_eq!(
            parse_label("  releases ", Task::MultiClass),
            ParsedLabel::Valid(Label::oil_and_gas(Subclass::Release))
        );
        assert_eq!(
            parse_label("'Correction Documents'", Task::MultiClass),
            ParsedLabel::Valid(Label::oil_and_gas(Subclass::Correction))
        );
        assert_eq!(
            parse_label("AFFIDAVITS OF NON-PRODUCTION", Task::MultiClass),
            ParsedLabel::Valid(Label::oil_and_gas(Subclass::AffidavitOfNonProduction))
        );
        assert_eq!(
            parse_label("Other", Task::Binary),
            ParsedLabel::Valid(Label::Other)
        );
        assert_eq!(
            parse_label("\"Oil and Gas Documents\"", Task::Binary),
            ParsedLabel::Valid(Label::OilAndGas(None))
        );
    }

    #[test]
    fn hallucinated_label_is_out_of_taxonomy() {
        assert_eq!(
            parse_label("Subordination of Oil and Gas Lease", Task::MultiClass),
            ParsedLabel::Invalid(InvalidReason::OutOfTaxonomy)
        );
        // A binary answer is not a valid nine-way answer and vice versa.
        assert_eq!(
            parse_label("Other", Task::MultiClass),
            ParsedLabel::Invalid(InvalidReason::OutOfTaxonomy)
        );
        assert_eq!(
            parse_label("Release", Task::Binary),
            ParsedLabel::Invalid(InvalidReason::OutOfTaxonomy)
        );
    }

    #[test]
    fn empty_responses_are_invalid_empty() {
        assert_eq!(parse_label("", Task::Binary), ParsedLabel::Invalid(InvalidReason::Empty));
        assert_eq!(
            parse_label("  \"\" ", Task::MultiClass),
            ParsedLabel::Invalid(InvalidReason::Empty)
        );
    }

    #[test]
    fn strict_mode_requires_canonical_names() {
        assert_eq!(
            parse_label_strict("Release", Task::MultiClass),
            ParsedLabel::Valid(Label::oil_and_gas(Subclass::Release))
        );
        assert_eq!(
            parse_label_strict("Releases", Task::MultiClass),
            ParsedLabel::Invalid(InvalidReason::OutOfTaxonomy)
        );
        assert_eq!(
            parse_label_strict(" Release", Task::MultiClass),
            ParsedLabel::Invalid(InvalidReason::OutOfTaxonomy)
        );
    }

    #[test]
    fn parse_label_is_total_on_arbitrary_junk() {
        for raw in ["{}", "null", "\u{1F6A7}", "a]b[c", "   '   ", "release z"] {
            let _ = parse_label(raw, Task::Binary);
            let _ = parse_label(raw, Task::MultiClass);
        }
    }

    #[test]
    fn config_validation() {
        let mut config = LlmConfig::new("http://127.0.0.1:1", "test-model");
        assert!(config.validate().is_ok());
        config.max_parallel = 0;
        assert!(config.validate().is_err());
        config.max_parallel = 2;
        config.base_url = "not a url".into();
        assert!(config.validate().is_err());
    }

    fn temp_path(name: &str) -> std::path::PathBuf {
        let dir = std::env::temp_dir().join("lexsort-llm-tests");
        std::fs::create_dir_all(&dir).unwrap();
        dir.join(name)
    }

    #[test]
    fn finetune_file_has_one_record_per_document_with_three_messages() {
        let ds = crate::corpus::generate_corpus(&crate::corpus::CorpusSpec {
            doc_length_range: (10, 20),
            ..crate::corpus::CorpusSpec::with_size(200, 6)
        })
        .unwrap();
        let path = temp_path("finetune-binary.jsonl");
        let count = build_finetune_file(&ds, Task::Binary, 15, &path).unwrap();
        assert_eq!(count, 200);

        let contents = std::fs::read_to_string(&path).unwrap();
        let lines: Vec<&str> = contents.lines().collect();
        assert_eq!(lines.len(), 200);
        for line in &lines {
            let record: serde_json::Value = serde_json::from_str(line).unwrap();
            assert_eq!(record["messages"].as_array().unwrap().len(), 3);
            assert_eq!(record["messages"][0]["content"], BINARY_PROMPT);
        }
    }

    #[test]
    fn finetune_round_trip_recovers_text_and_label_pairs() {
        let ds = crate::corpus::generate_corpus(&crate::corpus::CorpusSpec {
            doc_length_range: (10, 20),
            ..crate::corpus::CorpusSpec::with_size(40, 16)
        })
        .unwrap();
        let path = temp_path("finetune-roundtrip.jsonl");
        let window = 100;
        build_finetune_file(&ds, Task::Binary, window, &path).unwrap();
        let pairs = read_finetune_file(&path).unwrap();
        assert_eq!(pairs.len(), ds.len());
        for (doc, (text, label)) in ds.documents.iter().zip(&pairs) {
            assert_eq!(text, truncate_text(&doc.text, window));
            assert_eq!(label, doc.observed_label.binary().as_str());
        }
    }

    #[test]
    fn multiclass_assistant_content_is_the_subclass_name() {
        let ds = crate::corpus::generate_corpus(&crate::corpus::CorpusSpec {
            doc_length_range: (10, 20),
            class_mix: crate::corpus::ClassMix {
                other: 0.0,
                subclasses: [1.0 / 9.0; 9],
            },
            ..crate::corpus::CorpusSpec::with_size(30, 26)
        })
        .unwrap();
        let path = temp_path("finetune-multi.jsonl");
        build_finetune_file(&ds, Task::MultiClass, 15, &path).unwrap();
        let pairs = read_finetune_file(&path).unwrap();
        for (doc, (_, label)) in ds.documents.iter().zip(&pairs) {
            assert_eq!(label, doc.observed_label.subclass().unwrap().as_str());
        }
    }

    #[test]
    fn multiclass_finetune_requires_subclass_labels() {
        let ds = crate::corpus::generate_corpus(&crate::corpus::CorpusSpec {
            doc_length_range: (10, 20),
            class_mix: crate::corpus::ClassMix {
                other: 1.0,
                subclasses: [0.0; 9],
            },
            ..crate::corpus::CorpusSpec::with_size(5, 36)
        })
        .unwrap();
        let path = temp_path("finetune-invalid.jsonl");
        assert!(build_finetune_file(&ds, Task::MultiClass, 15, &path).is_err());
    }
}

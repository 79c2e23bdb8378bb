//! Line-delimited JSON persistence for datasets.
//!
//! One UTF-8 JSON object per line:
//!
//! ```json
//! {"id": "doc-000001", "text": "...", "state": "TX", "county": "Reeves",
//!  "label_binary": "Oil and Gas Document", "label_subclass": "Release",
//!  "true_label_binary": "Oil and Gas Document", "true_label_subclass": "Release"}
//! ```
//!
//! `label_*` fields hold the observed (possibly noise-corrupted) label;
//! `true_label_*` hold ground truth. Label strings are the canonical category
//! names, matched exactly.

use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::label::{BinaryLabel, Label, LabelTaxonomy};
use super::{Dataset, Document, Provenance};
use crate::error::{Error, Result};

#[derive(Serialize, Deserialize)]
struct Record {
    id: String,
    text: String,
    state: String,
    county: String,
    label_binary: String,
    label_subclass: Option<String>,
    true_label_binary: String,
    true_label_subclass: Option<String>,
}

fn label_to_fields(label: Label) -> (String, Option<String>) {
    (
        label.binary().as_str().to_string(),
        label.subclass().map(|s| s.as_str().to_string()),
    )
}

fn label_from_fields(binary: &str, subclass: Option<&str>) -> Result<Label> {
    let taxonomy = LabelTaxonomy;
    let binary = taxonomy.binary_from_str(binary)?;
    let subclass = subclass.map(|s| taxonomy.subclass_from_str(s)).transpose()?;
    match (binary, subclass) {
        (BinaryLabel::Other, None) => Ok(Label::Other),
        (BinaryLabel::OilAndGas, Some(s)) => Ok(Label::oil_and_gas(s)),
        (BinaryLabel::Other, Some(_)) => Err(Error::validation(
            "label_subclass",
            "subclass given for an Other-labeled record",
        )),
        (BinaryLabel::OilAndGas, None) => Err(Error::validation(
            "label_subclass",
            "oil-and-gas record is missing its subclass",
        )),
    }
}

pub fn save_jsonl(dataset: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = std::fs::File::create(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    let mut writer = BufWriter::new(file);
    for doc in &dataset.documents {
        let (label_binary, label_subclass) = label_to_fields(doc.observed_label);
        let (true_label_binary, true_label_subclass) = label_to_fields(doc.true_label);
        let record = Record {
            id: doc.id.clone(),
            text: doc.text.clone(),
            state: doc.state.clone(),
            county: doc.county.clone(),
            label_binary,
            label_subclass,
            true_label_binary,
            true_label_subclass,
        };
        serde_json::to_writer(&mut writer, &record)?;
        writer
            .write_all(b"\n")
            .map_err(|e| Error::io(path.display().to_string(), e))?;
    }
    writer
        .flush()
        .map_err(|e| Error::io(path.display().to_string(), e))
}

pub fn load_jsonl(path: impl AsRef<Path>) -> Result<Dataset> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    let reader = BufReader::new(file);

    let mut documents = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let line = line.map_err(|e| Error::io(path.display().to_string(), e))?;
        if line.trim().is_empty() {
            continue;
        }
        let record: Record = serde_json::from_str(&line).map_err(|e| Error::JsonlLine {
            line: line_no,
            message: e.to_string(),
        })?;
        let observed_label =
            label_from_fields(&record.label_binary, record.label_subclass.as_deref())?;
        let true_label = label_from_fields(
            &record.true_label_binary,
            record.true_label_subclass.as_deref(),
        )?;
        documents.push(Document {
            id: record.id,
            text: record.text,
            state: record.state,
            county: record.county,
            true_label,
            observed_label,
        });
    }
    Dataset::new(
        documents,
        Provenance::Ingested {
            path: path.display().to_string(),
        },
    )
}

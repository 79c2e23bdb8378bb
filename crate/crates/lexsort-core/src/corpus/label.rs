//! The closed two-level label taxonomy.
//!
//! Level one is binary: a record either is an oil-and-gas document or it is
//! not. Level two refines oil-and-gas documents into nine exclusive
//! categories. Canonical label strings are fixed and used character-for-each
//! in every file format.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Which classification level an experiment targets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    Binary,
    MultiClass,
}

impl Task {
    pub fn n_labels(self) -> usize {
        match self {
            Task::Binary => 2,
            Task::MultiClass => 9,
        }
    }
}

impl std::fmt::Display for Task {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Task::Binary => write!(f, "binary"),
            Task::MultiClass => write!(f, "multi-class"),
        }
    }
}

/// First-level label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum BinaryLabel {
    OilAndGas,
    Other,
}

impl BinaryLabel {
    pub const CANONICAL: [&'static str; 2] = ["Oil and Gas Document", "Other"];

    pub fn as_str(self) -> &'static str {
        match self {
            BinaryLabel::OilAndGas => Self::CANONICAL[0],
            BinaryLabel::Other => Self::CANONICAL[1],
        }
    }

    /// Dense index into the binary label list (0 = oil and gas, 1 = other).
    pub fn index(self) -> usize {
        match self {
            BinaryLabel::OilAndGas => 0,
            BinaryLabel::Other => 1,
        }
    }

    pub fn from_index(index: usize) -> Option<Self> {
        match index {
            0 => Some(BinaryLabel::OilAndGas),
            1 => Some(BinaryLabel::Other),
            _ => None,
        }
    }
}

/// Second-level category of an oil-and-gas document. Variant order fixes
/// the dense label indices used by models and confusion matrices.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Subclass {
    AffidavitOfNonProduction,
    AffidavitOfProduction,
    AssignmentOfOilAndGasLease,
    Correction,
    Extension,
    MemorandumOfLease,
    OilAndGasLease,
    Release,
    TopLease,
}

impl Subclass {
    pub const ALL: [Subclass; 9] = [
        Subclass::AffidavitOfNonProduction,
        Subclass::AffidavitOfProduction,
        Subclass::AssignmentOfOilAndGasLease,
        Subclass::Correction,
        Subclass::Extension,
        Subclass::MemorandumOfLease,
        Subclass::OilAndGasLease,
        Subclass::Release,
        Subclass::TopLease,
    ];

    pub const CANONICAL: [&'static str; 9] = [
        "Affidavit of Non-Production",
        "Affidavit of Production",
        "Assignment of Oil and Gas Lease",
        "Correction",
        "Extension",
        "Memorandum of Lease",
        "Oil and Gas Lease",
        "Release",
        "Top Lease",
    ];

    pub fn as_str(self) -> &'static str {
        Self::CANONICAL[self.index()]
    }

    pub fn index(self) -> usize {
        Self::ALL.iter().position(|s| *s == self).unwrap()
    }

    pub fn from_index(index: usize) -> Option<Self> {
        Self::ALL.get(index).copied()
    }

    /// Exact (case-sensitive) match against the canonical name.
    pub fn from_canonical(s: &str) -> Option<Self> {
        Self::CANONICAL
            .iter()
            .position(|c| *c == s)
            .and_then(Self::from_index)
    }
}

/// A two-level label.
///
/// Corpus documents always carry a full label: `Other` or an oil-and-gas
/// label with its subclass. Binary-task predictions only decide the first
/// level, so `OilAndGas(None)` is representable here; [`Label::validate_full`]
/// enforces the stricter document form where it applies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Label {
    Other,
    OilAndGas(Option<Subclass>),
}

impl Label {
    /// Full oil-and-gas label, as carried by corpus documents.
    pub fn oil_and_gas(subclass: Subclass) -> Self {
        Label::OilAndGas(Some(subclass))
    }

    pub fn binary(self) -> BinaryLabel {
        match self {
            Label::Other => BinaryLabel::Other,
            Label::OilAndGas(_) => BinaryLabel::OilAndGas,
        }
    }

    pub fn subclass(self) -> Option<Subclass> {
        match self {
            Label::Other => None,
            Label::OilAndGas(s) => s,
        }
    }

    /// Documents must carry a subclass exactly when they are oil-and-gas.
    pub fn validate_full(self) -> Result<Self> {
        match self {
            Label::OilAndGas(None) => Err(Error::validation(
                "label",
                "oil-and-gas document label is missing its subclass",
            )),
            other => Ok(other),
        }
    }

    /// The label string at the given task level, if this label decides it.
    /// A plain `Other` label has no multi-class string.
    pub fn task_str(self, task: Task) -> Option<&'static str> {
        match task {
            Task::Binary => Some(self.binary().as_str()),
            Task::MultiClass => self.subclass().map(Subclass::as_str),
        }
    }

    /// Dense index at the given task level (binary: 0/1; multi-class: 0..9).
    pub fn task_index(self, task: Task) -> Option<usize> {
        match task {
            Task::Binary => Some(self.binary().index()),
            Task::MultiClass => self.subclass().map(Subclass::index),
        }
    }

    /// Inverse of [`Label::task_index`] for model outputs.
    pub fn from_task_index(task: Task, index: usize) -> Option<Self> {
        match task {
            Task::Binary => BinaryLabel::from_index(index).map(|b| match b {
                BinaryLabel::Other => Label::Other,
                BinaryLabel::OilAndGas => Label::OilAndGas(None),
            }),
            Task::MultiClass => Subclass::from_index(index).map(Label::oil_and_gas),
        }
    }
}

impl std::fmt::Display for Label {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Label::Other => write!(f, "Other"),
            Label::OilAndGas(None) => write!(f, "Oil and Gas Document"),
            Label::OilAndGas(Some(s)) => write!(f, "Oil and Gas Document / {}", s.as_str()),
        }
    }
}

/// The closed label sets for both tasks.
///
/// The sets are fixed by the domain; the type exists so datasets and reports
/// can name the taxonomy they conform to.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelTaxonomy;

impl LabelTaxonomy {
    pub fn binary_labels(&self) -> &'static [&'static str; 2] {
        &BinaryLabel::CANONICAL
    }

    pub fn subclasses(&self) -> &'static [&'static str; 9] {
        &Subclass::CANONICAL
    }

    /// Label strings for one task, in dense index order.
    pub fn task_labels(&self, task: Task) -> Vec<&'static str> {
        match task {
            Task::Binary => BinaryLabel::CANONICAL.to_vec(),
            Task::MultiClass => Subclass::CANONICAL.to_vec(),
        }
    }

    /// Parse a canonical (exact, case-sensitive) subclass string.
    pub fn subclass_from_str(&self, s: &str) -> Result<Subclass> {
        Subclass::from_canonical(s).ok_or_else(|| Error::Taxonomy {
            value: s.to_string(),
            context: "nine-category".to_string(),
        })
    }

    /// Parse a canonical binary label string.
    pub fn binary_from_str(&self, s: &str) -> Result<BinaryLabel> {
        match s {
            "Oil and Gas Document" => Ok(BinaryLabel::OilAndGas),
            "Other" => Ok(BinaryLabel::Other),
            _ => Err(Error::Taxonomy {
                value: s.to_string(),
                context: "binary".to_string(),
            }),
        }
    }
}

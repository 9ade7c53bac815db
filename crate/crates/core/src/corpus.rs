//! Question/answer datasets and their JSON-lines persistence.
//!
//! The wire format is one JSON object per line: a header line carrying
//! `schema_version` and the dataset name, then one record per line with the
//! fixed key order `id, text, label, source, topic, parent_id, style, answer`.
//! Saving is byte-stable: the same dataset always serializes to the same
//! bytes, so run outputs can be compared with a digest.
//!
//! Datasets are immutable after construction and safe to share across
//! threads; file writes are single-writer.

use std::collections::HashMap;
use std::fmt;
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evolve::StyleId;
use crate::util::write_atomic;

/// Wire schema version written to and checked on every dataset file.
pub const SCHEMA_VERSION: u64 = 1;

/// Whether a question is a harmful request or a benign one.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Label {
    Harmful,
    Benign,
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Label::Harmful => write!(f, "harmful"),
            Label::Benign => write!(f, "benign"),
        }
    }
}

/// A seed or derived query flowing through the pipeline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Question {
    /// Stable identifier, unique within a dataset file.
    pub id: String,
    pub text: String,
    pub label: Label,
    /// Dataset tag, e.g. "circuitbreaker", "dolly-15k", "advbench".
    pub source: String,
    /// Optional free-form category.
    pub topic: Option<String>,
    /// Id of the question this one was derived from, if any.
    pub parent_id: Option<String>,
    /// Evolution style that produced this question, if any.
    pub style: Option<StyleId>,
}

impl Question {
    pub fn new(id: impl Into<String>, text: impl Into<String>, label: Label, source: impl Into<String>) -> Self {
        Question {
            id: id.into(),
            text: text.into(),
            label,
            source: source.into(),
            topic: None,
            parent_id: None,
            style: None,
        }
    }

    /// Check the per-question invariants; `location` names the record in errors.
    pub fn validate(&self, location: &str) -> Result<()> {
        if self.id.trim().is_empty() {
            return Err(Error::validation(format!("{location}: empty id")));
        }
        if self.text.trim().is_empty() {
            return Err(Error::validation(format!(
                "{location}: question {} has empty text",
                self.id
            )));
        }
        if self.parent_id.is_some() != self.style.is_some() {
            return Err(Error::validation(format!(
                "{location}: question {} must set parent_id and style together",
                self.id
            )));
        }
        Ok(())
    }
}

/// One dataset line: a question, optionally paired with an answer text.
#[derive(Debug, Clone, PartialEq)]
pub struct Record {
    pub question: Question,
    pub answer: Option<String>,
}

impl Record {
    pub fn question(question: Question) -> Self {
        Record { question, answer: None }
    }

    pub fn with_answer(question: Question, answer: impl Into<String>) -> Self {
        Record {
            question,
            answer: Some(answer.into()),
        }
    }
}

/// An ordered, validated collection of records.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub name: String,
    pub schema_version: u64,
    records: Vec<Record>,
}

#[derive(Serialize, Deserialize)]
struct HeaderLine {
    schema_version: u64,
    name: String,
}

/// On-disk record shape; key order here is the wire key order.
#[derive(Serialize, Deserialize)]
struct RecordLine {
    id: String,
    text: String,
    label: Label,
    source: String,
    topic: Option<String>,
    parent_id: Option<String>,
    style: Option<StyleId>,
    answer: Option<String>,
}

impl Dataset {
    /// Build a dataset, validating every record and id uniqueness.
    pub fn new(name: impl Into<String>, records: Vec<Record>) -> Result<Self> {
        let dataset = Dataset {
            name: name.into(),
            schema_version: SCHEMA_VERSION,
            records,
        };
        dataset.validate()?;
        Ok(dataset)
    }

    pub fn records(&self) -> &[Record] {
        &self.records
    }

    pub fn questions(&self) -> impl Iterator<Item = &Question> {
        self.records.iter().map(|r| &r.question)
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    fn validate(&self) -> Result<()> {
        let mut seen: HashMap<&str, usize> = HashMap::new();
        let mut duplicates: Vec<String> = Vec::new();
        for (idx, record) in self.records.iter().enumerate() {
            record
                .question
                .validate(&format!("{} record {}", self.name, idx + 1))?;
            if let Some(_first) = seen.insert(record.question.id.as_str(), idx) {
                duplicates.push(record.question.id.clone());
            }
        }
        if !duplicates.is_empty() {
            duplicates.sort();
            duplicates.dedup();
            return Err(Error::validation(format!(
                "duplicate ids in dataset {}: {}",
                self.name,
                duplicates.join(", ")
            )));
        }
        Ok(())
    }
}

/// Serialize a dataset to its JSON-lines byte representation.
pub fn dataset_to_bytes(dataset: &Dataset) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    let header = HeaderLine {
        schema_version: dataset.schema_version,
        name: dataset.name.clone(),
    };
    out.extend_from_slice(serde_json::to_string(&header).expect("header serializes").as_bytes());
    out.push(b'\n');
    for record in dataset.records() {
        let line = RecordLine {
            id: record.question.id.clone(),
            text: record.question.text.clone(),
            label: record.question.label,
            source: record.question.source.clone(),
            topic: record.question.topic.clone(),
            parent_id: record.question.parent_id.clone(),
            style: record.question.style,
            answer: record.answer.clone(),
        };
        out.extend_from_slice(serde_json::to_string(&line).expect("record serializes").as_bytes());
        out.push(b'\n');
    }
    Ok(out)
}

/// Write a dataset as JSON-lines. Byte-identical output for identical input.
pub fn save_dataset(dataset: &Dataset, path: &Path) -> Result<()> {
    write_atomic(path, &dataset_to_bytes(dataset)?)
}

/// Load and validate a dataset written by [`save_dataset`].
pub fn load_dataset(path: &Path) -> Result<Dataset> {
    let text = fs::read_to_string(path).map_err(|e| Error::persistence(path, e))?;
    let path_str = path.display().to_string();
    parse_dataset(&text, &path_str)
}

/// Parse JSON-lines dataset content; `path` is only used in error messages.
pub fn parse_dataset(text: &str, path: &str) -> Result<Dataset> {
    let mut lines = text.lines().enumerate();
    let (_, header_line) = lines
        .next()
        .ok_or_else(|| Error::parse(path, 1, "empty file, expected header line"))?;
    let header: HeaderLine = serde_json::from_str(header_line)
        .map_err(|e| Error::parse(path, 1, format!("bad header: {e}")))?;
    if header.schema_version != SCHEMA_VERSION {
        return Err(Error::SchemaVersion {
            path: path.to_string(),
            found: header.schema_version,
            expected: SCHEMA_VERSION,
        });
    }
    let mut records = Vec::new();
    for (idx, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let parsed: RecordLine = serde_json::from_str(line)
            .map_err(|e| Error::parse(path, idx + 1, format!("bad record: {e}")))?;
        let question = Question {
            id: parsed.id,
            text: parsed.text,
            label: parsed.label,
            source: parsed.source,
            topic: parsed.topic,
            parent_id: parsed.parent_id,
            style: parsed.style,
        };
        question.validate(&format!("{path}:{}", idx + 1))?;
        records.push(Record {
            question,
            answer: parsed.answer,
        });
    }
    Dataset::new(header.name, records)
}

/// Split a dataset into disjoint parts with the given fractions.
///
/// The split is a seeded shuffle followed by largest-remainder apportionment,
/// so part sizes differ from the exact proportions by less than one record
/// and the same seed always produces the same parts.
pub fn split_dataset(dataset: &Dataset, fractions: &[f64], seed: u64) -> Result<Vec<Dataset>> {
    if fractions.is_empty() {
        return Err(Error::validation("split needs at least one fraction"));
    }
    if fractions.iter().any(|&f| f <= 0.0 || !f.is_finite()) {
        return Err(Error::validation("split fractions must be positive"));
    }
    let total: f64 = fractions.iter().sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(Error::validation(format!(
            "split fractions must sum to 1 (got {total})"
        )));
    }

    let n = dataset.len();
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    order.shuffle(&mut rng);

    // Largest-remainder apportionment of n records over the fractions.
    let mut sizes: Vec<usize> = fractions.iter().map(|f| (f * n as f64).floor() as usize).collect();
    let assigned: usize = sizes.iter().sum();
    let mut remainders: Vec<(usize, f64)> = fractions
        .iter()
        .enumerate()
        .map(|(i, f)| (i, f * n as f64 - sizes[i] as f64))
        .collect();
    remainders.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
    for &(idx, _) in remainders.iter().take(n - assigned) {
        sizes[idx] += 1;
    }

    let mut out = Vec::with_capacity(fractions.len());
    let mut cursor = 0usize;
    for (part, &size) in sizes.iter().enumerate() {
        let mut picked: Vec<usize> = order[cursor..cursor + size].to_vec();
        cursor += size;
        picked.sort(); // keep input order within each part
        let records = picked.iter().map(|&i| dataset.records[i].clone()).collect();
        out.push(Dataset::new(format!("{}-split{}", dataset.name, part), records)?);
    }
    Ok(out)
}

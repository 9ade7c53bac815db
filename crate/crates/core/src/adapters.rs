//! Thin format adapters for ingesting published benchmark files from local
//! paths. These map external formats onto [`Dataset`]; they do not fetch
//! anything remote and are not benchmark re-implementations.

use std::path::Path;

use serde::Deserialize;

use crate::corpus::{Dataset, Label, Question, Record};
use crate::error::{Error, Result};
use crate::evolve::StyleId;

fn file_stem(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().to_string())
        .unwrap_or_else(|| "dataset".to_string())
}

/// Load a multiple-choice benchmark from CSV rows of
/// `question,A,B,C,D,answer`. The gold answer is the choice letter.
pub fn mmlu_from_csv(path: &Path) -> Result<Dataset> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(false)
        .from_path(path)
        .map_err(|e| Error::config(format!("cannot open {}: {e}", path.display())))?;
    let name = file_stem(path);
    let mut records = Vec::new();
    for (idx, row) in reader.records().enumerate() {
        let row = row.map_err(|e| {
            Error::parse(path.display().to_string(), idx + 1, format!("bad csv row: {e}"))
        })?;
        if row.len() < 6 {
            return Err(Error::parse(
                path.display().to_string(),
                idx + 1,
                format!("expected 6 columns (question, 4 choices, answer), got {}", row.len()),
            ));
        }
        let text = format!(
            "{}\nA. {}\nB. {}\nC. {}\nD. {}\nAnswer with the letter only.",
            &row[0], &row[1], &row[2], &row[3], &row[4]
        );
        let question = Question::new(format!("{name}-{}", idx + 1), text, Label::Benign, name.clone());
        records.push(Record::with_answer(question, row[5].trim().to_string()));
    }
    Dataset::new(name, records)
}

#[derive(Deserialize)]
struct GsmRow {
    question: String,
    answer: String,
}

/// Load a numeric-answer benchmark from JSON-lines rows of
/// `{"question", "answer"}` where the answer's final line is `#### <number>`.
pub fn gsm8k_from_jsonl(path: &Path) -> Result<Dataset> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::persistence(path, e))?;
    let name = file_stem(path);
    let mut records = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let row: GsmRow = serde_json::from_str(line).map_err(|e| {
            Error::parse(path.display().to_string(), idx + 1, format!("bad row: {e}"))
        })?;
        let gold = row
            .answer
            .rsplit("#### ")
            .next()
            .map(|g| g.trim().replace(',', ""))
            .filter(|g| !g.is_empty())
            .ok_or_else(|| {
                Error::parse(
                    path.display().to_string(),
                    idx + 1,
                    "answer has no \"#### <number>\" line",
                )
            })?;
        let question =
            Question::new(format!("{name}-{}", idx + 1), row.question, Label::Benign, name.clone());
        records.push(Record::with_answer(question, gold));
    }
    Dataset::new(name, records)
}

#[derive(Deserialize)]
struct StyledRow {
    #[serde(default)]
    id: Option<String>,
    #[serde(alias = "text", alias = "turns", alias = "prompt")]
    question: serde_json::Value,
    #[serde(alias = "style", alias = "category")]
    prompt_style: String,
}

fn style_from_tag(tag: &str) -> Option<StyleId> {
    let normalized = tag.trim().to_lowercase().replace([' ', '-'], "_");
    match normalized.as_str() {
        "slang" => Some(StyleId::Slang),
        "uncommon_dialect" | "uncommon_dialects" => Some(StyleId::UncommonDialect),
        "role_play" | "roleplay" => Some(StyleId::RolePlay),
        "expert_endorsement" => Some(StyleId::ExpertEndorsement),
        "evidence_based" | "evidence_based_persuasion" => Some(StyleId::EvidenceBased),
        "logical_appeal" => Some(StyleId::LogicalAppeal),
        _ => None,
    }
}

/// Load a styled demonstration pool from JSON-lines rows carrying a question
/// text and a style tag (`prompt_style`/`style`/`category`). Rows with style
/// tags outside the six evolution styles are skipped. The style is recorded
/// in `topic` (these records are pre-styled sources, not evolution outputs).
pub fn styled_pool_from_jsonl(path: &Path) -> Result<Dataset> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::persistence(path, e))?;
    let name = file_stem(path);
    let mut records = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let row: StyledRow = serde_json::from_str(line).map_err(|e| {
            Error::parse(path.display().to_string(), idx + 1, format!("bad row: {e}"))
        })?;
        let Some(style) = style_from_tag(&row.prompt_style) else {
            continue;
        };
        let text = match &row.question {
            serde_json::Value::String(s) => s.clone(),
            // Some releases store single-turn prompts as a one-element array.
            serde_json::Value::Array(items) => items
                .iter()
                .filter_map(|v| v.as_str())
                .collect::<Vec<_>>()
                .join("\n"),
            other => other.to_string(),
        };
        if text.trim().is_empty() {
            continue;
        }
        let id = row.id.unwrap_or_else(|| format!("{name}-{}", idx + 1));
        let mut question = Question::new(id, text, Label::Harmful, name.clone());
        question.topic = Some(style.wire_name().to_string());
        records.push(Record::question(question));
    }
    if records.is_empty() {
        return Err(Error::validation(format!(
            "{} contains no rows with a recognized style tag",
            path.display()
        )));
    }
    Dataset::new(name, records)
}

//! Structured safety-reasoning answers: build, render, and parse.
//!
//! An answer verifies the request against eight fixed harm categories, states
//! a conclusion, then gives the response body. The rendered text is the
//! single canonical layout used both as training target and as the format
//! parsed back out of model completions, byte-stable by construction:
//!
//! ```text
//! #### Verify Request
//! I need to verify the dangerousness of the user's request to <summary> ...
//!
//! * harassment/threatening: <reason>
//! (eight bullets)
//!
//! <conclusion sentence>
//!
//! #### Response
//! <response body>
//! ```
//!
//! Render and parse are pure and thread-safe; the invariants (exactly eight
//! bullets in fixed order, conclusion consistent with the flagged bullets)
//! are enforced at construction so rendering can never emit an inconsistent
//! answer.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::client::{complete_with_retry, ChatClient, GenParams, RetryPolicy};
use crate::corpus::{Label, Question};
use crate::error::{Error, Result};

/// The eight harm categories, in the fixed order they are rendered.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CategoryId {
    HarassmentThreatening,
    HateThreatening,
    IllicitViolent,
    SelfHarmIntentInstructions,
    SexualMinors,
    ViolenceGraphic,
    Misinformation,
    PrivacySensitive,
}

impl CategoryId {
    pub const ALL: [CategoryId; 8] = [
        CategoryId::HarassmentThreatening,
        CategoryId::HateThreatening,
        CategoryId::IllicitViolent,
        CategoryId::SelfHarmIntentInstructions,
        CategoryId::SexualMinors,
        CategoryId::ViolenceGraphic,
        CategoryId::Misinformation,
        CategoryId::PrivacySensitive,
    ];

    /// The slash-form name used in the rendered bullet lines.
    pub fn wire_name(self) -> &'static str {
        match self {
            CategoryId::HarassmentThreatening => "harassment/threatening",
            CategoryId::HateThreatening => "hate/threatening",
            CategoryId::IllicitViolent => "illicit/violent",
            CategoryId::SelfHarmIntentInstructions => "self-harm/intent/instructions",
            CategoryId::SexualMinors => "sexual/minors",
            CategoryId::ViolenceGraphic => "violence/graphic",
            CategoryId::Misinformation => "misinformation",
            CategoryId::PrivacySensitive => "privacy/sensitive",
        }
    }

    pub fn from_wire_name(name: &str) -> Option<CategoryId> {
        CategoryId::ALL.into_iter().find(|c| c.wire_name() == name)
    }
}

impl fmt::Display for CategoryId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.wire_name())
    }
}

/// Per-category verdict: either exactly "No." or a "Yes, ..." explanation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoryVerdict {
    pub category: CategoryId,
    pub flagged: bool,
    pub reason: String,
}

impl CategoryVerdict {
    pub fn no(category: CategoryId) -> Self {
        CategoryVerdict {
            category,
            flagged: false,
            reason: "No.".to_string(),
        }
    }

    /// A flagged verdict; `explanation` is appended after "Yes, ".
    pub fn yes(category: CategoryId, explanation: impl Into<String>) -> Self {
        CategoryVerdict {
            category,
            flagged: true,
            reason: format!("Yes, {}", explanation.into()),
        }
    }

    fn validate(&self) -> Result<()> {
        if self.reason.contains('\n') || self.reason.contains('\r') {
            return Err(Error::validation(format!(
                "reason for {} must be a single line",
                self.category
            )));
        }
        // Reasons end their bullet line; trailing whitespace there would not
        // survive a render/parse round trip.
        if self.reason != self.reason.trim_end() {
            return Err(Error::validation(format!(
                "reason for {} must not end with whitespace",
                self.category
            )));
        }
        if self.flagged {
            if !self.reason.starts_with("Yes") {
                return Err(Error::validation(format!(
                    "flagged {} must give a reason starting with \"Yes\"",
                    self.category
                )));
            }
        } else if self.reason != "No." {
            return Err(Error::validation(format!(
                "unflagged {} must give exactly \"No.\"",
                self.category
            )));
        }
        Ok(())
    }
}

/// Overall conclusion derived from the verdicts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Conclusion {
    /// At least one category flagged; carries the flagged categories in order.
    Unsafe(Vec<CategoryId>),
    Safe,
}

/// A complete structured answer. Construct via [`SCoTAnswer::new`]; the
/// conclusion is derived from the verdicts, never stored separately.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SCoTAnswer {
    summary: String,
    verdicts: Vec<CategoryVerdict>,
    response: String,
}

/// Default refusal body used when no custom one is configured.
pub const DEFAULT_REFUSAL_RESPONSE: &str = "I am sorry, but I cannot help with that.";

const HEADER_VERIFY: &str = "#### Verify Request";
const HEADER_RESPONSE: &str = "#### Response";
const VERIFY_PREFIX: &str = "I need to verify the dangerousness of the user's request to ";
const VERIFY_SUFFIX_UNSAFE: &str = " with following categories before generating the response.";
const VERIFY_SUFFIX_SAFE: &str = " across the following categories before generating the response.";
const CONCLUSION_SAFE: &str =
    "Therefore, the user's request is safe, and I can proceed to generate the response.";
const CONCLUSION_UNSAFE_PREFIX: &str =
    "Therefore, the user's request likely involves a clear reference to ";
const CONCLUSION_UNSAFE_SUFFIX: &str =
    ", which could lead to unsafe behavior. Therefore, I need to reject the request.";

impl SCoTAnswer {
    /// Build and validate an answer. Requires exactly the eight categories in
    /// order, single-line summary and reasons, and a non-empty response that
    /// contains no `####` header line of its own.
    pub fn new(
        summary: impl Into<String>,
        verdicts: Vec<CategoryVerdict>,
        response: impl Into<String>,
    ) -> Result<Self> {
        let answer = SCoTAnswer {
            summary: summary.into(),
            verdicts,
            response: response.into(),
        };
        answer.validate()?;
        Ok(answer)
    }

    /// An all-"No." answer with a safe conclusion, used for benign requests.
    pub fn safe(summary: impl Into<String>, response: impl Into<String>) -> Result<Self> {
        let verdicts = CategoryId::ALL.iter().map(|&c| CategoryVerdict::no(c)).collect();
        SCoTAnswer::new(summary, verdicts, response)
    }

    /// A refusal answer flagging the given categories (each with its reason).
    pub fn refusal(
        summary: impl Into<String>,
        flagged: &[(CategoryId, String)],
        response: impl Into<String>,
    ) -> Result<Self> {
        let verdicts = CategoryId::ALL
            .iter()
            .map(|&c| match flagged.iter().find(|(fc, _)| *fc == c) {
                Some((_, explanation)) => CategoryVerdict::yes(c, explanation.clone()),
                None => CategoryVerdict::no(c),
            })
            .collect();
        SCoTAnswer::new(summary, verdicts, response)
    }

    pub fn summary(&self) -> &str {
        &self.summary
    }

    pub fn verdicts(&self) -> &[CategoryVerdict] {
        &self.verdicts
    }

    pub fn response(&self) -> &str {
        &self.response
    }

    /// Flagged categories, in category order.
    pub fn flagged_categories(&self) -> Vec<CategoryId> {
        self.verdicts
            .iter()
            .filter(|v| v.flagged)
            .map(|v| v.category)
            .collect()
    }

    pub fn conclusion(&self) -> Conclusion {
        let flagged = self.flagged_categories();
        if flagged.is_empty() {
            Conclusion::Safe
        } else {
            Conclusion::Unsafe(flagged)
        }
    }

    pub fn is_safe(&self) -> bool {
        matches!(self.conclusion(), Conclusion::Safe)
    }

    fn validate(&self) -> Result<()> {
        if self.summary.trim().is_empty() {
            return Err(Error::validation("summary must be non-empty"));
        }
        if self.summary.contains('\n') || self.summary.contains('\r') {
            return Err(Error::validation("summary must be a single line"));
        }
        if self.verdicts.len() != CategoryId::ALL.len() {
            return Err(Error::validation(format!(
                "expected {} verdicts, got {}",
                CategoryId::ALL.len(),
                self.verdicts.len()
            )));
        }
        for (verdict, &expected) in self.verdicts.iter().zip(CategoryId::ALL.iter()) {
            if verdict.category != expected {
                return Err(Error::validation(format!(
                    "verdicts out of order: expected {}, got {}",
                    expected, verdict.category
                )));
            }
            verdict.validate()?;
        }
        if self.response.trim().is_empty() {
            return Err(Error::validation("response must be non-empty"));
        }
        if self.response.lines().any(|l| l.starts_with("####")) {
            return Err(Error::validation(
                "response must not contain a #### header line",
            ));
        }
        Ok(())
    }
}

/// Render an answer to its canonical text. Pure; the inverse of [`parse_scot`].
pub fn render_scot(answer: &SCoTAnswer) -> String {
    let (verify_suffix, conclusion) = match answer.conclusion() {
        Conclusion::Safe => (VERIFY_SUFFIX_SAFE, CONCLUSION_SAFE.to_string()),
        Conclusion::Unsafe(categories) => {
            let list = categories
                .iter()
                .map(|c| c.wire_name())
                .collect::<Vec<_>>()
                .join(", ");
            (
                VERIFY_SUFFIX_UNSAFE,
                format!("{CONCLUSION_UNSAFE_PREFIX}{list}{CONCLUSION_UNSAFE_SUFFIX}"),
            )
        }
    };
    let mut out = String::new();
    out.push_str(HEADER_VERIFY);
    out.push('\n');
    out.push_str(VERIFY_PREFIX);
    out.push_str(&answer.summary);
    out.push_str(verify_suffix);
    out.push_str("\n\n");
    for verdict in &answer.verdicts {
        out.push_str(&format!("* {}: {}\n", verdict.category.wire_name(), verdict.reason));
    }
    out.push('\n');
    out.push_str(&conclusion);
    out.push_str("\n\n");
    out.push_str(HEADER_RESPONSE);
    out.push('\n');
    out.push_str(&answer.response);
    out
}

/// One line of the structural section, with its byte offsets in the source.
struct Line<'a> {
    number: usize,
    raw: &'a str,
    end_offset: usize,
}

fn parse_error(line: &Line<'_>, message: impl Into<String>) -> Error {
    Error::parse("<scot text>", line.number, format!("{}: {:?}", message.into(), line.raw))
}

/// Parse canonical text back into an answer.
///
/// Strict on header names, bullet count, category names, and conclusion
/// consistency; tolerant to trailing whitespace on structural lines. The
/// response body after the `#### Response` header is preserved byte-exactly.
pub fn parse_scot(text: &str) -> Result<SCoTAnswer> {
    let mut lines = Vec::new();
    let mut offset = 0usize;
    for (idx, piece) in text.split_inclusive('\n').enumerate() {
        let end = offset + piece.len();
        lines.push(Line {
            number: idx + 1,
            raw: piece.strip_suffix('\n').unwrap_or(piece),
            end_offset: end,
        });
        offset = end;
    }

    // Shape of the structural section: header, sentence, blank, 8 bullets,
    // blank, conclusion, blank, response header = 15 lines.
    const RESPONSE_HEADER_INDEX: usize = 14;
    if lines.len() <= RESPONSE_HEADER_INDEX {
        return Err(Error::parse(
            "<scot text>",
            lines.len(),
            "text too short for the verification/response layout",
        ));
    }

    let expect_blank = |line: &Line<'_>| -> Result<()> {
        if line.raw.trim().is_empty() {
            Ok(())
        } else {
            Err(parse_error(line, "expected blank line"))
        }
    };

    let header = &lines[0];
    if header.raw.trim_end() != HEADER_VERIFY {
        return Err(parse_error(header, format!("expected {HEADER_VERIFY:?} header")));
    }

    let sentence_line = &lines[1];
    let sentence = sentence_line.raw.trim_end();
    let rest = sentence
        .strip_prefix(VERIFY_PREFIX)
        .ok_or_else(|| parse_error(sentence_line, "malformed verification sentence"))?;
    let summary = rest
        .strip_suffix(VERIFY_SUFFIX_UNSAFE)
        .or_else(|| rest.strip_suffix(VERIFY_SUFFIX_SAFE))
        .ok_or_else(|| parse_error(sentence_line, "malformed verification sentence"))?
        .to_string();

    expect_blank(&lines[2])?;

    let mut verdicts = Vec::with_capacity(8);
    for (slot, &expected) in CategoryId::ALL.iter().enumerate() {
        let line = &lines[3 + slot];
        let body = line.raw.trim_end();
        let bullet = body.strip_prefix("* ").ok_or_else(|| {
            parse_error(line, format!("expected bullet {} of 8", slot + 1))
        })?;
        let (name, reason) = bullet
            .split_once(": ")
            .ok_or_else(|| parse_error(line, "bullet missing \": \" separator"))?;
        let category = CategoryId::from_wire_name(name)
            .ok_or_else(|| parse_error(line, format!("unknown category {name:?}")))?;
        if category != expected {
            return Err(parse_error(
                line,
                format!("categories out of order: expected {expected}"),
            ));
        }
        let flagged = reason.starts_with("Yes");
        if !flagged && reason != "No." {
            return Err(parse_error(line, "reason must be \"No.\" or start with \"Yes\""));
        }
        verdicts.push(CategoryVerdict {
            category,
            flagged,
            reason: reason.to_string(),
        });
    }

    expect_blank(&lines[11])?;

    let conclusion_line = &lines[12];
    let conclusion_text = conclusion_line.raw.trim_end();
    let stated = if conclusion_text == CONCLUSION_SAFE {
        Conclusion::Safe
    } else if let Some(rest) = conclusion_text.strip_prefix(CONCLUSION_UNSAFE_PREFIX) {
        let list = rest
            .strip_suffix(CONCLUSION_UNSAFE_SUFFIX)
            .ok_or_else(|| parse_error(conclusion_line, "malformed unsafe conclusion"))?;
        let mut categories = Vec::new();
        for name in list.split(", ") {
            let category = CategoryId::from_wire_name(name).ok_or_else(|| {
                parse_error(conclusion_line, format!("unknown category {name:?} in conclusion"))
            })?;
            categories.push(category);
        }
        Conclusion::Unsafe(categories)
    } else {
        return Err(parse_error(conclusion_line, "unrecognized conclusion sentence"));
    };

    expect_blank(&lines[13])?;

    let response_header = &lines[RESPONSE_HEADER_INDEX];
    if response_header.raw.trim_end() != HEADER_RESPONSE {
        return Err(parse_error(
            response_header,
            format!("expected {HEADER_RESPONSE:?} header"),
        ));
    }

    let response = &text[response_header.end_offset..];
    if response.trim().is_empty() {
        return Err(Error::parse(
            "<scot text>",
            response_header.number,
            "empty response body after the response header",
        ));
    }

    let answer = SCoTAnswer::new(summary, verdicts, response.to_string())?;

    // A stated conclusion that disagrees with the flagged bullets is a
    // validation failure, not a parse failure.
    let derived = answer.conclusion();
    if stated != derived {
        return Err(Error::validation(format!(
            "conclusion inconsistent with flagged categories: stated {stated:?}, bullets imply {derived:?}"
        )));
    }
    Ok(answer)
}

/// Scaffold shown to the answer model: the canonical template with
/// placeholders left in place of the summary, reasons, categories, and body.
pub fn answer_scaffold() -> String {
    let mut out = String::new();
    out.push_str(HEADER_VERIFY);
    out.push('\n');
    out.push_str(VERIFY_PREFIX);
    out.push_str("[summary]");
    out.push_str(VERIFY_SUFFIX_UNSAFE);
    out.push_str("\n\n");
    for category in CategoryId::ALL {
        out.push_str(&format!("* {}: [reason]\n", category.wire_name()));
    }
    out.push('\n');
    out.push_str(CONCLUSION_UNSAFE_PREFIX);
    out.push_str("[categories]");
    out.push_str(CONCLUSION_UNSAFE_SUFFIX);
    out.push_str("\n\n");
    out.push_str(HEADER_RESPONSE);
    out.push('\n');
    out.push_str("[output]");
    out
}

/// Build the answer-generation prompt for a harmful question: instructions,
/// the question, and the scaffold to fill in.
pub fn build_refusal_prompt(question: &Question) -> String {
    format!(
        "#### Instruction\n\
         Assess the question below and answer by filling in the template exactly as given. \
         Replace [summary] with a short phrase describing what the question asks for, \
         each [reason] with \"Yes, <explanation>\" if the question involves that category or \"No.\" otherwise, \
         [categories] with the comma-separated list of categories marked Yes, \
         and [output] with the final response. \
         Keep every header, bullet label, and sentence outside the placeholders unchanged.\n\n\
         #### Question\n{}\n\n#### Template\n{}",
        question.text,
        answer_scaffold()
    )
}

/// Prompt for the retain-side summarizer.
pub fn build_summary_prompt(question: &Question) -> String {
    format!(
        "Summarize what the following request asks for, as a short verb phrase \
         (for example: \"ask for a cookie recipe\"). Respond with the phrase only.\n\n{}",
        question.text
    )
}

/// Options for [`generate_refusal_answer`].
#[derive(Debug, Clone)]
pub struct RefusalGenOptions {
    pub attempt_budget: u32,
    pub params: GenParams,
    pub retry: RetryPolicy,
    /// Substituted when the model leaves the response slot empty.
    pub default_response: String,
}

impl Default for RefusalGenOptions {
    fn default() -> Self {
        RefusalGenOptions {
            attempt_budget: 3,
            params: GenParams {
                temperature: 0.0,
                max_tokens: 1024,
            },
            retry: RetryPolicy::default(),
            default_response: DEFAULT_REFUSAL_RESPONSE.to_string(),
        }
    }
}

/// Ask the answer model for a structured refusal to a harmful question.
///
/// The completion must parse as canonical text and conclude unsafe; a safe
/// conclusion on a harmful seed is surfaced as a flagged-for-review error and
/// never silently accepted.
pub fn generate_refusal_answer(
    question: &Question,
    llm: &dyn ChatClient,
    options: &RefusalGenOptions,
) -> Result<SCoTAnswer> {
    if question.label != Label::Harmful {
        return Err(Error::validation(format!(
            "refusal answers are generated for harmful questions only ({} is {})",
            question.id, question.label
        )));
    }
    let prompt = build_refusal_prompt(question);
    let budget = options.attempt_budget.max(1);
    let mut last_completion = String::new();
    let mut last_error = String::new();
    for _ in 0..budget {
        let completion =
            complete_with_retry(llm, None, &prompt, &options.params, &options.retry)?;
        let mut candidate = completion.trim().to_string();
        if candidate.ends_with(HEADER_RESPONSE) {
            // Model omitted the body: fall back to the configured refusal.
            candidate.push('\n');
            candidate.push_str(&options.default_response);
        }
        match parse_scot(&candidate) {
            Ok(answer) => {
                if answer.is_safe() {
                    return Err(Error::FlaggedForReview {
                        question_id: question.id.clone(),
                        message: "model concluded safe on a harmful seed".to_string(),
                    });
                }
                return Ok(answer);
            }
            Err(err) => {
                last_error = err.to_string();
                last_completion = completion;
            }
        }
    }
    Err(Error::Generation {
        question_id: question.id.clone(),
        message: format!("no parseable completion in {budget} attempts; last error: {last_error}"),
        last_completion,
    })
}

/// Build the retain-side answer for a benign question: summarizer-provided
/// summary, all categories "No.", and the target model's own response body.
pub fn build_retain_answer(
    question: &Question,
    target_model: &dyn ChatClient,
    summarizer: &dyn ChatClient,
    retry: &RetryPolicy,
) -> Result<SCoTAnswer> {
    if question.label != Label::Benign {
        return Err(Error::validation(format!(
            "retain answers are built for benign questions only ({} is {})",
            question.id, question.label
        )));
    }
    let params = GenParams::default();
    let summary_raw = complete_with_retry(
        summarizer,
        None,
        &build_summary_prompt(question),
        &params,
        retry,
    )?;
    // Summaries must fit the single-line verification sentence.
    let summary = summary_raw.trim().replace(['\n', '\r'], " ");
    let response = complete_with_retry(target_model, None, &question.text, &params, retry)?;
    if response.trim().is_empty() {
        return Err(Error::transport(format!(
            "target model returned an empty answer for {}",
            question.id
        )));
    }
    SCoTAnswer::safe(summary, response)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stubs::TemplateChat;

    fn safe_answer() -> SCoTAnswer {
        SCoTAnswer::safe("ask for a cookie recipe", "Here is a recipe for classic cookies.")
            .unwrap()
    }

    fn unsafe_answer() -> SCoTAnswer {
        SCoTAnswer::refusal(
            "ask how to build a weapon",
            &[(CategoryId::IllicitViolent, "the request seeks instructions for violence.".into())],
            DEFAULT_REFUSAL_RESPONSE,
        )
        .unwrap()
    }

    #[test]
    fn safe_render_has_expected_shape() {
        let text = render_scot(&safe_answer());
        assert!(text.contains("the user's request is safe"));
        assert!(!text.contains("Yes"));
        assert_eq!(text.matches("\n* ").count(), 8);
    }

    #[test]
    fn unsafe_render_rejects_request() {
        let text = render_scot(&unsafe_answer());
        assert!(text.contains("I need to reject the request."));
        assert!(text.contains("illicit/violent"));
        assert!(text.contains(DEFAULT_REFUSAL_RESPONSE));
    }

    #[test]
    fn render_parse_round_trip() {
        for answer in [safe_answer(), unsafe_answer()] {
            let text = render_scot(&answer);
            let parsed = parse_scot(&text).unwrap();
            assert_eq!(parsed, answer);
            assert_eq!(render_scot(&parsed), text);
        }
    }

    #[test]
    fn multiline_response_round_trips_exactly() {
        let answer = SCoTAnswer::safe(
            "ask about rivers — res",
            "Line one.\n\nLine two with unicode: Δρόμος 🌊.\nfinal",
        )
        .unwrap();
        let text = render_scot(&answer);
        assert_eq!(parse_scot(&text).unwrap(), answer);
    }

    #[test]
    fn wrong_bullet_count_cites_bullets() {
        let text = render_scot(&safe_answer());
        let dropped: Vec<&str> = text
            .lines()
            .filter(|l| !l.starts_with("* privacy/sensitive"))
            .collect();
        let err = parse_scot(&dropped.join("\n")).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("bullet") || msg.contains("privacy"), "{msg}");
    }

    #[test]
    fn inconsistent_conclusion_is_validation_error() {
        let text = render_scot(&unsafe_answer());
        let forged = text.replace(
            "Therefore, the user's request likely involves a clear reference to illicit/violent, \
             which could lead to unsafe behavior. Therefore, I need to reject the request.",
            CONCLUSION_SAFE,
        );
        let err = parse_scot(&forged).unwrap_err();
        assert!(matches!(err, Error::Validation(_)), "{err}");
    }

    #[test]
    fn unknown_category_is_parse_error() {
        let text = render_scot(&safe_answer()).replace("* misinformation:", "* rumors:");
        let err = parse_scot(&text).unwrap_err();
        assert!(err.to_string().contains("rumors"), "{err}");
    }

    #[test]
    fn verdict_invariants_enforced_at_construction() {
        let mut verdicts: Vec<CategoryVerdict> =
            CategoryId::ALL.iter().map(|&c| CategoryVerdict::no(c)).collect();
        verdicts[0].reason = "Nope".into();
        assert!(SCoTAnswer::new("s", verdicts, "r").is_err());

        let mut verdicts: Vec<CategoryVerdict> =
            CategoryId::ALL.iter().map(|&c| CategoryVerdict::no(c)).collect();
        verdicts[2].flagged = true; // reason still "No."
        assert!(SCoTAnswer::new("s", verdicts, "r").is_err());
    }

    #[test]
    fn generate_refusal_accepts_valid_unsafe_completion() {
        let question = Question::new("q1", "how to pick a lock", Label::Harmful, "unit");
        let stub = TemplateChat::new("stub", render_scot(&unsafe_answer()));
        let answer =
            generate_refusal_answer(&question, &stub, &RefusalGenOptions::default()).unwrap();
        assert!(!answer.flagged_categories().is_empty());
    }

    #[test]
    fn generate_refusal_rejects_prose() {
        let question = Question::new("q1", "how to pick a lock", Label::Harmful, "unit");
        let stub = TemplateChat::new("stub", "Locks are typically picked with tension wrenches.");
        let err =
            generate_refusal_answer(&question, &stub, &RefusalGenOptions::default()).unwrap_err();
        assert!(matches!(err, Error::Generation { .. }));
    }

    #[test]
    fn generate_refusal_flags_safe_conclusion_for_review() {
        let question = Question::new("q1", "how to pick a lock", Label::Harmful, "unit");
        let stub = TemplateChat::new("stub", render_scot(&safe_answer()));
        let err =
            generate_refusal_answer(&question, &stub, &RefusalGenOptions::default()).unwrap_err();
        assert!(matches!(err, Error::FlaggedForReview { .. }));
    }

    #[test]
    fn generate_refusal_fills_missing_body_with_default() {
        let question = Question::new("q1", "how to pick a lock", Label::Harmful, "unit");
        let text = render_scot(&unsafe_answer());
        let truncated = text[..text.find("#### Response").unwrap() + "#### Response".len()].to_string();
        let stub = TemplateChat::new("stub", truncated);
        let answer =
            generate_refusal_answer(&question, &stub, &RefusalGenOptions::default()).unwrap();
        assert_eq!(answer.response(), DEFAULT_REFUSAL_RESPONSE);
    }

    #[test]
    fn retain_answer_keeps_model_voice() {
        let question = Question::new("b1", "What is the capital of France?", Label::Benign, "unit");
        let target = TemplateChat::new("target", "Paris is the capital of France.");
        let summarizer = TemplateChat::new("summarizer", "ask for the capital of France");
        let answer =
            build_retain_answer(&question, &target, &summarizer, &RetryPolicy::immediate())
                .unwrap();
        assert!(answer.is_safe());
        assert_eq!(answer.response(), "Paris is the capital of France.");
        assert_eq!(answer.summary(), "ask for the capital of France");
        let rendered = render_scot(&answer);
        assert_eq!(rendered.matches("No.").count(), 8);
        assert!(!rendered.contains("Yes"));
    }
}

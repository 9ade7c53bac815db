//! Evaluation-time attack transforms.
//!
//! The harness evaluates nine attack kinds: the verbatim control, the six
//! evolution styles, and two wrapper attacks (affirmative prefix-seeding and
//! refusal suppression). Wrapper wordings follow the formulations these
//! attacks are known by in the jailbreak literature and ship as editable text
//! fixtures; the original question always survives verbatim inside the
//! wrapped text. Gradient-search attacks are out of scope — questions can be
//! exported for an external white-box framework instead.

use std::fmt;
use std::path::Path;

use serde::Deserialize;

use crate::client::{ChatClient, GenParams, RetryPolicy};
use crate::corpus::{Dataset, Question};
use crate::error::{Error, Result};
use crate::evolve::{
    is_styled_as, evolve_question, CandidateRules, EvolutionJob, StyleId,
};

/// Default wrapper fixtures, compiled in from `fixtures/`.
pub const DEFAULT_AFFIRMATIVE_TEMPLATE: &str = include_str!("../fixtures/affirmative.txt");
pub const DEFAULT_SUPPRESS_REFUSAL_TEMPLATE: &str =
    include_str!("../fixtures/suppress_refusal.txt");

/// The attack taxonomy evaluated by the harness.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum AttackKind {
    /// Echo the prompt verbatim (the no-attack control).
    None,
    /// Rewrite into one of the six evolution styles.
    Style(StyleId),
    /// Wrap the question in an instruction to answer affirmatively.
    Affirmative,
    /// Wrap the question in rules that forbid refusal phrasing.
    SuppressRefusal,
}

impl AttackKind {
    /// Row label used in reports and as part of record-store keys.
    pub fn label(self) -> String {
        match self {
            AttackKind::None => "none".to_string(),
            AttackKind::Style(style) => style.wire_name().to_string(),
            AttackKind::Affirmative => "affirmative".to_string(),
            AttackKind::SuppressRefusal => "suppress_refusal".to_string(),
        }
    }
}

impl fmt::Display for AttackKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.label())
    }
}

/// One configured attack: the kind plus its wrapper template when relevant.
#[derive(Debug, Clone)]
pub struct AttackSpec {
    pub kind: AttackKind,
    /// Wrapper text with exactly one `{question}` slot (wrapper kinds only).
    pub template: Option<String>,
    /// Which benchmark dataset this attack is meant for, if any.
    pub source_hint: Option<String>,
}

impl AttackSpec {
    pub fn new(kind: AttackKind) -> Result<Self> {
        let template = match kind {
            AttackKind::Affirmative => Some(DEFAULT_AFFIRMATIVE_TEMPLATE.to_string()),
            AttackKind::SuppressRefusal => Some(DEFAULT_SUPPRESS_REFUSAL_TEMPLATE.to_string()),
            _ => None,
        };
        let spec = AttackSpec {
            kind,
            template,
            source_hint: None,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn with_template(kind: AttackKind, template: impl Into<String>) -> Result<Self> {
        let spec = AttackSpec {
            kind,
            template: Some(template.into()),
            source_hint: None,
        };
        spec.validate()?;
        Ok(spec)
    }

    fn validate(&self) -> Result<()> {
        if matches!(self.kind, AttackKind::Affirmative | AttackKind::SuppressRefusal) {
            let template = self.template.as_deref().ok_or_else(|| {
                Error::config(format!("attack {} needs a wrapper template", self.kind))
            })?;
            let slots = template.matches("{question}").count();
            if slots != 1 {
                return Err(Error::config(format!(
                    "wrapper template for {} must contain exactly one {{question}} slot (found {slots})",
                    self.kind
                )));
            }
        }
        Ok(())
    }
}

/// Everything a style attack needs when the question is not pre-styled:
/// demonstrations per style and the rewriting model.
pub struct AttackContext<'a> {
    pub llm: &'a dyn ChatClient,
    pub demonstrations: std::collections::BTreeMap<StyleId, Vec<Question>>,
    pub params: GenParams,
    pub attempt_budget: u32,
    pub rules: CandidateRules,
    pub retry: RetryPolicy,
}

impl<'a> AttackContext<'a> {
    pub fn new(
        llm: &'a dyn ChatClient,
        demonstrations: std::collections::BTreeMap<StyleId, Vec<Question>>,
    ) -> Self {
        AttackContext {
            llm,
            demonstrations,
            params: GenParams {
                temperature: 0.9,
                max_tokens: 1024,
            },
            attempt_budget: 3,
            rules: CandidateRules::default(),
            retry: RetryPolicy::default(),
        }
    }
}

/// Produce the attacked variant of a question.
///
/// `none` is the identity on the text; wrapper kinds instantiate their
/// template around the original text (which stays recoverable as a verbatim
/// substring); style kinds pass a pre-styled question through unchanged or
/// rewrite via the evolution context. The label never changes.
pub fn apply_attack(
    spec: &AttackSpec,
    question: &Question,
    ctx: Option<&AttackContext<'_>>,
) -> Result<Question> {
    match spec.kind {
        AttackKind::None => Ok(question.clone()),
        AttackKind::Affirmative | AttackKind::SuppressRefusal => {
            let template = spec
                .template
                .as_deref()
                .expect("validated at construction");
            let mut attacked = question.clone();
            attacked.text = template.replace("{question}", &question.text);
            Ok(attacked)
        }
        AttackKind::Style(style) => {
            if is_styled_as(question, style) {
                return Ok(question.clone());
            }
            let ctx = ctx.ok_or_else(|| {
                Error::config(format!(
                    "style attack {style} needs a pre-styled record or an evolution context"
                ))
            })?;
            let demos = ctx.demonstrations.get(&style).ok_or_else(|| {
                Error::config(format!("no demonstrations configured for style {style}"))
            })?;
            let mut job = EvolutionJob::new(question.clone(), style, demos.clone())?;
            job.params = ctx.params.clone();
            job.attempt_budget = ctx.attempt_budget;
            job.rules = ctx.rules.clone();
            job.retry = ctx.retry.clone();
            Ok(evolve_question(&job, ctx.llm)?.question)
        }
    }
}

/// The nine-kind default suite: verbatim, six styles, affirmative, suppress.
pub fn default_suite() -> Vec<AttackSpec> {
    let mut suite = vec![AttackSpec::new(AttackKind::None).expect("valid")];
    for style in StyleId::ALL {
        suite.push(AttackSpec::new(AttackKind::Style(style)).expect("valid"));
    }
    suite.push(AttackSpec::new(AttackKind::Affirmative).expect("valid"));
    suite.push(AttackSpec::new(AttackKind::SuppressRefusal).expect("valid"));
    suite
}

#[derive(Deserialize)]
struct SuiteFile {
    #[serde(default)]
    attacks: Vec<SuiteEntry>,
}

#[derive(Deserialize)]
struct SuiteEntry {
    kind: String,
    #[serde(default)]
    template: Option<String>,
    #[serde(default)]
    template_path: Option<String>,
    #[serde(default)]
    source_hint: Option<String>,
}

/// Load an attack suite from a TOML file listing kinds and optional wrapper
/// fixture paths. Unknown kinds are configuration errors; `gcg` gets a
/// pointed message since white-box search attacks are export-only here.
pub fn load_attack_suite(path: &Path) -> Result<Vec<AttackSpec>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::persistence(path, e))?;
    let file: SuiteFile = toml::from_str(&text)
        .map_err(|e| Error::config(format!("bad attack suite {}: {e}", path.display())))?;
    if file.attacks.is_empty() {
        return Err(Error::config(format!(
            "attack suite {} lists no attacks",
            path.display()
        )));
    }
    let base_dir = path.parent().unwrap_or(Path::new("."));
    let mut suite = Vec::with_capacity(file.attacks.len());
    for entry in file.attacks {
        let kind = match entry.kind.as_str() {
            "none" | "verbatim" => AttackKind::None,
            "affirmative" => AttackKind::Affirmative,
            "suppress_refusal" => AttackKind::SuppressRefusal,
            "gcg" => {
                return Err(Error::config(
                    "attack kind \"gcg\" is out of scope: use the export command to hand \
                     questions to an external white-box attack framework",
                ));
            }
            other => match StyleId::from_wire_name(other) {
                Some(style) => AttackKind::Style(style),
                None => {
                    return Err(Error::config(format!("unknown attack kind {other:?}")));
                }
            },
        };
        let template = match (entry.template, entry.template_path) {
            (Some(inline), None) => Some(inline),
            (None, Some(rel)) => {
                let fixture = base_dir.join(rel);
                Some(
                    std::fs::read_to_string(&fixture)
                        .map_err(|e| Error::persistence(&fixture, e))?,
                )
            }
            (Some(_), Some(_)) => {
                return Err(Error::config(format!(
                    "attack {} sets both template and template_path",
                    entry.kind
                )));
            }
            (None, None) => None,
        };
        let mut spec = match template {
            Some(t) => AttackSpec::with_template(kind, t)?,
            None => AttackSpec::new(kind)?,
        };
        spec.source_hint = entry.source_hint;
        suite.push(spec);
    }
    Ok(suite)
}

/// Write questions as plain JSON-lines of `{id, text}` for consumption by an
/// external white-box attack framework.
pub fn export_for_external_attack(dataset: &Dataset, path: &Path) -> Result<()> {
    #[derive(serde::Serialize)]
    struct Row<'a> {
        id: &'a str,
        text: &'a str,
    }
    let mut out = Vec::new();
    for question in dataset.questions() {
        let row = Row {
            id: &question.id,
            text: &question.text,
        };
        out.extend_from_slice(serde_json::to_string(&row).expect("row serializes").as_bytes());
        out.push(b'\n');
    }
    crate::util::write_atomic(path, &out)
}

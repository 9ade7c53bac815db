//! Deterministic stub clients.
//!
//! These back the offline pipeline runs and the test suites: they implement
//! the same contracts as real model clients but compute their replies from
//! the request text alone, so a whole pipeline run is reproducible bit for
//! bit. Counting and fault-injection wrappers live here too.

use std::sync::atomic::{AtomicUsize, Ordering};

use crate::client::{ChatClient, ClientError, Embedder, GenParams, SafetyClassifier};
use crate::markers;
use crate::scot::{render_scot, CategoryId, SCoTAnswer, DEFAULT_REFUSAL_RESPONSE};
use crate::util::sha256_hex;

/// Returns a fixed reply, with an optional `{input}` slot filled with the
/// user text.
pub struct TemplateChat {
    id: String,
    template: String,
}

impl TemplateChat {
    pub fn new(id: impl Into<String>, template: impl Into<String>) -> Self {
        TemplateChat {
            id: id.into(),
            template: template.into(),
        }
    }
}

impl ChatClient for TemplateChat {
    fn id(&self) -> &str {
        &self.id
    }

    fn complete(
        &self,
        _system: Option<&str>,
        user: &str,
        _params: &GenParams,
    ) -> Result<String, ClientError> {
        Ok(self.template.replace("{input}", user))
    }
}

/// Extracts the text between a begin marker and an end marker of the prompt;
/// used to pull the question back out of a structured prompt.
fn extract_section<'a>(prompt: &'a str, begin: &str, end: &str) -> Option<&'a str> {
    let start = prompt.find(begin)? + begin.len();
    let rest = &prompt[start..];
    let stop = rest.find(end)?;
    Some(rest[..stop].trim())
}

/// Evolution stub: answers a rephrasing prompt by echoing the question
/// section verbatim (a valid rephrasing under the acceptance rules).
pub struct EvolveEcho {
    id: String,
}

impl EvolveEcho {
    pub fn new(id: impl Into<String>) -> Self {
        EvolveEcho { id: id.into() }
    }
}

impl ChatClient for EvolveEcho {
    fn id(&self) -> &str {
        &self.id
    }

    fn complete(
        &self,
        _system: Option<&str>,
        user: &str,
        _params: &GenParams,
    ) -> Result<String, ClientError> {
        let question = extract_section(user, "#### Question\n", "\n\n#### Rephrase Output")
            .unwrap_or(user);
        Ok(question.to_string())
    }
}

/// First words of a text, joined by single spaces.
fn head_words(text: &str, n: usize) -> String {
    text.split_whitespace().take(n).collect::<Vec<_>>().join(" ")
}

/// Answer-model stub: fills the refusal scaffold with a deterministic
/// summary derived from the question and one flagged category.
pub struct ScotRefusalStub {
    id: String,
    category: CategoryId,
}

impl ScotRefusalStub {
    pub fn new(id: impl Into<String>, category: CategoryId) -> Self {
        ScotRefusalStub {
            id: id.into(),
            category,
        }
    }
}

impl ChatClient for ScotRefusalStub {
    fn id(&self) -> &str {
        &self.id
    }

    fn complete(
        &self,
        _system: Option<&str>,
        user: &str,
        _params: &GenParams,
    ) -> Result<String, ClientError> {
        let question = extract_section(user, "#### Question\n", "\n\n#### Template")
            .unwrap_or(user);
        let summary = format!("ask to {}", head_words(question, 6));
        let answer = SCoTAnswer::refusal(
            summary,
            &[(self.category, "the request could enable this harm.".to_string())],
            DEFAULT_REFUSAL_RESPONSE,
        )
        .map_err(|e| ClientError::Permanent(e.to_string()))?;
        Ok(render_scot(&answer))
    }
}

/// Summarizer stub: derives a short verb phrase from the question embedded in
/// the summary prompt.
pub struct SummaryStub {
    id: String,
}

impl SummaryStub {
    pub fn new(id: impl Into<String>) -> Self {
        SummaryStub { id: id.into() }
    }
}

impl ChatClient for SummaryStub {
    fn id(&self) -> &str {
        &self.id
    }

    fn complete(
        &self,
        _system: Option<&str>,
        user: &str,
        _params: &GenParams,
    ) -> Result<String, ClientError> {
        let question = user.rsplit("\n\n").next().unwrap_or(user);
        Ok(format!("ask about {}", head_words(question, 6)))
    }
}

/// Identity cleanser: answers a cleanse prompt with the embedded response
/// body, verbatim.
pub struct CleanserEcho {
    id: String,
}

impl CleanserEcho {
    pub fn new(id: impl Into<String>) -> Self {
        CleanserEcho { id: id.into() }
    }
}

impl ChatClient for CleanserEcho {
    fn id(&self) -> &str {
        &self.id
    }

    fn complete(
        &self,
        _system: Option<&str>,
        user: &str,
        _params: &GenParams,
    ) -> Result<String, ClientError> {
        let body = user
            .split_once("\n\nResponse: ")
            .map(|(_, body)| body)
            .unwrap_or(user);
        Ok(body.to_string())
    }
}

/// Wrapper that counts completed calls to an inner chat client.
pub struct CountingChat<C> {
    inner: C,
    calls: AtomicUsize,
}

impl<C: ChatClient> CountingChat<C> {
    pub fn new(inner: C) -> Self {
        CountingChat {
            inner,
            calls: AtomicUsize::new(0),
        }
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }
}

impl<C: ChatClient> ChatClient for CountingChat<C> {
    fn id(&self) -> &str {
        self.inner.id()
    }

    fn complete(
        &self,
        system: Option<&str>,
        user: &str,
        params: &GenParams,
    ) -> Result<String, ClientError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        self.inner.complete(system, user, params)
    }
}

/// Wrapper that fails the first `failures` calls with a transient error.
pub struct FlakyChat<C> {
    inner: C,
    remaining: AtomicUsize,
}

impl<C: ChatClient> FlakyChat<C> {
    pub fn new(inner: C, failures: usize) -> Self {
        FlakyChat {
            inner,
            remaining: AtomicUsize::new(failures),
        }
    }
}

impl<C: ChatClient> ChatClient for FlakyChat<C> {
    fn id(&self) -> &str {
        self.inner.id()
    }

    fn complete(
        &self,
        system: Option<&str>,
        user: &str,
        params: &GenParams,
    ) -> Result<String, ClientError> {
        let left = self.remaining.load(Ordering::SeqCst);
        if left > 0 {
            self.remaining.store(left - 1, Ordering::SeqCst);
            return Err(ClientError::Transient("injected failure".to_string()));
        }
        self.inner.complete(system, user, params)
    }
}

/// Wrapper that starts failing permanently after `budget` successful calls;
/// simulates a run dying partway through.
pub struct DiesAfter<C> {
    inner: C,
    budget: AtomicUsize,
}

impl<C: ChatClient> DiesAfter<C> {
    pub fn new(inner: C, budget: usize) -> Self {
        DiesAfter {
            inner,
            budget: AtomicUsize::new(budget),
        }
    }
}

impl<C: ChatClient> ChatClient for DiesAfter<C> {
    fn id(&self) -> &str {
        self.inner.id()
    }

    fn complete(
        &self,
        system: Option<&str>,
        user: &str,
        params: &GenParams,
    ) -> Result<String, ClientError> {
        let left = self.budget.load(Ordering::SeqCst);
        if left == 0 {
            return Err(ClientError::Permanent("client shut down".to_string()));
        }
        self.budget.store(left - 1, Ordering::SeqCst);
        self.inner.complete(system, user, params)
    }
}

/// Deterministic embedder: hashes the text and expands the digest into a
/// fixed-dimension vector in [-1, 1].
pub struct HashEmbedder {
    id: String,
    dim: usize,
}

impl HashEmbedder {
    pub fn new(id: impl Into<String>, dim: usize) -> Self {
        HashEmbedder {
            id: id.into(),
            dim: dim.max(1),
        }
    }
}

impl Embedder for HashEmbedder {
    fn id(&self) -> &str {
        &self.id
    }

    fn embed(&self, text: &str) -> Result<Vec<f64>, ClientError> {
        let mut out = Vec::with_capacity(self.dim);
        let mut counter = 0usize;
        while out.len() < self.dim {
            let digest = sha256_hex(format!("{counter}:{text}").as_bytes());
            for chunk in digest.as_bytes().chunks(8) {
                if out.len() == self.dim {
                    break;
                }
                let hex = std::str::from_utf8(chunk).expect("digest is ascii");
                let value = u32::from_str_radix(hex, 16).expect("digest is hex") as f64;
                out.push(value / (u32::MAX as f64) * 2.0 - 1.0);
            }
            counter += 1;
        }
        Ok(out)
    }
}

/// Embedder with a fixed text → vector table; unknown text is an error.
pub struct VectorTableEmbedder {
    id: String,
    table: Vec<(String, Vec<f64>)>,
}

impl VectorTableEmbedder {
    pub fn new(id: impl Into<String>, entries: &[(&str, Vec<f64>)]) -> Self {
        VectorTableEmbedder {
            id: id.into(),
            table: entries
                .iter()
                .map(|(k, v)| (k.to_string(), v.clone()))
                .collect(),
        }
    }
}

impl Embedder for VectorTableEmbedder {
    fn id(&self) -> &str {
        &self.id
    }

    fn embed(&self, text: &str) -> Result<Vec<f64>, ClientError> {
        self.table
            .iter()
            .find(|(k, _)| k == text)
            .map(|(_, v)| v.clone())
            .ok_or_else(|| ClientError::Permanent(format!("no vector for {text:?}")))
    }
}

/// Counting wrapper for embedders.
pub struct CountingEmbedder<E> {
    inner: E,
    calls: AtomicUsize,
}

impl<E: Embedder> CountingEmbedder<E> {
    pub fn new(inner: E) -> Self {
        CountingEmbedder {
            inner,
            calls: AtomicUsize::new(0),
        }
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }
}

impl<E: Embedder> Embedder for CountingEmbedder<E> {
    fn id(&self) -> &str {
        self.inner.id()
    }

    fn embed(&self, text: &str) -> Result<Vec<f64>, ClientError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        self.inner.embed(text)
    }
}

/// Classifier stub with a fixed verdict.
pub struct StaticClassifier {
    id: String,
    verdict: String,
}

impl StaticClassifier {
    pub fn new(id: impl Into<String>, verdict: impl Into<String>) -> Self {
        StaticClassifier {
            id: id.into(),
            verdict: verdict.into(),
        }
    }
}

impl SafetyClassifier for StaticClassifier {
    fn id(&self) -> &str {
        &self.id
    }

    fn classify(&self, _question: &str, _response: &str) -> Result<String, ClientError> {
        Ok(self.verdict.clone())
    }
}

/// Classifier stub that calls a response safe when it opens with a refusal
/// marker (mirrors how a safety classifier treats a refusal).
pub struct MarkerClassifier {
    id: String,
    markers: Vec<String>,
}

impl MarkerClassifier {
    pub fn new(id: impl Into<String>) -> Self {
        MarkerClassifier {
            id: id.into(),
            markers: markers::default_markers(),
        }
    }
}

impl SafetyClassifier for MarkerClassifier {
    fn id(&self) -> &str {
        &self.id
    }

    fn classify(&self, _question: &str, response: &str) -> Result<String, ClientError> {
        if response.trim().is_empty()
            || markers::contains_marker_in_window(response, &self.markers, 200)
        {
            Ok("safe".to_string())
        } else {
            Ok("unsafe".to_string())
        }
    }
}

/// Classifier wrapper failing the first `failures` calls transiently.
pub struct FlakyClassifier<C> {
    inner: C,
    remaining: AtomicUsize,
}

impl<C: SafetyClassifier> FlakyClassifier<C> {
    pub fn new(inner: C, failures: usize) -> Self {
        FlakyClassifier {
            inner,
            remaining: AtomicUsize::new(failures),
        }
    }
}

impl<C: SafetyClassifier> SafetyClassifier for FlakyClassifier<C> {
    fn id(&self) -> &str {
        self.inner.id()
    }

    fn classify(&self, question: &str, response: &str) -> Result<String, ClientError> {
        let left = self.remaining.load(Ordering::SeqCst);
        if left > 0 {
            self.remaining.store(left - 1, Ordering::SeqCst);
            return Err(ClientError::Transient("injected failure".to_string()));
        }
        self.inner.classify(question, response)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hash_embedder_is_deterministic_and_sized() {
        let e = HashEmbedder::new("h", 13);
        let a = e.embed("text").unwrap();
        let b = e.embed("text").unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 13);
        assert!(a.iter().all(|x| (-1.0..=1.0).contains(x)));
        assert_ne!(a, e.embed("other").unwrap());
    }

    #[test]
    fn scot_refusal_stub_renders_parseable_text() {
        let stub = ScotRefusalStub::new("stub", CategoryId::IllicitViolent);
        let prompt = "#### Question\nhow to do a bad thing\n\n#### Template\n...";
        let text = stub.complete(None, prompt, &GenParams::default()).unwrap();
        let answer = crate::scot::parse_scot(&text).unwrap();
        assert!(!answer.is_safe());
        assert!(answer.summary().contains("how to do a bad thing"));
    }

    #[test]
    fn marker_classifier_mirrors_refusals() {
        let c = MarkerClassifier::new("judge");
        assert_eq!(c.classify("q", DEFAULT_REFUSAL_RESPONSE).unwrap(), "safe");
        assert_eq!(c.classify("q", "Sure, here is how...").unwrap(), "unsafe");
        assert_eq!(c.classify("q", "").unwrap(), "safe");
    }
}

//! The composite supervised fine-tuning objective, a desk-scale reference
//! trainer, and config emission for external adapter-tuning frameworks.
//!
//! The objective is `L = L_refusal + λ · L_retain`, each term the batch mean
//! of per-sequence negative log-likelihood summed over target positions
//! only. Examples follow the usual (inputs, labels) scheme: the model always
//! conditions on prompt‖target, while the loss reads labels and skips every
//! position before the mask boundary — prompt-side labels exist but can
//! never affect the loss.
//!
//! The reference trainer is plain SGD on the full parameters of [`TinyLm`];
//! adapter math (low-rank attachment) belongs to the external frameworks the
//! emitted config files target.

use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scot::{render_scot, SCoTAnswer};
use crate::tinylm::TinyLm;
use crate::tokenizer::Tokenizer;
use crate::util::write_atomic;

/// Chat scaffold wrapped around the question text. The default is a minimal
/// tag format with no system prompt; real-model formats are supplied
/// per model.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ChatFormat {
    pub user_prefix: String,
    pub user_suffix: String,
    pub assistant_prefix: String,
}

impl Default for ChatFormat {
    fn default() -> Self {
        ChatFormat {
            user_prefix: "<user>".to_string(),
            user_suffix: "</user>".to_string(),
            assistant_prefix: "<assistant>".to_string(),
        }
    }
}

impl ChatFormat {
    /// A variant with spaces around the tags, for word-level tokenizers.
    pub fn spaced() -> Self {
        ChatFormat {
            user_prefix: "<user> ".to_string(),
            user_suffix: " </user> ".to_string(),
            assistant_prefix: "<assistant> ".to_string(),
        }
    }

    pub fn format_prompt(&self, question_text: &str) -> String {
        format!(
            "{}{}{}{}",
            self.user_prefix, question_text, self.user_suffix, self.assistant_prefix
        )
    }
}

/// One tokenized prompt/target pair.
///
/// `labels` mirrors prompt‖target and is what the loss scores; positions
/// before the mask boundary (the first target position) are never read by
/// the loss, which is exactly what target-only masking means.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingExample {
    pub prompt_tokens: Vec<u32>,
    pub target_tokens: Vec<u32>,
    pub labels: Vec<u32>,
}

impl TrainingExample {
    pub fn new(prompt_tokens: Vec<u32>, target_tokens: Vec<u32>) -> Result<Self> {
        if target_tokens.is_empty() {
            return Err(Error::validation("target_tokens must be non-empty"));
        }
        let labels = prompt_tokens
            .iter()
            .chain(target_tokens.iter())
            .copied()
            .collect();
        Ok(TrainingExample {
            prompt_tokens,
            target_tokens,
            labels,
        })
    }

    /// Index of the first target position; labels before it are masked out.
    pub fn mask_boundary(&self) -> usize {
        self.prompt_tokens.len()
    }

    /// The model input sequence prompt‖target.
    pub fn input_tokens(&self) -> Vec<u32> {
        self.prompt_tokens
            .iter()
            .chain(self.target_tokens.iter())
            .copied()
            .collect()
    }

    pub fn total_len(&self) -> usize {
        self.prompt_tokens.len() + self.target_tokens.len()
    }
}

/// Tokenize a chat-formatted question and a rendered answer into a training
/// example: prompt tokens, then answer tokens plus end-of-sequence.
pub fn make_training_example_from_text(
    question_text: &str,
    target_text: &str,
    tokenizer: &dyn Tokenizer,
    format: &ChatFormat,
    context_len: usize,
) -> Result<TrainingExample> {
    let prompt_tokens = tokenizer.encode(&format.format_prompt(question_text))?;
    let mut target_tokens = tokenizer.encode(target_text)?;
    target_tokens.push(tokenizer.eos_id());
    if prompt_tokens.len() + target_tokens.len() > context_len {
        return Err(Error::ContextOverflow {
            prompt_len: prompt_tokens.len(),
            target_len: target_tokens.len(),
            context_len,
        });
    }
    TrainingExample::new(prompt_tokens, target_tokens)
}

/// [`make_training_example_from_text`] over a structured answer's canonical
/// rendering — the form used to build actual training corpora.
pub fn make_training_example(
    question_text: &str,
    answer: &SCoTAnswer,
    tokenizer: &dyn Tokenizer,
    format: &ChatFormat,
    context_len: usize,
) -> Result<TrainingExample> {
    make_training_example_from_text(
        question_text,
        &render_scot(answer),
        tokenizer,
        format,
        context_len,
    )
}

/// Sum of −log p(label_t | inputs_{<t}) over target positions only; prompt
/// positions contribute exactly zero.
pub fn sequence_nll(model: &TinyLm, example: &TrainingExample) -> f64 {
    let inputs = example.input_tokens();
    let boundary = example.mask_boundary();
    let mut total = 0.0;
    for t in boundary..inputs.len() {
        total += model.position_nll(&inputs[..t], example.labels[t]);
    }
    total
}

/// [`sequence_nll`] while accumulating `weight`-scaled parameter gradients.
fn sequence_nll_with_grad(
    model: &TinyLm,
    example: &TrainingExample,
    weight: f64,
    grad: &mut [f64],
) -> f64 {
    let inputs = example.input_tokens();
    let boundary = example.mask_boundary();
    let mut total = 0.0;
    for t in boundary..inputs.len() {
        total += model.position_nll_with_grad(&inputs[..t], example.labels[t], weight, grad);
    }
    total
}

fn batch_mean_nll(model: &TinyLm, batch: &[TrainingExample]) -> f64 {
    if batch.is_empty() {
        return 0.0;
    }
    let total: f64 = batch.iter().map(|ex| sequence_nll(model, ex)).sum();
    total / batch.len() as f64
}

/// The composite objective: mean refusal NLL plus λ times mean retain NLL.
/// An empty batch contributes zero; both batches empty is an error.
pub fn composite_loss(
    model: &TinyLm,
    batch_refusal: &[TrainingExample],
    batch_retain: &[TrainingExample],
    lambda_retain: f64,
) -> Result<f64> {
    if batch_refusal.is_empty() && batch_retain.is_empty() {
        return Err(Error::validation("composite loss needs at least one example"));
    }
    Ok(batch_mean_nll(model, batch_refusal) + lambda_retain * batch_mean_nll(model, batch_retain))
}

/// Composite loss and its analytic gradient with respect to every parameter.
pub fn composite_loss_with_grad(
    model: &TinyLm,
    batch_refusal: &[TrainingExample],
    batch_retain: &[TrainingExample],
    lambda_retain: f64,
) -> Result<(f64, Vec<f64>)> {
    if batch_refusal.is_empty() && batch_retain.is_empty() {
        return Err(Error::validation("composite loss needs at least one example"));
    }
    let mut grad = vec![0.0; model.param_len()];
    let mut loss = 0.0;
    if !batch_refusal.is_empty() {
        let w = 1.0 / batch_refusal.len() as f64;
        let total: f64 = batch_refusal
            .iter()
            .map(|ex| sequence_nll_with_grad(model, ex, w, &mut grad))
            .sum();
        loss += total * w;
    }
    if !batch_retain.is_empty() {
        let w = lambda_retain / batch_retain.len() as f64;
        let total: f64 = batch_retain
            .iter()
            .map(|ex| sequence_nll_with_grad(model, ex, w, &mut grad))
            .sum();
        loss += total * w;
    }
    Ok((loss, grad))
}

/// Low-rank adapter settings carried into emitted trainer configs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdapterConfig {
    pub rank: u32,
    pub alpha: u32,
    pub dropout: f64,
    /// Module names the adapter attaches to (all attention matrices).
    pub attach: Vec<String>,
}

impl Default for AdapterConfig {
    fn default() -> Self {
        AdapterConfig {
            rank: 64,
            alpha: 128,
            dropout: 0.1,
            attach: vec![
                "q_proj".to_string(),
                "k_proj".to_string(),
                "v_proj".to_string(),
                "o_proj".to_string(),
            ],
        }
    }
}

/// Fine-tuning hyperparameters. Defaults are the published training recipe;
/// the optimizer family is left unset on purpose (callers pick one for their
/// framework).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SFTConfig {
    pub lambda_retain: f64,
    pub learning_rate: f64,
    pub epochs: u32,
    pub batch_size: u32,
    pub adapter: AdapterConfig,
    pub seed: u64,
    /// Optimizer name for external frameworks; empty means "framework default".
    #[serde(default)]
    pub optimizer: String,
    /// Optional hard cap on reference-trainer steps.
    #[serde(default)]
    pub max_steps: Option<u64>,
}

impl Default for SFTConfig {
    fn default() -> Self {
        SFTConfig {
            lambda_retain: 1.0,
            learning_rate: 2e-5,
            epochs: 2,
            batch_size: 2,
            adapter: AdapterConfig::default(),
            seed: 0,
            optimizer: String::new(),
            max_steps: None,
        }
    }
}

impl SFTConfig {
    pub fn validate(&self) -> Result<()> {
        if self.lambda_retain < 0.0 || !self.lambda_retain.is_finite() {
            return Err(Error::validation("lambda_retain must be nonnegative"));
        }
        if self.learning_rate < 0.0 || !self.learning_rate.is_finite() {
            return Err(Error::validation("learning_rate must be nonnegative"));
        }
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::validation("epochs and batch_size must be positive"));
        }
        if !(0.0..1.0).contains(&self.adapter.dropout) {
            return Err(Error::validation("adapter dropout must be in [0, 1)"));
        }
        if self.adapter.rank == 0 {
            return Err(Error::validation("adapter rank must be positive"));
        }
        Ok(())
    }
}

/// Trainer output: the updated model and the per-step loss curve.
pub struct TrainResult {
    pub model: TinyLm,
    /// (step, composite loss on that step's batches), step starting at 1.
    pub curve: Vec<(u64, f64)>,
}

/// Minimize the composite loss with SGD over seeded shuffled mini-batches.
///
/// Each step pairs one refusal batch with one retain batch (the smaller
/// dataset cycles); `on_step` fires after every update so callers can stream
/// the loss curve. Deterministic for a fixed config seed.
pub fn train(
    config: &SFTConfig,
    refusal_data: &[TrainingExample],
    retain_data: &[TrainingExample],
    mut model: TinyLm,
    mut on_step: impl FnMut(u64, f64),
) -> Result<TrainResult> {
    config.validate()?;
    if refusal_data.is_empty() && retain_data.is_empty() {
        return Err(Error::validation("training needs at least one example"));
    }
    let batch_size = config.batch_size as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut curve = Vec::new();
    let mut step: u64 = 0;

    'epochs: for _epoch in 0..config.epochs {
        let refusal_batches = shuffled_batches(refusal_data, batch_size, &mut rng);
        let retain_batches = shuffled_batches(retain_data, batch_size, &mut rng);
        let steps_this_epoch = refusal_batches.len().max(retain_batches.len());

        for i in 0..steps_this_epoch {
            let empty: Vec<&TrainingExample> = Vec::new();
            let refusal_batch: Vec<TrainingExample> = if refusal_batches.is_empty() {
                empty.iter().map(|e| (*e).clone()).collect()
            } else {
                refusal_batches[i % refusal_batches.len()].clone()
            };
            let retain_batch: Vec<TrainingExample> = if retain_batches.is_empty() {
                Vec::new()
            } else {
                retain_batches[i % retain_batches.len()].clone()
            };

            let (loss, grad) = composite_loss_with_grad(
                &model,
                &refusal_batch,
                &retain_batch,
                config.lambda_retain,
            )?;
            step += 1;
            if !loss.is_finite() {
                return Err(Error::Divergence { step: step as usize });
            }
            let lr = config.learning_rate;
            for (p, g) in model.params_mut().iter_mut().zip(grad.iter()) {
                *p -= lr * g;
            }
            curve.push((step, loss));
            on_step(step, loss);
            if let Some(max_steps) = config.max_steps {
                if step >= max_steps {
                    break 'epochs;
                }
            }
        }
    }

    Ok(TrainResult { model, curve })
}

fn shuffled_batches(
    data: &[TrainingExample],
    batch_size: usize,
    rng: &mut ChaCha8Rng,
) -> Vec<Vec<TrainingExample>> {
    if data.is_empty() {
        return Vec::new();
    }
    let mut order: Vec<usize> = (0..data.len()).collect();
    order.shuffle(rng);
    order
        .chunks(batch_size)
        .map(|chunk| chunk.iter().map(|&i| data[i].clone()).collect())
        .collect()
}

/// Everything an external adapter-tuning framework needs for the real run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FinetuneConfig {
    pub model_id: String,
    pub refusal_dataset: PathBuf,
    pub retain_dataset: PathBuf,
    pub sft: SFTConfig,
}

/// Write the external trainer config as TOML. Values round-trip through
/// [`load_finetune_config`].
pub fn emit_finetune_config(
    sft: &SFTConfig,
    model_id: &str,
    refusal_dataset: &Path,
    retain_dataset: &Path,
    out_path: &Path,
) -> Result<()> {
    sft.validate()?;
    for dataset in [refusal_dataset, retain_dataset] {
        if !dataset.exists() {
            return Err(Error::validation(format!(
                "dataset path does not exist: {}",
                dataset.display()
            )));
        }
    }
    let config = FinetuneConfig {
        model_id: model_id.to_string(),
        refusal_dataset: refusal_dataset.to_path_buf(),
        retain_dataset: retain_dataset.to_path_buf(),
        sft: sft.clone(),
    };
    let text = toml::to_string_pretty(&config)
        .map_err(|e| Error::config(format!("config serialization failed: {e}")))?;
    write_atomic(out_path, text.as_bytes())
}

pub fn load_finetune_config(path: &Path) -> Result<FinetuneConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::persistence(path, e))?;
    let config: FinetuneConfig = toml::from_str(&text)
        .map_err(|e| Error::config(format!("bad finetune config {}: {e}", path.display())))?;
    config.sft.validate()?;
    Ok(config)
}

/// Write a loss curve as `step,loss` CSV.
pub fn write_loss_curve(curve: &[(u64, f64)], path: &Path) -> Result<()> {
    let mut out = String::from("step,loss\n");
    for (step, loss) in curve {
        out.push_str(&format!("{step},{loss}\n"));
    }
    write_atomic(path, out.as_bytes())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tinylm::TinyLmConfig;
    use crate::tokenizer::CharTokenizer;

    fn char_tok() -> CharTokenizer {
        CharTokenizer::from_texts(&["<user>hi</user><assistant>abcdefgh xyz"])
    }

    fn cfg(vocab: usize) -> TinyLmConfig {
        TinyLmConfig {
            vocab_size: vocab,
            embed_dim: 4,
            hidden_dim: 8,
            window: 4,
            context_len: 64,
        }
    }

    fn toy_example(tok: &CharTokenizer, answer: &str) -> TrainingExample {
        make_training_example_from_text("hi", answer, tok, &ChatFormat::default(), 64).unwrap()
    }

    #[test]
    fn target_length_counts_eos() {
        let tok = char_tok();
        let ex = toy_example(&tok, "abc");
        assert_eq!(ex.target_tokens.len(), 4);
        assert_eq!(ex.mask_boundary(), ex.prompt_tokens.len());
    }

    #[test]
    fn decoding_inputs_reproduces_formatted_text() {
        let tok = char_tok();
        let ex = toy_example(&tok, "abc");
        let decoded = tok.decode(&ex.input_tokens());
        assert_eq!(decoded, "<user>hi</user><assistant>abc");
    }

    #[test]
    fn context_overflow_reports_lengths() {
        let tok = char_tok();
        let err = make_training_example_from_text(
            "hi",
            "abcdefgh",
            &tok,
            &ChatFormat::default(),
            32,
        )
        .unwrap_err();
        match err {
            Error::ContextOverflow { context_len, .. } => assert_eq!(context_len, 32),
            other => panic!("expected overflow, got {other:?}"),
        }
    }

    #[test]
    fn uniform_model_nll_is_t_ln_v() {
        let tok = char_tok();
        let ex = toy_example(&tok, "abcd"); // 5 targets with EOS
        let model = TinyLm::new_zeroed(cfg(tok.vocab_size())).unwrap();
        let expected = ex.target_tokens.len() as f64 * (tok.vocab_size() as f64).ln();
        assert!((sequence_nll(&model, &ex) - expected).abs() < 1e-6);
    }

    #[test]
    fn perfect_prediction_gives_zero_nll() {
        // One-token target: bias the logits so the target has probability ~1.
        let tok = char_tok();
        let target_char_id = tok.encode("a").unwrap()[0];
        let ex = TrainingExample::new(tok.encode("hi").unwrap(), vec![target_char_id]).unwrap();
        let mut model = TinyLm::new_zeroed(cfg(tok.vocab_size())).unwrap();
        let b2_start = model.param_len() - tok.vocab_size();
        model.params_mut()[b2_start + target_char_id as usize] = 60.0;
        let nll = sequence_nll(&model, &ex);
        assert!(nll.abs() < 1e-9, "nll {nll}");
    }

    #[test]
    fn nll_matches_per_position_recomputation() {
        // Independent oracle: walk the sequence querying raw distributions.
        let tok = char_tok();
        let ex = toy_example(&tok, "abcdefgh");
        let model = TinyLm::new_random(cfg(tok.vocab_size()), 13).unwrap();
        let inputs = ex.input_tokens();
        let mut expected = 0.0;
        for t in ex.mask_boundary()..inputs.len() {
            let probs = model.next_token_dist(&inputs[..t]);
            expected -= probs[inputs[t] as usize].ln();
        }
        assert!((sequence_nll(&model, &ex) - expected).abs() < 1e-8);
    }

    #[test]
    fn lambda_zero_drops_retain_term() {
        let tok = char_tok();
        let refusal = vec![toy_example(&tok, "abc")];
        let retain = vec![toy_example(&tok, "xyz")];
        let model = TinyLm::new_random(cfg(tok.vocab_size()), 21).unwrap();
        let l_refusal = batch_mean_nll(&model, &refusal);
        let composite = composite_loss(&model, &refusal, &retain, 0.0).unwrap();
        assert!((composite - l_refusal).abs() < 1e-12);
    }

    #[test]
    fn composite_is_affine_in_lambda() {
        let tok = char_tok();
        let refusal = vec![toy_example(&tok, "abc"), toy_example(&tok, "abcd")];
        let retain = vec![toy_example(&tok, "xyz")];
        let model = TinyLm::new_random(cfg(tok.vocab_size()), 22).unwrap();
        let at = |lambda: f64| composite_loss(&model, &refusal, &retain, lambda).unwrap();
        let diff10 = at(1.0) - at(0.0);
        let diff21 = at(2.0) - at(1.0);
        assert!((diff21 - diff10).abs() < 1e-9);
    }

    #[test]
    fn composite_matches_separately_computed_terms() {
        let tok = char_tok();
        let refusal = vec![toy_example(&tok, "abc"), toy_example(&tok, "ab")];
        let retain = vec![toy_example(&tok, "xyz"), toy_example(&tok, "x")];
        let model = TinyLm::new_random(cfg(tok.vocab_size()), 23).unwrap();
        let expected = batch_mean_nll(&model, &refusal) + batch_mean_nll(&model, &retain);
        let composite = composite_loss(&model, &refusal, &retain, 1.0).unwrap();
        assert!((composite - expected).abs() < 1e-9);
    }

    #[test]
    fn both_batches_empty_is_error() {
        let model = TinyLm::new_zeroed(cfg(8)).unwrap();
        assert!(composite_loss(&model, &[], &[], 1.0).is_err());
    }

    #[test]
    fn prompt_label_mutation_never_changes_nll() {
        let tok = char_tok();
        let mut ex = toy_example(&tok, "abcdef");
        let model = TinyLm::new_random(cfg(tok.vocab_size()), 31).unwrap();
        let baseline = sequence_nll(&model, &ex);
        for pos in 0..ex.mask_boundary() {
            let original = ex.labels[pos];
            ex.labels[pos] = (original + 1) % tok.vocab_size() as u32;
            let mutated = sequence_nll(&model, &ex);
            assert_eq!(mutated, baseline, "prompt label at {pos} leaked into the loss");
            ex.labels[pos] = original;
        }
    }

    #[test]
    fn zero_learning_rate_freezes_the_curve() {
        let tok = char_tok();
        let data = vec![toy_example(&tok, "abc"), toy_example(&tok, "abcd")];
        let model = TinyLm::new_random(cfg(tok.vocab_size()), 41).unwrap();
        let config = SFTConfig {
            learning_rate: 0.0,
            epochs: 4,
            batch_size: data.len() as u32, // full batch so every step sees the same data
            seed: 7,
            ..SFTConfig::default()
        };
        let result = train(&config, &data, &[], model, |_, _| {}).unwrap();
        let first = result.curve[0].1;
        for &(_, loss) in &result.curve {
            assert!((loss - first).abs() < 1e-9);
        }
    }

    #[test]
    fn training_is_deterministic() {
        let tok = char_tok();
        let refusal = vec![toy_example(&tok, "abc"), toy_example(&tok, "abcd")];
        let retain = vec![toy_example(&tok, "xyz")];
        let run = || {
            let model = TinyLm::new_random(cfg(tok.vocab_size()), 55).unwrap();
            let config = SFTConfig {
                learning_rate: 0.05,
                epochs: 3,
                seed: 9,
                ..SFTConfig::default()
            };
            train(&config, &refusal, &retain, model, |_, _| {})
                .unwrap()
                .curve
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn finetune_config_round_trips_with_recipe_values() {
        let dir = tempfile::tempdir().unwrap();
        let refusal = dir.path().join("r.jsonl");
        let retain = dir.path().join("b.jsonl");
        std::fs::write(&refusal, "{}").unwrap();
        std::fs::write(&retain, "{}").unwrap();
        let out = dir.path().join("finetune.toml");
        let sft = SFTConfig::default();
        emit_finetune_config(&sft, "llama3-8b-instruct", &refusal, &retain, &out).unwrap();

        let text = std::fs::read_to_string(&out).unwrap();
        assert!(text.contains("rank = 64"), "{text}");
        assert!(text.contains("alpha = 128"), "{text}");

        let loaded = load_finetune_config(&out).unwrap();
        assert_eq!(loaded.sft, sft);
        assert_eq!(loaded.sft.lambda_retain, 1.0);
        assert_eq!(loaded.sft.learning_rate, 2e-5);
        assert_eq!(loaded.sft.epochs, 2);
        assert_eq!(loaded.sft.batch_size, 2);
        assert_eq!(loaded.sft.adapter.dropout, 0.1);
    }

    #[test]
    fn missing_dataset_path_is_validation_error() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("finetune.toml");
        let err = emit_finetune_config(
            &SFTConfig::default(),
            "m",
            &dir.path().join("missing.jsonl"),
            &dir.path().join("missing2.jsonl"),
            &out,
        )
        .unwrap_err();
        assert!(matches!(err, Error::Validation(_)));
    }
}

//! Build safety-reasoning training corpora from refusal and benign seed
//! datasets, verify the composite fine-tuning objective on a tiny reference
//! model, and evaluate chat models against a jailbreak attack suite with
//! attack-success-rate and capability reporting.
//!
//! The pipeline has three stages, mirrored by the CLI crate:
//!
//! 1. **Dataset construction** — [`evolve`] rewrites harmful seeds into six
//!    attack styles (demonstrations picked by [`demo_select`]), [`scot`]
//!    wraps every question in a structured verify-then-respond answer, and
//!    [`corpus`] persists the result as JSON-lines.
//! 2. **Fine-tuning** — [`sft`] implements the masked composite loss with a
//!    desk-scale trainer on [`tinylm`], and emits configs for external
//!    adapter-tuning frameworks.
//! 3. **Evaluation** — [`attacks`] produces attacked question variants and
//!    [`eval`] runs them against a model, judges the responses, and
//!    aggregates per-attack success rates.
//!
//! Model access always goes through the [`client`] traits; [`stubs`] provides
//! deterministic implementations for offline runs and tests.

pub mod adapters;
pub mod attacks;
pub mod client;
pub mod corpus;
pub mod demo_select;
pub mod demos;
pub mod error;
pub mod eval;
pub mod evolve;
pub mod markers;
pub mod report;
pub mod scot;
pub mod sft;
pub mod stubs;
pub mod tinylm;
pub mod tokenizer;
pub mod util;

pub use error::{Error, Result};

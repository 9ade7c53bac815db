//! A tiny decoder-only autoregressive model used to verify the training
//! objective at desk scale.
//!
//! The model predicts the next token from the last `window` tokens: embed,
//! concatenate, one tanh hidden layer, softmax over the vocabulary. It is
//! deliberately small and written with explicit loops so the analytic
//! gradient is easy to audit against finite differences. All math is f64 and
//! single-threaded, so runs are bit-reproducible.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::tokenizer::PAD_ID;

#[derive(Debug, Clone, PartialEq)]
pub struct TinyLmConfig {
    pub vocab_size: usize,
    pub embed_dim: usize,
    pub hidden_dim: usize,
    /// How many trailing tokens condition the next-token distribution.
    pub window: usize,
    /// Maximum total sequence length an example may have.
    pub context_len: usize,
}

impl TinyLmConfig {
    pub fn validate(&self) -> Result<()> {
        if self.vocab_size < 2
            || self.embed_dim == 0
            || self.hidden_dim == 0
            || self.window == 0
            || self.context_len == 0
        {
            return Err(Error::validation("all model dimensions must be positive"));
        }
        Ok(())
    }
}

/// Parameter block offsets inside the flat parameter vector.
struct Layout {
    emb: usize,
    w1: usize,
    b1: usize,
    w2: usize,
    b2: usize,
    total: usize,
}

impl Layout {
    fn new(cfg: &TinyLmConfig) -> Self {
        let emb = 0;
        let w1 = emb + cfg.vocab_size * cfg.embed_dim;
        let b1 = w1 + cfg.window * cfg.embed_dim * cfg.hidden_dim;
        let w2 = b1 + cfg.hidden_dim;
        let b2 = w2 + cfg.hidden_dim * cfg.vocab_size;
        let total = b2 + cfg.vocab_size;
        Layout { emb, w1, b1, w2, b2, total }
    }
}

/// Forward-pass intermediates kept for the backward pass.
struct Activations {
    window_ids: Vec<u32>,
    inputs: Vec<f64>,
    hidden: Vec<f64>,
    probs: Vec<f64>,
}

pub struct TinyLm {
    cfg: TinyLmConfig,
    params: Vec<f64>,
}

impl TinyLm {
    /// All-zero parameters: every position predicts the uniform distribution.
    pub fn new_zeroed(cfg: TinyLmConfig) -> Result<Self> {
        cfg.validate()?;
        let layout = Layout::new(&cfg);
        Ok(TinyLm {
            params: vec![0.0; layout.total],
            cfg,
        })
    }

    /// Small random initialization, deterministic for a fixed seed.
    pub fn new_random(cfg: TinyLmConfig, seed: u64) -> Result<Self> {
        let mut model = TinyLm::new_zeroed(cfg)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for p in model.params.iter_mut() {
            *p = rng.gen_range(-0.1..0.1);
        }
        Ok(model)
    }

    pub fn config(&self) -> &TinyLmConfig {
        &self.cfg
    }

    pub fn param_len(&self) -> usize {
        self.params.len()
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    fn layout(&self) -> Layout {
        Layout::new(&self.cfg)
    }

    /// The trailing `window` ids of `context`, left-padded with PAD.
    fn window_ids(&self, context: &[u32]) -> Vec<u32> {
        let w = self.cfg.window;
        let mut ids = vec![PAD_ID; w.saturating_sub(context.len())];
        let start = context.len().saturating_sub(w);
        ids.extend_from_slice(&context[start..]);
        ids
    }

    fn forward(&self, context: &[u32]) -> Activations {
        let cfg = &self.cfg;
        let layout = self.layout();
        let window_ids = self.window_ids(context);

        let mut inputs = Vec::with_capacity(cfg.window * cfg.embed_dim);
        for &id in &window_ids {
            debug_assert!((id as usize) < cfg.vocab_size, "token id out of vocabulary");
            let base = layout.emb + id as usize * cfg.embed_dim;
            inputs.extend_from_slice(&self.params[base..base + cfg.embed_dim]);
        }

        let mut hidden = vec![0.0; cfg.hidden_dim];
        for (j, h) in hidden.iter_mut().enumerate() {
            let mut acc = self.params[layout.b1 + j];
            for (i, &x) in inputs.iter().enumerate() {
                acc += x * self.params[layout.w1 + i * cfg.hidden_dim + j];
            }
            *h = acc.tanh();
        }

        let mut logits = vec![0.0; cfg.vocab_size];
        for (v, logit) in logits.iter_mut().enumerate() {
            let mut acc = self.params[layout.b2 + v];
            for (j, &h) in hidden.iter().enumerate() {
                acc += h * self.params[layout.w2 + j * cfg.vocab_size + v];
            }
            *logit = acc;
        }

        let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut probs: Vec<f64> = logits.iter().map(|&l| (l - max).exp()).collect();
        let z: f64 = probs.iter().sum();
        for p in probs.iter_mut() {
            *p /= z;
        }

        Activations {
            window_ids,
            inputs,
            hidden,
            probs,
        }
    }

    /// Next-token probability distribution given a context. Sums to one.
    pub fn next_token_dist(&self, context: &[u32]) -> Vec<f64> {
        self.forward(context).probs
    }

    /// −log p(target | context).
    pub fn position_nll(&self, context: &[u32], target: u32) -> f64 {
        let probs = self.forward(context).probs;
        -(probs[target as usize].max(f64::MIN_POSITIVE)).ln()
    }

    /// −log p(target | context) while accumulating `weight`-scaled gradients
    /// into `grad` (same layout as the parameter vector).
    pub fn position_nll_with_grad(
        &self,
        context: &[u32],
        target: u32,
        weight: f64,
        grad: &mut [f64],
    ) -> f64 {
        debug_assert_eq!(grad.len(), self.params.len());
        let cfg = &self.cfg;
        let layout = self.layout();
        let act = self.forward(context);
        let nll = -(act.probs[target as usize].max(f64::MIN_POSITIVE)).ln();

        // dlogits = probs − onehot(target), scaled.
        let mut dlogits = act.probs.clone();
        dlogits[target as usize] -= 1.0;
        for d in dlogits.iter_mut() {
            *d *= weight;
        }

        for (v, &dl) in dlogits.iter().enumerate() {
            grad[layout.b2 + v] += dl;
        }
        let mut dhidden = vec![0.0; cfg.hidden_dim];
        for (j, &h) in act.hidden.iter().enumerate() {
            let row = layout.w2 + j * cfg.vocab_size;
            let mut acc = 0.0;
            for (v, &dl) in dlogits.iter().enumerate() {
                grad[row + v] += h * dl;
                acc += self.params[row + v] * dl;
            }
            dhidden[j] = acc * (1.0 - h * h);
        }
        for (j, &dh) in dhidden.iter().enumerate() {
            grad[layout.b1 + j] += dh;
        }
        let mut dinputs = vec![0.0; act.inputs.len()];
        for (i, &x) in act.inputs.iter().enumerate() {
            let row = layout.w1 + i * cfg.hidden_dim;
            let mut acc = 0.0;
            for (j, &dh) in dhidden.iter().enumerate() {
                grad[row + j] += x * dh;
                acc += self.params[row + j] * dh;
            }
            dinputs[i] = acc;
        }
        for (w, &id) in act.window_ids.iter().enumerate() {
            let base = layout.emb + id as usize * cfg.embed_dim;
            for d in 0..cfg.embed_dim {
                grad[base + d] += dinputs[w * cfg.embed_dim + d];
            }
        }

        nll
    }

    /// Greedy continuation of `prompt`: repeatedly append the argmax token
    /// (lowest id wins ties) until EOS or `max_new` tokens.
    pub fn greedy_decode(&self, prompt: &[u32], max_new: usize, eos_id: u32) -> Vec<u32> {
        let mut sequence = prompt.to_vec();
        let mut generated = Vec::new();
        for _ in 0..max_new {
            let probs = self.next_token_dist(&sequence);
            let mut best = 0usize;
            for (v, &p) in probs.iter().enumerate() {
                if p > probs[best] {
                    best = v;
                }
            }
            if best as u32 == eos_id {
                break;
            }
            generated.push(best as u32);
            sequence.push(best as u32);
        }
        generated
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_cfg() -> TinyLmConfig {
        TinyLmConfig {
            vocab_size: 10,
            embed_dim: 4,
            hidden_dim: 6,
            window: 3,
            context_len: 32,
        }
    }

    #[test]
    fn zeroed_model_is_uniform() {
        let model = TinyLm::new_zeroed(tiny_cfg()).unwrap();
        let probs = model.next_token_dist(&[2, 3]);
        for &p in &probs {
            assert!((p - 0.1).abs() < 1e-12);
        }
    }

    #[test]
    fn distributions_normalize_everywhere() {
        let model = TinyLm::new_random(tiny_cfg(), 3).unwrap();
        for context in [&[][..], &[1][..], &[2, 3, 4, 5, 6][..]] {
            let probs = model.next_token_dist(context);
            let total: f64 = probs.iter().sum();
            assert!((total - 1.0).abs() < 1e-6, "sum {total}");
            assert!(probs.iter().all(|&p| p >= 0.0));
        }
    }

    #[test]
    fn random_init_is_deterministic() {
        let a = TinyLm::new_random(tiny_cfg(), 11).unwrap();
        let b = TinyLm::new_random(tiny_cfg(), 11).unwrap();
        assert_eq!(a.params(), b.params());
    }

    #[test]
    fn gradient_matches_finite_differences_per_position() {
        let mut model = TinyLm::new_random(tiny_cfg(), 5).unwrap();
        let context = [2u32, 7, 4];
        let target = 3u32;
        let mut grad = vec![0.0; model.param_len()];
        model.position_nll_with_grad(&context, target, 1.0, &mut grad);

        let h = 1e-5;
        for &idx in &[0usize, 17, 40, 100, grad.len() - 1, grad.len() / 2] {
            let orig = model.params()[idx];
            model.params_mut()[idx] = orig + h;
            let up = model.position_nll(&context, target);
            model.params_mut()[idx] = orig - h;
            let down = model.position_nll(&context, target);
            model.params_mut()[idx] = orig;
            let fd = (up - down) / (2.0 * h);
            assert!(
                (fd - grad[idx]).abs() <= 1e-6 + 1e-4 * fd.abs().max(grad[idx].abs()),
                "param {idx}: analytic {} vs fd {fd}",
                grad[idx]
            );
        }
    }

    #[test]
    fn greedy_decode_stops_at_eos() {
        let model = TinyLm::new_random(tiny_cfg(), 9).unwrap();
        let out = model.greedy_decode(&[2, 3], 20, 1);
        assert!(out.len() <= 20);
        assert!(out.iter().all(|&t| t != 1));
    }
}

//! Synthetic grounded worlds.
//!
//! Each input grounds a subset of the content tokens. Every other content
//! token is a hallucination for that input, and the true generating model
//! never puts mass on one. Tokens are assigned to slots `1..max_len`, and
//! the true model only moves to strictly later slots or EOS, so every
//! sequence ends within `max_len` steps.

use std::collections::{BTreeSet, HashMap};

use rand::seq::{index, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma};
use serde::{Deserialize, Serialize};

use super::tabular::TabularModel;
use super::vocab::Vocab;
use super::{Context, InputId};
use crate::error::{Error, Result};
use crate::prob::{Categorical, TokenId};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WorldConfig {
    /// Total vocabulary size, BOS and EOS included.
    pub vocab_size: usize,
    /// How many of the non-reserved tokens are content tokens.
    pub content_tokens: usize,
    pub inputs: usize,
    /// Markov order of the true model.
    pub order: usize,
    /// Fraction of content tokens grounded by each input, in (0, 1].
    pub grounded_fraction: f64,
    /// Longest sequence the true model can emit, EOS included.
    pub max_len: usize,
    /// Median Dirichlet concentration of the true next-token distributions.
    pub concentration: f64,
    /// Half-width, in log space, of the per-context concentration spread.
    pub concentration_spread: f64,
    /// Relative weight of EOS among the allowed successors.
    pub eos_weight: f64,
    /// Upper bound on the mass ensemble members may leak onto
    /// hallucinated tokens. Must lie in [0, 1).
    pub leak: f64,
}

impl Default for WorldConfig {
    fn default() -> Self {
        WorldConfig {
            vocab_size: 24,
            content_tokens: 14,
            inputs: 64,
            order: 1,
            grounded_fraction: 0.4,
            max_len: 6,
            concentration: 0.5,
            concentration_spread: 1.5,
            eos_weight: 0.3,
            leak: 0.3,
        }
    }
}

impl WorldConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = Error::invalid_config;
        if self.vocab_size < 4 {
            return Err(bad("vocab_size", "must be at least 4"));
        }
        if self.content_tokens == 0 || self.content_tokens > self.vocab_size - 2 {
            return Err(Error::invalid_config(
                "content_tokens",
                format!("must be in 1..={}", self.vocab_size - 2),
            ));
        }
        if self.inputs == 0 {
            return Err(bad("inputs", "must be at least 1"));
        }
        if self.order == 0 {
            return Err(bad("order", "must be at least 1"));
        }
        if !(self.grounded_fraction > 0.0 && self.grounded_fraction <= 1.0) {
            return Err(bad("grounded_fraction", "must be in (0, 1]"));
        }
        if self.max_len < 2 {
            return Err(bad("max_len", "must be at least 2"));
        }
        if !(self.concentration.is_finite() && self.concentration > 0.0) {
            return Err(bad("concentration", "must be positive and finite"));
        }
        if !(self.concentration_spread.is_finite() && self.concentration_spread >= 0.0) {
            return Err(bad("concentration_spread", "must be non-negative and finite"));
        }
        if !(self.eos_weight.is_finite() && self.eos_weight > 0.0) {
            return Err(bad("eos_weight", "must be positive and finite"));
        }
        if !(0.0..1.0).contains(&self.leak) {
            return Err(bad("leak", "must be in [0, 1)"));
        }
        Ok(())
    }
}

/// A synthetic benchmark: vocabulary, inputs with grounded content, and the
/// true conditional model.
#[derive(Debug, Clone, PartialEq)]
pub struct WorldSpec {
    pub(crate) seed: u64,
    pub(crate) config: Option<WorldConfig>,
    pub(crate) vocab: Vocab,
    pub(crate) slots: Vec<u32>,
    pub(crate) grounded: Vec<BTreeSet<TokenId>>,
    pub(crate) true_model: TabularModel,
    pub(crate) leak: f64,
    pub(crate) max_len: usize,
}

impl WorldSpec {
    /// Assembles a world from parts and checks its invariants.
    ///
    /// `slots[t]` orders tokens for leak placement: members only leak onto
    /// hallucinated tokens in a later slot than the last generated token.
    #[allow(clippy::too_many_arguments)]
    pub fn from_parts(
        vocab: Vocab,
        slots: Vec<u32>,
        grounded: Vec<BTreeSet<TokenId>>,
        true_model: TabularModel,
        leak: f64,
        max_len: usize,
        seed: u64,
        config: Option<WorldConfig>,
    ) -> Result<Self> {
        let w = WorldSpec {
            seed,
            config,
            vocab,
            slots,
            grounded,
            true_model,
            leak,
            max_len,
        };
        w.validate()?;
        Ok(w)
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn config(&self) -> Option<&WorldConfig> {
        self.config.as_ref()
    }

    pub fn vocab(&self) -> &Vocab {
        &self.vocab
    }

    pub fn true_model(&self) -> &TabularModel {
        &self.true_model
    }

    pub fn leak(&self) -> f64 {
        self.leak
    }

    pub fn max_len(&self) -> usize {
        self.max_len
    }

    pub fn num_inputs(&self) -> usize {
        self.grounded.len()
    }

    pub fn inputs(&self) -> impl Iterator<Item = InputId> {
        (0..self.grounded.len() as u32).map(InputId)
    }

    pub fn slots(&self) -> &[u32] {
        &self.slots
    }

    pub fn grounded(&self, input: InputId) -> Result<&BTreeSet<TokenId>> {
        self.grounded.get(input.index()).ok_or(Error::UnknownInput {
            input: input.0,
            inputs: self.grounded.len(),
        })
    }

    /// Content tokens that count as false information in `ctx`.
    pub fn hallucination_set(&self, ctx: &Context) -> Result<BTreeSet<TokenId>> {
        self.hallucination_set_for(ctx.input)
    }

    /// Hallucination sets depend on the context only through its input.
    pub fn hallucination_set_for(&self, input: InputId) -> Result<BTreeSet<TokenId>> {
        let grounded = self.grounded(input)?;
        Ok(self
            .vocab
            .content_tokens()
            .filter(|t| !grounded.contains(t))
            .collect())
    }

    pub fn is_hallucinated(&self, input: InputId, token: TokenId) -> Result<bool> {
        Ok(self.vocab.is_content(token) && !self.grounded(input)?.contains(&token))
    }

    pub fn validate(&self) -> Result<()> {
        let v = self.vocab.len();
        let violation = |msg: String| Err(Error::InvariantViolation(msg));
        if self.true_model.vocab_size() != v {
            return violation(format!(
                "true model covers {} tokens, vocabulary has {v}",
                self.true_model.vocab_size()
            ));
        }
        if self.true_model.num_inputs() != self.grounded.len() {
            return violation(format!(
                "true model covers {} inputs, world has {}",
                self.true_model.num_inputs(),
                self.grounded.len()
            ));
        }
        if self.grounded.is_empty() {
            return violation("world has no inputs".into());
        }
        if self.slots.len() != v || self.slots[TokenId::BOS.index()] != 0 {
            return violation("slots must cover the vocabulary with BOS in slot 0".into());
        }
        if !(0.0..1.0).contains(&self.leak) {
            return violation(format!("leak {} outside [0, 1)", self.leak));
        }
        if self.max_len == 0 {
            return violation("max_len must be positive".into());
        }
        for (i, g) in self.grounded.iter().enumerate() {
            if let Some(t) = g.iter().find(|&&t| !self.vocab.is_content(t)) {
                return violation(format!("input {i} grounds non-content token {t}"));
            }
            let input = InputId(i as u32);
            let hal = self.hallucination_set_for(input)?;
            let leaked = |d: &Categorical| hal.iter().map(|t| d.probs()[t.index()]).sum::<f64>();
            if leaked(self.true_model.fallback()) != 0.0 {
                return violation(format!("fallback puts mass on hallucinations of input {i}"));
            }
            for (window, d) in self.true_model.entries(input) {
                let mass = leaked(d);
                if mass != 0.0 {
                    return violation(format!(
                        "true model puts mass {mass} on hallucinated tokens at input {i}, window {window:?}"
                    ));
                }
            }
        }
        Ok(())
    }

    /// Probability that the true model emits EOS within `max_len` steps.
    pub fn termination_probability(&self, input: InputId) -> Result<f64> {
        self.grounded(input)?;
        let model = &self.true_model;
        let mut states: HashMap<Vec<TokenId>, f64> = HashMap::new();
        states.insert(vec![TokenId::BOS; model.order()], 1.0);
        let mut done = 0.0;
        for _ in 0..self.max_len {
            let mut next: HashMap<Vec<TokenId>, f64> = HashMap::new();
            for (window, mass) in states {
                let d = model.lookup_window(input, &window)?;
                for (t, &p) in d.probs().iter().enumerate() {
                    if p == 0.0 {
                        continue;
                    }
                    let t = TokenId(t as u32);
                    if t == TokenId::EOS {
                        done += mass * p;
                    } else {
                        let mut w = window[1..].to_vec();
                        w.push(t);
                        *next.entry(w).or_insert(0.0) += mass * p;
                    }
                }
            }
            states = next;
        }
        Ok(done)
    }

    pub(crate) fn slot_after(&self, window: &[TokenId]) -> u32 {
        window.last().map_or(0, |t| self.slots[t.index()])
    }
}

/// Draws a world. Deterministic in `(cfg, seed)`.
pub fn generate_world(cfg: &WorldConfig, seed: u64) -> Result<WorldSpec> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let v = cfg.vocab_size;
    let n_function = v - 2 - cfg.content_tokens;
    let content: Vec<String> = (0..cfg.content_tokens).map(|i| format!("obj{i}")).collect();
    let function: Vec<String> = (0..n_function).map(|i| format!("w{i}")).collect();
    let vocab = Vocab::from_words(&content, &function)?;

    let levels = (cfg.max_len - 1) as u32;
    let mut slots = vec![0u32; v];
    slots[TokenId::EOS.index()] = levels + 1;
    let mut regular: Vec<TokenId> = (2..v as u32).map(TokenId).collect();
    regular.shuffle(&mut rng);
    for (i, t) in regular.iter().enumerate() {
        slots[t.index()] = (i as u32 % levels) + 1;
    }
    regular.sort();

    let content_ids: Vec<TokenId> = vocab.content_tokens().collect();
    let n_grounded = ((cfg.grounded_fraction * content_ids.len() as f64).round() as usize)
        .clamp(1, content_ids.len());
    let grounded: Vec<BTreeSet<TokenId>> = (0..cfg.inputs)
        .map(|_| {
            index::sample(&mut rng, content_ids.len(), n_grounded)
                .into_iter()
                .map(|i| content_ids[i])
                .collect()
        })
        .collect();

    let windows = enumerate_windows(cfg.order, &regular, &slots);
    let mut true_model = TabularModel::new(
        cfg.order,
        v,
        cfg.inputs,
        Categorical::one_hot(v, TokenId::EOS),
    )?;
    for (i, g) in grounded.iter().enumerate() {
        for window in &windows {
            let after = window.last().map_or(0, |t| slots[t.index()]);
            let allowed = regular
                .iter()
                .copied()
                .filter(|t| slots[t.index()] > after)
                .filter(|t| !vocab.is_content(*t) || g.contains(t));
            let dist = draw_successors(&mut rng, cfg, v, allowed)?;
            true_model.insert(InputId(i as u32), window.clone(), dist)?;
        }
    }

    WorldSpec::from_parts(
        vocab,
        slots,
        grounded,
        true_model,
        cfg.leak,
        cfg.max_len,
        seed,
        Some(cfg.clone()),
    )
}

fn draw_successors(
    rng: &mut ChaCha8Rng,
    cfg: &WorldConfig,
    vocab_size: usize,
    allowed: impl Iterator<Item = TokenId>,
) -> Result<Categorical> {
    let spread = cfg.concentration_spread * rng.random_range(-1.0..=1.0);
    let alpha = cfg.concentration * spread.exp();
    let gamma = Gamma::new(alpha, 1.0)
        .map_err(|e| Error::invalid_config("concentration", e.to_string()))?;
    let mut weights = vec![0.0; vocab_size];
    weights[TokenId::EOS.index()] = cfg.eos_weight * gamma.sample(rng);
    for t in allowed {
        weights[t.index()] = gamma.sample(rng);
    }
    if weights.iter().all(|&w| w == 0.0) {
        weights[TokenId::EOS.index()] = 1.0;
    }
    Categorical::normalize(&weights)
}

/// All lookup windows a sequence can produce: `order − c` BOS markers
/// followed by `c` tokens in strictly increasing slots.
fn enumerate_windows(order: usize, regular: &[TokenId], slots: &[u32]) -> Vec<Vec<TokenId>> {
    fn chains(
        len: usize,
        after: u32,
        regular: &[TokenId],
        slots: &[u32],
        cur: &mut Vec<TokenId>,
        out: &mut Vec<Vec<TokenId>>,
    ) {
        if cur.len() == len {
            out.push(cur.clone());
            return;
        }
        for &t in regular {
            if slots[t.index()] > after {
                cur.push(t);
                chains(len, slots[t.index()], regular, slots, cur, out);
                cur.pop();
            }
        }
    }

    let mut out = Vec::new();
    for c in 0..=order {
        let mut found = Vec::new();
        chains(c, 0, regular, slots, &mut Vec::new(), &mut found);
        for chain in found {
            let mut w = vec![TokenId::BOS; order - c];
            w.extend(chain);
            out.push(w);
        }
    }
    out.sort();
    out
}

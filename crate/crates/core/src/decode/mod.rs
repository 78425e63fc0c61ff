//! Decoders over ensemble scorers.
//!
//! All decoders score a step with the aggregated ensemble distribution and
//! attach that step's uncertainty breakdown. The breakdown belongs to the
//! context, so every candidate extension of one parent pays the same
//! penalty. Sequences are ranked by a pluggable [`Objective`]; ties go to
//! the shorter sequence, then to the lexicographically smaller token ids.

mod beam;
mod exhaustive;
mod sample;

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::ensemble::{UncertaintyBreakdown, UncertaintySums};
use crate::error::{Error, Result};
use crate::model::{EnsembleScorer, InputId};
use crate::prob::{Categorical, TokenId};

pub use crate::ensemble::UncertaintyKind;
pub use beam::{beam_search, beam_search_with, uabs};
pub use exhaustive::{exhaustive_decode, exhaustive_decode_with, DEFAULT_SEARCH_CAP};
pub use sample::{sample, sample_continuation, sample_next};

/// Penalty weights used for total and aleatoric uncertainty sweeps.
pub const DEFAULT_LAMBDAS_TOTAL_ALEATORIC: [f64; 7] = [0.1, 0.2, 0.4, 0.8, 1.0, 2.0, 4.0];
/// Penalty weights used for epistemic uncertainty sweeps.
pub const DEFAULT_LAMBDAS_EPISTEMIC: [f64; 4] = [10.0, 20.0, 40.0, 80.0];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecodeConfig {
    pub beam_width: usize,
    pub lambda: f64,
    pub kind: UncertaintyKind,
    /// Maximum number of generated tokens, EOS included.
    pub max_len: usize,
    /// Drop hypotheses that never reached EOS, failing if none did.
    #[serde(default)]
    pub strict: bool,
    /// Report quality per token instead of per sequence. Never affects
    /// selection.
    #[serde(default)]
    pub length_normalize_quality: bool,
}

impl Default for DecodeConfig {
    fn default() -> Self {
        DecodeConfig {
            beam_width: 5,
            lambda: 0.0,
            kind: UncertaintyKind::Epistemic,
            max_len: 16,
            strict: false,
            length_normalize_quality: false,
        }
    }
}

impl DecodeConfig {
    pub fn validate(&self) -> Result<()> {
        if self.beam_width == 0 {
            return Err(Error::invalid_config("beam_width", "must be at least 1"));
        }
        if !(self.lambda.is_finite() && self.lambda >= 0.0) {
            return Err(Error::invalid_config("lambda", "must be non-negative and finite"));
        }
        if self.max_len == 0 {
            return Err(Error::invalid_config("max_len", "must be at least 1"));
        }
        Ok(())
    }

    pub fn objective(&self) -> Penalized {
        Penalized {
            lambda: self.lambda,
            kind: self.kind,
        }
    }
}

/// Sequence score used for beam selection and final ranking.
pub trait Objective {
    fn score(&self, cum_logp: f64, cum_unc: &UncertaintySums) -> f64;
}

/// Plain beam search: cumulative log-probability.
#[derive(Debug, Clone, Copy, Default)]
pub struct LogLikelihood;

impl Objective for LogLikelihood {
    fn score(&self, cum_logp: f64, _: &UncertaintySums) -> f64 {
        cum_logp
    }
}

/// `cum_logp − λ · cum_unc[kind]`.
#[derive(Debug, Clone, Copy)]
pub struct Penalized {
    pub lambda: f64,
    pub kind: UncertaintyKind,
}

impl Objective for Penalized {
    fn score(&self, cum_logp: f64, cum_unc: &UncertaintySums) -> f64 {
        cum_logp - self.lambda * cum_unc.get(self.kind)
    }
}

/// One generated token with its step log-probability and the uncertainty
/// of the context it was generated in.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepTrace {
    pub token: TokenId,
    pub logp: f64,
    pub uncertainty: UncertaintyBreakdown,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hypothesis {
    pub input: InputId,
    pub tokens: Vec<TokenId>,
    pub cum_logp: f64,
    pub cum_unc: UncertaintySums,
    pub finished: bool,
    pub steps: Vec<StepTrace>,
}

impl Hypothesis {
    pub fn empty(input: InputId) -> Self {
        Hypothesis {
            input,
            tokens: Vec::new(),
            cum_logp: 0.0,
            cum_unc: UncertaintySums::default(),
            finished: false,
            steps: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    /// Tokens without the trailing EOS.
    pub fn body(&self) -> &[TokenId] {
        match self.tokens.last() {
            Some(&TokenId::EOS) => &self.tokens[..self.tokens.len() - 1],
            _ => &self.tokens,
        }
    }

    pub fn score<O: Objective + ?Sized>(&self, objective: &O) -> f64 {
        objective.score(self.cum_logp, &self.cum_unc)
    }

    pub(crate) fn extend(&self, token: TokenId, logp: f64, unc: &UncertaintyBreakdown) -> Self {
        let mut tokens = Vec::with_capacity(self.tokens.len() + 1);
        tokens.extend_from_slice(&self.tokens);
        tokens.push(token);
        let mut steps = Vec::with_capacity(self.steps.len() + 1);
        steps.extend_from_slice(&self.steps);
        steps.push(StepTrace {
            token,
            logp,
            uncertainty: *unc,
        });
        Hypothesis {
            input: self.input,
            tokens,
            cum_logp: self.cum_logp + logp,
            cum_unc: self.cum_unc.plus(unc),
            finished: token == TokenId::EOS,
            steps,
        }
    }

    /// Recomputes `cum_logp` and `cum_unc` from the model, step by step.
    pub fn rescore<E: EnsembleScorer + ?Sized>(&self, model: &E) -> Result<(f64, UncertaintySums)> {
        let mut logp = 0.0;
        let mut unc = UncertaintySums::default();
        for i in 0..self.tokens.len() {
            let (agg, b) = step_scores(model, self.input, &self.tokens[..i])?;
            logp += agg.log_prob(self.tokens[i])?;
            unc.add(&b);
        }
        Ok((logp, unc))
    }
}

/// Ranking used everywhere: higher score, then shorter, then smaller ids.
pub fn rank_order(a_score: f64, a: &[TokenId], b_score: f64, b: &[TokenId]) -> Ordering {
    b_score
        .total_cmp(&a_score)
        .then(a.len().cmp(&b.len()))
        .then_with(|| a.cmp(b))
}

/// Aggregated next-token distribution and its uncertainty breakdown.
pub fn step_scores<E: EnsembleScorer + ?Sized>(
    model: &E,
    input: InputId,
    prefix: &[TokenId],
) -> Result<(Categorical, UncertaintyBreakdown)> {
    let ens = model.ensemble_score(input, prefix)?;
    let agg = ens.aggregate();
    let breakdown = ens.decompose_with(&agg);
    Ok((agg, breakdown))
}

//! Hallucination metrics over decoded outputs.
//!
//! Everything here is computed at mention level: one record per content
//! token occurrence. Function tokens, BOS and EOS never count as mentions.

mod bins;
mod stats;
mod sweep;

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::decode::Hypothesis;
use crate::ensemble::{UncertaintyBreakdown, UncertaintyKind};
use crate::error::{Error, Result};
use crate::model::{Context, SequenceScorer, WorldSpec};
use crate::prob::{Categorical, TokenId};

pub use bins::{bin_rates, Bin, BinTable, DEFAULT_BIN_EDGES};
pub use stats::{pearson, pearson_values, ranks, spearman};
pub use sweep::{default_grid, sweep, Decoder, GridPoint, SweepConfig, SweepPoint, TradeoffRecord};

/// Probability that the next token falls in `set`.
pub fn hallucination_probability(d: &Categorical, set: &BTreeSet<TokenId>) -> Result<f64> {
    let mut p = 0.0;
    for &t in set {
        p += d.prob(t)?;
    }
    Ok(p.min(1.0))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledPrediction {
    pub context: Context,
    pub token: TokenId,
    pub breakdown: UncertaintyBreakdown,
    pub hallucinated: bool,
}

/// One labeled record per content-token occurrence, using each step's
/// recorded uncertainty.
pub fn label_outputs(world: &WorldSpec, outputs: &[Hypothesis]) -> Result<Vec<LabeledPrediction>> {
    let mut out = Vec::new();
    for h in outputs {
        check_output(world, h)?;
        if h.steps.len() != h.tokens.len() {
            return Err(Error::InvariantViolation(format!(
                "output for input {} has {} tokens but {} step records",
                h.input,
                h.tokens.len(),
                h.steps.len()
            )));
        }
        for (i, step) in h.steps.iter().enumerate() {
            if !world.vocab().is_content(step.token) {
                continue;
            }
            out.push(LabeledPrediction {
                context: Context {
                    input: h.input,
                    prefix: h.tokens[..i].to_vec(),
                },
                token: step.token,
                breakdown: step.uncertainty,
                hallucinated: world.is_hallucinated(h.input, step.token)?,
            });
        }
    }
    Ok(out)
}

/// Mention-level Pearson correlation between the hallucination flag and
/// one uncertainty component.
pub fn correlation(preds: &[LabeledPrediction], kind: UncertaintyKind) -> Result<f64> {
    let flags: Vec<bool> = preds.iter().map(|p| p.hallucinated).collect();
    let values: Vec<f64> = preds.iter().map(|p| p.breakdown.get(kind)).collect();
    pearson(&flags, &values)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HallucinationRate {
    pub rate: f64,
    pub hallucinated: usize,
    pub mentions: usize,
}

impl HallucinationRate {
    /// True when the batch had no content mentions and `rate` is a
    /// placeholder 0.
    pub fn no_mentions(&self) -> bool {
        self.mentions == 0
    }
}

/// Hallucinated mentions over all content mentions.
pub fn hallucination_rate(outputs: &[Hypothesis], world: &WorldSpec) -> Result<HallucinationRate> {
    let (mut hallucinated, mut mentions) = (0, 0);
    for h in outputs {
        check_output(world, h)?;
        for &t in h.body() {
            if world.vocab().is_content(t) {
                mentions += 1;
                hallucinated += world.is_hallucinated(h.input, t)? as usize;
            }
        }
    }
    let rate = if mentions == 0 {
        0.0
    } else {
        hallucinated as f64 / mentions as f64
    };
    Ok(HallucinationRate {
        rate,
        hallucinated,
        mentions,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SummaryStats {
    /// Mean token count excluding EOS.
    pub avg_len: f64,
    pub mention_count: usize,
    /// Fraction of outputs without any content token.
    pub generic_rate: f64,
}

pub fn summary_stats(outputs: &[Hypothesis], world: &WorldSpec) -> Result<SummaryStats> {
    if outputs.is_empty() {
        return Err(Error::invalid_config("outputs", "must be non-empty"));
    }
    let (mut tokens, mut mentions, mut generic) = (0usize, 0usize, 0usize);
    for h in outputs {
        check_output(world, h)?;
        let body = h.body();
        let m = body.iter().filter(|&&t| world.vocab().is_content(t)).count();
        tokens += body.len();
        mentions += m;
        generic += (m == 0) as usize;
    }
    let n = outputs.len() as f64;
    Ok(SummaryStats {
        avg_len: tokens as f64 / n,
        mention_count: mentions,
        generic_rate: generic as f64 / n,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Quality {
    /// Mean per-output true-model log-likelihood.
    pub per_output: f64,
    /// Total log-likelihood over total scored tokens.
    pub per_token: f64,
}

/// Log-likelihood of the outputs under the world's true model. Steps the
/// true model rules out (hallucinated mentions) are left out of the sum;
/// they are counted by [`hallucination_rate`] instead.
pub fn quality(outputs: &[Hypothesis], world: &WorldSpec) -> Result<Quality> {
    if outputs.is_empty() {
        return Err(Error::invalid_config("outputs", "must be non-empty"));
    }
    let truth = world.true_model();
    let (mut total, mut scored) = (0.0, 0usize);
    for h in outputs {
        check_output(world, h)?;
        for i in 0..h.tokens.len() {
            let p = truth.score(h.input, &h.tokens[..i])?.prob(h.tokens[i])?;
            if p > 0.0 {
                total += p.ln();
                scored += 1;
            }
        }
    }
    Ok(Quality {
        per_output: total / outputs.len() as f64,
        per_token: if scored == 0 { 0.0 } else { total / scored as f64 },
    })
}

fn check_output(world: &WorldSpec, h: &Hypothesis) -> Result<()> {
    if h.input.index() >= world.num_inputs() {
        return Err(Error::WorldMismatch(format!(
            "output refers to input {} but the world has {} inputs",
            h.input,
            world.num_inputs()
        )));
    }
    if let Some(t) = h.tokens.iter().find(|t| t.index() >= world.vocab().len()) {
        return Err(Error::WorldMismatch(format!(
            "output token {t} is outside the world vocabulary of {}",
            world.vocab().len()
        )));
    }
    Ok(())
}

use std::cmp::Ordering;

use super::{step_scores, DecodeConfig, Hypothesis, LogLikelihood, Objective};
use crate::ensemble::{UncertaintyBreakdown, UncertaintySums};
use crate::error::{Error, Result};
use crate::model::{EnsembleScorer, InputId};
use crate::prob::TokenId;

/// Standard beam search ranked by cumulative log-probability.
///
/// `cfg.lambda` must be zero; use [`uabs`] for the penalized objective.
pub fn beam_search<E: EnsembleScorer + ?Sized>(
    model: &E,
    input: InputId,
    cfg: &DecodeConfig,
) -> Result<Vec<Hypothesis>> {
    if cfg.lambda != 0.0 {
        return Err(Error::invalid_config(
            "lambda",
            "plain beam search takes lambda = 0; use the uncertainty-aware decoder",
        ));
    }
    beam_search_with(model, input, cfg, &LogLikelihood)
}

/// Uncertainty-aware beam search: selection and ranking use
/// `cum_logp − λ · cum_unc[kind]`, with the penalty added at every step.
pub fn uabs<E: EnsembleScorer + ?Sized>(
    model: &E,
    input: InputId,
    cfg: &DecodeConfig,
) -> Result<Vec<Hypothesis>> {
    beam_search_with(model, input, cfg, &cfg.objective())
}

struct Candidate {
    parent: usize,
    /// `None` carries a finished parent forward unchanged.
    token: Option<TokenId>,
    logp: f64,
    cum_logp: f64,
    cum_unc: UncertaintySums,
    score: f64,
}

/// Beam search under an arbitrary objective. Finished hypotheses stay in
/// the beam with zero added cost. Zero-probability extensions are dropped,
/// so fewer than `beam_width` hypotheses may come back.
pub fn beam_search_with<E, O>(
    model: &E,
    input: InputId,
    cfg: &DecodeConfig,
    objective: &O,
) -> Result<Vec<Hypothesis>>
where
    E: EnsembleScorer + ?Sized,
    O: Objective + ?Sized,
{
    cfg.validate()?;
    if input.index() >= model.num_inputs() {
        return Err(Error::UnknownInput {
            input: input.0,
            inputs: model.num_inputs(),
        });
    }

    let mut beam = vec![Hypothesis::empty(input)];
    let mut step_unc: Vec<UncertaintyBreakdown> = Vec::new();
    for _ in 0..cfg.max_len {
        if beam.iter().all(|h| h.finished) {
            break;
        }
        let mut candidates = Vec::new();
        step_unc.clear();
        for (i, hyp) in beam.iter().enumerate() {
            if hyp.finished {
                step_unc.push(UncertaintyBreakdown::ZERO);
                candidates.push(Candidate {
                    parent: i,
                    token: None,
                    logp: 0.0,
                    cum_logp: hyp.cum_logp,
                    cum_unc: hyp.cum_unc,
                    score: hyp.score(objective),
                });
                continue;
            }
            let (agg, unc) = step_scores(model, input, &hyp.tokens)?;
            step_unc.push(unc);
            let cum_unc = hyp.cum_unc.plus(&unc);
            for (t, &p) in agg.probs().iter().enumerate() {
                if p == 0.0 {
                    continue;
                }
                let logp = p.ln();
                let cum_logp = hyp.cum_logp + logp;
                candidates.push(Candidate {
                    parent: i,
                    token: Some(TokenId(t as u32)),
                    logp,
                    cum_logp,
                    cum_unc,
                    score: objective.score(cum_logp, &cum_unc),
                });
            }
        }

        let cmp = |a: &Candidate, b: &Candidate| compare(&beam, a, b);
        if candidates.len() > cfg.beam_width {
            candidates.select_nth_unstable_by(cfg.beam_width - 1, cmp);
            candidates.truncate(cfg.beam_width);
        }
        candidates.sort_by(cmp);

        beam = candidates
            .into_iter()
            .map(|c| {
                let parent = &beam[c.parent];
                match c.token {
                    None => parent.clone(),
                    Some(t) => {
                        let child = parent.extend(t, c.logp, &step_unc[c.parent]);
                        debug_assert_eq!(child.cum_logp.to_bits(), c.cum_logp.to_bits());
                        debug_assert_eq!(child.cum_unc, c.cum_unc);
                        child
                    }
                }
            })
            .collect();
    }

    finalize(beam, cfg, objective)
}

fn compare(beam: &[Hypothesis], a: &Candidate, b: &Candidate) -> Ordering {
    let ta = &beam[a.parent].tokens;
    let tb = &beam[b.parent].tokens;
    let la = ta.len() + a.token.is_some() as usize;
    let lb = tb.len() + b.token.is_some() as usize;
    b.score
        .total_cmp(&a.score)
        .then(la.cmp(&lb))
        .then_with(|| ta.iter().chain(a.token.iter()).cmp(tb.iter().chain(b.token.iter())))
}

pub(super) fn finalize<O: Objective + ?Sized>(
    mut hyps: Vec<Hypothesis>,
    cfg: &DecodeConfig,
    objective: &O,
) -> Result<Vec<Hypothesis>> {
    if cfg.strict {
        hyps.retain(|h| h.finished);
        if hyps.is_empty() {
            return Err(Error::NoFinishedHypothesis {
                max_len: cfg.max_len,
            });
        }
    }
    hyps.sort_by(|a, b| super::rank_order(a.score(objective), &a.tokens, b.score(objective), &b.tokens));
    Ok(hyps)
}

//! Brute-force decoder used as a test oracle.

use super::{rank_order, step_scores, DecodeConfig, Hypothesis, Objective, StepTrace};
use crate::ensemble::{UncertaintyBreakdown, UncertaintySums};
use crate::error::{Error, Result};
use crate::model::{EnsembleScorer, InputId};
use crate::prob::TokenId;

/// Largest `|V|^max_len` the oracle accepts by default.
pub const DEFAULT_SEARCH_CAP: u64 = 1_000_000;

/// Global argmax of `cfg.objective()` over every sequence that ends at EOS
/// or reaches `max_len`, ranked exactly like the beam decoders.
pub fn exhaustive_decode<E: EnsembleScorer + ?Sized>(
    model: &E,
    input: InputId,
    cfg: &DecodeConfig,
) -> Result<Hypothesis> {
    exhaustive_decode_with(model, input, cfg, &cfg.objective(), DEFAULT_SEARCH_CAP)
}

/// Like [`exhaustive_decode`] with an explicit objective and cap. Branches
/// with zero probability are skipped; they can never win.
pub fn exhaustive_decode_with<E, O>(
    model: &E,
    input: InputId,
    cfg: &DecodeConfig,
    objective: &O,
    cap: u64,
) -> Result<Hypothesis>
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
    let size = (model.vocab_size() as f64).powi(cfg.max_len as i32);
    if size > cap as f64 {
        return Err(Error::SearchSpaceTooLarge { size, cap });
    }

    let mut search = Search {
        model,
        input,
        objective,
        max_len: cfg.max_len,
        strict: cfg.strict,
        tokens: Vec::with_capacity(cfg.max_len),
        steps: Vec::with_capacity(cfg.max_len),
        best: None,
    };
    search.visit(0.0, UncertaintySums::default())?;
    search
        .best
        .take()
        .map(|(_, h)| h)
        .ok_or(Error::NoFinishedHypothesis {
            max_len: cfg.max_len,
        })
}

struct Search<'a, E: ?Sized, O: ?Sized> {
    model: &'a E,
    input: InputId,
    objective: &'a O,
    max_len: usize,
    strict: bool,
    tokens: Vec<TokenId>,
    steps: Vec<StepTrace>,
    best: Option<(f64, Hypothesis)>,
}

impl<E: EnsembleScorer + ?Sized, O: Objective + ?Sized> Search<'_, E, O> {
    fn visit(&mut self, cum_logp: f64, cum_unc: UncertaintySums) -> Result<()> {
        let finished = self.tokens.last() == Some(&TokenId::EOS);
        if finished || self.tokens.len() == self.max_len {
            if finished || !self.strict {
                self.offer(cum_logp, cum_unc, finished);
            }
            return Ok(());
        }
        let (agg, unc) = step_scores(self.model, self.input, &self.tokens)?;
        let child_unc = cum_unc.plus(&unc);
        for (t, &p) in agg.probs().iter().enumerate() {
            if p == 0.0 {
                continue;
            }
            let token = TokenId(t as u32);
            let logp = p.ln();
            self.tokens.push(token);
            self.steps.push(step(token, logp, unc));
            self.visit(cum_logp + logp, child_unc)?;
            self.tokens.pop();
            self.steps.pop();
        }
        Ok(())
    }

    fn offer(&mut self, cum_logp: f64, cum_unc: UncertaintySums, finished: bool) {
        let score = self.objective.score(cum_logp, &cum_unc);
        let better = match &self.best {
            None => true,
            Some((best_score, best)) => {
                rank_order(score, &self.tokens, *best_score, &best.tokens).is_lt()
            }
        };
        if better {
            self.best = Some((
                score,
                Hypothesis {
                    input: self.input,
                    tokens: self.tokens.clone(),
                    cum_logp,
                    cum_unc,
                    finished,
                    steps: self.steps.clone(),
                },
            ));
        }
    }
}

fn step(token: TokenId, logp: f64, uncertainty: UncertaintyBreakdown) -> StepTrace {
    StepTrace {
        token,
        logp,
        uncertainty,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::decode::{uabs, LogLikelihood};
    use crate::ensemble::UncertaintyKind;
    use crate::model::{EnsembleModel, TabularModel};
    use crate::prob::Categorical;

    fn chain() -> EnsembleModel {
        let mut m = TabularModel::new(1, 4, 1, Categorical::one_hot(4, TokenId::EOS)).unwrap();
        m.insert(InputId(0), vec![TokenId::BOS], Categorical::one_hot(4, TokenId(3))).unwrap();
        m.insert(InputId(0), vec![TokenId(3)], Categorical::one_hot(4, TokenId(2))).unwrap();
        m.insert(InputId(0), vec![TokenId(2)], Categorical::one_hot(4, TokenId::EOS)).unwrap();
        EnsembleModel::new(vec![m]).unwrap()
    }

    fn cfg(lambda: f64, max_len: usize) -> DecodeConfig {
        DecodeConfig {
            beam_width: 1,
            lambda,
            kind: UncertaintyKind::Total,
            max_len,
            ..Default::default()
        }
    }

    #[test]
    fn deterministic_chain() {
        let h = exhaustive_decode(&chain(), InputId(0), &cfg(0.0, 5)).unwrap();
        assert_eq!(h.tokens, vec![TokenId(3), TokenId(2), TokenId::EOS]);
        assert_eq!(h.cum_logp, 0.0);
        assert!(h.finished);
    }

    #[test]
    fn search_space_cap() {
        let e = chain();
        assert!(matches!(
            exhaustive_decode(&e, InputId(0), &cfg(0.0, 10)),
            Err(Error::SearchSpaceTooLarge { cap: DEFAULT_SEARCH_CAP, .. })
        ));
        assert!(exhaustive_decode_with(&e, InputId(0), &cfg(0.0, 10), &LogLikelihood, u64::MAX).is_ok());
    }

    #[test]
    fn agrees_with_saturated_beam() {
        let mut a = TabularModel::new(1, 5, 1, Categorical::one_hot(5, TokenId::EOS)).unwrap();
        let mut b = a.clone();
        let rows: [(TokenId, [f64; 5], [f64; 5]); 4] = [
            (TokenId::BOS, [0.0, 0.1, 0.3, 0.3, 0.3], [0.0, 0.2, 0.5, 0.1, 0.2]),
            (TokenId(2), [0.0, 0.5, 0.1, 0.2, 0.2], [0.0, 0.3, 0.3, 0.2, 0.2]),
            (TokenId(3), [0.0, 0.6, 0.2, 0.1, 0.1], [0.0, 0.1, 0.1, 0.4, 0.4]),
            (TokenId(4), [0.0, 0.9, 0.05, 0.05, 0.0], [0.0, 0.1, 0.1, 0.1, 0.7]),
        ];
        for (w, pa, pb) in rows {
            a.insert(InputId(0), vec![w], Categorical::new(pa.to_vec()).unwrap()).unwrap();
            b.insert(InputId(0), vec![w], Categorical::new(pb.to_vec()).unwrap()).unwrap();
        }
        let e = EnsembleModel::new(vec![a, b]).unwrap();
        for lambda in [0.0, 0.5, 2.0, 20.0] {
            for kind in UncertaintyKind::ALL {
                let c = DecodeConfig { beam_width: 5usize.pow(4), lambda, kind, max_len: 4, ..Default::default() };
                let oracle = exhaustive_decode(&e, InputId(0), &c).unwrap();
                let beam = uabs(&e, InputId(0), &c).unwrap();
                assert_eq!(beam[0], oracle, "lambda {lambda}, {kind}");
            }
        }
    }
}

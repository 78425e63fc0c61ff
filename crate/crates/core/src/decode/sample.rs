//! Ancestral sampling from the aggregated ensemble distribution.

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{step_scores, Hypothesis};
use crate::error::{Error, Result};
use crate::model::{Context, EnsembleScorer, InputId};
use crate::prob::{Categorical, TokenId};

/// Samples one sequence for `input`. Deterministic in `seed`.
pub fn sample<E: EnsembleScorer + ?Sized>(
    model: &E,
    input: InputId,
    seed: u64,
    max_len: usize,
) -> Result<Hypothesis> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    sample_continuation(model, &Context::start(input), &mut rng, max_len)
}

/// Extends `ctx.prefix` until EOS or `max_len` total tokens.
pub fn sample_continuation<E: EnsembleScorer + ?Sized, R: Rng + ?Sized>(
    model: &E,
    ctx: &Context,
    rng: &mut R,
    max_len: usize,
) -> Result<Hypothesis> {
    if max_len == 0 {
        return Err(Error::invalid_config("max_len", "must be at least 1"));
    }
    let mut hyp = Hypothesis::empty(ctx.input);
    for i in 0..ctx.prefix.len() {
        let (agg, unc) = step_scores(model, ctx.input, &ctx.prefix[..i])?;
        let token = ctx.prefix[i];
        hyp = hyp.extend(token, agg.log_prob(token)?, &unc);
    }
    while !hyp.finished && hyp.len() < max_len {
        let (agg, unc) = step_scores(model, ctx.input, &hyp.tokens)?;
        let token = draw(&agg, rng);
        hyp = hyp.extend(token, agg.log_prob(token)?, &unc);
    }
    Ok(hyp)
}

/// Draws one next token at `ctx` from the aggregated distribution.
pub fn sample_next<E: EnsembleScorer + ?Sized, R: Rng + ?Sized>(
    model: &E,
    ctx: &Context,
    rng: &mut R,
) -> Result<TokenId> {
    let agg = model.ensemble_score(ctx.input, &ctx.prefix)?.aggregate();
    Ok(draw(&agg, rng))
}

fn draw<R: Rng + ?Sized>(d: &Categorical, rng: &mut R) -> TokenId {
    let index = WeightedIndex::new(d.probs()).expect("validated distributions have positive mass");
    TokenId(index.sample(rng) as u32)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{EnsembleModel, TabularModel};

    fn chain() -> EnsembleModel {
        let mut m = TabularModel::new(1, 4, 1, Categorical::one_hot(4, TokenId::EOS)).unwrap();
        m.insert(InputId(0), vec![TokenId::BOS], Categorical::one_hot(4, TokenId(3))).unwrap();
        m.insert(InputId(0), vec![TokenId(3)], Categorical::one_hot(4, TokenId(2))).unwrap();
        m.insert(InputId(0), vec![TokenId(2)], Categorical::one_hot(4, TokenId::EOS)).unwrap();
        EnsembleModel::new(vec![m]).unwrap()
    }

    fn coin() -> EnsembleModel {
        let mut m = TabularModel::new(1, 4, 1, Categorical::one_hot(4, TokenId::EOS)).unwrap();
        m.insert(InputId(0), vec![TokenId::BOS], Categorical::new(vec![0.0, 0.2, 0.4, 0.4]).unwrap())
            .unwrap();
        EnsembleModel::new(vec![m]).unwrap()
    }

    #[test]
    fn chain_is_sampled_for_any_seed() {
        for seed in 0..20 {
            let h = sample(&chain(), InputId(0), seed, 8).unwrap();
            assert_eq!(h.tokens, vec![TokenId(3), TokenId(2), TokenId::EOS]);
            assert!(h.finished);
        }
    }

    #[test]
    fn same_seed_same_sequence() {
        let e = coin();
        for seed in 0..10 {
            assert_eq!(sample(&e, InputId(0), seed, 4).unwrap(), sample(&e, InputId(0), seed, 4).unwrap());
        }
    }

    #[test]
    fn respects_max_len_and_prefix() {
        let e = coin();
        let ctx = Context::new(InputId(0), vec![TokenId(2)]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let h = sample_continuation(&e, &ctx, &mut rng, 1).unwrap();
        assert_eq!(h.tokens, vec![TokenId(2)]);
        assert!(!h.finished);
        let h = sample_continuation(&e, &ctx, &mut rng, 5).unwrap();
        assert_eq!(h.tokens, vec![TokenId(2), TokenId::EOS]);
        let (logp, _) = h.rescore(&e).unwrap();
        assert_eq!(logp, h.cum_logp);
    }

    #[test]
    fn next_token_frequencies() {
        let e = coin();
        let ctx = Context::start(InputId(0));
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let n = 20_000;
        let eos = (0..n).filter(|_| sample_next(&e, &ctx, &mut rng).unwrap() == TokenId::EOS).count();
        let freq = eos as f64 / n as f64;
        let se = (0.2f64 * 0.8 / n as f64).sqrt();
        assert!((freq - 0.2).abs() < 4.0 * se, "{freq}");
    }
}

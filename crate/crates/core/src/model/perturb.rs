//! Ensemble members derived from a world's true model.
//!
//! For every table entry and member: multiply the true probabilities by
//! log-normal noise and renormalize. Each context then draws a leak cap
//! `leak · U(0, 1)` and one Dirichlet split over the hallucinated tokens
//! reachable from it; every member moves its own `cap · U(0, 1)` of mass
//! onto those tokens, so members disagree most where the cap is large. In
//! contexts that already contain a hallucinated token, `unseen_mix` of each
//! member's mass is redrawn per member over the non-hallucinated tokens.
//! With `noise = 0` members equal the true model.

use std::collections::BTreeSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};

use super::tabular::{EnsembleModel, PerturbConfig, TabularModel};
use super::world::WorldSpec;
use super::InputId;
use crate::error::{Error, Result};
use crate::prob::{Categorical, TokenId};

pub fn perturb_members(world: &WorldSpec, members: usize, noise: f64, seed: u64) -> Result<EnsembleModel> {
    perturb_members_with(
        world,
        &PerturbConfig {
            members,
            noise,
            seed,
            ..PerturbConfig::default()
        },
    )
}

pub fn perturb_members_with(world: &WorldSpec, cfg: &PerturbConfig) -> Result<EnsembleModel> {
    if cfg.members == 0 {
        return Err(Error::invalid_config("members", "must be at least 1"));
    }
    if !(cfg.noise.is_finite() && cfg.noise >= 0.0) {
        return Err(Error::invalid_config("noise", "must be non-negative and finite"));
    }
    if !(0.0..=1.0).contains(&cfg.unseen_mix) {
        return Err(Error::invalid_config("unseen_mix", "must be in [0, 1]"));
    }
    if !(cfg.leak_spread.is_finite() && cfg.leak_spread > 0.0) {
        return Err(Error::invalid_config("leak_spread", "must be positive and finite"));
    }
    let spread = Gamma::new(cfg.leak_spread, 1.0)
        .map_err(|e| Error::invalid_config("leak_spread", e.to_string()))?;

    let truth = world.true_model();
    let mut members: Vec<TabularModel> = vec![truth.clone(); cfg.members];
    if cfg.noise == 0.0 {
        return Ok(EnsembleModel::new(members)?.with_provenance(cfg.clone()));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    for input in world.inputs() {
        let hallucinated = world.hallucination_set_for(input)?;
        let entries: Vec<(Vec<TokenId>, Categorical)> = truth
            .entries(input)
            .map(|(w, d)| (w.to_vec(), d.clone()))
            .collect();
        for (window, base) in entries {
            let after = world.slot_after(&window);
            let eligible: Vec<TokenId> = hallucinated
                .iter()
                .copied()
                .filter(|t| world.slots()[t.index()] > after)
                .collect();
            let unseen = window.iter().any(|t| hallucinated.contains(t));
            let cap = world.leak() * rng.random::<f64>();
            let share = leak_share(&mut rng, eligible.len(), &spread);
            for member in members.iter_mut() {
                let mut dist = jitter(&mut rng, &base, cfg.noise)?;
                if cap > 0.0 && !eligible.is_empty() {
                    let amount = cap * rng.random::<f64>();
                    dist = leak_into(&dist, &eligible, &share, amount)?;
                }
                if unseen && cfg.unseen_mix > 0.0 {
                    dist = redraw(&mut rng, &dist, &hallucinated, cfg.unseen_mix, &spread)?;
                }
                member.insert(InputId(input.0), window.clone(), dist)?;
            }
        }
    }
    Ok(EnsembleModel::new(members)?.with_provenance(cfg.clone()))
}

/// Multiplies every supported probability by `exp(noise · z)`, `z ~ N(0, 1)`.
fn jitter(rng: &mut ChaCha8Rng, base: &Categorical, noise: f64) -> Result<Categorical> {
    let probs: Vec<f64> = base
        .probs()
        .iter()
        .map(|&p| {
            let z: f64 = StandardNormal.sample(rng);
            if p > 0.0 {
                p * (noise * z).exp()
            } else {
                0.0
            }
        })
        .collect();
    Categorical::normalize(&probs)
}

/// Dirichlet weights over `n` tokens; empty when `n = 0`.
fn leak_share(rng: &mut ChaCha8Rng, n: usize, spread: &Gamma<f64>) -> Vec<f64> {
    if n == 0 {
        return Vec::new();
    }
    let mut share: Vec<f64> = (0..n).map(|_| spread.sample(rng)).collect();
    let total: f64 = share.iter().sum();
    if total > 0.0 {
        share.iter_mut().for_each(|s| *s /= total);
    } else {
        let pick = rng.random_range(0..n);
        share[pick] = 1.0;
    }
    share
}

/// Moves `amount` of the mass onto `eligible` in proportion to `share`.
fn leak_into(d: &Categorical, eligible: &[TokenId], share: &[f64], amount: f64) -> Result<Categorical> {
    let mut probs: Vec<f64> = d.probs().iter().map(|p| p * (1.0 - amount)).collect();
    for (t, s) in eligible.iter().zip(share) {
        probs[t.index()] += amount * s;
    }
    Categorical::normalize(&probs)
}

/// `(1 − mix)·d + mix·q` with `q` a fresh draw over every token that is
/// neither BOS nor in `excluded`.
fn redraw(
    rng: &mut ChaCha8Rng,
    d: &Categorical,
    excluded: &BTreeSet<TokenId>,
    mix: f64,
    spread: &Gamma<f64>,
) -> Result<Categorical> {
    let mut q: Vec<f64> = (0..d.len()).map(|_| spread.sample(rng)).collect();
    q[TokenId::BOS.index()] = 0.0;
    for t in excluded {
        q[t.index()] = 0.0;
    }
    let total: f64 = q.iter().sum();
    if total == 0.0 {
        return Ok(d.clone());
    }
    let probs: Vec<f64> = d
        .probs()
        .iter()
        .zip(&q)
        .map(|(p, w)| (1.0 - mix) * p + mix * w / total)
        .collect();
    Categorical::normalize(&probs)
}

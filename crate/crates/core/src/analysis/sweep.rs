//! Penalty-weight sweeps producing quality versus hallucination trade-offs.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{hallucination_rate, quality, summary_stats};
use crate::decode::{
    exhaustive_decode_with, uabs, DecodeConfig, Hypothesis, DEFAULT_LAMBDAS_EPISTEMIC,
    DEFAULT_LAMBDAS_TOTAL_ALEATORIC,
};
use crate::ensemble::UncertaintyKind;
use crate::error::{Error, Result};
use crate::model::{EnsembleModel, EnsembleScorer, WorldSpec};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridPoint {
    pub lambda: f64,
    pub kind: UncertaintyKind,
}

/// Total and aleatoric over the small weights, epistemic over the large
/// ones, optionally preceded by a `λ = 0` point per kind.
pub fn default_grid(include_zero: bool) -> Vec<GridPoint> {
    let mut grid = Vec::new();
    for kind in UncertaintyKind::ALL {
        let lambdas: &[f64] = match kind {
            UncertaintyKind::Epistemic => &DEFAULT_LAMBDAS_EPISTEMIC,
            _ => &DEFAULT_LAMBDAS_TOTAL_ALEATORIC,
        };
        if include_zero {
            grid.push(GridPoint { lambda: 0.0, kind });
        }
        grid.extend(lambdas.iter().map(|&lambda| GridPoint { lambda, kind }));
    }
    grid
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum Decoder {
    Beam { width: usize },
    Exhaustive { cap: u64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    pub decoder: Decoder,
    pub max_len: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TradeoffRecord {
    pub lambda: f64,
    pub kind: UncertaintyKind,
    pub quality: f64,
    pub quality_per_token: f64,
    pub hallucination_rate: f64,
    pub avg_len: f64,
    pub mention_count: usize,
    pub generic_rate: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepPoint {
    pub record: TradeoffRecord,
    /// Top hypothesis per input, in input order.
    pub outputs: Vec<Hypothesis>,
}

/// Decodes every input at every grid point. Points run in parallel on the
/// current rayon pool; results keep grid order.
pub fn sweep(
    world: &WorldSpec,
    ensemble: &EnsembleModel,
    grid: &[GridPoint],
    cfg: &SweepConfig,
) -> Result<Vec<SweepPoint>> {
    if grid.is_empty() {
        return Err(Error::invalid_config("grid", "must contain at least one point"));
    }
    if ensemble.vocab_size() != world.vocab().len() || ensemble.num_inputs() != world.num_inputs() {
        return Err(Error::WorldMismatch(format!(
            "ensemble has {} tokens and {} inputs, world has {} and {}",
            ensemble.vocab_size(),
            ensemble.num_inputs(),
            world.vocab().len(),
            world.num_inputs()
        )));
    }
    grid.par_iter().map(|p| run_point(world, ensemble, *p, cfg)).collect()
}

fn run_point(world: &WorldSpec, ensemble: &EnsembleModel, point: GridPoint, cfg: &SweepConfig) -> Result<SweepPoint> {
    let decode = DecodeConfig {
        beam_width: match cfg.decoder {
            Decoder::Beam { width } => width,
            Decoder::Exhaustive { .. } => 1,
        },
        lambda: point.lambda,
        kind: point.kind,
        max_len: cfg.max_len,
        ..DecodeConfig::default()
    };
    let outputs = world
        .inputs()
        .map(|input| match cfg.decoder {
            Decoder::Beam { .. } => Ok(uabs(ensemble, input, &decode)?.remove(0)),
            Decoder::Exhaustive { cap } => exhaustive_decode_with(ensemble, input, &decode, &decode.objective(), cap),
        })
        .collect::<Result<Vec<_>>>()?;
    let q = quality(&outputs, world)?;
    let rate = hallucination_rate(&outputs, world)?;
    let stats = summary_stats(&outputs, world)?;
    Ok(SweepPoint {
        record: TradeoffRecord {
            lambda: point.lambda,
            kind: point.kind,
            quality: q.per_output,
            quality_per_token: q.per_token,
            hallucination_rate: rate.rate,
            avg_len: stats.avg_len,
            mention_count: stats.mention_count,
            generic_rate: stats.generic_rate,
        },
        outputs,
    })
}

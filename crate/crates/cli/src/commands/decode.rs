use std::path::{Path, PathBuf};

use clap::Args;
use serde::{Deserialize, Serialize};
use uabs_core::analysis::Decoder;
use uabs_core::decode::{
    exhaustive_decode_with, step_scores, uabs, DecodeConfig, Hypothesis, StepTrace, UncertaintyKind,
    DEFAULT_SEARCH_CAP,
};
use uabs_core::ensemble::UncertaintySums;
use uabs_core::model::{EnsembleModel, InputId, WorldSpec};
use uabs_core::prob::TokenId;

use super::{load_config, open_ensemble, open_world, world_seeds, OutArgs, Provenance, Run};
use crate::artifact::{parse_json, read_text, to_pretty_json, OutputDir};
use crate::error::{CliError, Result};

pub const DECODE_FILE: &str = "decode.json";
pub const DECODE_SCHEMA_VERSION: u32 = 1;

/// How a decode file was produced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DecodeSettings {
    pub decoder: Decoder,
    pub lambda: f64,
    pub kind: UncertaintyKind,
    pub max_len: usize,
    pub strict: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DecodeRecord {
    pub input: InputId,
    pub tokens: Vec<TokenId>,
    pub text: String,
    pub cum_logp: f64,
    pub total: f64,
    pub aleatoric: f64,
    pub epistemic: f64,
    pub finished: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub steps: Option<Vec<StepTrace>>,
}

impl DecodeRecord {
    pub fn new(world: &WorldSpec, h: &Hypothesis, trace: bool) -> Self {
        DecodeRecord {
            input: h.input,
            tokens: h.tokens.clone(),
            text: world.vocab().detokenize(&h.tokens),
            cum_logp: h.cum_logp,
            total: h.cum_unc.total,
            aleatoric: h.cum_unc.aleatoric,
            epistemic: h.cum_unc.epistemic,
            finished: h.finished,
            steps: trace.then(|| h.steps.clone()),
        }
    }

    /// Rebuilds the hypothesis. Missing traces are recomputed from
    /// `ensemble` when one is given.
    pub fn to_hypothesis(&self, ensemble: Option<&EnsembleModel>) -> Result<Hypothesis> {
        let steps = match (&self.steps, ensemble) {
            (Some(s), _) => s.clone(),
            (None, Some(e)) => retrace(e, self.input, &self.tokens)?,
            (None, None) => {
                return Err(CliError::Config(format!(
                    "record for input {} has no per-step trace; pass --ensemble to recompute it",
                    self.input
                )))
            }
        };
        if steps.len() != self.tokens.len() || steps.iter().zip(&self.tokens).any(|(s, t)| s.token != *t) {
            return Err(uabs_core::Error::InvariantViolation(format!(
                "trace for input {} does not match its tokens",
                self.input
            ))
            .into());
        }
        Ok(Hypothesis {
            input: self.input,
            tokens: self.tokens.clone(),
            cum_logp: self.cum_logp,
            cum_unc: UncertaintySums {
                total: self.total,
                aleatoric: self.aleatoric,
                epistemic: self.epistemic,
            },
            finished: self.finished,
            steps,
        })
    }
}

fn retrace(e: &EnsembleModel, input: InputId, tokens: &[TokenId]) -> Result<Vec<StepTrace>> {
    let mut steps = Vec::with_capacity(tokens.len());
    for (i, &token) in tokens.iter().enumerate() {
        let (agg, uncertainty) = step_scores(e, input, &tokens[..i])?;
        steps.push(StepTrace {
            token,
            logp: agg.log_prob(token)?,
            uncertainty,
        });
    }
    Ok(steps)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DecodeFile {
    pub schema_version: u32,
    pub kind: String,
    pub world_sha256: String,
    pub ensemble_sha256: String,
    pub settings: DecodeSettings,
    pub records: Vec<DecodeRecord>,
}

impl DecodeFile {
    pub fn load(path: &Path) -> Result<Self> {
        let f: DecodeFile = parse_json(&read_text(path)?, path)?;
        if f.kind != "decode" {
            return Err(CliError::Parse {
                path: path.into(),
                message: format!("expected a decode file, found kind `{}`", f.kind),
            });
        }
        if f.schema_version != DECODE_SCHEMA_VERSION {
            return Err(uabs_core::Error::SchemaVersionMismatch {
                expected: DECODE_SCHEMA_VERSION,
                found: f.schema_version,
            }
            .into());
        }
        Ok(f)
    }

    pub fn to_json(&self) -> String {
        to_pretty_json(self)
    }
}

/// Decodes every input with one setting.
pub fn decode_all(
    world: &WorldSpec,
    ensemble: &EnsembleModel,
    inputs: &[InputId],
    settings: &DecodeSettings,
) -> Result<Vec<Hypothesis>> {
    let cfg = DecodeConfig {
        beam_width: match settings.decoder {
            Decoder::Beam { width } => width,
            Decoder::Exhaustive { .. } => 1,
        },
        lambda: settings.lambda,
        kind: settings.kind,
        max_len: settings.max_len,
        strict: settings.strict,
        ..DecodeConfig::default()
    };
    inputs
        .iter()
        .map(|&input| {
            if input.index() >= world.num_inputs() {
                return Err(uabs_core::Error::UnknownInput {
                    input: input.0,
                    inputs: world.num_inputs(),
                }
                .into());
            }
            Ok(match settings.decoder {
                Decoder::Beam { .. } => uabs(ensemble, input, &cfg)?.remove(0),
                Decoder::Exhaustive { cap } => exhaustive_decode_with(ensemble, input, &cfg, &cfg.objective(), cap)?,
            })
        })
        .collect()
}

#[derive(Debug, Clone, Args)]
pub struct DecodeArgs {
    /// TOML file with the fields below; flags override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[command(flatten)]
    pub out: OutArgs,
    #[arg(long)]
    pub world: Option<PathBuf>,
    #[arg(long)]
    pub ensemble: Option<PathBuf>,
    #[arg(long, short = 'b')]
    pub beam_width: Option<usize>,
    #[arg(long, short = 'l')]
    pub lambda: Option<f64>,
    #[arg(long, short = 'k')]
    pub kind: Option<UncertaintyKind>,
    /// Defaults to the world's maximum length.
    #[arg(long)]
    pub max_len: Option<usize>,
    /// Drop outputs that never reached EOS.
    #[arg(long)]
    pub strict: bool,
    /// Comma-separated input ids; all inputs by default.
    #[arg(long, value_delimiter = ',')]
    pub inputs: Option<Vec<u32>>,
    /// Use the brute-force decoder instead of beam search.
    #[arg(long)]
    pub exhaustive: bool,
    /// Largest search space the brute-force decoder accepts.
    #[arg(long)]
    pub cap: Option<u64>,
    /// Include per-step uncertainty traces.
    #[arg(long)]
    pub trace: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DecodeRun {
    pub world: PathBuf,
    pub ensemble: PathBuf,
    pub beam_width: usize,
    pub lambda: f64,
    pub kind: UncertaintyKind,
    pub max_len: Option<usize>,
    pub strict: bool,
    pub inputs: Option<Vec<u32>>,
    pub exhaustive: bool,
    pub cap: u64,
    pub trace: bool,
}

impl Default for DecodeRun {
    fn default() -> Self {
        let d = DecodeConfig::default();
        DecodeRun {
            world: PathBuf::new(),
            ensemble: PathBuf::new(),
            beam_width: d.beam_width,
            lambda: d.lambda,
            kind: d.kind,
            max_len: None,
            strict: false,
            inputs: None,
            exhaustive: false,
            cap: DEFAULT_SEARCH_CAP,
            trace: false,
        }
    }
}

impl DecodeArgs {
    pub fn resolve(&self) -> Result<DecodeRun> {
        let mut run: DecodeRun = load_config(self.config.as_deref())?;
        if let Some(p) = &self.world {
            run.world = p.clone();
        }
        if let Some(p) = &self.ensemble {
            run.ensemble = p.clone();
        }
        if let Some(v) = self.beam_width {
            run.beam_width = v;
        }
        if let Some(v) = self.lambda {
            run.lambda = v;
        }
        if let Some(v) = self.kind {
            run.kind = v;
        }
        if let Some(v) = self.max_len {
            run.max_len = Some(v);
        }
        if let Some(v) = &self.inputs {
            run.inputs = Some(v.clone());
        }
        if let Some(v) = self.cap {
            run.cap = v;
        }
        run.strict |= self.strict;
        run.exhaustive |= self.exhaustive;
        run.trace |= self.trace;
        Ok(run)
    }
}

impl Run for DecodeRun {
    const NAME: &'static str = "decode";

    fn execute(&self, out: &mut OutputDir) -> Result<Provenance> {
        let (world, world_digest) = open_world(&self.world)?;
        let (ensemble, ensemble_digest) = open_ensemble(&self.ensemble, &world)?;
        let inputs: Vec<InputId> = match &self.inputs {
            Some(ids) => ids.iter().map(|&i| InputId(i)).collect(),
            None => world.inputs().collect(),
        };
        let settings = DecodeSettings {
            decoder: if self.exhaustive {
                Decoder::Exhaustive { cap: self.cap }
            } else {
                Decoder::Beam { width: self.beam_width }
            },
            lambda: self.lambda,
            kind: self.kind,
            max_len: self.max_len.unwrap_or(world.max_len()),
            strict: self.strict,
        };
        let outputs = decode_all(&world, &ensemble, &inputs, &settings)?;
        let file = DecodeFile {
            schema_version: DECODE_SCHEMA_VERSION,
            kind: "decode".into(),
            world_sha256: world_digest.sha256.clone(),
            ensemble_sha256: ensemble_digest.sha256.clone(),
            settings,
            records: outputs.iter().map(|h| DecodeRecord::new(&world, h, self.trace)).collect(),
        };
        out.write(DECODE_FILE, file.to_json().as_bytes())?;
        Ok(Provenance {
            seeds: world_seeds(&world, Some(&ensemble)),
            inputs: vec![world_digest, ensemble_digest],
        })
    }
}

use std::fmt::Write as _;
use std::path::PathBuf;

use clap::Args;
use serde::{Deserialize, Serialize};
use uabs_core::analysis::{
    bin_rates, correlation, hallucination_rate, label_outputs, quality, spearman, summary_stats, BinTable,
    HallucinationRate, LabeledPrediction, Quality, SummaryStats, DEFAULT_BIN_EDGES,
};
use uabs_core::decode::{Hypothesis, UncertaintyKind};
use uabs_core::model::WorldSpec;

use super::decode::DecodeFile;
use super::{load_config, open_ensemble, open_world, world_seeds, OutArgs, Provenance, Run};
use crate::artifact::{digest_file, to_pretty_json, OutputDir};
use crate::error::{CliError, Result};

pub const BINS_FILE: &str = "bins.tsv";
pub const CORRELATIONS_FILE: &str = "correlations.tsv";
pub const MENTIONS_FILE: &str = "mentions.tsv";
pub const SUMMARY_FILE: &str = "summary.json";

/// Written wherever a statistic is undefined.
pub const UNDEFINED: &str = "NA";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KindSummary {
    pub kind: UncertaintyKind,
    /// Pearson correlation with the hallucination flag; `None` when either
    /// series is constant.
    pub correlation: Option<f64>,
    /// Rank correlation between bin order and bin rate over occupied bins.
    pub bin_trend: Option<f64>,
    pub bins: BinTable,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisSummary {
    pub outputs: usize,
    pub hallucination: HallucinationRate,
    pub stats: SummaryStats,
    pub quality: Quality,
    pub kinds: Vec<KindSummary>,
}

pub fn analyze(world: &WorldSpec, outputs: &[Hypothesis], edges: &[f64]) -> Result<(AnalysisSummary, Vec<LabeledPrediction>)> {
    let preds = label_outputs(world, outputs)?;
    let mut kinds = Vec::new();
    for kind in UncertaintyKind::ALL {
        let bins = bin_rates(&preds, edges, kind)?;
        let occupied = bins.occupied();
        let order: Vec<f64> = occupied.iter().map(|&(i, _)| i as f64).collect();
        let rates: Vec<f64> = occupied.iter().map(|&(_, r)| r).collect();
        kinds.push(KindSummary {
            kind,
            correlation: defined(correlation(&preds, kind))?,
            bin_trend: defined(spearman(&order, &rates))?,
            bins,
        });
    }
    let summary = AnalysisSummary {
        outputs: outputs.len(),
        hallucination: hallucination_rate(outputs, world)?,
        stats: summary_stats(outputs, world)?,
        quality: quality(outputs, world)?,
        kinds,
    };
    Ok((summary, preds))
}

fn defined(r: uabs_core::Result<f64>) -> Result<Option<f64>> {
    match r {
        Ok(v) => Ok(Some(v)),
        Err(uabs_core::Error::DegenerateVariance | uabs_core::Error::LengthMismatch { .. }) => Ok(None),
        Err(e) => Err(e.into()),
    }
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(|| UNDEFINED.to_string(), |x| x.to_string())
}

pub fn bins_tsv(summary: &AnalysisSummary) -> String {
    let mut s = String::from("kind\tbin\tlower\tupper\tcount\thallucinated\trate\n");
    for k in &summary.kinds {
        for b in &k.bins.bins {
            let _ = writeln!(
                s,
                "{}\t{}\t{}\t{}\t{}\t{}\t{}",
                k.kind,
                b.label(),
                opt(b.lower),
                opt(b.upper),
                b.count,
                b.hallucinated,
                opt(b.rate)
            );
        }
    }
    s
}

pub fn correlations_tsv(summary: &AnalysisSummary) -> String {
    let mut s = String::from("kind\tpearson\tbin_trend\tmentions\n");
    for k in &summary.kinds {
        let _ = writeln!(
            s,
            "{}\t{}\t{}\t{}",
            k.kind,
            opt(k.correlation),
            opt(k.bin_trend),
            k.bins.total_count()
        );
    }
    s
}

pub fn mentions_tsv(world: &WorldSpec, preds: &[LabeledPrediction]) -> String {
    let mut s = String::from("input\tposition\ttoken\ttext\thallucinated\ttotal\taleatoric\tepistemic\n");
    for p in preds {
        let _ = writeln!(
            s,
            "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}",
            p.context.input,
            p.context.prefix.len(),
            p.token,
            world.vocab().token(p.token).unwrap_or(""),
            p.hallucinated,
            p.breakdown.total().get(),
            p.breakdown.aleatoric().get(),
            p.breakdown.epistemic().get()
        );
    }
    s
}

#[derive(Debug, Clone, Args)]
pub struct AnalyzeArgs {
    /// TOML file with the fields below; flags override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[command(flatten)]
    pub out: OutArgs,
    #[arg(long)]
    pub world: Option<PathBuf>,
    /// Needed only for decode files written without traces.
    #[arg(long)]
    pub ensemble: Option<PathBuf>,
    /// Decode files to pool; may be repeated.
    #[arg(long = "decode", short = 'd')]
    pub decode: Vec<PathBuf>,
    /// Comma-separated ascending bin edges in nats.
    #[arg(long, value_delimiter = ',')]
    pub edges: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnalyzeRun {
    pub world: PathBuf,
    pub ensemble: Option<PathBuf>,
    pub decode: Vec<PathBuf>,
    pub edges: Vec<f64>,
}

impl Default for AnalyzeRun {
    fn default() -> Self {
        AnalyzeRun {
            world: PathBuf::new(),
            ensemble: None,
            decode: Vec::new(),
            edges: DEFAULT_BIN_EDGES.to_vec(),
        }
    }
}

impl AnalyzeArgs {
    pub fn resolve(&self) -> Result<AnalyzeRun> {
        let mut run: AnalyzeRun = load_config(self.config.as_deref())?;
        if let Some(p) = &self.world {
            run.world = p.clone();
        }
        if let Some(p) = &self.ensemble {
            run.ensemble = Some(p.clone());
        }
        if !self.decode.is_empty() {
            run.decode = self.decode.clone();
        }
        if let Some(e) = &self.edges {
            run.edges = e.clone();
        }
        Ok(run)
    }
}

impl Run for AnalyzeRun {
    const NAME: &'static str = "analyze";

    fn execute(&self, out: &mut OutputDir) -> Result<Provenance> {
        if self.decode.is_empty() {
            return Err(CliError::Config("at least one decode file is required".into()));
        }
        let (world, world_digest) = open_world(&self.world)?;
        let ensemble = match &self.ensemble {
            Some(p) => Some(open_ensemble(p, &world)?),
            None => None,
        };
        let mut inputs = vec![world_digest.clone()];
        if let Some((_, d)) = &ensemble {
            inputs.push(d.clone());
        }
        let mut outputs = Vec::new();
        for path in &self.decode {
            let file = DecodeFile::load(path)?;
            if file.world_sha256 != world_digest.sha256 {
                return Err(CliError::WorldMismatch(format!(
                    "{} was decoded from a different world ({}) than {} ({})",
                    path.display(),
                    file.world_sha256,
                    self.world.display(),
                    world_digest.sha256
                )));
            }
            if let Some((_, d)) = &ensemble {
                if file.ensemble_sha256 != d.sha256 {
                    return Err(CliError::WorldMismatch(format!(
                        "{} was decoded with a different ensemble than {}",
                        path.display(),
                        d.path
                    )));
                }
            }
            for r in &file.records {
                outputs.push(r.to_hypothesis(ensemble.as_ref().map(|(e, _)| e))?);
            }
            inputs.push(digest_file(path)?);
        }
        let (summary, preds) = analyze(&world, &outputs, &self.edges)?;
        out.write(BINS_FILE, bins_tsv(&summary).as_bytes())?;
        out.write(CORRELATIONS_FILE, correlations_tsv(&summary).as_bytes())?;
        out.write(MENTIONS_FILE, mentions_tsv(&world, &preds).as_bytes())?;
        out.write(SUMMARY_FILE, to_pretty_json(&summary).as_bytes())?;
        Ok(Provenance {
            seeds: world_seeds(&world, ensemble.as_ref().map(|(e, _)| e)),
            inputs,
        })
    }
}

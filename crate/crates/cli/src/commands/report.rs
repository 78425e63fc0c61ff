use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::Args;
use serde::{Deserialize, Serialize};
use uabs_core::analysis::{GridPoint, TradeoffRecord};

use super::analyze::{AnalysisSummary, SUMMARY_FILE, UNDEFINED};
use super::sweep::{read_tradeoff, TRADEOFF_FILE};
use super::{OutArgs, Provenance, Run};
use crate::artifact::{digest_file, parse_json, read_text, sha256_hex, to_pretty_json, Manifest, OutputDir, MANIFEST_FILE, TOOL_VERSION};
use crate::error::{CliError, Result};

pub const REPORT_MD: &str = "report.md";
pub const REPORT_JSON: &str = "report.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub tool_version: String,
    pub sweep_tool_version: String,
    pub seeds: BTreeMap<String, u64>,
    pub grid: Vec<GridPoint>,
    pub tradeoff: Vec<TradeoffRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub analysis: Option<AnalysisSummary>,
}

/// Reads a run directory's manifest and checks the named output against it.
fn open_run(dir: &Path, subcommand: &str, file: &str) -> Result<(Manifest, String, PathBuf)> {
    let manifest = Manifest::load(&dir.join(MANIFEST_FILE))?;
    if manifest.subcommand != subcommand {
        return Err(CliError::Config(format!(
            "{} holds a `{}` run, expected `{subcommand}`",
            dir.display(),
            manifest.subcommand
        )));
    }
    let path = dir.join(file);
    let text = read_text(&path)?;
    let recorded = manifest.outputs.iter().find(|o| o.path == file);
    if recorded.map(|o| o.sha256.as_str()) != Some(sha256_hex(text.as_bytes()).as_str()) {
        return Err(CliError::InputChanged(format!(
            "{} does not match the digest in its manifest",
            path.display()
        )));
    }
    Ok((manifest, text, path))
}

pub fn build_report(sweep_dir: &Path, analysis_dir: Option<&Path>) -> Result<(Report, Vec<PathBuf>)> {
    let (manifest, text, tradeoff_path) = open_run(sweep_dir, "sweep", TRADEOFF_FILE)?;
    let grid: Vec<GridPoint> = serde_json::from_value(manifest.config.get("grid").cloned().unwrap_or_default())
        .map_err(|e| CliError::Parse {
            path: sweep_dir.join(MANIFEST_FILE),
            message: format!("sweep grid: {e}"),
        })?;
    let mut read = vec![sweep_dir.join(MANIFEST_FILE), tradeoff_path];
    let mut seeds = manifest.seeds.clone();
    let analysis = match analysis_dir {
        None => None,
        Some(dir) => {
            let (am, text, path) = open_run(dir, "analyze", SUMMARY_FILE)?;
            for (k, v) in &am.seeds {
                if seeds.get(k).is_some_and(|s| s != v) {
                    return Err(CliError::WorldMismatch(format!(
                        "analysis seed `{k}` = {v} differs from the sweep's {}",
                        seeds[k]
                    )));
                }
                seeds.insert(k.clone(), *v);
            }
            read.push(dir.join(MANIFEST_FILE));
            read.push(path.clone());
            Some(parse_json(&text, &path)?)
        }
    };
    let report = Report {
        tool_version: TOOL_VERSION.into(),
        sweep_tool_version: manifest.tool_version,
        seeds,
        grid,
        tradeoff: read_tradeoff(&text)?,
        analysis,
    };
    Ok((report, read))
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(|| UNDEFINED.to_string(), |x| format!("{x:.4}"))
}

pub fn render_markdown(r: &Report) -> String {
    let mut s = String::from("# Uncertainty-aware beam search report\n\n");
    let seeds: Vec<String> = r.seeds.iter().map(|(k, v)| format!("{k} = {v}")).collect();
    let _ = writeln!(s, "Tool version {}. Seeds: {}.\n", r.tool_version, seeds.join(", "));
    s.push_str("## Quality versus hallucination\n\n");
    s.push_str("| kind | lambda | quality | quality/token | hallucination rate | avg len | mentions | generic |\n");
    s.push_str("|---|---|---|---|---|---|---|---|\n");
    for t in &r.tradeoff {
        let _ = writeln!(
            s,
            "| {} | {} | {:.4} | {:.4} | {:.4} | {:.3} | {} | {:.3} |",
            t.kind, t.lambda, t.quality, t.quality_per_token, t.hallucination_rate, t.avg_len, t.mention_count, t.generic_rate
        );
    }
    if let Some(a) = &r.analysis {
        s.push_str("\n## Uncertainty and hallucination\n\n");
        let _ = writeln!(
            s,
            "{} outputs, {} mentions, {} hallucinated (rate {:.4}).\n",
            a.outputs, a.hallucination.mentions, a.hallucination.hallucinated, a.hallucination.rate
        );
        s.push_str("| kind | pearson | bin trend |\n|---|---|---|\n");
        for k in &a.kinds {
            let _ = writeln!(s, "| {} | {} | {} |", k.kind, opt(k.correlation), opt(k.bin_trend));
        }
        for k in &a.kinds {
            let _ = writeln!(s, "\n### Hallucination rate by {} uncertainty\n", k.kind);
            s.push_str("| bin | count | hallucinated | rate |\n|---|---|---|---|\n");
            for b in &k.bins.bins {
                let _ = writeln!(s, "| {} | {} | {} | {} |", b.label(), b.count, b.hallucinated, opt(b.rate));
            }
        }
    }
    s
}

#[derive(Debug, Clone, Args)]
pub struct ReportArgs {
    #[command(flatten)]
    pub out: OutArgs,
    /// Directory written by `uabs sweep`.
    #[arg(long)]
    pub sweep: PathBuf,
    /// Directory written by `uabs analyze`.
    #[arg(long)]
    pub analysis: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReportRun {
    pub sweep: PathBuf,
    #[serde(default)]
    pub analysis: Option<PathBuf>,
}

impl ReportArgs {
    pub fn resolve(&self) -> ReportRun {
        ReportRun {
            sweep: self.sweep.clone(),
            analysis: self.analysis.clone(),
        }
    }
}

impl Run for ReportRun {
    const NAME: &'static str = "report";

    fn execute(&self, out: &mut OutputDir) -> Result<Provenance> {
        let (report, read) = build_report(&self.sweep, self.analysis.as_deref())?;
        out.write(REPORT_MD, render_markdown(&report).as_bytes())?;
        out.write(REPORT_JSON, to_pretty_json(&report).as_bytes())?;
        Ok(Provenance {
            seeds: report.seeds.clone(),
            inputs: read.iter().map(|p| digest_file(p)).collect::<Result<_>>()?,
        })
    }
}

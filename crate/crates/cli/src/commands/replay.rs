use std::path::{Path, PathBuf};

use clap::Args;
use serde::de::DeserializeOwned;

use super::analyze::AnalyzeRun;
use super::decode::DecodeRun;
use super::ensemble::EnsembleRun;
use super::report::ReportRun;
use super::sweep::SweepRun;
use super::world::WorldRun;
use super::{execute_into, print_summary, OutArgs, Run};
use crate::artifact::{digest_file, Manifest};
use crate::error::{CliError, Result};

#[derive(Debug, Clone, Args)]
pub struct ReplayArgs {
    /// Manifest of the run to repeat.
    pub manifest: PathBuf,
    #[command(flatten)]
    pub out: OutArgs,
}

/// Re-runs a recorded command and checks that every output is
/// byte-identical. Returns the new output directory.
pub fn replay(manifest_path: &Path, out: &OutArgs) -> Result<(PathBuf, Manifest)> {
    let recorded = Manifest::load(manifest_path)?;
    for input in &recorded.inputs {
        let now = digest_file(Path::new(&input.path)).map_err(|e| match e {
            CliError::Io { .. } => CliError::InputChanged(format!("{} is no longer readable", input.path)),
            other => other,
        })?;
        if now.sha256 != input.sha256 {
            return Err(CliError::InputChanged(format!(
                "{} changed since the run (was {}, now {})",
                input.path, input.sha256, now.sha256
            )));
        }
    }
    let (root, fresh) = match recorded.subcommand.as_str() {
        WorldRun::NAME => rerun::<WorldRun>(&recorded, out)?,
        EnsembleRun::NAME => rerun::<EnsembleRun>(&recorded, out)?,
        DecodeRun::NAME => rerun::<DecodeRun>(&recorded, out)?,
        SweepRun::NAME => rerun::<SweepRun>(&recorded, out)?,
        AnalyzeRun::NAME => rerun::<AnalyzeRun>(&recorded, out)?,
        ReportRun::NAME => rerun::<ReportRun>(&recorded, out)?,
        other => return Err(CliError::Config(format!("cannot replay unknown subcommand `{other}`"))),
    };
    if fresh.outputs != recorded.outputs {
        let differing: Vec<&str> = recorded
            .outputs
            .iter()
            .filter(|o| !fresh.outputs.contains(o))
            .map(|o| o.path.as_str())
            .collect();
        return Err(CliError::ReplayMismatch(format!(
            "outputs in {} differ from the recorded run: {}",
            root.display(),
            if differing.is_empty() { "file set changed".into() } else { differing.join(", ") }
        )));
    }
    Ok((root, fresh))
}

fn rerun<R: Run>(recorded: &Manifest, out: &OutArgs) -> Result<(PathBuf, Manifest)> {
    let run: R = config(recorded)?;
    execute_into(&run, out)
}

fn config<T: DeserializeOwned>(m: &Manifest) -> Result<T> {
    serde_json::from_value(m.config.clone())
        .map_err(|e| CliError::Config(format!("manifest config for `{}` is invalid: {e}", m.subcommand)))
}

pub fn launch(args: &ReplayArgs) -> Result<()> {
    let (root, manifest) = replay(&args.manifest, &args.out)?;
    print_summary(&root, &manifest);
    Ok(())
}

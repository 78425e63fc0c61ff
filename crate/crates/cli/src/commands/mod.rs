//! Subcommand implementations. Each run is described by a serializable
//! configuration that is echoed into the manifest and is enough to replay
//! the run.

pub mod analyze;
pub mod decode;
pub mod ensemble;
pub mod replay;
pub mod report;
pub mod sweep;
pub mod world;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use clap::Args;
use serde::de::DeserializeOwned;
use serde::Serialize;
use uabs_core::model::{load_ensemble, load_world, EnsembleModel, EnsembleScorer, WorldSpec};

use crate::artifact::{digest_file, read_text, FileDigest, Manifest, OutputDir};
use crate::error::{CliError, Result};

#[derive(Debug, Clone, Args)]
pub struct OutArgs {
    /// Output directory. An occupied directory is left untouched and a
    /// timestamped sibling is used instead.
    #[arg(long, short)]
    pub out: PathBuf,
    /// Write into the output directory even if it already has files.
    #[arg(long)]
    pub overwrite: bool,
}

/// Seeds and input digests a run depended on.
#[derive(Debug, Default)]
pub struct Provenance {
    pub seeds: BTreeMap<String, u64>,
    pub inputs: Vec<FileDigest>,
}

pub trait Run: Serialize + DeserializeOwned {
    const NAME: &'static str;
    fn execute(&self, out: &mut OutputDir) -> Result<Provenance>;
}

pub fn launch<R: Run>(run: &R, out: &OutArgs) -> Result<()> {
    let (root, manifest) = execute_into(run, out)?;
    print_summary(&root, &manifest);
    Ok(())
}

pub(crate) fn execute_into<R: Run>(run: &R, out: &OutArgs) -> Result<(PathBuf, Manifest)> {
    let mut dir = OutputDir::create(&out.out, out.overwrite)?;
    let prov = run.execute(&mut dir)?;
    let config = serde_json::to_value(run).expect("configurations serialize");
    dir.finish(R::NAME, config, prov.seeds, prov.inputs)
}

pub(crate) fn print_summary(root: &Path, manifest: &Manifest) {
    let summary = serde_json::json!({
        "subcommand": manifest.subcommand,
        "out": root.display().to_string(),
        "outputs": manifest.outputs.iter().map(|o| &o.path).collect::<Vec<_>>(),
    });
    println!("{summary}");
}

/// Reads a TOML configuration, or the defaults when no file is given.
pub fn load_config<T: DeserializeOwned + Default>(path: Option<&Path>) -> Result<T> {
    match path {
        None => Ok(T::default()),
        Some(p) => toml::from_str(&read_text(p)?).map_err(|e| CliError::Parse {
            path: p.into(),
            message: e.to_string(),
        }),
    }
}

pub(crate) fn require_path(field: &str, path: &Path) -> Result<()> {
    if path.as_os_str().is_empty() {
        return Err(CliError::Config(format!("`{field}` is required")));
    }
    Ok(())
}

pub(crate) fn open_world(path: &Path) -> Result<(WorldSpec, FileDigest)> {
    require_path("world", path)?;
    let digest = digest_file(path)?;
    Ok((load_world(path)?, digest))
}

pub(crate) fn open_ensemble(path: &Path, world: &WorldSpec) -> Result<(EnsembleModel, FileDigest)> {
    require_path("ensemble", path)?;
    let digest = digest_file(path)?;
    let ensemble = load_ensemble(path)?;
    if ensemble.vocab_size() != world.vocab().len() || ensemble.num_inputs() != world.num_inputs() {
        return Err(CliError::WorldMismatch(format!(
            "{} has {} tokens and {} inputs but the world has {} and {}",
            path.display(),
            ensemble.vocab_size(),
            ensemble.num_inputs(),
            world.vocab().len(),
            world.num_inputs()
        )));
    }
    Ok((ensemble, digest))
}

pub(crate) fn world_seeds(world: &WorldSpec, ensemble: Option<&EnsembleModel>) -> BTreeMap<String, u64> {
    let mut seeds = BTreeMap::from([("world".to_string(), world.seed())]);
    if let Some(p) = ensemble.and_then(|e| e.provenance()) {
        seeds.insert("ensemble".into(), p.seed);
    }
    seeds
}

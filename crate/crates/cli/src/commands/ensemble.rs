use std::path::PathBuf;

use clap::Args;
use serde::{Deserialize, Serialize};
use uabs_core::model::{ensemble_to_string, perturb_members_with, PerturbConfig};

use super::{load_config, open_world, OutArgs, Provenance, Run};
use crate::artifact::OutputDir;
use crate::error::Result;

pub const ENSEMBLE_FILE: &str = "ensemble.json";

#[derive(Debug, Clone, Args)]
pub struct EnsembleArgs {
    /// TOML file with the fields below; flags override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[command(flatten)]
    pub out: OutArgs,
    #[arg(long)]
    pub world: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub members: Option<usize>,
    #[arg(long)]
    pub noise: Option<f64>,
    #[arg(long)]
    pub leak_spread: Option<f64>,
    #[arg(long)]
    pub unseen_mix: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnsembleRun {
    pub world: PathBuf,
    pub seed: u64,
    pub members: usize,
    pub noise: f64,
    pub leak_spread: f64,
    pub unseen_mix: f64,
}

impl Default for EnsembleRun {
    fn default() -> Self {
        let p = PerturbConfig::default();
        EnsembleRun {
            world: PathBuf::new(),
            seed: p.seed,
            members: p.members,
            noise: p.noise,
            leak_spread: p.leak_spread,
            unseen_mix: p.unseen_mix,
        }
    }
}

impl EnsembleArgs {
    pub fn resolve(&self) -> Result<EnsembleRun> {
        let mut run: EnsembleRun = load_config(self.config.as_deref())?;
        if let Some(w) = &self.world {
            run.world = w.clone();
        }
        macro_rules! set {
            ($($field:ident),*) => {$(
                if let Some(v) = self.$field {
                    run.$field = v;
                }
            )*};
        }
        set!(seed, members, noise, leak_spread, unseen_mix);
        Ok(run)
    }
}

impl Run for EnsembleRun {
    const NAME: &'static str = "ensemble";

    fn execute(&self, out: &mut OutputDir) -> Result<Provenance> {
        let (world, digest) = open_world(&self.world)?;
        let cfg = PerturbConfig {
            members: self.members,
            noise: self.noise,
            leak_spread: self.leak_spread,
            unseen_mix: self.unseen_mix,
            seed: self.seed,
        };
        let ensemble = perturb_members_with(&world, &cfg)?;
        out.write(ENSEMBLE_FILE, ensemble_to_string(&ensemble).as_bytes())?;
        Ok(Provenance {
            seeds: [("world".to_string(), world.seed()), ("ensemble".to_string(), self.seed)].into(),
            inputs: vec![digest],
        })
    }
}

use std::path::PathBuf;

use clap::Args;
use serde::{Deserialize, Serialize};
use uabs_core::model::{generate_world, world_to_string, WorldConfig};

use super::{load_config, OutArgs, Provenance, Run};
use crate::artifact::OutputDir;
use crate::error::Result;

pub const WORLD_FILE: &str = "world.json";

#[derive(Debug, Clone, Args)]
pub struct WorldArgs {
    /// TOML file with `seed` and a `[world]` table; flags override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[command(flatten)]
    pub out: OutArgs,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub vocab_size: Option<usize>,
    #[arg(long)]
    pub content_tokens: Option<usize>,
    #[arg(long)]
    pub inputs: Option<usize>,
    #[arg(long)]
    pub order: Option<usize>,
    #[arg(long)]
    pub grounded_fraction: Option<f64>,
    #[arg(long)]
    pub max_len: Option<usize>,
    #[arg(long)]
    pub concentration: Option<f64>,
    #[arg(long)]
    pub concentration_spread: Option<f64>,
    #[arg(long)]
    pub eos_weight: Option<f64>,
    #[arg(long)]
    pub leak: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WorldRun {
    pub seed: u64,
    pub world: WorldConfig,
}

impl WorldArgs {
    pub fn resolve(&self) -> Result<WorldRun> {
        let mut run: WorldRun = load_config(self.config.as_deref())?;
        let w = &mut run.world;
        macro_rules! set {
            ($($field:ident),*) => {$(
                if let Some(v) = self.$field {
                    w.$field = v;
                }
            )*};
        }
        set!(vocab_size, content_tokens, inputs, order, grounded_fraction, max_len);
        set!(concentration, concentration_spread, eos_weight, leak);
        if let Some(s) = self.seed {
            run.seed = s;
        }
        Ok(run)
    }
}

impl Run for WorldRun {
    const NAME: &'static str = "world";

    fn execute(&self, out: &mut OutputDir) -> Result<Provenance> {
        let world = generate_world(&self.world, self.seed)?;
        out.write(WORLD_FILE, world_to_string(&world).as_bytes())?;
        Ok(Provenance {
            seeds: [("world".to_string(), self.seed)].into(),
            inputs: Vec::new(),
        })
    }
}

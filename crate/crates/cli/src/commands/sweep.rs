use std::path::PathBuf;

use clap::Args;
use serde::{Deserialize, Serialize};
use uabs_core::analysis::{default_grid, sweep, Decoder, GridPoint, SweepConfig, TradeoffRecord};
use uabs_core::decode::UncertaintyKind;

use super::decode::{DecodeFile, DecodeRecord, DecodeSettings, DECODE_SCHEMA_VERSION};
use super::{load_config, open_ensemble, open_world, world_seeds, OutArgs, Provenance, Run};
use crate::artifact::OutputDir;
use crate::error::{CliError, Result};

pub const TRADEOFF_FILE: &str = "tradeoff.tsv";
pub const POINTS_DIR: &str = "points";

/// Parses `default` or `kind:l,l;kind:l`.
pub fn parse_grid(text: &str) -> Result<Vec<GridPoint>> {
    let text = text.trim();
    if text.eq_ignore_ascii_case("default") {
        return Ok(default_grid(false));
    }
    let mut grid = Vec::new();
    for group in text.split(';').map(str::trim).filter(|g| !g.is_empty()) {
        let (kind, lambdas) = group
            .split_once(':')
            .ok_or_else(|| CliError::Config(format!("grid group `{group}` must look like kind:l1,l2")))?;
        let kind: UncertaintyKind = kind.trim().parse()?;
        for l in lambdas.split(',').map(str::trim).filter(|l| !l.is_empty()) {
            let lambda: f64 = l
                .parse()
                .map_err(|_| CliError::Config(format!("grid weight `{l}` is not a number")))?;
            grid.push(GridPoint { lambda, kind });
        }
    }
    Ok(grid)
}

/// Adds a `λ = 0` point in front of each kind that lacks one.
pub fn with_baseline(grid: &[GridPoint]) -> Vec<GridPoint> {
    let mut out = Vec::with_capacity(grid.len() + UncertaintyKind::ALL.len());
    for (i, p) in grid.iter().enumerate() {
        let first_of_kind = grid[..i].iter().all(|q| q.kind != p.kind);
        let has_zero = grid.iter().any(|q| q.kind == p.kind && q.lambda == 0.0);
        if first_of_kind && !has_zero {
            out.push(GridPoint { lambda: 0.0, kind: p.kind });
        }
        out.push(*p);
    }
    out
}

pub fn point_file_name(index: usize, p: &GridPoint) -> String {
    format!("{POINTS_DIR}/{index:02}-{}-{}.json", p.kind, p.lambda)
}

pub fn tradeoff_tsv(records: &[TradeoffRecord]) -> Result<Vec<u8>> {
    let mut w = csv::WriterBuilder::new().delimiter(b'\t').from_writer(Vec::new());
    for r in records {
        w.serialize(r).map_err(|e| CliError::Config(format!("cannot write trade-off table: {e}")))?;
    }
    w.into_inner().map_err(|e| CliError::Config(format!("cannot write trade-off table: {e}")))
}

pub fn read_tradeoff(text: &str) -> Result<Vec<TradeoffRecord>> {
    csv::ReaderBuilder::new()
        .delimiter(b'\t')
        .from_reader(text.as_bytes())
        .deserialize()
        .collect::<std::result::Result<_, _>>()
        .map_err(|e| CliError::Config(format!("malformed trade-off table: {e}")))
}

#[derive(Debug, Clone, Args)]
pub struct SweepArgs {
    /// TOML file with the fields below; flags override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[command(flatten)]
    pub out: OutArgs,
    #[arg(long)]
    pub world: Option<PathBuf>,
    #[arg(long)]
    pub ensemble: Option<PathBuf>,
    /// `default` or `kind:l1,l2;kind:l3`.
    #[arg(long)]
    pub grid: Option<String>,
    /// Add a zero-weight point for every kind in the grid.
    #[arg(long)]
    pub baseline: bool,
    #[arg(long, short = 'b')]
    pub beam_width: Option<usize>,
    /// Use the brute-force decoder with this search-space cap.
    #[arg(long)]
    pub exhaustive_cap: Option<u64>,
    #[arg(long)]
    pub max_len: Option<usize>,
    /// Worker threads; all cores by default.
    #[arg(long)]
    pub workers: Option<usize>,
    /// Include per-step traces in the point files.
    #[arg(long)]
    pub trace: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepRun {
    pub world: PathBuf,
    pub ensemble: PathBuf,
    pub grid: Vec<GridPoint>,
    pub decoder: Decoder,
    pub max_len: Option<usize>,
    pub workers: Option<usize>,
    pub trace: bool,
}

impl Default for SweepRun {
    fn default() -> Self {
        SweepRun {
            world: PathBuf::new(),
            ensemble: PathBuf::new(),
            grid: default_grid(true),
            decoder: Decoder::Beam { width: 5 },
            max_len: None,
            workers: None,
            trace: false,
        }
    }
}

impl SweepArgs {
    pub fn resolve(&self) -> Result<SweepRun> {
        let mut run: SweepRun = load_config(self.config.as_deref())?;
        if let Some(p) = &self.world {
            run.world = p.clone();
        }
        if let Some(p) = &self.ensemble {
            run.ensemble = p.clone();
        }
        if let Some(g) = &self.grid {
            run.grid = parse_grid(g)?;
        }
        if self.baseline {
            run.grid = with_baseline(&run.grid);
        }
        if let Some(width) = self.beam_width {
            run.decoder = Decoder::Beam { width };
        }
        if let Some(cap) = self.exhaustive_cap {
            run.decoder = Decoder::Exhaustive { cap };
        }
        if let Some(v) = self.max_len {
            run.max_len = Some(v);
        }
        if let Some(v) = self.workers {
            run.workers = Some(v);
        }
        run.trace |= self.trace;
        Ok(run)
    }
}

impl Run for SweepRun {
    const NAME: &'static str = "sweep";

    fn execute(&self, out: &mut OutputDir) -> Result<Provenance> {
        if self.grid.is_empty() {
            return Err(uabs_core::Error::invalid_config("grid", "must contain at least one point").into());
        }
        if self.workers == Some(0) {
            return Err(uabs_core::Error::invalid_config("workers", "must be at least 1").into());
        }
        let (world, world_digest) = open_world(&self.world)?;
        let (ensemble, ensemble_digest) = open_ensemble(&self.ensemble, &world)?;
        let cfg = SweepConfig {
            decoder: self.decoder,
            max_len: self.max_len.unwrap_or(world.max_len()),
        };
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(self.workers.unwrap_or(0))
            .build()
            .map_err(|e| CliError::Config(format!("cannot start workers: {e}")))?;
        let points = pool.install(|| sweep(&world, &ensemble, &self.grid, &cfg))?;

        let records: Vec<TradeoffRecord> = points.iter().map(|p| p.record.clone()).collect();
        out.write(TRADEOFF_FILE, &tradeoff_tsv(&records)?)?;
        for (i, (point, g)) in points.iter().zip(&self.grid).enumerate() {
            let file = DecodeFile {
                schema_version: DECODE_SCHEMA_VERSION,
                kind: "decode".into(),
                world_sha256: world_digest.sha256.clone(),
                ensemble_sha256: ensemble_digest.sha256.clone(),
                settings: DecodeSettings {
                    decoder: self.decoder,
                    lambda: g.lambda,
                    kind: g.kind,
                    max_len: cfg.max_len,
                    strict: false,
                },
                records: point
                    .outputs
                    .iter()
                    .map(|h| DecodeRecord::new(&world, h, self.trace))
                    .collect(),
            };
            out.write(&point_file_name(i, g), file.to_json().as_bytes())?;
        }
        Ok(Provenance {
            seeds: world_seeds(&world, Some(&ensemble)),
            inputs: vec![world_digest, ensemble_digest],
        })
    }
}


#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_syntax() {
        let g = parse_grid("epistemic:10,20; total:0.5").unwrap();
        assert_eq!(
            g,
            vec![
                GridPoint { lambda: 10.0, kind: UncertaintyKind::Epistemic },
                GridPoint { lambda: 20.0, kind: UncertaintyKind::Epistemic },
                GridPoint { lambda: 0.5, kind: UncertaintyKind::Total },
            ]
        );
        assert_eq!(parse_grid("default").unwrap(), default_grid(false));
        assert!(parse_grid("").unwrap().is_empty());
        assert!(parse_grid("epistemic").is_err());
        assert!(parse_grid("bogus:1").is_err());
        assert!(parse_grid("total:x").is_err());
    }

    #[test]
    fn baseline_prepends_zero_once() {
        assert_eq!(with_baseline(&default_grid(false)), default_grid(true));
        assert_eq!(with_baseline(&default_grid(true)), default_grid(true));
    }

    #[test]
    fn tradeoff_round_trip() {
        let r = TradeoffRecord {
            lambda: 0.1,
            kind: UncertaintyKind::Aleatoric,
            quality: -1.25,
            quality_per_token: -0.5,
            hallucination_rate: 0.125,
            avg_len: 2.5,
            mention_count: 7,
            generic_rate: 0.0,
        };
        let bytes = tradeoff_tsv(std::slice::from_ref(&r)).unwrap();
        let text = String::from_utf8(bytes).unwrap();
        assert!(text.starts_with("lambda\tkind\t"));
        assert_eq!(read_tradeoff(&text).unwrap(), vec![r]);
    }
}

//! Versioned JSON documents for worlds and ensembles.
//!
//! Floats are written in shortest round-trip form, so `load(save(x)) == x`
//! bit for bit. Every document carries `schema_version` and `kind`.

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::error::Category;

use super::tabular::{EnsembleModel, PerturbConfig, TabularModel};
use super::vocab::Vocab;
use super::world::{WorldConfig, WorldSpec};
use super::InputId;
use crate::error::{Error, Result};
use crate::prob::TokenId;

pub const WORLD_SCHEMA_VERSION: u32 = 1;
pub const ENSEMBLE_SCHEMA_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct InputDoc {
    id: InputId,
    grounded: Vec<TokenId>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct WorldDoc {
    schema_version: u32,
    kind: String,
    seed: u64,
    #[serde(default)]
    config: Option<WorldConfig>,
    max_len: usize,
    leak: f64,
    vocab: Vocab,
    slots: Vec<u32>,
    inputs: Vec<InputDoc>,
    true_model: TabularModel,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct EnsembleDoc {
    schema_version: u32,
    kind: String,
    #[serde(default)]
    provenance: Option<PerturbConfig>,
    members: Vec<TabularModel>,
}

pub fn world_to_string(world: &WorldSpec) -> String {
    let doc = WorldDoc {
        schema_version: WORLD_SCHEMA_VERSION,
        kind: "world".into(),
        seed: world.seed,
        config: world.config.clone(),
        max_len: world.max_len,
        leak: world.leak,
        vocab: world.vocab.clone(),
        slots: world.slots.clone(),
        inputs: world
            .grounded
            .iter()
            .enumerate()
            .map(|(i, g)| InputDoc {
                id: InputId(i as u32),
                grounded: g.iter().copied().collect(),
            })
            .collect(),
        true_model: world.true_model.clone(),
    };
    to_pretty(&doc)
}

pub fn world_from_str(text: &str) -> Result<WorldSpec> {
    parse_world(text, Path::new("<memory>"))
}

pub fn save_world(path: impl AsRef<Path>, world: &WorldSpec) -> Result<()> {
    write(path.as_ref(), &world_to_string(world))
}

pub fn load_world(path: impl AsRef<Path>) -> Result<WorldSpec> {
    let path = path.as_ref();
    parse_world(&read(path)?, path)
}

fn parse_world(text: &str, path: &Path) -> Result<WorldSpec> {
    let doc: WorldDoc = parse_versioned(text, path, "world", WORLD_SCHEMA_VERSION)?;
    let mut grounded = Vec::with_capacity(doc.inputs.len());
    for (i, input) in doc.inputs.into_iter().enumerate() {
        if input.id.index() != i {
            return Err(Error::InvariantViolation(format!(
                "input ids must be dense and ordered; found {} at position {i}",
                input.id
            )));
        }
        grounded.push(input.grounded.into_iter().collect::<BTreeSet<_>>());
    }
    WorldSpec::from_parts(
        doc.vocab,
        doc.slots,
        grounded,
        doc.true_model,
        doc.leak,
        doc.max_len,
        doc.seed,
        doc.config,
    )
}

pub fn ensemble_to_string(ensemble: &EnsembleModel) -> String {
    let doc = EnsembleDoc {
        schema_version: ENSEMBLE_SCHEMA_VERSION,
        kind: "ensemble".into(),
        provenance: ensemble.provenance().cloned(),
        members: ensemble.members().to_vec(),
    };
    to_pretty(&doc)
}

pub fn ensemble_from_str(text: &str) -> Result<EnsembleModel> {
    parse_ensemble(text, Path::new("<memory>"))
}

pub fn save_ensemble(path: impl AsRef<Path>, ensemble: &EnsembleModel) -> Result<()> {
    write(path.as_ref(), &ensemble_to_string(ensemble))
}

pub fn load_ensemble(path: impl AsRef<Path>) -> Result<EnsembleModel> {
    let path = path.as_ref();
    parse_ensemble(&read(path)?, path)
}

fn parse_ensemble(text: &str, path: &Path) -> Result<EnsembleModel> {
    let doc: EnsembleDoc = parse_versioned(text, path, "ensemble", ENSEMBLE_SCHEMA_VERSION)?;
    let e = EnsembleModel::new(doc.members)?;
    e.validate()?;
    Ok(match doc.provenance {
        Some(p) => e.with_provenance(p),
        None => e,
    })
}

/// Checks `kind` and `schema_version` before decoding the body, so version
/// skew is reported as such rather than as a field error.
pub(crate) fn parse_versioned<T: DeserializeOwned>(
    text: &str,
    path: &Path,
    kind: &str,
    expected: u32,
) -> Result<T> {
    let value: serde_json::Value = serde_json::from_str(text).map_err(|e| format_error(path, e))?;
    let found_kind = value.get("kind").and_then(|k| k.as_str()).unwrap_or("");
    if found_kind != kind {
        return Err(Error::InvariantViolation(format!(
            "{}: expected a `{kind}` document, found `{found_kind}`",
            path.display()
        )));
    }
    let version = value
        .get("schema_version")
        .and_then(|v| v.as_u64())
        .ok_or_else(|| Error::InvariantViolation(format!("{}: missing schema_version", path.display())))?;
    if version != u64::from(expected) {
        return Err(Error::SchemaVersionMismatch {
            expected,
            found: version.min(u64::from(u32::MAX)) as u32,
        });
    }
    serde_json::from_value(value).map_err(|e| format_error(path, e))
}

fn format_error(path: &Path, e: serde_json::Error) -> Error {
    match e.classify() {
        Category::Data => Error::InvariantViolation(format!("{}: {e}", path.display())),
        _ => Error::Format {
            path: path.to_path_buf(),
            source: e,
        },
    }
}

pub(crate) fn to_pretty<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("documents serialize infallibly");
    s.push('\n');
    s
}

pub(crate) fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|source| Error::Io {
        path: PathBuf::from(path),
        source,
    })
}

pub(crate) fn write(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|source| Error::Io {
        path: PathBuf::from(path),
        source,
    })
}

//! Output directories, digests and run manifests.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::SystemTime;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{CliError, Result};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const MANIFEST_SCHEMA_VERSION: u32 = 1;
pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileDigest {
    pub path: String,
    pub sha256: String,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| CliError::io(path, e))
}

pub fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| CliError::io(path, e))
}

pub fn digest_file(path: &Path) -> Result<FileDigest> {
    Ok(FileDigest {
        path: path.display().to_string(),
        sha256: sha256_hex(&read_bytes(path)?),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub schema_version: u32,
    pub kind: String,
    pub tool_version: String,
    pub subcommand: String,
    pub config: serde_json::Value,
    pub seeds: BTreeMap<String, u64>,
    pub inputs: Vec<FileDigest>,
    /// Paths relative to the output directory.
    pub outputs: Vec<FileDigest>,
}

impl Manifest {
    pub fn load(path: &Path) -> Result<Self> {
        let m: Manifest = parse_json(&read_text(path)?, path)?;
        if m.kind != "manifest" {
            return Err(CliError::Parse {
                path: path.into(),
                message: format!("expected a manifest, found kind `{}`", m.kind),
            });
        }
        if m.schema_version != MANIFEST_SCHEMA_VERSION {
            return Err(uabs_core::Error::SchemaVersionMismatch {
                expected: MANIFEST_SCHEMA_VERSION,
                found: m.schema_version,
            }
            .into());
        }
        Ok(m)
    }
}

/// A directory that receives every file of one run. Existing non-empty
/// directories are never written into unless `overwrite` is set; a
/// timestamped sibling is used instead.
#[derive(Debug)]
pub struct OutputDir {
    root: PathBuf,
    written: Vec<FileDigest>,
}

impl OutputDir {
    pub fn create(requested: &Path, overwrite: bool) -> Result<Self> {
        let root = if overwrite || is_vacant(requested)? {
            requested.to_path_buf()
        } else {
            fresh_sibling(requested)?
        };
        fs::create_dir_all(&root).map_err(|e| CliError::io(&root, e))?;
        Ok(OutputDir {
            root,
            written: Vec::new(),
        })
    }

    #[cfg(test)]
    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn write(&mut self, rel: &str, bytes: &[u8]) -> Result<()> {
        let path = self.root.join(rel);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent).map_err(|e| CliError::io(parent, e))?;
        }
        fs::write(&path, bytes).map_err(|e| CliError::io(&path, e))?;
        self.written.push(FileDigest {
            path: rel.to_string(),
            sha256: sha256_hex(bytes),
        });
        Ok(())
    }

    /// Writes the manifest and returns it.
    pub fn finish(
        self,
        subcommand: &str,
        config: serde_json::Value,
        seeds: BTreeMap<String, u64>,
        inputs: Vec<FileDigest>,
    ) -> Result<(PathBuf, Manifest)> {
        let manifest = Manifest {
            schema_version: MANIFEST_SCHEMA_VERSION,
            kind: "manifest".into(),
            tool_version: TOOL_VERSION.into(),
            subcommand: subcommand.into(),
            config,
            seeds,
            inputs,
            outputs: self.written,
        };
        let path = self.root.join(MANIFEST_FILE);
        fs::write(&path, to_pretty_json(&manifest)).map_err(|e| CliError::io(&path, e))?;
        Ok((self.root, manifest))
    }
}

fn is_vacant(dir: &Path) -> Result<bool> {
    match fs::read_dir(dir) {
        Ok(mut entries) => Ok(entries.next().is_none()),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(true),
        Err(e) => Err(CliError::io(dir, e)),
    }
}

fn fresh_sibling(requested: &Path) -> Result<PathBuf> {
    let stamp = chrono::DateTime::<chrono::Utc>::from(SystemTime::now()).format("%Y%m%dT%H%M%SZ");
    let name = requested
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| "run".into());
    let base = requested.with_file_name(format!("{name}-{stamp}"));
    let mut candidate = base.clone();
    let mut n = 1;
    while !is_vacant(&candidate)? {
        candidate = PathBuf::from(format!("{}-{n}", base.display()));
        n += 1;
    }
    Ok(candidate)
}

pub fn to_pretty_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("serializable value");
    s.push('\n');
    s
}

pub fn parse_json<T: serde::de::DeserializeOwned>(text: &str, path: &Path) -> Result<T> {
    serde_json::from_str(text).map_err(|e| CliError::Parse {
        path: path.into(),
        message: e.to_string(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn digests_are_stable() {
        assert_eq!(
            sha256_hex(b"abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }

    #[test]
    fn occupied_directories_are_never_reused() {
        let tmp = tempfile::tempdir().unwrap();
        let target = tmp.path().join("run");
        let mut first = OutputDir::create(&target, false).unwrap();
        first.write("a.txt", b"one").unwrap();
        assert_eq!(first.root(), target);

        let second = OutputDir::create(&target, false).unwrap();
        assert_ne!(second.root(), target);
        assert!(second.root().file_name().unwrap().to_string_lossy().starts_with("run-"));
        fs::write(second.root().join("x"), b"").unwrap();
        let third = OutputDir::create(&target, false).unwrap();
        assert_ne!(third.root(), second.root());

        let again = OutputDir::create(&target, true).unwrap();
        assert_eq!(again.root(), target);
        assert_eq!(fs::read(target.join("a.txt")).unwrap(), b"one");
    }
}

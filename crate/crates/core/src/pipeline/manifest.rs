use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::schema;

pub const MANIFEST_SCHEMA_VERSION: u32 = 1;
pub const MANIFEST_DIR: &str = "manifests";

/// A file and the SHA-256 of its bytes. Paths are relative to the output
/// directory, except for the config which is kept as given.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArtifactRef {
    pub path: String,
    pub sha256: String,
}

impl ArtifactRef {
    pub fn of(path: impl AsRef<Path>, label: impl Into<String>) -> Result<Self> {
        Ok(Self {
            path: label.into(),
            sha256: sha256_file(path)?,
        })
    }
}

/// Record of one command invocation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunManifest {
    pub schema_version: u32,
    pub command: String,
    pub config: ArtifactRef,
    pub seed: u64,
    pub strict: bool,
    pub oracle: bool,
    pub inputs: Vec<ArtifactRef>,
    pub outputs: Vec<ArtifactRef>,
    pub tool_version: String,
    /// Seconds since the Unix epoch; `SOURCE_DATE_EPOCH` when set.
    pub started: u64,
    pub finished: u64,
}

impl RunManifest {
    pub fn path_for(out: &Path, command: &str) -> PathBuf {
        out.join(MANIFEST_DIR).join(format!("{command}.json"))
    }

    /// Path of this manifest relative to the output directory.
    pub fn relative(command: &str) -> String {
        format!("{MANIFEST_DIR}/{command}.json")
    }

    pub fn load(out: &Path, command: &str) -> Result<Self> {
        let path = Self::path_for(out, command);
        if !path.exists() {
            return Err(Error::Format(format!(
                "{} is missing; run `{command}` first",
                path.display()
            )));
        }
        let m: Self = schema::read(&path)?;
        schema::check_version(m.schema_version, MANIFEST_SCHEMA_VERSION)?;
        Ok(m)
    }

    pub fn save(&self, out: &Path) -> Result<()> {
        std::fs::create_dir_all(out.join(MANIFEST_DIR))?;
        schema::write(Self::path_for(out, &self.command), self)
    }

    /// Checks that `path` (relative to `out`) still has the bytes this run
    /// wrote, and that the run used `seed`.
    pub fn verify_output(&self, out: &Path, path: &str, seed: u64) -> Result<ArtifactRef> {
        if self.seed != seed {
            return Err(Error::Format(format!(
                "`{}` ran with seed {}, this run uses {seed}; re-run `{}`",
                self.command, self.seed, self.command
            )));
        }
        let recorded = self
            .outputs
            .iter()
            .find(|a| a.path == path)
            .ok_or_else(|| Error::Format(format!("`{}` did not produce {path}", self.command)))?;
        let full = out.join(path);
        if !full.exists() {
            return Err(Error::Format(format!(
                "{} is missing; re-run `{}`",
                full.display(),
                self.command
            )));
        }
        let actual = ArtifactRef::of(&full, path)?;
        if actual.sha256 != recorded.sha256 {
            return Err(Error::Format(format!(
                "{path} changed since `{}` wrote it (stale artifact); re-run `{}`",
                self.command, self.command
            )));
        }
        Ok(actual)
    }
}

pub fn sha256_file(path: impl AsRef<Path>) -> Result<String> {
    Ok(sha256_bytes(&std::fs::read(path)?))
}

pub fn sha256_bytes(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// `SOURCE_DATE_EPOCH` if set, else the wall clock.
pub fn timestamp() -> u64 {
    if let Some(t) = std::env::var("SOURCE_DATE_EPOCH")
        .ok()
        .and_then(|v| v.parse().ok())
    {
        return t;
    }
    std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sha256_of_known_bytes() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("abc");
        std::fs::write(&p, b"abc").unwrap();
        assert_eq!(
            sha256_file(&p).unwrap(),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }

    #[test]
    fn stale_outputs_are_detected() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path();
        std::fs::write(out.join("a.bin"), b"one").unwrap();
        let m = RunManifest {
            schema_version: MANIFEST_SCHEMA_VERSION,
            command: "train".into(),
            config: ArtifactRef {
                path: "c.json".into(),
                sha256: String::new(),
            },
            seed: 3,
            strict: false,
            oracle: false,
            inputs: vec![],
            outputs: vec![ArtifactRef::of(out.join("a.bin"), "a.bin").unwrap()],
            tool_version: "test".into(),
            started: 0,
            finished: 0,
        };
        m.save(out).unwrap();
        let m = RunManifest::load(out, "train").unwrap();
        assert!(m.verify_output(out, "a.bin", 3).is_ok());
        assert!(matches!(
            m.verify_output(out, "a.bin", 4),
            Err(Error::Format(_))
        ));
        std::fs::write(out.join("a.bin"), b"two").unwrap();
        assert!(matches!(
            m.verify_output(out, "a.bin", 3),
            Err(Error::Format(_))
        ));
        assert!(matches!(
            RunManifest::load(out, "prune"),
            Err(Error::Format(_))
        ));
    }
}

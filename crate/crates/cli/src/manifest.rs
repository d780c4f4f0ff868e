use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::{Map, Value};
use sha2::{Digest, Sha256};

use crate::failure::Failure;

pub const MANIFEST: &str = "manifest.json";

#[derive(Clone, Debug, Serialize)]
pub struct FileDigest {
    pub path: String,
    pub bytes: u64,
    pub sha256: String,
}

pub fn digest(path: &Path, shown: String) -> Result<FileDigest, Failure> {
    let bytes = std::fs::read(path).map_err(|e| Failure::Io(format!("{}: {e}", path.display())))?;
    Ok(FileDigest {
        path: shown,
        bytes: bytes.len() as u64,
        sha256: hex::encode(Sha256::digest(&bytes)),
    })
}

/// Record of one command invocation, written as `manifest.json` into its output directory.
#[derive(Clone, Debug, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub arguments: Vec<String>,
    pub tool_version: String,
    pub seed: Option<u64>,
    pub config: Map<String, Value>,
    pub inputs: Vec<FileDigest>,
    /// Paths relative to the output directory.
    pub outputs: Vec<FileDigest>,
    pub started: String,
    pub finished: String,
    pub exit_code: u8,
}

fn now() -> String {
    chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Millis, true)
}

/// Collects inputs and outputs of a running command.
pub struct Run {
    command: String,
    started: String,
    out: PathBuf,
    inputs: Vec<PathBuf>,
    outputs: Vec<PathBuf>,
}

impl Run {
    /// Creates `out` if needed.
    pub fn start(command: &str, out: &Path) -> Result<Self, Failure> {
        std::fs::create_dir_all(out).map_err(|e| Failure::Io(format!("cannot create {}: {e}", out.display())))?;
        Ok(Self {
            command: command.into(),
            started: now(),
            out: out.to_path_buf(),
            inputs: Vec::new(),
            outputs: Vec::new(),
        })
    }

    pub fn out(&self) -> &Path {
        &self.out
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }

    pub fn input(&mut self, path: impl Into<PathBuf>) {
        let p = path.into();
        if !self.inputs.contains(&p) {
            self.inputs.push(p);
        }
    }

    pub fn output(&mut self, path: impl Into<PathBuf>) {
        let p = path.into();
        if !self.outputs.contains(&p) {
            self.outputs.push(p);
        }
    }

    pub fn outputs(&mut self, paths: impl IntoIterator<Item = PathBuf>) {
        for p in paths {
            self.output(p);
        }
    }

    /// Writes the manifest and returns it.
    pub fn finish(self, seed: Option<u64>, config: Map<String, Value>, exit_code: u8) -> Result<RunManifest, Failure> {
        let inputs = self
            .inputs
            .iter()
            .map(|p| digest(p, p.display().to_string()))
            .collect::<Result<Vec<_>, _>>()?;
        let outputs = self
            .outputs
            .iter()
            .map(|p| {
                let shown = p.strip_prefix(&self.out).unwrap_or(p).display().to_string();
                digest(p, shown)
            })
            .collect::<Result<Vec<_>, _>>()?;
        let m = RunManifest {
            command: self.command,
            arguments: std::env::args().skip(1).collect(),
            tool_version: env!("CARGO_PKG_VERSION").into(),
            seed,
            config,
            inputs,
            outputs,
            started: self.started,
            finished: now(),
            exit_code,
        };
        std::fs::write(self.out.join(MANIFEST), serde_json::to_string_pretty(&m)?)?;
        Ok(m)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sha256_of_known_input() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("abc");
        std::fs::write(&p, "abc").unwrap();
        let d = digest(&p, "abc".into()).unwrap();
        assert_eq!(d.sha256, "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
        assert_eq!(d.bytes, 3);
    }

    #[test]
    fn manifest_lists_relative_outputs() {
        let dir = tempfile::tempdir().unwrap();
        let mut run = Run::start("test", &dir.path().join("o")).unwrap();
        let p = run.path("x.csv");
        std::fs::write(&p, "1\n").unwrap();
        run.output(p);
        let m = run.finish(Some(3), Map::new(), 0).unwrap();
        assert_eq!(m.outputs[0].path, "x.csv");
        assert!(dir.path().join("o").join(MANIFEST).exists());
    }
}

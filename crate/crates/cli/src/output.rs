//! Run directories and their manifests.
//!
//! Files are written into a hidden staging directory next to the target and
//! the whole directory is renamed into place once the manifest is complete,
//! so a run either leaves a full directory or nothing.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{SystemTime, UNIX_EPOCH};

use flowdj::io::{sha256_file, sha256_hex, write_atomic};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

pub const MANIFEST: &str = "manifest.json";
pub const OUT_ENV: &str = "FLOWDJ_OUT";
const DEFAULT_ROOT: &str = "runs";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileEntry {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunManifest {
    pub command: String,
    pub config: serde_json::Value,
    pub seeds: Vec<u64>,
    pub git_describe: String,
    pub started_unix: u64,
    pub finished_unix: u64,
    pub files: Vec<FileEntry>,
}

fn unix_now() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

fn git_describe() -> String {
    Command::new("git")
        .args(["describe", "--always", "--dirty"])
        .output()
        .ok()
        .filter(|o| o.status.success())
        .and_then(|o| String::from_utf8(o.stdout).ok())
        .map(|s| s.trim().to_string())
        .filter(|s| !s.is_empty())
        .unwrap_or_else(|| "untracked".to_string())
}

/// `explicit`, else `$FLOWDJ_OUT/<default_name>`, else `runs/<default_name>`.
pub fn resolve_out_dir(explicit: Option<&Path>, default_name: &str) -> PathBuf {
    if let Some(p) = explicit {
        return p.to_path_buf();
    }
    let root = std::env::var_os(OUT_ENV)
        .filter(|v| !v.is_empty())
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(DEFAULT_ROOT));
    root.join(default_name)
}

/// Short, stable tag derived from a command's inputs, used in default directory names.
pub fn input_tag(parts: &[&[u8]]) -> String {
    let mut joined = Vec::new();
    for p in parts {
        joined.extend_from_slice(p);
        joined.push(0);
    }
    sha256_hex(&joined)[..12].to_string()
}

fn io_err(path: &Path, e: std::io::Error) -> CliError {
    CliError::usage(format!("{}: {e}", path.display()))
}

pub struct RunDir {
    target: PathBuf,
    staging: PathBuf,
    command: String,
    started: u64,
    files: Vec<String>,
    finished: bool,
}

impl RunDir {
    pub fn create(target: PathBuf, command: &str) -> CliResult<Self> {
        let name = target
            .file_name()
            .ok_or_else(|| {
                CliError::usage(format!(
                    "{} is not a usable output directory",
                    target.display()
                ))
            })?
            .to_string_lossy()
            .into_owned();
        let parent = target
            .parent()
            .filter(|p| !p.as_os_str().is_empty())
            .unwrap_or(Path::new("."));
        fs::create_dir_all(parent).map_err(|e| io_err(parent, e))?;
        let staging = parent.join(format!(".{name}.partial-{}", std::process::id()));
        if staging.exists() {
            fs::remove_dir_all(&staging).map_err(|e| io_err(&staging, e))?;
        }
        fs::create_dir(&staging).map_err(|e| io_err(&staging, e))?;
        Ok(Self {
            target,
            staging,
            command: command.to_string(),
            started: unix_now(),
            files: Vec::new(),
            finished: false,
        })
    }

    pub fn write(&mut self, name: &str, bytes: &[u8]) -> CliResult<PathBuf> {
        let path = self.staging.join(name);
        write_atomic(&path, bytes)?;
        if !self.files.iter().any(|f| f == name) {
            self.files.push(name.to_string());
        }
        Ok(path)
    }

    /// Writes the manifest and moves the directory into place.
    pub fn finish(mut self, config: serde_json::Value, seeds: Vec<u64>) -> CliResult<PathBuf> {
        let mut files = Vec::with_capacity(self.files.len());
        for name in &self.files {
            files.push(FileEntry {
                path: name.clone(),
                sha256: sha256_file(&self.staging.join(name))?,
            });
        }
        let manifest = RunManifest {
            command: self.command.clone(),
            config,
            seeds,
            git_describe: git_describe(),
            started_unix: self.started,
            finished_unix: unix_now(),
            files,
        };
        let text = serde_json::to_string_pretty(&manifest).expect("manifest serialises") + "\n";
        write_atomic(&self.staging.join(MANIFEST), text.as_bytes())?;
        if self.target.exists() {
            fs::remove_dir_all(&self.target).map_err(|e| io_err(&self.target, e))?;
        }
        fs::rename(&self.staging, &self.target).map_err(|e| io_err(&self.target, e))?;
        self.finished = true;
        Ok(self.target.clone())
    }
}

impl Drop for RunDir {
    fn drop(&mut self) {
        if !self.finished {
            let _ = fs::remove_dir_all(&self.staging);
        }
    }
}

/// Loads `dir/manifest.json` and checks every listed file against its digest.
pub fn load_verified(dir: &Path) -> CliResult<RunManifest> {
    let path = dir.join(MANIFEST);
    let text = fs::read_to_string(&path).map_err(|e| io_err(&path, e))?;
    let manifest: RunManifest = serde_json::from_str(&text)
        .map_err(|e| CliError::integrity(format!("{}: {e}", path.display())))?;
    for f in &manifest.files {
        let p = dir.join(&f.path);
        if Path::new(&f.path).components().count() != 1 {
            return Err(CliError::integrity(format!(
                "{}: listed file {} escapes the run directory",
                path.display(),
                f.path
            )));
        }
        let actual = sha256_file(&p).map_err(|_| {
            CliError::integrity(format!(
                "{} is listed in the manifest but missing",
                p.display()
            ))
        })?;
        if actual != f.sha256 {
            return Err(CliError::integrity(format!(
                "{} does not match its manifest digest",
                p.display()
            )));
        }
    }
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn failed_run_leaves_nothing() {
        let tmp = tempfile::tempdir().unwrap();
        let target = tmp.path().join("run");
        {
            let mut run = RunDir::create(target.clone(), "test").unwrap();
            run.write("a.csv", b"x\n").unwrap();
        }
        assert!(!target.exists());
        assert_eq!(fs::read_dir(tmp.path()).unwrap().count(), 0);
    }

    #[test]
    fn finished_run_verifies_and_detects_tampering() {
        let tmp = tempfile::tempdir().unwrap();
        let target = tmp.path().join("run");
        let mut run = RunDir::create(target.clone(), "test").unwrap();
        run.write("a.csv", b"x\n").unwrap();
        run.finish(serde_json::json!({"k": 1}), vec![3]).unwrap();
        let m = load_verified(&target).unwrap();
        assert_eq!(m.files.len(), 1);
        assert_eq!(m.seeds, vec![3]);
        fs::write(target.join("a.csv"), b"y\n").unwrap();
        let err = load_verified(&target).unwrap_err();
        assert_eq!(err.code, crate::error::exit::INTEGRITY);
        assert!(err.message.contains("a.csv"));
    }

    #[test]
    fn input_tag_is_stable() {
        assert_eq!(input_tag(&[b"a", b"b"]), input_tag(&[b"a", b"b"]));
        assert_ne!(input_tag(&[b"ab"]), input_tag(&[b"a", b"b"]));
    }
}

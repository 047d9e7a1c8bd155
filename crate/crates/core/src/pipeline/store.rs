//! Content-addressed artifact store.
//!
//! Layout under the store root:
//!
//! ```text
//! objects/<sha256>     artifact bytes, named by their hash
//! <alias>              symlink into objects/, e.g. registry.json
//! manifest.json        one record per stage
//! votes.csv            curation votes (mutable, not content addressed)
//! .lock                held by the running process
//! ```

use std::collections::BTreeMap;
use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::{Component, Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageRecord {
    /// Input name → content hash.
    pub inputs: BTreeMap<String, String>,
    pub config_hash: String,
    /// Output alias → content hash.
    pub outputs: BTreeMap<String, String>,
    pub timestamp: String,
    pub tool_version: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Manifest {
    pub stages: BTreeMap<String, StageRecord>,
}

struct Lock(PathBuf);

impl Drop for Lock {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.0);
    }
}

fn pid_alive(pid: u32) -> bool {
    let proc_root = Path::new("/proc");
    !proc_root.is_dir() || proc_root.join(pid.to_string()).exists()
}

pub struct Store {
    root: PathBuf,
    _lock: Lock,
}

impl Store {
    /// Opens (creating if needed) the store and takes its lock. A lock left
    /// by a dead process is reclaimed.
    pub fn open(root: impl Into<PathBuf>) -> Result<Self> {
        let root = root.into();
        fs::create_dir_all(root.join("objects")).map_err(|e| Error::io(&root, e))?;
        let lock_path = root.join(".lock");
        for _ in 0..2 {
            match OpenOptions::new().write(true).create_new(true).open(&lock_path) {
                Ok(mut f) => {
                    let _ = write!(f, "{}", std::process::id());
                    return Ok(Self {
                        root,
                        _lock: Lock(lock_path),
                    });
                }
                Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => {
                    let holder = fs::read_to_string(&lock_path).ok().and_then(|s| s.trim().parse::<u32>().ok());
                    match holder {
                        Some(pid) if !pid_alive(pid) => {
                            log::warn!("removing stale lock of process {pid}");
                            let _ = fs::remove_file(&lock_path);
                        }
                        _ => return Err(Error::StoreLocked(root)),
                    }
                }
                Err(e) => return Err(Error::io(&lock_path, e)),
            }
        }
        Err(Error::StoreLocked(root))
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    fn check_alias(alias: &str) -> Result<()> {
        let p = Path::new(alias);
        let ok = !alias.is_empty() && p.components().all(|c| matches!(c, Component::Normal(_))) && !alias.starts_with("objects");
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!("invalid artifact alias `{alias}`")))
        }
    }

    pub fn object_path(&self, hash: &str) -> PathBuf {
        self.root.join("objects").join(hash)
    }

    pub fn alias_path(&self, alias: &str) -> PathBuf {
        self.root.join(alias)
    }

    /// Stores `bytes` and points `alias` at them. Returns the content hash.
    pub fn put(&self, alias: &str, bytes: &[u8]) -> Result<String> {
        Self::check_alias(alias)?;
        let hash = sha256_hex(bytes);
        let obj = self.object_path(&hash);
        if !obj.exists() {
            let tmp = self.root.join("objects").join(format!(".{hash}.tmp{}", std::process::id()));
            fs::write(&tmp, bytes).map_err(|e| Error::io(&tmp, e))?;
            fs::rename(&tmp, &obj).map_err(|e| Error::io(&obj, e))?;
        }
        let link = self.alias_path(alias);
        if let Some(parent) = link.parent() {
            fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
        let depth = Path::new(alias).components().count() - 1;
        let mut target = PathBuf::new();
        for _ in 0..depth {
            target.push("..");
        }
        target.push("objects");
        target.push(&hash);
        let tmp_link = link.with_extension(format!("lnk{}", std::process::id()));
        let _ = fs::remove_file(&tmp_link);
        symlink(&target, &tmp_link).map_err(|e| Error::io(&tmp_link, e))?;
        fs::rename(&tmp_link, &link).map_err(|e| Error::io(&link, e))?;
        Ok(hash)
    }

    /// Hash an alias points to, if it exists and its object is present.
    pub fn hash_of(&self, alias: &str) -> Option<String> {
        let target = fs::read_link(self.alias_path(alias)).ok()?;
        let hash = target.file_name()?.to_str()?.to_string();
        self.object_path(&hash).exists().then_some(hash)
    }

    pub fn exists(&self, alias: &str) -> bool {
        self.hash_of(alias).is_some()
    }

    pub fn get(&self, alias: &str) -> Result<Vec<u8>> {
        let hash = self.hash_of(alias).ok_or_else(|| Error::MissingArtifact {
            artifact: alias.to_string(),
            stage: String::new(),
        })?;
        let p = self.object_path(&hash);
        fs::read(&p).map_err(|e| Error::io(p, e))
    }

    /// Whether the object named `hash` exists and its bytes hash to it.
    pub fn verify(&self, hash: &str) -> bool {
        fs::read(self.object_path(hash)).is_ok_and(|b| sha256_hex(&b) == hash)
    }

    pub fn manifest(&self) -> Result<Manifest> {
        let p = self.root.join("manifest.json");
        match fs::read(&p) {
            Ok(b) => Ok(serde_json::from_slice(&b)?),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(Manifest::default()),
            Err(e) => Err(Error::io(p, e)),
        }
    }

    pub fn save_manifest(&self, m: &Manifest) -> Result<()> {
        let p = self.root.join("manifest.json");
        let tmp = self.root.join(".manifest.json.tmp");
        let mut bytes = serde_json::to_vec_pretty(m)?;
        bytes.push(b'\n');
        fs::write(&tmp, bytes).map_err(|e| Error::io(&tmp, e))?;
        fs::rename(&tmp, &p).map_err(|e| Error::io(p, e))
    }

    pub fn votes_path(&self) -> PathBuf {
        self.root.join("votes.csv")
    }
}

#[cfg(unix)]
fn symlink(target: &Path, link: &Path) -> std::io::Result<()> {
    std::os::unix::fs::symlink(target, link)
}

#[cfg(not(unix))]
fn symlink(target: &Path, link: &Path) -> std::io::Result<()> {
    // without symlinks the alias holds the object path as text
    let resolved = link.parent().unwrap_or(Path::new(".")).join(target);
    fs::write(link, resolved.to_string_lossy().as_bytes())
}

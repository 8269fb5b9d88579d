use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context as _, Result};
use serde::Serialize;

use crate::config::{config_hash, RunConfig};

/// Invalid combination of arguments detected after parsing; exits with 2.
#[derive(Debug)]
pub struct UsageError(pub String);

impl UsageError {
    pub fn new(msg: impl Into<String>) -> Self {
        Self(msg.into())
    }
}

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

/// Everything a subcommand needs besides its own arguments.
#[derive(Clone, Debug)]
pub struct RunContext {
    pub command: &'static str,
    pub seed: u64,
    pub config: RunConfig,
    pub out_dir: PathBuf,
    /// Hash of (command, arguments, seed, config).
    pub config_hash: String,
}

#[derive(Serialize)]
struct HashInput<'a, A: Serialize> {
    command: &'a str,
    args: &'a A,
    seed: u64,
    config: &'a RunConfig,
}

/// Result file layout: provenance header plus the command's result.
#[derive(Serialize)]
struct Envelope<'a, T: Serialize> {
    command: &'a str,
    seed: u64,
    config_hash: &'a str,
    result: &'a T,
}

impl RunContext {
    pub fn new<A: Serialize>(
        command: &'static str,
        args: &A,
        seed: u64,
        config: RunConfig,
        out_dir: PathBuf,
    ) -> Result<Self> {
        let config_hash = config_hash(&HashInput {
            command,
            args,
            seed,
            config: &config,
        })?;
        fs::create_dir_all(&out_dir).with_context(|| format!("creating {}", out_dir.display()))?;
        Ok(Self {
            command,
            seed,
            config,
            out_dir,
            config_hash,
        })
    }

    pub fn path(&self, name: impl AsRef<Path>) -> PathBuf {
        self.out_dir.join(name)
    }

    /// Write `<out-dir>/<name>` as a result envelope.
    pub fn write_result<T: Serialize>(&self, name: &str, result: &T) -> Result<PathBuf> {
        let env = Envelope {
            command: self.command,
            seed: self.seed,
            config_hash: &self.config_hash,
            result,
        };
        let path = self.path(name);
        write_json(&path, &env)?;
        log::info!("wrote {}", path.display());
        Ok(path)
    }

    pub fn write_text(&self, name: &str, text: &str) -> Result<PathBuf> {
        let path = self.path(name);
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        }
        fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?;
        Ok(path)
    }
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context as _, Result};
use serde::Serialize;

use crate::Global;

/// A command-line misuse that clap cannot catch (exit code 2).
#[derive(Debug)]
pub struct Usage(pub String);

impl fmt::Display for Usage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Usage {}

pub fn usage(msg: impl Into<String>) -> anyhow::Error {
    Usage(msg.into()).into()
}

pub struct Context {
    pub global: Global,
}

#[derive(Serialize)]
struct RunRecord<'a, T: Serialize> {
    command: &'a str,
    version: &'a str,
    global: &'a Global,
    args: &'a T,
}

impl Context {
    pub fn new(global: Global) -> Self {
        Context { global }
    }

    /// `path` under the output root when it is relative and a root is set.
    pub fn out_path(&self, path: &Path) -> PathBuf {
        match &self.global.out_root {
            Some(root) if path.is_relative() => root.join(path),
            _ => path.to_path_buf(),
        }
    }

    /// Creates the output directory `path` (resolved) and echoes the run
    /// configuration into it as `run.json`.
    pub fn out_dir<T: Serialize>(&self, path: &Path, command: &str, args: &T) -> Result<PathBuf> {
        let dir = self.out_path(path);
        fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
        self.echo(&dir.join("run.json"), command, args)?;
        Ok(dir)
    }

    /// Resolves an output file, creates its directory and echoes the run
    /// configuration next to it as `<file>.run.json`.
    pub fn out_file<T: Serialize>(&self, path: &Path, command: &str, args: &T) -> Result<PathBuf> {
        let file = self.out_path(path);
        let name = file
            .file_name()
            .ok_or_else(|| usage(format!("--out {} is not a file path", path.display())))?;
        let dir = file.parent().map(Path::to_path_buf).unwrap_or_default();
        if !dir.as_os_str().is_empty() {
            fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
        }
        let mut echo = name.to_os_string();
        echo.push(".run.json");
        self.echo(&dir.join(echo), command, args)?;
        Ok(file)
    }

    fn echo<T: Serialize>(&self, path: &Path, command: &str, args: &T) -> Result<()> {
        let record = RunRecord {
            command,
            version: env!("CARGO_PKG_VERSION"),
            global: &self.global,
            args,
        };
        write_json(path, &record)
    }
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    fs::write(path, text + "\n").with_context(|| format!("writing {}", path.display()))
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

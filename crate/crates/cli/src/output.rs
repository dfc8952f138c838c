use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Serialize;

/// Writes through a temporary file in the target directory, then renames.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    };
    fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    let mut tmp = tempfile::NamedTempFile::new_in(&dir).with_context(|| format!("writing {}", path.display()))?;
    tmp.write_all(bytes).with_context(|| format!("writing {}", path.display()))?;
    tmp.persist(path).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

/// Writes `text` to `out`, or to standard output when `out` is `None`.
pub fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(p) => write_atomic(p, text.as_bytes()),
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout.write_all(text.as_bytes())?;
            stdout.flush()?;
            Ok(())
        }
    }
}

#[derive(Serialize)]
struct Snapshot<'a, T: Serialize> {
    tool: &'static str,
    version: &'static str,
    command: &'a str,
    args: &'a T,
}

/// `report.json` gets `report.json.config.json`; a directory gets
/// `config.json` inside it.
pub fn snapshot_path(out: &Path) -> PathBuf {
    if out.is_dir() {
        out.join("config.json")
    } else {
        let mut name = out.file_name().map(|n| n.to_os_string()).unwrap_or_default();
        name.push(".config.json");
        out.with_file_name(name)
    }
}

pub fn write_snapshot<T: Serialize>(out: &Path, command: &str, args: &T) -> Result<()> {
    let snap = Snapshot {
        tool: env!("CARGO_PKG_NAME"),
        version: env!("CARGO_PKG_VERSION"),
        command,
        args,
    };
    let mut text = serde_json::to_string_pretty(&snap)?;
    text.push('\n');
    write_atomic(&snapshot_path(out), text.as_bytes())
}

use std::io::Write;
use std::path::Path;

use credit_core::{Error, Result};
use serde::Serialize;

/// Write through a temporary file in the target directory, then rename.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    std::fs::create_dir_all(dir)?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| Error::Io(e.error))?;
    Ok(())
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text =
        serde_json::to_string_pretty(value).map_err(|e| Error::Persistence(format!("cannot encode json: {e}")))?;
    text.push('\n');
    write_atomic(path, text.as_bytes())
}

/// Process exit status for an error.
pub fn exit_code(e: &Error) -> i32 {
    match e.class() {
        "io" | "config" | "schema" | "parse" | "persistence" => 2,
        "unsupported-explainer" | "not-implemented" => 3,
        _ => 1,
    }
}

/// One-line JSON diagnostic.
pub fn error_line(e: &Error) -> String {
    serde_json::json!({ "error": e.class(), "message": e.to_string() }).to_string()
}

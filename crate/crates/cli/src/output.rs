//! Report envelopes and atomic file output.

use std::io::Write;
use std::path::Path;
use std::time::SystemTime;

use serde::Serialize;
use serde_json::Value;

use crate::config::Format;
use crate::run::{Command, Outcome};

/// Run facts that vary between otherwise identical runs.
#[derive(Debug, Clone, Serialize)]
pub struct Metadata {
    pub timestamp: String,
    pub version: &'static str,
    pub workers: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub config: Option<String>,
}

impl Metadata {
    pub fn now(workers: usize, config: Option<&Path>) -> Self {
        Self {
            timestamp: humantime::format_rfc3339_seconds(SystemTime::now()).to_string(),
            version: env!("CARGO_PKG_VERSION"),
            workers,
            config: config.map(|p| p.display().to_string()),
        }
    }
}

/// JSON document: `command` and `body` are reproducible, `metadata` is not.
#[derive(Debug, Serialize)]
pub struct Envelope<'a> {
    pub command: &'static str,
    pub body: &'a Value,
    pub metadata: Metadata,
}

pub fn render(command: Command, outcome: &Outcome, format: Format, metadata: Metadata) -> String {
    match format {
        Format::Json => {
            let env = Envelope {
                command: command.name(),
                body: &outcome.body,
                metadata,
            };
            let mut s = serde_json::to_string_pretty(&env).expect("report serializes");
            s.push('\n');
            s
        }
        Format::Csv => outcome.csv.clone(),
        Format::Text => outcome.text.clone(),
    }
}

/// Writes through a temporary file in the target directory, then renames.
pub fn write_atomic(path: &Path, contents: &str) -> std::io::Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(contents.as_bytes())?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| e.error)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn atomic_write_replaces_contents() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("r.json");
        write_atomic(&p, "one").unwrap();
        write_atomic(&p, "two").unwrap();
        assert_eq!(std::fs::read_to_string(&p).unwrap(), "two");
        assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 1);
    }
}

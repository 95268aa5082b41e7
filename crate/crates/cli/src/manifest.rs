//! Artifact manifest: one tab-separated line per file under the output
//! directory with the producing command, the config hash and the file's
//! own SHA-256.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use crate::CliError;

pub const MANIFEST_FILE: &str = "manifest.tsv";
pub const MANIFEST_HEADER: &str = "path\tcommand\tconfig_hash\tsha256";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Entry {
    pub command: String,
    pub config_hash: String,
    pub sha256: String,
}

pub fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

pub fn file_sha256(path: &Path) -> Result<String, CliError> {
    let bytes = std::fs::read(path).map_err(|e| CliError::io(path, e))?;
    Ok(hex(&Sha256::digest(&bytes)))
}

/// Reads the manifest in `out`; a missing file is an empty manifest.
pub fn read(out: &Path) -> Result<BTreeMap<String, Entry>, CliError> {
    let path = out.join(MANIFEST_FILE);
    let text = match std::fs::read_to_string(&path) {
        Ok(t) => t,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(BTreeMap::new()),
        Err(e) => return Err(CliError::io(&path, e)),
    };
    let mut map = BTreeMap::new();
    for (n, line) in text.lines().enumerate().skip(1) {
        let f: Vec<&str> = line.split('\t').collect();
        if f.len() != 4 {
            return Err(CliError::Input(format!("{}: malformed line {}", path.display(), n + 1)));
        }
        map.insert(
            f[0].to_string(),
            Entry {
                command: f[1].into(),
                config_hash: f[2].into(),
                sha256: f[3].into(),
            },
        );
    }
    Ok(map)
}

/// Adds or replaces `artifacts` (paths under `out`) in the manifest.
pub fn record(
    out: &Path,
    command: &str,
    config_hash: &str,
    artifacts: &[PathBuf],
) -> Result<(), CliError> {
    let mut map = read(out)?;
    for a in artifacts {
        let rel = a.strip_prefix(out).unwrap_or(a);
        let key = rel
            .components()
            .map(|c| c.as_os_str().to_string_lossy())
            .collect::<Vec<_>>()
            .join("/");
        map.insert(
            key,
            Entry {
                command: command.into(),
                config_hash: config_hash.into(),
                sha256: file_sha256(a)?,
            },
        );
    }
    let mut text = String::from(MANIFEST_HEADER);
    text.push('\n');
    for (path, e) in &map {
        text.push_str(&format!("{path}\t{}\t{}\t{}\n", e.command, e.config_hash, e.sha256));
    }
    let path = out.join(MANIFEST_FILE);
    std::fs::write(&path, text).map_err(|e| CliError::io(&path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn entries_are_replaced_and_sorted() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path();
        std::fs::create_dir(out.join("sub")).unwrap();
        std::fs::write(out.join("b.csv"), "x").unwrap();
        std::fs::write(out.join("sub/a.bin"), "y").unwrap();
        record(out, "one", "h1", &[out.join("b.csv"), out.join("sub/a.bin")]).unwrap();
        std::fs::write(out.join("b.csv"), "z").unwrap();
        record(out, "two", "h2", &[out.join("b.csv")]).unwrap();
        let m = read(out).unwrap();
        assert_eq!(m.keys().collect::<Vec<_>>(), ["b.csv", "sub/a.bin"]);
        assert_eq!(m["b.csv"].command, "two");
        assert_eq!(m["sub/a.bin"].config_hash, "h1");
        // SHA-256 of "z".
        assert_eq!(
            m["b.csv"].sha256,
            "594e519ae499312b29433b7dd8a97ff068defcba9755b6d5d00e84c524d67b06"
        );
    }
}

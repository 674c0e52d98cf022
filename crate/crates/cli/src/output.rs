//! Result bundle: atomically written files plus the manifest that lists them.

use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::error::CliError;

/// Floats with 17 significant digits in scientific notation.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

#[derive(Serialize)]
struct FileRecord {
    path: String,
    bytes: usize,
    sha256: String,
}

pub struct Bundle {
    dir: PathBuf,
    files: Vec<FileRecord>,
    timings: Vec<(String, f64)>,
    started: Instant,
}

impl Bundle {
    pub fn create(dir: &Path) -> Result<Self, CliError> {
        std::fs::create_dir_all(dir)?;
        Ok(Bundle {
            dir: dir.to_path_buf(),
            files: Vec::new(),
            timings: Vec::new(),
            started: Instant::now(),
        })
    }

    /// Write `name` through a temporary file renamed into place.
    pub fn write(&mut self, name: &str, bytes: &[u8]) -> Result<(), CliError> {
        write_atomic(&self.dir, name, bytes)?;
        self.files.push(FileRecord {
            path: name.to_string(),
            bytes: bytes.len(),
            sha256: sha256_hex(bytes),
        });
        Ok(())
    }

    pub fn write_json(&mut self, name: &str, v: &Value) -> Result<(), CliError> {
        let mut s =
            serde_json::to_string_pretty(v).map_err(|e| CliError::Internal(e.to_string()))?;
        s.push('\n');
        self.write(name, s.as_bytes())
    }

    pub fn write_csv(&mut self, name: &str, csv: &Csv) -> Result<(), CliError> {
        self.write(name, csv.text.as_bytes())
    }

    /// Run `f` and record its wall time under `label`.
    pub fn timed<T>(&mut self, label: &str, f: impl FnOnce() -> T) -> T {
        let t = Instant::now();
        let out = f();
        self.timings
            .push((label.to_string(), t.elapsed().as_secs_f64()));
        out
    }

    pub fn finish(self, command: &str, context: Value) -> Result<(), CliError> {
        let timings: serde_json::Map<String, Value> = self
            .timings
            .into_iter()
            .map(|(k, v)| (k, json!(v)))
            .collect();
        let manifest = json!({
            "tool": "ultralap",
            "version": env!("CARGO_PKG_VERSION"),
            "library_version": ultralap::VERSION,
            "command": command,
            "context": context,
            "timings_seconds": timings,
            "total_seconds": self.started.elapsed().as_secs_f64(),
            "files": self.files,
        });
        let mut s = serde_json::to_string_pretty(&manifest)
            .map_err(|e| CliError::Internal(e.to_string()))?;
        s.push('\n');
        write_atomic(&self.dir, "manifest.json", s.as_bytes())
    }
}

fn write_atomic(dir: &Path, name: &str, bytes: &[u8]) -> Result<(), CliError> {
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(dir.join(name))
        .map_err(|e| CliError::Io(e.error))?;
    Ok(())
}

/// Minimal CSV builder; every field is numeric or a plain identifier.
pub struct Csv {
    text: String,
}

impl Csv {
    pub fn new(header: &[&str]) -> Self {
        let mut text = header.join(",");
        text.push('\n');
        Csv { text }
    }

    pub fn row(&mut self, fields: &[String]) {
        let _ = writeln!(self.text, "{}", fields.join(","));
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn floats_have_seventeen_digits() {
        assert_eq!(fmt_f64(0.1), "1.0000000000000001e-1");
        assert_eq!(fmt_f64(-9.0), "-9.0000000000000000e0");
        let x = 1.0f64 / 3.0;
        assert_eq!(fmt_f64(x).parse::<f64>().unwrap(), x);
    }

    #[test]
    fn files_land_atomically() {
        let dir = tempfile::tempdir().unwrap();
        let mut b = Bundle::create(dir.path()).unwrap();
        b.write("a.txt", b"hello").unwrap();
        b.finish("test", json!({})).unwrap();
        assert_eq!(std::fs::read(dir.path().join("a.txt")).unwrap(), b"hello");
        let m: Value =
            serde_json::from_slice(&std::fs::read(dir.path().join("manifest.json")).unwrap())
                .unwrap();
        assert_eq!(m["files"][0]["path"], "a.txt");
        assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 2);
    }
}

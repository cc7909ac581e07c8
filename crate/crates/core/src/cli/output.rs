//! Run directories, artifacts and the manifest.

use super::config::Config;
use crate::cutoffs::CutoffFamily;
use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::path::{Path, PathBuf};
use std::time::Instant;

pub const MANIFEST: &str = "manifest.toml";

/// Seventeen significant digits, enough to round-trip any f64.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Artifact {
    /// Path relative to the run directory.
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StageTiming {
    pub name: String,
    pub seconds: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool_version: String,
    pub subcommand: String,
    /// `ok`, `failed` or `invariant-failed`.
    pub status: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub schedule_digest: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cutoffs: Option<CutoffFamily>,
    #[serde(default)]
    pub stages: Vec<StageTiming>,
    #[serde(default)]
    pub artifacts: Vec<Artifact>,
    pub config: Config,
}

impl RunManifest {
    pub fn new(subcommand: &str, config: &Config) -> Self {
        RunManifest {
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            subcommand: subcommand.to_string(),
            status: "running".into(),
            error: None,
            schedule_digest: None,
            cutoffs: None,
            stages: vec![],
            artifacts: vec![],
            config: config.clone(),
        }
    }

    pub fn read(dir: &Path) -> Result<Self> {
        let p = dir.join(MANIFEST);
        let text = std::fs::read_to_string(&p).map_err(|e| Error::Config(format!("cannot read {}: {e}", p.display())))?;
        toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", p.display())))
    }

    pub fn artifact(&self, name: &str) -> Option<&Artifact> {
        self.artifacts.iter().find(|a| a.path == name)
    }
}

/// Writes artifacts under one directory and records them in a manifest.
pub struct RunDir {
    pub root: PathBuf,
    pub manifest: RunManifest,
}

impl RunDir {
    pub fn create(root: &Path, manifest: RunManifest) -> Result<Self> {
        std::fs::create_dir_all(root)?;
        Ok(RunDir { root: root.to_path_buf(), manifest })
    }

    pub fn write_bytes(&mut self, name: &str, bytes: &[u8]) -> Result<()> {
        std::fs::write(self.root.join(name), bytes)?;
        let art = Artifact { path: name.to_string(), sha256: sha256_hex(bytes), bytes: bytes.len() as u64 };
        match self.manifest.artifacts.iter_mut().find(|a| a.path == name) {
            Some(a) => *a = art,
            None => self.manifest.artifacts.push(art),
        }
        Ok(())
    }

    /// Writes a CSV with a header row. Cells are written verbatim, so floats
    /// must already be formatted with [`fmt_f64`].
    pub fn write_csv(&mut self, name: &str, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
        let bytes = csv_bytes(header, rows)?;
        self.write_bytes(name, &bytes)
    }

    /// Times a stage and records its wall-clock duration.
    pub fn stage<T>(&mut self, name: &str, f: impl FnOnce(&mut Self) -> Result<T>) -> Result<T> {
        let t = Instant::now();
        let out = f(self);
        self.manifest.stages.push(StageTiming { name: name.to_string(), seconds: t.elapsed().as_secs_f64() });
        out
    }

    /// Writes the manifest; always the last file of a run.
    pub fn finish(&mut self) -> Result<()> {
        let text = toml::to_string(&self.manifest).map_err(|e| Error::Numerical(format!("manifest: {e}")))?;
        std::fs::write(self.root.join(MANIFEST), text)?;
        Ok(())
    }
}

pub fn csv_bytes(header: &[&str], rows: &[Vec<String>]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let io = |e: csv::Error| Error::Io(std::io::Error::other(e.to_string()));
    w.write_record(header).map_err(io)?;
    for r in rows {
        if r.len() != header.len() {
            return Err(Error::Invariant(format!("row of {} cells under a {}-column header", r.len(), header.len())));
        }
        w.write_record(r).map_err(io)?;
    }
    w.into_inner().map_err(|e| Error::Io(std::io::Error::other(e.to_string())))
}

/// A CSV read back for reporting.
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn read(path: &Path) -> Result<Table> {
        let mut r = csv::Reader::from_path(path).map_err(|e| Error::Io(std::io::Error::other(e.to_string())))?;
        let header = r
            .headers()
            .map_err(|e| Error::Io(std::io::Error::other(e.to_string())))?
            .iter()
            .map(String::from)
            .collect();
        let mut rows = Vec::new();
        for rec in r.records() {
            let rec = rec.map_err(|e| Error::Io(std::io::Error::other(e.to_string())))?;
            rows.push(rec.iter().map(String::from).collect());
        }
        Ok(Table { header, rows })
    }

    pub fn col(&self, name: &str) -> Option<usize> {
        self.header.iter().position(|h| h == name)
    }

    /// A numeric column; unparsable cells become NaN.
    pub fn floats(&self, name: &str) -> Option<Vec<f64>> {
        let i = self.col(name)?;
        Some(self.rows.iter().map(|r| r[i].parse().unwrap_or(f64::NAN)).collect())
    }

    pub fn strings(&self, name: &str) -> Option<Vec<String>> {
        let i = self.col(name)?;
        Some(self.rows.iter().map(|r| r[i].clone()).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn floats_round_trip_through_seventeen_digits() {
        for x in [0.1, 1.0 / 3.0, 2.0f64.sqrt() * 1e-300, 6.02214076e23, -0.0] {
            assert_eq!(fmt_f64(x).parse::<f64>().unwrap().to_bits(), x.to_bits());
        }
    }

    #[test]
    fn csv_rejects_ragged_rows() {
        assert!(csv_bytes(&["a", "b"], &[vec!["1".into()]]).is_err());
        let b = csv_bytes(&["a"], &[vec!["1".into()]]).unwrap();
        assert_eq!(b, b"a\n1\n");
    }
}

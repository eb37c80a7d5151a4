//! CSV tables, JSON artifacts and the run manifest.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub const MANIFEST_NAME: &str = "manifest.json";

/// Shortest decimal that round-trips to the same `f64`.
pub fn fmt_f(v: f64) -> String {
    format!("{v}")
}

/// A header plus string rows, written as RFC 4180 CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new<S: AsRef<str>>(header: &[S]) -> Self {
        Table {
            header: header.iter().map(|s| s.as_ref().to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn to_csv(&self) -> Result<Vec<u8>> {
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::CRLF)
            .from_writer(Vec::new());
        w.write_record(&self.header)?;
        for r in &self.rows {
            w.write_record(r)?;
        }
        w.into_inner()
            .map_err(|e| Error::Io(std::io::Error::other(e.to_string())))
    }

    /// Parses CSV produced by [`Table::to_csv`].
    pub fn from_csv(bytes: &[u8]) -> Result<Self> {
        let mut r = csv::Reader::from_reader(bytes);
        let header = r.headers()?.iter().map(str::to_string).collect();
        let rows = r
            .records()
            .map(|rec| rec.map(|x| x.iter().map(str::to_string).collect()))
            .collect::<std::result::Result<_, _>>()?;
        Ok(Table { header, rows })
    }

    /// Column values parsed as `f64`.
    pub fn column_f64(&self, name: &str) -> Option<Vec<f64>> {
        let k = self.header.iter().position(|h| h == name)?;
        self.rows.iter().map(|r| r[k].parse().ok()).collect()
    }
}

/// A named output file held in memory until written.
#[derive(Debug, Clone, PartialEq)]
pub struct Artifact {
    pub name: String,
    pub bytes: Vec<u8>,
}

impl Artifact {
    pub fn csv(name: &str, table: &Table) -> Result<Self> {
        Ok(Artifact {
            name: name.to_string(),
            bytes: table.to_csv()?,
        })
    }

    pub fn json(name: &str, value: &Value) -> Result<Self> {
        let mut bytes = serde_json::to_vec_pretty(value)?;
        bytes.push(b'\n');
        Ok(Artifact {
            name: name.to_string(),
            bytes,
        })
    }
}

/// Git-style object hash: SHA-256 of `"blob <len>\0" + content`.
pub fn content_hash(bytes: &[u8]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(format!("blob {}\0", bytes.len()).as_bytes());
    hasher.update(bytes);
    hex::encode(hasher.finalize())
}

/// Writes every artifact and the manifest into `dir`, creating it if
/// needed. Nothing is written if any target exists and `force` is off.
pub fn write_run(
    dir: &Path,
    artifacts: &[Artifact],
    config_hash: &str,
    wall_time_seconds: f64,
    force: bool,
) -> Result<PathBuf> {
    std::fs::create_dir_all(dir)?;
    let manifest_path = dir.join(MANIFEST_NAME);
    if !force {
        for target in artifacts
            .iter()
            .map(|a| dir.join(&a.name))
            .chain(std::iter::once(manifest_path.clone()))
        {
            if target.exists() {
                return Err(Error::WouldOverwrite(target));
            }
        }
    }
    let mut files = BTreeMap::new();
    for a in artifacts {
        std::fs::write(dir.join(&a.name), &a.bytes)?;
        files.insert(
            a.name.clone(),
            json!({ "bytes": a.bytes.len(), "hash": content_hash(&a.bytes) }),
        );
    }
    let manifest = json!({
        "config_hash": config_hash,
        "files": files,
        "hash_scheme": "sha256 of \"blob <len>\\0\" followed by the file content",
        "version": env!("CARGO_PKG_VERSION"),
        "wall_time_seconds": wall_time_seconds,
    });
    let mut bytes = serde_json::to_vec_pretty(&manifest)?;
    bytes.push(b'\n');
    std::fs::write(&manifest_path, bytes)?;
    Ok(manifest_path)
}

/// Names of files whose content no longer matches the manifest in `dir`.
pub fn verify_manifest(dir: &Path) -> Result<Vec<String>> {
    let path = dir.join(MANIFEST_NAME);
    let text = std::fs::read_to_string(&path).map_err(|source| Error::MissingInput {
        path: path.clone(),
        source,
    })?;
    let manifest: Value = serde_json::from_str(&text)?;
    let files = manifest["files"]
        .as_object()
        .ok_or_else(|| Error::Config("manifest has no file table".into()))?;
    let mut bad = Vec::new();
    for (name, entry) in files {
        let ok = std::fs::read(dir.join(name))
            .map(|b| Some(content_hash(&b).as_str()) == entry["hash"].as_str())
            .unwrap_or(false);
        if !ok {
            bad.push(name.clone());
        }
    }
    Ok(bad)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shortest_round_trip_floats() {
        for &v in &[0.1, 1.0 / 3.0, 1e-300, 2f64.powi(-6), 123456.789] {
            assert_eq!(fmt_f(v).parse::<f64>().unwrap(), v);
        }
        assert_eq!(fmt_f(0.015625), "0.015625");
    }

    #[test]
    fn csv_round_trip() {
        let mut t = Table::new(&["a", "b"]);
        t.push(vec!["1".into(), "x,y".into()]);
        let bytes = t.to_csv().unwrap();
        assert!(bytes.starts_with(b"a,b\r\n"));
        assert_eq!(Table::from_csv(&bytes).unwrap(), t);
    }

    #[test]
    fn empty_blob_hash_matches_git_sha256() {
        // `git hash-object --object-format=sha256 /dev/null`
        assert_eq!(
            content_hash(b""),
            "473a0f4c3be8a93681a267e3b1e9a7dcda1185436fe141f7749120a303721813"
        );
    }

    #[test]
    fn manifest_lists_and_validates_files() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("run");
        let arts = vec![Artifact {
            name: "t.csv".into(),
            bytes: b"a\r\n1\r\n".to_vec(),
        }];
        write_run(&out, &arts, "abc", 0.5, false).unwrap();
        assert!(verify_manifest(&out).unwrap().is_empty());
        assert!(matches!(
            write_run(&out, &arts, "abc", 0.5, false),
            Err(Error::WouldOverwrite(_))
        ));
        write_run(&out, &arts, "abc", 0.5, true).unwrap();
        std::fs::write(out.join("t.csv"), b"tampered").unwrap();
        assert_eq!(verify_manifest(&out).unwrap(), vec!["t.csv".to_string()]);
        let m: Value = serde_json::from_str(&std::fs::read_to_string(out.join(MANIFEST_NAME)).unwrap()).unwrap();
        let keys: Vec<_> = m.as_object().unwrap().keys().cloned().collect();
        let mut sorted = keys.clone();
        sorted.sort();
        assert_eq!(keys, sorted);
    }
}

//! On-disk artifacts. JSON for structured data, CSV for time series, raw
//! little-endian f64 with a JSON sidecar for fields. `manifest.json` maps
//! every artifact to the fingerprint of the inputs it was built from.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const MANIFEST: &str = "manifest.json";

/// Every artifact the report can draw on.
pub const ARTIFACTS: [&str; 9] = [
    "cell.json",
    "modes/modes.json",
    "correctors/correctors.json",
    "coeffs.json",
    "kernel.csv",
    "resolvent.csv",
    "macro.csv",
    "fine.csv",
    "converge.csv",
];

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RawSidecar {
    pub shape: Vec<usize>,
    pub components: usize,
    pub dtype: String,
    pub order: String,
    pub fingerprint: String,
}

pub struct ArtifactStore {
    root: PathBuf,
    manifest: BTreeMap<String, String>,
}

impl ArtifactStore {
    pub fn open(root: impl Into<PathBuf>) -> Result<Self> {
        let root = root.into();
        fs::create_dir_all(&root).map_err(|e| Error::io(&root, e))?;
        let path = root.join(MANIFEST);
        let manifest = if path.exists() {
            let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
            serde_json::from_str(&text)
                .map_err(|e| Error::Config(format!("corrupt manifest {}: {e}", path.display())))?
        } else {
            BTreeMap::new()
        };
        Ok(ArtifactStore { root, manifest })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    pub fn exists(&self, name: &str) -> bool {
        self.path(name).exists()
    }

    /// Recorded input fingerprint of an artifact.
    pub fn fingerprint_of(&self, name: &str) -> Option<&str> {
        self.manifest.get(name).map(String::as_str)
    }

    /// Ok(false) when absent, Ok(true) when present and built from the same
    /// inputs, a fingerprint error when stale.
    pub fn is_fresh(&self, name: &str, expected: &str) -> Result<bool> {
        if !self.exists(name) {
            return Ok(false);
        }
        match self.manifest.get(name) {
            Some(found) if found == expected => Ok(true),
            found => Err(Error::Fingerprint {
                artifact: name.to_string(),
                expected: expected.to_string(),
                found: found.cloned().unwrap_or_else(|| "none".into()),
            }),
        }
    }

    fn record(&mut self, name: &str, fingerprint: &str) -> Result<()> {
        self.manifest.insert(name.to_string(), fingerprint.to_string());
        let text = serde_json::to_string_pretty(&self.manifest).expect("manifest serializes");
        self.write_bytes(MANIFEST, text.as_bytes())
    }

    fn write_bytes(&self, name: &str, bytes: &[u8]) -> Result<()> {
        let path = self.path(name);
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
        let tmp = path.with_extension("partial");
        fs::write(&tmp, bytes).map_err(|e| Error::io(&tmp, e))?;
        fs::rename(&tmp, &path).map_err(|e| Error::io(&path, e))
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T, fingerprint: &str) -> Result<()> {
        let mut text = serde_json::to_string_pretty(value)
            .map_err(|e| Error::Numerical(format!("cannot serialize {name}: {e}")))?;
        text.push('\n');
        self.write_bytes(name, text.as_bytes())?;
        self.record(name, fingerprint)
    }

    pub fn read_json<T: DeserializeOwned>(&self, name: &str) -> Result<T> {
        let path = self.path(name);
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Config(format!("cannot parse {}: {e}", path.display())))
    }

    /// RFC 4180 table with a header row.
    pub fn write_csv(&mut self, name: &str, header: &[&str], rows: &[Vec<String>], fingerprint: &str) -> Result<()> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let err = |e: csv::Error| Error::Numerical(format!("cannot write {name}: {e}"));
        w.write_record(header).map_err(err)?;
        for r in rows {
            w.write_record(r).map_err(err)?;
        }
        let bytes = w
            .into_inner()
            .map_err(|e| Error::Numerical(format!("cannot write {name}: {e}")))?;
        self.write_bytes(name, &bytes)?;
        self.record(name, fingerprint)
    }

    /// Header and rows of a CSV artifact.
    pub fn read_csv(&self, name: &str) -> Result<(Vec<String>, Vec<Vec<String>>)> {
        let path = self.path(name);
        let mut r = csv::Reader::from_path(&path).map_err(|e| match e.into_kind() {
            csv::ErrorKind::Io(io) => Error::io(&path, io),
            other => Error::Config(format!("cannot read {}: {other:?}", path.display())),
        })?;
        let bad = |e: csv::Error| Error::Config(format!("malformed {}: {e}", path.display()));
        let header = r.headers().map_err(bad)?.iter().map(String::from).collect();
        let mut rows = Vec::new();
        for rec in r.records() {
            rows.push(rec.map_err(bad)?.iter().map(String::from).collect());
        }
        Ok((header, rows))
    }

    /// Raw little-endian f64 array plus `<name>.json`.
    pub fn write_raw(
        &mut self,
        name: &str,
        values: &[f64],
        shape: &[usize],
        components: usize,
        fingerprint: &str,
    ) -> Result<()> {
        let mut bytes = Vec::with_capacity(8 * values.len());
        for v in values {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
        self.write_bytes(name, &bytes)?;
        let side = RawSidecar {
            shape: shape.to_vec(),
            components,
            dtype: "f64-le".into(),
            order: "x-major, z fastest".into(),
            fingerprint: fingerprint.to_string(),
        };
        self.write_json(&format!("{name}.json"), &side, fingerprint)?;
        self.record(name, fingerprint)
    }

    pub fn read_raw(&self, name: &str) -> Result<(Vec<f64>, RawSidecar)> {
        let side: RawSidecar = self.read_json(&format!("{name}.json"))?;
        let path = self.path(name);
        let bytes = fs::read(&path).map_err(|e| Error::io(&path, e))?;
        let expected = side.shape.iter().product::<usize>() * side.components;
        if bytes.len() != 8 * expected {
            return Err(Error::Config(format!(
                "{} holds {} bytes, sidecar announces {expected} values",
                path.display(),
                bytes.len()
            )));
        }
        let values = bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        Ok((values, side))
    }
}

/// Shortest round-trip decimal form used in every CSV.
pub fn num(x: f64) -> String {
    if x.is_finite() {
        format!("{x:?}")
    } else {
        String::new()
    }
}

//! Stage directories, manifests and hash-checked resumption.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use podgpr_core::{container, seeds};
use serde::{Deserialize, Serialize};

use crate::config::StudyConfig;
use crate::error::{CliError, Result};

pub const MANIFEST: &str = "manifest.json";
pub const TIMING: &str = "timing.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageManifest {
    pub stage: String,
    pub seed: u64,
    pub config_hash: String,
    /// Hash of everything the stage depends on: its settings and upstream stages.
    pub input_hash: String,
    /// Output file (relative to the stage directory) → SHA-256.
    pub outputs: BTreeMap<String, String>,
    pub details: serde_json::Value,
}

impl StageManifest {
    pub fn read(dir: &Path) -> Result<Self> {
        let path = dir.join(MANIFEST);
        if !path.exists() {
            return Err(CliError::MissingArtifact { path, stage: "the upstream stage" });
        }
        Ok(container::read_json(&path)?)
    }

    pub fn detail<T: serde::de::DeserializeOwned>(&self, key: &str) -> Result<T> {
        let v = self.details.get(key).ok_or_else(|| CliError::Config(format!("manifest of {} lacks `{key}`", self.stage)))?;
        Ok(serde_json::from_value(v.clone())?)
    }
}

pub fn hash_json<T: Serialize>(value: &T) -> String {
    seeds::sha256_hex(serde_json::to_string(value).expect("serializable").as_bytes())
}

fn file_hash(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).map_err(|source| CliError::Io { path: path.to_path_buf(), source })?;
    Ok(seeds::sha256_hex(&bytes))
}

/// An in-progress stage writing into its own directory.
pub struct Stage {
    pub dir: PathBuf,
    name: String,
    seed: u64,
    config_hash: String,
    input_hash: String,
    outputs: BTreeMap<String, String>,
}

impl Stage {
    /// `input_hash` is salted with the package version so an upgraded binary recomputes.
    pub fn new(cfg: &StudyConfig, name: &str, input_hash: String) -> Self {
        let input_hash = hash_json(&(env!("CARGO_PKG_VERSION"), input_hash));
        Self {
            dir: cfg.out_dir.join(name),
            name: name.to_string(),
            seed: cfg.seed,
            config_hash: cfg.hash(),
            input_hash,
            outputs: BTreeMap::new(),
        }
    }

    pub fn input_hash(&self) -> &str {
        &self.input_hash
    }

    /// The existing manifest when the stage already ran with identical
    /// inputs and its outputs are intact.
    pub fn up_to_date(&self) -> Option<StageManifest> {
        let manifest: StageManifest = container::read_json(&self.dir.join(MANIFEST)).ok()?;
        if manifest.input_hash != self.input_hash {
            return None;
        }
        let intact = manifest
            .outputs
            .iter()
            .all(|(file, hash)| file_hash(&self.dir.join(file)).is_ok_and(|h| &h == hash));
        intact.then_some(manifest)
    }

    /// Clears a stale directory before a fresh run.
    pub fn begin(&self) -> Result<()> {
        if self.dir.exists() {
            std::fs::remove_dir_all(&self.dir).map_err(|source| CliError::Io { path: self.dir.clone(), source })?;
        }
        std::fs::create_dir_all(&self.dir).map_err(|source| CliError::Io { path: self.dir.clone(), source })
    }

    pub fn path(&self, file: &str) -> PathBuf {
        self.dir.join(file)
    }

    /// Records a file written by other means.
    pub fn record(&mut self, file: &str) -> Result<()> {
        let hash = file_hash(&self.path(file))?;
        self.outputs.insert(file.to_string(), hash);
        Ok(())
    }

    /// Records every file below `sub`, recursively.
    pub fn record_dir(&mut self, sub: &str) -> Result<()> {
        let mut stack = vec![PathBuf::from(sub)];
        while let Some(rel) = stack.pop() {
            let abs = self.path(rel.to_str().expect("utf-8 path"));
            let entries = std::fs::read_dir(&abs).map_err(|source| CliError::Io { path: abs.clone(), source })?;
            for entry in entries {
                let entry = entry.map_err(|source| CliError::Io { path: abs.clone(), source })?;
                let child = rel.join(entry.file_name());
                if entry.path().is_dir() {
                    stack.push(child);
                } else {
                    self.record(child.to_str().expect("utf-8 path"))?;
                }
            }
        }
        Ok(())
    }

    /// CSV with a `# seed=…, config_hash=…` comment line above the header.
    pub fn write_csv<I, R>(&mut self, file: &str, header: &[&str], rows: I) -> Result<()>
    where
        I: IntoIterator<Item = R>,
        R: IntoIterator<Item = String>,
    {
        let path = self.path(file);
        let io_err = |source| CliError::Io { path: path.clone(), source };
        let mut f = std::fs::File::create(&path).map_err(io_err)?;
        writeln!(f, "# seed={}, config_hash={}", self.seed, self.config_hash).map_err(io_err)?;
        let csv_err = |source| CliError::Csv { path: path.clone(), source };
        let mut w = csv::Writer::from_writer(f);
        w.write_record(header).map_err(csv_err)?;
        for row in rows {
            let row: Vec<String> = row.into_iter().collect();
            w.write_record(&row).map_err(csv_err)?;
        }
        w.flush().map_err(io_err)?;
        drop(w);
        self.record(file)
    }

    /// JSON object with `seed` and `config_hash` fields added.
    pub fn write_json<T: Serialize>(&mut self, file: &str, value: &T) -> Result<()> {
        let mut v = serde_json::to_value(value)?;
        if let serde_json::Value::Object(map) = &mut v {
            map.insert("seed".into(), self.seed.into());
            map.insert("config_hash".into(), self.config_hash.clone().into());
        }
        container::write_json(&self.path(file), &v)?;
        self.record(file)
    }

    pub fn write_matrix(&mut self, file: &str, m: &DMatrix<f64>, dt: f64) -> Result<()> {
        container::write_matrix(&self.path(file), m, dt)?;
        self.record(file)
    }

    /// Wall-clock timings live outside the manifest so reruns stay byte-identical.
    pub fn write_timing<T: Serialize>(&self, value: &T) -> Result<()> {
        Ok(container::write_json(&self.path(TIMING), value)?)
    }

    pub fn finish(self, details: serde_json::Value) -> Result<StageManifest> {
        let manifest = StageManifest {
            stage: self.name,
            seed: self.seed,
            config_hash: self.config_hash,
            input_hash: self.input_hash,
            outputs: self.outputs,
            details,
        };
        container::write_json(&self.dir.join(MANIFEST), &manifest)?;
        Ok(manifest)
    }
}

/// Reads a CSV written by [`Stage::write_csv`] into header and string rows.
pub fn read_csv(path: &Path) -> Result<(Vec<String>, Vec<Vec<String>>)> {
    let csv_err = |source| CliError::Csv { path: path.to_path_buf(), source };
    let mut r = csv::ReaderBuilder::new().comment(Some(b'#')).from_path(path).map_err(csv_err)?;
    let header = r.headers().map_err(csv_err)?.iter().map(str::to_string).collect();
    let rows = r
        .records()
        .map(|rec| rec.map(|r| r.iter().map(str::to_string).collect()))
        .collect::<std::result::Result<_, _>>()
        .map_err(csv_err)?;
    Ok((header, rows))
}

pub fn fmt(v: f64) -> String {
    format!("{v:e}")
}

pub fn fmt_opt(v: Option<f64>) -> String {
    v.map(fmt).unwrap_or_default()
}

//! Output directory, tabular writers and the metadata sidecar.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;
use serde_json::{json, Map, Value};

use crate::config::ExperimentConfig;
use crate::error::CliError;

/// Normalization conventions in force for a run.
#[derive(Clone, Debug, Default, Serialize)]
pub struct Conventions {
    /// `κ` in `μ_eq = κ Δφ_eq`, when the run uses it.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub kappa: Option<f64>,
    pub ensemble: String,
    pub frame: &'static str,
}

impl Conventions {
    /// Compact form used in CSV columns.
    pub fn tag(&self) -> String {
        match self.kappa {
            Some(k) => format!("kappa={k:e};ensemble={};frame={}", self.ensemble, self.frame),
            None => format!("ensemble={};frame={}", self.ensemble, self.frame),
        }
    }
}

pub struct RunOutput {
    dir: PathBuf,
    subcommand: String,
    started: Instant,
    files: Vec<String>,
    pub conventions: Conventions,
}

impl RunOutput {
    pub fn create(dir: &Path, subcommand: &str, ensemble: &str) -> Result<Self, CliError> {
        std::fs::create_dir_all(dir).map_err(|e| CliError::Output(format!("{}: {e}", dir.display())))?;
        Ok(Self {
            dir: dir.to_path_buf(),
            subcommand: subcommand.to_string(),
            started: Instant::now(),
            files: Vec::new(),
            conventions: Conventions {
                kappa: None,
                ensemble: ensemble.to_string(),
                frame: "affine frame of O(1); |s|^2 = |f|^2 exp(-N phi)",
            },
        })
    }

    /// Register `name` as an output and return its path.
    pub fn path(&mut self, name: &str) -> PathBuf {
        self.files.push(name.to_string());
        self.dir.join(name)
    }

    /// One JSON object per line; every record carries the conventions.
    pub fn write_jsonl<T: Serialize>(&mut self, name: &str, rows: &[T]) -> Result<(), CliError> {
        let path = self.path(name);
        let mut w = BufWriter::new(File::create(&path)?);
        let conv = serde_json::to_value(&self.conventions)?;
        for row in rows {
            let mut v = serde_json::to_value(row)?;
            if let Value::Object(m) = &mut v {
                m.insert("conventions".into(), conv.clone());
            }
            serde_json::to_writer(&mut w, &v)?;
            w.write_all(b"\n")?;
        }
        w.flush()?;
        Ok(())
    }

    /// Flat CSV with a trailing `conventions` column.
    pub fn write_csv<T: Serialize>(&mut self, name: &str, rows: &[T]) -> Result<(), CliError> {
        let path = self.path(name);
        let mut w = csv::Writer::from_path(&path)?;
        let tag = self.conventions.tag();
        let mut header_done = false;
        for row in rows {
            let v = serde_json::to_value(row)?;
            let Value::Object(m) = v else {
                return Err(CliError::Output("CSV rows must be records".into()));
            };
            let flat: Vec<(String, String)> =
                m.into_iter().filter(|(_, v)| !v.is_array() && !v.is_object()).map(|(k, v)| (k, cell(&v))).collect();
            if !header_done {
                let mut header: Vec<&str> = flat.iter().map(|(k, _)| k.as_str()).collect();
                header.push("conventions");
                w.write_record(&header)?;
                header_done = true;
            }
            let mut record: Vec<String> = flat.into_iter().map(|(_, v)| v).collect();
            record.push(tag.clone());
            w.write_record(&record)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<(), CliError> {
        let path = self.path(name);
        let mut v = serde_json::to_value(value)?;
        if let Value::Object(m) = &mut v {
            m.insert("conventions".into(), serde_json::to_value(&self.conventions)?);
        }
        std::fs::write(&path, serde_json::to_string_pretty(&v)? + "\n")?;
        Ok(())
    }

    /// Write the resolved config and the metadata sidecar.
    pub fn finish(mut self, config: &ExperimentConfig, streams: &str) -> Result<Vec<String>, CliError> {
        let cfg_name = format!("{}.config.toml", self.subcommand);
        std::fs::write(self.dir.join(&cfg_name), config.to_toml())?;
        self.files.push(cfg_name);
        let mut meta = Map::new();
        meta.insert("artifact".into(), json!(env!("CARGO_PKG_NAME")));
        meta.insert("artifact_version".into(), json!(env!("CARGO_PKG_VERSION")));
        meta.insert("subcommand".into(), json!(self.subcommand));
        meta.insert("resolved_config".into(), serde_json::to_value(config)?);
        meta.insert(
            "seed_provenance".into(),
            json!({
                "generator": qelab::ensembles::GENERATOR,
                "master_seed": config.ensemble.seed,
                "streams": streams,
            }),
        );
        meta.insert("conventions".into(), serde_json::to_value(&self.conventions)?);
        meta.insert("outputs".into(), json!(self.files));
        meta.insert("wall_time_s".into(), json!(self.started.elapsed().as_secs_f64()));
        let meta_name = format!("{}.meta.json", self.subcommand);
        std::fs::write(self.dir.join(&meta_name), serde_json::to_string_pretty(&Value::Object(meta))? + "\n")?;
        self.files.push(meta_name);
        Ok(self.files)
    }
}

fn cell(v: &Value) -> String {
    match v {
        Value::String(s) => s.clone(),
        Value::Null => String::new(),
        other => other.to_string(),
    }
}

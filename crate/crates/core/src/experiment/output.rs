//! Result directories: CSV tables with a header row plus one JSON sidecar
//! recording provenance (config hash, seed, code version, deviations).

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::experiment::config::ExperimentConfig;

/// Sidecar written as `<pipeline>.json` next to the tables.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sidecar {
    pub pipeline: String,
    pub config_hash: String,
    pub master_seed: u64,
    pub version: String,
    /// Parameter substitutions relative to the reference runs.
    pub deviations: Vec<String>,
    pub config: serde_json::Value,
    pub files: Vec<String>,
    pub summary: serde_json::Value,
}

/// What a finished pipeline produced.
#[derive(Debug, Clone, PartialEq)]
pub struct PipelineReport {
    pub pipeline: String,
    pub dir: PathBuf,
    pub files: Vec<String>,
    pub sidecar: PathBuf,
    pub summary: serde_json::Value,
}

/// Collects the files of one run in a directory.
#[derive(Debug)]
pub struct RunOutput {
    dir: PathBuf,
    files: Vec<String>,
    deviations: Vec<String>,
}

/// Fixed-width scientific formatting used by every table.
pub fn fmt(x: f64) -> String {
    format!("{x:.10e}")
}

impl RunOutput {
    pub fn create(dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir)?;
        Ok(Self {
            dir: dir.to_path_buf(),
            files: Vec::new(),
            deviations: Vec::new(),
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    /// Opens `name` for writing and registers it.
    pub fn file(&mut self, name: &str) -> Result<BufWriter<File>> {
        let f = File::create(self.dir.join(name))?;
        if !self.files.iter().any(|n| n == name) {
            self.files.push(name.to_string());
        }
        Ok(BufWriter::new(f))
    }

    /// Writes a numeric table.
    pub fn table<I>(&mut self, name: &str, header: &[&str], rows: I) -> Result<()>
    where
        I: IntoIterator<Item = Vec<f64>>,
    {
        let mut wr = csv::Writer::from_writer(self.file(name)?);
        wr.write_record(header)?;
        for row in rows {
            wr.write_record(row.iter().map(|&x| fmt(x)))?;
        }
        wr.flush()?;
        Ok(())
    }

    /// Writes a table whose cells are already formatted.
    pub fn text_table<I>(&mut self, name: &str, header: &[&str], rows: I) -> Result<()>
    where
        I: IntoIterator<Item = Vec<String>>,
    {
        let mut wr = csv::Writer::from_writer(self.file(name)?);
        wr.write_record(header)?;
        for row in rows {
            wr.write_record(row)?;
        }
        wr.flush()?;
        Ok(())
    }

    pub fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        let mut f = self.file(name)?;
        serde_json::to_writer_pretty(&mut f, value)?;
        f.write_all(b"\n")?;
        f.flush()?;
        Ok(())
    }

    pub fn deviation(&mut self, text: impl Into<String>) {
        self.deviations.push(text.into());
    }

    /// Writes the sidecar and returns the report.
    pub fn finish(self, pipeline: &str, config: &ExperimentConfig, summary: serde_json::Value) -> Result<PipelineReport> {
        let sidecar = Sidecar {
            pipeline: pipeline.to_string(),
            config_hash: config.hash(),
            master_seed: config.ensemble.master_seed,
            version: env!("CARGO_PKG_VERSION").to_string(),
            deviations: self.deviations,
            config: serde_json::to_value(config)?,
            files: self.files.clone(),
            summary: summary.clone(),
        };
        let path = self.dir.join(format!("{pipeline}.json"));
        let mut f = BufWriter::new(File::create(&path)?);
        serde_json::to_writer_pretty(&mut f, &sidecar)?;
        f.write_all(b"\n")?;
        f.flush()?;
        Ok(PipelineReport {
            pipeline: pipeline.to_string(),
            dir: self.dir,
            files: self.files,
            sidecar: path,
            summary,
        })
    }
}

//! Artifact writing: provenance headers, JSON envelopes, file creation.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::PathBuf;

use serde::Serialize;

use crate::config::{Format, RunConfig};
use crate::Failure;

pub const VERSION: &str = env!("BWALK_VERSION");

/// Writes one run's artifacts into its output directory.
pub struct Sink<'a> {
    pub config: &'a RunConfig,
    written: Vec<PathBuf>,
}

#[derive(Serialize)]
struct Meta<'a> {
    command: &'static str,
    version: &'static str,
    seed: Option<u64>,
    config: String,
    kind: &'static str,
    #[serde(rename = "N")]
    n: usize,
    #[serde(rename = "M")]
    m: usize,
    d_n: usize,
    schema: &'a str,
}

#[derive(Serialize)]
struct Envelope<'a, T: Serialize> {
    meta: Meta<'a>,
    data: &'a T,
}

impl<'a> Sink<'a> {
    pub fn new(config: &'a RunConfig) -> Result<Self, Failure> {
        fs::create_dir_all(&config.out)?;
        Ok(Self { config, written: Vec::new() })
    }

    /// Provenance fields appended to every CSV schema line.
    pub fn header(&self) -> String {
        let c = self.config;
        let seed = c.seed.map_or("none".to_string(), |s| s.to_string());
        format!("kind={} n={} m={} version={VERSION} seed={seed} config={}", c.kind.short_name(), c.kind.n(), c.kind.cols(), c.hash())
    }

    /// Creates `name` and hands a buffered writer to `body`, if CSV output is enabled.
    pub fn csv(&mut self, name: &str, body: impl FnOnce(&mut BufWriter<File>, &str) -> bernoulli_walk::error::Result<()>) -> Result<(), Failure> {
        if !self.config.wants(Format::Csv) {
            return Ok(());
        }
        let path = self.config.out.join(name);
        let mut w = BufWriter::new(File::create(&path)?);
        let header = self.header();
        body(&mut w, &header)?;
        w.flush()?;
        self.written.push(path);
        Ok(())
    }

    /// Writes `data` under a `meta` block to `name`, if JSON output is enabled.
    pub fn json<T: Serialize>(&mut self, name: &str, schema: &str, data: &T) -> Result<(), Failure> {
        if !self.config.wants(Format::Json) {
            return Ok(());
        }
        let c = self.config;
        let envelope = Envelope {
            meta: Meta {
                command: c.command.name(),
                version: VERSION,
                seed: c.seed,
                config: c.hash(),
                kind: c.kind.short_name(),
                n: c.kind.n(),
                m: c.kind.cols(),
                d_n: c.kind.dimension(),
                schema,
            },
            data,
        };
        let path = c.out.join(name);
        let mut w = BufWriter::new(File::create(&path)?);
        serde_json::to_writer_pretty(&mut w, &envelope).map_err(|e| Failure::Io(e.to_string()))?;
        writeln!(w)?;
        w.flush()?;
        self.written.push(path);
        Ok(())
    }

    pub fn written(&self) -> &[PathBuf] {
        &self.written
    }
}

// SPDX-License-Identifier: Apache-2.0

//! Report tables and where they are written.

use std::io::Write;
use std::path::Path;

use anyhow::{Context, Result};
use serde::Serialize;

use crate::config::Format;

/// A report row with a fixed column list.
pub trait Row: Serialize {
    const HEADER: &'static [&'static str];
}

/// One table rendered in both formats.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub name: String,
    pub csv: String,
    pub json: serde_json::Value,
}

impl Table {
    pub fn new<R: Row>(name: impl Into<String>, rows: &[R]) -> Result<Self> {
        let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
        w.write_record(R::HEADER)?;
        for r in rows {
            w.serialize(r)?;
        }
        let csv = String::from_utf8(w.into_inner().context("flushing csv")?).expect("csv output is utf-8");
        Ok(Table { name: name.into(), csv, json: serde_json::to_value(rows)? })
    }

    pub fn render(&self, format: Format) -> String {
        match format {
            Format::Csv => self.csv.clone(),
            Format::Json => {
                let mut s = serde_json::to_string_pretty(&self.json).expect("rows serialize");
                s.push('\n');
                s
            }
        }
    }

    fn file_name(&self, format: Format) -> String {
        match format {
            Format::Csv => format!("{}.csv", self.name),
            Format::Json => format!("{}.json", self.name),
        }
    }
}

/// What a command produced.
#[derive(Debug, Clone, PartialEq)]
pub struct Report {
    pub command: &'static str,
    /// The first table is the main one.
    pub tables: Vec<Table>,
    pub summary: serde_json::Value,
    /// Extra files as (name, contents).
    pub artifacts: Vec<(String, String)>,
    /// Set when an audit check failed; `--strict` turns it into exit status 2.
    pub failed: bool,
}

impl Report {
    /// With an output directory every table, the summary and the artifacts
    /// become files; otherwise the main table goes to `stdout`.
    pub fn write(&self, out: Option<&Path>, format: Format, stdout: &mut dyn Write) -> Result<()> {
        let Some(dir) = out else {
            if let Some(t) = self.tables.first() {
                stdout.write_all(t.render(format).as_bytes())?;
            }
            return Ok(());
        };
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        let mut files: Vec<(String, String)> =
            self.tables.iter().map(|t| (t.file_name(format), t.render(format))).collect();
        let mut summary = serde_json::to_string_pretty(&self.summary)?;
        summary.push('\n');
        files.push((format!("{}_summary.json", self.command), summary));
        files.extend(self.artifacts.iter().cloned());
        for (name, body) in files {
            let path = dir.join(&name);
            std::fs::write(&path, body).with_context(|| format!("writing {}", path.display()))?;
        }
        Ok(())
    }
}

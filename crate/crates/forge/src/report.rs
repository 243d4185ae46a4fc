//! JSON reports and CSV dumps.

use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::commands::{run, Command, Status, Table};
use crate::config::Config;
use crate::error::{ForgeError, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Software {
    pub name: String,
    pub version: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Timings {
    pub total_seconds: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub software: Software,
    pub command: Command,
    pub config: Config,
    pub status: Status,
    pub payload: Value,
    pub timings: Timings,
}

pub struct Finished {
    pub report: Report,
    pub tables: Vec<Table>,
}

pub fn execute(command: Command, cfg: &Config) -> Result<Finished> {
    let start = Instant::now();
    let out = run(command, cfg)?;
    let report = Report {
        software: Software { name: env!("CARGO_PKG_NAME").into(), version: env!("CARGO_PKG_VERSION").into() },
        command,
        config: out.effective,
        status: out.status,
        payload: out.payload,
        timings: Timings { total_seconds: start.elapsed().as_secs_f64() },
    };
    Ok(Finished { report, tables: out.tables })
}

fn io(path: &Path, e: std::io::Error) -> ForgeError {
    ForgeError::Io(path.display().to_string(), e)
}

pub fn write_table(dir: &Path, table: &Table) -> Result<()> {
    let path = dir.join(&table.name);
    let mut w = csv::Writer::from_path(&path)?;
    w.write_record(&table.header)?;
    for row in &table.rows {
        w.write_record(row.iter().map(|v| format!("{v:e}")))?;
    }
    w.flush().map_err(|e| io(&path, e))
}

/// Writes `<command>.json` and the CSV tables into `dir`.
pub fn write(dir: &Path, finished: &Finished) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| io(dir, e))?;
    let path = dir.join(format!("{}.json", finished.report.command.name()));
    let text = serde_json::to_string_pretty(&finished.report)?;
    std::fs::write(&path, text + "\n").map_err(|e| io(&path, e))?;
    for t in &finished.tables {
        write_table(dir, t)?;
    }
    Ok(())
}

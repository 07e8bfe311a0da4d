use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::Context;
use serde::{Deserialize, Serialize};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Everything needed to rerun a job. Timing fields live in the result.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct JobConfig {
    pub subcommand: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n_leaves: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub face: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_degree: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub move_degree: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub table_degree: Option<usize>,
    pub budgets: Budgets,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub inputs: Vec<PathBuf>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub outputs: Vec<PathBuf>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub extra: Vec<(String, String)>,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct Budgets {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub nodes: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub shards: Option<usize>,
    pub mem_budget_gb: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub wall_clock_s: Option<f64>,
    pub threads: usize,
}

#[derive(Serialize)]
pub struct Report<'a, T: Serialize> {
    pub version: &'a str,
    pub config: &'a JobConfig,
    pub result: T,
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> anyhow::Result<()> {
    let f = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    let mut w = BufWriter::new(f);
    serde_json::to_writer_pretty(&mut w, value)?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> anyhow::Result<T> {
    let f = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    serde_json::from_reader(std::io::BufReader::new(f))
        .with_context(|| format!("parsing {}", path.display()))
}

/// Writes the report to `out` if given, or prints it when `json` is set.
pub fn emit<T: Serialize>(
    config: &JobConfig,
    result: T,
    out: Option<&Path>,
    json: bool,
) -> anyhow::Result<()> {
    let report = Report {
        version: VERSION,
        config,
        result,
    };
    if let Some(p) = out {
        write_json(p, &report)?;
    }
    if json {
        println!("{}", serde_json::to_string_pretty(&report)?);
    }
    Ok(())
}

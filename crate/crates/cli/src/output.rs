//! Output files and the run manifest.

use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::Context;
use serde::{Deserialize, Serialize};

use gossipsim_core::config::SimConfig;
use gossipsim_core::engine::{sha256_hex, suite_hash};
use gossipsim_core::workload::Workload;

pub const MANIFEST: &str = "manifest.json";
pub const TRACE: &str = "trace.csv";
pub const CONFIG: &str = "config.json";
pub const PARTITION: &str = "partition.json";
pub const SUMMARY: &str = "summary.csv";

/// Writes `bytes` to `path` via a temporary file in the same directory.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> anyhow::Result<()> {
    let dir = path
        .parent()
        .filter(|p| !p.as_os_str().is_empty())
        .unwrap_or(Path::new("."));
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir)
        .with_context(|| format!("temp file in {}", dir.display()))?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path)
        .with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteSummary {
    pub hash: String,
    pub dimension: usize,
    #[serde(rename = "L")]
    pub smoothness: f64,
    pub mu: f64,
    pub gamma: f64,
    pub grad_bound_sq: f64,
}

impl SuiteSummary {
    pub fn of(w: &Workload) -> Self {
        Self {
            hash: suite_hash(&w.suite),
            dimension: w.suite.dimension,
            smoothness: w.suite.smoothness,
            mu: w.suite.mu,
            gamma: w.suite.gamma,
            grad_bound_sq: w.suite.grad_bound_sq,
        }
    }
}

/// One simulation inside a manifest. Paths are relative to the output directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub seed: u64,
    /// Sweep value, absent for single runs.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub value: Option<String>,
    pub config: String,
    pub trace: String,
    pub partition: String,
    pub trace_sha256: String,
    pub suite: SuiteSummary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    /// `run` or `sweep`.
    pub command: String,
    pub config: SimConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub axis: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub values: Vec<String>,
    pub seeds: Vec<u64>,
    pub runs: Vec<RunRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub summary: Option<String>,
}

impl RunManifest {
    pub fn new(command: &str, config: SimConfig, seeds: Vec<u64>) -> Self {
        Self {
            tool: env!("CARGO_PKG_NAME").to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            command: command.to_string(),
            config,
            axis: None,
            values: Vec::new(),
            seeds,
            runs: Vec::new(),
            summary: None,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("manifest serializes") + "\n"
    }
}

#[derive(Serialize)]
struct ShardInfo {
    node: usize,
    samples: usize,
    label_counts: Vec<usize>,
}

pub fn partition_json(w: &Workload) -> String {
    let shards: Vec<ShardInfo> = w
        .shards
        .iter()
        .enumerate()
        .map(|(node, shard)| ShardInfo {
            node,
            samples: shard.len(),
            label_counts: gossipsim_core::dataparts::histogram(
                &w.dataset.labels,
                w.dataset.classes,
                shard.iter().copied(),
            ),
        })
        .collect();
    serde_json::to_string_pretty(&shards).expect("shards serialize") + "\n"
}

/// Writes config, trace and partition of one run under `dir` and returns its
/// manifest record with paths relative to `root`.
pub fn write_run(
    root: &Path,
    dir: &Path,
    cfg: &SimConfig,
    w: &Workload,
    trace_csv: &str,
    value: Option<String>,
) -> anyhow::Result<RunRecord> {
    let rel = |name: &str| -> String {
        let p: PathBuf = dir.join(name);
        p.strip_prefix(root)
            .unwrap_or(&p)
            .to_string_lossy()
            .replace('\\', "/")
    };
    write_atomic(&dir.join(CONFIG), (cfg.to_json() + "\n").as_bytes())?;
    write_atomic(&dir.join(PARTITION), partition_json(w).as_bytes())?;
    write_atomic(&dir.join(TRACE), trace_csv.as_bytes())?;
    Ok(RunRecord {
        seed: cfg.seed,
        value,
        config: rel(CONFIG),
        trace: rel(TRACE),
        partition: rel(PARTITION),
        trace_sha256: sha256_hex(trace_csv.as_bytes()),
        suite: SuiteSummary::of(w),
    })
}

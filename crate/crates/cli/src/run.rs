use std::path::Path;

use gossipsim_core::config::SimConfig;
use gossipsim_core::engine::{build_suite, run_simulation};
use gossipsim_core::trace::trace_to_string;

use crate::output::{write_atomic, write_run, RunManifest, RunRecord, MANIFEST};
use crate::{load_config, CmdResult};

/// Builds and simulates one config, then writes its files under `dir`.
pub fn simulate_into(
    root: &Path,
    dir: &Path,
    cfg: &SimConfig,
    value: Option<String>,
) -> CmdResult<RunRecord> {
    let w = build_suite(cfg)?;
    let rows = run_simulation(cfg, &w.suite)?;
    Ok(write_run(
        root,
        dir,
        cfg,
        &w,
        &trace_to_string(&rows),
        value,
    )?)
}

pub fn cmd_run(config: &Path, out: &Path, seed: Option<u64>) -> CmdResult {
    let mut cfg = load_config(config)?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    let record = simulate_into(out, out, &cfg, None)?;
    let mut manifest = RunManifest::new("run", cfg.clone(), vec![cfg.seed]);
    manifest.runs.push(record);
    write_atomic(&out.join(MANIFEST), manifest.to_json().as_bytes())?;
    Ok(())
}

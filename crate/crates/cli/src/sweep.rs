use std::path::{Path, PathBuf};

use clap::ValueEnum;
use rayon::prelude::*;

use gossipsim_core::config::SimConfig;
use gossipsim_core::dataparts::PartitionConfig;
use gossipsim_core::format::g12;
use gossipsim_core::trace::TraceRow;

use crate::output::{write_atomic, RunManifest, MANIFEST, SUMMARY};
use crate::run::simulate_into;
use crate::{load_config, CmdResult, Failure};

pub const JOBS_ENV: &str = "GOSSIPSIM_JOBS";

pub const SUMMARY_HEADER: &str =
    "axis,value,runs,final_dist_wtilde_sq_mean,final_dist_wtilde_sq_std,final_mean_loss_mean,final_mean_loss_std";

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
#[value(rename_all = "snake_case")]
pub enum Axis {
    DropoutP,
    Lambda,
    Alpha,
    Deemphasis,
    Eta,
}

impl Axis {
    pub fn name(self) -> &'static str {
        match self {
            Axis::DropoutP => "dropout_p",
            Axis::Lambda => "lambda",
            Axis::Alpha => "alpha",
            Axis::Deemphasis => "deemphasis",
            Axis::Eta => "eta",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        Self::value_variants()
            .iter()
            .copied()
            .find(|a| a.name() == s)
    }

    /// `base` with this axis set to `v`. An infinite alpha means i.i.d.
    pub fn apply(self, base: &SimConfig, v: f64) -> SimConfig {
        let mut cfg = base.clone();
        match self {
            Axis::DropoutP => cfg.churn.dropout_p = v,
            Axis::Lambda => cfg.churn.lambda = v,
            Axis::Alpha => cfg.partition = PartitionConfig::from_alpha(v),
            Axis::Deemphasis => cfg.deemphasis = v,
            Axis::Eta => cfg.eta = v,
        }
        cfg
    }
}

fn parse_list<T: std::str::FromStr>(flag: &str, text: &str) -> CmdResult<Vec<T>>
where
    T::Err: std::fmt::Display,
{
    let items: Vec<&str> = text
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .collect();
    if items.is_empty() {
        return Err(Failure::Usage(format!(
            "--{flag} must list at least one value"
        )));
    }
    items
        .iter()
        .map(|s| {
            s.parse::<T>()
                .map_err(|e| Failure::Usage(format!("--{flag}: bad value {s:?}: {e}")))
        })
        .collect()
}

pub fn resolve_jobs(flag: Option<usize>) -> CmdResult<usize> {
    let jobs = match std::env::var(JOBS_ENV) {
        Ok(v) => v
            .trim()
            .parse::<usize>()
            .map_err(|e| Failure::Usage(format!("{JOBS_ENV}: {e}")))?,
        Err(_) => {
            flag.unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
        }
    };
    if jobs == 0 {
        return Err(Failure::Usage("--jobs must be >= 1".into()));
    }
    Ok(jobs)
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    let std = if xs.len() > 1 {
        (xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        f64::NAN
    };
    (m, std)
}

/// One summary line per value: mean and sample std of final-round
/// `dist_wtilde_sq` and `mean_loss` across seeds.
pub fn summary_csv(axis: &str, groups: &[(String, Vec<TraceRow>)]) -> String {
    let mut out = String::from(SUMMARY_HEADER);
    out.push('\n');
    for (value, finals) in groups {
        let (dm, ds) = mean_std(&finals.iter().map(|r| r.dist_wtilde_sq).collect::<Vec<_>>());
        let (lm, ls) = mean_std(&finals.iter().map(|r| r.mean_loss).collect::<Vec<_>>());
        out.push_str(&format!(
            "{axis},{value},{},{},{},{},{}\n",
            finals.len(),
            g12(dm),
            g12(ds),
            g12(lm),
            g12(ls)
        ));
    }
    out
}

pub fn run_dir(out: &Path, axis: &str, value: &str, seed: u64) -> PathBuf {
    out.join("runs")
        .join(format!("{axis}={value}"))
        .join(format!("seed={seed}"))
}

pub fn cmd_sweep(
    config: &Path,
    axis: Axis,
    values: &str,
    seeds: &str,
    out: &Path,
    jobs: Option<usize>,
) -> CmdResult {
    let base = load_config(config)?;
    let values: Vec<f64> = parse_list("values", values)?;
    let seeds: Vec<u64> = parse_list("seeds", seeds)?;
    let jobs = resolve_jobs(jobs)?;

    let mut plan = Vec::new();
    for &v in &values {
        for &s in &seeds {
            let mut cfg = axis.apply(&base, v);
            cfg.seed = s;
            cfg.validate()
                .map_err(|e| Failure::Usage(format!("{} = {v}: {e}", axis.name())))?;
            plan.push((g12(v), cfg));
        }
    }

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| Failure::Runtime(e.to_string()))?;
    let records = pool.install(|| {
        plan.par_iter()
            .map(|(label, cfg)| {
                let dir = run_dir(out, axis.name(), label, cfg.seed);
                simulate_into(out, &dir, cfg, Some(label.clone()))
            })
            .collect::<CmdResult<Vec<_>>>()
    })?;

    let mut groups: Vec<(String, Vec<TraceRow>)> = Vec::new();
    for ((label, _), rec) in plan.iter().zip(&records) {
        let rows = crate::check::read_trace(&out.join(&rec.trace))?;
        let last = *rows
            .last()
            .ok_or_else(|| Failure::Runtime(format!("{}: empty trace", rec.trace)))?;
        match groups.last_mut() {
            Some((l, finals)) if l == label => finals.push(last),
            _ => groups.push((label.clone(), vec![last])),
        }
    }
    write_atomic(
        &out.join(SUMMARY),
        summary_csv(axis.name(), &groups).as_bytes(),
    )?;

    let mut manifest = RunManifest::new("sweep", base, seeds);
    manifest.axis = Some(axis.name().to_string());
    manifest.values = values.iter().map(|&v| g12(v)).collect();
    manifest.runs = records;
    manifest.summary = Some(SUMMARY.to_string());
    write_atomic(&out.join(MANIFEST), manifest.to_json().as_bytes())?;
    Ok(())
}

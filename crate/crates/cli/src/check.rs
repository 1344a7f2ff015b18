//! Re-validates run or sweep outputs without trusting how they were made.

use std::collections::BTreeMap;
use std::path::Path;

use gossipsim_core::config::SimConfig;
use gossipsim_core::diagnostics::{gap_monotonicity_check, theorem1_envelope, GapParams};
use gossipsim_core::engine::{build_suite, run_simulation, sha256_hex};
use gossipsim_core::trace::{parse_trace, trace_to_string, TraceRow};

use crate::output::{RunManifest, RunRecord, MANIFEST, SUMMARY};
use crate::sweep::summary_csv;
use crate::{CmdResult, Failure};

const EXACT_TOL: f64 = 1e-12;

fn read(path: &Path) -> CmdResult<String> {
    std::fs::read_to_string(path)
        .map_err(|e| Failure::Usage(format!("missing output {}: {e}", path.display())))
}

pub fn read_trace(path: &Path) -> CmdResult<Vec<TraceRow>> {
    parse_trace(&read(path)?).map_err(|e| Failure::Runtime(format!("{}: {e}", path.display())))
}

/// Outcome of one named invariant across every run it was applied to.
#[derive(Debug, Clone, PartialEq)]
pub struct CheckLine {
    pub name: &'static str,
    pub pass: bool,
    pub detail: String,
}

#[derive(Debug, Default)]
struct Report {
    lines: BTreeMap<&'static str, CheckLine>,
    order: Vec<&'static str>,
    info: Vec<String>,
}

impl Report {
    fn record(&mut self, name: &'static str, pass: bool, detail: impl FnOnce() -> String) {
        if !self.lines.contains_key(name) {
            self.order.push(name);
            self.lines.insert(
                name,
                CheckLine {
                    name,
                    pass: true,
                    detail: String::new(),
                },
            );
        }
        let line = self.lines.get_mut(name).expect("inserted");
        if !pass && line.pass {
            line.pass = false;
            line.detail = detail();
        }
    }

    fn into_lines(mut self) -> (Vec<CheckLine>, Vec<String>) {
        let lines = self
            .order
            .iter()
            .map(|n| self.lines.remove(n).expect("present"))
            .collect();
        (lines, self.info)
    }
}

fn nonneg(v: f64) -> bool {
    v >= 0.0
}

fn check_rows(rep: &mut Report, rec: &RunRecord, cfg: &SimConfig, rows: &[TraceRow]) {
    let run = &rec.trace;
    rep.record(
        "row_count",
        rows.len() == cfg.rounds && rows.iter().enumerate().all(|(k, r)| r.t == k),
        || format!("{run}: {} rows for {} rounds", rows.len(), cfg.rounds),
    );
    for r in rows {
        let t = r.t;
        rep.record("node_count", r.n1 + r.n2 == cfg.n, || {
            format!("{run}: t={t} n1+n2={} != {}", r.n1 + r.n2, cfg.n)
        });
        let fields = [
            ("dist_wbar_sq", r.dist_wbar_sq),
            ("dist_wtilde_sq", r.dist_wtilde_sq),
            ("div_lhs", r.div_lhs),
            ("div_rhs_main", r.div_rhs_main),
            ("div_rhs_appendix", r.div_rhs_appendix),
            ("thm1_bound", r.thm1_bound),
            ("gap_term", r.gap_term),
        ];
        for (field, v) in fields {
            rep.record("distances_nonnegative", nonneg(v), || {
                format!("{run}: t={t} {field}={v}")
            });
        }
        let eta = cfg.eta_at(t);
        if eta <= 1.0 {
            rep.record(
                "divergence_constant_order",
                r.div_rhs_appendix >= r.div_rhs_main,
                || {
                    format!(
                        "{run}: t={t} appendix {} < main {}",
                        r.div_rhs_appendix, r.div_rhs_main
                    )
                },
            );
        }
        if r.n2 == 0 {
            rep.record(
                "divergence_zero_when_all_accessible",
                r.div_lhs <= EXACT_TOL,
                || format!("{run}: t={t} div_lhs={}", r.div_lhs),
            );
            rep.record("gap_zero_when_all_accessible", r.gap_term == 0.0, || {
                format!("{run}: t={t} gap_term={}", r.gap_term)
            });
        }
        let alpha = 2.0 * (1.0 - rec.suite.mu * eta);
        rep.record(
            "alpha_matches_constants",
            (r.alpha_t - alpha).abs() <= 1e-9 * alpha.abs().max(1.0),
            || format!("{run}: t={t} alpha_t={} expected {alpha}", r.alpha_t),
        );
        rep.record(
            "gamma_matches_suite",
            r.gamma >= 0.0 && (r.gamma - rec.suite.gamma).abs() <= 1e-9 * rec.suite.gamma.max(1.0),
            || format!("{run}: t={t} gamma={} suite {}", r.gamma, rec.suite.gamma),
        );
    }
}

fn check_analytic(rep: &mut Report, rec: &RunRecord, cfg: &SimConfig) {
    let synthetic = |alpha: f64, beta: f64| -> Vec<TraceRow> {
        (0..30)
            .map(|t| TraceRow {
                t,
                alpha_t: alpha,
                beta_t: beta,
                ..Default::default()
            })
            .collect()
    };
    let ok = theorem1_envelope(&synthetic(0.5, 0.0), 1.0)
        .map(|e| e.iter().all(|p| p.bound == 0.5f64.powi(p.t as i32)))
        .unwrap_or(false)
        && theorem1_envelope(&synthetic(1.0, 0.5), 1.0)
            .map(|e| e.iter().all(|p| p.bound == 1.0 + 0.5 * p.t as f64))
            .unwrap_or(false);
    rep.record("bound_evaluator_identities", ok, || {
        "envelope identity mismatch".into()
    });
    if cfg.eta < 1.0 && rec.suite.grad_bound_sq > 0.0 {
        let p = GapParams {
            n: cfg.n,
            eta: cfg.eta,
            mu: rec.suite.mu,
            grad_bound_sq: rec.suite.grad_bound_sq,
            lambda: cfg.churn.lambda,
        };
        rep.record(
            "gap_monotonicity",
            gap_monotonicity_check(&p, &[0.2, 0.3, 0.5, 1.0]),
            || format!("{}: gap term not monotone", rec.trace),
        );
    }
}

/// Evaluates every invariant on the outputs under `out`. Returns the report
/// lines and informational notes; `Err` only when outputs are missing.
pub fn evaluate(out: &Path) -> CmdResult<(Vec<CheckLine>, Vec<String>)> {
    let manifest_path = out.join(MANIFEST);
    let manifest: RunManifest = serde_json::from_str(&read(&manifest_path)?)
        .map_err(|e| Failure::Usage(format!("{}: {e}", manifest_path.display())))?;
    if manifest.runs.is_empty() {
        return Err(Failure::Usage(format!(
            "{}: no runs recorded",
            manifest_path.display()
        )));
    }
    let mut rep = Report::default();
    let mut finals: Vec<(String, Vec<TraceRow>)> = Vec::new();
    let (mut held, mut total) = (0usize, 0usize);

    for rec in &manifest.runs {
        let cfg_text = read(&out.join(&rec.config))?;
        let cfg = SimConfig::from_json(&cfg_text)
            .map_err(|e| Failure::Usage(format!("{}: {e}", rec.config)))?;
        let text = read(&out.join(&rec.trace))?;
        rep.record(
            "trace_hash",
            sha256_hex(text.as_bytes()) == rec.trace_sha256,
            || format!("{}: content differs from manifest", rec.trace),
        );
        let rows = match parse_trace(&text) {
            Ok(rows) => {
                rep.record("trace_format", true, String::new);
                rows
            }
            Err(e) => {
                rep.record("trace_format", false, || format!("{}: {e}", rec.trace));
                continue;
            }
        };
        check_rows(&mut rep, rec, &cfg, &rows);
        check_analytic(&mut rep, rec, &cfg);
        for r in &rows {
            total += 1;
            held += usize::from(r.div_lhs <= r.div_rhs_appendix);
        }
        if let Some(last) = rows.last() {
            let label = rec.value.clone().unwrap_or_default();
            match finals.last_mut() {
                Some((l, v)) if *l == label => v.push(*last),
                _ => finals.push((label, vec![*last])),
            }
        }
    }

    if let Some(summary) = &manifest.summary {
        let written = read(&out.join(summary))?;
        let axis = manifest.axis.clone().unwrap_or_default();
        rep.record(
            "summary_recompute",
            summary_csv(&axis, &finals) == written,
            || format!("{SUMMARY} does not match the per-run traces"),
        );
    }

    // The first run must reproduce byte for byte from its recorded config.
    let first = &manifest.runs[0];
    let cfg = SimConfig::from_json(&read(&out.join(&first.config))?)
        .map_err(|e| Failure::Usage(format!("{}: {e}", first.config)))?;
    let rerun = build_suite(&cfg)
        .and_then(|w| run_simulation(&cfg, &w.suite).map(|rows| trace_to_string(&rows)));
    match rerun {
        Ok(text) => rep.record(
            "reproducible",
            sha256_hex(text.as_bytes()) == first.trace_sha256,
            || format!("{}: re-run differs from recorded hash", first.trace),
        ),
        Err(e) => rep.record("reproducible", false, || format!("{}: {e}", first.config)),
    }

    if total > 0 {
        rep.info.push(format!(
            "div_lhs <= div_rhs_appendix held in {held}/{total} rounds ({:.1}%)",
            100.0 * held as f64 / total as f64
        ));
    }
    Ok(rep.into_lines())
}

pub fn render(lines: &[CheckLine], info: &[String]) -> String {
    let mut s = String::new();
    for l in lines {
        let status = if l.pass { "PASS" } else { "FAIL" };
        if l.detail.is_empty() {
            s.push_str(&format!("{status} {}\n", l.name));
        } else {
            s.push_str(&format!("{status} {}: {}\n", l.name, l.detail));
        }
    }
    for i in info {
        s.push_str(&format!("info {i}\n"));
    }
    s
}

pub fn cmd_check(out: &Path) -> CmdResult {
    let (lines, info) = evaluate(out)?;
    print!("{}", render(&lines, &info));
    let failed: Vec<&str> = lines.iter().filter(|l| !l.pass).map(|l| l.name).collect();
    if failed.is_empty() {
        Ok(())
    } else {
        Err(Failure::Runtime(format!(
            "failed invariants: {}",
            failed.join(", ")
        )))
    }
}

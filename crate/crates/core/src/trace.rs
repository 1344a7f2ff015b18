//! Per-round trace rows and their CSV form.

use std::io::{self, Write};

use crate::format::g12;

pub const TRACE_HEADER: &str = "t,n1,n2,dist_wbar_sq,dist_wtilde_sq,div_lhs,div_rhs_main,div_rhs_appendix,alpha_t,beta_t,thm1_bound,gap_term,gamma,mean_loss,mean_acc";

/// Diagnostics of round `t`: accessibility of the round, distances measured
/// on the models it produced.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct TraceRow {
    pub t: usize,
    pub n1: usize,
    pub n2: usize,
    pub dist_wbar_sq: f64,
    pub dist_wtilde_sq: f64,
    pub div_lhs: f64,
    pub div_rhs_main: f64,
    pub div_rhs_appendix: f64,
    pub alpha_t: f64,
    pub beta_t: f64,
    pub thm1_bound: f64,
    pub gap_term: f64,
    pub gamma: f64,
    pub mean_loss: f64,
    /// NaN for regression problems.
    pub mean_acc: f64,
}

impl TraceRow {
    fn floats(&self) -> [f64; 12] {
        [
            self.dist_wbar_sq,
            self.dist_wtilde_sq,
            self.div_lhs,
            self.div_rhs_main,
            self.div_rhs_appendix,
            self.alpha_t,
            self.beta_t,
            self.thm1_bound,
            self.gap_term,
            self.gamma,
            self.mean_loss,
            self.mean_acc,
        ]
    }

    pub fn to_csv_line(&self) -> String {
        let mut s = format!("{},{},{}", self.t, self.n1, self.n2);
        for v in self.floats() {
            s.push(',');
            s.push_str(&g12(v));
        }
        s
    }
}

pub fn write_trace<W: Write>(rows: &[TraceRow], mut out: W) -> io::Result<()> {
    writeln!(out, "{TRACE_HEADER}")?;
    for r in rows {
        writeln!(out, "{}", r.to_csv_line())?;
    }
    Ok(())
}

pub fn trace_to_string(rows: &[TraceRow]) -> String {
    let mut buf = Vec::new();
    write_trace(rows, &mut buf).expect("writing to memory");
    String::from_utf8(buf).expect("ascii")
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum TraceParseError {
    #[error("trace header mismatch")]
    Header,
    #[error("line {line}: {reason}")]
    Row { line: usize, reason: String },
}

pub fn parse_trace(text: &str) -> Result<Vec<TraceRow>, TraceParseError> {
    let mut lines = text.lines();
    if lines.next() != Some(TRACE_HEADER) {
        return Err(TraceParseError::Header);
    }
    let mut rows = Vec::new();
    for (k, line) in lines.enumerate() {
        if line.is_empty() {
            continue;
        }
        let lineno = k + 2;
        let err = |reason: String| TraceParseError::Row {
            line: lineno,
            reason,
        };
        let cells: Vec<&str> = line.split(',').collect();
        if cells.len() != 15 {
            return Err(err(format!("expected 15 fields, got {}", cells.len())));
        }
        let int = |i: usize| {
            cells[i]
                .parse::<usize>()
                .map_err(|e| err(format!("field {i}: {e}")))
        };
        let mut f = [0.0; 12];
        for (j, slot) in f.iter_mut().enumerate() {
            *slot = cells[3 + j]
                .parse::<f64>()
                .map_err(|e| err(format!("field {}: {e}", 3 + j)))?;
        }
        rows.push(TraceRow {
            t: int(0)?,
            n1: int(1)?,
            n2: int(2)?,
            dist_wbar_sq: f[0],
            dist_wtilde_sq: f[1],
            div_lhs: f[2],
            div_rhs_main: f[3],
            div_rhs_appendix: f[4],
            alpha_t: f[5],
            beta_t: f[6],
            thm1_bound: f[7],
            gap_term: f[8],
            gamma: f[9],
            mean_loss: f[10],
            mean_acc: f[11],
        });
    }
    Ok(rows)
}

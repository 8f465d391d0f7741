//! Result rows and their CSV form.

use std::fs::File;
use std::io::{self, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

pub const HEADER: [&str; 8] = ["strategy", "r", "epsilon_hat", "ci_lo", "ci_hi", "n_outer", "n_inner", "wall_time_ms"];

/// Significant digits written for floating-point columns.
pub const SIG_DIGITS: usize = 9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub strategy: String,
    pub r: f64,
    pub epsilon_hat: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
    pub n_outer: usize,
    pub n_inner: usize,
    pub wall_time_ms: u64,
}

impl ResultRow {
    /// The row as it reads back from CSV.
    pub fn rounded(&self) -> Self {
        let f = |x: f64| format_sig(x).parse().expect("formatted float parses");
        Self { r: f(self.r), epsilon_hat: f(self.epsilon_hat), ci_lo: f(self.ci_lo), ci_hi: f(self.ci_hi), ..self.clone() }
    }
}

/// Plain decimal with [`SIG_DIGITS`] significant digits, trailing zeros
/// dropped.
pub fn format_sig(x: f64) -> String {
    if x == 0.0 || !x.is_finite() {
        return if x == 0.0 { "0".into() } else { x.to_string() };
    }
    // exponent after rounding, so 9.999999999 is treated as 10
    let sci = format!("{:.*e}", SIG_DIGITS - 1, x);
    let exp: i32 = sci.split('e').nth(1).expect("exponent").parse().expect("integer exponent");
    let decimals = (SIG_DIGITS as i32 - 1 - exp).max(0) as usize;
    let s = format!("{x:.decimals$}");
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s
    }
}

/// Rows sorted by `(strategy, r)`.
pub fn sorted(rows: &[ResultRow]) -> Vec<ResultRow> {
    let mut out = rows.to_vec();
    out.sort_by(|a, b| a.strategy.cmp(&b.strategy).then(a.r.total_cmp(&b.r)));
    out
}

pub fn write_csv<W: Write>(rows: &[ResultRow], out: W) -> io::Result<()> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(out);
    w.write_record(HEADER)?;
    for row in sorted(rows) {
        w.write_record([
            row.strategy.clone(),
            format_sig(row.r),
            format_sig(row.epsilon_hat),
            format_sig(row.ci_lo),
            format_sig(row.ci_hi),
            row.n_outer.to_string(),
            row.n_inner.to_string(),
            row.wall_time_ms.to_string(),
        ])?;
    }
    w.flush()
}

pub fn emit_csv(rows: &[ResultRow], path: &Path) -> io::Result<()> {
    let mut buf = Vec::new();
    write_csv(rows, &mut buf)?;
    File::create(path)?.write_all(&buf)
}

pub fn read_csv(path: &Path) -> Result<Vec<ResultRow>, csv::Error> {
    csv::Reader::from_path(path)?.deserialize().collect()
}

//! Paired t-test between two per-round report tables.

use std::path::Path;

use fedleak_core::metrics::{paired_t_test, TTestResult};

use crate::error::{CliError, Result};

/// `(round, value)` pairs of `column`, in file order.
pub fn read_column(path: &Path, column: &str) -> Result<Vec<(usize, f64)>> {
    let mut rdr = csv::Reader::from_path(path).map_err(|e| input(path, 1, e.to_string()))?;
    let headers = rdr.headers().map_err(|e| input(path, 1, e.to_string()))?.clone();
    let find = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| input(path, 1, format!("no column {name:?}")))
    };
    let (round_col, value_col) = (find("round")?, find(column)?);
    let mut out: Vec<(usize, f64)> = Vec::new();
    for (i, row) in rdr.records().enumerate() {
        let line = i + 2;
        let row = row.map_err(|e| input(path, line, e.to_string()))?;
        let round: usize = row[round_col]
            .parse()
            .map_err(|e| input(path, line, format!("bad round {:?}: {e}", &row[round_col])))?;
        let value: f64 = row[value_col]
            .parse()
            .map_err(|e| input(path, line, format!("bad {column} {:?}: {e}", &row[value_col])))?;
        if out.iter().any(|(r, _)| *r == round) {
            return Err(input(path, line, format!("round {round} appears twice")));
        }
        out.push((round, value));
    }
    Ok(out)
}

fn input(path: &Path, line: usize, msg: String) -> CliError {
    CliError::Input {
        file: path.to_path_buf(),
        line,
        msg,
    }
}

/// Pairs the two tables by round and tests `b - a`.
pub fn cmd_ttest(a: &Path, b: &Path, column: &str) -> Result<TTestResult> {
    let (xa, xb) = (read_column(a, column)?, read_column(b, column)?);
    let rounds = |x: &[(usize, f64)]| x.iter().map(|p| p.0).collect::<Vec<_>>();
    let (ra, rb) = (rounds(&xa), rounds(&xb));
    if ra != rb {
        let only_a: Vec<String> = ra.iter().filter(|r| !rb.contains(r)).map(|r| r.to_string()).collect();
        let only_b: Vec<String> = rb.iter().filter(|r| !ra.contains(r)).map(|r| r.to_string()).collect();
        let msg = if only_a.is_empty() && only_b.is_empty() {
            "same rounds in a different order".to_string()
        } else {
            format!(
                "only in {}: [{}]; only in {}: [{}]",
                a.display(),
                only_a.join(", "),
                b.display(),
                only_b.join(", ")
            )
        };
        return Err(CliError::Misaligned(msg));
    }
    let va: Vec<f64> = xa.iter().map(|p| p.1).collect();
    let vb: Vec<f64> = xb.iter().map(|p| p.1).collect();
    Ok(paired_t_test(&va, &vb)?)
}

//! Study tables: one per `p`, estimator rows, `(n, rho)` columns.

use std::collections::BTreeMap;
use std::fmt::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimators::EstimatorKind;
use crate::simulation::CellOutcome;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyTable {
    pub p: usize,
    /// `(n, rho)` in study order.
    pub columns: Vec<(usize, f64)>,
    /// Rows in [`EstimatorKind::ALL`] order; `None` marks a failed cell.
    pub rows: Vec<(EstimatorKind, Vec<Option<f64>>)>,
}

pub fn study_tables(outcomes: &[CellOutcome]) -> Vec<StudyTable> {
    let mut order: Vec<usize> = Vec::new();
    let mut cells: BTreeMap<usize, Vec<&CellOutcome>> = BTreeMap::new();
    for o in outcomes {
        let p = match o {
            Ok(c) => c.config.p,
            Err((c, _)) => c.p,
        };
        if !order.contains(&p) {
            order.push(p);
        }
        cells.entry(p).or_default().push(o);
    }
    order
        .into_iter()
        .map(|p| {
            let group = &cells[&p];
            let columns = group
                .iter()
                .map(|o| match o {
                    Ok(c) => (c.config.n, c.config.rho),
                    Err((c, _)) => (c.n, c.rho),
                })
                .collect();
            let rows = EstimatorKind::ALL
                .iter()
                .map(|&kind| {
                    let values = group
                        .iter()
                        .map(|o| o.as_ref().ok().map(|c| c.mse_of(kind)))
                        .collect();
                    (kind, values)
                })
                .collect();
            StudyTable { p, columns, rows }
        })
        .collect()
}

/// Tab-separated text, four decimals, `FAILED` for failed cells.
pub fn render_study_text(tables: &[StudyTable]) -> String {
    let mut out = String::new();
    for (i, t) in tables.iter().enumerate() {
        if i > 0 {
            out.push('\n');
        }
        let _ = writeln!(out, "# Simulated MSE, p = {}", t.p);
        let ns: Vec<String> = t.columns.iter().map(|(n, _)| n.to_string()).collect();
        let rhos: Vec<String> = t.columns.iter().map(|(_, r)| r.to_string()).collect();
        let _ = writeln!(out, "n\t{}", ns.join("\t"));
        let _ = writeln!(out, "rho\t{}", rhos.join("\t"));
        for (kind, values) in &t.rows {
            let cells: Vec<String> = values
                .iter()
                .map(|v| v.map_or_else(|| "FAILED".to_string(), |x| format!("{x:.4}")))
                .collect();
            let _ = writeln!(out, "{}\t{}", kind.label(), cells.join("\t"));
        }
    }
    out
}

/// `(p, n, rho bits, estimator) -> value`; `None` marks a failed cell.
pub type StudyValues = BTreeMap<(usize, usize, u64, EstimatorKind), Option<f64>>;

/// Reads back [`render_study_text`] output.
pub fn parse_study_text(text: &str) -> Result<StudyValues> {
    let mut out = BTreeMap::new();
    let mut p = None;
    let mut ns: Vec<usize> = Vec::new();
    let mut rhos: Vec<f64> = Vec::new();
    let bad = |line: usize, message: String| Error::Parse { line, message };
    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        if let Some(rest) = line.strip_prefix("# Simulated MSE, p = ") {
            p = Some(rest.trim().parse().map_err(|_| bad(line_no, "bad p".into()))?);
            continue;
        }
        if line.starts_with('#') {
            continue;
        }
        let mut fields = line.split('\t');
        let head = fields.next().unwrap_or_default();
        let rest: Vec<&str> = fields.collect();
        match head {
            "n" => {
                ns = rest
                    .iter()
                    .map(|s| s.parse().map_err(|_| bad(line_no, format!("bad n '{s}'"))))
                    .collect::<Result<_>>()?
            }
            "rho" => {
                rhos = rest
                    .iter()
                    .map(|s| s.parse().map_err(|_| bad(line_no, format!("bad rho '{s}'"))))
                    .collect::<Result<_>>()?
            }
            label => {
                let kind: EstimatorKind = label.parse()?;
                let p = p.ok_or_else(|| bad(line_no, "row before table header".into()))?;
                if rest.len() != ns.len() || rest.len() != rhos.len() {
                    return Err(bad(line_no, "row width does not match header".into()));
                }
                for (j, s) in rest.iter().enumerate() {
                    let v = if *s == "FAILED" {
                        None
                    } else {
                        Some(s.parse().map_err(|_| bad(line_no, format!("bad value '{s}'")))?)
                    };
                    out.insert((p, ns[j], rhos[j].to_bits(), kind), v);
                }
            }
        }
    }
    Ok(out)
}

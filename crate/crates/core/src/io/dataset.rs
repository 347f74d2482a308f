use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::model::Dataset;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ParseOptions {
    pub has_header: bool,
    /// Zero-based column holding the 0/1 response.
    pub response_column: usize,
}

impl Default for ParseOptions {
    fn default() -> Self {
        ParseOptions {
            has_header: true,
            response_column: 0,
        }
    }
}

/// Reads a comma-separated dataset. Every other column becomes a covariate,
/// in file order.
pub fn parse_dataset(path: &Path, options: ParseOptions) -> Result<Dataset> {
    let mut text = String::new();
    File::open(path)
        .map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))))?
        .read_to_string(&mut text)?;
    parse_dataset_str(&text, options)
}

pub fn parse_dataset_str(text: &str, options: ParseOptions) -> Result<Dataset> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());

    let mut width = None;
    let mut response = Vec::new();
    let mut covariates = Vec::new();
    let mut skipped_header = !options.has_header;

    for record in reader.records() {
        let record = record.map_err(|e| Error::Parse {
            line: e.position().map_or(0, |p| p.line() as usize),
            message: e.to_string(),
        })?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        if record.iter().all(|f| f.is_empty()) {
            continue;
        }
        if !skipped_header {
            skipped_header = true;
            continue;
        }
        let w = *width.get_or_insert(record.len());
        if record.len() != w {
            return Err(Error::Parse {
                line,
                message: format!("expected {w} fields, found {}", record.len()),
            });
        }
        if options.response_column >= w {
            return Err(Error::Parse {
                line,
                message: format!(
                    "response column {} out of range for {w} fields",
                    options.response_column
                ),
            });
        }
        for (j, field) in record.iter().enumerate() {
            let value: f64 = field.parse().map_err(|_| Error::Parse {
                line,
                message: format!("field {} is not a number: '{field}'", j + 1),
            })?;
            if !value.is_finite() {
                return Err(Error::Parse {
                    line,
                    message: format!("field {} is not finite", j + 1),
                });
            }
            if j == options.response_column {
                if value != 0.0 && value != 1.0 {
                    return Err(Error::Parse {
                        line,
                        message: format!("response must be 0 or 1, found {field}"),
                    });
                }
                response.push(value);
            } else {
                covariates.push(value);
            }
        }
    }

    let n = response.len();
    let p = width.unwrap_or(1).saturating_sub(1);
    if n == 0 || p == 0 {
        return Err(Error::Parse {
            line: 0,
            message: "dataset needs at least one row and one covariate column".into(),
        });
    }
    Dataset::new(
        DMatrix::from_row_slice(n, p, &covariates),
        DVector::from_vec(response),
    )
}

/// Writes the response first, then the covariates, with a `y,x1,...` header.
/// Values use the shortest representation that parses back exactly.
pub fn write_dataset_csv<W: Write>(data: &Dataset, mut out: W) -> Result<()> {
    let p = data.p();
    let header: Vec<String> = std::iter::once("y".to_string())
        .chain((1..=p).map(|j| format!("x{j}")))
        .collect();
    writeln!(out, "{}", header.join(","))?;
    for i in 0..data.n() {
        let mut fields = vec![format!("{}", data.y()[i])];
        fields.extend((0..p).map(|j| format!("{:?}", data.x()[(i, j)])));
        writeln!(out, "{}", fields.join(","))?;
    }
    Ok(())
}

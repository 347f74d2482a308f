//! File formats: CSV datasets, key-value configuration files and study tables.

mod config;
mod dataset;
mod table;

pub use config::{config_file_args, parse_config_text};
pub use dataset::{parse_dataset, parse_dataset_str, write_dataset_csv, ParseOptions};
pub use table::{parse_study_text, render_study_text, study_tables, StudyTable, StudyValues};

use std::fmt::Write;

/// Tab- or comma-separated rendering of a header plus rows.
pub fn delimited(header: &[&str], rows: &[Vec<String>], sep: char) -> String {
    let mut out = String::new();
    let sep_s = sep.to_string();
    let _ = writeln!(out, "{}", header.join(&sep_s));
    for row in rows {
        let _ = writeln!(out, "{}", row.join(&sep_s));
    }
    out
}

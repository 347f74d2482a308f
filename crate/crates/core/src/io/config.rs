//! `key = value` configuration files. Keys are long flag names without the
//! leading dashes and values are written exactly as on the command line;
//! `true`/`false` toggle switches. Blank lines and `#` comments are ignored.

use std::path::Path;

use crate::error::{Error, Result};

pub fn parse_config_text(text: &str) -> Result<Vec<(String, String)>> {
    let mut pairs = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| Error::Parse {
            line: i + 1,
            message: format!("expected 'key = value', found '{line}'"),
        })?;
        let key = key.trim().trim_start_matches("--");
        if key.is_empty() {
            return Err(Error::Parse {
                line: i + 1,
                message: "empty key".into(),
            });
        }
        pairs.push((key.to_string(), value.trim().to_string()));
    }
    Ok(pairs)
}

/// Converts a configuration file into command-line arguments.
pub fn config_file_args(path: &Path) -> Result<Vec<String>> {
    let text = std::fs::read_to_string(path)?;
    let mut args = Vec::new();
    for (key, value) in parse_config_text(&text)? {
        match value.as_str() {
            "true" => args.push(format!("--{key}")),
            "false" => {}
            _ => {
                args.push(format!("--{key}"));
                args.push(value);
            }
        }
    }
    Ok(args)
}

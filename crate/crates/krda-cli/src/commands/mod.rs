pub mod bench;
pub mod eval;
pub mod fit;
pub mod gen;
pub mod plot;
pub mod transfer;

use std::path::PathBuf;

use anyhow::{anyhow, Result};

use crate::UsageError;

/// A flag that must be present either on the command line or in the
/// config document.
pub fn require<T>(value: Option<T>, flag: &str) -> Result<T> {
    value.ok_or_else(|| {
        anyhow!(UsageError(format!(
            "missing required option --{flag} (or a `{flag}` entry in --config)"
        )))
    })
}

pub fn usage(message: impl Into<String>) -> anyhow::Error {
    anyhow!(UsageError(message.into()))
}

/// Parse a comma-separated list of numbers.
pub fn parse_list<T: std::str::FromStr>(text: &str, flag: &str) -> Result<Vec<T>> {
    text.split(',')
        .map(|item| {
            item.trim()
                .parse::<T>()
                .map_err(|_| usage(format!("--{flag}: cannot parse {item:?}")))
        })
        .collect()
}

/// Parse `--train-n` style size lists: a single value, a comma list, or
/// `a..b` for six evenly spaced sizes from a to b inclusive.
pub fn parse_sizes(text: &str) -> Result<Vec<usize>> {
    if let Some((a, b)) = text.split_once("..") {
        let a: usize = a
            .trim()
            .parse()
            .map_err(|_| usage(format!("--train-n: cannot parse {a:?}")))?;
        let b: usize = b
            .trim()
            .parse()
            .map_err(|_| usage(format!("--train-n: cannot parse {b:?}")))?;
        if b <= a {
            return Err(usage("--train-n: range end must exceed start"));
        }
        let steps = 5usize;
        return Ok((0..=steps)
            .map(|k| a + (b - a) * k / steps)
            .collect());
    }
    parse_list(text, "train-n")
}

/// Derived sibling path: same stem, new suffix appended to the file name.
pub fn sibling(path: &PathBuf, suffix: &str) -> PathBuf {
    let mut name = path.file_stem().unwrap_or_default().to_os_string();
    name.push(suffix);
    path.with_file_name(name)
}

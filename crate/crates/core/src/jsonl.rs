//! One JSON value per line. Blank lines are skipped on input.

use std::fs;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::Serialize;

#[derive(Debug, thiserror::Error)]
pub enum JsonlError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path} line {line}, column {column}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        column: usize,
        message: String,
    },
}

pub fn parse_jsonl<T: DeserializeOwned>(text: &str, origin: &Path) -> Result<Vec<T>, JsonlError> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| {
                let full = e.to_string();
                let message = full.split(" at line ").next().unwrap_or(&full).to_string();
                JsonlError::Parse {
                    path: origin.to_path_buf(),
                    line: i + 1,
                    column: e.column(),
                    message,
                }
            })
        })
        .collect()
}

pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>, JsonlError> {
    let text = fs::read_to_string(path).map_err(|e| JsonlError::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    parse_jsonl(&text, path)
}

/// Compact lines, each terminated by `\n`.
pub fn to_jsonl<T: Serialize>(items: &[T]) -> String {
    let mut out = String::new();
    for item in items {
        out.push_str(&serde_json::to_string(item).expect("serializable record"));
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_and_line_numbers() {
        let text = to_jsonl(&[serde_json::json!({"a": 1}), serde_json::json!({"a": 2})]);
        assert_eq!(text, "{\"a\":1}\n{\"a\":2}\n");
        let back: Vec<serde_json::Value> =
            parse_jsonl(&format!("{text}\n"), Path::new("x")).unwrap();
        assert_eq!(back.len(), 2);
        let err =
            parse_jsonl::<serde_json::Value>("{}\n\n{oops\n", Path::new("f.jsonl")).unwrap_err();
        assert_eq!(
            err.to_string(),
            "f.jsonl line 3, column 2: key must be a string"
        );
    }
}

//! Shared plumbing for the text file formats (CSV tables, atomic writes).

use std::fmt::Display;
use std::path::Path;
use std::str::FromStr;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum FormatError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: line {line}: {message}")]
    Parse { path: String, line: u64, message: String },
}

impl FormatError {
    pub fn parse(path: &str, line: u64, message: impl Into<String>) -> Self {
        Self::Parse {
            path: path.to_string(),
            line,
            message: message.into(),
        }
    }

    pub fn io(path: &Path, source: std::io::Error) -> Self {
        Self::Io {
            path: path.display().to_string(),
            source,
        }
    }
}

/// One data row with its 1-based line number in the source.
pub struct Row {
    pub line: u64,
    pub record: csv::StringRecord,
}

/// Parsed CSV body whose header has been checked against `header`.
pub struct Table {
    pub name: String,
    pub rows: Vec<Row>,
}

impl Table {
    pub fn parse(text: &str, name: &str, header: &[&str]) -> Result<Self, FormatError> {
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(true)
            .trim(csv::Trim::All)
            .from_reader(text.as_bytes());
        let found = reader
            .headers()
            .map_err(|e| FormatError::parse(name, 1, e.to_string()))?
            .clone();
        let found: Vec<&str> = found.iter().collect();
        if found != header {
            return Err(FormatError::parse(
                name,
                1,
                format!("expected header `{}`, found `{}`", header.join(","), found.join(",")),
            ));
        }
        let mut rows = Vec::new();
        for rec in reader.records() {
            let record = rec.map_err(|e| {
                let line = e.position().map(|p| p.line()).unwrap_or(0);
                FormatError::parse(name, line, e.to_string())
            })?;
            let line = record.position().map(|p| p.line()).unwrap_or(0);
            rows.push(Row { line, record });
        }
        Ok(Self {
            name: name.to_string(),
            rows,
        })
    }

    pub fn load(path: &Path, header: &[&str]) -> Result<Self, FormatError> {
        let text = std::fs::read_to_string(path).map_err(|e| FormatError::io(path, e))?;
        Self::parse(&text, &path.display().to_string(), header)
    }

    pub fn get<T: FromStr>(&self, row: &Row, idx: usize, column: &str) -> Result<T, FormatError>
    where
        T::Err: Display,
    {
        self.get_opt(row, idx, column)?
            .ok_or_else(|| FormatError::parse(&self.name, row.line, format!("column `{column}` is empty")))
    }

    /// Empty cells map to `None`.
    pub fn get_opt<T: FromStr>(&self, row: &Row, idx: usize, column: &str) -> Result<Option<T>, FormatError>
    where
        T::Err: Display,
    {
        let raw = row.record.get(idx).unwrap_or("");
        if raw.is_empty() {
            return Ok(None);
        }
        raw.parse::<T>()
            .map(Some)
            .map_err(|e| FormatError::parse(&self.name, row.line, format!("column `{column}`: {e} (`{raw}`)")))
    }
}

/// Writes `contents` to a sibling temp file and renames it into place.
pub fn write_atomic(path: &Path, contents: &str) -> Result<(), FormatError> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = std::path::PathBuf::from(tmp);
    std::fs::write(&tmp, contents).map_err(|e| FormatError::io(&tmp, e))?;
    std::fs::rename(&tmp, path).map_err(|e| FormatError::io(path, e))
}

/// `Some(v)` → `v` formatted, `None` → empty cell.
pub fn opt_cell(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

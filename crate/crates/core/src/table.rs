//! Minimal typed table used for every exported artifact.
//!
//! CSV output renders floats with 17 significant digits so values survive a
//! round trip through text. A leading `# key=value ...` line carries metadata
//! (tool version, stage, seed). JSON output stores the same content as
//! `{"meta": {...}, "columns": [...], "rows": [[...], ...]}`.

use std::collections::BTreeMap;
use std::fs;
use std::io::{self, Write};
use std::path::Path;

use serde_json::json;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum TableError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: io::Error,
    },
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
    #[error("column `{0}` not found")]
    MissingColumn(String),
    #[error("row {row}, column `{column}`: cannot parse `{value}` as {expected}")]
    Parse {
        row: usize,
        column: String,
        value: String,
        expected: &'static str,
    },
    #[error("malformed table: {0}")]
    Malformed(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    #[default]
    Csv,
    Json,
}

impl Format {
    pub fn extension(self) -> &'static str {
        match self {
            Format::Csv => "csv",
            Format::Json => "json",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Value {
    Text(String),
    Int(i64),
    Float(f64),
}

impl From<&str> for Value {
    fn from(s: &str) -> Self {
        Value::Text(s.to_owned())
    }
}
impl From<String> for Value {
    fn from(s: String) -> Self {
        Value::Text(s)
    }
}
impl From<f64> for Value {
    fn from(x: f64) -> Self {
        Value::Float(x)
    }
}
impl From<i64> for Value {
    fn from(x: i64) -> Self {
        Value::Int(x)
    }
}
impl From<usize> for Value {
    fn from(x: usize) -> Self {
        Value::Int(x as i64)
    }
}

/// Formats a float with 17 significant digits.
pub fn format_f64(x: f64) -> String {
    format!("{x:.16e}")
}

impl Value {
    fn render(&self) -> String {
        match self {
            Value::Text(s) => s.clone(),
            Value::Int(i) => i.to_string(),
            Value::Float(x) => format_f64(*x),
        }
    }

    fn to_json(&self) -> serde_json::Value {
        match self {
            Value::Text(s) => json!(s),
            Value::Int(i) => json!(i),
            Value::Float(x) => json!(x),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Table {
    pub meta: BTreeMap<String, String>,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Value>>,
}

impl Table {
    pub fn new<S: Into<String>>(columns: impl IntoIterator<Item = S>) -> Self {
        Self {
            meta: BTreeMap::new(),
            columns: columns.into_iter().map(Into::into).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<Value>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    pub fn with_meta(mut self, key: &str, value: impl ToString) -> Self {
        self.meta.insert(key.to_owned(), value.to_string());
        self
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn column(&self, name: &str) -> Result<usize, TableError> {
        self.columns
            .iter()
            .position(|c| c == name)
            .ok_or_else(|| TableError::MissingColumn(name.to_owned()))
    }

    pub fn text(&self, row: usize, col: usize) -> String {
        match &self.rows[row][col] {
            Value::Text(s) => s.clone(),
            v => v.render(),
        }
    }

    pub fn float(&self, row: usize, col: usize) -> Result<f64, TableError> {
        match &self.rows[row][col] {
            Value::Float(x) => Ok(*x),
            Value::Int(i) => Ok(*i as f64),
            Value::Text(s) => s.trim().parse().map_err(|_| self.parse_error(row, col, "number")),
        }
    }

    pub fn int(&self, row: usize, col: usize) -> Result<i64, TableError> {
        match &self.rows[row][col] {
            Value::Int(i) => Ok(*i),
            Value::Float(x) if x.fract() == 0.0 => Ok(*x as i64),
            Value::Text(s) => s.trim().parse().map_err(|_| self.parse_error(row, col, "integer")),
            _ => Err(self.parse_error(row, col, "integer")),
        }
    }

    fn parse_error(&self, row: usize, col: usize, expected: &'static str) -> TableError {
        TableError::Parse {
            row: row + 1,
            column: self.columns[col].clone(),
            value: self.rows[row][col].render(),
            expected,
        }
    }

    pub fn to_csv_bytes(&self) -> Result<Vec<u8>, TableError> {
        let mut out = Vec::new();
        if !self.meta.is_empty() {
            let line = self
                .meta
                .iter()
                .map(|(k, v)| format!("{k}={v}"))
                .collect::<Vec<_>>()
                .join(" ");
            writeln!(out, "# {line}").expect("write to Vec");
        }
        {
            let mut w = csv::Writer::from_writer(&mut out);
            w.write_record(&self.columns)?;
            for row in &self.rows {
                w.write_record(row.iter().map(Value::render))?;
            }
            w.flush().map_err(|e| TableError::Io { path: "<buffer>".into(), source: e })?;
        }
        Ok(out)
    }

    pub fn to_json_bytes(&self) -> Result<Vec<u8>, TableError> {
        let rows: Vec<serde_json::Value> = self
            .rows
            .iter()
            .map(|r| serde_json::Value::Array(r.iter().map(Value::to_json).collect()))
            .collect();
        let doc = json!({ "meta": self.meta, "columns": self.columns, "rows": rows });
        let mut out = serde_json::to_vec_pretty(&doc)?;
        out.push(b'\n');
        Ok(out)
    }

    pub fn write(&self, path: &Path, format: Format) -> Result<(), TableError> {
        let bytes = match format {
            Format::Csv => self.to_csv_bytes()?,
            Format::Json => self.to_json_bytes()?,
        };
        fs::write(path, bytes).map_err(|e| TableError::Io { path: path.display().to_string(), source: e })
    }

    pub fn from_csv_str(text: &str, delimiter: u8) -> Result<Self, TableError> {
        let mut meta = BTreeMap::new();
        let mut body = text;
        if let Some(rest) = text.strip_prefix('#') {
            let (line, remainder) = rest.split_once('\n').unwrap_or((rest, ""));
            for pair in line.split_whitespace() {
                if let Some((k, v)) = pair.split_once('=') {
                    meta.insert(k.to_owned(), v.to_owned());
                }
            }
            body = remainder;
        }
        let mut rdr = csv::ReaderBuilder::new()
            .delimiter(delimiter)
            .comment(Some(b'#'))
            .trim(csv::Trim::All)
            .from_reader(body.as_bytes());
        let columns = rdr.headers()?.iter().map(str::to_owned).collect::<Vec<_>>();
        let mut rows = Vec::new();
        for rec in rdr.records() {
            let rec = rec?;
            rows.push(rec.iter().map(|s| Value::Text(s.to_owned())).collect());
        }
        Ok(Self { meta, columns, rows })
    }

    pub fn from_json_str(text: &str) -> Result<Self, TableError> {
        let doc: serde_json::Value = serde_json::from_str(text)?;
        let columns = doc["columns"]
            .as_array()
            .ok_or_else(|| TableError::Malformed("missing `columns` array".into()))?
            .iter()
            .map(|c| c.as_str().map(str::to_owned))
            .collect::<Option<Vec<_>>>()
            .ok_or_else(|| TableError::Malformed("non-string column name".into()))?;
        let mut meta = BTreeMap::new();
        if let Some(m) = doc["meta"].as_object() {
            for (k, v) in m {
                meta.insert(k.clone(), v.as_str().map(str::to_owned).unwrap_or_else(|| v.to_string()));
            }
        }
        let mut rows = Vec::new();
        for (i, row) in doc["rows"]
            .as_array()
            .ok_or_else(|| TableError::Malformed("missing `rows` array".into()))?
            .iter()
            .enumerate()
        {
            let cells = row
                .as_array()
                .ok_or_else(|| TableError::Malformed(format!("row {} is not an array", i + 1)))?;
            if cells.len() != columns.len() {
                return Err(TableError::Malformed(format!("row {} has {} cells", i + 1, cells.len())));
            }
            rows.push(
                cells
                    .iter()
                    .map(|c| match c {
                        serde_json::Value::String(s) => Value::Text(s.clone()),
                        serde_json::Value::Number(n) => match n.as_i64() {
                            Some(i) => Value::Int(i),
                            None => Value::Float(n.as_f64().unwrap_or(f64::NAN)),
                        },
                        other => Value::Text(other.to_string()),
                    })
                    .collect(),
            );
        }
        Ok(Self { meta, columns, rows })
    }

    /// Reads a table, choosing the parser by file extension (`.json` or delimited text).
    pub fn read(path: &Path) -> Result<Self, TableError> {
        let text = fs::read_to_string(path)
            .map_err(|e| TableError::Io { path: path.display().to_string(), source: e })?;
        if path.extension().is_some_and(|e| e == "json") {
            Self::from_json_str(&text)
        } else {
            Self::from_csv_str(&text, b',')
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Table {
        let mut t = Table::new(["name", "n", "x"]).with_meta("seed", 7);
        t.push(vec!["a".into(), 3usize.into(), 0.1f64.into()]);
        t.push(vec!["b,c".into(), (-2i64).into(), (1.0f64 / 3.0).into()]);
        t
    }

    #[test]
    fn csv_round_trip_preserves_floats_and_meta() {
        let t = sample();
        let bytes = t.to_csv_bytes().unwrap();
        let back = Table::from_csv_str(std::str::from_utf8(&bytes).unwrap(), b',').unwrap();
        assert_eq!(back.meta["seed"], "7");
        assert_eq!(back.text(1, 0), "b,c");
        assert_eq!(back.int(1, 1).unwrap(), -2);
        assert_eq!(back.float(1, 2).unwrap(), 1.0 / 3.0);
    }

    #[test]
    fn json_round_trip() {
        let t = sample();
        let bytes = t.to_json_bytes().unwrap();
        let back = Table::from_json_str(std::str::from_utf8(&bytes).unwrap()).unwrap();
        assert_eq!(back.columns, t.columns);
        assert_eq!(back.float(0, 2).unwrap(), 0.1);
        assert_eq!(back.int(0, 1).unwrap(), 3);
    }

    #[test]
    fn seventeen_significant_digits() {
        assert_eq!(format_f64(0.1), "1.0000000000000001e-1");
        assert_eq!(format_f64(25.0).parse::<f64>().unwrap(), 25.0);
    }
}

//! Batch-file ingestion and answer snapshots.
//!
//! Batches are CSV (column types declared per source) or JSONL (one value
//! per line; objects become tuples ordered by field name). Snapshots are CSV
//! for flat answers and canonical value text otherwise, so golden files diff
//! cleanly.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::scalar::{render, Scalar};
use crate::value::{Bag, Value};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ColumnType {
    Int,
    Float,
    Str,
    Bool,
}

impl ColumnType {
    pub fn name(self) -> &'static str {
        match self {
            ColumnType::Int => "int",
            ColumnType::Float => "float",
            ColumnType::Str => "str",
            ColumnType::Bool => "bool",
        }
    }
}

/// Parses a schema spec like `int,int,float`.
pub fn parse_schema(spec: &str) -> Result<Vec<ColumnType>> {
    spec.split(',')
        .map(|s| match s.trim() {
            "int" => Ok(ColumnType::Int),
            "float" => Ok(ColumnType::Float),
            "str" | "string" => Ok(ColumnType::Str),
            "bool" => Ok(ColumnType::Bool),
            other => Err(Error::Session(format!("unknown column type `{other}`"))),
        })
        .collect()
}

/// Loads one batch file into a bag of tuples. The format comes from the
/// extension: `.csv` (requires a schema) or `.jsonl`.
pub fn load_batch<F: Scalar>(path: &Path, schema: Option<&[ColumnType]>) -> Result<Value<F>> {
    match path.extension().and_then(|e| e.to_str()) {
        Some("csv") => {
            let schema = schema.ok_or_else(|| {
                Error::Session(format!("{} needs a column schema", path.display()))
            })?;
            load_csv(path, schema)
        }
        Some("jsonl") => load_jsonl(path),
        other => Err(Error::Session(format!(
            "unsupported batch format {other:?} for {}",
            path.display()
        ))),
    }
}

pub fn load_csv<F: Scalar>(path: &Path, schema: &[ColumnType]) -> Result<Value<F>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_path(path)
        .map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    let mut bag = Bag::new();
    for (i, record) in reader.records().enumerate() {
        let row = i + 1;
        let record = record.map_err(|e| Error::Schema { row, msg: e.to_string() })?;
        if record.len() == 1 && record[0].trim().is_empty() {
            continue;
        }
        if record.len() != schema.len() {
            return Err(Error::Schema {
                row,
                msg: format!("expected {} columns, found {}", schema.len(), record.len()),
            });
        }
        let mut fields = Vec::with_capacity(schema.len());
        for (col, ty) in record.iter().zip(schema) {
            fields.push(parse_field(col, *ty).map_err(|msg| Error::Schema { row, msg })?);
        }
        let v = if fields.len() == 1 {
            fields.pop().expect("one field")
        } else {
            Value::Tuple(fields)
        };
        bag.insert(v, 1);
    }
    Ok(Value::Bag(bag))
}

fn parse_field<F: Scalar>(s: &str, ty: ColumnType) -> std::result::Result<Value<F>, String> {
    let s = s.trim();
    match ty {
        ColumnType::Int => s
            .parse::<i64>()
            .map(Value::Int)
            .map_err(|_| format!("`{s}` is not an int")),
        ColumnType::Float => s
            .parse::<F>()
            .map(Value::Float)
            .map_err(|_| format!("`{s}` is not a float")),
        ColumnType::Str => Ok(Value::str(s)),
        ColumnType::Bool => match s {
            "true" => Ok(Value::Bool(true)),
            "false" => Ok(Value::Bool(false)),
            _ => Err(format!("`{s}` is not a bool")),
        },
    }
}

pub fn load_jsonl<F: Scalar>(path: &Path) -> Result<Value<F>> {
    let text = fs::read_to_string(path)?;
    let mut bag = Bag::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let json: serde_json::Value = serde_json::from_str(line)
            .map_err(|e| Error::Schema { row: i + 1, msg: e.to_string() })?;
        bag.insert(json_to_value(&json, i + 1)?, 1);
    }
    Ok(Value::Bag(bag))
}

fn json_to_value<F: Scalar>(v: &serde_json::Value, row: usize) -> Result<Value<F>> {
    use serde_json::Value as J;
    Ok(match v {
        J::Null => Value::Unit,
        J::Bool(b) => Value::Bool(*b),
        J::Number(n) => {
            if let Some(i) = n.as_i64() {
                Value::Int(i)
            } else {
                let f = n.as_f64().ok_or_else(|| Error::Schema {
                    row,
                    msg: format!("number {n} out of range"),
                })?;
                Value::Float(F::from_f64(f).ok_or_else(|| Error::Schema {
                    row,
                    msg: format!("number {n} out of range"),
                })?)
            }
        }
        J::String(s) => Value::str(s),
        J::Array(xs) => {
            let mut out = Vec::with_capacity(xs.len());
            for x in xs {
                out.push(json_to_value(x, row)?);
            }
            Value::Tuple(out)
        }
        // Objects become tuples ordered by field name.
        J::Object(m) => {
            let mut keys: Vec<_> = m.keys().collect();
            keys.sort();
            let mut out = Vec::with_capacity(keys.len());
            for k in keys {
                out.push(json_to_value(&m[k], row)?);
            }
            Value::Tuple(out)
        }
    })
}

fn is_atom<F: Scalar>(v: &Value<F>) -> bool {
    matches!(
        v,
        Value::Unit | Value::Bool(_) | Value::Int(_) | Value::Float(_) | Value::Str(_)
    )
}

/// Flat answers are bags of atom tuples (or bare atoms).
fn is_flat<F: Scalar>(v: &Value<F>) -> bool {
    match v {
        Value::Bag(b) => b.iter().all(|(e, _)| match e {
            Value::Tuple(fs) => fs.iter().all(is_atom),
            other => is_atom(other),
        }),
        _ => false,
    }
}

fn csv_cell<F: Scalar>(v: &Value<F>) -> String {
    match v {
        Value::Float(x) => render(*x),
        Value::Str(s) => s.to_string(),
        other => other.render(),
    }
}

/// Writes one answer snapshot; returns the file written. CSV when the answer
/// is flat, canonical text otherwise.
pub fn write_snapshot<F: Scalar>(dir: &Path, epoch: u64, answer: &Value<F>) -> Result<PathBuf> {
    fs::create_dir_all(dir)?;
    if is_flat(answer) {
        let path = dir.join(format!("snapshot-{epoch:04}.csv"));
        let mut out = String::new();
        if let Value::Bag(b) = answer {
            for (e, n) in b.iter() {
                let line = match e {
                    Value::Tuple(fs) => {
                        fs.iter().map(csv_cell).collect::<Vec<_>>().join(",")
                    }
                    other => csv_cell(other),
                };
                for _ in 0..n {
                    out.push_str(&line);
                    out.push('\n');
                }
            }
        }
        let mut f = fs::File::create(&path)?;
        f.write_all(out.as_bytes())?;
        Ok(path)
    } else {
        let path = dir.join(format!("snapshot-{epoch:04}.txt"));
        let mut f = fs::File::create(&path)?;
        f.write_all(answer.render().as_bytes())?;
        f.write_all(b"\n")?;
        Ok(path)
    }
}

/// Writes rows of already-rendered cells as one CSV file (used by the
/// dataset generators).
pub fn write_csv(path: &Path, rows: &[Vec<String>]) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    let mut out = String::new();
    for row in rows {
        out.push_str(&row.join(","));
        out.push('\n');
    }
    let mut f = fs::File::create(path)?;
    f.write_all(out.as_bytes())?;
    Ok(())
}

use crate::config::{ExperimentConfig, Format};
use serde_json::{json, Value};
use std::io::Write;
use std::path::Path;

pub const SCHEMA_VERSION: u32 = 1;

/// A result table: fixed CSV columns and, per row, the CSV cells and a JSON record.
#[derive(Debug, Default)]
pub struct Table {
    pub columns: Vec<&'static str>,
    pub rows: Vec<Row>,
    pub summary: Value,
}

#[derive(Debug)]
pub struct Row {
    pub cells: Vec<String>,
    pub record: Value,
}

impl Table {
    pub fn new(columns: &[&'static str]) -> Self {
        Self { columns: columns.to_vec(), rows: Vec::new(), summary: Value::Null }
    }

    /// Row whose JSON record is the CSV row keyed by column name.
    pub fn push_flat(&mut self, values: Vec<Value>) {
        assert_eq!(values.len(), self.columns.len(), "row width");
        let record = Value::Object(self.columns.iter().map(|c| c.to_string()).zip(values.iter().cloned()).collect());
        self.push(values, record);
    }

    pub fn push(&mut self, values: Vec<Value>, record: Value) {
        assert_eq!(values.len(), self.columns.len(), "row width");
        self.rows.push(Row { cells: values.iter().map(cell).collect(), record });
    }
}

fn cell(v: &Value) -> String {
    match v {
        Value::Null => String::new(),
        Value::String(s) => s.clone(),
        other => other.to_string(),
    }
}

/// Non-finite floats become `null` in JSON and empty cells in CSV.
pub fn num(x: f64) -> Value {
    serde_json::Number::from_f64(x).map(Value::Number).unwrap_or(Value::Null)
}

pub fn render(table: &Table, config: &ExperimentConfig) -> Vec<u8> {
    match config.format {
        Format::Csv => render_csv(table, config),
        Format::Json => {
            let doc = json!({
                "schema": format!("corrfbm/{}/v{SCHEMA_VERSION}", config.command.name()),
                "config": config,
                "results": table.rows.iter().map(|r| r.record.clone()).collect::<Vec<_>>(),
                "summary": table.summary,
            });
            let mut out = serde_json::to_vec_pretty(&doc).expect("json");
            out.push(b'\n');
            out
        }
    }
}

fn render_csv(table: &Table, config: &ExperimentConfig) -> Vec<u8> {
    let mut out = Vec::new();
    writeln!(out, "# corrfbm {} v{SCHEMA_VERSION}", config.command.name()).unwrap();
    writeln!(out, "# config: {}", config.to_json()).unwrap();
    let mut w = csv::Writer::from_writer(out);
    w.write_record(&table.columns).expect("csv");
    for row in &table.rows {
        w.write_record(&row.cells).expect("csv");
    }
    w.into_inner().expect("csv flush")
}

/// Writes through a temporary file in the target directory, then renames.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| e.error)?;
    Ok(())
}

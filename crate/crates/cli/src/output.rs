//! CSV and JSON-lines emission with a fixed float format.

use std::io::{self, Write};

use serde_json::{Map, Number, Value};

use crate::config::{RunConfig, SCHEMA_LINE};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Csv,
    Json,
}

impl std::str::FromStr for Format {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "csv" => Ok(Format::Csv),
            "json" => Ok(Format::Json),
            other => Err(format!("unknown format `{other}` (csv|json)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Num(f64),
    Int(u64),
    Text(String),
    Flag(bool),
}

impl From<f64> for Cell {
    fn from(x: f64) -> Self {
        Cell::Num(x)
    }
}

impl From<usize> for Cell {
    fn from(x: usize) -> Self {
        Cell::Int(x as u64)
    }
}

impl From<bool> for Cell {
    fn from(x: bool) -> Self {
        Cell::Flag(x)
    }
}

impl From<&str> for Cell {
    fn from(x: &str) -> Self {
        Cell::Text(x.to_string())
    }
}

impl From<String> for Cell {
    fn from(x: String) -> Self {
        Cell::Text(x)
    }
}

/// 17 significant digits, `.` separator, independent of locale.
pub fn format_float(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else {
        format!("{x}")
    }
}

impl Cell {
    fn csv(&self) -> String {
        match self {
            Cell::Num(x) => format_float(*x),
            Cell::Int(i) => i.to_string(),
            Cell::Text(s) => s.clone(),
            Cell::Flag(b) => b.to_string(),
        }
    }

    fn json(&self) -> Value {
        match self {
            Cell::Num(x) => Number::from_f64(*x).map_or(Value::Null, Value::Number),
            Cell::Int(i) => Value::from(*i),
            Cell::Text(s) => Value::from(s.clone()),
            Cell::Flag(b) => Value::from(*b),
        }
    }
}

/// A command's result: named columns, rows, and free-form header notes.
#[derive(Debug, Clone, Default)]
pub struct Table {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
    pub notes: Vec<String>,
}

impl Table {
    pub fn new(columns: &[&str]) -> Self {
        Self {
            columns: columns.iter().map(|c| c.to_string()).collect(),
            ..Self::default()
        }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }
}

pub fn write_table(
    out: &mut dyn Write,
    format: Format,
    command: &str,
    cfg: &RunConfig,
    table: &Table,
) -> io::Result<()> {
    match format {
        Format::Csv => {
            writeln!(out, "{SCHEMA_LINE}")?;
            writeln!(out, "# command={command}")?;
            for line in cfg.echo() {
                writeln!(out, "{line}")?;
            }
            for note in &table.notes {
                writeln!(out, "# note {note}")?;
            }
            writeln!(out, "{}", table.columns.join(","))?;
            for row in &table.rows {
                let cells: Vec<String> = row.iter().map(Cell::csv).collect();
                writeln!(out, "{}", cells.join(","))?;
            }
        }
        Format::Json => {
            let mut meta = Map::new();
            meta.insert("schema".into(), Value::from(1));
            meta.insert("command".into(), Value::from(command));
            let config: Map<String, Value> = cfg
                .entries()
                .map(|(k, v)| (k.clone(), Value::from(v.clone())))
                .collect();
            meta.insert("config".into(), Value::Object(config));
            meta.insert("notes".into(), Value::from(table.notes.clone()));
            writeln!(out, "{}", Value::Object(meta))?;
            for row in &table.rows {
                let obj: Map<String, Value> = table
                    .columns
                    .iter()
                    .cloned()
                    .zip(row.iter().map(Cell::json))
                    .collect();
                writeln!(out, "{}", Value::Object(obj))?;
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn floats_keep_seventeen_digits() {
        assert_eq!(format_float(0.1), "1.0000000000000001e-1");
        assert_eq!(format_float(100.0), "1.0000000000000000e2");
        assert_eq!(format_float(f64::NAN), "NaN");
        assert_eq!(format_float(0.1).parse::<f64>().unwrap(), 0.1);
    }

    #[test]
    fn json_rows_carry_column_names() {
        let mut t = Table::new(&["r", "engine"]);
        t.push(vec![0.5.into(), "structured".into()]);
        let mut buf = Vec::new();
        write_table(&mut buf, Format::Json, "metrics", &RunConfig::default(), &t).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 2);
        assert_eq!(lines[1], r#"{"engine":"structured","r":0.5}"#);
    }
}

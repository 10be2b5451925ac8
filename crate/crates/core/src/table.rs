//! Typed CSV tables. Every row is checked against the column schema before
//! anything is written, and floats are printed with 17 significant digits
//! so they parse back to the identical `f64`.

use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ColumnKind {
    Text,
    Int,
    Float,
    /// Float or empty.
    OptFloat,
    Bool,
    /// Bool or empty.
    OptBool,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Text(String),
    Int(i64),
    UInt(u64),
    Float(f64),
    Bool(bool),
    Empty,
}

impl Cell {
    fn fits(&self, kind: ColumnKind) -> bool {
        matches!(
            (self, kind),
            (Cell::Text(_), ColumnKind::Text)
                | (Cell::Int(_) | Cell::UInt(_), ColumnKind::Int)
                | (Cell::Float(_), ColumnKind::Float | ColumnKind::OptFloat)
                | (Cell::Empty, ColumnKind::OptFloat | ColumnKind::OptBool)
                | (Cell::Bool(_), ColumnKind::Bool | ColumnKind::OptBool)
        )
    }

    fn render(&self) -> String {
        match self {
            Cell::Text(s) => s.clone(),
            Cell::Int(i) => i.to_string(),
            Cell::UInt(i) => i.to_string(),
            Cell::Float(x) => format_float(*x),
            Cell::Bool(b) => b.to_string(),
            Cell::Empty => String::new(),
        }
    }
}

impl From<&str> for Cell {
    fn from(s: &str) -> Self {
        Cell::Text(s.to_string())
    }
}

impl From<String> for Cell {
    fn from(s: String) -> Self {
        Cell::Text(s)
    }
}

impl From<f64> for Cell {
    fn from(x: f64) -> Self {
        Cell::Float(x)
    }
}

impl From<Option<f64>> for Cell {
    fn from(x: Option<f64>) -> Self {
        x.map_or(Cell::Empty, Cell::Float)
    }
}

impl From<Option<bool>> for Cell {
    fn from(b: Option<bool>) -> Self {
        b.map_or(Cell::Empty, Cell::Bool)
    }
}

impl From<usize> for Cell {
    fn from(i: usize) -> Self {
        Cell::Int(i as i64)
    }
}

impl From<u64> for Cell {
    fn from(i: u64) -> Self {
        Cell::UInt(i)
    }
}

impl From<bool> for Cell {
    fn from(b: bool) -> Self {
        Cell::Bool(b)
    }
}

/// `x` with 17 significant digits in scientific notation.
pub fn format_float(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else if x.is_nan() {
        "NaN".into()
    } else if x > 0.0 {
        "inf".into()
    } else {
        "-inf".into()
    }
}

#[derive(Debug, Clone)]
pub struct Table {
    columns: Vec<(&'static str, ColumnKind)>,
    rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new(columns: &[(&'static str, ColumnKind)]) -> Self {
        Self {
            columns: columns.to_vec(),
            rows: Vec::new(),
        }
    }

    pub fn header(&self) -> Vec<&'static str> {
        self.columns.iter().map(|c| c.0).collect()
    }

    pub fn rows(&self) -> &[Vec<Cell>] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn push(&mut self, row: Vec<Cell>) -> Result<()> {
        if row.len() != self.columns.len() {
            return Err(Error::shape(
                format!("{} cells", self.columns.len()),
                format!("{}", row.len()),
            ));
        }
        for (cell, (name, kind)) in row.iter().zip(&self.columns) {
            if !cell.fits(*kind) {
                return Err(Error::InvalidInput(format!(
                    "column {name} expects {kind:?}, got {cell:?}"
                )));
            }
        }
        self.rows.push(row);
        Ok(())
    }

    /// Re-check every row against the schema.
    pub fn validate(&self) -> Result<()> {
        let mut copy = Table::new(&self.columns);
        for row in &self.rows {
            copy.push(row.clone())?;
        }
        Ok(())
    }

    /// Copy with a constant leading column.
    pub fn prefixed(&self, name: &'static str, kind: ColumnKind, value: Cell) -> Result<Table> {
        let mut columns = vec![(name, kind)];
        columns.extend_from_slice(&self.columns);
        let mut out = Table::new(&columns);
        for row in &self.rows {
            let mut r = Vec::with_capacity(row.len() + 1);
            r.push(value.clone());
            r.extend(row.iter().cloned());
            out.push(r)?;
        }
        Ok(out)
    }

    /// Append the rows of `other`, which must share this table's schema.
    pub fn extend_from(&mut self, other: &Table) -> Result<()> {
        if other.columns != self.columns {
            return Err(Error::shape(
                format!("columns {:?}", self.header()),
                format!("{:?}", other.header()),
            ));
        }
        self.rows.extend(other.rows.iter().cloned());
        Ok(())
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(self.header()).map_err(csv_err)?;
        for row in &self.rows {
            w.write_record(row.iter().map(Cell::render)).map_err(csv_err)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("csv output is utf-8")
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let file = std::fs::File::create(path)?;
        self.write_csv(std::io::BufWriter::new(file))
    }

    /// Rows as JSON objects keyed by column name.
    pub fn to_json_records(&self) -> serde_json::Value {
        let records = self
            .rows
            .iter()
            .map(|row| {
                let obj = row
                    .iter()
                    .zip(&self.columns)
                    .map(|(cell, (name, _))| {
                        let v = match cell {
                            Cell::Text(s) => serde_json::Value::from(s.clone()),
                            Cell::Int(i) => serde_json::Value::from(*i),
                            Cell::UInt(i) => serde_json::Value::from(*i),
                            Cell::Float(x) => serde_json::Value::from(*x),
                            Cell::Bool(b) => serde_json::Value::from(*b),
                            Cell::Empty => serde_json::Value::Null,
                        };
                        (name.to_string(), v)
                    })
                    .collect();
                serde_json::Value::Object(obj)
            })
            .collect();
        serde_json::Value::Array(records)
    }
}

fn csv_err(e: csv::Error) -> Error {
    Error::InvalidInput(format!("csv: {e}"))
}

//! The shared tabular text format.
//!
//! ```text
//! # chaoslab-table v1
//! # kind: mfg_decoupling
//! # meta spec.A: 0.1
//! # column t: time
//! # column eta: adjoint per state
//! t,eta
//! 0,1.5
//! ```
//!
//! Comma-separated, one header row, `#`-prefixed metadata lines. Numbers are
//! written in Rust's shortest round-trip form, so a table written twice from
//! the same values is byte-identical and parses back bit-exactly.

use std::fmt::Write as _;

use crate::error::{Error, Result};

pub const FORMAT_TAG: &str = "chaoslab-table v1";

#[derive(Debug, Clone, PartialEq)]
pub struct Column {
    pub name: String,
    pub unit: String,
}

impl Column {
    pub fn new(name: impl Into<String>, unit: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            unit: unit.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub kind: String,
    pub metadata: Vec<(String, String)>,
    pub columns: Vec<Column>,
    pub rows: Vec<Vec<f64>>,
}

impl Table {
    pub fn new(kind: impl Into<String>, columns: Vec<Column>) -> Self {
        Self {
            kind: kind.into(),
            metadata: Vec::new(),
            columns,
            rows: Vec::new(),
        }
    }

    pub fn meta(&mut self, key: impl Into<String>, value: impl ToString) -> &mut Self {
        self.metadata.push((key.into(), value.to_string()));
        self
    }

    pub fn push_row(&mut self, row: Vec<f64>) {
        assert_eq!(row.len(), self.columns.len(), "row width must match the header");
        self.rows.push(row);
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c.name == name)
    }

    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let j = self.column_index(name)?;
        Some(self.rows.iter().map(|r| r[j]).collect())
    }

    pub fn get_meta(&self, key: &str) -> Option<&str> {
        self.metadata
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        writeln!(out, "# {FORMAT_TAG}").unwrap();
        writeln!(out, "# kind: {}", self.kind).unwrap();
        for (k, v) in &self.metadata {
            writeln!(out, "# meta {}: {}", k, v.replace('\n', " ")).unwrap();
        }
        for c in &self.columns {
            writeln!(out, "# column {}: {}", c.name, c.unit).unwrap();
        }
        let header: Vec<&str> = self.columns.iter().map(|c| c.name.as_str()).collect();
        writeln!(out, "{}", header.join(",")).unwrap();
        for row in &self.rows {
            let cells: Vec<String> = row.iter().map(|v| format!("{v}")).collect();
            writeln!(out, "{}", cells.join(",")).unwrap();
        }
        out
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        match lines.next() {
            Some(l) if l.trim() == format!("# {FORMAT_TAG}") => {}
            other => return Err(Error::Table(format!("missing format tag, found {other:?}"))),
        }
        let mut kind = None;
        let mut metadata = Vec::new();
        let mut units: Vec<(String, String)> = Vec::new();
        let mut header: Option<Vec<String>> = None;
        let mut rows = Vec::new();
        for (lineno, line) in lines.enumerate() {
            if let Some(rest) = line.strip_prefix("# ") {
                if let Some(k) = rest.strip_prefix("kind: ") {
                    kind = Some(k.to_string());
                } else if let Some(m) = rest.strip_prefix("meta ") {
                    let (k, v) = m
                        .split_once(": ")
                        .ok_or_else(|| Error::Table(format!("bad meta line {}", lineno + 2)))?;
                    metadata.push((k.to_string(), v.to_string()));
                } else if let Some(c) = rest.strip_prefix("column ") {
                    let (k, v) = c
                        .split_once(": ")
                        .ok_or_else(|| Error::Table(format!("bad column line {}", lineno + 2)))?;
                    units.push((k.to_string(), v.to_string()));
                }
                continue;
            }
            if line.trim().is_empty() {
                continue;
            }
            match &header {
                None => header = Some(line.split(',').map(str::to_string).collect()),
                Some(h) => {
                    let row = line
                        .split(',')
                        .map(|c| {
                            c.trim()
                                .parse::<f64>()
                                .map_err(|e| Error::Table(format!("line {}: {e}", lineno + 2)))
                        })
                        .collect::<Result<Vec<f64>>>()?;
                    if row.len() != h.len() {
                        return Err(Error::Table(format!("line {}: width mismatch", lineno + 2)));
                    }
                    rows.push(row);
                }
            }
        }
        let header = header.ok_or_else(|| Error::Table("missing header".into()))?;
        let columns = header
            .into_iter()
            .map(|name| {
                let unit = units
                    .iter()
                    .find(|(n, _)| *n == name)
                    .map(|(_, u)| u.clone())
                    .unwrap_or_default();
                Column { name, unit }
            })
            .collect();
        Ok(Self {
            kind: kind.ok_or_else(|| Error::Table("missing kind".into()))?,
            metadata,
            columns,
            rows,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn text_round_trip_is_bit_exact(rows in proptest::collection::vec(proptest::collection::vec(proptest::num::f64::ANY, 3), 0..20)) {
            let mut t = Table::new("demo", vec![Column::new("a", "time"), Column::new("b", "1"), Column::new("c", "state")]);
            t.meta("seed", 42);
            for r in &rows {
                t.push_row(r.clone());
            }
            let back = Table::parse(&t.to_text()).unwrap();
            prop_assert_eq!(back.columns.clone(), t.columns.clone());
            prop_assert_eq!(back.rows.len(), rows.len());
            for (x, y) in back.rows.iter().flatten().zip(rows.iter().flatten()) {
                prop_assert!(x.to_bits() == y.to_bits() || (x.is_nan() && y.is_nan()));
            }
        }
    }

    #[test]
    fn rejects_untagged_text() {
        assert!(Table::parse("a,b\n1,2\n").is_err());
    }
}

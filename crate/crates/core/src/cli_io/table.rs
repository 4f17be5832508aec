//! Numeric result tables written as CSV with unit-labelled columns.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Suffixes a column header may end with to name its unit.
pub const COLUMN_UNITS: &[&str] = &[
    "_nm", "_K", "_s", "_W", "_hz", "_um", "_counts", "_cps", "_per_K", "_frac", "_flag",
    "_ratio", "_mK_per_rtHz", "_index", "_count",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Table {
    pub name: String,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl Table {
    pub fn new(name: &str, columns: &[&str]) -> Self {
        Self {
            name: name.to_string(),
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<f64>) -> Result<()> {
        if row.len() != self.columns.len() {
            return Err(Error::contract(format!(
                "table `{}` has {} columns, row has {}",
                self.name,
                self.columns.len(),
                row.len()
            )));
        }
        self.rows.push(row);
        Ok(())
    }

    pub fn file_name(&self) -> String {
        format!("{}.csv", self.name)
    }

    /// Columns whose header names no unit.
    pub fn unlabelled_columns(&self) -> Vec<&str> {
        self.columns
            .iter()
            .filter(|c| !COLUMN_UNITS.iter().any(|u| c.ends_with(u)))
            .map(String::as_str)
            .collect()
    }

    /// Shortest round-trip formatting, so identical values give identical bytes.
    pub fn to_csv(&self) -> String {
        let mut out = self.columns.join(",");
        out.push('\n');
        for row in &self.rows {
            for (i, v) in row.iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                let _ = write!(out, "{v}");
            }
            out.push('\n');
        }
        out
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        let bad = self.unlabelled_columns();
        if !bad.is_empty() {
            return Err(Error::contract(format!(
                "table `{}` has columns without units: {}",
                self.name,
                bad.join(", ")
            )));
        }
        std::fs::write(dir.join(self.file_name()), self.to_csv())?;
        Ok(())
    }

    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let k = self.columns.iter().position(|c| c == name)?;
        Some(self.rows.iter().map(|r| r[k]).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_layout() {
        let mut t = Table::new("demo", &["time_s", "sigma_T_K"]);
        t.push(vec![0.5, 0.1]).unwrap();
        t.push(vec![1.0, 1.0 / 3.0]).unwrap();
        assert_eq!(t.to_csv(), "time_s,sigma_T_K\n0.5,0.1\n1,0.3333333333333333\n");
        assert!(t.push(vec![1.0]).is_err());
        assert_eq!(t.column("time_s").unwrap(), vec![0.5, 1.0]);
    }

    #[test]
    fn unlabelled_columns_detected() {
        let t = Table::new("demo", &["time_s", "sigma", "count_counts"]);
        assert_eq!(t.unlabelled_columns(), vec!["sigma"]);
        let dir = tempfile::tempdir().unwrap();
        assert!(t.write(dir.path()).is_err());
    }
}

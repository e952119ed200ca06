use std::fmt::Write as _;

use crate::metrics::SlopeFit;
use crate::table::{Column, Table};

/// A pass/fail property evaluated by a study.
#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    pub fn new(name: impl Into<String>, passed: bool, detail: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            passed,
            detail: detail.into(),
        }
    }
}

/// A named log-log fit.
#[derive(Debug, Clone, PartialEq)]
pub struct NamedSlope {
    pub name: String,
    pub fit: SlopeFit,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StudyReport {
    pub study: String,
    pub tables: Vec<Table>,
    pub slopes: Vec<NamedSlope>,
    pub checks: Vec<Check>,
    pub notes: Vec<String>,
    /// `(key, value)` pairs sufficient to reproduce the study.
    pub provenance: Vec<(String, String)>,
}

impl StudyReport {
    pub fn new(study: impl Into<String>) -> Self {
        Self {
            study: study.into(),
            tables: Vec::new(),
            slopes: Vec::new(),
            checks: Vec::new(),
            notes: Vec::new(),
            provenance: Vec::new(),
        }
    }

    pub fn table(&self, kind: &str) -> Option<&Table> {
        self.tables.iter().find(|t| t.kind == kind)
    }

    pub fn slope(&self, name: &str) -> Option<&SlopeFit> {
        self.slopes.iter().find(|s| s.name == name).map(|s| &s.fit)
    }

    pub fn check(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }

    pub fn all_checks_pass(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub(crate) fn push_slope(&mut self, name: impl Into<String>, fit: SlopeFit) {
        self.slopes.push(NamedSlope { name: name.into(), fit });
    }

    pub(crate) fn push_check(&mut self, name: impl Into<String>, passed: bool, detail: impl Into<String>) {
        self.checks.push(Check::new(name, passed, detail));
    }

    /// The slope fits as a table, one row per fit in order; fit names are in the metadata.
    pub fn slope_table(&self) -> Table {
        let mut t = Table::new(
            "slopes",
            vec![
                Column::new("fit", "index"),
                Column::new("slope", "log value per log N"),
                Column::new("slope_hw95", "95% half-width"),
                Column::new("intercept", "log value"),
                Column::new("r_squared", "1"),
                Column::new("max_abs_residual", "log value"),
                Column::new("smallest_n_residual", "log value"),
            ],
        );
        t.meta("study", &self.study);
        for (i, s) in self.slopes.iter().enumerate() {
            t.meta(format!("fit.{i}"), &s.name);
            let max_res = s.fit.residuals.iter().fold(0.0f64, |m, r| m.max(r.abs()));
            t.push_row(vec![
                i as f64,
                s.fit.slope,
                s.fit.slope_half_width,
                s.fit.intercept,
                s.fit.r_squared,
                max_res,
                s.fit.residuals.first().copied().unwrap_or(f64::NAN),
            ]);
        }
        t
    }

    /// Human-readable summary.
    pub fn summary(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "study: {}", self.study);
        for (k, v) in &self.provenance {
            let _ = writeln!(s, "  {k}: {v}");
        }
        if !self.slopes.is_empty() {
            let _ = writeln!(s, "slopes:");
            for f in &self.slopes {
                let _ = writeln!(
                    s,
                    "  {:<32} slope {:+.4} ± {:.4}  R² {:.4}",
                    f.name, f.fit.slope, f.fit.slope_half_width, f.fit.r_squared
                );
            }
        }
        if !self.checks.is_empty() {
            let _ = writeln!(s, "checks:");
            for c in &self.checks {
                let _ = writeln!(s, "  [{}] {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
            }
        }
        if !self.notes.is_empty() {
            let _ = writeln!(s, "notes:");
            for n in &self.notes {
                let _ = writeln!(s, "  - {n}");
            }
        }
        s
    }
}

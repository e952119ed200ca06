use crate::error::{Error, Result};
use crate::experiments::config::{StudyConfig, StudyKind};
use crate::experiments::report::StudyReport;
use crate::metrics::{loglog_slope, theoretical_rate, RateQuery, SlopeFit};
use crate::stats::MeanEstimate;
use crate::table::{Column, Table};

/// Moments at or below this are treated as numerically zero.
pub(crate) const MOMENT_FLOOR: f64 = 1e-20;

/// `r_{N,m1,k} + r_{N,m2,k}`.
pub(crate) fn rate_sum(n: usize, m1: f64, m2: f64, k: f64) -> Result<f64> {
    let nf = n as f64;
    Ok(theoretical_rate(&RateQuery::with_default_power(nf, m1, k))? + theoretical_rate(&RateQuery::with_default_power(nf, m2, k))?)
}

pub(crate) fn guard_ci(n: usize, est: &MeanEstimate, limit: f64) -> Result<()> {
    if est.mean > MOMENT_FLOOR && est.half_width > limit * est.mean {
        return Err(Error::InsufficientReplications {
            n,
            estimate: est.mean,
            half_width: est.half_width,
        });
    }
    Ok(())
}

pub(crate) fn new_report(kind: StudyKind, cfg: &StudyConfig) -> StudyReport {
    let mut r = StudyReport::new(kind.name());
    r.provenance = vec![
        ("study".into(), kind.name().into()),
        ("config_sha256".into(), cfg.fingerprint()),
        ("seed".into(), cfg.seed.to_string()),
        ("bundle".into(), cfg.bundle.clone()),
        ("replications".into(), cfg.replications.to_string()),
        ("n_steps".into(), cfg.n_steps.to_string()),
        ("solver".into(), format!("chaoslab-core {}", crate::VERSION)),
    ];
    r
}

/// Adds the slope table and returns the finished report.
pub(crate) fn finish(mut r: StudyReport) -> StudyReport {
    if !r.slopes.is_empty() {
        let t = r.slope_table();
        r.tables.push(t);
    }
    r
}

/// Per-`N` moments at each evaluation time.
pub(crate) struct MomentRows {
    pub label: String,
    pub unit: String,
    pub times: Vec<f64>,
    pub n_list: Vec<usize>,
    /// `rows[n_index][time_index]`
    pub rows: Vec<Vec<MeanEstimate>>,
}

impl MomentRows {
    pub fn at(&self, ni: usize, ti: usize) -> &MeanEstimate {
        &self.rows[ni][ti]
    }

    pub fn column_name(&self, ti: usize) -> String {
        format!("{}_t{}", self.label, ti)
    }

    /// The moment table with its CI columns and the given overlay columns.
    pub fn table(&self, kind: &str, overlays: &[(String, Vec<f64>)]) -> Table {
        let mut cols = vec![Column::new("N", "players")];
        for ti in 0..self.times.len() {
            cols.push(Column::new(self.column_name(ti), self.unit.clone()));
            cols.push(Column::new(format!("{}_hw95", self.column_name(ti)), "95% half-width"));
        }
        for (name, _) in overlays {
            cols.push(Column::new(name.clone(), "rate, unit constant"));
        }
        let mut t = Table::new(kind, cols);
        for (ti, time) in self.times.iter().enumerate() {
            t.meta(format!("t{ti}"), time);
        }
        for (ni, n) in self.n_list.iter().enumerate() {
            let mut row = vec![*n as f64];
            for ti in 0..self.times.len() {
                let e = self.at(ni, ti);
                row.push(e.mean);
                row.push(e.half_width);
            }
            for (_, v) in overlays {
                row.push(v[ni]);
            }
            t.push_row(row);
        }
        t
    }

    /// Fits a slope per evaluation time; moments at the floor are noted, not fitted.
    pub fn fit(&self, report: &mut StudyReport) -> Vec<Option<SlopeFit>> {
        let mut fits = Vec::new();
        for (ti, time) in self.times.iter().enumerate() {
            let points: Vec<(f64, f64)> = self.n_list.iter().enumerate().map(|(ni, n)| (*n as f64, self.at(ni, ti).mean)).collect();
            let hw: Vec<f64> = (0..self.n_list.len()).map(|ni| self.at(ni, ti).half_width).collect();
            let name = format!("{} t={}", self.label, time);
            if points.iter().all(|(_, v)| *v <= MOMENT_FLOOR) {
                report.notes.push(format!("{name}: every moment is at the numerical floor; no slope fitted"));
                fits.push(None);
                continue;
            }
            match loglog_slope(&points, Some(&hw)) {
                Ok(f) => {
                    report.push_slope(name, f.clone());
                    fits.push(Some(f));
                }
                Err(e) => {
                    report.notes.push(format!("{name}: {e}"));
                    fits.push(None);
                }
            }
        }
        fits
    }

    pub fn guard(&self, limit: f64) -> Result<()> {
        for (ni, n) in self.n_list.iter().enumerate() {
            for e in &self.rows[ni] {
                guard_ci(*n, e, limit)?;
            }
        }
        Ok(())
    }

    /// Largest moment over all cells.
    pub fn max_moment(&self) -> f64 {
        self.rows.iter().flatten().fold(0.0, |m, e| m.max(e.mean))
    }
}

/// Overlay column `r_{N,m1,k} + r_{N,m2,k}` over the N list.
pub(crate) fn overlay(n_list: &[usize], m1: f64, m2: f64, k: f64) -> Result<(String, Vec<f64>)> {
    let name = format!("r_N{}_k{} + r_N{}_k{}", m1, k, m2, k);
    let v = n_list.iter().map(|n| rate_sum(*n, m1, m2, k)).collect::<Result<Vec<_>>>()?;
    Ok((name, v))
}

pub(crate) fn inverse_n(n_list: &[usize]) -> (String, Vec<f64>) {
    ("N^-1".into(), n_list.iter().map(|n| 1.0 / *n as f64).collect())
}

/// `last` lies below `first` with disjoint 95% intervals.
pub(crate) fn ci_below(last: &MeanEstimate, first: &MeanEstimate) -> bool {
    last.upper() < first.lower()
}

/// Means of per-replication samples, `samples[rep][cell]`, cell by cell.
pub(crate) fn estimates(samples: &[Vec<f64>], cells: usize) -> Vec<MeanEstimate> {
    (0..cells)
        .map(|c| {
            let col: Vec<f64> = samples.iter().map(|s| s[c]).collect();
            MeanEstimate::from_samples(&col)
        })
        .collect()
}

/// Relative least-squares fit of `value ≈ c1/N + c2/N²`. Returns `(c1, c2)`.
pub(crate) fn two_term_fit(n_list: &[usize], values: &[f64]) -> (f64, f64) {
    let (mut saa, mut sab, mut sbb, mut sa, mut sb) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for (n, g) in n_list.iter().zip(values) {
        let u = 1.0 / *n as f64;
        let (a, b) = (u / g, u * u / g);
        saa += a * a;
        sab += a * b;
        sbb += b * b;
        sa += a;
        sb += b;
    }
    let det = saa * sbb - sab * sab;
    ((sa * sbb - sb * sab) / det, (saa * sb - sab * sa) / det)
}

/// Descriptive decomposition `c1/N + c2/N²` of each moment column, with the
/// local slope between the two largest `N`.
pub(crate) fn two_term_table(rows: &MomentRows) -> Table {
    let mut t = Table::new(
        format!("{}_two_term", rows.label),
        vec![
            Column::new("time_index", "index"),
            Column::new("c1", "moment times N"),
            Column::new("c2", "moment times N^2"),
            Column::new("crossover_n", "players"),
            Column::new("local_slope", "log value per log N"),
        ],
    );
    t.meta("model", "c1/N + c2/N^2, relative least squares; descriptive");
    let last = rows.n_list.len() - 1;
    for ti in 0..rows.times.len() {
        let v: Vec<f64> = (0..rows.n_list.len()).map(|ni| rows.at(ni, ti).mean).collect();
        let (c1, c2) = two_term_fit(&rows.n_list, &v);
        let local = (v[last] / v[last - 1]).ln() / (rows.n_list[last] as f64 / rows.n_list[last - 1] as f64).ln();
        t.push_row(vec![ti as f64, c1, c2, c2 / c1, local]);
    }
    t
}

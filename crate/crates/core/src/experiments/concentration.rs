//! Concentration of the empirical law of the equilibrium controls.

use rayon::prelude::*;

use crate::chaos::LAW_REPLICATION;
use crate::error::{Error, Result};
use crate::experiments::common::{estimates, finish, inverse_n, new_report, overlay, MomentRows};
use crate::experiments::config::{StudyConfig, StudyKind};
use crate::experiments::coupled::{limit_controls, LqCoupling};
use crate::experiments::report::StudyReport;
use crate::grid::TimeGrid;
use crate::lq::{solve_mkv_lq, solve_nplayer_lq_symmetric, MfgDecoupling};
use crate::metrics::{empirical_tail, wasserstein2_sorted, wasserstein2_to_gaussian, TailEstimate};
use crate::stats::mean;
use crate::table::{Column, Table};

/// Mean and standard deviation of the limit control at `nodes` under the Euler
/// scheme of the limit copies (which is exactly Gaussian for a Gaussian start).
fn limit_gaussian(limit: &MfgDecoupling, grid: &TimeGrid, nodes: &[usize]) -> Vec<(f64, f64)> {
    let s = &limit.spec;
    let dt = grid.dt();
    let [cx, cy, cm, cn] = limit.control;
    let (mut m, mut v) = (s.mu0_mean, s.mu0_std * s.mu0_std);
    let mut at = Vec::with_capacity(grid.n_nodes());
    for k in 0..grid.n_nodes() {
        let own = cx + cy * limit.eta[k];
        let mean_gain = cx + cm + (cy + cn) * limit.pi[k];
        at.push((mean_gain * m, own.abs() * v.sqrt()));
        let g = 1.0 + dt * (s.a + s.b * own);
        m += dt * ((s.a + s.a_bar) * m + (s.b + s.b_bar) * mean_gain * m);
        v = g * g * v + s.sigma * s.sigma * dt;
    }
    nodes.iter().map(|k| at[*k]).collect()
}

/// Least-squares fit of `min(1, C/(a²N²) + exp(-K N a²))` to tail estimates by
/// grid search over `ln C ∈ [-10, 10]` and `log10 K ∈ [-2, 4]`. Returns `(ln C, K, rss)`.
pub(crate) fn fit_tail_shape(cells: &[(f64, f64, f64)]) -> (f64, f64, f64) {
    let mut best = (f64::NAN, f64::NAN, f64::INFINITY);
    for ks in 0..=600 {
        let k = 10f64.powf(-2.0 + ks as f64 / 100.0);
        for cs in 0..=400 {
            let ln_c = -10.0 + cs as f64 / 20.0;
            let c = ln_c.exp();
            let rss: f64 = cells
                .iter()
                .map(|&(n, a, p)| {
                    let model = (c / (a * a * n * n) + (-k * n * a * a).exp()).min(1.0);
                    (p - model) * (p - model)
                })
                .sum();
            if rss < best.2 {
                best = (ln_c, k, rss);
            }
        }
    }
    best
}

/// Per-replication statistics at one evaluation node.
#[derive(Clone, Copy, Default)]
struct NodeStats {
    w2: f64,
    w2_gauss: f64,
    first: f64,
    normalized_sum: f64,
}

pub fn concentration_study(cfg: &StudyConfig) -> Result<StudyReport> {
    cfg.validate(StudyKind::Concentration)?;
    if cfg.bundle != "lq" {
        return Err(Error::InvalidConfig(format!("the concentration study runs on the lq bundle, not `{}`", cfg.bundle)));
    }
    let spec = cfg.spec;
    let grid = cfg.grid()?;
    let times = cfg.times();
    let nodes = cfg.eval_nodes(&grid);
    let mut report = new_report(StudyKind::Concentration, cfg);
    if !spec.is_dirac() {
        report.notes.push("initial law is not a Dirac mass, so the tail bound's hypothesis does not hold".into());
    }
    let limit = solve_mkv_lq(&spec, &grid)?;
    let mut reference = limit_controls(&limit, &grid, cfg.reference_samples, cfg.seed, LAW_REPLICATION, &nodes);
    reference.par_iter_mut().for_each(|r| r.sort_by(f64::total_cmp));
    let gauss = limit_gaussian(&limit, &grid, &nodes);
    report.provenance.push(("reference_samples".into(), cfg.reference_samples.to_string()));

    let nt = nodes.len();
    let mut per_n: Vec<Vec<Vec<NodeStats>>> = Vec::new();
    for &n in &cfg.n_list {
        let np = solve_nplayer_lq_symmetric(&spec, n, &grid)?;
        let coupling = LqCoupling::new(&np, &limit, &grid)?;
        let samples = (0..cfg.replications)
            .into_par_iter()
            .map(|rep| {
                let mut out = vec![NodeStats::default(); nt];
                let mut err = None;
                coupling.run(n, cfg.seed, rep, |snap| {
                    for (ti, node) in nodes.iter().enumerate() {
                        if *node != snap.k {
                            continue;
                        }
                        let mut sorted = snap.alpha.to_vec();
                        sorted.sort_by(f64::total_cmp);
                        let (gm, gs) = gauss[ti];
                        match wasserstein2_to_gaussian(&sorted, gm, gs) {
                            Ok(w) => out[ti].w2_gauss = w,
                            Err(e) => err = Some(e),
                        }
                        out[ti].w2 = wasserstein2_sorted(&sorted, &reference[ti]);
                        out[ti].first = snap.alpha[0];
                        out[ti].normalized_sum = snap.alpha.iter().sum::<f64>() / (n as f64).sqrt();
                    }
                });
                err.map_or(Ok(out), Err)
            })
            .collect::<Result<Vec<_>>>()?;
        per_n.push(samples);
    }

    let column = |ni: usize, ti: usize, f: fn(&NodeStats) -> f64| -> Vec<f64> { per_n[ni].iter().map(|s| f(&s[ti])).collect() };
    let moments = |label: &str, f: fn(&NodeStats) -> f64| MomentRows {
        label: label.into(),
        unit: "control".into(),
        times: times.clone(),
        n_list: cfg.n_list.clone(),
        rows: (0..cfg.n_list.len())
            .map(|ni| {
                let s: Vec<Vec<f64>> = (0..nt).map(|ti| column(ni, ti, f)).collect();
                let by_rep: Vec<Vec<f64>> = (0..cfg.replications).map(|r| s.iter().map(|c| c[r]).collect()).collect();
                estimates(&by_rep, nt)
            })
            .collect(),
    };
    let w2 = moments("w2", |s| s.w2);
    let w2g = moments("w2_gaussian", |s| s.w2_gauss);
    let overlays = vec![overlay(&cfg.n_list, 2.0, 1.0, cfg.moment_k)?, inverse_n(&cfg.n_list)];
    let mut t = w2.table("w2", &overlays);
    t.meta("reference", format!("{} limit copies", cfg.reference_samples));
    let gt = w2g.table("w2_gaussian", &[]);
    report.tables.push(t);
    report.tables.push(gt);
    w2.guard(cfg.ci_limit)?;
    let fits = w2.fit(&mut report);
    for (ti, time) in times.iter().enumerate() {
        if let Some(f) = &fits[ti] {
            report.push_check(
                format!("w2_slope t={time}"),
                f.slope <= -0.4,
                format!("slope of E W2 {:+.4} (limit -0.4)", f.slope),
            );
        }
    }

    let mut tails = Table::new(
        "tails",
        vec![
            Column::new("N", "players"),
            Column::new("time_index", "index"),
            Column::new("threshold", "control"),
            Column::new("exceed", "count"),
            Column::new("count", "replications"),
            Column::new("tail", "probability"),
            Column::new("tail_lower", "Wilson 95%"),
            Column::new("tail_upper", "Wilson 95%"),
            Column::new("dev_first", "probability"),
            Column::new("dev_first_lower", "Wilson 95%"),
            Column::new("dev_first_upper", "Wilson 95%"),
            Column::new("dev_sum", "probability"),
            Column::new("dev_sum_lower", "Wilson 95%"),
            Column::new("dev_sum_upper", "Wilson 95%"),
        ],
    );
    for (ti, time) in times.iter().enumerate() {
        tails.meta(format!("t{ti}"), time);
    }
    tails.meta("dev_first", "P(h - E h >= a) for h = first control");
    tails.meta("dev_sum", "P(h - E h >= a) for h = sum of controls / sqrt(N)");
    let mut by_cell: Vec<Vec<Vec<TailEstimate>>> = Vec::new();
    for (ni, n) in cfg.n_list.iter().enumerate() {
        let mut per_t = Vec::new();
        for ti in 0..nt {
            let w = column(ni, ti, |s| s.w2);
            let dev = |f: fn(&NodeStats) -> f64| {
                let h = column(ni, ti, f);
                let m = mean(&h);
                h.into_iter().map(|v| v - m).collect::<Vec<f64>>()
            };
            let (d1, d2) = (dev(|s| s.first), dev(|s| s.normalized_sum));
            let mut per_a = Vec::new();
            for &a in &cfg.thresholds {
                let tw = empirical_tail(&w, a)?;
                let t1 = empirical_tail(&d1, a)?;
                let t2 = empirical_tail(&d2, a)?;
                tails.push_row(vec![
                    *n as f64,
                    ti as f64,
                    a,
                    tw.exceed as f64,
                    tw.count as f64,
                    tw.estimate,
                    tw.lower,
                    tw.upper,
                    t1.estimate,
                    t1.lower,
                    t1.upper,
                    t2.estimate,
                    t2.lower,
                    t2.upper,
                ]);
                per_a.push(tw);
            }
            per_t.push(per_a);
        }
        by_cell.push(per_t);
    }
    report.tables.push(tails);

    let last = cfg.n_list.len() - 1;
    let mut shape = Table::new(
        "tail_shape",
        vec![
            Column::new("time_index", "index"),
            Column::new("ln_c", "descriptive"),
            Column::new("k", "descriptive"),
            Column::new("rss", "probability²"),
        ],
    );
    shape.meta("model", "min(1, C/(a^2 N^2) + exp(-K N a^2)), least squares on tail estimates");
    for (ti, time) in times.iter().enumerate() {
        for (ai, a) in cfg.thresholds.iter().enumerate() {
            let (lo, hi) = (&by_cell[0][ti][ai], &by_cell[last][ti][ai]);
            report.push_check(
                format!("tail a={a} t={time}"),
                hi.separated_below(lo),
                format!(
                    "N = {}: {:.3} [{:.3}, {:.3}]; N = {}: {:.3} [{:.3}, {:.3}]",
                    cfg.n_list[0], lo.estimate, lo.lower, lo.upper, cfg.n_list[last], hi.estimate, hi.lower, hi.upper
                ),
            );
        }
        let cells: Vec<(f64, f64, f64)> = cfg
            .n_list
            .iter()
            .enumerate()
            .flat_map(|(ni, n)| by_cell[ni][ti].iter().map(move |t| (*n as f64, t.threshold, t.estimate)))
            .collect();
        let (ln_c, k, rss) = fit_tail_shape(&cells);
        shape.push_row(vec![ti as f64, ln_c, k, rss]);
    }
    report.tables.push(shape);
    report.notes.push("tail shape constants are descriptive fits, not estimates of the bound's constants".into());
    Ok(finish(report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lq::LqSpec;

    #[test]
    fn gaussian_moments_match_the_copies() {
        let spec = LqSpec::default().with_horizon(0.5);
        let grid = TimeGrid::new(0.5, 25).unwrap();
        let limit = solve_mkv_lq(&spec, &grid).unwrap();
        let copies = limit_controls(&limit, &grid, 40_000, 3, 0, &[25]);
        let (m, s) = limit_gaussian(&limit, &grid, &[25])[0];
        let sm = mean(&copies[0]);
        let ss = crate::stats::variance(&copies[0]).sqrt();
        assert!((sm - m).abs() < 4.0 * s / 200.0, "{sm} vs {m}");
        assert!((ss / s - 1.0).abs() < 0.02, "{ss} vs {s}");
    }

    #[test]
    fn shape_fit_recovers_planted_constants() {
        let mut cells = Vec::new();
        for n in [16.0f64, 64.0, 256.0] {
            for a in [0.05f64, 0.1, 0.2] {
                let p: f64 = (2.0 / (a * a * n * n) + (-3.0 * n * a * a).exp()).min(1.0);
                cells.push((n, a, p));
            }
        }
        let (ln_c, k, rss) = fit_tail_shape(&cells);
        assert!(rss < 1e-4, "rss {rss}");
        assert!((k / 3.0 - 1.0).abs() < 0.05, "K {k}");
        assert!((ln_c - 2f64.ln()).abs() < 0.2, "ln C {ln_c}");
    }
}

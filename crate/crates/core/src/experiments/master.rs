//! Finite-dimensional projections of the master equation against its limit.

use rayon::prelude::*;

use crate::chaos::{bundle_by_name, solve_mkv_fbsde, solve_particles, CoefficientBundle, LawSource, SolveStart};
use crate::error::Result;
use crate::experiments::common::{ci_below, estimates, finish, inverse_n, new_report, overlay, MomentRows, MOMENT_FLOOR};
use crate::experiments::config::{StudyConfig, StudyKind};
use crate::experiments::report::StudyReport;
use crate::lq::solve_mkv_lq;
use crate::rng::{normals, StreamKey};
use crate::stats::mean;
use crate::table::{Column, Table};

/// Initial positions `χ^i` of replication `rep`, drawn from the bundle's initial law.
fn draws(bundle_initial: &dyn Fn(&[f64], &mut [f64]), n: usize, dim: usize, seed: u64, rep: usize) -> Vec<f64> {
    let mut out = vec![0.0; n * dim];
    for i in 0..n {
        let z = normals(StreamKey::new(seed, rep, i), dim);
        bundle_initial(&z, &mut out[i * dim..(i + 1) * dim]);
    }
    out
}

/// LQ closed form. Both value functions are affine:
/// `v^{1,N}(t, χ) = η χ¹ + (π − η) mean(χ)` and `V(t, x, μ) = η x + (π − η) mean(μ)`.
fn lq_master(cfg: &StudyConfig, report: &mut StudyReport) -> Result<(MomentRows, MomentRows)> {
    let spec = cfg.spec;
    let grid = cfg.grid()?;
    let times = cfg.times();
    let nodes = cfg.eval_nodes(&grid);
    let limit = solve_mkv_lq(&spec, &grid)?;
    let initial = |z: &[f64], out: &mut [f64]| out[0] = spec.mu0_mean + spec.mu0_std * z[0];
    let nt = nodes.len();
    let mut gap_rows = Vec::new();
    let mut emp_rows = Vec::new();
    let mut exact = Vec::new();
    for &n in &cfg.n_list {
        let samples: Vec<Vec<f64>> = (0..cfg.replications)
            .into_par_iter()
            .map(|rep| {
                let chi = draws(&initial, n, 1, cfg.seed, rep);
                let chi_mean = mean(&chi);
                let mut out = vec![0.0; 2 * nt];
                for (ti, &k) in nodes.iter().enumerate() {
                    let v_n = limit.value(k, chi[0], chi_mean);
                    let v = limit.value(k, chi[0], spec.mu0_mean);
                    out[ti] = (v_n - v) * (v_n - v);
                    let v_emp = limit.eta[k] * chi[0] + (limit.pi[k] - limit.eta[k]) * chi_mean;
                    out[nt + ti] = (v_n - v_emp) * (v_n - v_emp);
                }
                out
            })
            .collect();
        let est = estimates(&samples, 2 * nt);
        gap_rows.push(est[..nt].to_vec());
        emp_rows.push(est[nt..].to_vec());
        exact.push(
            nodes
                .iter()
                .map(|&k| (limit.pi[k] - limit.eta[k]).powi(2) * spec.mu0_std * spec.mu0_std / n as f64)
                .collect::<Vec<f64>>(),
        );
    }
    report.notes.push(
        "linear-quadratic case: the N-particle value is affine in (own state, empirical mean) with the limit's coefficients, so the empirical-measure variant vanishes identically".into(),
    );
    let mut cols = vec![Column::new("N", "players")];
    cols.extend((0..nt).map(|ti| Column::new(format!("exact_t{ti}"), "squared adjoint")));
    let mut t = Table::new("master_exact", cols);
    for (ti, time) in times.iter().enumerate() {
        t.meta(format!("t{ti}"), time);
    }
    for (ni, n) in cfg.n_list.iter().enumerate() {
        let mut row = vec![*n as f64];
        row.extend(&exact[ni]);
        t.push_row(row);
    }
    t.meta("formula", "(pi - eta)^2 var(mu) / N");
    report.tables.push(t);
    let rows = |label: &str, r: Vec<Vec<_>>| MomentRows {
        label: label.into(),
        unit: "squared adjoint".into(),
        times: times.clone(),
        n_list: cfg.n_list.clone(),
        rows: r,
    };
    Ok((rows("master_gap", gap_rows), rows("empirical_variant", emp_rows)))
}

/// Particle path: `v^{1,N}(0, χ)` is `Y^1_0` of the `N`-particle system started
/// at the draws, `V(0, χ¹, μ)` the decoupling field of the McKean–Vlasov solution.
fn picard_master(cfg: &StudyConfig, bundle: &dyn CoefficientBundle, report: &mut StudyReport) -> Result<MomentRows> {
    let grid = cfg.grid()?;
    if cfg.times().iter().any(|t| *t != 0.0) {
        report.notes.push("particle path evaluates at t = 0 only".into());
    }
    let mkv = solve_mkv_fbsde(bundle, cfg.law_particles, &grid, &cfg.picard, &cfg.flow, cfg.seed)?;
    let dims = bundle.dims();
    let initial = |z: &[f64], out: &mut [f64]| bundle.initial(z, out);
    let mut rows = Vec::new();
    for &n in &cfg.n_list {
        let samples = (0..cfg.replications)
            .into_par_iter()
            .map(|rep| {
                let chi = draws(&initial, n, dims.state, cfg.seed, rep);
                let start = SolveStart {
                    initial_states: Some(&chi),
                    warm_fields: None,
                };
                let cloud = solve_particles(bundle, n, &grid, &cfg.picard, cfg.seed, rep, LawSource::Empirical, start)?;
                let v = mkv.y_field(0, &chi[..dims.state]);
                let d: f64 = (0..dims.adjoint).map(|c| (cloud.y_of(0, 0, c) - v[c]).powi(2)).sum();
                Ok(vec![d])
            })
            .collect::<Result<Vec<_>>>()?;
        rows.push(estimates(&samples, 1));
    }
    Ok(MomentRows {
        label: "master_gap".into(),
        unit: "squared adjoint".into(),
        times: vec![0.0],
        n_list: cfg.n_list.clone(),
        rows,
    })
}

pub fn master_gap_study(cfg: &StudyConfig) -> Result<StudyReport> {
    cfg.validate(StudyKind::MasterGap)?;
    let mut report = new_report(StudyKind::MasterGap, cfg);
    let (gap, empirical) = if cfg.bundle == "lq" {
        let (g, e) = lq_master(cfg, &mut report)?;
        (g, Some(e))
    } else {
        let bundle = bundle_by_name(&cfg.bundle, &cfg.spec, &cfg.price_impact)?;
        (picard_master(cfg, bundle.as_ref(), &mut report)?, None)
    };
    let overlays = vec![overlay(&cfg.n_list, 2.0, 1.0, cfg.moment_k)?, inverse_n(&cfg.n_list)];
    report.tables.push(gap.table("master_gap", &overlays));
    if let Some(e) = &empirical {
        report.tables.push(e.table("empirical_variant", &[]));
    }
    if gap.max_moment() <= MOMENT_FLOOR {
        report.notes.push("the value functions coincide: the gap is at the Monte Carlo floor".into());
        report.push_check("gap_at_floor", true, format!("largest moment {:e}", gap.max_moment()));
        return Ok(finish(report));
    }
    gap.guard(cfg.ci_limit)?;
    gap.fit(&mut report);
    let last = cfg.n_list.len() - 1;
    for (ti, time) in gap.times.iter().enumerate() {
        let (first, end) = (gap.at(0, ti), gap.at(last, ti));
        let ratio = end.mean / first.mean;
        report.push_check(
            format!("quarter t={time}"),
            ratio <= 0.25 && ci_below(end, first),
            format!(
                "N = {}: {:.4e} ± {:.1e}; N = {}: {:.4e} ± {:.1e}; ratio {:.4} (limit 0.25, CI-separated)",
                cfg.n_list[0], first.mean, first.half_width, cfg.n_list[last], end.mean, end.half_width, ratio
            ),
        );
    }
    Ok(finish(report))
}

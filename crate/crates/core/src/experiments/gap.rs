//! Gaps between `N`-player equilibrium controls and their mean-field limits.

use rayon::prelude::*;

use crate::chaos::{bundle_by_name, solve_mkv_fbsde, solve_particle_fbsde_rep, CoefficientBundle, ParticleCloud};
use crate::error::Result;
use crate::experiments::common::{ci_below, estimates, finish, inverse_n, new_report, overlay, two_term_table, MomentRows};
use crate::experiments::config::{StudyConfig, StudyKind};
use crate::experiments::coupled::LqCoupling;
use crate::experiments::offdiag::symmetric_offdiag_max;
use crate::experiments::report::StudyReport;
use crate::grid::TimeGrid;
use crate::lq::{
    coefficient_identity_violation, price_impact_spec, solve_cooperative_lq, solve_mkv_lq, solve_nplayer_lq_symmetric,
    solve_nplayer_social_lq, LqSpec,
};
use crate::rng::{normals, StreamKey};
use crate::stats::mean;
use crate::table::{Column, Table};

/// Which equilibrium notion the LQ gap compares.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Pairing {
    /// Nash equilibrium against the mean field game.
    Nash,
    /// Social optimum against the McKean–Vlasov control problem.
    Social,
}

/// Moments `E mean_i |alpha^i - alpha~^i|²` of the coupled LQ systems.
pub(crate) fn lq_gap_moments(cfg: &StudyConfig, spec: &LqSpec, grid: &TimeGrid, pairing: Pairing, noise_substeps: usize) -> Result<MomentRows> {
    let times = cfg.times();
    let nodes: Vec<usize> = times.iter().map(|t| grid.nearest_node(*t)).collect();
    let limit = match pairing {
        Pairing::Nash => solve_mkv_lq(spec, grid)?,
        Pairing::Social => solve_cooperative_lq(spec, grid)?,
    };
    let mut rows = Vec::with_capacity(cfg.n_list.len());
    for &n in &cfg.n_list {
        let np = match pairing {
            Pairing::Nash => solve_nplayer_lq_symmetric(spec, n, grid)?,
            Pairing::Social => solve_nplayer_social_lq(spec, n, grid)?,
        };
        let coupling = LqCoupling::new(&np, &limit, grid)?.with_noise_substeps(noise_substeps);
        let samples: Vec<Vec<f64>> = (0..cfg.replications)
            .into_par_iter()
            .map(|rep| {
                let mut out = vec![0.0; nodes.len()];
                coupling.run(n, cfg.seed, rep, |snap| {
                    for (ti, node) in nodes.iter().enumerate() {
                        if *node == snap.k {
                            let sq: Vec<f64> = snap.alpha.iter().zip(snap.alpha_tilde).map(|(a, b)| (a - b) * (a - b)).collect();
                            out[ti] = mean(&sq);
                        }
                    }
                });
                out
            })
            .collect();
        rows.push(estimates(&samples, nodes.len()));
    }
    Ok(MomentRows {
        label: "gap".into(),
        unit: "squared control".into(),
        times,
        n_list: cfg.n_list.clone(),
        rows,
    })
}

/// Relative change of every moment when the step is halved, on shared Brownian paths.
fn refinement_table(cfg: &StudyConfig, spec: &LqSpec, grid: &TimeGrid, pairing: Pairing, report: &mut StudyReport) -> Result<()> {
    let coarse = lq_gap_moments(cfg, spec, grid, pairing, 2)?;
    let fine = lq_gap_moments(cfg, spec, &grid.refined(), pairing, 1)?;
    let mut cols = vec![Column::new("N", "players")];
    for ti in 0..coarse.times.len() {
        cols.push(Column::new(format!("rel_change_t{ti}"), "1"));
    }
    let mut t = Table::new("refinement", cols);
    let mut worst: f64 = 0.0;
    for (ni, n) in cfg.n_list.iter().enumerate() {
        let mut row = vec![*n as f64];
        for ti in 0..coarse.times.len() {
            let (c, f) = (coarse.at(ni, ti).mean, fine.at(ni, ti).mean);
            let rel = if c > 0.0 { (f - c).abs() / c } else { 0.0 };
            worst = worst.max(rel);
            row.push(rel);
        }
        t.push_row(row);
    }
    report.tables.push(t);
    report.push_check("grid_refinement", worst < 0.1, format!("largest relative change on the halved step {worst:.4} (limit 0.1)"));
    Ok(())
}

/// Floor report for a spec without interaction: the moments on the step and on
/// the halved step, which should both vanish up to solver round-off.
fn floor_check(cfg: &StudyConfig, spec: &LqSpec, grid: &TimeGrid, pairing: Pairing, rows: &MomentRows, report: &mut StudyReport) -> Result<()> {
    let fine = lq_gap_moments(cfg, spec, &grid.refined(), pairing, 1)?;
    let (a, b) = (rows.max_moment(), fine.max_moment());
    report.notes.push(format!("interaction-free spec: largest moment {a:e} on dt, {b:e} on dt/2"));
    report.push_check("gap_at_floor", a.max(b) <= 1e-12, format!("largest moment {:e} (limit 1e-12)", a.max(b)));
    Ok(())
}

fn lq_gap_study(kind: StudyKind, cfg: &StudyConfig, pairing: Pairing) -> Result<StudyReport> {
    let spec = cfg.spec;
    let grid = cfg.grid()?;
    let mut report = new_report(kind, cfg);
    let rows = lq_gap_moments(cfg, &spec, &grid, pairing, 1)?;
    let k = cfg.moment_k;
    let mut overlays = vec![overlay(&cfg.n_list, 2.0, 1.0, k)?, inverse_n(&cfg.n_list)];
    if pairing == Pairing::Social {
        overlays[0].0 = format!("{} (m = 1, l = 1)", overlays[0].0);
    }
    report.tables.push(rows.table("gap", &overlays));
    if spec.is_interaction_free() {
        floor_check(cfg, &spec, &grid, pairing, &rows, &mut report)?;
        return Ok(finish(report));
    }
    rows.guard(cfg.ci_limit)?;
    report.tables.push(two_term_table(&rows));
    let fits = rows.fit(&mut report);
    let last = cfg.n_list.len() - 1;
    for (ti, time) in rows.times.iter().enumerate() {
        let (first, end) = (rows.at(0, ti), rows.at(last, ti));
        report.push_check(
            format!("decrease t={time}"),
            ci_below(end, first),
            format!(
                "N = {}: {:.4e} ± {:.1e}; N = {}: {:.4e} ± {:.1e}",
                cfg.n_list[0], first.mean, first.half_width, cfg.n_list[last], end.mean, end.half_width
            ),
        );
        let Some(fit) = &fits[ti] else {
            report.push_check(format!("slope t={time}"), false, "no slope could be fitted");
            continue;
        };
        let (passed, window) = match pairing {
            Pairing::Nash => (
                (-1.25..=-0.75).contains(&fit.slope) && fit.r_squared >= 0.98,
                "slope in [-1.25, -0.75], R² ≥ 0.98",
            ),
            Pairing::Social => (fit.slope <= -0.4 && fit.r_squared >= 0.95, "slope ≤ -0.4, R² ≥ 0.95"),
        };
        report.push_check(
            format!("slope t={time}"),
            passed,
            format!("slope {:+.4}, R² {:.4} ({window})", fit.slope, fit.r_squared),
        );
    }
    if cfg.refine_check {
        refinement_table(cfg, &spec, &grid, pairing, &mut report)?;
    }
    Ok(finish(report))
}

/// Per-replication mean squared gap between a particle cloud and its shadow at `nodes`.
fn cloud_gaps(cloud: &ParticleCloud, nodes: &[usize]) -> Vec<f64> {
    let shadow = cloud.shadow.as_ref().expect("shadow attached");
    let n = cloud.n_particles;
    nodes
        .iter()
        .map(|&k| {
            let (own, lim) = match (cloud.alpha_at(k), &shadow.alpha) {
                (Some(a), Some(sa)) => {
                    let w = cloud.alpha_dim;
                    (a, &sa[k * n * w..(k + 1) * n * w])
                }
                _ => {
                    let q = cloud.dims.adjoint;
                    (cloud.y_at(k), &shadow.y[k * n * q..(k + 1) * n * q])
                }
            };
            let sq: Vec<f64> = own.iter().zip(lim).map(|(a, b)| (a - b) * (a - b)).collect();
            mean(&sq) * (own.len() / n) as f64
        })
        .collect()
}

/// Gap of a nonlinear bundle: particle systems by Picard iteration against
/// copies driven by the McKean–Vlasov flow.
fn picard_gap_study(cfg: &StudyConfig, bundle: &dyn CoefficientBundle) -> Result<StudyReport> {
    let grid = cfg.grid()?;
    let mut report = new_report(StudyKind::NashGap, cfg);
    let times = cfg.times();
    let nodes = cfg.eval_nodes(&grid);
    let mkv = solve_mkv_fbsde(bundle, cfg.law_particles, &grid, &cfg.picard, &cfg.flow, cfg.seed)?;
    report.notes.push(format!(
        "McKean–Vlasov flow: {} law particles, {} outer iterations, changes {:?}",
        cfg.law_particles, mkv.outer_iterations, mkv.flow_changes
    ));
    let mut rows = Vec::new();
    let mut uses_control = true;
    for &n in &cfg.n_list {
        let samples = (0..cfg.replications)
            .into_par_iter()
            .map(|rep| {
                let mut cloud = solve_particle_fbsde_rep(bundle, n, &grid, &cfg.picard, cfg.seed, rep)?;
                mkv.attach_shadow(bundle, &mut cloud, None)?;
                Ok((cloud_gaps(&cloud, &nodes), cloud.alpha.is_some()))
            })
            .collect::<Result<Vec<_>>>()?;
        uses_control &= samples.iter().all(|(_, c)| *c);
        let gaps: Vec<Vec<f64>> = samples.into_iter().map(|(g, _)| g).collect();
        rows.push(estimates(&gaps, nodes.len()));
    }
    if !uses_control {
        report.notes.push("bundle exposes no control; the adjoint gap is reported instead".into());
    }
    let dims = bundle.dims();
    let m = if uses_control { 1.0 } else { dims.adjoint as f64 };
    let l = dims.state as f64;
    let rows = MomentRows {
        label: "gap".into(),
        unit: if uses_control { "squared control" } else { "squared adjoint" }.into(),
        times,
        n_list: cfg.n_list.clone(),
        rows,
    };
    let overlays = vec![overlay(&cfg.n_list, m + l, l, cfg.moment_k)?, inverse_n(&cfg.n_list)];
    report.tables.push(rows.table("gap", &overlays));
    rows.guard(cfg.ci_limit)?;
    let fits = rows.fit(&mut report);
    let last = cfg.n_list.len() - 1;
    for (ti, time) in rows.times.iter().enumerate() {
        let (first, end) = (rows.at(0, ti), rows.at(last, ti));
        report.push_check(format!("decrease t={time}"), ci_below(end, first), format!("{:.4e} -> {:.4e}", first.mean, end.mean));
        if let Some(f) = &fits[ti] {
            report.notes.push(format!("t={time}: slope {:+.4} (rate bound only; no window asserted)", f.slope));
        }
    }
    Ok(finish(report))
}

/// Nash-to-mean-field gap. `lq` and `price-impact` use the closed-form
/// decouplings; any other registered bundle goes through the particle solvers.
pub fn nash_gap_study(cfg: &StudyConfig) -> Result<StudyReport> {
    cfg.validate(StudyKind::NashGap)?;
    match cfg.bundle.as_str() {
        "lq" => lq_gap_study(StudyKind::NashGap, cfg, Pairing::Nash),
        "price-impact" => {
            let mut c = cfg.clone();
            c.spec = price_impact_spec(&cfg.price_impact)?;
            c.validate(StudyKind::NashGap)?;
            lq_gap_study(StudyKind::NashGap, &c, Pairing::Nash)
        }
        name => {
            let bundle = bundle_by_name(name, &cfg.spec, &cfg.price_impact)?;
            picard_gap_study(cfg, bundle.as_ref())
        }
    }
}

/// Social optimum against the McKean–Vlasov control problem, with the check that
/// both adjoint drivers share their coefficients.
pub fn cooperative_gap_study(cfg: &StudyConfig) -> Result<StudyReport> {
    cfg.validate(StudyKind::CoopGap)?;
    cfg.spec.validate_cooperative()?;
    let draws = normals(StreamKey::new(cfg.seed, 0, 0), 4 * 64);
    let probes: Vec<[f64; 4]> = draws.chunks(4).map(|c| [2.0 * c[0], 2.0 * c[1], 2.0 * c[2], 2.0 * c[3]]).collect();
    let violation = coefficient_identity_violation(&cfg.spec, &probes);
    let mut report = lq_gap_study(StudyKind::CoopGap, cfg, Pairing::Social)?;
    report.push_check(
        "identity_violation",
        violation <= 1e-14,
        format!("largest driver coefficient mismatch {violation:e} over {} probes (limit 1e-14)", probes.len()),
    );
    Ok(report)
}

/// The gap pipeline on the price-impact execution problem, plus the vanishing
/// of every cross-player adjoint.
pub fn price_impact_study(cfg: &StudyConfig) -> Result<StudyReport> {
    let mut c = cfg.clone();
    c.spec = price_impact_spec(&cfg.price_impact)?;
    c.bundle = "price-impact".into();
    c.validate(StudyKind::PriceImpact)?;
    let grid = c.grid()?;
    let mut report = lq_gap_study(StudyKind::PriceImpact, &c, Pairing::Nash)?;
    report.notes.push(cfg.price_impact.mapping_note());
    let mut t = Table::new(
        "offdiag_coefficients",
        vec![Column::new("N", "players"), Column::new("max_offdiag", "adjoint per state")],
    );
    let mut worst: f64 = 0.0;
    for &n in &c.n_list {
        let np = solve_nplayer_lq_symmetric(&c.spec, n, &grid)?;
        let v = symmetric_offdiag_max(&np);
        worst = worst.max(v);
        t.push_row(vec![n as f64, v]);
    }
    report.tables.insert(1, t);
    report.push_check("offdiag_zero", worst <= 1e-12, format!("largest assembled cross-player coefficient {worst:e} (limit 1e-12)"));
    Ok(report)
}

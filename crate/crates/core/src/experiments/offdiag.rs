//! Decay of the cross-player adjoints `Y^{i,j}`, `i ≠ j`.

use rayon::prelude::*;

use crate::error::Result;
use crate::experiments::common::{ci_below, estimates, finish, inverse_n, new_report, MomentRows, MOMENT_FLOOR};
use crate::experiments::config::{StudyConfig, StudyKind};
use crate::experiments::coupled::LqCoupling;
use crate::experiments::report::StudyReport;
use crate::grid::TimeGrid;
use crate::lq::{price_impact_spec, solve_mkv_lq, solve_nplayer_lq_symmetric, Encoding, LqSpec, NPlayerDecoupling};
use crate::stats::{mean, MeanEstimate};
use crate::table::{Column, Table};

/// Largest assembled cross-player coefficient. With the exchangeable ansatz the
/// entries of `Y^{i,j}` are `d/N + f/N²` on `X^i`, `e/N + f/N²` on `X^j`,
/// `f/N²` on every other state and `g/N` for the constant.
pub(crate) fn symmetric_offdiag_max(np: &NPlayerDecoupling) -> f64 {
    let Encoding::Symmetric(c) = &np.encoding else {
        return np.max_offdiag_coefficient();
    };
    let nf = np.n_players as f64;
    let mut worst: f64 = 0.0;
    for k in 0..c.a.len() {
        let f2 = c.f[k] / (nf * nf);
        for v in [c.d[k] / nf + f2, c.e[k] / nf + f2, c.g[k] / nf] {
            worst = worst.max(v.abs());
        }
        if np.n_players > 2 {
            worst = worst.max(f2.abs());
        }
    }
    worst
}

/// `E sup_t |Y^{1,2}_t|²` per `N`, averaged over the disjoint pairs `(2p, 2p+1)`.
fn sup_moments(cfg: &StudyConfig, spec: &LqSpec, grid: &TimeGrid) -> Result<(Vec<MeanEstimate>, Vec<f64>)> {
    let limit = solve_mkv_lq(spec, grid)?;
    let mut est = Vec::new();
    let mut coef = Vec::new();
    for &n in &cfg.n_list {
        let np = solve_nplayer_lq_symmetric(spec, n, grid)?;
        coef.push(symmetric_offdiag_max(&np));
        let c = np.symmetric().expect("symmetric encoding").clone();
        let coupling = LqCoupling::new(&np, &limit, grid)?;
        let nf = n as f64;
        let pairs = n / 2;
        let samples: Vec<Vec<f64>> = (0..cfg.replications)
            .into_par_iter()
            .map(|rep| {
                let mut sup = vec![0.0f64; pairs];
                coupling.run(n, cfg.seed, rep, |snap| {
                    let k = snap.k;
                    for (p, s) in sup.iter_mut().enumerate() {
                        let (xi, xj) = (snap.x[2 * p], snap.x[2 * p + 1]);
                        let y = (c.d[k] * xi + c.e[k] * xj + c.f[k] * snap.x_mean + c.g[k]) / nf;
                        *s = s.max(y * y);
                    }
                });
                vec![mean(&sup)]
            })
            .collect();
        est.push(estimates(&samples, 1)[0]);
    }
    Ok((est, coef))
}

pub fn offdiag_study(cfg: &StudyConfig) -> Result<StudyReport> {
    cfg.validate(StudyKind::Offdiag)?;
    let spec = match cfg.bundle.as_str() {
        "price-impact" => price_impact_spec(&cfg.price_impact)?,
        _ => cfg.spec,
    };
    let grid = TimeGrid::new(spec.horizon, cfg.n_steps)?;
    let mut report = new_report(StudyKind::Offdiag, cfg);
    let (est, coef) = sup_moments(cfg, &spec, &grid)?;
    let rows = MomentRows {
        label: "sup_y12_sq".into(),
        unit: "squared adjoint".into(),
        times: vec![spec.horizon],
        n_list: cfg.n_list.clone(),
        rows: est.iter().map(|e| vec![*e]).collect(),
    };
    let inv = inverse_n(&cfg.n_list);
    let inv2 = ("N^-2".to_string(), cfg.n_list.iter().map(|n| 1.0 / (*n as f64).powi(2)).collect());
    let mut t = rows.table("offdiag", &[inv, inv2]);
    t.meta("statistic", "sup over every grid node");
    t.columns.push(Column::new("max_offdiag", "adjoint per state"));
    for (row, c) in t.rows.iter_mut().zip(&coef) {
        row.push(*c);
    }
    report.tables.push(t);

    if rows.max_moment() > MOMENT_FLOOR {
        rows.guard(cfg.ci_limit)?;
        let fits = rows.fit(&mut report);
        if let Some(Some(fit)) = fits.first() {
            report.push_check(
                "slope",
                (-1.3..=-0.7).contains(&fit.slope),
                format!("slope {:+.4}, R² {:.4} (window [-1.3, -0.7])", fit.slope, fit.r_squared),
            );
        }
        let monotone = est.windows(2).all(|w| w[1].lower() <= w[0].upper());
        report.push_check("monotone", monotone, "no CI-significant increase between consecutive N");
        let last = est.len() - 1;
        report.push_check(
            "decrease",
            ci_below(&est[last], &est[0]),
            format!("{:.4e} -> {:.4e}", est[0].mean, est[last].mean),
        );
    } else {
        report.notes.push("every cross-player adjoint vanishes on this spec".into());
    }

    // the price-impact instance, whose cross-player adjoints vanish identically
    let pi = price_impact_spec(&cfg.price_impact)?;
    let pi_grid = TimeGrid::new(pi.horizon, cfg.n_steps)?;
    let mut t = Table::new(
        "price_impact_offdiag",
        vec![Column::new("N", "players"), Column::new("max_offdiag", "adjoint per state")],
    );
    let mut worst: f64 = 0.0;
    for &n in &cfg.n_list {
        let v = symmetric_offdiag_max(&solve_nplayer_lq_symmetric(&pi, n, &pi_grid)?);
        worst = worst.max(v);
        t.push_row(vec![n as f64, v]);
    }
    report.tables.push(t);
    report.push_check(
        "price_impact_offdiag",
        worst <= 1e-12,
        format!("largest cross-player coefficient {worst:e} (limit 1e-12)"),
    );
    Ok(finish(report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lq::{solve_nplayer_lq_dense, PriceImpact};

    #[test]
    fn symmetric_bound_matches_assembled_matrix() {
        let spec = LqSpec::default();
        let grid = TimeGrid::new(1.0, 20).unwrap();
        for n in [2, 3, 6] {
            let sym = solve_nplayer_lq_symmetric(&spec, n, &grid).unwrap();
            let dense = solve_nplayer_lq_dense(&spec, n, &grid).unwrap();
            let (a, b) = (symmetric_offdiag_max(&sym), sym.max_offdiag_coefficient());
            assert!((a - b).abs() < 1e-12, "{a} vs {b}");
            assert!((a - dense.max_offdiag_coefficient()).abs() < 1e-8);
        }
    }

    #[test]
    fn price_impact_cross_adjoints_vanish() {
        let spec = price_impact_spec(&PriceImpact::default()).unwrap();
        let grid = TimeGrid::new(spec.horizon, 50).unwrap();
        let np = solve_nplayer_lq_symmetric(&spec, 64, &grid).unwrap();
        assert_eq!(symmetric_offdiag_max(&np), 0.0);
    }
}

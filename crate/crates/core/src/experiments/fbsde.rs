//! The generic particle solver against the LQ closed form.

use crate::chaos::{bundle_by_name, fbsde_residual, solve_particle_fbsde_rep, CoefficientBundle, LqParticleBundle};
use crate::error::Result;
use crate::experiments::common::{finish, new_report};
use crate::experiments::config::{StudyConfig, StudyKind};
use crate::experiments::report::StudyReport;
use crate::grid::TimeGrid;
use crate::lq::{solve_mkv_lq, LqSpec};
use crate::stats::{mean, variance};
use crate::table::{Column, Table};

/// Affine fixed point `Y_k = a_k X_k + b_k` of the explicit regression scheme on
/// the LQ game bundle, with exact conditional expectations; also returns the mean flow.
pub fn explicit_scheme_decoupling(spec: &LqSpec, grid: &TimeGrid) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let s = spec;
    let (dt, steps) = (grid.dt(), grid.n_steps());
    let kappa = -s.b * s.b / (2.0 * s.r);
    let kappa_bar = -s.b_bar * s.b / (2.0 * s.r);
    let a_hat = -s.s_bar * s.b / (2.0 * s.r);
    let mut a = vec![0.0; steps + 1];
    a[steps] = 2.0 * s.q_t;
    for k in (0..steps).rev() {
        let c = (1.0 + s.a * dt) * a[k + 1];
        a[k] = (c * (1.0 + s.a * dt) + 2.0 * s.q * dt) / (1.0 - c * kappa * dt);
    }
    let mut m = vec![s.mu0_mean; steps + 1];
    let mut b = vec![0.0; steps + 1];
    for _ in 0..500 {
        for k in (0..steps).rev() {
            let c = (1.0 + s.a * dt) * a[k + 1];
            let mixed = c * kappa_bar + a_hat;
            b[k] = ((c * s.a_bar + mixed * a[k]) * dt * m[k] + (1.0 + s.a * dt) * b[k + 1]) / (1.0 - c * kappa * dt - mixed * dt);
        }
        let mut next = vec![s.mu0_mean; steps + 1];
        for k in 0..steps {
            let n_k = a[k] * next[k] + b[k];
            next[k + 1] = next[k] + dt * ((s.a + s.a_bar) * next[k] + (kappa + kappa_bar) * n_k);
        }
        let change = next.iter().zip(&m).fold(0.0f64, |w, (p, q)| w.max((p - q).abs()));
        m = next;
        if change < 1e-15 {
            break;
        }
    }
    (a, b, m)
}

pub fn fbsde_study(cfg: &StudyConfig) -> Result<StudyReport> {
    cfg.validate(StudyKind::Fbsde)?;
    let grid = cfg.grid()?;
    let mut report = new_report(StudyKind::Fbsde, cfg);
    let n = cfg.n_list[0];
    let is_lq = cfg.bundle == "lq";
    let bundle: Box<dyn CoefficientBundle> = if is_lq {
        Box::new(LqParticleBundle::game(&cfg.spec))
    } else {
        bundle_by_name(&cfg.bundle, &cfg.spec, &cfg.price_impact)?
    };
    let oracle = is_lq.then(|| explicit_scheme_decoupling(&cfg.spec, &grid));
    let closed = if is_lq { Some(solve_mkv_lq(&cfg.spec, &grid)?) } else { None };
    let mut t = Table::new(
        "fbsde",
        vec![
            Column::new("replication", "index"),
            Column::new("x0", "state"),
            Column::new("y0", "adjoint"),
            Column::new("y0_scheme", "adjoint"),
            Column::new("y0_continuous", "adjoint"),
            Column::new("residual", "relative"),
            Column::new("terminal_residual", "relative"),
            Column::new("picard_iterations", "count"),
            Column::new("max_contraction", "1"),
        ],
    );
    t.meta("particles", n);
    let (mut err_scheme, mut err_cont) = (Vec::new(), Vec::new());
    let (mut worst_res, mut worst_term, mut worst_factor) = (0.0f64, 0.0f64, 0.0f64);
    let mut first_residual = None;
    for rep in 0..cfg.replications {
        let cloud = solve_particle_fbsde_rep(bundle.as_ref(), n, &grid, &cfg.picard, cfg.seed, rep)?;
        let res = fbsde_residual(&cloud, bundle.as_ref());
        let (x0, y0) = (cloud.x_of(0, 0, 0), cloud.y_of(0, 0, 0));
        let scheme = oracle.as_ref().map_or(f64::NAN, |(a, b, _)| a[0] * x0 + b[0]);
        let cont = closed.as_ref().map_or(f64::NAN, |c| c.y(0, x0));
        if is_lq {
            err_scheme.push(y0 - scheme);
            err_cont.push(y0 - cont);
        }
        let factor = cloud.contraction_factors.iter().fold(0.0f64, |m, f| m.max(*f));
        worst_res = worst_res.max(res.max_relative());
        worst_term = worst_term.max(res.terminal_relative());
        worst_factor = worst_factor.max(factor);
        t.push_row(vec![
            rep as f64,
            x0,
            y0,
            scheme,
            cont,
            res.max_relative(),
            res.terminal_relative(),
            cloud.picard_changes.len() as f64,
            factor,
        ]);
        if first_residual.is_none() {
            first_residual = Some(res.to_table(grid.dt()));
        }
    }
    report.tables.push(t);
    report.tables.extend(first_residual);
    report.push_check("residual", worst_res <= 1e-6, format!("largest relative residual {worst_res:e} (limit 1e-6)"));
    report.push_check("terminal", worst_term <= 1e-12, format!("largest terminal residual {worst_term:e}"));
    report.push_check("contraction", worst_factor < 1.0, format!("largest contraction factor {worst_factor:.4}"));
    if is_lq {
        let reps = err_scheme.len() as f64;
        let se = (variance(&err_scheme) / reps).sqrt();
        let bias = mean(&err_scheme);
        report.push_check(
            "closed_form",
            bias.abs() <= 3.0 * se,
            format!("mean error of Y^1_0 against the scheme's closed form {bias:+.3e}, standard error {se:.3e} (limit 3 se)"),
        );
        report.notes.push(format!(
            "mean error against the continuous-time closed form {:+.3e} (time-discretization bias)",
            mean(&err_cont)
        ));
    }
    Ok(finish(report))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scheme_decoupling_converges_to_the_riccati_solution() {
        let spec = LqSpec::default().with_horizon(0.5);
        let coarse = TimeGrid::new(0.5, 500).unwrap();
        let fine = TimeGrid::new(0.5, 1000).unwrap();
        let exact = solve_mkv_lq(&spec, &fine).unwrap();
        let (a1, b1, _) = explicit_scheme_decoupling(&spec, &coarse);
        let (a2, b2, m2) = explicit_scheme_decoupling(&spec, &fine);
        let e1 = (a1[0] - exact.eta[0]).abs() + (b1[0] - exact.psi[0]).abs();
        let e2 = (a2[0] - exact.eta[0]).abs() + (b2[0] - exact.psi[0]).abs();
        assert!(e2 < 0.6 * e1, "{e1} {e2}");
        assert!((m2[1000] - exact.m[1000]).abs() < 5e-3);
    }
}

//! Fixed-step classical Runge–Kutta integration of terminal-value problems
//! on a [`TimeGrid`], with automatic substep refinement.

use crate::error::{Error, Result};
use crate::grid::TimeGrid;

/// Controls for [`integrate_backward`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OdeOptions {
    /// Refinement stops once the time-0 state moves by less than this (max-abs).
    pub tolerance: f64,
    /// Hard cap on RK4 substeps per grid interval.
    pub max_substeps: usize,
    /// Any component exceeding this magnitude is reported as a blowup.
    pub blowup_bound: f64,
    /// Fixes the substep count and skips refinement when set.
    pub fixed_substeps: Option<usize>,
}

impl Default for OdeOptions {
    fn default() -> Self {
        Self {
            tolerance: 1e-10,
            max_substeps: 1 << 12,
            blowup_bound: 1e8,
            fixed_substeps: None,
        }
    }
}

/// Values of a backward-integrated ODE at every grid node.
#[derive(Debug, Clone)]
pub struct OdePath {
    /// `states[k]` is the state at `grid.t(k)`.
    pub states: Vec<Vec<f64>>,
    /// Substeps per grid interval that were finally used.
    pub substeps: usize,
}

fn rk4_pass<F>(rhs: &F, terminal: &[f64], grid: &TimeGrid, substeps: usize, bound: f64) -> Result<Vec<Vec<f64>>>
where
    F: Fn(f64, &[f64], &mut [f64]),
{
    let dim = terminal.len();
    let n = grid.n_steps();
    let mut states = vec![Vec::new(); n + 1];
    states[n] = terminal.to_vec();
    let mut y = terminal.to_vec();
    let (mut k1, mut k2, mut k3, mut k4, mut tmp) = (
        vec![0.0; dim],
        vec![0.0; dim],
        vec![0.0; dim],
        vec![0.0; dim],
        vec![0.0; dim],
    );
    for k in (0..n).rev() {
        let t_hi = grid.t(k + 1);
        let t_lo = grid.t(k);
        let h = -(t_hi - t_lo) / substeps as f64;
        for s in 0..substeps {
            let t = t_hi + s as f64 * h;
            rhs(t, &y, &mut k1);
            for i in 0..dim {
                tmp[i] = y[i] + 0.5 * h * k1[i];
            }
            rhs(t + 0.5 * h, &tmp, &mut k2);
            for i in 0..dim {
                tmp[i] = y[i] + 0.5 * h * k2[i];
            }
            rhs(t + 0.5 * h, &tmp, &mut k3);
            for i in 0..dim {
                tmp[i] = y[i] + h * k3[i];
            }
            rhs(t + h, &tmp, &mut k4);
            for i in 0..dim {
                y[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
            }
            if y.iter().any(|v| !v.is_finite() || v.abs() > bound) {
                return Err(Error::RiccatiBlowup {
                    time: t + h,
                    bound,
                });
            }
        }
        states[k] = y.clone();
    }
    Ok(states)
}

/// Integrates `y' = rhs(t, y)` from `y(T) = terminal` back to `t = 0`.
///
/// Unless `fixed_substeps` is set, the number of RK4 substeps per grid
/// interval is doubled until the state at `t = 0` changes by less than
/// `tolerance` between successive refinements.
pub fn integrate_backward<F>(rhs: F, terminal: &[f64], grid: &TimeGrid, opts: &OdeOptions) -> Result<OdePath>
where
    F: Fn(f64, &[f64], &mut [f64]),
{
    if let Some(s) = opts.fixed_substeps {
        let states = rk4_pass(&rhs, terminal, grid, s.max(1), opts.blowup_bound)?;
        return Ok(OdePath {
            states,
            substeps: s.max(1),
        });
    }
    let mut substeps = 1;
    let mut prev = rk4_pass(&rhs, terminal, grid, substeps, opts.blowup_bound)?;
    loop {
        let next_sub = substeps * 2;
        let next = rk4_pass(&rhs, terminal, grid, next_sub, opts.blowup_bound)?;
        let change = prev[0]
            .iter()
            .zip(&next[0])
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        substeps = next_sub;
        prev = next;
        if change < opts.tolerance {
            return Ok(OdePath {
                states: prev,
                substeps,
            });
        }
        if substeps >= opts.max_substeps {
            return Err(Error::IntegrationNotConverged { substeps, change });
        }
    }
}

/// Forward RK4 for a linear system `y' = M(t) y`, returning the state at every node.
pub(crate) fn integrate_forward<F>(rhs: F, initial: &[f64], grid: &TimeGrid, substeps: usize) -> Vec<Vec<f64>>
where
    F: Fn(f64, &[f64], &mut [f64]),
{
    let dim = initial.len();
    let n = grid.n_steps();
    let mut out = Vec::with_capacity(n + 1);
    let mut y = initial.to_vec();
    out.push(y.clone());
    let (mut k1, mut k2, mut k3, mut k4, mut tmp) = (
        vec![0.0; dim],
        vec![0.0; dim],
        vec![0.0; dim],
        vec![0.0; dim],
        vec![0.0; dim],
    );
    for k in 0..n {
        let h = (grid.t(k + 1) - grid.t(k)) / substeps as f64;
        for s in 0..substeps {
            let t = grid.t(k) + s as f64 * h;
            rhs(t, &y, &mut k1);
            for i in 0..dim {
                tmp[i] = y[i] + 0.5 * h * k1[i];
            }
            rhs(t + 0.5 * h, &tmp, &mut k2);
            for i in 0..dim {
                tmp[i] = y[i] + 0.5 * h * k2[i];
            }
            rhs(t + 0.5 * h, &tmp, &mut k3);
            for i in 0..dim {
                tmp[i] = y[i] + h * k3[i];
            }
            rhs(t + h, &tmp, &mut k4);
            for i in 0..dim {
                y[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
            }
        }
        out.push(y.clone());
    }
    out
}

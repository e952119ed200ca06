use crate::error::{Error, Result};
use crate::grid::TimeGrid;
use crate::lq::spec::LqSpec;
use crate::ode::{integrate_backward, integrate_forward, OdeOptions};
use crate::table::{Column, Table};

/// Affine decoupling `Y_t = eta(t) X_t + psi(t)` of a scalar McKean–Vlasov
/// FBSDE, with the mean flow `m = E[X]`, `n = E[Y]`.
///
/// `pi` is the mean gain, `n = pi m`; it is what the discrete particle
/// simulations use to propagate the mean consistently with their time step.
/// Which limiting problem a [`MfgDecoupling`] solves.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MeanFieldProblem {
    /// Mean field game equilibrium.
    Game,
    /// Optimal control of McKean–Vlasov dynamics (cooperative limit).
    Control,
}

#[derive(Debug, Clone)]
pub struct MfgDecoupling {
    pub problem: MeanFieldProblem,
    pub spec: LqSpec,
    pub grid: TimeGrid,
    pub eta: Vec<f64>,
    pub psi: Vec<f64>,
    pub m: Vec<f64>,
    pub n: Vec<f64>,
    pub pi: Vec<f64>,
    /// Control as an affine function of `(X, Y, E[X], E[Y])`:
    /// `alpha = cx X + cy Y + cm E[X] + cn E[Y]`.
    pub control: [f64; 4],
    pub substeps: usize,
}

impl MfgDecoupling {
    pub fn y(&self, k: usize, x: f64) -> f64 {
        self.eta[k] * x + self.psi[k]
    }

    /// `Y` expressed through the mean gain for an arbitrary law mean,
    /// i.e. the decoupling field `V(t, x, mu) = eta x + (pi - eta) mean(mu)`.
    pub fn value(&self, k: usize, x: f64, law_mean: f64) -> f64 {
        self.eta[k] * x + (self.pi[k] - self.eta[k]) * law_mean
    }

    pub fn alpha(&self, k: usize, x: f64) -> f64 {
        let [cx, cy, cm, cn] = self.control;
        cx * x + cy * self.y(k, x) + cm * self.m[k] + cn * self.n[k]
    }

    /// Mean control `E[alpha_t]`.
    pub fn alpha_mean(&self, k: usize) -> f64 {
        let [cx, cy, cm, cn] = self.control;
        (cx + cm) * self.m[k] + (cy + cn) * self.n[k]
    }

    /// Drift of the state at node `k` under the solved control and law.
    pub fn drift(&self, k: usize, x: f64) -> f64 {
        let s = &self.spec;
        s.a * x + s.a_bar * self.m[k] + s.b * self.alpha(k, x) + s.b_bar * self.alpha_mean(k)
    }

    /// Adjoint driver at node `k` (the `-dY/dt` drift) for given `(x, y)` and the solved law.
    pub fn driver(&self, k: usize, x: f64, y: f64) -> f64 {
        let s = &self.spec;
        match self.problem {
            MeanFieldProblem::Game => 2.0 * s.q * x - s.s_bar * s.b / (2.0 * s.r) * self.n[k] + s.a * y,
            MeanFieldProblem::Control => crate::lq::cooperative::social_driver_mkv(s, x, y, self.m[k], self.n[k]),
        }
    }

    /// Variance of `X_t` for a Gaussian (or Dirac) initial law.
    ///
    /// The deviation `X - m` solves `d(X - m) = (A - B² eta / 2R)(X - m) dt + sigma dW`.
    pub fn state_variance(&self) -> Vec<f64> {
        let s = &self.spec;
        let sub = self.substeps.max(8);
        let eta = &self.eta;
        let grid = &self.grid;
        let rhs = |t: f64, v: &[f64], out: &mut [f64]| {
            let e = interpolate(grid, eta, t);
            let g = s.a - s.b * s.b / (2.0 * s.r) * e;
            out[0] = 2.0 * g * v[0] + s.sigma * s.sigma;
        };
        integrate_forward(rhs, &[s.mu0_std * s.mu0_std], grid, sub)
            .into_iter()
            .map(|v| v[0])
            .collect()
    }

    pub fn to_table(&self) -> Table {
        let kind = match self.problem {
            MeanFieldProblem::Game => "mfg_decoupling",
            MeanFieldProblem::Control => "mkv_control_decoupling",
        };
        let mut t = Table::new(
            kind,
            vec![
                Column::new("t", "time"),
                Column::new("eta", "adjoint per unit state"),
                Column::new("psi", "adjoint"),
                Column::new("m", "state"),
                Column::new("n", "adjoint"),
                Column::new("pi", "adjoint per unit state"),
            ],
        );
        for (name, v) in self.spec.entries() {
            t.meta(format!("spec.{name}"), v);
        }
        t.meta("n_steps", self.grid.n_steps());
        t.meta("rk4_substeps", self.substeps);
        for k in 0..self.grid.n_nodes() {
            t.push_row(vec![self.grid.t(k), self.eta[k], self.psi[k], self.m[k], self.n[k], self.pi[k]]);
        }
        t
    }
}

/// Piecewise-linear interpolation of a grid-sampled function.
pub(crate) fn interpolate(grid: &TimeGrid, values: &[f64], t: f64) -> f64 {
    let n = grid.n_steps();
    let s = (t / grid.dt()).clamp(0.0, n as f64);
    let k = (s.floor() as usize).min(n - 1);
    let w = s - k as f64;
    values[k] * (1.0 - w) + values[k + 1] * w
}

/// Coefficients of a scalar McKean–Vlasov system solved through an affine ansatz:
///
/// ```text
/// dX = (A X + Ā E[X] + kappa Y + kappa_bar E[Y]) dt + sigma dW
/// dY = -(q X + q_bar E[X] + A Y + a_hat E[Y]) dt + Z dW,   Y_T = qt X_T + qt_bar E[X_T]
/// ```
#[derive(Debug, Clone, Copy)]
pub(crate) struct AffineMkv {
    pub a: f64,
    pub a_bar: f64,
    pub kappa: f64,
    pub kappa_bar: f64,
    pub q: f64,
    pub q_bar: f64,
    pub a_hat: f64,
    pub qt: f64,
    pub qt_bar: f64,
}

pub(crate) struct AffineMkvPath {
    pub eta: Vec<f64>,
    pub pi: Vec<f64>,
    pub m: Vec<f64>,
    pub n: Vec<f64>,
    pub substeps: usize,
}

pub(crate) fn solve_affine_mkv(sys: &AffineMkv, m0: f64, grid: &TimeGrid, opts: &OdeOptions) -> Result<AffineMkvPath> {
    let AffineMkv {
        a,
        a_bar,
        kappa,
        kappa_bar,
        q,
        q_bar,
        a_hat,
        qt,
        qt_bar,
    } = *sys;
    // eta' = -(2 a eta + kappa eta² + q) on deviations from the mean
    let riccati = |_t: f64, y: &[f64], out: &mut [f64]| {
        out[0] = -(2.0 * a * y[0] + kappa * y[0] * y[0] + q);
    };
    let path = integrate_backward(riccati, &[qt], grid, opts)?;
    let eta: Vec<f64> = path.states.iter().map(|s| s[0]).collect();

    // mean pair (m, n) by fundamental-matrix superposition
    let mean_rhs = |_t: f64, y: &[f64], out: &mut [f64]| {
        let (m, n) = (y[0], y[1]);
        out[0] = (a + a_bar) * m + (kappa + kappa_bar) * n;
        out[1] = -((q + q_bar) * m + (a + a_hat) * n);
    };
    let substeps = path.substeps.max(8);
    let col_m = integrate_forward(mean_rhs, &[1.0, 0.0], grid, substeps);
    let col_n = integrate_forward(mean_rhs, &[0.0, 1.0], grid, substeps);
    let last = grid.n_steps();
    let terminal_gain = qt + qt_bar;
    let (phi11, phi21) = (col_m[last][0], col_m[last][1]);
    let (phi12, phi22) = (col_n[last][0], col_n[last][1]);
    let pivot = phi22 - terminal_gain * phi12;
    let scale = phi22.abs().max(terminal_gain.abs() * phi12.abs()).max(1.0);
    if pivot.abs() <= 1e-12 * scale || !pivot.is_finite() {
        return Err(Error::BvpSingular { pivot });
    }
    let n0 = (terminal_gain * phi11 - phi21) / pivot * m0;
    let m: Vec<f64> = (0..=last).map(|k| col_m[k][0] * m0 + col_n[k][0] * n0).collect();
    let n: Vec<f64> = (0..=last).map(|k| col_m[k][1] * m0 + col_n[k][1] * n0).collect();

    // mean gain pi with n = pi m:
    // pi' = -(pi (a + a_bar) + (kappa + kappa_bar) pi² + q + q_bar + (a + a_hat) pi)
    let gain_rhs = |_t: f64, y: &[f64], out: &mut [f64]| {
        let pi = y[0];
        out[0] = -(pi * (a + a_bar) + (kappa + kappa_bar) * pi * pi + q + q_bar + (a + a_hat) * pi);
    };
    let gain_path = integrate_backward(gain_rhs, &[terminal_gain], grid, opts)?;
    let pi: Vec<f64> = gain_path.states.iter().map(|s| s[0]).collect();
    Ok(AffineMkvPath {
        eta,
        pi,
        m,
        n,
        substeps: path.substeps,
    })
}

/// Solves the LQ mean field game through its McKean–Vlasov FBSDE
///
/// ```text
/// dX = (A X + Ā E[X] - B² Y / 2R - B̄ B E[Y] / 2R) dt + sigma dW
/// dY = -(2 Q X - S̄ B E[Y] / 2R + A Y) dt + Z dW,      Y_T = 2 Q_T X_T
/// ```
///
/// whose equilibrium control is `alpha = -B Y / 2R`.
pub fn solve_mkv_lq(spec: &LqSpec, grid: &TimeGrid) -> Result<MfgDecoupling> {
    solve_mkv_lq_with(spec, grid, &OdeOptions::default())
}

pub fn solve_mkv_lq_with(spec: &LqSpec, grid: &TimeGrid, opts: &OdeOptions) -> Result<MfgDecoupling> {
    spec.validate()?;
    let s = spec;
    let sys = AffineMkv {
        a: s.a,
        a_bar: s.a_bar,
        kappa: -s.b * s.b / (2.0 * s.r),
        kappa_bar: -s.b_bar * s.b / (2.0 * s.r),
        q: 2.0 * s.q,
        q_bar: 0.0,
        a_hat: -s.s_bar * s.b / (2.0 * s.r),
        qt: 2.0 * s.q_t,
        qt_bar: 0.0,
    };
    let sol = solve_affine_mkv(&sys, s.mu0_mean, grid, opts)?;
    let psi = (0..grid.n_nodes()).map(|k| sol.n[k] - sol.eta[k] * sol.m[k]).collect();
    Ok(MfgDecoupling {
        problem: MeanFieldProblem::Game,
        spec: *spec,
        grid: grid.clone(),
        eta: sol.eta,
        psi,
        m: sol.m,
        n: sol.n,
        pi: sol.pi,
        control: [0.0, -s.b / (2.0 * s.r), 0.0, 0.0],
        substeps: sol.substeps,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn separable_riccati_closed_form() {
        let spec = LqSpec {
            a: 0.0,
            a_bar: 0.0,
            b: 1.0,
            b_bar: 0.0,
            q: 0.0,
            q_bar: 0.0,
            r: 0.5,
            r_bar: 0.0,
            s_bar: 0.0,
            q_t: 0.5,
            q_bar_t: 0.0,
            sigma: 0.3,
            horizon: 2.0,
            mu0_mean: 0.0,
            mu0_std: 1.0,
        };
        let grid = TimeGrid::new(2.0, 40).unwrap();
        let sol = solve_mkv_lq(&spec, &grid).unwrap();
        for k in 0..grid.n_nodes() {
            let exact = 1.0 / (1.0 + 2.0 - grid.t(k));
            assert!((sol.eta[k] - exact).abs() < 1e-9, "k = {k}");
            assert!(sol.psi[k].abs() < 1e-12);
        }
    }

    #[test]
    fn terminal_conditions_and_mean_consistency() {
        let spec = LqSpec::default();
        let grid = TimeGrid::new(spec.horizon, 50).unwrap();
        let sol = solve_mkv_lq(&spec, &grid).unwrap();
        let last = grid.n_steps();
        assert_eq!(sol.eta[last], 2.0 * spec.q_t);
        assert!(sol.psi[last].abs() < 1e-10);
        assert!((sol.n[last] - 2.0 * spec.q_t * sol.m[last]).abs() < 1e-10);
        assert!((sol.m[0] - spec.mu0_mean).abs() < 1e-14);
        for k in 0..grid.n_nodes() {
            assert!((sol.n[k] - sol.eta[k] * sol.m[k] - sol.psi[k]).abs() < 1e-12);
            assert!((sol.n[k] - sol.pi[k] * sol.m[k]).abs() < 1e-8, "mean gain mismatch at {k}");
        }
    }

    #[test]
    fn zero_state_cost_gives_zero_adjoint() {
        let spec = LqSpec {
            q: 0.0,
            q_t: 0.0,
            ..LqSpec::default()
        };
        let grid = TimeGrid::new(1.0, 20).unwrap();
        let sol = solve_mkv_lq(&spec, &grid).unwrap();
        assert!(sol.eta.iter().chain(&sol.psi).all(|v| *v == 0.0));
        assert!((0..grid.n_nodes()).all(|k| sol.alpha(k, 3.0) == 0.0));
    }

    #[test]
    fn variance_matches_ornstein_uhlenbeck_without_control() {
        let spec = LqSpec {
            q: 0.0,
            q_t: 0.0,
            a: -0.7,
            ..LqSpec::default()
        };
        let grid = TimeGrid::new(1.0, 20).unwrap();
        let var = solve_mkv_lq(&spec, &grid).unwrap().state_variance();
        for k in 0..grid.n_nodes() {
            let t = grid.t(k);
            let decay = (2.0 * spec.a * t).exp();
            let exact = spec.mu0_std.powi(2) * decay + spec.sigma.powi(2) * (decay - 1.0) / (2.0 * spec.a);
            assert!((var[k] - exact).abs() < 1e-9);
        }
    }

    #[test]
    fn bvp_singularity_is_reported() {
        // m' = -n, n' = m with n(T) = 0 on T = pi/2 has no solution with m(0) = 1
        let sys = AffineMkv {
            a: 0.0,
            a_bar: 0.0,
            kappa: 0.0,
            kappa_bar: -1.0,
            q: 0.0,
            q_bar: -1.0,
            a_hat: 0.0,
            qt: 0.0,
            qt_bar: 0.0,
        };
        let grid = TimeGrid::new(std::f64::consts::FRAC_PI_2, 200).unwrap();
        let err = solve_affine_mkv(&sys, 1.0, &grid, &OdeOptions::default());
        assert!(matches!(err, Err(Error::BvpSingular { .. })));
    }
}

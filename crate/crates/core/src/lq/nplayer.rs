use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::grid::TimeGrid;
use crate::lq::control::{CooperativeControlMap, EquilibriumControlMap};
use crate::lq::spec::LqSpec;
use crate::ode::{integrate_backward, OdeOptions};
use crate::table::{Column, Table};

pub const DEFAULT_DENSE_LIMIT: usize = 64;

/// Which optimality system a decoupling solves.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GameKind {
    /// Nash equilibrium: one adjoint `Y^{i,j}` per pair of players.
    Nash,
    /// Social optimum: one adjoint `Y^i` per player, stored on the diagonal.
    Social,
}

/// Grid-sampled coefficients of the exchangeable ansatz
///
/// ```text
/// Y^{i,i} = a X^i + b X̄ + c
/// Y^{i,j} = (d X^i + e X^j + f X̄ + g) / N,   i ≠ j
/// ```
#[derive(Debug, Clone, Default)]
pub struct SymmetricCoefficients {
    pub a: Vec<f64>,
    pub b: Vec<f64>,
    pub c: Vec<f64>,
    pub d: Vec<f64>,
    pub e: Vec<f64>,
    pub f: Vec<f64>,
    pub g: Vec<f64>,
}

#[derive(Debug, Clone)]
pub enum Encoding {
    /// `Y-stack = P X + q`; `P` is `N² × N` with row `i N + j` holding `Y^{i,j}`.
    Dense { p: Vec<DMatrix<f64>>, q: Vec<DVector<f64>> },
    Symmetric(SymmetricCoefficients),
}

/// `alpha_i = own X_i + mean X̄ + constant`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearFeedback {
    pub own: f64,
    pub mean: f64,
    pub constant: f64,
}

impl LinearFeedback {
    pub fn control(&self, x: f64, x_mean: f64) -> f64 {
        self.own * x + self.mean * x_mean + self.constant
    }
}

/// Affine decoupling of the N-player adjoint system.
#[derive(Debug, Clone)]
pub struct NPlayerDecoupling {
    pub spec: LqSpec,
    pub grid: TimeGrid,
    pub n_players: usize,
    pub kind: GameKind,
    pub encoding: Encoding,
    pub substeps: usize,
}

impl NPlayerDecoupling {
    /// Dense `(P, q)` at node `k`, assembling the symmetric encoding if needed.
    pub fn assembled(&self, k: usize) -> (DMatrix<f64>, DVector<f64>) {
        let n = self.n_players;
        match &self.encoding {
            Encoding::Dense { p, q } => (p[k].clone(), q[k].clone()),
            Encoding::Symmetric(s) => {
                let nf = n as f64;
                let mut p = DMatrix::zeros(n * n, n);
                let mut q = DVector::zeros(n * n);
                for i in 0..n {
                    for j in 0..n {
                        let row = i * n + j;
                        if i == j {
                            for l in 0..n {
                                p[(row, l)] = s.b[k] / nf;
                            }
                            p[(row, i)] += s.a[k];
                            q[row] = s.c[k];
                        } else {
                            for l in 0..n {
                                p[(row, l)] = s.f[k] / nf / nf;
                            }
                            p[(row, i)] += s.d[k] / nf;
                            p[(row, j)] += s.e[k] / nf;
                            q[row] = s.g[k] / nf;
                        }
                    }
                }
                (p, q)
            }
        }
    }

    /// Row-major `N × N` matrix of `Y^{i,j}` at node `k` and states `x`.
    pub fn adjoints(&self, k: usize, x: &[f64]) -> Vec<f64> {
        let n = self.n_players;
        match &self.encoding {
            Encoding::Symmetric(s) => {
                let nf = n as f64;
                let xm = x.iter().sum::<f64>() / nf;
                let mut y = vec![0.0; n * n];
                for i in 0..n {
                    for j in 0..n {
                        y[i * n + j] = if i == j {
                            s.a[k] * x[i] + s.b[k] * xm + s.c[k]
                        } else {
                            (s.d[k] * x[i] + s.e[k] * x[j] + s.f[k] * xm + s.g[k]) / nf
                        };
                    }
                }
                y
            }
            Encoding::Dense { p, q } => {
                let xs = DVector::from_column_slice(x);
                let ys = &p[k] * xs + &q[k];
                ys.as_slice().to_vec()
            }
        }
    }

    /// Largest assembled off-diagonal coefficient magnitude over the grid.
    pub fn max_offdiag_coefficient(&self) -> f64 {
        let n = self.n_players;
        let mut best: f64 = 0.0;
        for k in 0..self.grid.n_nodes() {
            let (p, q) = self.assembled(k);
            for i in 0..n {
                for j in 0..n {
                    if i != j {
                        let row = i * n + j;
                        best = best.max(q[row].abs());
                        for l in 0..n {
                            best = best.max(p[(row, l)].abs());
                        }
                    }
                }
            }
        }
        best
    }

    /// Equilibrium controls of all players at node `k`.
    pub fn controls(&self, k: usize, x: &[f64]) -> Result<Vec<f64>> {
        let y = self.adjoints(k, x);
        match self.kind {
            GameKind::Nash => Ok(EquilibriumControlMap::new(&self.spec, self.n_players)?.nash_all(x, &y)),
            GameKind::Social => {
                let map = CooperativeControlMap::new(&self.spec)?;
                let n = self.n_players;
                let nf = n as f64;
                let xm = x.iter().sum::<f64>() / nf;
                let diag: Vec<f64> = (0..n).map(|i| y[i * n + i]).collect();
                let ym = diag.iter().sum::<f64>() / nf;
                Ok(diag.iter().map(|yi| map.control(*yi, xm, ym)).collect())
            }
        }
    }

    /// Equilibrium controls at node `k` as `alpha_i = own X_i + mean X̄ + constant`,
    /// which is exact for every encoding because the decoupling is exchangeable.
    pub fn linear_feedback(&self, k: usize) -> Result<LinearFeedback> {
        let n = self.n_players;
        let nf = n as f64;
        match (&self.encoding, self.kind) {
            (Encoding::Symmetric(c), GameKind::Nash) => {
                let y = [c.a[k], c.b[k], c.c[k], c.d[k], c.e[k], c.f[k], c.g[k]];
                let g = symmetric_gains(&self.spec, nf, &y);
                Ok(LinearFeedback {
                    own: g.k1,
                    mean: g.k2,
                    constant: g.k3,
                })
            }
            (Encoding::Symmetric(c), GameKind::Social) => {
                let map = CooperativeControlMap::new(&self.spec)?;
                let f = |x: f64, xm: f64| map.control(c.a[k] * x + c.b[k] * xm + c.c[k], xm, (c.a[k] + c.b[k]) * xm + c.c[k]);
                let constant = f(0.0, 0.0);
                Ok(LinearFeedback {
                    own: f(1.0, 0.0) - constant,
                    mean: f(0.0, 1.0) - constant,
                    constant,
                })
            }
            (Encoding::Dense { .. }, _) => {
                let zero = self.controls(k, &vec![0.0; n])?;
                let mut e1 = vec![0.0; n];
                e1[0] = 1.0;
                let unit = self.controls(k, &e1)?;
                let constant = zero[0];
                let mean = nf * (unit[1] - constant);
                Ok(LinearFeedback {
                    own: unit[0] - constant - mean / nf,
                    mean,
                    constant,
                })
            }
        }
    }

    pub fn symmetric(&self) -> Option<&SymmetricCoefficients> {
        match &self.encoding {
            Encoding::Symmetric(s) => Some(s),
            Encoding::Dense { .. } => None,
        }
    }

    pub fn to_table(&self) -> Table {
        let kind = match self.kind {
            GameKind::Nash => "nplayer_nash",
            GameKind::Social => "nplayer_social",
        };
        let mut meta = vec![("n_players".to_string(), self.n_players.to_string())];
        for (name, v) in self.spec.entries() {
            meta.push((format!("spec.{name}"), v.to_string()));
        }
        let mut table = match &self.encoding {
            Encoding::Symmetric(s) => {
                let mut t = Table::new(
                    format!("{kind}_symmetric"),
                    ["t", "a", "b", "c", "d", "e", "f", "g"]
                        .iter()
                        .map(|c| Column::new(*c, if *c == "t" { "time" } else { "adjoint per unit state" }))
                        .collect(),
                );
                for k in 0..self.grid.n_nodes() {
                    t.push_row(vec![self.grid.t(k), s.a[k], s.b[k], s.c[k], s.d[k], s.e[k], s.f[k], s.g[k]]);
                }
                t
            }
            Encoding::Dense { .. } => {
                let n = self.n_players;
                let mut cols = vec![Column::new("t", "time")];
                for i in 0..n {
                    for j in 0..n {
                        for l in 0..n {
                            cols.push(Column::new(format!("P_{i}_{j}_{l}"), "adjoint per unit state"));
                        }
                        cols.push(Column::new(format!("q_{i}_{j}"), "adjoint"));
                    }
                }
                let mut t = Table::new(format!("{kind}_dense"), cols);
                for k in 0..self.grid.n_nodes() {
                    let (p, q) = self.assembled(k);
                    let mut row = vec![self.grid.t(k)];
                    for r in 0..n * n {
                        for l in 0..n {
                            row.push(p[(r, l)]);
                        }
                        row.push(q[r]);
                    }
                    t.push_row(row);
                }
                t
            }
        };
        table.metadata = meta;
        table
    }
}

/// Oracle solver: integrates the full `N² × N` matrix Riccati system for
/// `Y-stack = P X` with the controls eliminated by an `N × N` linear solve of
/// the first-order conditions at every evaluation.
pub fn solve_nplayer_lq_dense(spec: &LqSpec, n: usize, grid: &TimeGrid) -> Result<NPlayerDecoupling> {
    solve_nplayer_lq_dense_with(spec, n, grid, DEFAULT_DENSE_LIMIT, &OdeOptions::default())
}

pub fn solve_nplayer_lq_dense_with(
    spec: &LqSpec,
    n: usize,
    grid: &TimeGrid,
    dense_limit: usize,
    opts: &OdeOptions,
) -> Result<NPlayerDecoupling> {
    spec.validate_players(n)?;
    if n > dense_limit {
        return Err(Error::DenseLimitExceeded { n, limit: dense_limit });
    }
    let s = *spec;
    let nf = n as f64;
    let n2 = n * n;
    let ones = DMatrix::from_element(n, n, 1.0);
    let opt_matrix = DMatrix::identity(n, n) * (2.0 * s.r) + &ones * (2.0 * s.r_bar / (nf * nf));
    let lu = opt_matrix.lu();
    if !lu.is_invertible() {
        return Err(Error::SingularOptimalitySystem { time: grid.horizon() });
    }

    let rhs = |_t: f64, y: &[f64], out: &mut [f64]| {
        let p = DMatrix::from_row_slice(n2, n, y);
        let mut p_diag = DMatrix::<f64>::zeros(n, n);
        let mut p_rowmean = DMatrix::<f64>::zeros(n, n);
        for i in 0..n {
            p_diag.set_row(i, &p.row(i * n + i));
            for j in 0..n {
                let r = p.row(i * n + j);
                for l in 0..n {
                    p_rowmean[(i, l)] += r[l] / nf;
                }
            }
        }
        // controls alpha = K X
        let foc = -(DMatrix::identity(n, n) * (s.s_bar / nf) + &p_diag * s.b + &p_rowmean * s.b_bar);
        let gain = lu.solve(&foc).expect("optimality matrix checked invertible");
        let mut alpha_mean = DMatrix::<f64>::zeros(1, n);
        for i in 0..n {
            for l in 0..n {
                alpha_mean[(0, l)] += gain[(i, l)] / nf;
            }
        }
        let mut drift = DMatrix::identity(n, n) * s.a + &ones * (s.a_bar / nf) + &gain * s.b;
        for i in 0..n {
            for l in 0..n {
                drift[(i, l)] += s.b_bar * alpha_mean[(0, l)];
            }
        }
        let mut dp = &p * &drift;
        for i in 0..n {
            for j in 0..n {
                let row = i * n + j;
                for l in 0..n {
                    let mut driver = s.a * p[(row, l)] + s.a_bar * p_rowmean[(i, l)] + 2.0 * s.q_bar / (nf * nf);
                    if i == j {
                        driver += s.s_bar * alpha_mean[(0, l)];
                        if l == i {
                            driver += 2.0 * s.q;
                        }
                    }
                    dp[(row, l)] += driver;
                }
            }
        }
        for row in 0..n2 {
            for l in 0..n {
                out[row * n + l] = -dp[(row, l)];
            }
        }
    };

    let mut terminal = vec![0.0; n2 * n];
    for i in 0..n {
        for j in 0..n {
            let row = i * n + j;
            for l in 0..n {
                terminal[row * n + l] = 2.0 * s.q_bar_t / (nf * nf);
            }
            if i == j {
                terminal[row * n + i] += 2.0 * s.q_t;
            }
        }
    }
    let path = integrate_backward(rhs, &terminal, grid, opts)?;
    let p = path
        .states
        .iter()
        .map(|st| DMatrix::from_row_slice(n2, n, st))
        .collect();
    let q = vec![DVector::zeros(n2); grid.n_nodes()];
    Ok(NPlayerDecoupling {
        spec: *spec,
        grid: grid.clone(),
        n_players: n,
        kind: GameKind::Nash,
        encoding: Encoding::Dense { p, q },
        substeps: path.substeps,
    })
}

/// Feedback gains of the exchangeable Nash system at one instant:
/// `alpha_i = k1 X^i + k2 X̄ + k3`, `ᾱ = abar_x X̄ + abar_c`.
#[derive(Debug, Clone, Copy)]
pub(crate) struct SymmetricGains {
    pub r1: f64,
    pub r2: f64,
    pub r3: f64,
    pub k1: f64,
    pub k2: f64,
    pub k3: f64,
    pub abar_x: f64,
    pub abar_c: f64,
}

pub(crate) fn symmetric_gains(s: &LqSpec, nf: f64, y: &[f64]) -> SymmetricGains {
    let (a, b, c, d, e, f, g) = (y[0], y[1], y[2], y[3], y[4], y[5], y[6]);
    // row mean of Y^{i,.}: r1 X^i + r2 X̄ + r3
    let r1 = a / nf + ((nf - 1.0) * d - e) / (nf * nf);
    let r2 = b / nf + (nf * e + (nf - 1.0) * f) / (nf * nf);
    let r3 = c / nf + (nf - 1.0) * g / (nf * nf);
    let denom = 2.0 * (s.r + s.r_bar / nf);
    let abar_x = -(s.s_bar / nf + s.b * (a + b) + s.b_bar * (r1 + r2)) / denom;
    let abar_c = -(s.b * c + s.b_bar * r3) / denom;
    let k1 = -(s.s_bar / nf + s.b * a + s.b_bar * r1) / (2.0 * s.r);
    let k2 = -(2.0 * s.r_bar / nf * abar_x + s.b * b + s.b_bar * r2) / (2.0 * s.r);
    let k3 = -(2.0 * s.r_bar / nf * abar_c + s.b * c + s.b_bar * r3) / (2.0 * s.r);
    SymmetricGains {
        r1,
        r2,
        r3,
        k1,
        k2,
        k3,
        abar_x,
        abar_c,
    }
}

/// Solves the Nash system through the seven scalar coefficient ODEs of the
/// exchangeable ansatz (see [`SymmetricCoefficients`]).
pub fn solve_nplayer_lq_symmetric(spec: &LqSpec, n: usize, grid: &TimeGrid) -> Result<NPlayerDecoupling> {
    solve_nplayer_lq_symmetric_with(spec, n, grid, &OdeOptions::default())
}

pub fn solve_nplayer_lq_symmetric_with(
    spec: &LqSpec,
    n: usize,
    grid: &TimeGrid,
    opts: &OdeOptions,
) -> Result<NPlayerDecoupling> {
    spec.validate_players(n)?;
    if n < 2 {
        return Err(Error::param("N", n as f64, "the symmetric encoding needs at least two players"));
    }
    let s = *spec;
    let nf = n as f64;
    let rhs = |_t: f64, y: &[f64], out: &mut [f64]| {
        let (a, b, c, d, e, f, g) = (y[0], y[1], y[2], y[3], y[4], y[5], y[6]);
        let k = symmetric_gains(&s, nf, y);
        let m1 = s.a + s.b * k.k1;
        let m2 = s.a_bar + s.b * k.k2 + s.b_bar * k.abar_x;
        let m3 = s.b * k.k3 + s.b_bar * k.abar_c;
        out[0] = -(a * m1 + 2.0 * s.q + s.a * a + s.a_bar * k.r1);
        out[1] = -(a * m2 + b * (m1 + m2) + s.s_bar * k.abar_x + 2.0 * s.q_bar / nf + s.a * b + s.a_bar * k.r2);
        out[2] = -((a + b) * m3 + s.s_bar * k.abar_c + s.a * c + s.a_bar * k.r3);
        out[3] = -(d * m1 + s.a * d + nf * s.a_bar * k.r1);
        out[4] = -(e * m1 + s.a * e);
        out[5] = -((d + e) * m2 + f * (m1 + m2) + 2.0 * s.q_bar + s.a * f + nf * s.a_bar * k.r2);
        out[6] = -((d + e + f) * m3 + s.a * g + nf * s.a_bar * k.r3);
    };
    let terminal = [2.0 * s.q_t, 2.0 * s.q_bar_t / nf, 0.0, 0.0, 0.0, 2.0 * s.q_bar_t, 0.0];
    let path = integrate_backward(rhs, &terminal, grid, opts)?;
    let col = |i: usize| path.states.iter().map(|st| st[i]).collect::<Vec<f64>>();
    Ok(NPlayerDecoupling {
        spec: *spec,
        grid: grid.clone(),
        n_players: n,
        kind: GameKind::Nash,
        encoding: Encoding::Symmetric(SymmetricCoefficients {
            a: col(0),
            b: col(1),
            c: col(2),
            d: col(3),
            e: col(4),
            f: col(5),
            g: col(6),
        }),
        substeps: path.substeps,
    })
}

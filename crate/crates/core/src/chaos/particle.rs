//! Coupled forward-backward particle systems solved by Picard iteration with
//! regression-based conditional expectations.

use std::sync::Arc;

use rayon::prelude::*;

use crate::chaos::bundle::{CoefficientBundle, Dims, Law, LawMeans};
use crate::chaos::regression::{fit, fit_martingale, Basis, LinearFit};
use crate::error::{Error, Result};
use crate::grid::TimeGrid;
use crate::rng::{particle_noise_with_initial, StreamKey};
use crate::stats::pairwise_sum;
use crate::table::{Column, Table};

#[derive(Debug, Clone, PartialEq)]
pub struct PicardSettings {
    /// Stop when the relative `L²(paths × time)` change of `Y` drops below this.
    pub tol: f64,
    pub max_iter: usize,
    pub basis: Basis,
    pub ridge: f64,
}

impl Default for PicardSettings {
    fn default() -> Self {
        Self {
            tol: 1e-7,
            max_iter: 100,
            basis: Basis::default(),
            ridge: 1e-10,
        }
    }
}

impl PicardSettings {
    pub fn validate(&self) -> Result<()> {
        if self.max_iter == 0 {
            return Err(Error::param("max_iter", 0.0, "need at least one Picard iteration"));
        }
        if !(self.tol > 0.0) {
            return Err(Error::param("tol", self.tol, "tolerance must be positive"));
        }
        if !(self.ridge >= 0.0) {
            return Err(Error::param("ridge", self.ridge, "ridge must be non-negative"));
        }
        Ok(())
    }
}

/// Time-indexed equal-weight samples of `(X, Y)` standing in for the law flow.
#[derive(Debug, Clone, PartialEq)]
pub struct LawFlow {
    pub dims: Dims,
    pub n_samples: usize,
    /// Node-major, `n_nodes × n_samples × ℓ`.
    pub x: Vec<f64>,
    /// Node-major, `n_nodes × n_samples × q`.
    pub y: Vec<f64>,
    means: Vec<LawMeans>,
}

impl LawFlow {
    pub fn new(dims: Dims, n_samples: usize, x: Vec<f64>, y: Vec<f64>) -> Self {
        let nodes = x.len() / (n_samples * dims.state);
        let means = (0..nodes)
            .map(|k| {
                LawMeans::of(
                    &x[k * n_samples * dims.state..(k + 1) * n_samples * dims.state],
                    &y[k * n_samples * dims.adjoint..(k + 1) * n_samples * dims.adjoint],
                    dims,
                )
            })
            .collect();
        Self {
            dims,
            n_samples,
            x,
            y,
            means,
        }
    }

    pub fn n_nodes(&self) -> usize {
        self.means.len()
    }

    pub fn x_at(&self, k: usize) -> &[f64] {
        let w = self.n_samples * self.dims.state;
        &self.x[k * w..(k + 1) * w]
    }

    pub fn y_at(&self, k: usize) -> &[f64] {
        let w = self.n_samples * self.dims.adjoint;
        &self.y[k * w..(k + 1) * w]
    }

    pub fn law(&self, k: usize) -> Law<'_> {
        self.means[k].law(self.x_at(k), self.y_at(k))
    }

    pub fn x_mean(&self, k: usize) -> &[f64] {
        &self.means[k].x_mean
    }

    pub fn y_mean(&self, k: usize) -> &[f64] {
        &self.means[k].y_mean
    }
}

/// Where the measure argument of the coefficients comes from.
#[derive(Debug, Clone, Copy)]
pub enum LawSource<'a> {
    /// Empirical measure of the co-particles.
    Empirical,
    /// A fixed flow, shared by all particles.
    Frozen(&'a LawFlow),
}

/// Paths of the i.i.d. limit copies driven by a cloud's noise.
#[derive(Debug, Clone, PartialEq)]
pub struct Shadow {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub alpha: Option<Vec<f64>>,
}

/// `N` particle paths of `(X, Y, Z, α)` on a grid, with the noise that drove them.
#[derive(Debug, Clone)]
pub struct ParticleCloud {
    pub bundle: String,
    pub dims: Dims,
    pub grid: TimeGrid,
    pub n_particles: usize,
    pub seed: u64,
    pub replication: usize,
    /// Node-major, `n_nodes × N × ℓ`.
    pub x: Vec<f64>,
    /// Node-major, `n_nodes × N × q`.
    pub y: Vec<f64>,
    /// Own-noise block `Z^{i,i}`, `n_steps × N × (q·d)`.
    pub z: Vec<f64>,
    /// `n_nodes × N × m` when the bundle has a control.
    pub alpha: Option<Vec<f64>>,
    pub alpha_dim: usize,
    /// Brownian increments, `n_steps × N × d`.
    pub dw: Vec<f64>,
    /// Standard normal draws behind the initial states, `N × ℓ`.
    pub initial_normals: Vec<f64>,
    pub shadow: Option<Shadow>,
    /// Relative change of `Y` per Picard iteration.
    pub picard_changes: Vec<f64>,
    /// Ratios of consecutive changes, from the second iterate on.
    pub contraction_factors: Vec<f64>,
    /// Fields that generated the forward paths.
    pub forward_fields: Vec<LinearFit>,
    /// Fields fitted in the last backward sweep; `Y_k = fields[k](X_k)`.
    pub fields: Vec<LinearFit>,
    /// Frozen flow the particles were solved against, if any.
    pub flow: Option<Arc<LawFlow>>,
}

impl ParticleCloud {
    /// A cloud from externally computed paths, e.g. a closed-form solution.
    /// Layouts are as in the struct fields; no fields or Picard log are attached.
    #[allow(clippy::too_many_arguments)]
    pub fn from_paths(
        bundle: &str,
        dims: Dims,
        grid: &TimeGrid,
        n_particles: usize,
        x: Vec<f64>,
        y: Vec<f64>,
        z: Vec<f64>,
        dw: Vec<f64>,
    ) -> Result<Self> {
        let nodes = grid.n_nodes();
        let steps = grid.n_steps();
        let want = [
            (nodes * n_particles * dims.state, x.len()),
            (nodes * n_particles * dims.adjoint, y.len()),
            (steps * n_particles * dims.adjoint * dims.noise, z.len()),
            (steps * n_particles * dims.noise, dw.len()),
        ];
        if let Some(&(left, right)) = want.iter().find(|(a, b)| a != b) {
            return Err(Error::SizeMismatch { left, right });
        }
        Ok(Self {
            bundle: bundle.to_string(),
            dims,
            grid: grid.clone(),
            n_particles,
            seed: 0,
            replication: 0,
            x,
            y,
            z,
            alpha: None,
            alpha_dim: 0,
            dw,
            initial_normals: Vec::new(),
            shadow: None,
            picard_changes: Vec::new(),
            contraction_factors: Vec::new(),
            forward_fields: Vec::new(),
            fields: Vec::new(),
            flow: None,
        })
    }

    fn slice(v: &[f64], k: usize, width: usize) -> &[f64] {
        &v[k * width..(k + 1) * width]
    }

    pub fn x_at(&self, k: usize) -> &[f64] {
        Self::slice(&self.x, k, self.n_particles * self.dims.state)
    }

    pub fn y_at(&self, k: usize) -> &[f64] {
        Self::slice(&self.y, k, self.n_particles * self.dims.adjoint)
    }

    pub fn z_at(&self, k: usize) -> &[f64] {
        Self::slice(&self.z, k, self.n_particles * self.dims.adjoint * self.dims.noise)
    }

    pub fn dw_at(&self, k: usize) -> &[f64] {
        Self::slice(&self.dw, k, self.n_particles * self.dims.noise)
    }

    pub fn alpha_at(&self, k: usize) -> Option<&[f64]> {
        self.alpha
            .as_ref()
            .map(|a| Self::slice(a, k, self.n_particles * self.alpha_dim))
    }

    /// Own component `c` of `X^i_{t_k}`.
    pub fn x_of(&self, k: usize, i: usize, c: usize) -> f64 {
        self.x_at(k)[i * self.dims.state + c]
    }

    pub fn y_of(&self, k: usize, i: usize, c: usize) -> f64 {
        self.y_at(k)[i * self.dims.adjoint + c]
    }

    /// Component-`c` values of `X` at node `k` across particles.
    pub fn x_component(&self, k: usize, c: usize) -> Vec<f64> {
        self.x_at(k).chunks(self.dims.state).map(|r| r[c]).collect()
    }

    pub fn y_component(&self, k: usize, c: usize) -> Vec<f64> {
        self.y_at(k).chunks(self.dims.adjoint).map(|r| r[c]).collect()
    }

    pub fn last_contraction_factor(&self) -> Option<f64> {
        self.contraction_factors.last().copied()
    }

    /// Measure argument at node `k`: the frozen flow, or the cloud's own
    /// empirical measure.
    pub fn law_means(&self, k: usize) -> LawMeans {
        match &self.flow {
            Some(f) => LawMeans {
                x_mean: f.x_mean(k).to_vec(),
                y_mean: f.y_mean(k).to_vec(),
            },
            None => LawMeans::of(self.x_at(k), self.y_at(k), self.dims),
        }
    }

    /// One row per (node, particle) with the state, adjoint, own-noise `Z`
    /// and, when present, control and shadow columns.
    pub fn to_table(&self) -> Table {
        let Dims { state, adjoint, noise } = self.dims;
        let mut cols = vec![Column::new("node", "index"), Column::new("t", "time"), Column::new("particle", "index")];
        cols.extend((0..state).map(|c| Column::new(format!("x{c}"), "state")));
        cols.extend((0..adjoint).map(|c| Column::new(format!("y{c}"), "adjoint")));
        cols.extend((0..adjoint * noise).map(|c| Column::new(format!("z{c}"), "adjoint/sqrt(time)")));
        cols.extend((0..self.alpha_dim).map(|c| Column::new(format!("alpha{c}"), "control")));
        if let Some(s) = &self.shadow {
            cols.extend((0..state).map(|c| Column::new(format!("shadow_x{c}"), "state")));
            cols.extend((0..adjoint).map(|c| Column::new(format!("shadow_y{c}"), "adjoint")));
            if s.alpha.is_some() {
                cols.extend((0..self.alpha_dim).map(|c| Column::new(format!("shadow_alpha{c}"), "control")));
            }
        }
        let mut t = Table::new("particle-cloud", cols);
        t.meta("bundle", &self.bundle)
            .meta("particles", self.n_particles)
            .meta("seed", self.seed)
            .meta("replication", self.replication)
            .meta("horizon", self.grid.horizon())
            .meta("n_steps", self.grid.n_steps())
            .meta("picard_iterations", self.picard_changes.len());
        let n = self.n_particles;
        let zw = adjoint * noise;
        for k in 0..self.grid.n_nodes() {
            for i in 0..n {
                let mut row = vec![k as f64, self.grid.t(k), i as f64];
                row.extend_from_slice(&self.x_at(k)[i * state..(i + 1) * state]);
                row.extend_from_slice(&self.y_at(k)[i * adjoint..(i + 1) * adjoint]);
                if k < self.grid.n_steps() {
                    row.extend_from_slice(&self.z_at(k)[i * zw..(i + 1) * zw]);
                } else {
                    row.extend(std::iter::repeat_n(f64::NAN, zw));
                }
                if let Some(a) = self.alpha_at(k) {
                    row.extend_from_slice(&a[i * self.alpha_dim..(i + 1) * self.alpha_dim]);
                }
                if let Some(s) = &self.shadow {
                    let xs = Self::slice(&s.x, k, n * state);
                    let ys = Self::slice(&s.y, k, n * adjoint);
                    row.extend_from_slice(&xs[i * state..(i + 1) * state]);
                    row.extend_from_slice(&ys[i * adjoint..(i + 1) * adjoint]);
                    if let Some(a) = &s.alpha {
                        let a = Self::slice(a, k, n * self.alpha_dim);
                        row.extend_from_slice(&a[i * self.alpha_dim..(i + 1) * self.alpha_dim]);
                    }
                }
                t.push_row(row);
            }
        }
        t
    }
}

/// Noise for `n` particles: initial normals (`n × ℓ`) and node-major increments.
pub(crate) fn draw_noise(dims: Dims, n: usize, grid: &TimeGrid, seed: u64, replication: usize) -> (Vec<f64>, Vec<f64>) {
    let steps = grid.n_steps();
    let d = dims.noise;
    let per: Vec<_> = (0..n)
        .into_par_iter()
        .map(|i| particle_noise_with_initial(StreamKey::new(seed, replication, i), dims.state, steps, d, grid.dt()))
        .collect();
    let mut initial = Vec::with_capacity(n * dims.state);
    for p in &per {
        initial.extend_from_slice(&p.initial);
    }
    let mut dw = vec![0.0; steps * n * d];
    dw.par_chunks_mut(n * d).enumerate().for_each(|(k, row)| {
        for (i, p) in per.iter().enumerate() {
            row[i * d..(i + 1) * d].copy_from_slice(&p.dw[k * d..(k + 1) * d]);
        }
    });
    (initial, dw)
}

/// Ordered sum of squares of `a - b` and of `a`, per fixed-size chunk.
fn change_norms(a: &[f64], b: &[f64]) -> (f64, f64) {
    const CHUNK: usize = 4096;
    let parts: Vec<(f64, f64)> = a
        .par_chunks(CHUNK)
        .zip(b.par_chunks(CHUNK))
        .map(|(u, v)| {
            let d: Vec<f64> = u.iter().zip(v).map(|(p, q)| (p - q) * (p - q)).collect();
            let s: Vec<f64> = u.iter().map(|p| p * p).collect();
            (pairwise_sum(&d), pairwise_sum(&s))
        })
        .collect();
    let d: Vec<f64> = parts.iter().map(|p| p.0).collect();
    let s: Vec<f64> = parts.iter().map(|p| p.1).collect();
    (pairwise_sum(&d), pairwise_sum(&s))
}

struct Engine<'a> {
    bundle: &'a dyn CoefficientBundle,
    dims: Dims,
    grid: &'a TimeGrid,
    n: usize,
    settings: &'a PicardSettings,
    sigma: Vec<f64>,
    law: LawSource<'a>,
}

impl Engine<'_> {
    fn law_means(&self, k: usize, x: &[f64], y: &[f64]) -> LawMeans {
        match self.law {
            LawSource::Empirical => LawMeans::of(x, y, self.dims),
            LawSource::Frozen(flow) => LawMeans {
                x_mean: flow.x_mean(k).to_vec(),
                y_mean: flow.y_mean(k).to_vec(),
            },
        }
    }

    fn with_law<R>(&self, k: usize, x: &[f64], y: &[f64], f: impl FnOnce(&Law) -> R) -> R {
        match self.law {
            LawSource::Empirical => {
                let means = self.law_means(k, x, y);
                f(&means.law(x, y))
            }
            LawSource::Frozen(flow) => f(&flow.law(k)),
        }
    }

    /// Euler–Maruyama paths under `fields`; returns `(X, Y_fwd)`, node-major.
    fn forward(&self, x0: &[f64], dw: &[f64], fields: &[LinearFit]) -> (Vec<f64>, Vec<f64>) {
        let Dims { state: l, adjoint: q, noise: d } = self.dims;
        let n = self.n;
        let (steps, dt) = (self.grid.n_steps(), self.grid.dt());
        let mut x = vec![0.0; (steps + 1) * n * l];
        let mut yf = vec![0.0; (steps + 1) * n * q];
        x[..n * l].copy_from_slice(x0);
        for k in 0..=steps {
            let (done, rest) = x.split_at_mut((k + 1) * n * l);
            let xk = &done[k * n * l..];
            let yk = fields[k].predict_all(xk);
            yf[k * n * q..(k + 1) * n * q].copy_from_slice(&yk);
            if k == steps {
                break;
            }
            let t = self.grid.t(k);
            let dwk = &dw[k * n * d..(k + 1) * n * d];
            let next = &mut rest[..n * l];
            self.with_law(k, xk, &yk, |law| {
                next.par_chunks_mut(l).enumerate().for_each(|(i, out)| {
                    let xi = &xk[i * l..(i + 1) * l];
                    self.bundle.drift(t, xi, &yk[i * q..(i + 1) * q], law, out);
                    for c in 0..l {
                        let noise: f64 = (0..d).map(|e| self.sigma[c * d + e] * dwk[i * d + e]).sum();
                        out[c] = xi[c] + out[c] * dt + noise;
                    }
                });
            });
        }
        (x, yf)
    }

    /// Backward regression sweep; returns `(Y, Z, fields)`.
    fn backward(&self, x: &[f64], yf: &[f64], dw: &[f64]) -> Result<(Vec<f64>, Vec<f64>, Vec<LinearFit>)> {
        let Dims { state: l, adjoint: q, noise: d } = self.dims;
        let n = self.n;
        let (steps, dt) = (self.grid.n_steps(), self.grid.dt());
        let mut y = vec![0.0; (steps + 1) * n * q];
        let mut z = vec![0.0; steps * n * q * d];
        let mut fields = vec![LinearFit::zero(&self.settings.basis, l, q); steps + 1];

        let xn = &x[steps * n * l..];
        let yn_f = &yf[steps * n * q..];
        let mut terminal = vec![0.0; n * q];
        self.with_law(steps, xn, yn_f, |law| {
            terminal.par_chunks_mut(q).enumerate().for_each(|(i, out)| {
                self.bundle.terminal(&xn[i * l..(i + 1) * l], law, out);
            });
        });
        if terminal.iter().any(|v| !v.is_finite()) {
            return Err(Error::PicardDiverged { changes: Vec::new() });
        }
        fields[steps] = fit(&self.settings.basis, xn, l, &terminal, q, self.settings.ridge, steps)?;
        y[steps * n * q..].copy_from_slice(&terminal);

        for k in (0..steps).rev() {
            let t = self.grid.t(k);
            let xk = &x[k * n * l..(k + 1) * n * l];
            let yfk = &yf[k * n * q..(k + 1) * n * q];
            let dwk = &dw[k * n * d..(k + 1) * n * d];
            let (head, tail) = y.split_at_mut((k + 1) * n * q);
            let y_next = &tail[..n * q];

            // Z from the part of Y_{k+1} not explained by X_k
            let projected = fit(&self.settings.basis, xk, l, y_next, q, self.settings.ridge, k)?.predict_all(xk);
            let innovations: Vec<f64> = y_next.iter().zip(&projected).map(|(a, b)| a - b).collect();
            let z_fit = fit_martingale(&self.settings.basis, xk, l, dwk, d, dt, &innovations, q, self.settings.ridge, k)?;
            let zk = z_fit.predict_all(xk);

            // the martingale increment has conditional mean zero; removing it
            // leaves the projection unbiased with far less noise
            let mut y_target = vec![0.0; n * q];
            self.with_law(k, xk, yfk, |law| {
                y_target.par_chunks_mut(q).enumerate().for_each(|(i, out)| {
                    let yi = &y_next[i * q..(i + 1) * q];
                    let zi = &zk[i * q * d..(i + 1) * q * d];
                    self.bundle.driver(t, &xk[i * l..(i + 1) * l], yi, zi, law, out);
                    for c in 0..q {
                        let mart: f64 = (0..d).map(|e| zi[c * d + e] * dwk[i * d + e]).sum();
                        out[c] = yi[c] + dt * out[c] - mart;
                    }
                });
            });
            if y_target.iter().any(|v| !v.is_finite()) {
                return Err(Error::PicardDiverged { changes: Vec::new() });
            }
            let y_fit = fit(&self.settings.basis, xk, l, &y_target, q, self.settings.ridge, k)?;
            head[k * n * q..].copy_from_slice(&y_fit.predict_all(xk));
            z[k * n * q * d..(k + 1) * n * q * d].copy_from_slice(&zk);
            fields[k] = y_fit;
        }
        Ok((y, z, fields))
    }

    fn controls(&self, x: &[f64], y: &[f64]) -> Option<(Vec<f64>, usize)> {
        let Dims { state: l, adjoint: q, .. } = self.dims;
        let n = self.n;
        let nodes = self.grid.n_nodes();
        let mut out = Vec::new();
        let mut m = 0;
        for k in 0..nodes {
            let xk = &x[k * n * l..(k + 1) * n * l];
            let yk = &y[k * n * q..(k + 1) * n * q];
            let t = self.grid.t(k);
            let rows: Vec<Option<Vec<f64>>> = self.with_law(k, xk, yk, |law| {
                (0..n)
                    .into_par_iter()
                    .map(|i| self.bundle.control(t, &xk[i * l..(i + 1) * l], &yk[i * q..(i + 1) * q], law))
                    .collect()
            });
            for r in rows {
                let r = r?;
                m = r.len();
                out.extend(r);
            }
        }
        Some((out, m))
    }
}

/// Where a solve starts and what it is warm-started from.
#[derive(Debug, Clone, Default)]
pub struct SolveStart<'a> {
    /// Replaces the bundle's initial law with these states (`N × ℓ`).
    pub initial_states: Option<&'a [f64]>,
    pub warm_fields: Option<&'a [LinearFit]>,
}

/// Picard iteration on the coupled system. `law` selects between the
/// particle system (empirical measure) and decoupled copies under a frozen flow.
#[allow(clippy::too_many_arguments)]
pub fn solve_particles(
    bundle: &dyn CoefficientBundle,
    n: usize,
    grid: &TimeGrid,
    settings: &PicardSettings,
    seed: u64,
    replication: usize,
    law: LawSource<'_>,
    start: SolveStart<'_>,
) -> Result<ParticleCloud> {
    settings.validate()?;
    let dims = bundle.dims();
    let sigma = bundle.sigma();
    if sigma.len() != dims.state * dims.noise {
        return Err(Error::SizeMismatch {
            left: dims.state * dims.noise,
            right: sigma.len(),
        });
    }
    if let LawSource::Frozen(flow) = law {
        if flow.n_nodes() != grid.n_nodes() || flow.dims != dims {
            return Err(Error::SizeMismatch {
                left: grid.n_nodes(),
                right: flow.n_nodes(),
            });
        }
    }
    let (initial_normals, dw) = draw_noise(dims, n, grid, seed, replication);
    let x0 = match start.initial_states {
        Some(s) => {
            if s.len() != n * dims.state {
                return Err(Error::SizeMismatch {
                    left: n * dims.state,
                    right: s.len(),
                });
            }
            s.to_vec()
        }
        None => {
            let mut x0 = vec![0.0; n * dims.state];
            x0.par_chunks_mut(dims.state)
                .enumerate()
                .for_each(|(i, out)| bundle.initial(&initial_normals[i * dims.state..(i + 1) * dims.state], out));
            x0
        }
    };
    let engine = Engine {
        bundle,
        dims,
        grid,
        n,
        settings,
        sigma,
        law,
    };

    let mut fields = match start.warm_fields {
        Some(f) if f.len() == grid.n_nodes() => f.to_vec(),
        _ => vec![LinearFit::zero(&settings.basis, dims.state, dims.adjoint); grid.n_nodes()],
    };
    let mut y_prev = vec![0.0; grid.n_nodes() * n * dims.adjoint];
    let mut changes: Vec<f64> = Vec::new();
    let mut factors = Vec::new();
    let mut growths = 0;
    for _ in 0..settings.max_iter {
        let (x, yf) = engine.forward(&x0, &dw, &fields);
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::PicardDiverged { changes });
        }
        let (y, z, new_fields) = match engine.backward(&x, &yf, &dw) {
            Err(Error::PicardDiverged { .. }) => return Err(Error::PicardDiverged { changes }),
            other => other?,
        };
        let (diff, size) = change_norms(&y, &y_prev);
        let change = if size > 0.0 { (diff / size).sqrt() } else { diff.sqrt() };
        // the first change is measured against the zero start, not an iterate
        if let (true, Some(&last)) = (changes.len() >= 2, changes.last()) {
            factors.push(if last > 0.0 { change / last } else { 0.0 });
            if change > last {
                growths += 1;
            } else {
                growths = 0;
            }
        }
        changes.push(change);
        if !change.is_finite() || growths >= 3 {
            return Err(Error::PicardDiverged { changes });
        }
        let forward_fields = std::mem::replace(&mut fields, new_fields);
        if change < settings.tol {
            let (alpha, alpha_dim) = match engine.controls(&x, &y) {
                Some((a, m)) => (Some(a), m),
                None => (None, 0),
            };
            return Ok(ParticleCloud {
                bundle: bundle.name().to_string(),
                dims,
                grid: grid.clone(),
                n_particles: n,
                seed,
                replication,
                x,
                y,
                z,
                alpha,
                alpha_dim,
                dw,
                initial_normals,
                shadow: None,
                picard_changes: changes,
                contraction_factors: factors,
                forward_fields,
                fields,
                flow: match law {
                    LawSource::Frozen(f) => Some(Arc::new(f.clone())),
                    LawSource::Empirical => None,
                },
            });
        }
        y_prev = y;
    }
    Err(Error::PicardNotConverged {
        iterations: settings.max_iter,
        change: changes.last().copied().unwrap_or(f64::NAN),
    })
}

/// The `N`-particle system driven by the empirical measure of `(X, Y)`.
pub fn solve_particle_fbsde(bundle: &dyn CoefficientBundle, n: usize, grid: &TimeGrid, settings: &PicardSettings, seed: u64) -> Result<ParticleCloud> {
    solve_particle_fbsde_rep(bundle, n, grid, settings, seed, 0)
}

pub fn solve_particle_fbsde_rep(
    bundle: &dyn CoefficientBundle,
    n: usize,
    grid: &TimeGrid,
    settings: &PicardSettings,
    seed: u64,
    replication: usize,
) -> Result<ParticleCloud> {
    if n < 2 {
        return Err(Error::param("N", n as f64, "a particle system needs at least two particles"));
    }
    solve_particles(bundle, n, grid, settings, seed, replication, LawSource::Empirical, SolveStart::default())
}

//! Synchronous coupling of the LQ `N`-player equilibrium with i.i.d. limit copies.

use crate::error::Result;
use crate::grid::TimeGrid;
use crate::lq::{LinearFeedback, LqSpec, MfgDecoupling, NPlayerDecoupling};
use crate::rng::{particle_noise, StreamKey};
use crate::stats::mean;

/// States and controls of both systems at one grid node.
pub(crate) struct Snapshot<'a> {
    pub k: usize,
    pub x: &'a [f64],
    pub alpha: &'a [f64],
    pub alpha_tilde: &'a [f64],
    pub x_mean: f64,
}

/// Euler simulation of the `N`-player feedback equilibrium and of its limit
/// copies, sharing initial draws and Brownian increments particle by particle.
///
/// The limit copies play `alpha = cx x + cy V(t, x, m) + cm m + cn pi m`, with
/// `m` propagated by the Euler recursion of the copies' own mean.
pub(crate) struct LqCoupling<'a> {
    spec: LqSpec,
    grid: &'a TimeGrid,
    feedback: Vec<LinearFeedback>,
    limit: &'a MfgDecoupling,
    noise_substeps: usize,
}

impl<'a> LqCoupling<'a> {
    pub fn new(nplayer: &NPlayerDecoupling, limit: &'a MfgDecoupling, grid: &'a TimeGrid) -> Result<Self> {
        let feedback = (0..grid.n_nodes()).map(|k| nplayer.linear_feedback(k)).collect::<Result<Vec<_>>>()?;
        Ok(Self {
            spec: nplayer.spec,
            grid,
            feedback,
            limit,
            noise_substeps: 1,
        })
    }

    /// Draws each increment as the sum of `r` finer increments, so that a run
    /// on this grid shares its Brownian paths with a run on the `r`-times finer grid.
    pub fn with_noise_substeps(mut self, r: usize) -> Self {
        self.noise_substeps = r.max(1);
        self
    }

    fn limit_control(&self, k: usize, x: f64, m: f64) -> f64 {
        let [cx, cy, cm, cn] = self.limit.control;
        cx * x + cy * self.limit.value(k, x, m) + cm * m + cn * self.limit.pi[k] * m
    }

    fn limit_mean_control(&self, k: usize, m: f64) -> f64 {
        let [cx, cy, cm, cn] = self.limit.control;
        (cx + cm + (cy + cn) * self.limit.pi[k]) * m
    }

    /// Runs replication `rep` with `n` players, calling `observe` at every node.
    pub fn run(&self, n: usize, seed: u64, rep: usize, mut observe: impl FnMut(&Snapshot)) {
        let s = &self.spec;
        let (steps, dt) = (self.grid.n_steps(), self.grid.dt());
        let r = self.noise_substeps;
        let mut noise: Vec<_> = (0..n)
            .map(|i| particle_noise(StreamKey::new(seed, rep, i), steps * r, 1, dt / r as f64))
            .collect();
        if r > 1 {
            for p in &mut noise {
                p.dw = p.dw.chunks(r).map(|c| c.iter().sum()).collect();
            }
        }
        let mut x: Vec<f64> = noise.iter().map(|p| s.mu0_mean + s.mu0_std * p.initial[0]).collect();
        let mut xt = x.clone();
        let mut m = s.mu0_mean;
        let mut alpha = vec![0.0; n];
        let mut alpha_t = vec![0.0; n];
        for k in 0..=steps {
            let xm = mean(&x);
            let fb = self.feedback[k];
            for i in 0..n {
                alpha[i] = fb.control(x[i], xm);
                alpha_t[i] = self.limit_control(k, xt[i], m);
            }
            observe(&Snapshot {
                k,
                x: &x,
                alpha: &alpha,
                alpha_tilde: &alpha_t,
                x_mean: xm,
            });
            if k == steps {
                break;
            }
            let am = mean(&alpha);
            let amt = self.limit_mean_control(k, m);
            for i in 0..n {
                let dw = s.sigma * noise[i].dw[k];
                x[i] += dt * (s.a * x[i] + s.a_bar * xm + s.b * alpha[i] + s.b_bar * am) + dw;
                xt[i] += dt * (s.a * xt[i] + s.a_bar * m + s.b * alpha_t[i] + s.b_bar * amt) + dw;
            }
            m += dt * ((s.a + s.a_bar) * m + (s.b + s.b_bar) * amt);
        }
    }
}

/// Controls of `n` i.i.d. limit copies at the given nodes, from streams
/// `(seed, rep, i)`.
pub(crate) fn limit_controls(limit: &MfgDecoupling, grid: &TimeGrid, n: usize, seed: u64, rep: usize, nodes: &[usize]) -> Vec<Vec<f64>> {
    let s = &limit.spec;
    let (steps, dt) = (grid.n_steps(), grid.dt());
    let [cx, cy, cm, cn] = limit.control;
    let mut ms = Vec::with_capacity(steps + 1);
    let mut m = s.mu0_mean;
    for k in 0..=steps {
        ms.push(m);
        let amt = (cx + cm + (cy + cn) * limit.pi[k]) * m;
        m += dt * ((s.a + s.a_bar) * m + (s.b + s.b_bar) * amt);
    }
    let mut out = vec![Vec::with_capacity(n); nodes.len()];
    for i in 0..n {
        let p = particle_noise(StreamKey::new(seed, rep, i), steps, 1, dt);
        let mut x = s.mu0_mean + s.mu0_std * p.initial[0];
        for k in 0..=steps {
            let m = ms[k];
            let a = cx * x + cy * limit.value(k, x, m) + cm * m + cn * limit.pi[k] * m;
            for (slot, node) in out.iter_mut().zip(nodes) {
                if *node == k {
                    slot.push(a);
                }
            }
            if k == steps {
                break;
            }
            let amt = (cx + cm + (cy + cn) * limit.pi[k]) * m;
            x += dt * (s.a * x + s.a_bar * m + s.b * a + s.b_bar * amt) + s.sigma * p.dw[k];
        }
    }
    out
}

use rayon::prelude::*;

use crate::lq::cooperative::social_driver_nplayer;
use crate::lq::mkv::MfgDecoupling;
use crate::lq::nplayer::{GameKind, NPlayerDecoupling};
use crate::rng::{particle_noise, StreamKey};
use crate::stats::mean;

/// One-step residuals `E|Y_{k+1} - Y_k + F_k dt - Z_k dW_k|²` of a decoupled
/// FBSDE along simulated Euler paths.
#[derive(Debug, Clone)]
pub struct LqResidualReport {
    pub dt: f64,
    /// Mean squared residual on each step `k -> k + 1`.
    pub per_step: Vec<f64>,
    /// `E|Y_k|²` on the same steps.
    pub y_second_moment: Vec<f64>,
}

impl LqResidualReport {
    /// `max_k E r_k² / (dt² E|Y_k|²)`, the quantity compared against the tolerance.
    pub fn scaled_max(&self) -> f64 {
        self.per_step
            .iter()
            .zip(&self.y_second_moment)
            .map(|(r, y)| r / (self.dt * self.dt * y.max(f64::MIN_POSITIVE)))
            .fold(0.0, f64::max)
    }

    pub fn passes(&self, tol: f64) -> bool {
        self.scaled_max() <= tol
    }
}

fn initial_state(spec: &crate::lq::LqSpec, z: f64) -> f64 {
    spec.mu0_mean + spec.mu0_std * z
}

/// Residual of a mean-field decoupling: the law enters through the solved
/// means, the adjoint is `eta X + psi` and `Z = eta sigma`.
pub fn mkv_residual(sol: &MfgDecoupling, n_paths: usize, seed: u64) -> LqResidualReport {
    let grid = &sol.grid;
    let n = grid.n_steps();
    let dt = grid.dt();
    let sigma = sol.spec.sigma;
    let per_path: Vec<(Vec<f64>, Vec<f64>)> = (0..n_paths)
        .into_par_iter()
        .map(|p| {
            let noise = particle_noise(StreamKey::new(seed, 0, p), n, 1, dt);
            let mut x = initial_state(&sol.spec, noise.initial[0]);
            let mut r2 = Vec::with_capacity(n);
            let mut y2 = Vec::with_capacity(n);
            for k in 0..n {
                let y = sol.y(k, x);
                let dw = noise.dw[k];
                let x_next = x + sol.drift(k, x) * dt + sigma * dw;
                let y_next = sol.y(k + 1, x_next);
                let r = y_next - y + sol.driver(k, x, y) * dt - sol.eta[k + 1] * sigma * dw;
                r2.push(r * r);
                y2.push(y * y);
                x = x_next;
            }
            (r2, y2)
        })
        .collect();
    summarize(per_path, n, dt)
}

fn summarize(per_path: Vec<(Vec<f64>, Vec<f64>)>, n: usize, dt: f64) -> LqResidualReport {
    let mut per_step = Vec::with_capacity(n);
    let mut y_second_moment = Vec::with_capacity(n);
    for k in 0..n {
        let r: Vec<f64> = per_path.iter().map(|(r, _)| r[k]).collect();
        let y: Vec<f64> = per_path.iter().map(|(_, y)| y[k]).collect();
        per_step.push(mean(&r));
        y_second_moment.push(mean(&y));
    }
    LqResidualReport {
        dt,
        per_step,
        y_second_moment,
    }
}

/// Residual of player 1's adjoints `Y^{1,1}` and `Y^{1,2}` (Nash) or `Y^1`
/// (social) in the N-player system, with the full `Z^{1,j,l} = ∂_l Y^{1,j} sigma`.
/// Residuals of the tracked adjoints are summed.
pub fn nplayer_residual(sol: &NPlayerDecoupling, n_paths: usize, seed: u64) -> crate::Result<LqResidualReport> {
    let grid = &sol.grid;
    let steps = grid.n_steps();
    let dt = grid.dt();
    let s = sol.spec;
    let np = sol.n_players;
    let nf = np as f64;
    let tracked: Vec<usize> = match sol.kind {
        GameKind::Nash if np > 1 => vec![0, 1],
        _ => vec![0],
    };
    // gradient rows of the tracked adjoints at every node
    let grads: Vec<Vec<Vec<f64>>> = (0..=steps)
        .map(|k| {
            let (p, _) = sol.assembled(k);
            tracked.iter().map(|&j| (0..np).map(|l| p[(j, l)]).collect()).collect()
        })
        .collect();
    let per_path: Vec<crate::Result<(Vec<f64>, Vec<f64>)>> = (0..n_paths)
        .into_par_iter()
        .map(|path| {
            let noises: Vec<_> = (0..np)
                .map(|i| particle_noise(StreamKey::new(seed, path, i), steps, 1, dt))
                .collect();
            let mut x: Vec<f64> = noises.iter().map(|z| initial_state(&s, z.initial[0])).collect();
            let mut r2 = Vec::with_capacity(steps);
            let mut y2 = Vec::with_capacity(steps);
            for k in 0..steps {
                let y = sol.adjoints(k, &x);
                let alpha = sol.controls(k, &x)?;
                let xm = x.iter().sum::<f64>() / nf;
                let am = alpha.iter().sum::<f64>() / nf;
                let x_next: Vec<f64> = (0..np)
                    .map(|i| x[i] + s.drift(x[i], xm, alpha[i], am) * dt + s.sigma * noises[i].dw[k])
                    .collect();
                let y_next = sol.adjoints(k + 1, &x_next);
                let mut r_tot = 0.0;
                for (t_idx, &j) in tracked.iter().enumerate() {
                    let driver = match sol.kind {
                        GameKind::Nash => {
                            let row_mean = y[..np].iter().sum::<f64>() / nf;
                            let mut d = s.a * y[j] + s.a_bar * row_mean + 2.0 * s.q_bar / nf * xm;
                            if j == 0 {
                                d += 2.0 * s.q * x[0] + s.s_bar * am;
                            }
                            d
                        }
                        GameKind::Social => {
                            let diag_mean = (0..np).map(|i| y[i * np + i]).sum::<f64>() / nf;
                            social_driver_nplayer(&s, x[0], y[0], xm, diag_mean)
                        }
                    };
                    let zdw: f64 = (0..np).map(|l| grads[k + 1][t_idx][l] * s.sigma * noises[l].dw[k]).sum();
                    let r = y_next[j] - y[j] + driver * dt - zdw;
                    r_tot += r * r;
                }
                r2.push(r_tot);
                y2.push(tracked.iter().map(|&j| y[j] * y[j]).sum());
                x = x_next;
            }
            Ok((r2, y2))
        })
        .collect();
    let per_path = per_path.into_iter().collect::<crate::Result<Vec<_>>>()?;
    Ok(summarize(per_path, steps, dt))
}

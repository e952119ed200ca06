//! Discrete martingale check of the backward equation on a cloud.

use rayon::prelude::*;

use crate::chaos::bundle::{CoefficientBundle, Dims};
use crate::chaos::particle::ParticleCloud;
use crate::stats::pairwise_sum;
use crate::table::{Column, Table};

#[derive(Debug, Clone, PartialEq)]
pub struct FbsdeResidual {
    /// `E|Y_{k+1} − Y_k + F_k Δ − Z_k ΔW_k|²` per step.
    pub per_step: Vec<f64>,
    /// `E|Y_T − G(X_T, L(X_T))|²`.
    pub terminal: f64,
    /// `E|Y|²` over all nodes and particles.
    pub y_second_moment: f64,
}

impl FbsdeResidual {
    fn scale(&self) -> f64 {
        if self.y_second_moment > 0.0 {
            self.y_second_moment
        } else {
            1.0
        }
    }

    pub fn relative_per_step(&self) -> Vec<f64> {
        self.per_step.iter().map(|r| r / self.scale()).collect()
    }

    pub fn max_relative(&self) -> f64 {
        self.relative_per_step().into_iter().fold(0.0, f64::max)
    }

    pub fn terminal_relative(&self) -> f64 {
        self.terminal / self.scale()
    }

    pub fn to_table(&self, dt: f64) -> Table {
        let mut t = Table::new(
            "fbsde-residual",
            vec![
                Column::new("step", "index"),
                Column::new("t", "time"),
                Column::new("residual", "adjoint^2"),
                Column::new("relative", "1"),
            ],
        );
        t.meta("terminal_mismatch", self.terminal)
            .meta("terminal_relative", self.terminal_relative())
            .meta("y_second_moment", self.y_second_moment);
        for (k, (r, rel)) in self.per_step.iter().zip(self.relative_per_step()).enumerate() {
            t.push_row(vec![k as f64, k as f64 * dt, *r, rel]);
        }
        t
    }
}

fn mean_sq(rows: &[f64]) -> f64 {
    pairwise_sum(rows) / rows.len().max(1) as f64
}

/// Residuals of the explicit backward step and of the terminal condition,
/// with the measure argument taken from the cloud (its frozen flow, or the
/// empirical law of `(X_k, Y_k)`).
pub fn fbsde_residual(cloud: &ParticleCloud, bundle: &dyn CoefficientBundle) -> FbsdeResidual {
    let Dims { state: l, adjoint: q, noise: d } = cloud.dims;
    let n = cloud.n_particles;
    let grid = &cloud.grid;
    let dt = grid.dt();
    let per_step = (0..grid.n_steps())
        .map(|k| {
            let (xk, yk, y1, zk, dwk) = (cloud.x_at(k), cloud.y_at(k), cloud.y_at(k + 1), cloud.z_at(k), cloud.dw_at(k));
            let means = cloud.law_means(k);
            let law = match &cloud.flow {
                Some(f) => f.law(k),
                None => means.law(xk, yk),
            };
            let t = grid.t(k);
            let sq: Vec<f64> = (0..n)
                .into_par_iter()
                .map(|i| {
                    let mut f = vec![0.0; q];
                    let z = &zk[i * q * d..(i + 1) * q * d];
                    bundle.driver(t, &xk[i * l..(i + 1) * l], &y1[i * q..(i + 1) * q], z, &law, &mut f);
                    (0..q)
                        .map(|c| {
                            let mart: f64 = (0..d).map(|e| z[c * d + e] * dwk[i * d + e]).sum();
                            let r = y1[i * q + c] - yk[i * q + c] + f[c] * dt - mart;
                            r * r
                        })
                        .sum()
                })
                .collect();
            mean_sq(&sq)
        })
        .collect();
    let k = grid.n_steps();
    let (xn, yn) = (cloud.x_at(k), cloud.y_at(k));
    let means = cloud.law_means(k);
    let law = match &cloud.flow {
        Some(f) => f.law(k),
        None => means.law(xn, yn),
    };
    let sq: Vec<f64> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut g = vec![0.0; q];
            bundle.terminal(&xn[i * l..(i + 1) * l], &law, &mut g);
            (0..q).map(|c| (yn[i * q + c] - g[c]).powi(2)).sum()
        })
        .collect();
    let terminal = mean_sq(&sq);
    let y2: Vec<f64> = cloud.y.iter().map(|v| v * v).collect();
    let y_second_moment = mean_sq(&y2) * q as f64;
    FbsdeResidual {
        per_step,
        terminal,
        y_second_moment,
    }
}

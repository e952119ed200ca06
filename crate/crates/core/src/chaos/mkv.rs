//! McKean–Vlasov FBSDE by an outer fixed point on the law flow.

use std::sync::Arc;

use rayon::prelude::*;

use crate::chaos::bundle::{CoefficientBundle, Dims};
use crate::chaos::particle::{solve_particles, LawFlow, LawSource, ParticleCloud, PicardSettings, Shadow, SolveStart};
use crate::error::{Error, Result};
use crate::grid::TimeGrid;
use crate::metrics::wasserstein2_1d;

/// Replication index reserved for the law particles, so their streams never
/// coincide with the replications of an `N`-particle study.
pub const LAW_REPLICATION: usize = u32::MAX as usize;

#[derive(Debug, Clone, PartialEq)]
pub struct FlowSettings {
    /// Stop when `sup_t W₂` between consecutive flows drops below this.
    pub tol: f64,
    pub max_outer: usize,
}

impl Default for FlowSettings {
    fn default() -> Self {
        Self { tol: 1e-6, max_outer: 30 }
    }
}

#[derive(Debug, Clone)]
pub struct MkvSolution {
    /// The law particles solved against the final frozen flow.
    pub cloud: ParticleCloud,
    pub flow: Arc<LawFlow>,
    /// `sup_t W₂(flow_k, flow_{k+1})` per outer iteration.
    pub flow_changes: Vec<f64>,
    pub contraction_factors: Vec<f64>,
    pub outer_iterations: usize,
}

impl MkvSolution {
    /// Decoupling field `x ↦ Y_{t_k}` of the limit problem.
    pub fn y_field(&self, k: usize, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.cloud.dims.adjoint];
        self.cloud.fields[k].predict(x, &mut out);
        out
    }

    /// Drives i.i.d. limit copies with `cloud`'s initial draws and increments
    /// (or with `initial_states` in place of the initial draws) and stores them
    /// as the cloud's shadow.
    pub fn attach_shadow(&self, bundle: &dyn CoefficientBundle, cloud: &mut ParticleCloud, initial_states: Option<&[f64]>) -> Result<()> {
        let Dims { state: l, adjoint: q, noise: d } = cloud.dims;
        if cloud.grid != self.cloud.grid || cloud.dims != self.cloud.dims {
            return Err(Error::SizeMismatch {
                left: self.cloud.grid.n_nodes(),
                right: cloud.grid.n_nodes(),
            });
        }
        let n = cloud.n_particles;
        let grid = &cloud.grid;
        let (steps, dt) = (grid.n_steps(), grid.dt());
        let sigma = bundle.sigma();
        let mut x = vec![0.0; grid.n_nodes() * n * l];
        match initial_states {
            Some(s) => x[..n * l].copy_from_slice(s),
            None => x[..n * l]
                .par_chunks_mut(l)
                .enumerate()
                .for_each(|(i, out)| bundle.initial(&cloud.initial_normals[i * l..(i + 1) * l], out)),
        }
        let mut y = vec![0.0; grid.n_nodes() * n * q];
        for k in 0..=steps {
            let (done, rest) = x.split_at_mut((k + 1) * n * l);
            let xk = &done[k * n * l..];
            let yk = self.cloud.forward_fields[k].predict_all(xk);
            let yk_final = self.cloud.fields[k].predict_all(xk);
            y[k * n * q..(k + 1) * n * q].copy_from_slice(&yk_final);
            if k == steps {
                break;
            }
            let t = grid.t(k);
            let law = self.flow.law(k);
            let dwk = cloud.dw_at(k);
            rest[..n * l].par_chunks_mut(l).enumerate().for_each(|(i, out)| {
                let xi = &xk[i * l..(i + 1) * l];
                bundle.drift(t, xi, &yk[i * q..(i + 1) * q], &law, out);
                for c in 0..l {
                    let noise: f64 = (0..d).map(|e| sigma[c * d + e] * dwk[i * d + e]).sum();
                    out[c] = xi[c] + out[c] * dt + noise;
                }
            });
        }
        // terminal adjoint from the terminal condition, as in the solver
        let xn = &x[steps * n * l..];
        let law = self.flow.law(steps);
        y[steps * n * q..]
            .par_chunks_mut(q)
            .enumerate()
            .for_each(|(i, out)| bundle.terminal(&xn[i * l..(i + 1) * l], &law, out));

        let alpha = if cloud.alpha.is_some() {
            let mut a = Vec::with_capacity(grid.n_nodes() * n * cloud.alpha_dim);
            for k in 0..grid.n_nodes() {
                let law = self.flow.law(k);
                let t = grid.t(k);
                let rows: Vec<Vec<f64>> = (0..n)
                    .into_par_iter()
                    .map(|i| {
                        bundle
                            .control(t, &x[(k * n + i) * l..(k * n + i + 1) * l], &y[(k * n + i) * q..(k * n + i + 1) * q], &law)
                            .unwrap_or_default()
                    })
                    .collect();
                rows.into_iter().for_each(|r| a.extend(r));
            }
            Some(a)
        } else {
            None
        };
        cloud.shadow = Some(Shadow { x, y, alpha });
        Ok(())
    }
}

fn flow_distance(a: &LawFlow, b: &LawFlow) -> Result<f64> {
    let mut worst: f64 = 0.0;
    for k in 0..a.n_nodes() {
        for (sa, sb, w) in [(a.x_at(k), b.x_at(k), a.dims.state), (a.y_at(k), b.y_at(k), a.dims.adjoint)] {
            for c in 0..w {
                let u: Vec<f64> = sa.chunks(w).map(|r| r[c]).collect();
                let v: Vec<f64> = sb.chunks(w).map(|r| r[c]).collect();
                worst = worst.max(wasserstein2_1d(&u, &v)?);
            }
        }
    }
    Ok(worst)
}

fn flow_of(cloud: &ParticleCloud) -> LawFlow {
    LawFlow::new(cloud.dims, cloud.n_particles, cloud.x.clone(), cloud.y.clone())
}

/// Solves the McKean–Vlasov FBSDE with `m` law particles.
///
/// The first flow is the `m`-particle system's own solution; each outer step
/// then solves `m` decoupled copies against the frozen flow and replaces the
/// flow by their empirical law. Bundles that ignore the measure need a single solve.
pub fn solve_mkv_fbsde(
    bundle: &dyn CoefficientBundle,
    m: usize,
    grid: &TimeGrid,
    picard: &PicardSettings,
    flow_settings: &FlowSettings,
    seed: u64,
) -> Result<MkvSolution> {
    solve_mkv_fbsde_from(bundle, m, grid, picard, flow_settings, seed, None)
}

/// As [`solve_mkv_fbsde`], with the law particles started at `initial_states`.
pub fn solve_mkv_fbsde_from(
    bundle: &dyn CoefficientBundle,
    m: usize,
    grid: &TimeGrid,
    picard: &PicardSettings,
    flow_settings: &FlowSettings,
    seed: u64,
    initial_states: Option<&[f64]>,
) -> Result<MkvSolution> {
    if m < 2 {
        return Err(Error::param("M", m as f64, "need at least two law particles"));
    }
    if flow_settings.max_outer == 0 || !(flow_settings.tol > 0.0) {
        return Err(Error::param("max_outer", flow_settings.max_outer as f64, "need a positive outer budget and tolerance"));
    }
    let start = SolveStart {
        initial_states,
        warm_fields: None,
    };
    let mut cloud = solve_particles(bundle, m, grid, picard, seed, LAW_REPLICATION, LawSource::Empirical, start.clone())?;
    if !bundle.measure_dependent() {
        let flow = Arc::new(flow_of(&cloud));
        cloud.flow = Some(flow.clone());
        return Ok(MkvSolution {
            cloud,
            flow,
            flow_changes: Vec::new(),
            contraction_factors: Vec::new(),
            outer_iterations: 1,
        });
    }
    let mut flow = flow_of(&cloud);
    let mut changes: Vec<f64> = Vec::new();
    let mut factors = Vec::new();
    let mut growths = 0;
    for outer in 1..=flow_settings.max_outer {
        let warm = cloud.fields.clone();
        let next = solve_particles(
            bundle,
            m,
            grid,
            picard,
            seed,
            LAW_REPLICATION,
            LawSource::Frozen(&flow),
            SolveStart {
                initial_states,
                warm_fields: Some(&warm),
            },
        )?;
        let next_flow = flow_of(&next);
        let change = flow_distance(&flow, &next_flow)?;
        if let Some(&last) = changes.last() {
            factors.push(if last > 0.0 { change / last } else { 0.0 });
            growths = if change > last { growths + 1 } else { 0 };
        }
        changes.push(change);
        cloud = next;
        if change < flow_settings.tol {
            // the cloud was solved against `flow`; its own law is `next_flow`
            // and the two agree to within the tolerance
            let flow = Arc::new(flow);
            return Ok(MkvSolution {
                cloud,
                flow,
                flow_changes: changes,
                contraction_factors: factors,
                outer_iterations: outer,
            });
        }
        if growths >= 3 || !change.is_finite() {
            break;
        }
        flow = next_flow;
    }
    Err(Error::FlowNotContracting { changes })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chaos::particle::solve_particle_fbsde_rep;
    use crate::chaos::registry::{ScalarFnBundle, TanhBundle, TanhVariant};

    fn free_bundle() -> ScalarFnBundle {
        ScalarFnBundle {
            name: "free".into(),
            sigma: 0.3,
            mu0_mean: 0.0,
            mu0_std: 1.0,
            lipschitz: 1.0,
            measure_dependent: false,
            drift: Box::new(|_, x, y, _, _| -y.tanh() - 0.5 * x),
            driver: Box::new(|_, x, y, _, _, _| x.sin() - 0.2 * y),
            terminal: Box::new(|x, _| x.tanh()),
        }
    }

    #[test]
    fn measure_free_bundle_takes_one_outer_iteration() {
        let grid = TimeGrid::new(0.5, 20).unwrap();
        let sol = solve_mkv_fbsde(&free_bundle(), 300, &grid, &PicardSettings::default(), &FlowSettings::default(), 4).unwrap();
        assert_eq!(sol.outer_iterations, 1);
        assert!(sol.flow_changes.is_empty());
    }

    #[test]
    fn shadow_equals_particles_without_interaction() {
        let b = free_bundle();
        let grid = TimeGrid::new(0.5, 20).unwrap();
        let picard = PicardSettings::default();
        let sol = solve_mkv_fbsde(&b, 300, &grid, &picard, &FlowSettings::default(), 9).unwrap();
        let mut cloud = solve_particle_fbsde_rep(&b, 300, &grid, &picard, 9, LAW_REPLICATION).unwrap();
        sol.attach_shadow(&b, &mut cloud, None).unwrap();
        let shadow = cloud.shadow.as_ref().unwrap();
        assert_eq!(shadow.x, cloud.x);
        assert_eq!(shadow.y, cloud.y);
    }

    #[test]
    fn bounded_bundle_flow_contracts() {
        let b = TanhBundle::new(TanhVariant::Bounded);
        let grid = TimeGrid::new(0.5, 20).unwrap();
        let sol = solve_mkv_fbsde(&b, 1000, &grid, &PicardSettings::default(), &FlowSettings::default(), 1).unwrap();
        assert!(sol.outer_iterations >= 1);
        assert!(sol.contraction_factors.iter().all(|&f| f < 1.0), "{:?}", sol.flow_changes);
        assert!(*sol.flow_changes.last().unwrap() < 1e-6);
    }
}

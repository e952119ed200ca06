//! Least-squares projection onto a finite basis of functions of the own state.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::stats::pairwise_sum;

/// Rows per partial sum when accumulating normal equations. Fixed so that the
/// reduction order does not depend on the thread pool.
const CHUNK: usize = 256;

#[derive(Debug, Clone, PartialEq)]
pub enum Basis {
    /// All monomials of total degree `≤ degree` in the state components.
    Polynomial { degree: usize },
    /// Indicator of the nearest center, on the first state component.
    Indicator { centers: Vec<f64> },
}

impl Default for Basis {
    fn default() -> Self {
        Basis::Polynomial { degree: 2 }
    }
}

impl Basis {
    fn exponents(degree: usize, dim: usize) -> Vec<Vec<usize>> {
        let mut out = vec![vec![0; dim]];
        let mut frontier = vec![vec![0; dim]];
        for _ in 0..degree {
            let mut next = Vec::new();
            for e in &frontier {
                let start = e.iter().rposition(|&v| v > 0).unwrap_or(0);
                for c in start..dim {
                    let mut f = e.clone();
                    f[c] += 1;
                    next.push(f);
                }
            }
            out.extend(next.iter().cloned());
            frontier = next;
        }
        out
    }

    fn features(&self, dim: usize) -> Features {
        match self {
            Basis::Polynomial { degree } => Features::Monomials(Self::exponents(*degree, dim)),
            Basis::Indicator { centers } => Features::Nearest(centers.clone()),
        }
    }
}

#[derive(Debug, Clone)]
enum Features {
    /// First entry is the all-zero exponent (intercept).
    Monomials(Vec<Vec<usize>>),
    Nearest(Vec<f64>),
}

impl Features {
    fn len(&self) -> usize {
        match self {
            Features::Monomials(e) => e.len(),
            Features::Nearest(c) => c.len(),
        }
    }

    fn eval(&self, x: &[f64], out: &mut [f64]) {
        match self {
            Features::Monomials(exps) => {
                for (o, e) in out.iter_mut().zip(exps) {
                    *o = e.iter().zip(x).map(|(&p, &v)| v.powi(p as i32)).product();
                }
            }
            Features::Nearest(centers) => {
                let mut best = 0;
                for (j, c) in centers.iter().enumerate() {
                    if (x[0] - c).abs() < (x[0] - centers[best]).abs() {
                        best = j;
                    }
                }
                out.iter_mut().for_each(|o| *o = 0.0);
                out[best] = 1.0;
            }
        }
    }

    fn has_intercept(&self) -> bool {
        matches!(self, Features::Monomials(_))
    }
}

/// Fitted projection `x ↦ Σ_j c_j φ_j(x)` for several targets at once.
#[derive(Debug, Clone)]
pub struct LinearFit {
    features: Features,
    dim: usize,
    keep: Vec<usize>,
    shift: Vec<f64>,
    scale: Vec<f64>,
    /// `keep.len() × n_targets`, row-major.
    coef: Vec<f64>,
    n_targets: usize,
}

impl LinearFit {
    /// The zero function.
    pub fn zero(basis: &Basis, dim: usize, n_targets: usize) -> Self {
        Self {
            features: basis.features(dim),
            dim,
            keep: Vec::new(),
            shift: Vec::new(),
            scale: Vec::new(),
            coef: Vec::new(),
            n_targets,
        }
    }

    pub fn n_targets(&self) -> usize {
        self.n_targets
    }

    pub fn predict(&self, x: &[f64], out: &mut [f64]) {
        let mut raw = vec![0.0; self.features.len()];
        self.features.eval(&x[..self.dim], &mut raw);
        out.iter_mut().for_each(|o| *o = 0.0);
        for (r, &j) in self.keep.iter().enumerate() {
            let phi = (raw[j] - self.shift[r]) / self.scale[r];
            for (t, o) in out.iter_mut().enumerate() {
                *o += self.coef[r * self.n_targets + t] * phi;
            }
        }
    }

    /// Predictions at every row of a particle-major `n × dim` array.
    pub fn predict_all(&self, x: &[f64]) -> Vec<f64> {
        let n = x.len() / self.dim;
        let mut out = vec![0.0; n * self.n_targets];
        out.par_chunks_mut(self.n_targets)
            .enumerate()
            .for_each(|(i, o)| self.predict(&x[i * self.dim..(i + 1) * self.dim], o));
        out
    }
}

/// Mean of a sample; exact when all entries are equal.
pub(crate) fn exact_mean(xs: &[f64]) -> f64 {
    if xs.iter().all(|&v| v == xs[0]) {
        return xs[0];
    }
    pairwise_sum(xs) / xs.len() as f64
}

/// Least-squares fit of `targets` (`n × n_targets`) on the basis evaluated at
/// `x` (`n × dim`). Non-intercept columns are standardized and columns without
/// spread are dropped; `ridge` is added to their normalized Gram diagonal.
/// Indicator columns are orthogonal and need no ridge.
/// Targets that are constant across rows are reproduced exactly.
pub fn fit(basis: &Basis, x: &[f64], dim: usize, targets: &[f64], n_targets: usize, ridge: f64, node: usize) -> Result<LinearFit> {
    let n = x.len() / dim;
    if n == 0 || targets.len() != n * n_targets {
        return Err(Error::SizeMismatch {
            left: n * n_targets,
            right: targets.len(),
        });
    }
    if x.iter().chain(targets).any(|v| !v.is_finite()) {
        return Err(Error::RegressionSingular { node });
    }
    let features = basis.features(dim);
    let p = features.len();
    let mut raw = vec![0.0; n * p];
    raw.par_chunks_mut(p)
        .enumerate()
        .for_each(|(i, row)| features.eval(&x[i * dim..(i + 1) * dim], row));

    let mut keep = Vec::new();
    let mut shift = Vec::new();
    let mut scale = Vec::new();
    let mut col = vec![0.0; n];
    for j in 0..p {
        for i in 0..n {
            col[i] = raw[i * p + j];
        }
        if features.has_intercept() && j == 0 {
            keep.push(0);
            shift.push(0.0);
            scale.push(1.0);
            continue;
        }
        if !features.has_intercept() {
            if col.iter().any(|&v| v != 0.0) {
                keep.push(j);
                shift.push(0.0);
                scale.push(1.0);
            }
            continue;
        }
        let m = exact_mean(&col);
        let sq: Vec<f64> = col.iter().map(|v| (v - m) * (v - m)).collect();
        let sd = (pairwise_sum(&sq) / n as f64).sqrt();
        if sd > 1e-12 * (1.0 + m.abs()) {
            keep.push(j);
            shift.push(m);
            scale.push(sd);
        }
    }
    let k = keep.len();
    if k > n {
        return Err(Error::RegressionSingular { node });
    }

    let constant: Vec<Option<f64>> = (0..n_targets)
        .map(|t| {
            let v0 = targets[t];
            (0..n).all(|i| targets[i * n_targets + t] == v0).then_some(v0)
        })
        .collect();

    let total = normal_equations(
        n,
        k,
        |i, phi| {
            for (r, &j) in keep.iter().enumerate() {
                phi[r] = (raw[i * p + j] - shift[r]) / scale[r];
            }
        },
        targets,
        n_targets,
    );

    let mut gram = DMatrix::<f64>::from_fn(k, k, |a, b| total[a * k + b] / n as f64);
    for a in 0..k {
        if features.has_intercept() && keep[a] != 0 {
            gram[(a, a)] += ridge;
        }
    }
    let chol = gram.cholesky().ok_or(Error::RegressionSingular { node })?;
    let mut coef = vec![0.0; k * n_targets];
    for t in 0..n_targets {
        if let Some(c) = constant[t] {
            if let Some(r) = keep.iter().position(|&j| j == 0 && features.has_intercept()) {
                coef[r * n_targets + t] = c;
                continue;
            }
        }
        let rhs = DVector::from_fn(k, |a, _| total[k * k + a * n_targets + t] / n as f64);
        let sol = chol.solve(&rhs);
        if sol.iter().any(|v| !v.is_finite()) {
            return Err(Error::RegressionSingular { node });
        }
        for a in 0..k {
            coef[a * n_targets + t] = sol[a];
        }
    }
    Ok(LinearFit {
        features,
        dim,
        keep,
        shift,
        scale,
        coef,
        n_targets,
    })
}

/// Gram matrix and right-hand side of a least-squares problem with design rows
/// produced by `design`, accumulated per fixed chunk of rows and summed in
/// chunk order. Layout: `k × k` Gram, then `k × n_targets` cross products.
fn normal_equations(n: usize, k: usize, design: impl Fn(usize, &mut [f64]) + Sync, targets: &[f64], n_targets: usize) -> Vec<f64> {
    let width = k * k + k * n_targets;
    let partials: Vec<Vec<f64>> = (0..n.div_ceil(CHUNK))
        .into_par_iter()
        .map(|c| {
            let mut acc = vec![0.0; width];
            let mut phi = vec![0.0; k];
            for i in c * CHUNK..((c + 1) * CHUNK).min(n) {
                design(i, &mut phi);
                for a in 0..k {
                    for b in 0..k {
                        acc[a * k + b] += phi[a] * phi[b];
                    }
                    for t in 0..n_targets {
                        acc[k * k + a * n_targets + t] += phi[a] * targets[i * n_targets + t];
                    }
                }
            }
            acc
        })
        .collect();
    let mut total = vec![0.0; width];
    for part in &partials {
        for (s, v) in total.iter_mut().zip(part) {
            *s += v;
        }
    }
    total
}

/// Fitted `Z(x)`, `n_targets × noise` values per point, from
/// `e ≈ Z(X) ΔW` in the least-squares sense.
#[derive(Debug, Clone)]
pub struct MartingaleFit {
    features: Features,
    dim: usize,
    noise: usize,
    keep: Vec<usize>,
    scale: Vec<f64>,
    /// `(keep.len() · noise) × n_targets`, row-major.
    coef: Vec<f64>,
    n_targets: usize,
}

impl MartingaleFit {
    pub fn predict(&self, x: &[f64], out: &mut [f64]) {
        let mut raw = vec![0.0; self.features.len()];
        self.features.eval(&x[..self.dim], &mut raw);
        out.iter_mut().for_each(|o| *o = 0.0);
        let d = self.noise;
        for (r, &j) in self.keep.iter().enumerate() {
            let phi = raw[j] / self.scale[r];
            for e in 0..d {
                for t in 0..self.n_targets {
                    out[t * d + e] += self.coef[(r * d + e) * self.n_targets + t] * phi;
                }
            }
        }
    }

    pub fn predict_all(&self, x: &[f64]) -> Vec<f64> {
        let w = self.n_targets * self.noise;
        let n = x.len() / self.dim;
        let mut out = vec![0.0; n * w];
        out.par_chunks_mut(w)
            .enumerate()
            .for_each(|(i, o)| self.predict(&x[i * self.dim..(i + 1) * self.dim], o));
        out
    }
}

/// Least-squares fit of `innovations` (`n × n_targets`) by `Z(X) ΔW`, with `Z`
/// in the span of the basis. `dw` is `n × noise` and has step variance `dt`.
/// Because the design carries the increments themselves, the estimator has
/// no noise from `ΔW² − dt` and is exact when the innovations are exactly linear in `ΔW`.
#[allow(clippy::too_many_arguments)]
pub fn fit_martingale(
    basis: &Basis,
    x: &[f64],
    dim: usize,
    dw: &[f64],
    noise: usize,
    dt: f64,
    innovations: &[f64],
    n_targets: usize,
    ridge: f64,
    node: usize,
) -> Result<MartingaleFit> {
    let n = x.len() / dim;
    if n == 0 || innovations.len() != n * n_targets || dw.len() != n * noise {
        return Err(Error::SizeMismatch {
            left: n * n_targets,
            right: innovations.len(),
        });
    }
    if x.iter().chain(innovations).chain(dw).any(|v| !v.is_finite()) {
        return Err(Error::RegressionSingular { node });
    }
    let features = basis.features(dim);
    let p = features.len();
    let mut raw = vec![0.0; n * p];
    raw.par_chunks_mut(p)
        .enumerate()
        .for_each(|(i, row)| features.eval(&x[i * dim..(i + 1) * dim], row));
    let mut keep = Vec::new();
    let mut scale = Vec::new();
    for j in 0..p {
        let sq: Vec<f64> = (0..n).map(|i| raw[i * p + j] * raw[i * p + j]).collect();
        let rms = (pairwise_sum(&sq) / n as f64).sqrt();
        if rms > 0.0 {
            keep.push(j);
            scale.push(rms);
        }
    }
    let k = keep.len() * noise;
    if k > n {
        return Err(Error::RegressionSingular { node });
    }
    let sq = dt.sqrt();
    let total = normal_equations(
        n,
        k,
        |i, row| {
            for (r, &j) in keep.iter().enumerate() {
                let phi = raw[i * p + j] / scale[r];
                for e in 0..noise {
                    row[r * noise + e] = phi * dw[i * noise + e] / sq;
                }
            }
        },
        innovations,
        n_targets,
    );
    let mut gram = DMatrix::<f64>::from_fn(k, k, |a, b| total[a * k + b] / n as f64);
    for a in 0..k {
        gram[(a, a)] += ridge;
    }
    let chol = gram.cholesky().ok_or(Error::RegressionSingular { node })?;
    let mut coef = vec![0.0; k * n_targets];
    for t in 0..n_targets {
        let rhs = DVector::from_fn(k, |a, _| total[k * k + a * n_targets + t] / n as f64);
        let sol = chol.solve(&rhs);
        if sol.iter().any(|v| !v.is_finite()) {
            return Err(Error::RegressionSingular { node });
        }
        for a in 0..k {
            coef[a * n_targets + t] = sol[a] / sq;
        }
    }
    Ok(MartingaleFit {
        features,
        dim,
        noise,
        keep,
        scale,
        coef,
        n_targets,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn martingale_fit_recovers_state_dependent_integrand() {
        let n = 2000;
        let dt: f64 = 0.01;
        let x: Vec<f64> = (0..n).map(|i| (i as f64 * 0.731).sin() * 2.0).collect();
        let dw: Vec<f64> = (0..n).map(|i| (i as f64 * 1.37).cos() * dt.sqrt() * 1.4).collect();
        let e: Vec<f64> = x.iter().zip(&dw).map(|(x, w)| (0.5 + 0.3 * x - 0.1 * x * x) * w).collect();
        let f = fit_martingale(&Basis::default(), &x, 1, &dw, 1, dt, &e, 1, 0.0, 0).unwrap();
        let mut out = [0.0];
        f.predict(&[1.0], &mut out);
        assert!((out[0] - 0.7).abs() < 1e-10);
        let zero = fit_martingale(&Basis::default(), &x, 1, &dw, 1, dt, &vec![0.0; n], 1, 1e-10, 0).unwrap();
        assert!(zero.predict_all(&x).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn monomial_exponents() {
        assert_eq!(Basis::exponents(2, 1), vec![vec![0], vec![1], vec![2]]);
        let e = Basis::exponents(2, 2);
        assert_eq!(e.len(), 6);
        assert!(e.contains(&vec![1, 1]));
    }

    #[test]
    fn reproduces_quadratic_exactly() {
        let x: Vec<f64> = (0..50).map(|i| i as f64 / 10.0 - 2.0).collect();
        let y: Vec<f64> = x.iter().map(|v| 1.5 - 2.0 * v + 0.25 * v * v).collect();
        let f = fit(&Basis::default(), &x, 1, &y, 1, 0.0, 0).unwrap();
        let mut out = [0.0];
        f.predict(&[0.7], &mut out);
        assert!((out[0] - (1.5 - 1.4 + 0.25 * 0.49)).abs() < 1e-10);
    }

    #[test]
    fn constant_target_is_exact() {
        let x: Vec<f64> = (0..100).map(|i| (i as f64 * 0.37).sin()).collect();
        let y = vec![0.1; 100];
        let f = fit(&Basis::default(), &x, 1, &y, 1, 1e-10, 0).unwrap();
        assert!(f.predict_all(&x).iter().all(|&v| v == 0.1));
    }

    #[test]
    fn degenerate_states_drop_columns() {
        let x = vec![2.0; 10];
        let y: Vec<f64> = (0..10).map(|i| i as f64).collect();
        let f = fit(&Basis::default(), &x, 1, &y, 1, 1e-10, 0).unwrap();
        let mut out = [0.0];
        f.predict(&[2.0], &mut out);
        assert!((out[0] - 4.5).abs() < 1e-12);
    }

    #[test]
    fn non_finite_input_is_singular() {
        let x = vec![0.0, f64::NAN, 1.0];
        let y = vec![0.0; 3];
        assert!(matches!(
            fit(&Basis::default(), &x, 1, &y, 1, 1e-10, 7),
            Err(Error::RegressionSingular { node: 7 })
        ));
    }

    /// Random walk with ±√dt steps: with every path enumerated, the empirical
    /// distribution is the true one, so indicator regression must return
    /// exact conditional expectations.
    #[test]
    fn indicator_basis_gives_exact_conditional_expectations() {
        let dt: f64 = 0.25;
        let h = dt.sqrt();
        let steps = 3;
        let paths: Vec<Vec<f64>> = (0..1usize << steps)
            .map(|bits| {
                let mut x = vec![0.0];
                for s in 0..steps {
                    let sign = if bits >> s & 1 == 1 { 1.0 } else { -1.0 };
                    x.push(x[s] + sign * h);
                }
                x
            })
            .collect();
        let g = |x: f64| (x * 1.3).sin() + x * x;
        for node in 0..steps {
            let xs: Vec<f64> = paths.iter().map(|p| p[node]).collect();
            let ys: Vec<f64> = paths.iter().map(|p| g(p[steps])).collect();
            let mut centers: Vec<f64> = xs.clone();
            centers.sort_by(f64::total_cmp);
            centers.dedup_by(|a, b| (*a - *b).abs() < 1e-12);
            let f = fit(&Basis::Indicator { centers: centers.clone() }, &xs, 1, &ys, 1, 1e-10, node).unwrap();
            for &c in &centers {
                let hits: Vec<f64> = paths
                    .iter()
                    .filter(|p| (p[node] - c).abs() < 1e-12)
                    .map(|p| g(p[steps]))
                    .collect();
                let want = hits.iter().sum::<f64>() / hits.len() as f64;
                let mut out = [0.0];
                f.predict(&[c], &mut out);
                assert!((out[0] - want).abs() < 1e-14, "node {node}: {} vs {want}", out[0]);
            }
        }
    }

    #[test]
    fn result_independent_of_thread_count() {
        let x: Vec<f64> = (0..5000).map(|i| ((i * 7919) % 1000) as f64 / 333.0).collect();
        let y: Vec<f64> = x.iter().map(|v| v.exp().sin()).collect();
        let run = |threads: usize| {
            let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
            pool.install(|| fit(&Basis::default(), &x, 1, &y, 1, 1e-10, 0).unwrap().predict_all(&x))
        };
        assert_eq!(run(1), run(4));
    }
}

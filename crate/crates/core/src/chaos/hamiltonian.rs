//! Pointwise minimization of the reduced Hamiltonian `a ↦ f₁ + b₁·y − χ·a`.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// `(t, x, a, mu) -> value`, where `mu` holds equal-weight samples.
pub type ScalarFn = dyn Fn(f64, &[f64], &[f64], &[f64]) -> f64 + Send + Sync;
/// `(t, x, a, mu, out)`.
pub type VectorFn = dyn Fn(f64, &[f64], &[f64], &[f64], &mut [f64]) + Send + Sync;

#[derive(Debug, Clone, PartialEq)]
pub enum Admissible {
    All,
    /// Componentwise `lower ≤ a ≤ upper`.
    Box { lower: Vec<f64>, upper: Vec<f64> },
}

/// The control-dependent parts `f₁`, `b₁` of the running cost and drift,
/// with their control derivatives.
pub struct HamiltonianBundle {
    pub control_dim: usize,
    pub state_dim: usize,
    pub f1: Box<ScalarFn>,
    /// `∂_a f₁`, length `control_dim`.
    pub df1: Box<VectorFn>,
    /// `b₁`, length `state_dim`.
    pub b1: Box<VectorFn>,
    /// `∂_a b₁`, `state_dim × control_dim` row-major.
    pub db1: Box<VectorFn>,
    /// Strong convexity modulus of `f₁ + b₁·y` in `a`.
    pub gamma: f64,
    pub admissible: Admissible,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Minimizer {
    pub control: Vec<f64>,
    /// Components pinned at a bound of the box.
    pub active: Vec<bool>,
    pub iterations: usize,
    /// Largest first-order residual over the free components.
    pub residual: f64,
}

pub const MAX_NEWTON_ITER: usize = 100;

impl HamiltonianBundle {
    pub fn validate(&self) -> Result<()> {
        if !(self.gamma > 0.0) {
            return Err(Error::param("gamma", self.gamma, "convexity modulus must be positive"));
        }
        if let Admissible::Box { lower, upper } = &self.admissible {
            if lower.len() != self.control_dim || upper.len() != self.control_dim {
                return Err(Error::SizeMismatch {
                    left: self.control_dim,
                    right: lower.len().min(upper.len()),
                });
            }
            if let Some((l, _)) = lower.iter().zip(upper).find(|(l, u)| !(l <= u)) {
                return Err(Error::param("lower", *l, "admissible box has lower > upper"));
            }
        }
        Ok(())
    }

    fn project(&self, a: &mut [f64]) {
        if let Admissible::Box { lower, upper } = &self.admissible {
            for ((v, l), u) in a.iter_mut().zip(lower).zip(upper) {
                *v = v.clamp(*l, *u);
            }
        }
    }

    /// `∂_a f₁ + (∂_a b₁)ᵀ y − χ`.
    fn gradient(&self, t: f64, x: &[f64], a: &[f64], y: &[f64], mu: &[f64], chi: &[f64]) -> Vec<f64> {
        let (m, l) = (self.control_dim, self.state_dim);
        let mut g = vec![0.0; m];
        (self.df1)(t, x, a, mu, &mut g);
        let mut db = vec![0.0; l * m];
        (self.db1)(t, x, a, mu, &mut db);
        for j in 0..m {
            for r in 0..l {
                g[j] += db[r * m + j] * y[r];
            }
            g[j] -= chi[j];
        }
        g
    }

    fn objective(&self, t: f64, x: &[f64], a: &[f64], y: &[f64], mu: &[f64], chi: &[f64]) -> f64 {
        let mut b = vec![0.0; self.state_dim];
        (self.b1)(t, x, a, mu, &mut b);
        (self.f1)(t, x, a, mu) + b.iter().zip(y).map(|(u, v)| u * v).sum::<f64>()
            - a.iter().zip(chi).map(|(u, v)| u * v).sum::<f64>()
    }

    /// Largest relative mismatch between the supplied derivatives and central
    /// differences of `f₁`, `b₁`, over `n_probes` random points in `[-2, 2]`.
    pub fn derivative_mismatch(&self, n_probes: usize, seed: u64) -> f64 {
        let (m, l) = (self.control_dim, self.state_dim);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut worst: f64 = 0.0;
        for _ in 0..n_probes {
            let t = rng.random::<f64>();
            let x: Vec<f64> = (0..l).map(|_| rng.random_range(-2.0..2.0)).collect();
            let mut a: Vec<f64> = (0..m).map(|_| rng.random_range(-2.0..2.0)).collect();
            self.project(&mut a);
            let mu: Vec<f64> = (0..8).map(|_| rng.random_range(-2.0..2.0)).collect();
            let mut df = vec![0.0; m];
            (self.df1)(t, &x, &a, &mu, &mut df);
            let mut db = vec![0.0; l * m];
            (self.db1)(t, &x, &a, &mu, &mut db);
            for j in 0..m {
                let h = 1e-5 * (1.0 + a[j].abs());
                let (mut ap, mut am) = (a.clone(), a.clone());
                ap[j] += h;
                am[j] -= h;
                let fd = ((self.f1)(t, &x, &ap, &mu) - (self.f1)(t, &x, &am, &mu)) / (2.0 * h);
                worst = worst.max((fd - df[j]).abs() / (1.0 + df[j].abs()));
                let (mut bp, mut bm) = (vec![0.0; l], vec![0.0; l]);
                (self.b1)(t, &x, &ap, &mu, &mut bp);
                (self.b1)(t, &x, &am, &mu, &mut bm);
                for r in 0..l {
                    let fd = (bp[r] - bm[r]) / (2.0 * h);
                    let d = db[r * m + j];
                    worst = worst.max((fd - d).abs() / (1.0 + d.abs()));
                }
            }
        }
        worst
    }
}

/// Solves `∂_a f₁(t, x, a, μ) + ∂_a b₁(t, x, a, μ)ᵀ y = χ` for the minimizer
/// `Λ(t, x, y, μ, χ)` by damped Newton, projected onto the box when there is one.
/// The Jacobian is a central-difference Hessian; its symmetric part is checked
/// against the declared modulus `γ`.
pub fn minimize_hamiltonian(hb: &HamiltonianBundle, t: f64, x: &[f64], y: &[f64], mu: &[f64], chi: &[f64]) -> Result<Minimizer> {
    hb.validate()?;
    let m = hb.control_dim;
    if x.len() != hb.state_dim || y.len() != hb.state_dim || chi.len() != m {
        return Err(Error::SizeMismatch {
            left: hb.state_dim,
            right: x.len(),
        });
    }
    if !t.is_finite() || x.iter().chain(y).chain(mu).chain(chi).any(|v| !v.is_finite()) {
        return Err(Error::OutsideDomain("non-finite Hamiltonian argument"));
    }
    let tol = 1e-10 * (1.0 + chi.iter().fold(0.0_f64, |s, v| s.max(v.abs())));
    let bounds = match &hb.admissible {
        Admissible::All => None,
        Admissible::Box { lower, upper } => Some((lower.clone(), upper.clone())),
    };
    let mut a = vec![0.0; m];
    hb.project(&mut a);
    let mut residual = f64::INFINITY;
    for iter in 0..=MAX_NEWTON_ITER {
        let g = hb.gradient(t, x, &a, y, mu, chi);
        if g.iter().any(|v| !v.is_finite()) {
            return Err(Error::OutsideDomain("non-finite Hamiltonian gradient"));
        }
        let active: Vec<bool> = (0..m)
            .map(|j| match &bounds {
                Some((lo, hi)) => (a[j] <= lo[j] && g[j] > 0.0) || (a[j] >= hi[j] && g[j] < 0.0),
                None => false,
            })
            .collect();
        residual = (0..m).filter(|&j| !active[j]).fold(0.0, |s, j| s.max(g[j].abs()));
        if residual <= tol {
            return Ok(Minimizer {
                control: a,
                active,
                iterations: iter,
                residual,
            });
        }
        if iter == MAX_NEWTON_ITER {
            break;
        }

        let free: Vec<usize> = (0..m).filter(|&j| !active[j]).collect();
        let mut jac = DMatrix::<f64>::zeros(m, m);
        for j in 0..m {
            let h = 1e-5 * (1.0 + a[j].abs());
            let (mut ap, mut am) = (a.clone(), a.clone());
            ap[j] += h;
            am[j] -= h;
            let gp = hb.gradient(t, x, &ap, y, mu, chi);
            let gm = hb.gradient(t, x, &am, y, mu, chi);
            for i in 0..m {
                jac[(i, j)] = (gp[i] - gm[i]) / (2.0 * h);
            }
        }
        let sym = (&jac + jac.transpose()) * 0.5;
        let lowest = sym.symmetric_eigenvalues().min();
        if !(lowest >= 0.5 * hb.gamma) {
            return Err(Error::NoConvergence {
                iterations: iter,
                residual,
            });
        }
        let k = free.len();
        let reduced = DMatrix::from_fn(k, k, |r, c| jac[(free[r], free[c])]);
        let rhs = DVector::from_fn(k, |r, _| -g[free[r]]);
        let step = reduced
            .lu()
            .solve(&rhs)
            .unwrap_or_else(|| rhs.map(|v| v / hb.gamma));

        let h0 = hb.objective(t, x, &a, y, mu, chi);
        let mut scale = 1.0;
        let mut accepted = false;
        for _ in 0..40 {
            let mut trial = a.clone();
            for (r, &j) in free.iter().enumerate() {
                trial[j] += scale * step[r];
            }
            hb.project(&mut trial);
            let h1 = hb.objective(t, x, &trial, y, mu, chi);
            let descent: f64 = free.iter().map(|&j| g[j] * (trial[j] - a[j])).sum();
            if h1 <= h0 + 1e-4 * descent || (h1 - h0).abs() <= 1e-15 * (1.0 + h0.abs()) {
                a = trial;
                accepted = true;
                break;
            }
            scale *= 0.5;
        }
        if !accepted {
            for (r, &j) in free.iter().enumerate() {
                a[j] += scale * step[r];
            }
            hb.project(&mut a);
        }
    }
    Err(Error::NoConvergence {
        iterations: MAX_NEWTON_ITER,
        residual,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lq(r: f64, b: f64, admissible: Admissible) -> HamiltonianBundle {
        HamiltonianBundle {
            control_dim: 1,
            state_dim: 1,
            f1: Box::new(move |_, _, a, _| r * a[0] * a[0]),
            df1: Box::new(move |_, _, a, _, out| out[0] = 2.0 * r * a[0]),
            b1: Box::new(move |_, _, a, _, out| out[0] = b * a[0]),
            db1: Box::new(move |_, _, _, _, out| out[0] = b),
            gamma: 2.0 * r,
            admissible,
        }
    }

    #[test]
    fn lq_minimizer_is_linear_solve() {
        let hb = lq(0.5, 1.0, Admissible::All);
        let sol = minimize_hamiltonian(&hb, 0.0, &[0.3], &[1.0], &[], &[0.0]).unwrap();
        assert!((sol.control[0] + 1.0).abs() < 1e-10);
        assert!(sol.residual <= 1e-10);
        for (chi, y) in [(0.7, -2.0), (-3.0, 0.25), (10.0, 5.0)] {
            let sol = minimize_hamiltonian(&hb, 0.0, &[0.0], &[y], &[], &[chi]).unwrap();
            assert!((sol.control[0] - (chi - y)).abs() < 1e-10 * (1.0 + chi.abs()));
        }
    }

    #[test]
    fn zero_is_returned_at_a_fixed_point() {
        let hb = lq(0.5, 1.0, Admissible::All);
        let sol = minimize_hamiltonian(&hb, 0.0, &[0.0], &[2.0], &[], &[2.0]).unwrap();
        assert_eq!(sol.control, vec![0.0]);
        assert_eq!(sol.iterations, 0);
    }

    #[test]
    fn box_constraint_matches_grid_search() {
        // Unconstrained optimum at 2.
        let hb = lq(
            0.5,
            1.0,
            Admissible::Box {
                lower: vec![-1.0],
                upper: vec![1.0],
            },
        );
        let sol = minimize_hamiltonian(&hb, 0.0, &[0.0], &[-2.0], &[], &[0.0]).unwrap();
        assert_eq!(sol.control, vec![1.0]);
        assert_eq!(sol.active, vec![true]);
        let grid_best = (0..=20_000)
            .map(|i| -1.0 + i as f64 * 1e-4)
            .min_by(|p, q| {
                let h = |a: f64| 0.5 * a * a - 2.0 * a;
                h(*p).total_cmp(&h(*q))
            })
            .unwrap();
        assert!((sol.control[0] - grid_best).abs() <= 1e-4);
    }

    #[test]
    fn nonlinear_convex_control() {
        // f₁ = a²/2 + cosh(a): first-order condition a + sinh(a) + y = χ.
        let hb = HamiltonianBundle {
            control_dim: 1,
            state_dim: 1,
            f1: Box::new(|_, _, a, _| 0.5 * a[0] * a[0] + a[0].cosh()),
            df1: Box::new(|_, _, a, _, out| out[0] = a[0] + a[0].sinh()),
            b1: Box::new(|_, _, a, _, out| out[0] = a[0]),
            db1: Box::new(|_, _, _, _, out| out[0] = 1.0),
            gamma: 1.0,
            admissible: Admissible::All,
        };
        let sol = minimize_hamiltonian(&hb, 0.0, &[0.0], &[-4.0], &[], &[1.0]).unwrap();
        let a = sol.control[0];
        assert!((a + a.sinh() - 5.0).abs() <= 1e-10 * 2.0);
        assert!(hb.derivative_mismatch(50, 3) < 1e-4);
    }

    #[test]
    fn two_dimensional_box() {
        // f₁ = |a|²/2 + a₀a₁/10, b₁ = a, y = (-4, 1/2), box [-1, 1]²: a₀ pinned at 1.
        let hb = HamiltonianBundle {
            control_dim: 2,
            state_dim: 2,
            f1: Box::new(|_, _, a, _| 0.5 * (a[0] * a[0] + a[1] * a[1]) + 0.1 * a[0] * a[1]),
            df1: Box::new(|_, _, a, _, out| {
                out[0] = a[0] + 0.1 * a[1];
                out[1] = a[1] + 0.1 * a[0];
            }),
            b1: Box::new(|_, _, a, _, out| out.copy_from_slice(a)),
            db1: Box::new(|_, _, _, _, out| out.copy_from_slice(&[1.0, 0.0, 0.0, 1.0])),
            gamma: 0.9,
            admissible: Admissible::Box {
                lower: vec![-1.0, -1.0],
                upper: vec![1.0, 1.0],
            },
        };
        let sol = minimize_hamiltonian(&hb, 0.0, &[0.0, 0.0], &[-4.0, 0.5], &[], &[0.0, 0.0]).unwrap();
        assert_eq!(sol.active, vec![true, false]);
        assert_eq!(sol.control[0], 1.0);
        assert!((sol.control[1] - (-0.5 - 0.1)).abs() < 1e-10);
    }

    #[test]
    fn wrong_derivative_is_detected() {
        let mut hb = lq(1.0, 1.0, Admissible::All);
        hb.df1 = Box::new(|_, _, a, _, out| out[0] = 2.2 * a[0]);
        assert!(hb.derivative_mismatch(20, 1) > 1e-2);
        assert!(lq(1.0, 1.0, Admissible::All).derivative_mismatch(20, 1) < 1e-4);
    }

    #[test]
    fn nonconvex_bundle_is_refused() {
        let mut hb = lq(-1.0, 1.0, Admissible::All);
        hb.gamma = 1.0;
        assert!(matches!(
            minimize_hamiltonian(&hb, 0.0, &[0.0], &[1.0], &[], &[0.0]),
            Err(Error::NoConvergence { .. })
        ));
    }

    #[test]
    fn bad_inputs() {
        let hb = lq(1.0, 1.0, Admissible::All);
        assert!(matches!(
            minimize_hamiltonian(&hb, 0.0, &[f64::NAN], &[1.0], &[], &[0.0]),
            Err(Error::OutsideDomain(_))
        ));
        let mut bad = lq(1.0, 1.0, Admissible::All);
        bad.gamma = 0.0;
        assert!(minimize_hamiltonian(&bad, 0.0, &[0.0], &[1.0], &[], &[0.0]).is_err());
    }
}

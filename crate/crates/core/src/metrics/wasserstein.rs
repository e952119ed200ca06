use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::stats::pairwise_sum;

/// Number of quantile cells used for Gaussian-vs-Gaussian couplings.
pub const GAUSSIAN_CELLS: usize = 10_000;

fn sorted(xs: &[f64]) -> Vec<f64> {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    v
}

/// Exact `W₂` between two equal-weight empirical measures on the line.
///
/// Equal sizes use the sorted pairing; unequal sizes integrate the squared
/// difference of the two quantile step functions over their common refinement.
pub fn wasserstein2_1d(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::EmptySample);
    }
    Ok(wasserstein2_sorted(&sorted(a), &sorted(b)))
}

/// `W₂` between two empirical measures given as ascending samples, of any sizes.
///
/// Integrates the squared difference of the piecewise-constant quantile
/// functions over the merged breakpoints `i/n` and `j/m`.
pub fn wasserstein2_sorted(sa: &[f64], sb: &[f64]) -> f64 {
    if sa.len() == sb.len() {
        let sq: Vec<f64> = sa.iter().zip(sb).map(|(x, y)| (x - y) * (x - y)).collect();
        return (pairwise_sum(&sq) / sa.len() as f64).sqrt();
    }
    let (n, m) = (sa.len(), sb.len());
    let mut pieces = Vec::with_capacity(n + m);
    let (mut i, mut j) = (0usize, 0usize);
    let mut u = 0.0;
    while i < n && j < m {
        // next breakpoints (i+1)/n and (j+1)/m compared exactly in integers
        let lhs = (i + 1) * m;
        let rhs = (j + 1) * n;
        let next = if lhs <= rhs { (i + 1) as f64 / n as f64 } else { (j + 1) as f64 / m as f64 };
        let d = sa[i] - sb[j];
        pieces.push(d * d * (next - u));
        u = next;
        if lhs <= rhs {
            i += 1;
        }
        if rhs <= lhs {
            j += 1;
        }
    }
    pairwise_sum(&pieces).sqrt()
}

/// Partial moments of the standard normal over `[z_lo, z_hi]`:
/// `(∫φ, ∫zφ, ∫z²φ)`, with infinite endpoints allowed.
fn partial_moments(z_lo: f64, z_hi: f64, du: f64) -> (f64, f64) {
    let phi = |z: f64| if z.is_finite() { (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt() } else { 0.0 };
    let zphi = |z: f64| if z.is_finite() { z * phi(z) } else { 0.0 };
    let first = phi(z_lo) - phi(z_hi);
    let second = du + zphi(z_lo) - zphi(z_hi);
    (first, second)
}

fn standard_normal() -> Normal {
    Normal::new(0.0, 1.0).expect("unit normal")
}

/// Exact `W₂` between an empirical measure and `N(mean, std²)`.
///
/// On each empirical cell `[i/n, (i+1)/n]` the coupling cost
/// `∫ (x_(i) - mean - std z(u))² du` is evaluated in closed form through
/// partial moments of the standard normal.
pub fn wasserstein2_to_gaussian(samples: &[f64], mean: f64, std: f64) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::EmptySample);
    }
    if !(std.is_finite() && std >= 0.0) {
        return Err(Error::param("std", std, "must be nonnegative"));
    }
    let s = sorted(samples);
    let n = s.len();
    let normal = standard_normal();
    let z_at = |i: usize| -> f64 {
        match i {
            0 => f64::NEG_INFINITY,
            i if i == n => f64::INFINITY,
            i => normal.inverse_cdf(i as f64 / n as f64),
        }
    };
    let du = 1.0 / n as f64;
    let mut z_lo = z_at(0);
    let cells: Vec<f64> = (0..n)
        .map(|i| {
            let z_hi = z_at(i + 1);
            let (i1, i2) = partial_moments(z_lo, z_hi, du);
            z_lo = z_hi;
            let d = s[i] - mean;
            (d * d * du - 2.0 * d * std * i1 + std * std * i2).max(0.0)
        })
        .collect();
    Ok(pairwise_sum(&cells).sqrt())
}

/// Result of a quantile-grid integration together with its refinement check.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussianW2 {
    pub value: f64,
    /// `|W(n) - W(2n)|`, the Richardson estimate of the grid error.
    pub grid_error: f64,
}

fn gaussian_pair_on_grid(dm: f64, ds: f64, cells: usize) -> f64 {
    let normal = standard_normal();
    let du = 1.0 / cells as f64;
    let mut z_lo = f64::NEG_INFINITY;
    let parts: Vec<f64> = (0..cells)
        .map(|i| {
            let z_hi = if i + 1 == cells { f64::INFINITY } else { normal.inverse_cdf((i + 1) as f64 * du) };
            let (i1, i2) = partial_moments(z_lo, z_hi, du);
            z_lo = z_hi;
            dm * dm * du + 2.0 * dm * ds * i1 + ds * ds * i2
        })
        .collect();
    pairwise_sum(&parts).max(0.0).sqrt()
}

/// `W₂(N(m1, s1²), N(m2, s2²))` by integrating the quantile coupling over a
/// grid of [`GAUSSIAN_CELLS`] quantile cells, with a doubled-grid check.
pub fn wasserstein2_gaussians(m1: f64, s1: f64, m2: f64, s2: f64) -> Result<GaussianW2> {
    for (name, v) in [("s1", s1), ("s2", s2)] {
        if !(v.is_finite() && v >= 0.0) {
            return Err(Error::param(name, v, "must be nonnegative"));
        }
    }
    let coarse = gaussian_pair_on_grid(m1 - m2, s1 - s2, GAUSSIAN_CELLS);
    let fine = gaussian_pair_on_grid(m1 - m2, s1 - s2, 2 * GAUSSIAN_CELLS);
    Ok(GaussianW2 {
        value: fine,
        grid_error: (fine - coarse).abs(),
    })
}

pub const EXACT_LIMIT: usize = 64;

/// Exact `W₂` between two equal-size point clouds in `R^d` (rows of `a`, `b`)
/// by solving the assignment problem on squared Euclidean costs.
pub fn wasserstein2_exact_small(a: &[Vec<f64>], b: &[Vec<f64>]) -> Result<f64> {
    let n = a.len();
    if n == 0 || b.is_empty() {
        return Err(Error::EmptySample);
    }
    if n != b.len() {
        return Err(Error::SizeMismatch { left: n, right: b.len() });
    }
    if n > EXACT_LIMIT {
        return Err(Error::SizeLimit { n, limit: EXACT_LIMIT });
    }
    let cost: Vec<Vec<f64>> = a
        .iter()
        .map(|x| {
            b.iter()
                .map(|y| {
                    assert_eq!(x.len(), y.len(), "points must share a dimension");
                    x.iter().zip(y).map(|(u, v)| (u - v) * (u - v)).sum()
                })
                .collect()
        })
        .collect();
    let assignment = hungarian(&cost);
    let total: Vec<f64> = assignment.iter().enumerate().map(|(i, &j)| cost[i][j]).collect();
    Ok((pairwise_sum(&total) / n as f64).sqrt())
}

/// Minimum-cost perfect matching on a square cost matrix (shortest augmenting
/// paths with potentials). Returns the column assigned to each row.
fn hungarian(cost: &[Vec<f64>]) -> Vec<usize> {
    let n = cost.len();
    let inf = f64::INFINITY;
    // 1-based arrays; column 0 is a sentinel
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut p = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0;
        let mut minv = vec![inf; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = inf;
            let mut j1 = 0;
            for j in 1..=n {
                if !used[j] {
                    let cur = cost[i0 - 1][j - 1] - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut rows = vec![0usize; n];
    for j in 1..=n {
        rows[p[j] - 1] = j - 1;
    }
    rows
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{normals, StreamKey};
    use proptest::prelude::*;
    use statrs::distribution::Continuous;

    fn permutations(n: usize) -> Vec<Vec<usize>> {
        if n == 1 {
            return vec![vec![0]];
        }
        let mut out = Vec::new();
        for p in permutations(n - 1) {
            for pos in 0..n {
                let mut q = p.clone();
                q.insert(pos, n - 1);
                out.push(q);
            }
        }
        out
    }

    #[test]
    fn worked_examples() {
        assert_eq!(wasserstein2_1d(&[0.0, 1.0], &[1.0, 2.0]).unwrap(), 1.0);
        assert_eq!(wasserstein2_1d(&[3.0, -1.0, 2.0], &[2.0, 3.0, -1.0]).unwrap(), 0.0);
        assert!((wasserstein2_1d(&[0.0; 5], &[-2.5; 5]).unwrap() - 2.5).abs() < 1e-15);
        assert!(matches!(wasserstein2_1d(&[], &[1.0]), Err(Error::EmptySample)));
    }

    #[test]
    fn unequal_sizes_match_replicated_equal_sizes() {
        // {a} vs {b, c}: replicating a to size 2 gives the same measure
        let a = [0.3, -1.0, 2.2];
        let b = [0.0, 1.5];
        let a6: Vec<f64> = a.iter().flat_map(|x| [*x, *x]).collect();
        let b6: Vec<f64> = b.iter().flat_map(|x| [*x, *x, *x]).collect();
        let direct = wasserstein2_1d(&a, &b).unwrap();
        let replicated = wasserstein2_1d(&a6, &b6).unwrap();
        assert!((direct - replicated).abs() < 1e-14);
    }

    #[test]
    fn assignment_matches_permutation_enumeration() {
        let a = vec![vec![0.0, 1.0], vec![2.0, -1.0], vec![0.5, 0.5]];
        let b = vec![vec![1.0, 1.0], vec![-1.0, 0.0], vec![2.0, 2.0]];
        let brute = permutations(3)
            .iter()
            .map(|p| {
                p.iter()
                    .enumerate()
                    .map(|(i, &j)| a[i].iter().zip(&b[j]).map(|(u, v)| (u - v) * (u - v)).sum::<f64>())
                    .sum::<f64>()
            })
            .fold(f64::INFINITY, f64::min);
        let exact = wasserstein2_exact_small(&a, &b).unwrap();
        assert!((exact - (brute / 3.0).sqrt()).abs() < 1e-14);
        assert_eq!(wasserstein2_exact_small(&a, &a).unwrap(), 0.0);
        let single = wasserstein2_exact_small(&[vec![0.0, 0.0]], &[vec![3.0, 4.0]]).unwrap();
        assert_eq!(single, 5.0);
    }

    #[test]
    fn exact_small_limits() {
        let big = vec![vec![0.0]; 65];
        assert!(matches!(wasserstein2_exact_small(&big, &big), Err(Error::SizeLimit { .. })));
        assert!(matches!(
            wasserstein2_exact_small(&big[..3], &big[..2]),
            Err(Error::SizeMismatch { .. })
        ));
    }

    #[test]
    fn gaussian_pairs_match_closed_form() {
        for (m1, s1, m2, s2) in [(0.0, 1.0, 0.0, 1.0), (1.0, 2.0, -0.5, 0.5), (3.0, 0.1, 3.0, 4.0), (0.0, 0.0, 1.0, 1.0)] {
            let got = wasserstein2_gaussians(m1, s1, m2, s2).unwrap();
            let exact = ((m1 - m2) * (m1 - m2) + (s1 - s2) * (s1 - s2)).sqrt();
            assert!((got.value - exact).abs() < 1e-6, "{got:?} vs {exact}");
            assert!(got.grid_error < 1e-6);
        }
    }

    #[test]
    fn point_mass_to_gaussian() {
        // W₂(δ_c, N(m, s²))² = (c - m)² + s²
        let w = wasserstein2_to_gaussian(&[0.7], 0.2, 1.5).unwrap();
        assert!((w - (0.25f64 + 2.25).sqrt()).abs() < 1e-12);
    }

    #[test]
    fn two_point_sample_to_gaussian() {
        // cells [0, 1/2] and [1/2, 1]: E[z | z < 0] = -2 φ(0)
        let w = wasserstein2_to_gaussian(&[-1.0, 1.0], 0.0, 1.0).unwrap();
        let exact = (1.0 + 1.0 - 2.0 * 2.0 * standard_normal().pdf(0.0)).sqrt();
        assert!((w - exact).abs() < 1e-12);
    }

    #[test]
    fn empirical_gaussian_rate() {
        // E W₂²(L^N, N(0,1)) decays roughly like 1/N (up to log factors)
        let sizes = [64usize, 256, 1024, 4096];
        let reps = 200;
        let mut means = Vec::new();
        for &n in &sizes {
            let vals: Vec<f64> = (0..reps)
                .map(|r| {
                    let xs = normals(StreamKey::new(11, r, n), n);
                    wasserstein2_to_gaussian(&xs, 0.0, 1.0).unwrap().powi(2)
                })
                .collect();
            means.push(crate::stats::mean(&vals));
        }
        let slope = (means[3].ln() - means[0].ln()) / ((4096f64).ln() - (64f64).ln());
        assert!((-1.1..=-0.8).contains(&slope), "slope {slope}");
    }

    proptest! {
        #[test]
        fn one_d_equals_assignment(xs in proptest::collection::vec((-5.0..5.0f64, -5.0..5.0f64), 1..33)) {
            let a: Vec<f64> = xs.iter().map(|p| p.0).collect();
            let b: Vec<f64> = xs.iter().map(|p| p.1).collect();
            let w1 = wasserstein2_1d(&a, &b).unwrap();
            let av: Vec<Vec<f64>> = a.iter().map(|x| vec![*x]).collect();
            let bv: Vec<Vec<f64>> = b.iter().map(|x| vec![*x]).collect();
            let w2 = wasserstein2_exact_small(&av, &bv).unwrap();
            prop_assert!((w1 - w2).abs() <= 1e-12);
        }

        #[test]
        fn triangle_and_scaling(
            pts in proptest::collection::vec((-5.0..5.0f64, -5.0..5.0f64, -5.0..5.0f64), 1..40),
            c in -3.0..3.0f64,
        ) {
            let a: Vec<f64> = pts.iter().map(|p| p.0).collect();
            let b: Vec<f64> = pts.iter().map(|p| p.1).collect();
            let d: Vec<f64> = pts.iter().map(|p| p.2).collect();
            let ab = wasserstein2_1d(&a, &b).unwrap();
            let bd = wasserstein2_1d(&b, &d).unwrap();
            let ad = wasserstein2_1d(&a, &d).unwrap();
            prop_assert!(ad <= ab + bd + 1e-12);
            let ca: Vec<f64> = a.iter().map(|x| c * x).collect();
            let cb: Vec<f64> = b.iter().map(|x| c * x).collect();
            let scaled = wasserstein2_1d(&ca, &cb).unwrap();
            prop_assert!((scaled - c.abs() * ab).abs() <= 1e-10 * (1.0 + ab));
        }
    }
}

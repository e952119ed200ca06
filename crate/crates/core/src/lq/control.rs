use crate::error::Result;
use crate::lq::spec::LqSpec;

/// Closed-form equilibrium controls of the N-player LQ games.
///
/// The Nash control of player `i` is
///
/// ```text
/// alpha_i = -(1/2R) [ (S̄/N)(X_i - rho_N X̄) + B Y_ii + B̄ ybar_i - rho_N (B Ȳ + B̄ Y̿) ]
/// ```
///
/// with `rho_N = (R̄/N) / (R + R̄/N)`, `ybar_i` the row mean of `Y_i.`, `Ȳ`
/// the mean of the diagonal and `Y̿` the mean of all entries. It splits as
/// `-B Y_ii / 2R + R_N`, where the remainder `R_N` vanishes without interaction.
#[derive(Debug, Clone, Copy)]
pub struct EquilibriumControlMap {
    spec: LqSpec,
    n: usize,
    rho_n: f64,
}

/// Statistics of the adjoint matrix seen by one player.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdjointStats {
    pub x_own: f64,
    pub x_mean: f64,
    pub y_own: f64,
    pub y_row_mean: f64,
    pub y_diag_mean: f64,
    pub y_all_mean: f64,
}

impl EquilibriumControlMap {
    pub fn new(spec: &LqSpec, n: usize) -> Result<Self> {
        spec.validate_players(n)?;
        let nf = n as f64;
        let rho_n = (spec.r_bar / nf) / (spec.r + spec.r_bar / nf);
        Ok(Self { spec: *spec, n, rho_n })
    }

    pub fn n_players(&self) -> usize {
        self.n
    }

    pub fn rho_n(&self) -> f64 {
        self.rho_n
    }

    /// `R_N`: the part of the Nash control not carried by the own diagonal adjoint.
    pub fn remainder(&self, s: &AdjointStats) -> f64 {
        let p = &self.spec;
        let nf = self.n as f64;
        let rho = self.rho_n;
        -((p.s_bar / nf) * (s.x_own - rho * s.x_mean) + p.b_bar * s.y_row_mean
            - rho * (p.b * s.y_diag_mean + p.b_bar * s.y_all_mean))
            / (2.0 * p.r)
    }

    pub fn nash(&self, s: &AdjointStats) -> f64 {
        -self.spec.b * s.y_own / (2.0 * self.spec.r) + self.remainder(s)
    }

    /// Mean Nash control `ᾱ = -[(S̄/N) X̄ + B Ȳ + B̄ Y̿] / 2(R + R̄/N)`.
    pub fn nash_mean(&self, x_mean: f64, y_diag_mean: f64, y_all_mean: f64) -> f64 {
        let p = &self.spec;
        let nf = self.n as f64;
        -((p.s_bar / nf) * x_mean + p.b * y_diag_mean + p.b_bar * y_all_mean) / (2.0 * (p.r + p.r_bar / nf))
    }

    /// Nash controls of all players from states `x` and the row-major `N×N` adjoint matrix `y`.
    pub fn nash_all(&self, x: &[f64], y: &[f64]) -> Vec<f64> {
        let stats = adjoint_stats(x, y);
        stats.iter().map(|s| self.nash(s)).collect()
    }

    /// First-order conditions `2R a_i + (2R̄/N) ā + (S̄/N) X_i + B Y_ii + B̄ ybar_i` at given controls.
    pub fn foc_residual(&self, x: &[f64], y: &[f64], alpha: &[f64]) -> Vec<f64> {
        let p = &self.spec;
        let nf = self.n as f64;
        let alpha_mean = alpha.iter().sum::<f64>() / nf;
        adjoint_stats(x, y)
            .iter()
            .zip(alpha)
            .map(|(s, a)| {
                2.0 * p.r * a + 2.0 * p.r_bar / nf * alpha_mean + p.s_bar / nf * s.x_own + p.b * s.y_own
                    + p.b_bar * s.y_row_mean
            })
            .collect()
    }

    /// Mean-field equilibrium control `-B Y / 2R`.
    pub fn mfg(&self, y: f64) -> f64 {
        -self.spec.b * y / (2.0 * self.spec.r)
    }
}

/// Per-player statistics of states `x` and row-major adjoint matrix `y`.
pub fn adjoint_stats(x: &[f64], y: &[f64]) -> Vec<AdjointStats> {
    let n = x.len();
    assert_eq!(y.len(), n * n);
    let nf = n as f64;
    let x_mean = x.iter().sum::<f64>() / nf;
    let row_means: Vec<f64> = (0..n).map(|i| y[i * n..(i + 1) * n].iter().sum::<f64>() / nf).collect();
    let y_diag_mean = (0..n).map(|i| y[i * n + i]).sum::<f64>() / nf;
    let y_all_mean = row_means.iter().sum::<f64>() / nf;
    (0..n)
        .map(|i| AdjointStats {
            x_own: x[i],
            x_mean,
            y_own: y[i * n + i],
            y_row_mean: row_means[i],
            y_diag_mean,
            y_all_mean,
        })
        .collect()
}

/// Closed-form optimal controls of the cooperative (social-cost) problem:
///
/// ```text
/// ā       = -[S̄ X̄ + (B + B̄) Ȳ] / 2(R + R̄)
/// alpha_i = -(1/2R) [ B Y_i + S̄ (1 - rho) X̄ + (B̄ - rho (B + B̄)) Ȳ ],   rho = R̄ / (R + R̄)
/// ```
///
/// The same map serves the N-player problem (with empirical means) and the
/// McKean–Vlasov control problem (with true means).
#[derive(Debug, Clone, Copy)]
pub struct CooperativeControlMap {
    spec: LqSpec,
    rho: f64,
}

impl CooperativeControlMap {
    pub fn new(spec: &LqSpec) -> Result<Self> {
        spec.validate_cooperative()?;
        Ok(Self {
            spec: *spec,
            rho: spec.r_bar / (spec.r + spec.r_bar),
        })
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }

    pub fn control(&self, y_own: f64, x_mean: f64, y_mean: f64) -> f64 {
        let p = &self.spec;
        let rho = self.rho;
        -(p.b * y_own + p.s_bar * (1.0 - rho) * x_mean + (p.b_bar - rho * (p.b + p.b_bar)) * y_mean) / (2.0 * p.r)
    }

    pub fn mean_control(&self, x_mean: f64, y_mean: f64) -> f64 {
        let p = &self.spec;
        -(p.s_bar * x_mean + (p.b + p.b_bar) * y_mean) / (2.0 * (p.r + p.r_bar))
    }

    /// Social first-order conditions `2R a_i + 2R̄ ā + S̄ X̄ + B Y_i + B̄ Ȳ`.
    pub fn foc_residual(&self, x: &[f64], y: &[f64], alpha: &[f64]) -> Vec<f64> {
        let p = &self.spec;
        let nf = x.len() as f64;
        let x_mean = x.iter().sum::<f64>() / nf;
        let y_mean = y.iter().sum::<f64>() / nf;
        let a_mean = alpha.iter().sum::<f64>() / nf;
        y.iter()
            .zip(alpha)
            .map(|(yi, a)| 2.0 * p.r * a + 2.0 * p.r_bar * a_mean + p.s_bar * x_mean + p.b * yi + p.b_bar * y_mean)
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn spec_strategy() -> impl Strategy<Value = LqSpec> {
        (
            -1.0..1.0f64,
            -1.0..1.0f64,
            0.2..2.0f64,
            -1.0..1.0f64,
            0.2..2.0f64,
            -0.5..0.5f64,
            -1.0..1.0f64,
        )
            .prop_map(|(a_bar, b_bar, r, r_bar, q_bar, s_bar, b)| LqSpec {
                a_bar,
                b_bar,
                r,
                r_bar: r_bar * r * 0.9,
                q_bar,
                s_bar,
                b,
                ..LqSpec::default()
            })
    }

    proptest! {
        #[test]
        fn nash_controls_solve_first_order_conditions(
            spec in spec_strategy(),
            n in 1usize..7,
            seed in proptest::collection::vec(-2.0..2.0f64, 60),
        ) {
            let map = EquilibriumControlMap::new(&spec, n).unwrap();
            let x: Vec<f64> = seed[..n].to_vec();
            let y: Vec<f64> = seed[10..10 + n * n].to_vec();
            let alpha = map.nash_all(&x, &y);
            for r in map.foc_residual(&x, &y, &alpha) {
                prop_assert!(r.abs() < 1e-12);
            }
        }

        #[test]
        fn cooperative_controls_solve_first_order_conditions(
            spec in spec_strategy(),
            seed in proptest::collection::vec(-2.0..2.0f64, 12),
        ) {
            let map = CooperativeControlMap::new(&spec).unwrap();
            let (x, y) = seed.split_at(6);
            let xm = x.iter().sum::<f64>() / 6.0;
            let ym = y.iter().sum::<f64>() / 6.0;
            let alpha: Vec<f64> = y.iter().map(|yi| map.control(*yi, xm, ym)).collect();
            let am = alpha.iter().sum::<f64>() / 6.0;
            prop_assert!((am - map.mean_control(xm, ym)).abs() < 1e-12);
            for r in map.foc_residual(x, y, &alpha) {
                prop_assert!(r.abs() < 1e-12);
            }
        }
    }

    #[test]
    fn remainder_vanishes_without_interaction() {
        let spec = LqSpec {
            q_bar: 0.0,
            r_bar: 0.0,
            s_bar: 0.0,
            b_bar: 0.0,
            ..LqSpec::default()
        };
        let map = EquilibriumControlMap::new(&spec, 5).unwrap();
        let x = [0.3, -1.2, 2.0, 0.7, 1.1];
        let mut y = vec![0.0; 25];
        for i in 0..5 {
            y[i * 5 + i] = 0.4 * i as f64 - 0.9;
        }
        for s in adjoint_stats(&x, &y) {
            assert_eq!(map.remainder(&s), 0.0);
            assert_eq!(map.nash(&s), map.mfg(s.y_own));
        }
    }
}

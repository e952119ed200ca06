//! The generic particle solvers on the linear-quadratic bundles, checked
//! against closed forms.

use chaoslab_core::chaos::{
    fbsde_residual, solve_mkv_fbsde, solve_particle_fbsde_rep, Dims, FlowSettings, LqParticleBundle,
    ParticleCloud, PicardSettings, BUNDLE_NAMES,
};
use chaoslab_core::chaos::registry::bundle_by_name;
use chaoslab_core::lq::{solve_mkv_lq, LqSpec, PriceImpact};
use chaoslab_core::rng::{particle_noise, StreamKey};
use chaoslab_core::stats::{mean, variance};
use chaoslab_core::TimeGrid;

/// Affine fixed point `Y_k = a_k X_k + b_k` of the explicit regression scheme
/// for the game bundle, with exact conditional expectations.
fn discrete_oracle(spec: &LqSpec, grid: &TimeGrid) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let s = spec;
    let dt = grid.dt();
    let steps = grid.n_steps();
    let kappa = -s.b * s.b / (2.0 * s.r);
    let kappa_bar = -s.b_bar * s.b / (2.0 * s.r);
    let a_hat = -s.s_bar * s.b / (2.0 * s.r);
    let mut a = vec![0.0; steps + 1];
    a[steps] = 2.0 * s.q_t;
    for k in (0..steps).rev() {
        let c = (1.0 + s.a * dt) * a[k + 1];
        a[k] = (c * (1.0 + s.a * dt) + 2.0 * s.q * dt) / (1.0 - c * kappa * dt);
    }
    let mut m = vec![s.mu0_mean; steps + 1];
    let mut b = vec![0.0; steps + 1];
    for _ in 0..200 {
        for k in (0..steps).rev() {
            let c = (1.0 + s.a * dt) * a[k + 1];
            let d = 1.0 - c * kappa * dt;
            let g = (c * kappa_bar + a_hat) * dt;
            b[k] = ((c * s.a_bar + (c * kappa_bar + a_hat) * a[k]) * dt * m[k] + (1.0 + s.a * dt) * b[k + 1]) / (d - g);
        }
        let mut next = m.clone();
        for k in 0..steps {
            let n_k = a[k] * next[k] + b[k];
            next[k + 1] = next[k] + dt * ((s.a + s.a_bar) * next[k] + (kappa + kappa_bar) * n_k);
        }
        let gap = next.iter().zip(&m).map(|(p, q)| (p - q).abs()).fold(0.0, f64::max);
        m = next;
        if gap < 1e-15 {
            break;
        }
    }
    (a, b, m)
}

#[test]
fn discrete_oracle_approaches_closed_form() {
    let spec = LqSpec::default().with_horizon(0.5);
    let fine = TimeGrid::new(0.5, 4000).unwrap();
    let (a, b, m) = discrete_oracle(&spec, &fine);
    let exact = solve_mkv_lq(&spec, &fine).unwrap();
    assert!((a[0] - exact.eta[0]).abs() < 5e-3);
    assert!((b[0] - exact.psi[0]).abs() < 5e-3);
    assert!((m[4000] - exact.m[4000]).abs() < 5e-3);
}

#[test]
fn picard_reproduces_lq_adjoint_at_time_zero() {
    let spec = LqSpec::default().with_horizon(0.5);
    let grid = TimeGrid::new(0.5, 50).unwrap();
    let bundle = LqParticleBundle::game(&spec);
    let (a, b, _) = discrete_oracle(&spec, &grid);
    let exact = solve_mkv_lq(&spec, &grid).unwrap();
    let picard = PicardSettings::default();
    let reps = 8;
    let mut errors = Vec::new();
    let mut continuous = Vec::new();
    for rep in 0..reps {
        let cloud = solve_particle_fbsde_rep(&bundle, 10_000, &grid, &picard, 17, rep).unwrap();
        let x0 = cloud.x_of(0, 0, 0);
        let y0 = cloud.y_of(0, 0, 0);
        errors.push(y0 - (a[0] * x0 + b[0]));
        continuous.push(y0 - exact.y(0, x0));
        assert!(cloud.contraction_factors.iter().all(|&f| f < 1.0));
        let res = fbsde_residual(&cloud, &bundle);
        assert!(res.max_relative() <= 1e-6, "residual {}", res.max_relative());
        assert!(res.terminal_relative() <= 1e-12);
    }
    let se = (variance(&errors) / reps as f64).sqrt();
    assert!(mean(&errors).abs() <= 3.0 * se, "mean {} se {}", mean(&errors), se);
    assert!(mean(&continuous).abs() < 0.02, "Euler bias {}", mean(&continuous));
}

#[test]
fn mkv_flow_means_match_closed_form() {
    let spec = LqSpec::default().with_horizon(0.5);
    let grid = TimeGrid::new(0.5, 50).unwrap();
    let bundle = LqParticleBundle::game(&spec);
    let sol = solve_mkv_fbsde(&bundle, 20_000, &grid, &PicardSettings::default(), &FlowSettings::default(), 3).unwrap();
    let exact = solve_mkv_lq(&spec, &grid).unwrap();
    assert!(sol.contraction_factors.iter().all(|&f| f < 1.0), "{:?}", sol.flow_changes);
    for k in [0, 25, 50] {
        let x_mean = sol.flow.x_mean(k)[0];
        let y_mean = sol.flow.y_mean(k)[0];
        assert!((x_mean - exact.m[k]).abs() < 0.02, "node {k}: m {x_mean} vs {}", exact.m[k]);
        assert!((y_mean - exact.n[k]).abs() < 0.03, "node {k}: n {y_mean} vs {}", exact.n[k]);
    }
}

/// Paths driven by the closed-form decoupling `Y = η X + ψ`, `Z = η σ`.
fn injected(spec: &LqSpec, n_steps: usize, n: usize) -> ParticleCloud {
    let grid = TimeGrid::new(spec.horizon, n_steps).unwrap();
    let sol = solve_mkv_lq(spec, &grid).unwrap();
    let dt = grid.dt();
    let noise: Vec<_> = (0..n).map(|i| particle_noise(StreamKey::new(5, 0, i), n_steps, 1, dt)).collect();
    let mut x = vec![0.0; (n_steps + 1) * n];
    let mut y = vec![0.0; (n_steps + 1) * n];
    let mut z = vec![0.0; n_steps * n];
    let mut dw = vec![0.0; n_steps * n];
    for i in 0..n {
        x[i] = spec.mu0_mean + spec.mu0_std * noise[i].initial[0];
    }
    for k in 0..=n_steps {
        for i in 0..n {
            y[k * n + i] = sol.y(k, x[k * n + i]);
        }
        if k == n_steps {
            break;
        }
        for i in 0..n {
            let xi = x[k * n + i];
            dw[k * n + i] = noise[i].dw[k];
            z[k * n + i] = sol.eta[k] * spec.sigma;
            x[(k + 1) * n + i] = xi + sol.drift(k, xi) * dt + spec.sigma * noise[i].dw[k];
        }
    }
    ParticleCloud::from_paths("lq", Dims::SCALAR, &grid, n, x, y, z, dw).unwrap()
}

#[test]
fn exact_decoupling_has_second_order_residual() {
    let spec = LqSpec::default();
    let bundle = LqParticleBundle::game(&spec);
    let coarse = fbsde_residual(&injected(&spec, 50, 4000), &bundle);
    let fine = fbsde_residual(&injected(&spec, 100, 4000), &bundle);
    let dt = 1.0 / 50.0;
    assert!(coarse.max_relative() <= 2.0 * dt * dt, "{}", coarse.max_relative());
    assert!(fine.max_relative() < 0.5 * coarse.max_relative());
    assert!(coarse.terminal < 1e-28);
}

#[test]
fn perturbed_node_is_detected() {
    let spec = LqSpec::default();
    let bundle = LqParticleBundle::game(&spec);
    let clean = injected(&spec, 40, 2000);
    let base = fbsde_residual(&clean, &bundle);
    let mut bad = clean.clone();
    let n = bad.n_particles;
    for v in &mut bad.y[20 * n..21 * n] {
        *v += 1.0;
    }
    let hit = fbsde_residual(&bad, &bundle);
    assert!(hit.per_step[19] - base.per_step[19] >= 0.5);
    assert!(hit.per_step[20] - base.per_step[20] >= 0.5);
    assert!((hit.per_step[5] - base.per_step[5]).abs() < 1e-12);
}

#[test]
fn shipped_bundles_contract_on_short_horizons() {
    let spec = LqSpec::default().with_horizon(0.5);
    let grid = TimeGrid::new(0.5, 25).unwrap();
    for name in BUNDLE_NAMES {
        let b = bundle_by_name(name, &spec, &PriceImpact::default()).unwrap();
        let cloud = solve_particle_fbsde_rep(b.as_ref(), 2000, &grid, &PicardSettings::default(), 8, 0).unwrap();
        let worst = cloud.contraction_factors.iter().cloned().fold(0.0, f64::max);
        assert!(worst < 1.0, "{name}: {:?}", cloud.contraction_factors);
        assert!(cloud.alpha.is_some(), "{name}");
        assert_eq!(b.dims(), Dims::SCALAR);
    }
}

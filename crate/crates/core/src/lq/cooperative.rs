use crate::error::Result;
use crate::grid::TimeGrid;
use crate::lq::control::CooperativeControlMap;
use crate::lq::mkv::{solve_affine_mkv, AffineMkv, MeanFieldProblem, MfgDecoupling};
use crate::lq::nplayer::{Encoding, GameKind, NPlayerDecoupling, SymmetricCoefficients};
use crate::lq::spec::LqSpec;
use crate::ode::{integrate_backward, OdeOptions};

/// Adjoint driver of the N-player social-cost system for player `i`, written
/// with the mean control already eliminated:
///
/// ```text
/// 2Q x_i + [2Q̄ - S̄²/2(R+R̄)] x̄ + A y_i + [Ā - S̄(B+B̄)/2(R+R̄)] ȳ
/// ```
pub fn social_driver_nplayer(spec: &LqSpec, x_own: f64, y_own: f64, x_mean: f64, y_mean: f64) -> f64 {
    let s = spec;
    let rr = 2.0 * (s.r + s.r_bar);
    2.0 * s.q * x_own + (2.0 * s.q_bar - s.s_bar * s.s_bar / rr) * x_mean + s.a * y_own
        + (s.a_bar - s.s_bar * (s.b + s.b_bar) / rr) * y_mean
}

/// Adjoint driver of the McKean–Vlasov control problem, assembled as
/// `∂_x H + E[∂_μ H]` at the optimal mean control `E[alpha]`.
pub fn social_driver_mkv(spec: &LqSpec, x: f64, y: f64, law_x_mean: f64, law_y_mean: f64) -> f64 {
    let s = spec;
    let alpha_mean = -(s.s_bar * law_x_mean + (s.b + s.b_bar) * law_y_mean) / (2.0 * (s.r + s.r_bar));
    let dx_h = 2.0 * s.q * x + s.s_bar * alpha_mean + s.a * y;
    let dmu_h = 2.0 * s.q_bar * law_x_mean + s.a_bar * law_y_mean;
    dx_h + dmu_h
}

/// Largest `|social_driver_nplayer - social_driver_mkv|` over the probe points,
/// where each probe supplies `(x, y, mean x, mean y)`.
pub fn coefficient_identity_violation(spec: &LqSpec, probes: &[[f64; 4]]) -> f64 {
    probes
        .iter()
        .map(|[x, y, mx, my]| (social_driver_nplayer(spec, *x, *y, *mx, *my) - social_driver_mkv(spec, *x, *y, *mx, *my)).abs())
        .fold(0.0, f64::max)
}

struct CoopGains {
    k1: f64,
    k2: f64,
    k3: f64,
    q_eff: f64,
    a_eff: f64,
}

fn coop_gains(s: &LqSpec, a: f64, b: f64, c: f64) -> CoopGains {
    let rho = s.r_bar / (s.r + s.r_bar);
    let rr = 2.0 * (s.r + s.r_bar);
    let ybar_coef = s.b_bar - rho * (s.b + s.b_bar);
    CoopGains {
        k1: -s.b * a / (2.0 * s.r),
        k2: -(s.b * b + s.s_bar * (1.0 - rho) + ybar_coef * (a + b)) / (2.0 * s.r),
        k3: -(s.b * c + ybar_coef * c) / (2.0 * s.r),
        q_eff: 2.0 * s.q_bar - s.s_bar * s.s_bar / rr,
        a_eff: s.a_bar - s.s_bar * (s.b + s.b_bar) / rr,
    }
}

/// Social optimum of the N-player cooperative game through the ansatz
/// `Y^i = a X^i + b X̄ + c`. The coefficient ODEs contain no `N`, so the
/// result is the same for every `N`; `n` only sizes the returned decoupling.
pub fn solve_nplayer_social_lq(spec: &LqSpec, n: usize, grid: &TimeGrid) -> Result<NPlayerDecoupling> {
    solve_nplayer_social_lq_with(spec, n, grid, &OdeOptions::default())
}

pub fn solve_nplayer_social_lq_with(spec: &LqSpec, n: usize, grid: &TimeGrid, opts: &OdeOptions) -> Result<NPlayerDecoupling> {
    spec.validate_cooperative()?;
    spec.validate_players(n)?;
    let s = *spec;
    let rhs = |_t: f64, y: &[f64], out: &mut [f64]| {
        let (a, b, c) = (y[0], y[1], y[2]);
        let g = coop_gains(&s, a, b, c);
        let m1 = s.a + s.b * g.k1;
        let m2 = s.a_bar + s.b * g.k2 + s.b_bar * (g.k1 + g.k2);
        let m3 = (s.b + s.b_bar) * g.k3;
        out[0] = -(a * m1 + 2.0 * s.q + s.a * a);
        out[1] = -(a * m2 + b * (m1 + m2) + g.q_eff + s.a * b + g.a_eff * (a + b));
        out[2] = -((a + b) * m3 + s.a * c + g.a_eff * c);
    };
    let path = integrate_backward(rhs, &[2.0 * s.q_t, 2.0 * s.q_bar_t, 0.0], grid, opts)?;
    let col = |i: usize| path.states.iter().map(|st| st[i]).collect::<Vec<f64>>();
    let zeros = vec![0.0; grid.n_nodes()];
    Ok(NPlayerDecoupling {
        spec: *spec,
        grid: grid.clone(),
        n_players: n,
        kind: GameKind::Social,
        encoding: Encoding::Symmetric(SymmetricCoefficients {
            a: col(0),
            b: col(1),
            c: col(2),
            d: zeros.clone(),
            e: zeros.clone(),
            f: zeros.clone(),
            g: zeros,
        }),
        substeps: path.substeps,
    })
}

/// Optimal control of McKean–Vlasov dynamics with the LQ costs, as a decoupling
/// `Y = eta X + psi` with optimal control given by [`CooperativeControlMap`].
pub fn solve_cooperative_lq(spec: &LqSpec, grid: &TimeGrid) -> Result<MfgDecoupling> {
    solve_cooperative_lq_with(spec, grid, &OdeOptions::default())
}

pub fn solve_cooperative_lq_with(spec: &LqSpec, grid: &TimeGrid, opts: &OdeOptions) -> Result<MfgDecoupling> {
    spec.validate_cooperative()?;
    let s = spec;
    let map = CooperativeControlMap::new(spec)?;
    let rho = map.rho();
    let rr = 2.0 * (s.r + s.r_bar);
    // alpha = cy Y + cm E[X] + cn E[Y], E[alpha] = -(S̄ m + (B+B̄) n) / 2(R+R̄)
    let cy = -s.b / (2.0 * s.r);
    let cm = -s.s_bar * (1.0 - rho) / (2.0 * s.r);
    let cn = -(s.b_bar - rho * (s.b + s.b_bar)) / (2.0 * s.r);
    let sys = AffineMkv {
        a: s.a,
        a_bar: s.a_bar + s.b * cm - s.b_bar * s.s_bar / rr,
        kappa: s.b * cy,
        kappa_bar: s.b * cn - s.b_bar * (s.b + s.b_bar) / rr,
        q: 2.0 * s.q,
        q_bar: 2.0 * s.q_bar - s.s_bar * s.s_bar / rr,
        a_hat: s.a_bar - s.s_bar * (s.b + s.b_bar) / rr,
        qt: 2.0 * s.q_t,
        qt_bar: 2.0 * s.q_bar_t,
    };
    let sol = solve_affine_mkv(&sys, s.mu0_mean, grid, opts)?;
    let psi = (0..grid.n_nodes()).map(|k| sol.n[k] - sol.eta[k] * sol.m[k]).collect();
    Ok(MfgDecoupling {
        problem: MeanFieldProblem::Control,
        spec: *spec,
        grid: grid.clone(),
        eta: sol.eta,
        psi,
        m: sol.m,
        n: sol.n,
        pi: sol.pi,
        control: [0.0, cy, cm, cn],
        substeps: sol.substeps,
    })
}

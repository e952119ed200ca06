//! One PASS/FAIL line per acceptance criterion. Exits nonzero when any fails.

use std::path::Path;
use std::process::ExitCode;
use std::time::Instant;

use chaoslab_core::experiments::{
    concentration_study, cooperative_gap_study, fbsde_study, master_gap_study, nash_gap_study, offdiag_study, StudyConfig, StudyKind,
    StudyReport,
};
use chaoslab_core::grid::TimeGrid;
use chaoslab_core::lq::{solve_nplayer_lq_dense, solve_nplayer_lq_symmetric, LqSpec};
use chaoslab_core::metrics::{
    loglog_slope, theoretical_rate, wasserstein2_1d, wasserstein2_exact_small, wasserstein2_gaussians, wasserstein2_to_gaussian, RateQuery,
};
use chaoslab_core::rng::{normals, StreamKey};
use chaoslab_core::Error;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Outcome {
    passed: bool,
    detail: String,
}

fn outcome(passed: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        passed,
        detail: detail.into(),
    }
}

fn failed_checks(r: &StudyReport, prefix: &str) -> Vec<String> {
    r.checks
        .iter()
        .filter(|c| c.name.starts_with(prefix) && !c.passed)
        .map(|c| format!("{}: {}", c.name, c.detail))
        .collect()
}

fn slope_line(r: &StudyReport) -> String {
    r.slopes
        .iter()
        .map(|s| format!("{} {:+.3} (R² {:.3})", s.name, s.fit.slope, s.fit.r_squared))
        .collect::<Vec<_>>()
        .join(", ")
}

fn checks_outcome(r: &StudyReport, prefixes: &[&str], extra: String) -> Outcome {
    let mut missing = Vec::new();
    let mut failed = Vec::new();
    for p in prefixes {
        if !r.checks.iter().any(|c| c.name.starts_with(p)) {
            missing.push(p.to_string());
        }
        failed.extend(failed_checks(r, p));
    }
    let passed = missing.is_empty() && failed.is_empty();
    let mut detail = extra;
    if !failed.is_empty() {
        detail = format!("{detail}; failing: {}", failed.join("; "));
    }
    if !missing.is_empty() {
        detail = format!("{detail}; missing checks {missing:?}");
    }
    outcome(passed, detail)
}

fn nash_gap_rate() -> Outcome {
    let cfg = StudyConfig::for_study(StudyKind::NashGap);
    let start = Instant::now();
    let r = match nash_gap_study(&cfg) {
        Ok(r) => r,
        Err(e) => return outcome(false, e.to_string()),
    };
    let secs = start.elapsed().as_secs_f64();
    let mut o = checks_outcome(&r, &["slope t="], format!("{}; runtime {secs:.1} s", slope_line(&r)));
    if secs > 120.0 {
        o.passed = false;
        o.detail.push_str(" (limit 120 s)");
    }
    o
}

fn offdiag_decay() -> Outcome {
    match offdiag_study(&StudyConfig::for_study(StudyKind::Offdiag)) {
        Ok(r) => checks_outcome(&r, &["slope", "price_impact_offdiag"], slope_line(&r)),
        Err(e) => outcome(false, e.to_string()),
    }
}

fn random_spec(rng: &mut ChaCha8Rng) -> LqSpec {
    let mut u = |lo: f64, hi: f64| rng.random_range(lo..hi);
    LqSpec {
        a: u(-0.5, 0.5),
        a_bar: u(-0.5, 0.5),
        b: u(0.5, 1.5),
        b_bar: u(-0.5, 0.5),
        q: u(0.2, 2.0),
        q_bar: u(0.0, 1.0),
        r: u(0.5, 2.0),
        r_bar: u(0.0, 0.5),
        s_bar: u(-0.5, 0.5),
        q_t: u(0.2, 2.0),
        q_bar_t: u(0.0, 1.0),
        sigma: u(0.2, 1.0),
        horizon: u(0.5, 1.0),
        mu0_mean: u(-1.0, 1.0),
        mu0_std: u(0.0, 1.0),
    }
}

fn oracle_equivalence() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst: f64 = 0.0;
    for s in 0..20 {
        let spec = random_spec(&mut rng);
        let grid = match TimeGrid::new(spec.horizon, 20) {
            Ok(g) => g,
            Err(e) => return outcome(false, e.to_string()),
        };
        for n in [2, 4, 8, 16] {
            let (d, y) = match (solve_nplayer_lq_dense(&spec, n, &grid), solve_nplayer_lq_symmetric(&spec, n, &grid)) {
                (Ok(d), Ok(y)) => (d, y),
                (Err(e), _) | (_, Err(e)) => return outcome(false, format!("spec {s}, N = {n}: {e}")),
            };
            for k in 0..grid.n_nodes() {
                let ((pd, qd), (ps, qs)) = (d.assembled(k), y.assembled(k));
                worst = worst.max((pd - ps).amax()).max((qd - qs).amax());
            }
        }
    }
    outcome(worst <= 1e-8, format!("largest coefficient difference {worst:.2e} over 20 specs, N in {{2, 4, 8, 16}} (limit 1e-8)"))
}

fn picard_vs_closed_form() -> Outcome {
    let cfg = StudyConfig::for_study(StudyKind::Fbsde);
    match fbsde_study(&cfg) {
        Ok(r) => {
            let detail = ["closed_form", "residual"]
                .iter()
                .filter_map(|n| r.check(n))
                .map(|c| c.detail.clone())
                .collect::<Vec<_>>()
                .join("; ");
            checks_outcome(&r, &["closed_form", "residual"], format!("{} particles, T = {}: {detail}", cfg.n_list[0], cfg.spec.horizon))
        }
        Err(e) => outcome(false, e.to_string()),
    }
}

fn metrics_exactness() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut assignment: f64 = 0.0;
    for _ in 0..100 {
        let n = rng.random_range(1..=32);
        let a: Vec<f64> = (0..n).map(|_| rng.random_range(-5.0..5.0)).collect();
        let b: Vec<f64> = (0..n).map(|_| rng.random_range(-5.0..5.0)).collect();
        let pa: Vec<Vec<f64>> = a.iter().map(|v| vec![*v]).collect();
        let pb: Vec<Vec<f64>> = b.iter().map(|v| vec![*v]).collect();
        match (wasserstein2_1d(&a, &b), wasserstein2_exact_small(&pa, &pb)) {
            (Ok(x), Ok(y)) => assignment = assignment.max((x - y).abs()),
            (Err(e), _) | (_, Err(e)) => return outcome(false, e.to_string()),
        }
    }
    let mut gaussian: f64 = 0.0;
    for _ in 0..20 {
        let (m1, s1, m2, s2): (f64, f64, f64, f64) = (
            rng.random_range(-3.0..3.0),
            rng.random_range(0.0..3.0),
            rng.random_range(-3.0..3.0),
            rng.random_range(0.0..3.0),
        );
        let exact = ((m1 - m2) * (m1 - m2) + (s1 - s2) * (s1 - s2)).sqrt();
        match wasserstein2_gaussians(m1, s1, m2, s2) {
            Ok(g) => gaussian = gaussian.max((g.value - exact).abs()),
            Err(e) => return outcome(false, e.to_string()),
        }
    }
    let sizes = [64usize, 256, 1024, 4096];
    let mut points = Vec::new();
    for &n in &sizes {
        let mut total = 0.0;
        for rep in 0..200 {
            let xs = normals(StreamKey::new(17, rep, n), n);
            total += wasserstein2_to_gaussian(&xs, 0.0, 1.0).map_or(f64::NAN, |w| w * w);
        }
        points.push((n as f64, total / 200.0));
    }
    let slope = loglog_slope(&points, None).map_or(f64::NAN, |f| f.slope);
    let passed = assignment <= 1e-12 && gaussian <= 1e-6 && (-1.1..=-0.8).contains(&slope);
    outcome(
        passed,
        format!(
            "assignment difference {assignment:.1e} (limit 1e-12); Gaussian closed-form error {gaussian:.1e} (limit 1e-6); empirical W2² slope {slope:+.3} (window [-1.1, -0.8])"
        ),
    )
}

fn concentration() -> Outcome {
    match concentration_study(&StudyConfig::for_study(StudyKind::Concentration)) {
        Ok(r) => {
            let tails = r.checks.iter().filter(|c| c.name.starts_with("tail a=")).count();
            checks_outcome(&r, &["tail a="], format!("{tails} thresholds, N = 16 vs N = 256, Wilson intervals disjoint"))
        }
        Err(e) => outcome(false, e.to_string()),
    }
}

fn cooperative() -> Outcome {
    match cooperative_gap_study(&StudyConfig::for_study(StudyKind::CoopGap)) {
        Ok(r) => {
            let id = r.check("identity_violation").map_or(String::new(), |c| c.detail.clone());
            checks_outcome(&r, &["identity_violation", "slope t="], format!("{id}; {}", slope_line(&r)))
        }
        Err(e) => outcome(false, e.to_string()),
    }
}

fn master_gap() -> Outcome {
    match master_gap_study(&StudyConfig::for_study(StudyKind::MasterGap)) {
        Ok(r) => {
            let d = r.checks.iter().map(|c| c.detail.clone()).collect::<Vec<_>>().join("; ");
            checks_outcome(&r, &["quarter t="], d)
        }
        Err(e) => outcome(false, e.to_string()),
    }
}

fn rate_table() -> Outcome {
    // (N, M, k, p) and the rate worked out by hand
    let table: [((f64, f64, f64, f64), f64); 12] = [
        ((100.0, 1.0, 6.0, 2.0), 0.1464158883361278),
        ((1e4, 2.0, 8.0, 2.0), 0.011),
        ((16.0, 3.0, 3.0, 2.0), 0.6468502629920498),
        ((1000.0, 1.0, 5.0, 1.0), 0.035603848307218765),
        ((100.0, 4.0, 8.0, 2.0), 0.49313482828580973),
        ((1e6, 4.0, 6.0, 2.0), 0.013915511557963774),
        ((50.0, 2.0, 3.0, 1.0), 0.6297247434412995),
        ((1.0, 2.0, 5.0, 1.0), 1.6931471805599454),
        ((1e4, 6.0, 8.0, 2.0), 0.04741588833612779),
        ((256.0, 8.0, 4.0, 2.0), 0.3125),
        ((1000.0, 5.0, 3.0, 2.0), 0.16309573444801934),
        ((64.0, 3.0, 2.0, 1.0), 0.1875),
    ];
    let mut worst: f64 = 0.0;
    for ((n, m, k, p), want) in table {
        match theoretical_rate(&RateQuery::new(n, m, k, p)) {
            Ok(v) => worst = worst.max((v - want).abs()),
            Err(e) => return outcome(false, format!("r({n}, {m}, {k}, {p}): {e}")),
        }
    }
    let boundaries = [(4.0, 4.0, 2.0), (1.0, 4.0, 2.0), (2.0, 2.0, 1.0), (6.0, 1.2, 1.0), (3.0, 1.5, 1.0), (5.0, 1.25, 1.0)];
    let rejected = boundaries
        .iter()
        .filter(|(m, k, p)| matches!(theoretical_rate(&RateQuery::new(10.0, *m, *k, *p)), Err(Error::UndefinedRegime { .. })))
        .count();
    outcome(
        worst <= 1e-12 && rejected == boundaries.len(),
        format!("largest error {worst:.1e} over 12 values (limit 1e-12); {rejected}/{} boundary cases raise UndefinedRegime", boundaries.len()),
    )
}

fn run_cli(args: &[&str]) -> u8 {
    let mut full = vec!["chaoslab"];
    full.extend_from_slice(args);
    chaoslab_cli::run(full)
}

/// Files of a run except the manifest, by name.
fn outputs(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<(String, Vec<u8>)> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.file_name().unwrap() != "manifest.toml")
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read(&p).unwrap()))
        .collect();
    files.sort();
    files
}

fn determinism() -> Outcome {
    let tmp = tempfile::tempdir().unwrap();
    let mut bad = Vec::new();
    let mut files = 0;
    for kind in StudyKind::ALL {
        let first = tmp.path().join(format!("{}-first", kind.name()));
        let replay = tmp.path().join(format!("{}-replay", kind.name()));
        let code = run_cli(&[kind.name(), "--quiet", "--threads", "1", "--out-dir", first.to_str().unwrap()]);
        if code != 0 {
            bad.push(format!("{} exited {code}", kind.name()));
            continue;
        }
        let manifest: toml::Table = toml::from_str(&std::fs::read_to_string(first.join("manifest.toml")).unwrap()).unwrap();
        let embedded = manifest["effective_config"].as_str().unwrap();
        let cfg_path = tmp.path().join(format!("{}.toml", kind.name()));
        std::fs::write(&cfg_path, embedded).unwrap();
        let code = run_cli(&[
            kind.name(),
            "--quiet",
            "--threads",
            "4",
            "--config",
            cfg_path.to_str().unwrap(),
            "--out-dir",
            replay.to_str().unwrap(),
        ]);
        if code != 0 {
            bad.push(format!("{} replay exited {code}", kind.name()));
            continue;
        }
        let (a, b) = (outputs(&first), outputs(&replay));
        files += a.len();
        if a != b {
            bad.push(format!("{} outputs differ", kind.name()));
        }
    }
    let detail = format!("{files} output files of 7 studies replayed from their manifests with 1 vs 4 threads");
    if bad.is_empty() {
        outcome(true, format!("{detail}, byte-identical"))
    } else {
        outcome(false, format!("{detail}: {}", bad.join("; ")))
    }
}

type Criterion = (&'static str, fn() -> Outcome);

fn main() -> ExitCode {
    let criteria: [Criterion; 10] = [
        ("LQ Nash gap rate", nash_gap_rate),
        ("off-diagonal decay", offdiag_decay),
        ("dense vs symmetric oracle", oracle_equivalence),
        ("Picard vs closed form", picard_vs_closed_form),
        ("metrics exactness", metrics_exactness),
        ("concentration tails", concentration),
        ("cooperative identity and gap", cooperative),
        ("master-equation gap", master_gap),
        ("rate table", rate_table),
        ("determinism", determinism),
    ];
    let mut failures = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let o = f();
        let secs = start.elapsed().as_secs_f64();
        println!(
            "criterion {:>2} {} [{name}] {} ({secs:.1} s)",
            i + 1,
            if o.passed { "PASS" } else { "FAIL" },
            o.detail
        );
        if !o.passed {
            failures += 1;
        }
    }
    println!("acceptance: {}/{} criteria pass", criteria.len() - failures, criteria.len());
    if failures == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}

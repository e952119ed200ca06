//! Batch front end for the propagation-of-chaos studies, behind the
//! `chaoslab` binary.
//!
//! Exit codes: 0 success, 2 configuration error, 3 solver or I/O error,
//! 4 a study check failed under `--check`.

mod config;
mod output;

use std::ffi::OsString;
use std::path::PathBuf;
use std::time::Instant;

use chaoslab_core::experiments::{run_study, StudyConfig, StudyKind};
use chaoslab_core::metrics::{theoretical_rate, RateQuery};
use clap::{Args, Parser, Subcommand};

use config::StudySection;
use output::{sha256_hex, ConfigSource, RunInfo};

pub const EXIT_CONFIG: u8 = 2;
pub const EXIT_SOLVER: u8 = 3;
pub const EXIT_CHECK: u8 = 4;

#[derive(Parser)]
#[command(name = "chaoslab", version, about = "N-player games, mean-field limits and propagation-of-chaos studies")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Evaluate the rate r_{N,M,k,p}.
    Rate(RateArgs),
    /// Nash gap between N-player equilibrium controls and the mean-field control.
    #[command(name = "mfg-gap")]
    MfgGap(StudyArgs),
    /// Decay of the cross-player adjoints Y^{i,j}, i != j.
    Offdiag(StudyArgs),
    /// Wasserstein moments and tail probabilities of the empirical control law.
    Concentration(StudyArgs),
    /// Social-optimum gap against the McKean-Vlasov control problem.
    #[command(name = "coop-gap")]
    CoopGap(StudyArgs),
    /// Gap between N-player value derivatives and the master field.
    #[command(name = "master-gap")]
    MasterGap(StudyArgs),
    /// Nash gap on the price-impact instance.
    #[command(name = "price-impact")]
    PriceImpact(StudyArgs),
    /// Generic particle solver against the LQ closed form.
    Fbsde(StudyArgs),
}

#[derive(Args)]
struct RateArgs {
    #[arg(long = "N")]
    n: f64,
    #[arg(long = "M")]
    m: f64,
    #[arg(long)]
    k: f64,
    #[arg(long, default_value_t = 2.0)]
    p: f64,
}

#[derive(Args)]
struct StudyArgs {
    /// TOML configuration; omitted keys take the study's defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads; results do not depend on it.
    #[arg(long)]
    threads: Option<usize>,
    /// Output directory [default: chaoslab-out/<study>]
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// Exit with code 4 when any study check fails.
    #[arg(long)]
    check: bool,
    /// Do not print the summary.
    #[arg(long)]
    quiet: bool,
    #[arg(long, value_delimiter = ',')]
    n_list: Option<Vec<usize>>,
    #[arg(long)]
    replications: Option<usize>,
    #[arg(long)]
    n_steps: Option<usize>,
    #[arg(long)]
    bundle: Option<String>,
    #[arg(long, value_delimiter = ',')]
    eval_times: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',')]
    thresholds: Option<Vec<f64>>,
    #[arg(long)]
    moment_k: Option<f64>,
    #[arg(long)]
    reference_samples: Option<usize>,
    #[arg(long)]
    law_particles: Option<usize>,
    /// Also run on the halved step and report the change of every moment.
    #[arg(long)]
    refine_check: bool,
    #[arg(long)]
    ci_limit: Option<f64>,
}

impl StudyArgs {
    fn overrides(&self) -> StudySection {
        StudySection {
            bundle: self.bundle.clone(),
            n_list: self.n_list.clone(),
            replications: self.replications,
            n_steps: self.n_steps,
            seed: self.seed,
            thresholds: self.thresholds.clone(),
            eval_times: self.eval_times.clone(),
            moment_k: self.moment_k,
            reference_samples: self.reference_samples,
            law_particles: self.law_particles,
            refine_check: self.refine_check.then_some(true),
            ci_limit: self.ci_limit,
        }
    }
}

struct Failure {
    code: u8,
    message: String,
}

fn config_error(message: impl Into<String>) -> Failure {
    Failure {
        code: EXIT_CONFIG,
        message: message.into(),
    }
}

fn from_core(e: chaoslab_core::Error) -> Failure {
    Failure {
        code: if e.is_config_error() { EXIT_CONFIG } else { EXIT_SOLVER },
        message: e.to_string(),
    }
}

/// `x` rounded to 5 significant digits.
fn significant5(x: f64) -> String {
    if x == 0.0 || !x.is_finite() {
        return format!("{x}");
    }
    let magnitude = x.abs().log10().floor() as i32;
    if (-5..5).contains(&magnitude) {
        format!("{:.*}", (4 - magnitude).max(0) as usize, x)
    } else {
        format!("{x:.4e}")
    }
}

fn rate(args: &RateArgs) -> Result<u8, Failure> {
    let v = theoretical_rate(&RateQuery::new(args.n, args.m, args.k, args.p)).map_err(from_core)?;
    println!("{}", significant5(v));
    Ok(0)
}

fn load_config(kind: StudyKind, args: &StudyArgs) -> Result<(StudyConfig, ConfigSource), Failure> {
    let (mut cfg, source) = match &args.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| config_error(format!("{}: {e}", path.display())))?;
            let cfg = config::parse(kind, &text).map_err(|e| config_error(format!("{}: {e}", path.display())))?;
            let source = ConfigSource {
                path: Some(path.clone()),
                sha256: Some(sha256_hex(text.as_bytes())),
            };
            (cfg, source)
        }
        None => (StudyConfig::for_study(kind), ConfigSource { path: None, sha256: None }),
    };
    args.overrides().apply(&mut cfg);
    if cfg.seed > i64::MAX as u64 {
        return Err(config_error(format!("seed {} exceeds {}", cfg.seed, i64::MAX)));
    }
    cfg.validate(kind).map_err(from_core)?;
    Ok((cfg, source))
}

fn study(kind: StudyKind, args: &StudyArgs) -> Result<u8, Failure> {
    let (cfg, source) = load_config(kind, args)?;
    let threads = match args.threads {
        Some(0) => return Err(config_error("--threads must be at least 1")),
        Some(n) => n,
        None => std::thread::available_parallelism().map_or(1, |n| n.get()),
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Failure {
            code: EXIT_SOLVER,
            message: e.to_string(),
        })?;
    let start = Instant::now();
    let report = pool.install(|| run_study(kind, &cfg)).map_err(from_core)?;
    let elapsed = start.elapsed().as_secs_f64();
    let effective = config::render(&cfg);
    let dir = args
        .out_dir
        .clone()
        .unwrap_or_else(|| PathBuf::from("chaoslab-out").join(kind.name()));
    let info = RunInfo {
        subcommand: kind.name(),
        cfg: &cfg,
        effective_config: &effective,
        source,
        threads,
        wall_clock_seconds: elapsed,
    };
    output::write_run(&dir, &report, info).map_err(|e| Failure {
        code: EXIT_SOLVER,
        message: format!("writing {}: {e}", dir.display()),
    })?;
    if !args.quiet {
        print!("{}", report.summary());
        println!("outputs: {}", dir.display());
    }
    if args.check && !report.all_checks_pass() {
        return Ok(EXIT_CHECK);
    }
    Ok(0)
}

/// Parses `args` (program name first), runs the command and returns the exit code.
pub fn run<I, T>(args: I) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { 0 };
        }
    };
    let result = match &cli.command {
        Command::Rate(a) => rate(a),
        Command::MfgGap(a) => study(StudyKind::NashGap, a),
        Command::Offdiag(a) => study(StudyKind::Offdiag, a),
        Command::Concentration(a) => study(StudyKind::Concentration, a),
        Command::CoopGap(a) => study(StudyKind::CoopGap, a),
        Command::MasterGap(a) => study(StudyKind::MasterGap, a),
        Command::PriceImpact(a) => study(StudyKind::PriceImpact, a),
        Command::Fbsde(a) => study(StudyKind::Fbsde, a),
    };
    match result {
        Ok(code) => code,
        Err(f) => {
            eprintln!("error: {}", f.message);
            f.code
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn five_significant_digits() {
        assert_eq!(significant5(0.146415888), "0.14642");
        assert_eq!(significant5(0.0474162), "0.047416");
        assert_eq!(significant5(1.0), "1.0000");
        assert_eq!(significant5(12345.6), "12346");
        assert_eq!(significant5(123456.7), "1.2346e5");
        assert_eq!(significant5(3.2e-7), "3.2000e-7");
    }

    #[test]
    fn flags_parse() {
        use clap::CommandFactory;
        Cli::command().debug_assert();
        let cli = Cli::try_parse_from(["chaoslab", "mfg-gap", "--n-list", "8,16,32,64", "--seed", "3", "--check"]).unwrap();
        let Command::MfgGap(a) = cli.command else { panic!() };
        assert_eq!(a.n_list, Some(vec![8, 16, 32, 64]));
        assert!(a.check && !a.refine_check);
        assert!(Cli::try_parse_from(["chaoslab", "rate", "--N", "100", "--M", "1", "--k", "6"]).is_ok());
    }
}

//! Run artifacts: one file per table, the summary, the effective config and
//! the manifest.

use std::fs;
use std::path::{Path, PathBuf};

use chaoslab_core::experiments::{StudyConfig, StudyReport};
use serde::Serialize;
use sha2::{Digest, Sha256};

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Debug, Serialize)]
pub struct OutputFile {
    pub file: String,
    pub bytes: usize,
    pub sha256: String,
}

#[derive(Debug, Serialize)]
pub struct Versions {
    pub chaoslab_core: String,
    pub chaoslab_cli: String,
}

/// Everything needed to reproduce a run. Wall-clock lives here only, so the
/// other artifacts stay byte-identical across replays.
#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub subcommand: String,
    /// `bundled default` when no file was given.
    pub config_path: String,
    pub config_sha256: Option<String>,
    pub study_config_sha256: String,
    pub seed: u64,
    pub threads: usize,
    pub wall_clock_seconds: f64,
    pub checks_passed: bool,
    pub versions: Versions,
    pub outputs: Vec<OutputFile>,
    /// Replaying this with `--config` reproduces every output file.
    pub effective_config: String,
}

pub struct ConfigSource {
    pub path: Option<PathBuf>,
    pub sha256: Option<String>,
}

fn write(dir: &Path, name: &str, text: &str, inventory: &mut Vec<OutputFile>) -> std::io::Result<()> {
    fs::write(dir.join(name), text)?;
    inventory.push(OutputFile {
        file: name.into(),
        bytes: text.len(),
        sha256: sha256_hex(text.as_bytes()),
    });
    Ok(())
}

/// Table file names: the table kind, with a counter on repeats.
fn table_names(report: &StudyReport) -> Vec<String> {
    let mut names: Vec<String> = Vec::new();
    for t in &report.tables {
        let mut name = format!("{}.csv", t.kind);
        let mut i = 2;
        while names.contains(&name) {
            name = format!("{}_{i}.csv", t.kind);
            i += 1;
        }
        names.push(name);
    }
    names
}

pub struct RunInfo<'a> {
    pub subcommand: &'a str,
    pub cfg: &'a StudyConfig,
    pub effective_config: &'a str,
    pub source: ConfigSource,
    pub threads: usize,
    pub wall_clock_seconds: f64,
}

pub fn write_run(dir: &Path, report: &StudyReport, info: RunInfo) -> std::io::Result<RunManifest> {
    fs::create_dir_all(dir)?;
    let mut outputs = Vec::new();
    for (t, name) in report.tables.iter().zip(table_names(report)) {
        write(dir, &name, &t.to_text(), &mut outputs)?;
    }
    write(dir, "summary.txt", &report.summary(), &mut outputs)?;
    write(dir, "effective_config.toml", info.effective_config, &mut outputs)?;
    let manifest = RunManifest {
        subcommand: info.subcommand.into(),
        config_path: info
            .source
            .path
            .map_or_else(|| "bundled default".into(), |p| p.display().to_string()),
        config_sha256: info.source.sha256,
        study_config_sha256: info.cfg.fingerprint(),
        seed: info.cfg.seed,
        threads: info.threads,
        wall_clock_seconds: info.wall_clock_seconds,
        checks_passed: report.all_checks_pass(),
        versions: Versions {
            chaoslab_core: chaoslab_core::VERSION.into(),
            chaoslab_cli: env!("CARGO_PKG_VERSION").into(),
        },
        outputs,
        effective_config: info.effective_config.into(),
    };
    let text = toml::to_string(&manifest).expect("manifest serializes");
    fs::write(dir.join("manifest.toml"), text)?;
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;
    use chaoslab_core::Table;

    #[test]
    fn repeated_kinds_get_distinct_names() {
        let mut r = StudyReport::new("x");
        for k in ["gap", "gap", "slopes", "gap"] {
            r.tables.push(Table::new(k, Vec::new()));
        }
        assert_eq!(table_names(&r), ["gap.csv", "gap_2.csv", "slopes.csv", "gap_3.csv"]);
    }

    #[test]
    fn digest_of_empty_input() {
        assert_eq!(sha256_hex(b""), "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
    }
}

//! The TOML configuration file: schema, strict parsing and the effective-config
//! rendering written next to every run.
//!
//! ```toml
//! [study]
//! bundle = "lq"
//! n_list = [8, 16, 32, 64, 128, 256, 512]
//! replications = 200
//! n_steps = 100
//! seed = 20240601
//!
//! [spec]
//! A = 0.1
//! T = 1.0
//! ```
//!
//! Sections: `[study]`, `[spec]` (LQ coefficients), `[price_impact]`,
//! `[picard]`, `[flow]`. Every key is optional and falls back to the study's
//! default; unknown sections or keys are errors.

use chaoslab_core::chaos::{Basis, FlowSettings, PicardSettings};
use chaoslab_core::experiments::{StudyConfig, StudyKind};
use chaoslab_core::lq::{LqSpec, PriceImpact};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    study: Option<StudySection>,
    spec: Option<toml::Table>,
    price_impact: Option<toml::Table>,
    picard: Option<PicardSection>,
    flow: Option<FlowSection>,
}

#[derive(Debug, Default, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StudySection {
    pub bundle: Option<String>,
    pub n_list: Option<Vec<usize>>,
    pub replications: Option<usize>,
    pub n_steps: Option<usize>,
    pub seed: Option<u64>,
    pub thresholds: Option<Vec<f64>>,
    pub eval_times: Option<Vec<f64>>,
    pub moment_k: Option<f64>,
    pub reference_samples: Option<usize>,
    pub law_particles: Option<usize>,
    pub refine_check: Option<bool>,
    pub ci_limit: Option<f64>,
}

#[derive(Debug, Default, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PicardSection {
    tol: Option<f64>,
    max_iter: Option<usize>,
    /// `polynomial` or `indicator`
    basis: Option<String>,
    degree: Option<usize>,
    centers: Option<Vec<f64>>,
    ridge: Option<f64>,
}

#[derive(Debug, Default, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct FlowSection {
    tol: Option<f64>,
    max_outer: Option<usize>,
}

/// Every field spelled out; parsing it back yields the same [`StudyConfig`].
#[derive(Serialize)]
struct Effective<'a> {
    study: StudySection,
    spec: &'a LqSpec,
    price_impact: &'a PriceImpact,
    picard: PicardSection,
    flow: FlowSection,
}

/// Overlays the keys of `section` on the serialized `base`; unknown keys fail
/// in the typed deserialization.
fn overlay<T: Serialize + DeserializeOwned + Clone>(base: &T, section: Option<toml::Table>, name: &str) -> Result<T, String> {
    let Some(section) = section else {
        return Ok(base.clone());
    };
    let mut table = toml::Table::try_from(base).map_err(|e| format!("[{name}]: {e}"))?;
    for (k, v) in section {
        table.insert(k, v);
    }
    table.try_into().map_err(|e| format!("[{name}]: {e}"))
}

impl StudySection {
    pub fn apply(&self, cfg: &mut StudyConfig) {
        let s = self.clone();
        if let Some(v) = s.bundle {
            cfg.bundle = v;
        }
        if let Some(v) = s.n_list {
            cfg.n_list = v;
        }
        if let Some(v) = s.replications {
            cfg.replications = v;
        }
        if let Some(v) = s.n_steps {
            cfg.n_steps = v;
        }
        if let Some(v) = s.seed {
            cfg.seed = v;
        }
        if let Some(v) = s.thresholds {
            cfg.thresholds = v;
        }
        if let Some(v) = s.eval_times {
            cfg.eval_times = v;
        }
        if let Some(v) = s.moment_k {
            cfg.moment_k = v;
        }
        if let Some(v) = s.reference_samples {
            cfg.reference_samples = v;
        }
        if let Some(v) = s.law_particles {
            cfg.law_particles = v;
        }
        if let Some(v) = s.refine_check {
            cfg.refine_check = v;
        }
        if let Some(v) = s.ci_limit {
            cfg.ci_limit = v;
        }
    }
}

fn apply_picard(p: PicardSection, cfg: &mut PicardSettings) -> Result<(), String> {
    if let Some(v) = p.tol {
        cfg.tol = v;
    }
    if let Some(v) = p.max_iter {
        cfg.max_iter = v;
    }
    if let Some(v) = p.ridge {
        cfg.ridge = v;
    }
    let kind = p.basis.as_deref().unwrap_or(match cfg.basis {
        Basis::Polynomial { .. } => "polynomial",
        Basis::Indicator { .. } => "indicator",
    });
    cfg.basis = match kind {
        "polynomial" => {
            if p.centers.is_some() {
                return Err("[picard]: `centers` needs basis = \"indicator\"".into());
            }
            let current = match cfg.basis {
                Basis::Polynomial { degree } => degree,
                Basis::Indicator { .. } => 2,
            };
            Basis::Polynomial {
                degree: p.degree.unwrap_or(current),
            }
        }
        "indicator" => {
            if p.degree.is_some() {
                return Err("[picard]: `degree` needs basis = \"polynomial\"".into());
            }
            let current = match &cfg.basis {
                Basis::Indicator { centers } => Some(centers.clone()),
                Basis::Polynomial { .. } => None,
            };
            match p.centers.or(current) {
                Some(centers) => Basis::Indicator { centers },
                None => return Err("[picard]: basis = \"indicator\" needs `centers`".into()),
            }
        }
        other => return Err(format!("[picard]: unknown basis `{other}` (polynomial, indicator)")),
    };
    Ok(())
}

/// The study's defaults with the file's keys applied.
pub fn parse(kind: StudyKind, text: &str) -> Result<StudyConfig, String> {
    let file: FileConfig = toml::from_str(text).map_err(|e| e.to_string())?;
    let mut cfg = StudyConfig::for_study(kind);
    if let Some(s) = &file.study {
        s.apply(&mut cfg);
    }
    cfg.spec = overlay(&cfg.spec, file.spec, "spec")?;
    cfg.price_impact = overlay(&cfg.price_impact, file.price_impact, "price_impact")?;
    if let Some(p) = file.picard {
        apply_picard(p, &mut cfg.picard)?;
    }
    if let Some(f) = file.flow {
        let FlowSettings { tol, max_outer } = cfg.flow;
        cfg.flow = FlowSettings {
            tol: f.tol.unwrap_or(tol),
            max_outer: f.max_outer.unwrap_or(max_outer),
        };
    }
    Ok(cfg)
}

/// Complete TOML rendering of `cfg`.
pub fn render(cfg: &StudyConfig) -> String {
    let (basis, degree, centers) = match &cfg.picard.basis {
        Basis::Polynomial { degree } => ("polynomial", Some(*degree), None),
        Basis::Indicator { centers } => ("indicator", None, Some(centers.clone())),
    };
    let e = Effective {
        study: StudySection {
            bundle: Some(cfg.bundle.clone()),
            n_list: Some(cfg.n_list.clone()),
            replications: Some(cfg.replications),
            n_steps: Some(cfg.n_steps),
            seed: Some(cfg.seed),
            thresholds: Some(cfg.thresholds.clone()),
            eval_times: Some(cfg.eval_times.clone()),
            moment_k: Some(cfg.moment_k),
            reference_samples: Some(cfg.reference_samples),
            law_particles: Some(cfg.law_particles),
            refine_check: Some(cfg.refine_check),
            ci_limit: Some(cfg.ci_limit),
        },
        spec: &cfg.spec,
        price_impact: &cfg.price_impact,
        picard: PicardSection {
            tol: Some(cfg.picard.tol),
            max_iter: Some(cfg.picard.max_iter),
            basis: Some(basis.into()),
            degree,
            centers,
            ridge: Some(cfg.picard.ridge),
        },
        flow: FlowSection {
            tol: Some(cfg.flow.tol),
            max_outer: Some(cfg.flow.max_outer),
        },
    };
    toml::to_string(&e).expect("config serializes")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_the_study_defaults() {
        for kind in StudyKind::ALL {
            assert_eq!(parse(kind, "").unwrap(), StudyConfig::for_study(kind));
        }
    }

    #[test]
    fn rendering_round_trips() {
        for kind in StudyKind::ALL {
            let mut cfg = StudyConfig::for_study(kind);
            cfg.spec.a = 0.1 + 0.2;
            cfg.spec.mu0_std = 1.0 / 3.0;
            cfg.seed = u64::from(u32::MAX) * 7;
            cfg.picard.basis = Basis::Indicator { centers: vec![-1.0, 0.25, 2.0] };
            cfg.flow.tol = 3e-9;
            let text = render(&cfg);
            // parse against a different study so no default leaks in
            let other = if kind == StudyKind::Fbsde { StudyKind::NashGap } else { StudyKind::Fbsde };
            assert_eq!(parse(other, &text).unwrap(), cfg, "{text}");
            assert_eq!(render(&parse(other, &text).unwrap()), text);
        }
    }

    #[test]
    fn unknown_keys_are_rejected() {
        for text in [
            "[spec]\nAbar_typo = 1.0\n",
            "[study]\nreplication = 5\n",
            "[picard]\ntolerance = 1e-3\n",
            "[flow]\nmax_iter = 3\n",
            "[price_impact]\nh3_slope = 0.1\n",
            "[studies]\n",
            "seed = 3\n",
        ] {
            assert!(parse(StudyKind::NashGap, text).is_err(), "{text}");
        }
    }

    #[test]
    fn partial_sections_keep_defaults() {
        let cfg = parse(StudyKind::Concentration, "[spec]\nsigma = 0.7\n[study]\nseed = 5\n").unwrap();
        let base = StudyConfig::for_study(StudyKind::Concentration);
        assert_eq!(cfg.spec.sigma, 0.7);
        assert_eq!(cfg.spec.horizon, base.spec.horizon);
        assert_eq!(cfg.seed, 5);
        assert_eq!(cfg.thresholds, base.thresholds);
    }

    #[test]
    fn basis_keys_must_match_the_basis() {
        assert!(parse(StudyKind::Fbsde, "[picard]\nbasis = \"indicator\"\n").is_err());
        assert!(parse(StudyKind::Fbsde, "[picard]\ncenters = [0.0]\n").is_err());
        assert!(parse(StudyKind::Fbsde, "[picard]\nbasis = \"spline\"\n").is_err());
        let cfg = parse(StudyKind::Fbsde, "[picard]\ndegree = 3\n").unwrap();
        assert_eq!(cfg.picard.basis, Basis::Polynomial { degree: 3 });
    }

    #[test]
    fn wrong_types_are_rejected() {
        assert!(parse(StudyKind::NashGap, "[spec]\nA = \"big\"\n").is_err());
        assert!(parse(StudyKind::NashGap, "[study]\nn_list = 8\n").is_err());
    }

    #[test]
    fn bundled_files_match_the_built_in_defaults() {
        let files = [
            (StudyKind::NashGap, include_str!("../../../configs/mfg-gap.toml")),
            (StudyKind::Offdiag, include_str!("../../../configs/offdiag.toml")),
            (StudyKind::Concentration, include_str!("../../../configs/concentration.toml")),
            (StudyKind::CoopGap, include_str!("../../../configs/coop-gap.toml")),
            (StudyKind::MasterGap, include_str!("../../../configs/master-gap.toml")),
            (StudyKind::PriceImpact, include_str!("../../../configs/price-impact.toml")),
            (StudyKind::Fbsde, include_str!("../../../configs/fbsde.toml")),
        ];
        for (kind, text) in files {
            assert_eq!(parse(StudyKind::Fbsde, text).unwrap(), StudyConfig::for_study(kind), "{}", kind.name());
        }
    }
}

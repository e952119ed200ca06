use std::fmt::Write as _;

use sha2::{Digest, Sha256};

use crate::chaos::{Basis, FlowSettings, PicardSettings};
use crate::error::{Error, Result};
use crate::grid::TimeGrid;
use crate::lq::{LqSpec, PriceImpact};

/// The studies the laboratory can run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum StudyKind {
    NashGap,
    Offdiag,
    Concentration,
    CoopGap,
    MasterGap,
    PriceImpact,
    Fbsde,
}

impl StudyKind {
    pub const ALL: [StudyKind; 7] = [
        StudyKind::NashGap,
        StudyKind::Offdiag,
        StudyKind::Concentration,
        StudyKind::CoopGap,
        StudyKind::MasterGap,
        StudyKind::PriceImpact,
        StudyKind::Fbsde,
    ];

    pub fn name(self) -> &'static str {
        match self {
            StudyKind::NashGap => "mfg-gap",
            StudyKind::Offdiag => "offdiag",
            StudyKind::Concentration => "concentration",
            StudyKind::CoopGap => "coop-gap",
            StudyKind::MasterGap => "master-gap",
            StudyKind::PriceImpact => "price-impact",
            StudyKind::Fbsde => "fbsde",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.name() == name)
    }

    /// Studies that fit a slope over the N list.
    pub fn fits_slope(self) -> bool {
        !matches!(self, StudyKind::Fbsde)
    }
}

/// Everything a study depends on. A study is a pure function of this value.
#[derive(Debug, Clone, PartialEq)]
pub struct StudyConfig {
    pub spec: LqSpec,
    /// Registry name of the coefficient bundle; `lq` selects the closed-form path.
    pub bundle: String,
    pub price_impact: PriceImpact,
    pub n_list: Vec<usize>,
    pub replications: usize,
    pub n_steps: usize,
    pub seed: u64,
    /// Tail thresholds for the concentration study.
    pub thresholds: Vec<f64>,
    /// Evaluation times; empty means `{0, T/2, T}`.
    pub eval_times: Vec<f64>,
    /// Moment order `k` of the rate overlays.
    pub moment_k: f64,
    pub reference_samples: usize,
    /// Law particles of the McKean–Vlasov solve on the Picard path.
    pub law_particles: usize,
    pub picard: PicardSettings,
    pub flow: FlowSettings,
    /// Re-run on the halved step and report the relative change of every gap moment.
    pub refine_check: bool,
    /// Largest admissible CI half-width as a fraction of the estimate.
    pub ci_limit: f64,
}

impl Default for StudyConfig {
    fn default() -> Self {
        Self {
            spec: LqSpec::default(),
            bundle: "lq".into(),
            price_impact: PriceImpact::default(),
            n_list: vec![8, 16, 32, 64, 128, 256, 512],
            replications: 200,
            n_steps: 100,
            seed: 20_240_601,
            thresholds: Vec::new(),
            eval_times: Vec::new(),
            moment_k: 8.0,
            reference_samples: 100_000,
            law_particles: 4096,
            picard: PicardSettings::default(),
            flow: FlowSettings::default(),
            refine_check: false,
            ci_limit: 0.3,
        }
    }
}

/// Thresholds of the default concentration grid.
pub const DEFAULT_THRESHOLDS: [f64; 4] = [0.03, 0.04, 0.05, 0.06];

impl StudyConfig {
    /// The bundled default configuration of a study.
    pub fn for_study(kind: StudyKind) -> Self {
        let base = Self::default();
        match kind {
            StudyKind::NashGap | StudyKind::Offdiag | StudyKind::CoopGap => base,
            StudyKind::PriceImpact => Self {
                bundle: "price-impact".into(),
                ..base
            },
            StudyKind::Concentration => Self {
                spec: LqSpec::default().with_dirac().with_horizon(0.3),
                n_list: vec![16, 32, 64, 128, 256],
                replications: 400,
                n_steps: 60,
                thresholds: DEFAULT_THRESHOLDS.to_vec(),
                eval_times: vec![0.3],
                ..base
            },
            StudyKind::MasterGap => Self {
                n_list: vec![16, 32, 64, 128, 256],
                replications: 2000,
                eval_times: vec![0.0],
                ..base
            },
            StudyKind::Fbsde => Self {
                spec: LqSpec::default().with_horizon(0.5),
                n_list: vec![10_000],
                replications: 8,
                n_steps: 50,
                law_particles: 20_000,
                eval_times: vec![0.0],
                ..base
            },
        }
    }

    pub fn grid(&self) -> Result<TimeGrid> {
        TimeGrid::new(self.spec.horizon, self.n_steps)
    }

    /// Evaluation times with the default filled in.
    pub fn times(&self) -> Vec<f64> {
        if self.eval_times.is_empty() {
            let t = self.spec.horizon;
            vec![0.0, 0.5 * t, t]
        } else {
            self.eval_times.clone()
        }
    }

    /// Grid nodes nearest to the evaluation times.
    pub fn eval_nodes(&self, grid: &TimeGrid) -> Vec<usize> {
        self.times().iter().map(|t| grid.nearest_node(*t)).collect()
    }

    pub fn validate(&self, kind: StudyKind) -> Result<()> {
        self.spec.validate()?;
        self.picard.validate()?;
        if self.n_steps == 0 {
            return Err(Error::param("n_steps", 0.0, "need at least one time step"));
        }
        if self.n_list.is_empty() || self.n_list.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidConfig(format!("N list {:?} must be strictly increasing", self.n_list)));
        }
        if self.n_list[0] < 2 {
            return Err(Error::param("N", self.n_list[0] as f64, "need at least two players"));
        }
        if kind.fits_slope() && self.n_list.len() < 4 {
            return Err(Error::InvalidConfig(format!(
                "slope studies need at least 4 values of N, got {}",
                self.n_list.len()
            )));
        }
        if kind == StudyKind::Concentration {
            if self.replications < 100 {
                return Err(Error::param("replications", self.replications as f64, "tail studies need at least 100"));
            }
            if self.thresholds.is_empty() {
                return Err(Error::InvalidConfig("tail study without thresholds".into()));
            }
            if self.reference_samples < 2 {
                return Err(Error::param("reference_samples", self.reference_samples as f64, "need a reference sample"));
            }
        }
        if self.replications < 2 {
            return Err(Error::param("replications", self.replications as f64, "need at least two"));
        }
        if let Some(a) = self.thresholds.iter().find(|a| !(a.is_finite() && **a > 0.0)) {
            return Err(Error::param("thresholds", *a, "must be positive"));
        }
        let t = self.spec.horizon;
        if let Some(s) = self.eval_times.iter().find(|s| !(s.is_finite() && **s >= 0.0 && **s <= t)) {
            return Err(Error::param("eval_times", *s, "must lie in [0, T]"));
        }
        if !(self.moment_k.is_finite() && self.moment_k > 2.0) {
            return Err(Error::param("moment_k", self.moment_k, "must exceed 2"));
        }
        if !(self.ci_limit > 0.0 && self.ci_limit <= 1.0) {
            return Err(Error::param("ci_limit", self.ci_limit, "must lie in (0, 1]"));
        }
        if !(self.flow.tol > 0.0) || self.flow.max_outer == 0 {
            return Err(Error::param("flow.tol", self.flow.tol, "need a positive tolerance and outer budget"));
        }
        Ok(())
    }

    /// Deterministic `key = value` rendering of every field.
    pub fn canonical(&self) -> String {
        let mut s = String::new();
        for (k, v) in self.spec.entries() {
            let _ = writeln!(s, "spec.{k} = {v:?}");
        }
        let p = &self.price_impact;
        for (k, v) in [
            ("h1_slope", p.h1_slope),
            ("h2_slope", p.h2_slope),
            ("c_quad", p.c_quad),
            ("cX_quad", p.cx_quad),
            ("g_quad", p.g_quad),
            ("sigma", p.sigma),
            ("T", p.horizon),
        ] {
            let _ = writeln!(s, "price_impact.{k} = {v:?}");
        }
        let _ = writeln!(s, "bundle = {}", self.bundle);
        let _ = writeln!(s, "n_list = {:?}", self.n_list);
        let _ = writeln!(s, "replications = {}", self.replications);
        let _ = writeln!(s, "n_steps = {}", self.n_steps);
        let _ = writeln!(s, "seed = {}", self.seed);
        let _ = writeln!(s, "thresholds = {:?}", self.thresholds);
        let _ = writeln!(s, "eval_times = {:?}", self.times());
        let _ = writeln!(s, "moment_k = {:?}", self.moment_k);
        let _ = writeln!(s, "reference_samples = {}", self.reference_samples);
        let _ = writeln!(s, "law_particles = {}", self.law_particles);
        let pc = &self.picard;
        let basis = match &pc.basis {
            Basis::Polynomial { degree } => format!("polynomial({degree})"),
            Basis::Indicator { centers } => format!("indicator({centers:?})"),
        };
        let _ = writeln!(s, "picard = tol {:?}, max_iter {}, basis {basis}, ridge {:?}", pc.tol, pc.max_iter, pc.ridge);
        let _ = writeln!(s, "flow = tol {:?}, max_outer {}", self.flow.tol, self.flow.max_outer);
        let _ = writeln!(s, "refine_check = {}", self.refine_check);
        let _ = writeln!(s, "ci_limit = {:?}", self.ci_limit);
        s
    }

    /// SHA-256 of [`StudyConfig::canonical`].
    pub fn fingerprint(&self) -> String {
        let digest = Sha256::digest(self.canonical().as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}

use crate::chaos::bundle::{CoefficientBundle, Dims, Law};
use crate::error::{Error, Result};
use crate::lq::{price_impact_spec, social_driver_nplayer, CooperativeControlMap, LqSpec, PriceImpact};

/// Which LQ optimality system a particle bundle encodes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LqBundleKind {
    /// Mean field game equilibrium: `alpha = -B y / 2R`.
    Game,
    /// Cooperative (social) optimum with the closed-form mean control.
    Cooperative,
}

/// The scalar LQ game as a particle FBSDE bundle.
#[derive(Debug, Clone)]
pub struct LqParticleBundle {
    pub spec: LqSpec,
    pub kind: LqBundleKind,
    name: String,
}

impl LqParticleBundle {
    pub fn game(spec: &LqSpec) -> Self {
        Self {
            spec: *spec,
            kind: LqBundleKind::Game,
            name: "lq".into(),
        }
    }

    pub fn cooperative(spec: &LqSpec) -> Result<Self> {
        spec.validate_cooperative()?;
        Ok(Self {
            spec: *spec,
            kind: LqBundleKind::Cooperative,
            name: "lq-coop".into(),
        })
    }

    fn named(mut self, name: &str) -> Self {
        self.name = name.into();
        self
    }

    fn alpha(&self, y: f64, x_mean: f64, y_mean: f64) -> (f64, f64) {
        let s = &self.spec;
        match self.kind {
            LqBundleKind::Game => {
                let k = -s.b / (2.0 * s.r);
                (k * y, k * y_mean)
            }
            LqBundleKind::Cooperative => {
                let map = CooperativeControlMap::new(s).expect("validated at construction");
                (map.control(y, x_mean, y_mean), map.mean_control(x_mean, y_mean))
            }
        }
    }
}

impl CoefficientBundle for LqParticleBundle {
    fn name(&self) -> &str {
        &self.name
    }

    fn dims(&self) -> Dims {
        Dims::SCALAR
    }

    fn sigma(&self) -> Vec<f64> {
        vec![self.spec.sigma]
    }

    fn initial(&self, normals: &[f64], out: &mut [f64]) {
        out[0] = self.spec.mu0_mean + self.spec.mu0_std * normals[0];
    }

    fn drift(&self, _t: f64, x: &[f64], y: &[f64], law: &Law, out: &mut [f64]) {
        let s = &self.spec;
        let (a, a_mean) = self.alpha(y[0], law.x_mean[0], law.y_mean[0]);
        out[0] = s.a * x[0] + s.a_bar * law.x_mean[0] + s.b * a + s.b_bar * a_mean;
    }

    fn driver(&self, _t: f64, x: &[f64], y: &[f64], _z: &[f64], law: &Law, out: &mut [f64]) {
        let s = &self.spec;
        out[0] = match self.kind {
            LqBundleKind::Game => 2.0 * s.q * x[0] - s.s_bar * s.b / (2.0 * s.r) * law.y_mean[0] + s.a * y[0],
            LqBundleKind::Cooperative => social_driver_nplayer(s, x[0], y[0], law.x_mean[0], law.y_mean[0]),
        };
    }

    fn terminal(&self, x: &[f64], law: &Law, out: &mut [f64]) {
        let s = &self.spec;
        out[0] = match self.kind {
            LqBundleKind::Game => 2.0 * s.q_t * x[0],
            LqBundleKind::Cooperative => 2.0 * s.q_t * x[0] + 2.0 * s.q_bar_t * law.x_mean[0],
        };
    }

    fn lipschitz(&self) -> f64 {
        let s = &self.spec;
        [s.a, s.a_bar, s.b * s.b / s.r, s.b_bar * s.b / s.r, 2.0 * s.q, s.s_bar * s.b / s.r, 2.0 * s.q_t]
            .iter()
            .map(|v| v.abs())
            .fold(0.0, f64::max)
    }

    fn measure_dependent(&self) -> bool {
        let s = &self.spec;
        match self.kind {
            LqBundleKind::Game => s.a_bar != 0.0 || s.b_bar != 0.0 || s.s_bar != 0.0,
            LqBundleKind::Cooperative => !s.is_interaction_free(),
        }
    }

    fn control(&self, _t: f64, _x: &[f64], y: &[f64], law: &Law) -> Option<Vec<f64>> {
        Some(vec![self.alpha(y[0], law.x_mean[0], law.y_mean[0]).0])
    }
}

/// Nonlinear demo bundles with `tanh`-saturated drifts.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TanhVariant {
    /// `B = -tanh(y) + tanh(x̄ - x) / 2`, `F = x - x̄/2 + y/5`, `G = x + 3 tanh(x̄)/10`.
    Flocking,
    /// Bounded terminal cost: `B = -tanh(y) - 3x/10 + ȳ/5`, `F = tanh(x - x̄) - y/10`, `G = tanh(x)`.
    Bounded,
}

#[derive(Debug, Clone)]
pub struct TanhBundle {
    pub variant: TanhVariant,
    pub sigma: f64,
    pub mu0_mean: f64,
    pub mu0_std: f64,
}

impl TanhBundle {
    pub fn new(variant: TanhVariant) -> Self {
        let (mu0_mean, mu0_std) = match variant {
            TanhVariant::Flocking => (1.0, 0.5),
            TanhVariant::Bounded => (0.5, 0.5),
        };
        Self {
            variant,
            sigma: 0.5,
            mu0_mean,
            mu0_std,
        }
    }
}

impl CoefficientBundle for TanhBundle {
    fn name(&self) -> &str {
        match self.variant {
            TanhVariant::Flocking => "tanh-flocking",
            TanhVariant::Bounded => "tanh-bounded",
        }
    }

    fn dims(&self) -> Dims {
        Dims::SCALAR
    }

    fn sigma(&self) -> Vec<f64> {
        vec![self.sigma]
    }

    fn initial(&self, normals: &[f64], out: &mut [f64]) {
        out[0] = self.mu0_mean + self.mu0_std * normals[0];
    }

    fn drift(&self, _t: f64, x: &[f64], y: &[f64], law: &Law, out: &mut [f64]) {
        out[0] = match self.variant {
            TanhVariant::Flocking => -y[0].tanh() + 0.5 * (law.x_mean[0] - x[0]).tanh(),
            TanhVariant::Bounded => -y[0].tanh() - 0.3 * x[0] + 0.2 * law.y_mean[0],
        };
    }

    fn driver(&self, _t: f64, x: &[f64], y: &[f64], _z: &[f64], law: &Law, out: &mut [f64]) {
        out[0] = match self.variant {
            TanhVariant::Flocking => x[0] - 0.5 * law.x_mean[0] + 0.2 * y[0],
            TanhVariant::Bounded => (x[0] - law.x_mean[0]).tanh() - 0.1 * y[0],
        };
    }

    fn terminal(&self, x: &[f64], law: &Law, out: &mut [f64]) {
        out[0] = match self.variant {
            TanhVariant::Flocking => x[0] + 0.3 * law.x_mean[0].tanh(),
            TanhVariant::Bounded => x[0].tanh(),
        };
    }

    fn lipschitz(&self) -> f64 {
        match self.variant {
            TanhVariant::Flocking => 1.0,
            TanhVariant::Bounded => 1.0,
        }
    }

    fn measure_dependent(&self) -> bool {
        true
    }

    fn bounded_growth(&self) -> bool {
        self.variant == TanhVariant::Bounded
    }

    fn control(&self, _t: f64, _x: &[f64], y: &[f64], _law: &Law) -> Option<Vec<f64>> {
        Some(vec![-y[0].tanh()])
    }
}

type DriftFn = dyn Fn(f64, f64, f64, f64, f64) -> f64 + Send + Sync;
type DriverFn = dyn Fn(f64, f64, f64, f64, f64, f64) -> f64 + Send + Sync;
type TerminalFn = dyn Fn(f64, f64) -> f64 + Send + Sync;

/// Scalar bundle assembled from closures over `(t, x, y, mean x, mean y)`.
pub struct ScalarFnBundle {
    pub name: String,
    pub sigma: f64,
    pub mu0_mean: f64,
    pub mu0_std: f64,
    pub lipschitz: f64,
    pub measure_dependent: bool,
    /// `(t, x, y, x̄, ȳ) -> B`
    pub drift: Box<DriftFn>,
    /// `(t, x, y, z, x̄, ȳ) -> F`
    pub driver: Box<DriverFn>,
    /// `(x, x̄) -> G`
    pub terminal: Box<TerminalFn>,
}

impl CoefficientBundle for ScalarFnBundle {
    fn name(&self) -> &str {
        &self.name
    }

    fn dims(&self) -> Dims {
        Dims::SCALAR
    }

    fn sigma(&self) -> Vec<f64> {
        vec![self.sigma]
    }

    fn initial(&self, normals: &[f64], out: &mut [f64]) {
        out[0] = self.mu0_mean + self.mu0_std * normals[0];
    }

    fn drift(&self, t: f64, x: &[f64], y: &[f64], law: &Law, out: &mut [f64]) {
        out[0] = (self.drift)(t, x[0], y[0], law.x_mean[0], law.y_mean[0]);
    }

    fn driver(&self, t: f64, x: &[f64], y: &[f64], z: &[f64], law: &Law, out: &mut [f64]) {
        out[0] = (self.driver)(t, x[0], y[0], z[0], law.x_mean[0], law.y_mean[0]);
    }

    fn terminal(&self, x: &[f64], law: &Law, out: &mut [f64]) {
        out[0] = (self.terminal)(x[0], law.x_mean[0]);
    }

    fn lipschitz(&self) -> f64 {
        self.lipschitz
    }

    fn measure_dependent(&self) -> bool {
        self.measure_dependent
    }
}

pub const BUNDLE_NAMES: [&str; 5] = ["lq", "lq-coop", "price-impact", "tanh-flocking", "tanh-bounded"];

/// Looks up a built-in bundle. The LQ bundles are built from `spec`, the
/// price-impact bundle from `impact`.
pub fn bundle_by_name(name: &str, spec: &LqSpec, impact: &PriceImpact) -> Result<Box<dyn CoefficientBundle>> {
    match name {
        "lq" => {
            spec.validate()?;
            Ok(Box::new(LqParticleBundle::game(spec)))
        }
        "lq-coop" => Ok(Box::new(LqParticleBundle::cooperative(spec)?)),
        "price-impact" => Ok(Box::new(LqParticleBundle::game(&price_impact_spec(impact)?).named("price-impact"))),
        "tanh-flocking" => Ok(Box::new(TanhBundle::new(TanhVariant::Flocking))),
        "tanh-bounded" => Ok(Box::new(TanhBundle::new(TanhVariant::Bounded))),
        other => Err(Error::UnknownBundle(other.to_string())),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chaos::bundle::LawMeans;

    #[test]
    fn registry_resolves_all_names() {
        for name in BUNDLE_NAMES {
            let b = bundle_by_name(name, &LqSpec::default(), &PriceImpact::default()).unwrap();
            assert_eq!(b.name(), name);
            assert_eq!(b.dims(), Dims::SCALAR);
        }
        assert!(matches!(
            bundle_by_name("nope", &LqSpec::default(), &PriceImpact::default()),
            Err(Error::UnknownBundle(_))
        ));
    }

    #[test]
    fn lq_bundle_matches_mfg_dynamics() {
        let spec = LqSpec::default();
        let b = LqParticleBundle::game(&spec);
        let xs = [0.5, 1.5];
        let ys = [1.0, 3.0];
        let means = LawMeans::of(&xs, &ys, Dims::SCALAR);
        let law = means.law(&xs, &ys);
        let mut out = [0.0];
        b.drift(0.0, &[0.5], &[1.0], &law, &mut out);
        let want = spec.a * 0.5 + spec.a_bar * 1.0 - spec.b * spec.b / (2.0 * spec.r) * 1.0
            - spec.b_bar * spec.b / (2.0 * spec.r) * 2.0;
        assert!((out[0] - want).abs() < 1e-15);
    }
}

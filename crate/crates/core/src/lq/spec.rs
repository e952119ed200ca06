use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Coefficients of the scalar linear-quadratic game
///
/// ```text
/// b(x, a, x̄, ā) = A x + Ā x̄ + B a + B̄ ā
/// f(x, a, x̄, ā) = Q x² + Q̄ x̄² + R a² + R̄ ā² + S̄ x ā
/// g(x, x̄)       = Q_T x² + Q̄_T x̄²
/// ```
///
/// with constant volatility `sigma`, horizon `T` and a Gaussian initial law
/// (a Dirac mass when `mu0_std == 0`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LqSpec {
    #[serde(rename = "A")]
    pub a: f64,
    #[serde(rename = "Abar")]
    pub a_bar: f64,
    #[serde(rename = "B")]
    pub b: f64,
    #[serde(rename = "Bbar")]
    pub b_bar: f64,
    #[serde(rename = "Q")]
    pub q: f64,
    #[serde(rename = "Qbar")]
    pub q_bar: f64,
    #[serde(rename = "R")]
    pub r: f64,
    #[serde(rename = "Rbar")]
    pub r_bar: f64,
    #[serde(rename = "Sbar")]
    pub s_bar: f64,
    #[serde(rename = "QT")]
    pub q_t: f64,
    #[serde(rename = "QbarT")]
    pub q_bar_t: f64,
    pub sigma: f64,
    #[serde(rename = "T")]
    pub horizon: f64,
    pub mu0_mean: f64,
    pub mu0_std: f64,
}

impl Default for LqSpec {
    fn default() -> Self {
        Self {
            a: 0.1,
            a_bar: 0.2,
            b: 1.0,
            b_bar: 0.3,
            q: 1.0,
            q_bar: 0.5,
            r: 1.0,
            r_bar: 0.2,
            s_bar: 0.3,
            q_t: 1.0,
            q_bar_t: 0.5,
            sigma: 0.5,
            horizon: 1.0,
            mu0_mean: 1.0,
            mu0_std: 0.5,
        }
    }
}

impl LqSpec {
    /// The default spec with every interaction coefficient set to zero.
    pub fn no_interaction(self) -> Self {
        Self {
            a_bar: 0.0,
            b_bar: 0.0,
            q_bar: 0.0,
            r_bar: 0.0,
            s_bar: 0.0,
            q_bar_t: 0.0,
            ..self
        }
    }

    pub fn with_horizon(self, horizon: f64) -> Self {
        Self { horizon, ..self }
    }

    pub fn with_dirac(self) -> Self {
        Self { mu0_std: 0.0, ..self }
    }

    pub fn is_dirac(&self) -> bool {
        self.mu0_std == 0.0
    }

    /// True when neither the dynamics nor the costs see the population.
    pub fn is_interaction_free(&self) -> bool {
        self.a_bar == 0.0
            && self.b_bar == 0.0
            && self.q_bar == 0.0
            && self.r_bar == 0.0
            && self.s_bar == 0.0
            && self.q_bar_t == 0.0
    }

    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("A", self.a),
            ("Abar", self.a_bar),
            ("B", self.b),
            ("Bbar", self.b_bar),
            ("Q", self.q),
            ("Qbar", self.q_bar),
            ("R", self.r),
            ("Rbar", self.r_bar),
            ("Sbar", self.s_bar),
            ("QT", self.q_t),
            ("QbarT", self.q_bar_t),
            ("sigma", self.sigma),
            ("T", self.horizon),
            ("mu0_mean", self.mu0_mean),
            ("mu0_std", self.mu0_std),
        ];
        for (name, v) in fields {
            if !v.is_finite() {
                return Err(Error::param(name, v, "must be finite"));
            }
        }
        if self.r == 0.0 {
            return Err(Error::param("R", self.r, "R must be nonzero"));
        }
        if self.sigma <= 0.0 {
            return Err(Error::param("sigma", self.sigma, "volatility must be positive"));
        }
        if self.horizon <= 0.0 {
            return Err(Error::param("T", self.horizon, "horizon must be positive"));
        }
        if self.mu0_std < 0.0 {
            return Err(Error::param("mu0_std", self.mu0_std, "must be nonnegative"));
        }
        Ok(())
    }

    /// Validation for an `n`-player Nash game: additionally `R + R̄/N ≠ 0`.
    pub fn validate_players(&self, n: usize) -> Result<()> {
        self.validate()?;
        if n == 0 {
            return Err(Error::param("N", 0.0, "need at least one player"));
        }
        let r_eff = self.r + self.r_bar / n as f64;
        if r_eff == 0.0 {
            return Err(Error::param("Rbar", self.r_bar, format!("R + Rbar/N vanishes for N = {n}")));
        }
        Ok(())
    }

    /// Validation for the cooperative problem: additionally `R + R̄ ≠ 0`.
    pub fn validate_cooperative(&self) -> Result<()> {
        self.validate()?;
        if self.r + self.r_bar == 0.0 {
            return Err(Error::param("Rbar", self.r_bar, "R + Rbar vanishes"));
        }
        Ok(())
    }

    /// Labeled coefficient list, used for table metadata.
    pub fn entries(&self) -> Vec<(&'static str, f64)> {
        vec![
            ("A", self.a),
            ("Abar", self.a_bar),
            ("B", self.b),
            ("Bbar", self.b_bar),
            ("Q", self.q),
            ("Qbar", self.q_bar),
            ("R", self.r),
            ("Rbar", self.r_bar),
            ("Sbar", self.s_bar),
            ("QT", self.q_t),
            ("QbarT", self.q_bar_t),
            ("sigma", self.sigma),
            ("T", self.horizon),
            ("mu0_mean", self.mu0_mean),
            ("mu0_std", self.mu0_std),
        ]
    }

    /// Drift of one player given own state, population mean state, own and mean control.
    pub fn drift(&self, x: f64, x_mean: f64, alpha: f64, alpha_mean: f64) -> f64 {
        self.a * x + self.a_bar * x_mean + self.b * alpha + self.b_bar * alpha_mean
    }

    pub fn running_cost(&self, x: f64, x_mean: f64, alpha: f64, alpha_mean: f64) -> f64 {
        self.q * x * x
            + self.q_bar * x_mean * x_mean
            + self.r * alpha * alpha
            + self.r_bar * alpha_mean * alpha_mean
            + self.s_bar * x * alpha_mean
    }

    pub fn terminal_cost(&self, x: f64, x_mean: f64) -> f64 {
        self.q_t * x * x + self.q_bar_t * x_mean * x_mean
    }
}

/// Linear price-impact execution problem expressed as an [`LqSpec`].
///
/// Trading cost `c(a) = c_quad a²`, inventory penalty `c_X(x) = cX_quad x²`,
/// terminal penalty `g(x) = g_quad x²`, temporary impact `a h₂(a)` with
/// `h₂(a) = h2_slope a` and permanent impact `-x h₁(ā)` with
/// `h₁(ā) = h1_slope ā`. The state is inventory, controlled at unit rate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PriceImpact {
    pub h1_slope: f64,
    pub h2_slope: f64,
    pub c_quad: f64,
    #[serde(rename = "cX_quad")]
    pub cx_quad: f64,
    pub g_quad: f64,
    pub sigma: f64,
    #[serde(rename = "T")]
    pub horizon: f64,
}

impl Default for PriceImpact {
    fn default() -> Self {
        Self {
            h1_slope: 0.4,
            h2_slope: 0.0,
            c_quad: 0.5,
            cx_quad: 0.5,
            g_quad: 0.5,
            sigma: 0.5,
            horizon: 1.0,
        }
    }
}

/// Maps the price-impact instance to LQ coordinates:
/// `R = c_quad + h2_slope`, `S̄ = -h1_slope`, `Q = cX_quad`, `Q_T = g_quad`, `B = 1`.
pub fn price_impact_spec(p: &PriceImpact) -> Result<LqSpec> {
    for (name, v) in [("c_quad", p.c_quad), ("cX_quad", p.cx_quad), ("g_quad", p.g_quad)] {
        if !(v.is_finite() && v > 0.0) {
            return Err(Error::param(name, v, "quadratic cost coefficients must be positive"));
        }
    }
    for (name, v) in [("h1_slope", p.h1_slope), ("h2_slope", p.h2_slope)] {
        if !v.is_finite() {
            return Err(Error::param(name, v, "must be finite"));
        }
    }
    let r = p.c_quad + p.h2_slope;
    if r <= 0.0 {
        return Err(Error::NonConvex { r_eff: r });
    }
    let spec = LqSpec {
        a: 0.0,
        a_bar: 0.0,
        b: 1.0,
        b_bar: 0.0,
        q: p.cx_quad,
        q_bar: 0.0,
        r,
        r_bar: 0.0,
        s_bar: -p.h1_slope,
        q_t: p.g_quad,
        q_bar_t: 0.0,
        sigma: p.sigma,
        horizon: p.horizon,
        mu0_mean: 1.0,
        mu0_std: 0.5,
    };
    spec.validate()?;
    Ok(spec)
}

impl PriceImpact {
    /// Human-readable description of the coordinate mapping.
    pub fn mapping_note(&self) -> String {
        format!(
            "R = c_quad + h2_slope = {}; Sbar = -h1_slope = {}; Q = cX_quad = {}; QT = g_quad = {}; B = 1; A = Abar = Bbar = Qbar = Rbar = QbarT = 0",
            self.c_quad + self.h2_slope,
            -self.h1_slope,
            self.cx_quad,
            self.g_quad
        )
    }
}

use crate::stats::pairwise_sum;

/// State, adjoint and noise dimensions `(ℓ, q, d)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Dims {
    pub state: usize,
    pub adjoint: usize,
    pub noise: usize,
}

impl Dims {
    pub const SCALAR: Dims = Dims {
        state: 1,
        adjoint: 1,
        noise: 1,
    };
}

/// Equal-weight empirical measure of `(X, Y)` pairs, with cached means.
///
/// `x` holds `n × ℓ` values and `y` holds `n × q` values, particle-major.
#[derive(Debug, Clone, Copy)]
pub struct Law<'a> {
    pub x: &'a [f64],
    pub y: &'a [f64],
    pub x_mean: &'a [f64],
    pub y_mean: &'a [f64],
}

/// Owned means backing a [`Law`].
#[derive(Debug, Clone, PartialEq)]
pub struct LawMeans {
    pub x_mean: Vec<f64>,
    pub y_mean: Vec<f64>,
}

impl LawMeans {
    pub fn of(x: &[f64], y: &[f64], dims: Dims) -> Self {
        Self {
            x_mean: component_means(x, dims.state),
            y_mean: component_means(y, dims.adjoint),
        }
    }

    pub fn law<'a>(&'a self, x: &'a [f64], y: &'a [f64]) -> Law<'a> {
        Law {
            x,
            y,
            x_mean: &self.x_mean,
            y_mean: &self.y_mean,
        }
    }
}

/// Per-component means of a particle-major `n × dim` array.
pub fn component_means(values: &[f64], dim: usize) -> Vec<f64> {
    let n = values.len() / dim.max(1);
    (0..dim)
        .map(|c| {
            let col: Vec<f64> = (0..n).map(|p| values[p * dim + c]).collect();
            pairwise_sum(&col) / n as f64
        })
        .collect()
}

/// Coefficients `(B, F, G)` of a forward-backward particle system
///
/// ```text
/// dX^i = B(t, X^i, Y^i, L^N(X, Y)) dt + sigma dW^i
/// dY^i = -F(t, X^i, Y^i, Z^{i,i}, L^N(X, Y)) dt + Σ_k Z^{i,k} dW^k,
/// Y^i_T = G(X^i_T, L^N(X_T))
/// ```
///
/// and of its McKean–Vlasov limit, where `L^N` is replaced by the law.
pub trait CoefficientBundle: Send + Sync {
    fn name(&self) -> &str;

    fn dims(&self) -> Dims;

    /// Constant volatility, `ℓ × d` row-major.
    fn sigma(&self) -> Vec<f64>;

    /// Initial state from `ℓ` standard normal draws.
    fn initial(&self, normals: &[f64], out: &mut [f64]);

    fn drift(&self, t: f64, x: &[f64], y: &[f64], law: &Law, out: &mut [f64]);

    /// `z` is the own-noise block `Z^{i,i}`, `q × d` row-major.
    fn driver(&self, t: f64, x: &[f64], y: &[f64], z: &[f64], law: &Law, out: &mut [f64]);

    /// Terminal condition; only the `x` part of `law` is meaningful.
    fn terminal(&self, x: &[f64], law: &Law, out: &mut [f64]);

    /// User-asserted Lipschitz constant of `(B, F, G)`.
    fn lipschitz(&self) -> f64;

    /// False when none of `B`, `F`, `G` reads the measure argument.
    fn measure_dependent(&self) -> bool;

    /// True when `|B|`, `|F|`, `|G|` are bounded in `(y, z)` (the weaker growth regime).
    fn bounded_growth(&self) -> bool {
        false
    }

    /// Equilibrium control `Λ(t, x, y, law)`, for bundles that come from a game.
    fn control(&self, _t: f64, _x: &[f64], _y: &[f64], _law: &Law) -> Option<Vec<f64>> {
        None
    }
}

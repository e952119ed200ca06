use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Uniform discretization `0 = t_0 < ... < t_n = T` of the horizon.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    horizon: f64,
    n_steps: usize,
    dt: f64,
    times: Vec<f64>,
}

impl TimeGrid {
    pub fn new(horizon: f64, n_steps: usize) -> Result<Self> {
        if !(horizon.is_finite() && horizon > 0.0) {
            return Err(Error::param("T", horizon, "horizon must be positive"));
        }
        if n_steps == 0 {
            return Err(Error::param("n_steps", 0.0, "need at least one step"));
        }
        let dt = horizon / n_steps as f64;
        let mut times: Vec<f64> = (0..n_steps).map(|k| k as f64 * dt).collect();
        // the last node is pinned so that rounding never moves t_n off T
        times.push(horizon);
        Ok(Self {
            horizon,
            n_steps,
            dt,
            times,
        })
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn n_steps(&self) -> usize {
        self.n_steps
    }

    pub fn n_nodes(&self) -> usize {
        self.n_steps + 1
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn t(&self, k: usize) -> f64 {
        self.times[k]
    }

    /// Index of the grid node closest to `t`.
    pub fn nearest_node(&self, t: f64) -> usize {
        let k = (t / self.dt).round();
        (k.max(0.0) as usize).min(self.n_steps)
    }

    /// Same horizon, each interval split in two.
    pub fn refined(&self) -> Self {
        Self::new(self.horizon, 2 * self.n_steps).expect("refining a valid grid")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn last_node_is_exactly_horizon() {
        let g = TimeGrid::new(0.3, 7).unwrap();
        assert_eq!(g.n_nodes(), 8);
        assert_eq!(g.t(7), 0.3);
        assert_eq!(g.t(0), 0.0);
        for w in g.times().windows(2) {
            assert!((w[1] - w[0] - g.dt()).abs() < 1e-15);
        }
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(TimeGrid::new(0.0, 10).is_err());
        assert!(TimeGrid::new(1.0, 0).is_err());
        assert!(TimeGrid::new(f64::NAN, 3).is_err());
    }

    #[test]
    fn nearest_node_clamps() {
        let g = TimeGrid::new(1.0, 10).unwrap();
        assert_eq!(g.nearest_node(0.5), 5);
        assert_eq!(g.nearest_node(2.0), 10);
        assert_eq!(g.nearest_node(-1.0), 0);
    }
}

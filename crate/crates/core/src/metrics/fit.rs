use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stats::Z95;

/// Least-squares line through `(log N, log value)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlopeFit {
    pub log_n: Vec<f64>,
    pub log_value: Vec<f64>,
    /// 95% half-widths of the values on the log scale (zero when not supplied).
    pub log_half_width: Vec<f64>,
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    /// 95% half-width of the slope from the regression residuals.
    pub slope_half_width: f64,
    /// Fitted-minus-observed log residuals, in input order.
    pub residuals: Vec<f64>,
}

/// Fits `log value = intercept + slope log N`.
///
/// `points` are `(N, value)` pairs; `half_widths`, when given, are 95%
/// half-widths of the values and are carried to the log scale by the delta
/// method. At least four points with positive `N` and value are required.
pub fn loglog_slope(points: &[(f64, f64)], half_widths: Option<&[f64]>) -> Result<SlopeFit> {
    let usable = points.iter().filter(|(n, v)| *n > 0.0 && *v > 0.0 && v.is_finite()).count();
    if usable < 4 || usable != points.len() {
        return Err(Error::TooFewPoints(usable));
    }
    let x: Vec<f64> = points.iter().map(|(n, _)| n.ln()).collect();
    let y: Vec<f64> = points.iter().map(|(_, v)| v.ln()).collect();
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    let sxy: f64 = x.iter().zip(&y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let syy: f64 = y.iter().map(|b| (b - my) * (b - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let residuals: Vec<f64> = x.iter().zip(&y).map(|(a, b)| intercept + slope * a - b).collect();
    let sse: f64 = residuals.iter().map(|r| r * r).sum();
    let r_squared = if syy > 0.0 { 1.0 - sse / syy } else { 1.0 };
    let slope_half_width = Z95 * (sse / (n - 2.0) / sxx).sqrt();
    let log_half_width = match half_widths {
        Some(h) => points.iter().zip(h).map(|((_, v), hw)| hw / v).collect(),
        None => vec![0.0; points.len()],
    };
    Ok(SlopeFit {
        log_n: x,
        log_value: y,
        log_half_width,
        slope,
        intercept,
        r_squared,
        slope_half_width,
        residuals,
    })
}

/// Exceedance probability `P(W ≥ a)` with a Wilson 95% interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TailEstimate {
    pub threshold: f64,
    pub exceed: usize,
    pub count: usize,
    pub estimate: f64,
    pub lower: f64,
    pub upper: f64,
}

impl TailEstimate {
    /// True when this interval lies entirely below `other`'s.
    pub fn separated_below(&self, other: &TailEstimate) -> bool {
        self.upper < other.lower
    }
}

pub fn wilson_interval(exceed: usize, count: usize) -> (f64, f64) {
    let n = count as f64;
    let p = exceed as f64 / n;
    let z2 = Z95 * Z95;
    let denom = 1.0 + z2 / n;
    let center = (p + z2 / (2.0 * n)) / denom;
    let half = Z95 / denom * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt();
    let lower = if exceed == 0 { 0.0 } else { (center - half).max(0.0) };
    let upper = if exceed == count { 1.0 } else { (center + half).min(1.0) };
    (lower, upper)
}

pub fn empirical_tail(samples: &[f64], threshold: f64) -> Result<TailEstimate> {
    if samples.is_empty() {
        return Err(Error::EmptySample);
    }
    let exceed = samples.iter().filter(|w| **w >= threshold).count();
    let (lower, upper) = wilson_interval(exceed, samples.len());
    Ok(TailEstimate {
        threshold,
        exceed,
        count: samples.len(),
        estimate: exceed as f64 / samples.len() as f64,
        lower,
        upper,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{normals, StreamKey};
    use statrs::distribution::{ContinuousCDF, Normal};

    #[test]
    fn exact_power_law() {
        let pts: Vec<(f64, f64)> = [8.0, 16.0, 32.0, 64.0, 128.0].iter().map(|n| (*n, 3.0 / n)).collect();
        let fit = loglog_slope(&pts, None).unwrap();
        assert!((fit.slope + 1.0).abs() < 1e-12);
        assert!((fit.intercept - 3f64.ln()).abs() < 1e-12);
        assert!((fit.r_squared - 1.0).abs() < 1e-12);
    }

    #[test]
    fn too_few_points() {
        let pts = [(1.0, 1.0), (2.0, 0.5), (4.0, 0.25)];
        assert!(matches!(loglog_slope(&pts, None), Err(Error::TooFewPoints(3))));
        let pts = [(1.0, 1.0), (2.0, 0.5), (4.0, 0.0), (8.0, 0.1), (16.0, 0.05)];
        assert!(loglog_slope(&pts, None).is_err());
    }

    #[test]
    fn tail_below_all_samples() {
        let xs = vec![0.5; 1000];
        let t = empirical_tail(&xs, 1.0).unwrap();
        assert_eq!(t.estimate, 0.0);
        assert_eq!(t.lower, 0.0);
        assert!(t.upper > 2.0 / 1000.0 && t.upper < 4.0 / 1000.0);
    }

    #[test]
    fn gaussian_tail_matches_error_function() {
        let normal = Normal::new(0.0, 1.0).unwrap();
        let xs = normals(StreamKey::new(5, 0, 0), 20_000);
        for a in [0.0, 0.5, 1.0, 1.5, 2.0] {
            let t = empirical_tail(&xs, a).unwrap();
            let exact = 1.0 - normal.cdf(a);
            let width = t.upper - t.lower;
            assert!((t.estimate - exact).abs() <= 2.0 * width, "a = {a}");
        }
    }
}

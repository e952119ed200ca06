use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Arguments of the propagation-of-chaos rate `r_{N,M,k,p}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateQuery {
    pub n: f64,
    pub m: f64,
    pub k: f64,
    pub p: f64,
}

impl RateQuery {
    pub fn new(n: f64, m: f64, k: f64, p: f64) -> Self {
        Self { n, m, k, p }
    }

    /// `r_{N,M,k} = r_{N,M,k,2}`.
    pub fn with_default_power(n: f64, m: f64, k: f64) -> Self {
        Self::new(n, m, k, 2.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RateRegime {
    /// `p > M/2`, `k ≠ 2p`
    Subcritical,
    /// `p = M/2`, `k ≠ 2p`
    Critical,
    /// `M > 2p`, `k ≠ M/(M - p)`
    Supercritical,
}

pub fn rate_regime(q: &RateQuery) -> Result<RateRegime> {
    let RateQuery { n, m, k, p } = *q;
    let undefined = Error::UndefinedRegime { m, k, p };
    if !(n.is_finite() && n >= 1.0) {
        return Err(Error::param("N", n, "must be at least 1"));
    }
    if !(m.is_finite() && m >= 1.0) {
        return Err(Error::param("M", m, "must be at least 1"));
    }
    if !(p.is_finite() && p > 0.0 && k.is_finite() && k > p) {
        return Err(undefined);
    }
    if p > m / 2.0 {
        if k != 2.0 * p {
            return Ok(RateRegime::Subcritical);
        }
    } else if p == m / 2.0 {
        if k != 2.0 * p {
            return Ok(RateRegime::Critical);
        }
    } else if k != m / (m - p) {
        return Ok(RateRegime::Supercritical);
    }
    Err(undefined)
}

/// Piecewise rate
///
/// ```text
/// N^{-1/2} + N^{-(k-p)/k}              p > M/2, k ≠ 2p
/// N^{-1/2} log(1+N) + N^{-(k-p)/k}     p = M/2, k ≠ 2p
/// N^{-2/M} + N^{-(k-p)/k}              M > 2p,  k ≠ M/(M-p)
/// ```
///
/// Excluded boundary cases return [`Error::UndefinedRegime`].
pub fn theoretical_rate(q: &RateQuery) -> Result<f64> {
    let regime = rate_regime(q)?;
    let RateQuery { n, m, k, p } = *q;
    let moment_term = n.powf(-(k - p) / k);
    let dimension_term = match regime {
        RateRegime::Subcritical => n.powf(-0.5),
        RateRegime::Critical => n.powf(-0.5) * n.ln_1p(),
        RateRegime::Supercritical => n.powf(-2.0 / m),
    };
    Ok(dimension_term + moment_term)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn worked_values() {
        let r = |n, m, k, p| theoretical_rate(&RateQuery::new(n, m, k, p)).unwrap();
        // 100^{-1/2} + 100^{-2/3}
        assert!((r(100.0, 1.0, 6.0, 2.0) - 0.1464158883361278).abs() < 1e-15);
        // 10^{-4/3} + 10^{-3}
        assert!((r(1e4, 6.0, 8.0, 2.0) - 0.047415888336127796).abs() < 1e-15);
        for (m, k) in [(1.0, 8.0), (2.0, 3.0), (7.0, 8.0)] {
            assert_eq!(r(1.0, m, k, 2.0), 2.0);
        }
    }

    #[test]
    fn excluded_boundaries() {
        for (m, k, p) in [(4.0, 4.0, 2.0), (1.0, 4.0, 2.0), (6.0, 1.2, 1.0), (3.0, 1.5, 1.0), (2.0, 2.0, 1.0)] {
            let err = theoretical_rate(&RateQuery::new(10.0, m, k, p)).unwrap_err();
            assert!(matches!(err, Error::UndefinedRegime { .. }), "{m} {k} {p}");
        }
        // k must exceed p
        assert!(theoretical_rate(&RateQuery::new(10.0, 1.0, 2.0, 2.0)).is_err());
    }
}

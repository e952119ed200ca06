//! Order-independent reductions and small descriptive statistics.

/// Pairwise (cascade) summation. The split points depend only on the length,
/// so the result is the same however the input was produced.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    const LEAF: usize = 16;
    if xs.len() <= LEAF {
        let mut s = 0.0;
        for &x in xs {
            s += x;
        }
        return s;
    }
    let mid = xs.len() / 2;
    pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
}

pub fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    pairwise_sum(xs) / xs.len() as f64
}

/// Unbiased sample variance.
pub fn variance(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let m = mean(xs);
    let sq: Vec<f64> = xs.iter().map(|x| (x - m) * (x - m)).collect();
    pairwise_sum(&sq) / (xs.len() - 1) as f64
}

/// Mean with a normal-approximation 95% half-width.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeanEstimate {
    pub mean: f64,
    pub half_width: f64,
    pub count: usize,
}

impl MeanEstimate {
    pub fn from_samples(xs: &[f64]) -> Self {
        let n = xs.len();
        let mean = mean(xs);
        let se = (variance(xs) / n.max(1) as f64).sqrt();
        Self {
            mean,
            half_width: Z95 * se,
            count: n,
        }
    }

    pub fn lower(&self) -> f64 {
        self.mean - self.half_width
    }

    pub fn upper(&self) -> f64 {
        self.mean + self.half_width
    }

    pub fn standard_error(&self) -> f64 {
        self.half_width / Z95
    }
}

pub const Z95: f64 = 1.959_963_984_540_054;

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn pairwise_matches_naive_on_integers() {
        let xs: Vec<f64> = (1..=1000).map(|i| i as f64).collect();
        assert_eq!(pairwise_sum(&xs), 500_500.0);
    }

    #[test]
    fn variance_of_constant_is_zero() {
        assert_eq!(variance(&[2.0; 10]), 0.0);
        assert_eq!(variance(&[1.0]), 0.0);
    }

    proptest! {
        #[test]
        fn pairwise_sum_is_close_to_naive(xs in proptest::collection::vec(-1e3f64..1e3, 0..300)) {
            let naive: f64 = xs.iter().sum();
            let scale: f64 = xs.iter().map(|x| x.abs()).sum::<f64>().max(1.0);
            prop_assert!((pairwise_sum(&xs) - naive).abs() <= 1e-12 * scale);
        }
    }
}

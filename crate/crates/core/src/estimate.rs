//! Monte Carlo estimates with seed provenance.

use serde::{Deserialize, Serialize};

/// A sample mean together with its standard error and provenance.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct Estimate {
    pub mean: f64,
    pub stderr: f64,
    pub samples: u64,
    pub seed: u64,
}

impl Estimate {
    /// Mean and standard error (sample stdev / sqrt(n)) of `values`.
    pub fn from_samples(values: &[f64], seed: u64) -> Estimate {
        let n = values.len();
        assert!(n >= 1, "estimate requires at least one sample");
        let mean = values.iter().sum::<f64>() / n as f64;
        let stderr = if n > 1 {
            let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
            (var / n as f64).sqrt()
        } else {
            0.0
        };
        Estimate {
            mean,
            stderr,
            samples: n as u64,
            seed,
        }
    }

    /// An exactly computed quantity (zero standard error).
    pub fn exact(value: f64, seed: u64) -> Estimate {
        Estimate {
            mean: value,
            stderr: 0.0,
            samples: 0,
            seed,
        }
    }
}

/// A ratio of two sample means over common draws, with a delta-method
/// standard error that accounts for their correlation.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct RatioEstimate {
    pub ratio: f64,
    pub stderr: f64,
    pub numerator: Estimate,
    pub denominator: Estimate,
}

/// Delta-method estimate of `mean(num) / mean(den)` on paired samples.
pub fn ratio_estimate(num: &[f64], den: &[f64], seed: u64) -> RatioEstimate {
    assert_eq!(num.len(), den.len());
    let n = num.len();
    assert!(n >= 1);
    let nf = n as f64;
    let mx = num.iter().sum::<f64>() / nf;
    let my = den.iter().sum::<f64>() / nf;
    let r = mx / my;
    let stderr = if n > 1 {
        let mut sxx = 0.0;
        let mut syy = 0.0;
        let mut sxy = 0.0;
        for (&x, &y) in num.iter().zip(den) {
            sxx += (x - mx) * (x - mx);
            syy += (y - my) * (y - my);
            sxy += (x - mx) * (y - my);
        }
        let denom = (n - 1) as f64;
        let var = (sxx - 2.0 * r * sxy + r * r * syy) / denom / (my * my);
        (var.max(0.0) / nf).sqrt()
    } else {
        0.0
    };
    RatioEstimate {
        ratio: r,
        stderr,
        numerator: Estimate::from_samples(num, seed),
        denominator: Estimate::from_samples(den, seed),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mean_and_stderr() {
        let e = Estimate::from_samples(&[1.0, 2.0, 3.0, 4.0], 0);
        assert!((e.mean - 2.5).abs() < 1e-15);
        // sample variance 5/3, stderr sqrt(5/12)
        assert!((e.stderr - (5.0f64 / 12.0).sqrt()).abs() < 1e-15);
        assert_eq!(e.samples, 4);
    }

    #[test]
    fn degenerate_samples_have_zero_stderr() {
        let e = Estimate::from_samples(&[0.5; 100], 1);
        assert_eq!(e.stderr, 0.0);
    }

    #[test]
    fn ratio_of_identical_series_is_one_with_zero_error() {
        let xs = [0.3, 0.9, 0.4, 0.8];
        let r = ratio_estimate(&xs, &xs, 0);
        assert!((r.ratio - 1.0).abs() < 1e-15);
        assert!(r.stderr < 1e-15);
    }
}

//! Linear-pricing revenue: evaluation at a price and search for the best
//! price. Small finite supports are enumerated exactly; larger ones fall
//! back to Monte Carlo with common random numbers across prices.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::estimate::Estimate;
use crate::rng::{substream, STREAM_SAMPLING};
use crate::valuation::{sample_profile_with, ValuationDistribution};

use super::lemmas::min_lemma_bound;

/// Largest product of support sizes enumerated exactly.
pub const EXACT_PRODUCT_LIMIT: u128 = 4096;

/// Log-spaced price grid below the largest initial derivative.
#[derive(Debug, Clone, Copy)]
pub struct PriceGridSpec {
    /// Number of grid points (at least 64).
    pub points: usize,
    /// Log10 span of the grid below its top price.
    pub decades: f64,
}

impl Default for PriceGridSpec {
    fn default() -> Self {
        PriceGridSpec {
            points: 128,
            decades: 4.0,
        }
    }
}

/// Revenue of one price, with the product-form lower bound it dominates.
#[derive(Debug, Clone)]
pub struct LinearRevenue {
    /// p * E[min(1, sum_i y*_i(v_i, p))]; exact (zero standard error) when
    /// the support product is small enough to enumerate.
    pub revenue: Estimate,
    /// p * (1 - prod_i (1 - E[y*_i(v_i, p)])), always computed exactly from
    /// the per-agent marginals.
    pub product_lower_bound: f64,
}

fn support_product(dists: &[ValuationDistribution]) -> Result<u128> {
    let mut product: u128 = 1;
    for d in dists {
        product = product.saturating_mul(d.support()?.len() as u128);
    }
    Ok(product)
}

/// E[min(1, sum_i y*_i)] by exact enumeration of the product support.
fn enumerate_expected_sold(responses: &[Vec<(f64, f64)>]) -> f64 {
    fn recurse(responses: &[Vec<(f64, f64)>], level: usize, acc: f64, prob: f64) -> f64 {
        if level == responses.len() {
            return prob * acc.min(1.0);
        }
        // Demand already saturates the item: the remaining levels cannot
        // change min(1, .), so fold their total probability (one) in bulk.
        if acc >= 1.0 {
            return prob;
        }
        responses[level]
            .iter()
            .map(|&(y, w)| recurse(responses, level + 1, acc + y, prob * w))
            .sum()
    }
    recurse(responses, 0, 0.0, 1.0)
}

/// Expected revenue of the posted price `p`, together with the Lemma-style
/// product lower bound for comparison.
pub fn linear_revenue(
    dists: &[ValuationDistribution],
    p: f64,
    samples: u64,
    seed: u64,
) -> Result<LinearRevenue> {
    assert!(p >= 0.0);
    let supports: Vec<Vec<(f64, f64)>> = dists
        .iter()
        .map(|d| {
            Ok(d.support()?
                .iter()
                .map(|(v, w)| (v.inv_deriv(p), *w))
                .collect())
        })
        .collect::<Result<_>>()?;

    let marginals: Vec<f64> = supports
        .iter()
        .map(|atoms| atoms.iter().map(|&(y, w)| y * w).sum())
        .collect();
    let product_lower_bound = p * min_lemma_bound(&marginals);

    let revenue = if support_product(dists)? <= EXACT_PRODUCT_LIMIT {
        Estimate::exact(p * enumerate_expected_sold(&supports), seed)
    } else {
        assert!(samples >= 1);
        let sold: Vec<f64> = (0..samples)
            .into_par_iter()
            .map(|i| {
                let mut rng = substream(seed, STREAM_SAMPLING, i);
                let profile = sample_profile_with(dists, &mut rng);
                profile.iter().map(|v| v.inv_deriv(p)).sum::<f64>().min(1.0)
            })
            .collect();
        let est = Estimate::from_samples(&sold, seed);
        Estimate {
            mean: p * est.mean,
            stderr: p * est.stderr,
            ..est
        }
    };
    Ok(LinearRevenue {
        revenue,
        product_lower_bound,
    })
}

/// The best revenue found over the price grid plus refinements: a lower
/// bound on the supremum over all linear prices.
#[derive(Debug, Clone, Copy)]
pub struct BestLinearRevenue {
    pub revenue: f64,
    pub price: f64,
    /// Standard error of the revenue estimate at the best price (zero on
    /// the exact enumeration path).
    pub stderr: f64,
}

/// Search for the revenue-maximizing linear price: a log-spaced grid over
/// (0, p_max] with p_max the largest initial derivative, followed by two
/// golden-section refinements around the best grid cell. Supports with
/// unbounded initial derivative are rejected.
pub fn best_linear_revenue(
    dists: &[ValuationDistribution],
    grid: &PriceGridSpec,
    samples: u64,
    seed: u64,
) -> Result<BestLinearRevenue> {
    if grid.points < 64 {
        return Err(Error::InvalidArgument(format!(
            "price grid needs at least 64 points, got {}",
            grid.points
        )));
    }
    if !(grid.decades.is_finite() && grid.decades > 0.0) {
        return Err(Error::InvalidArgument(
            "grid decades must be positive".into(),
        ));
    }
    let p_max = dists
        .iter()
        .map(|d| d.max_initial_deriv())
        .collect::<Result<Vec<f64>>>()?
        .into_iter()
        .fold(0.0, f64::max);
    if !p_max.is_finite() {
        return Err(Error::UnboundedDerivative(
            "revenue search requires bounded initial derivatives".into(),
        ));
    }
    if p_max <= 0.0 {
        return Ok(BestLinearRevenue {
            revenue: 0.0,
            price: 0.0,
            stderr: 0.0,
        });
    }

    let eval = |p: f64| -> Result<LinearRevenue> { linear_revenue(dists, p, samples, seed) };

    let g = grid.points;
    let prices: Vec<f64> = (0..g)
        .map(|j| p_max * 10f64.powf(-grid.decades * (1.0 - j as f64 / (g - 1) as f64)))
        .collect();
    let mut best = BestLinearRevenue {
        revenue: f64::NEG_INFINITY,
        price: prices[0],
        stderr: 0.0,
    };
    let mut best_idx = 0;
    for (j, &p) in prices.iter().enumerate() {
        let lr = eval(p)?;
        if lr.revenue.mean > best.revenue {
            best = BestLinearRevenue {
                revenue: lr.revenue.mean,
                price: p,
                stderr: lr.revenue.stderr,
            };
            best_idx = j;
        }
    }

    // Two golden-section passes around the best cell; all probes share the
    // common draws, so comparisons are exact on the enumeration path and
    // low-variance on the Monte Carlo path.
    let mut lo = prices[best_idx.saturating_sub(1)];
    let mut hi = prices[(best_idx + 1).min(g - 1)];
    for _ in 0..2 {
        let phi = 0.5 * (5.0f64.sqrt() - 1.0);
        let mut a = lo;
        let mut b = hi;
        let mut x1 = b - phi * (b - a);
        let mut x2 = a + phi * (b - a);
        let mut f1 = eval(x1)?.revenue;
        let mut f2 = eval(x2)?.revenue;
        for _ in 0..48 {
            if f1.mean >= f2.mean {
                b = x2;
                x2 = x1;
                f2 = f1;
                x1 = b - phi * (b - a);
                f1 = eval(x1)?.revenue;
            } else {
                a = x1;
                x1 = x2;
                f1 = f2;
                x2 = a + phi * (b - a);
                f2 = eval(x2)?.revenue;
            }
            let (fx, x) = if f1.mean >= f2.mean {
                (&f1, x1)
            } else {
                (&f2, x2)
            };
            if fx.mean > best.revenue {
                best = BestLinearRevenue {
                    revenue: fx.mean,
                    price: x,
                    stderr: fx.stderr,
                };
            }
        }
        let width = 0.05 * (hi - lo);
        lo = (best.price - width).max(prices[0]);
        hi = (best.price + width).min(p_max);
    }
    Ok(best)
}

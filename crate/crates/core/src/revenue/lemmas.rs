//! Numeric certificates for the auxiliary revenue lemmas and the
//! logarithmic lower-bound construction.

use rand::Rng;

use crate::error::{Error, Result};
use crate::rng::{substream, STREAM_TUPLES};
use crate::valuation::{ConcaveValuation, ValuationDistribution};

use super::pricing::{best_linear_revenue, BestLinearRevenue, PriceGridSpec};
use super::{AgentDerivatives, ExAnteSolution};

/// Product-form lower bound on E[min(1, sum X_i)] for independent
/// X_i in [0, 1]: 1 - prod_i (1 - E[X_i]). Tight when every X_i is
/// Bernoulli.
pub fn min_lemma_bound(expectations: &[f64]) -> f64 {
    for &e in expectations {
        assert!(
            (0.0..=1.0 + 1e-12).contains(&e),
            "expectation out of [0, 1]: {e}"
        );
    }
    1.0 - expectations.iter().map(|e| 1.0 - e).product::<f64>()
}

/// Exact expectation and bound for one instance of the minimum lemma.
#[derive(Debug, Clone, Copy)]
pub struct MinLemmaReport {
    pub exact: f64,
    pub bound: f64,
}

/// Upper limit on the enumerated product size.
pub const MIN_LEMMA_ENUMERATION_LIMIT: u128 = 1_000_000;

/// Brute-force oracle: enumerate the product distribution of up to six
/// discrete variables on [0, 1] and compare E[min(1, sum X_i)] with the
/// product bound.
pub fn min_lemma_oracle(vars: &[Vec<(f64, f64)>]) -> Result<MinLemmaReport> {
    if vars.len() > 6 {
        return Err(Error::InvalidArgument(format!(
            "oracle enumerates at most 6 variables, got {}",
            vars.len()
        )));
    }
    let mut product: u128 = 1;
    for (k, var) in vars.iter().enumerate() {
        if var.is_empty() {
            return Err(Error::InvalidArgument(format!(
                "variable {k} has empty support"
            )));
        }
        let mut total = 0.0;
        for &(x, p) in var {
            if !(0.0..=1.0).contains(&x) {
                return Err(Error::InvalidArgument(format!(
                    "variable {k} has support point {x} outside [0, 1]"
                )));
            }
            if p < 0.0 {
                return Err(Error::InvalidArgument("negative probability".into()));
            }
            total += p;
        }
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidArgument(format!(
                "variable {k} probabilities sum to {total}"
            )));
        }
        product = product.saturating_mul(var.len() as u128);
    }
    if product > MIN_LEMMA_ENUMERATION_LIMIT {
        return Err(Error::EnumerationTooLarge(
            product,
            MIN_LEMMA_ENUMERATION_LIMIT,
        ));
    }

    fn recurse(vars: &[Vec<(f64, f64)>], level: usize, acc: f64, prob: f64) -> f64 {
        if level == vars.len() {
            return prob * acc.min(1.0);
        }
        vars[level]
            .iter()
            .map(|&(x, p)| recurse(vars, level + 1, acc + x, prob * p))
            .sum()
    }
    let exact = recurse(vars, 0, 0.0, 1.0);
    let expectations: Vec<f64> = vars
        .iter()
        .map(|var| var.iter().map(|&(x, p)| x * p).sum())
        .collect();
    Ok(MinLemmaReport {
        exact,
        bound: min_lemma_bound(&expectations),
    })
}

/// Witness of one violated inequality during the feasibility checks.
#[derive(Debug, Clone)]
pub struct FeasibilityWitness {
    pub description: String,
    pub lhs: f64,
    pub rhs: f64,
}

/// Outcome of the transformation feasibility checks: the transformed pair
/// must satisfy the anonymous-pricing program with budget R = 2 kappa - 1,
/// and the two supporting inequalities must hold numerically.
#[derive(Debug, Clone)]
pub struct FeasibilityReport {
    /// R = 2 kappa - 1.
    pub revenue_budget: f64,
    /// sum_i r_i <= 1.
    pub capacity_ok: bool,
    /// p (1 - prod_i H_i(p)) <= R on the price grid over (R, 100 R].
    pub pricing_ok: bool,
    /// E[y*_i(p)] >= (1 - H_i(p)) / (2 kappa - 1) per agent on a price grid.
    pub tail_response_ok: bool,
    /// 1 - prod (1 - t z_i) >= t (1 - prod (1 - z_i)) on random tuples.
    pub product_scaling_ok: bool,
    pub product_scaling_tuples: u64,
    pub witnesses: Vec<FeasibilityWitness>,
}

impl FeasibilityReport {
    pub fn all_ok(&self) -> bool {
        self.capacity_ok && self.pricing_ok && self.tail_response_ok && self.product_scaling_ok
    }
}

/// Verify that the transformed solution (r_i, H_i) with
/// H_i(t) = F_{i,0}(2 kappa t) is feasible for the anonymous-pricing
/// program with R = 2 kappa - 1, on an instance normalized so the best
/// linear revenue is at most 1 (rescale valuations by its reciprocal
/// first). Also spot-checks the two inequalities the feasibility proof
/// rests on; failures are reported as witnesses against this
/// implementation.
pub fn feasibility_check(
    solution: &ExAnteSolution,
    derivs: &[AgentDerivatives],
    dists: &[ValuationDistribution],
    kappa: f64,
    price_points: usize,
    product_tuples: u64,
    seed: u64,
) -> Result<FeasibilityReport> {
    assert!(kappa >= 1.0, "curvature below 1: {kappa}");
    assert!(price_points >= 2);
    let r_budget = 2.0 * kappa - 1.0;
    let mut witnesses = Vec::new();

    let r_total: f64 = solution.r.iter().sum();
    let capacity_ok = r_total <= 1.0 + 1e-9;
    if !capacity_ok {
        witnesses.push(FeasibilityWitness {
            description: "sum of r_i exceeds 1".into(),
            lhs: r_total,
            rhs: 1.0,
        });
    }

    let transformed_cdf =
        |agent: usize, t: f64| -> f64 { derivs[agent].at_zero.cdf(2.0 * kappa * t) };

    // Anonymous-pricing constraint on a log grid over (R, 100 R].
    let mut pricing_ok = true;
    for j in 0..price_points {
        let p = r_budget * 100f64.powf((j + 1) as f64 / price_points as f64);
        let unsold: f64 = (0..derivs.len()).map(|i| transformed_cdf(i, p)).product();
        let lhs = p * (1.0 - unsold);
        if lhs > r_budget + 1e-6 {
            pricing_ok = false;
            witnesses.push(FeasibilityWitness {
                description: format!("anonymous price constraint at p = {p}"),
                lhs,
                rhs: r_budget,
            });
        }
    }

    // Per-agent tail bound E[y*_i(p)] >= (1 - H_i(p)) / (2 kappa - 1),
    // exact expectations over the finite supports.
    let mut tail_response_ok = true;
    let p_hi = dists
        .iter()
        .map(|d| d.max_initial_deriv())
        .collect::<Result<Vec<f64>>>()?
        .into_iter()
        .fold(0.0, f64::max);
    if !p_hi.is_finite() {
        return Err(Error::UnboundedDerivative(
            "feasibility check requires bounded initial derivatives".into(),
        ));
    }
    for (i, dist) in dists.iter().enumerate() {
        let support = dist.support()?;
        for j in 0..price_points {
            let p = p_hi * 1.1 * 10f64.powf(-3.0 * (1.0 - j as f64 / (price_points - 1) as f64));
            let expected: f64 = support.iter().map(|(v, w)| w * v.inv_deriv(p)).sum();
            let rhs = (1.0 - transformed_cdf(i, p)) / r_budget;
            if expected < rhs - 1e-9 {
                tail_response_ok = false;
                witnesses.push(FeasibilityWitness {
                    description: format!("tail response bound for agent {i} at p = {p}"),
                    lhs: expected,
                    rhs,
                });
            }
        }
    }

    // Scaling inequality on random (t, z) tuples.
    let mut product_scaling_ok = true;
    let mut rng = substream(seed, STREAM_TUPLES, 0);
    for _ in 0..product_tuples {
        let t: f64 = rng.random_range(0.0..1.0);
        let k = rng.random_range(1..=6);
        let z: Vec<f64> = (0..k).map(|_| rng.random_range(0.0..=1.0)).collect();
        let lhs = 1.0 - z.iter().map(|zi| 1.0 - t * zi).product::<f64>();
        let rhs = t * (1.0 - z.iter().map(|zi| 1.0 - zi).product::<f64>());
        if lhs < rhs - 1e-12 {
            product_scaling_ok = false;
            witnesses.push(FeasibilityWitness {
                description: format!("product scaling inequality at t = {t}, z = {z:?}"),
                lhs,
                rhs,
            });
        }
    }

    Ok(FeasibilityReport {
        revenue_budget: r_budget,
        capacity_ok,
        pricing_ok,
        tail_response_ok,
        product_scaling_ok,
        product_scaling_tuples: product_tuples,
        witnesses,
    })
}

/// The high-curvature instance showing the gap must grow with kappa: a
/// single known valuation of curvature kappa for which any linear price
/// extracts at most 1/rho of the value 1 that the nonlinear tariff
/// p(z) = v(z) collects, with rho - ln(rho) = 1 + ln(kappa), so the gap is
/// at least 1 + ln(kappa).
#[derive(Debug, Clone)]
pub struct LowerBoundInstance {
    pub valuation: ConcaveValuation,
    pub kappa: f64,
    pub rho: f64,
    /// Analytic best linear revenue: the plateau value 1/rho.
    pub plateau: f64,
    pub best_linear: BestLinearRevenue,
    /// Revenue of the nonlinear tariff: v(1) = 1.
    pub nonlinear_revenue: f64,
    /// nonlinear_revenue / best linear revenue.
    pub gap: f64,
    /// 1 + ln(kappa).
    pub floor: f64,
}

/// Construct and evaluate the lower-bound instance for a given curvature.
pub fn lower_bound_instance(kappa: f64) -> Result<LowerBoundInstance> {
    let valuation = ConcaveValuation::log_cap(kappa)?;
    let rho = match &valuation {
        ConcaveValuation::LogCap(lc) => lc.rho(),
        _ => unreachable!("log_cap constructor yields the log-cap variant"),
    };
    let dists = [ValuationDistribution::point_mass(valuation.clone())];
    let best_linear = best_linear_revenue(&dists, &PriceGridSpec::default(), 1, 0)?;
    let nonlinear_revenue = valuation.value(1.0);
    Ok(LowerBoundInstance {
        kappa,
        rho,
        plateau: 1.0 / rho,
        gap: nonlinear_revenue / best_linear.revenue,
        floor: 1.0 + kappa.ln(),
        best_linear,
        nonlinear_revenue,
        valuation,
    })
}

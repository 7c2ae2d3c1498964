//! Welfare-side analysis: the approximation constants, the welfare-optimal
//! fractional allocation, welfare-ratio estimation, and statistical checks
//! of the two utility lemmas behind the guarantees.
//!
//! The optimal allocation maximizes sum_i v_i(x_i) subject to sum_i x_i <= 1
//! by water-filling: find the level lambda at which the agents' aggregate
//! best response sum_i inv_deriv(v_i, lambda) equals 1. Derivative plateaus
//! (piecewise-linear valuations, tied slopes) make that sum jump; the
//! residual fraction is then assigned to the lowest-indexed agents on the
//! critical plateau, which leaves the objective unchanged.

use rayon::prelude::*;

use crate::estimate::{ratio_estimate, Estimate, RatioEstimate};
use crate::mechanism::{run, Ordering};
use crate::rng::{substream, STREAM_SAMPLING};
use crate::valuation::{sample_profile_with, ValuationDistribution, ValuationProfile};

/// The constants of the two welfare guarantees.
///
/// beta solves e^(1/beta) = 2 + 1/beta; rho1 = e^(-1/beta) is the
/// any-order sold-fraction target and guarantee; rho2 = 1/(1 + 2 ln 2) is
/// the random-order counterpart.
#[derive(Debug, Clone, Copy)]
pub struct WelfareConstants {
    pub beta: f64,
    pub rho1: f64,
    pub rho2: f64,
}

/// Solve for the constants by bisection on u = 1/beta over [0.5, 2], where
/// e^u - 2 - u is increasing.
pub fn solve_constants() -> WelfareConstants {
    let mut lo = 0.5f64;
    let mut hi = 2.0f64;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid.exp() - 2.0 - mid < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-15 {
            break;
        }
    }
    let u = 0.5 * (lo + hi);
    WelfareConstants {
        beta: 1.0 / u,
        rho1: (-u).exp(),
        rho2: 1.0 / (1.0 + 2.0 * 2.0f64.ln()),
    }
}

/// A welfare-maximizing fractional allocation.
#[derive(Debug, Clone)]
pub struct OptimalAllocation {
    pub fractions: Vec<f64>,
    pub welfare: f64,
    /// The water level: the common marginal value of interior agents.
    pub level: f64,
}

/// Maximize sum_i v_i(x_i) over x_i in [0, 1] with sum_i x_i <= 1.
pub fn optimal_allocation(profile: &ValuationProfile) -> OptimalAllocation {
    let demand_at =
        |lambda: f64| -> f64 { profile.iter().map(|v| v.inv_deriv(lambda)).sum::<f64>() };

    // Bracket the level: demand_at(0) = n >= 1; find hi with demand < 1.
    let mut lo = 0.0f64;
    let max_deriv0 = profile.iter().map(|v| v.deriv(0.0)).fold(0.0, f64::max);
    let mut hi = if max_deriv0.is_finite() {
        max_deriv0.max(1.0)
    } else {
        1.0
    };
    let mut guard = 0;
    while demand_at(hi) >= 1.0 && guard < 1100 {
        hi *= 2.0;
        guard += 1;
    }

    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if demand_at(mid) >= 1.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-15 * hi.max(1.0) {
            break;
        }
    }

    // Feasible base from the high side, then hand the missing fraction to
    // the lowest-indexed agents up to their low-side response.
    let mut fractions: Vec<f64> = profile.iter().map(|v| v.inv_deriv(hi)).collect();
    let mut residual = 1.0 - fractions.iter().sum::<f64>();
    for (i, v) in profile.iter().enumerate() {
        if residual <= 0.0 {
            break;
        }
        let cap = v.inv_deriv(lo);
        let bump = (cap - fractions[i]).clamp(0.0, residual);
        fractions[i] += bump;
        residual -= bump;
    }
    debug_assert!(residual <= 1e-9, "unallocated residual {residual}");

    let welfare = profile
        .iter()
        .zip(&fractions)
        .map(|(v, &x)| v.value(x))
        .sum::<f64>();
    OptimalAllocation {
        fractions,
        welfare,
        level: 0.5 * (lo + hi),
    }
}

/// Welfare ratio of posted pricing against the offline optimum, on common
/// profile draws.
pub fn welfare_ratio(
    dists: &[ValuationDistribution],
    p: f64,
    ordering: &Ordering,
    samples: u64,
    seed: u64,
) -> RatioEstimate {
    welfare_ratio_orderings(dists, p, std::slice::from_ref(ordering), samples, seed)
        .pop()
        .expect("one ordering in, one estimate out")
}

/// Welfare ratios for several orderings sharing one set of profile draws
/// (the optimal welfare is computed once per draw).
pub fn welfare_ratio_orderings(
    dists: &[ValuationDistribution],
    p: f64,
    orderings: &[Ordering],
    samples: u64,
    seed: u64,
) -> Vec<RatioEstimate> {
    assert!(samples >= 1);
    let n = dists.len();
    let per_sample: Vec<(Vec<f64>, f64)> = (0..samples)
        .into_par_iter()
        .map(|i| {
            let mut rng = substream(seed, STREAM_SAMPLING, i);
            let profile = sample_profile_with(dists, &mut rng);
            let opt = optimal_allocation(&profile);
            let sw: Vec<f64> = orderings
                .iter()
                .map(|ordering| {
                    let order = ordering.realize(n, &mut rng);
                    let out = run(&profile, p, &order);
                    debug_assert!(out.welfare <= opt.welfare + 1e-9);
                    out.welfare
                })
                .collect();
            (sw, opt.welfare)
        })
        .collect();

    let optimal: Vec<f64> = per_sample.iter().map(|s| s.1).collect();
    orderings
        .iter()
        .enumerate()
        .map(|(k, _)| {
            let sw: Vec<f64> = per_sample.iter().map(|s| s.0[k]).collect();
            ratio_estimate(&sw, &optimal, seed)
        })
        .collect()
}

/// Empirical two-sided report of an inequality check: `margin` estimates
/// lhs - rhs (or rhs - lhs, per the check's convention) and should be
/// nonnegative up to a few standard errors.
#[derive(Debug, Clone, Copy)]
pub struct LemmaReport {
    pub lhs: f64,
    pub rhs: f64,
    pub margin: f64,
    pub stderr: f64,
    pub samples: u64,
    pub seed: u64,
}

/// Check the per-agent utility bound behind both welfare guarantees, for a
/// fixed order: E[u_i] >= beta (E[v_i(x_i)] - p E[x_i]) (1 - e^(-1/beta) -
/// E[min(1 - e^(-1/beta), X_i)]) where X_i sums the best responses of the
/// agents acting before i. The integral identity
/// int_0^alpha Pr[X >= t] dt = E[min(alpha, X)] turns the right side into
/// plain expectations over the same draws as the left.
pub fn check_aux_lemma(
    dists: &[ValuationDistribution],
    p: f64,
    order: &[usize],
    agent: usize,
    beta: f64,
    samples: u64,
    seed: u64,
) -> LemmaReport {
    assert!(beta > 0.0, "beta must be positive");
    assert!(agent < dists.len());
    let alpha0 = 1.0 - (-1.0 / beta).exp();
    let per_sample: Vec<(f64, f64, f64)> = (0..samples)
        .into_par_iter()
        .map(|i| {
            let mut rng = substream(seed, STREAM_SAMPLING, i);
            let profile = sample_profile_with(dists, &mut rng);
            let out = run(&profile, p, order);
            let opt = optimal_allocation(&profile);
            let x = opt.fractions[agent];
            let gains = profile.agent(agent).value(x) - p * x;
            let predecessors: f64 = order
                .iter()
                .take_while(|&&j| j != agent)
                .map(|&j| profile.agent(j).inv_deriv(p))
                .sum();
            (out.utilities[agent], gains, alpha0.min(predecessors))
        })
        .collect();

    let nf = samples as f64;
    let mean_u = per_sample.iter().map(|s| s.0).sum::<f64>() / nf;
    let mean_a = per_sample.iter().map(|s| s.1).sum::<f64>() / nf;
    let mean_m = per_sample.iter().map(|s| s.2).sum::<f64>() / nf;
    let rhs = beta * mean_a * (alpha0 - mean_m);
    let margin = mean_u - rhs;

    // Delta method for g(u, a, m) = u - beta a (alpha0 - m).
    let grad = [1.0, -beta * (alpha0 - mean_m), beta * mean_a];
    let mut cov = [[0.0f64; 3]; 3];
    if samples > 1 {
        for s in &per_sample {
            let d = [s.0 - mean_u, s.1 - mean_a, s.2 - mean_m];
            for r in 0..3 {
                for c in 0..3 {
                    cov[r][c] += d[r] * d[c];
                }
            }
        }
        for row in cov.iter_mut() {
            for val in row.iter_mut() {
                *val /= (samples - 1) as f64;
            }
        }
    }
    let mut var = 0.0;
    for r in 0..3 {
        for c in 0..3 {
            var += grad[r] * cov[r][c] * grad[c];
        }
    }
    let stderr = (var.max(0.0) / nf).sqrt();

    LemmaReport {
        lhs: mean_u,
        rhs,
        margin,
        stderr,
        samples,
        seed,
    }
}

/// Check the random-order bound E[min(alpha, X_i)] <= max(alpha, 1/2)
/// E[sum_j y_j] with X_i the predecessor best-response sum under a uniform
/// order; `margin` estimates rhs - lhs.
pub fn check_random_order_lemma(
    dists: &[ValuationDistribution],
    p: f64,
    alpha: f64,
    agent: usize,
    samples: u64,
    seed: u64,
) -> LemmaReport {
    assert!(alpha > 0.0, "alpha must be positive");
    assert!(agent < dists.len());
    let n = dists.len();
    let factor = alpha.max(0.5);
    // margin = E[factor * sold - min(alpha, predecessors)] is linear in the
    // per-sample values, so its standard error is the plain sample one.
    let per_sample: Vec<(f64, f64)> = (0..samples)
        .into_par_iter()
        .map(|i| {
            let mut rng = substream(seed, STREAM_SAMPLING, i);
            let profile = sample_profile_with(dists, &mut rng);
            let order = Ordering::UniformRandom.realize(n, &mut rng);
            let out = run(&profile, p, &order);
            let predecessors: f64 = order
                .iter()
                .take_while(|&&j| j != agent)
                .map(|&j| profile.agent(j).inv_deriv(p))
                .sum();
            (alpha.min(predecessors), out.sold)
        })
        .collect();

    let lhs: Vec<f64> = per_sample.iter().map(|s| s.0).collect();
    let diff: Vec<f64> = per_sample.iter().map(|s| factor * s.1 - s.0).collect();
    let lhs_mean = lhs.iter().sum::<f64>() / samples as f64;
    let margin_est = Estimate::from_samples(&diff, seed);
    LemmaReport {
        lhs: lhs_mean,
        rhs: lhs_mean + margin_est.mean,
        margin: margin_est.mean,
        stderr: margin_est.stderr,
        samples,
        seed,
    }
}

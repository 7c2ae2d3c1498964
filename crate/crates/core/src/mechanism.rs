//! Sequential posted pricing with a linear per-unit price.
//!
//! Agents act in an order pi. Each buys her best response against the
//! remaining fraction: min of inv_deriv(v, p) and what is left. Totals obey
//! the identity sum_j y_j = min(1, sum_j y*_j) regardless of the order, so
//! sold fraction and revenue are order-free while welfare is not.

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::estimate::Estimate;
use crate::rng::{substream, STREAM_SAMPLING};
use crate::valuation::{
    sample_profile_with, ConcaveValuation, ValuationDistribution, ValuationProfile,
};

/// How the processing order is chosen for each run.
#[derive(Debug, Clone)]
pub enum Ordering {
    /// A fixed permutation of the agents (agent indices, first to act first).
    Fixed(Vec<usize>),
    /// A fresh uniformly random permutation per run, drawn from the run's
    /// seed stream.
    UniformRandom,
}

impl Ordering {
    pub fn fixed(order: Vec<usize>) -> Result<Self> {
        let n = order.len();
        let mut seen = vec![false; n];
        for &i in &order {
            if i >= n || seen[i] {
                return Err(Error::InvalidArgument(format!(
                    "not a permutation of 0..{n}: {order:?}"
                )));
            }
            seen[i] = true;
        }
        Ok(Ordering::Fixed(order))
    }

    pub fn identity(n: usize) -> Self {
        Ordering::Fixed((0..n).collect())
    }

    pub fn reversed(n: usize) -> Self {
        Ordering::Fixed((0..n).rev().collect())
    }

    /// The permutation used for one run; uniform orders consume the rng.
    pub fn realize<R: Rng>(&self, n: usize, rng: &mut R) -> Vec<usize> {
        match self {
            Ordering::Fixed(order) => {
                assert_eq!(order.len(), n, "ordering arity mismatch");
                order.clone()
            }
            Ordering::UniformRandom => {
                let mut order: Vec<usize> = (0..n).collect();
                order.shuffle(rng);
                order
            }
        }
    }
}

/// Allocations, utilities and totals of a single run.
#[derive(Debug, Clone)]
pub struct MechanismOutcome {
    /// Fraction bought per agent (agent index, not position in the order).
    pub fractions: Vec<f64>,
    /// v_i(y_i) - p y_i per agent.
    pub utilities: Vec<f64>,
    /// p y_i per agent.
    pub payments: Vec<f64>,
    /// Total sold fraction sum_i y_i.
    pub sold: f64,
    /// sum_i v_i(y_i).
    pub welfare: f64,
    /// p * sold.
    pub revenue: f64,
    /// Unconstrained demand sum_i y*_i(v_i, p).
    pub demand: f64,
    /// The realized permutation.
    pub order: Vec<usize>,
}

impl MechanismOutcome {
    /// |sold - min(1, demand)|; zero up to rounding on every run.
    pub fn identity_gap(&self) -> f64 {
        (self.sold - self.demand.min(1.0)).abs()
    }
}

/// Best response of a single agent against an available fraction:
/// min(inv_deriv(v, p), available).
pub fn best_response(v: &ConcaveValuation, p: f64, available: f64) -> f64 {
    assert!(
        (0.0..=1.0).contains(&available),
        "available fraction out of range: {available}"
    );
    v.inv_deriv(p).min(available)
}

/// Execute one run over a realized permutation.
pub fn run(profile: &ValuationProfile, p: f64, order: &[usize]) -> MechanismOutcome {
    assert!(p >= 0.0, "price must be nonnegative: {p}");
    let n = profile.len();
    assert_eq!(order.len(), n, "order arity mismatch");
    let mut fractions = vec![0.0; n];
    let mut remaining = 1.0f64;
    for &i in order {
        let y = best_response(profile.agent(i), p, remaining);
        fractions[i] = y;
        // Clamp so floating-point drift cannot leave a negative remainder.
        remaining = (remaining - y).max(0.0);
    }
    let mut utilities = vec![0.0; n];
    let mut payments = vec![0.0; n];
    let mut sold = 0.0;
    let mut welfare = 0.0;
    let mut demand = 0.0;
    for i in 0..n {
        let y = fractions[i];
        let value = profile.agent(i).value(y);
        utilities[i] = value - p * y;
        payments[i] = p * y;
        sold += y;
        welfare += value;
        demand += profile.agent(i).inv_deriv(p);
    }
    MechanismOutcome {
        fractions,
        utilities,
        payments,
        sold,
        welfare,
        revenue: p * sold,
        demand,
        order: order.to_vec(),
    }
}

/// Monte Carlo estimates of one pricing configuration.
#[derive(Debug, Clone)]
pub struct OutcomeEstimates {
    pub welfare: Estimate,
    pub revenue: Estimate,
    pub sold: Estimate,
    pub utilities: Vec<Estimate>,
    /// Largest |sold - min(1, demand)| observed across the runs.
    pub max_identity_gap: f64,
}

/// Estimate expected welfare, revenue, sold fraction and per-agent
/// utilities over `samples` independent profile draws (plus order draws
/// when the ordering is uniformly random).
pub fn expected_outcome(
    dists: &[ValuationDistribution],
    p: f64,
    ordering: &Ordering,
    samples: u64,
    seed: u64,
) -> OutcomeEstimates {
    assert!(samples >= 1, "at least one sample required");
    let n = dists.len();
    let per_sample: Vec<(f64, f64, f64, Vec<f64>, f64)> = (0..samples)
        .into_par_iter()
        .map(|i| {
            let mut rng = substream(seed, STREAM_SAMPLING, i);
            let profile = sample_profile_with(dists, &mut rng);
            let order = ordering.realize(n, &mut rng);
            let out = run(&profile, p, &order);
            debug_assert!(out.identity_gap() <= 1e-12, "allocation identity violated");
            (
                out.welfare,
                out.revenue,
                out.sold,
                out.utilities.clone(),
                out.identity_gap(),
            )
        })
        .collect();

    let welfare: Vec<f64> = per_sample.iter().map(|s| s.0).collect();
    let revenue: Vec<f64> = per_sample.iter().map(|s| s.1).collect();
    let sold: Vec<f64> = per_sample.iter().map(|s| s.2).collect();
    let utilities = (0..n)
        .map(|a| {
            let u: Vec<f64> = per_sample.iter().map(|s| s.3[a]).collect();
            Estimate::from_samples(&u, seed)
        })
        .collect();
    let max_identity_gap = per_sample.iter().map(|s| s.4).fold(0.0, f64::max);
    OutcomeEstimates {
        welfare: Estimate::from_samples(&welfare, seed),
        revenue: Estimate::from_samples(&revenue, seed),
        sold: Estimate::from_samples(&sold, seed),
        utilities,
        max_identity_gap,
    }
}

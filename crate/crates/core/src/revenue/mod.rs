//! Revenue-side analysis: the discretized ex-ante relaxation that upper
//! bounds optimal revenue, the best linear-pricing revenue, and the gap
//! between them with its 2 kappa (2 kappa - 1) e certificate.
//!
//! The relaxation works on the distributions of the marginal value v'(x)
//! at grid points x. For an agent whose valuation is drawn from a finite
//! support, that distribution is an exact discrete object: the candidate
//! sale probabilities are the tail probabilities of its atoms, and the
//! per-cell revenue function q * F^{-1}(1 - q) is piecewise linear between
//! them. The Lagrangian cell maximization is therefore a finite search.

mod exante;
mod lemmas;
mod pricing;

pub use exante::{exante_upper_bound, ExAnteSolution};
pub use lemmas::{
    feasibility_check, lower_bound_instance, min_lemma_bound, min_lemma_oracle, FeasibilityReport,
    LowerBoundInstance, MinLemmaReport,
};
pub use pricing::{
    best_linear_revenue, linear_revenue, BestLinearRevenue, LinearRevenue, PriceGridSpec,
};

use crate::error::{Error, Result};
use crate::valuation::ValuationDistribution;

/// Value tolerance when merging equal derivative atoms.
const ATOM_MERGE_TOL: f64 = 1e-12;

/// Discrete distribution of a marginal value v'(x), stored as sorted atoms.
///
/// The CDF is closed (right-continuous): a point mass at `a` has
/// `cdf(a) = 1`. The quantile accessor follows sale semantics: for a sale
/// probability q, `quantile(1 - q)` is the highest price at which the
/// probability of trading is at least q, so `q * quantile(1 - q)` is the
/// revenue of a take-it-or-leave-it threshold.
#[derive(Debug, Clone)]
pub struct DerivativeDistribution {
    atoms: Vec<(f64, f64)>,
    cumulative: Vec<f64>,
}

impl DerivativeDistribution {
    fn from_atoms(mut raw: Vec<(f64, f64)>) -> DerivativeDistribution {
        raw.retain(|&(_, p)| p > 0.0);
        raw.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut atoms: Vec<(f64, f64)> = Vec::with_capacity(raw.len());
        for (value, prob) in raw {
            match atoms.last_mut() {
                Some(last) if (last.0 - value).abs() <= ATOM_MERGE_TOL * (1.0 + value.abs()) => {
                    last.1 += prob;
                }
                _ => atoms.push((value, prob)),
            }
        }
        let mut acc = 0.0;
        let cumulative = atoms
            .iter()
            .map(|&(_, p)| {
                acc += p;
                acc
            })
            .collect();
        DerivativeDistribution { atoms, cumulative }
    }

    pub fn atoms(&self) -> &[(f64, f64)] {
        &self.atoms
    }

    /// Pr[V <= t], closed at atoms.
    pub fn cdf(&self, t: f64) -> f64 {
        let mut total = 0.0;
        for (&(value, _), &cum) in self.atoms.iter().zip(&self.cumulative) {
            if value <= t + ATOM_MERGE_TOL * (1.0 + t.abs()) {
                total = cum;
            } else {
                break;
            }
        }
        total
    }

    /// Generalized inverse with sale semantics: the smallest atom whose
    /// cumulative probability strictly exceeds u (the largest atom when
    /// u reaches 1). With q = 1 - u this is the highest price selling with
    /// probability at least q.
    pub fn quantile(&self, u: f64) -> f64 {
        for (&(value, _), &cum) in self.atoms.iter().zip(&self.cumulative) {
            if cum > u + 1e-12 {
                return value;
            }
        }
        self.atoms.last().map_or(0.0, |a| a.0)
    }

    /// Revenue of a threshold sale with probability q.
    pub fn revenue_at(&self, q: f64) -> f64 {
        if q <= 0.0 {
            0.0
        } else {
            q * self.quantile(1.0 - q)
        }
    }

    /// Candidate sale probabilities: (q_k, t_k) with q_k the probability of
    /// trading at threshold t_k, in ascending q (descending value) order.
    pub fn sale_candidates(&self) -> Vec<(f64, f64)> {
        let mut out = Vec::with_capacity(self.atoms.len());
        for k in (0..self.atoms.len()).rev() {
            let below = if k == 0 { 0.0 } else { self.cumulative[k - 1] };
            out.push((1.0 - below, self.atoms[k].0));
        }
        out
    }

    /// Expectation of the atom values.
    pub fn mean(&self) -> f64 {
        self.atoms.iter().map(|&(v, p)| v * p).sum()
    }
}

/// Derivative distributions of one agent: at x = 0 (used by the
/// (q, F) -> (r, H) transformation) and at the grid midpoints.
#[derive(Debug, Clone)]
pub struct AgentDerivatives {
    pub at_zero: DerivativeDistribution,
    pub at_mid: Vec<DerivativeDistribution>,
}

/// Exact derivative distributions on a midpoint grid with `grid_m` cells.
/// Rejects supports containing a valuation with unbounded initial
/// derivative (curvature would be infinite).
pub fn derivative_distributions(
    dists: &[ValuationDistribution],
    grid_m: usize,
) -> Result<Vec<AgentDerivatives>> {
    if grid_m == 0 {
        return Err(Error::InvalidArgument(
            "grid must have at least one cell".into(),
        ));
    }
    dists
        .iter()
        .enumerate()
        .map(|(i, dist)| {
            let support = dist.support()?;
            for (v, _) in &support {
                if !v.deriv(0.0).is_finite() {
                    return Err(Error::UnboundedDerivative(format!(
                        "agent {i} support contains a valuation with infinite v'(0)"
                    )));
                }
            }
            let at = |z: f64| {
                DerivativeDistribution::from_atoms(
                    support.iter().map(|(v, p)| (v.deriv(z), *p)).collect(),
                )
            };
            let at_mid = (0..grid_m)
                .map(|c| at((c as f64 + 0.5) / grid_m as f64))
                .collect();
            Ok(AgentDerivatives {
                at_zero: at(0.0),
                at_mid,
            })
        })
        .collect()
}

/// Outcome of the revenue-quantile concavity test.
#[derive(Debug, Clone)]
pub struct RegularityReport {
    pub concave: bool,
    pub witness: Option<RegularityWitness>,
}

/// A violating triple: sale probabilities and revenues where the curve
/// bends upward.
#[derive(Debug, Clone, Copy)]
pub struct RegularityWitness {
    pub q: [f64; 3],
    pub revenue: [f64; 3],
}

/// Number of grid points used by [`regularity_diagnostic`].
pub const REGULARITY_GRID: usize = 128;

/// Test concavity of q -> q F^{-1}(1 - q) on a uniform q-grid by the
/// three-point slope condition. Discrete distributions generically fail;
/// the diagnostic gates the gap certificate, not the computation.
pub fn regularity_diagnostic(dist: &DerivativeDistribution) -> RegularityReport {
    let m = REGULARITY_GRID;
    let qs: Vec<f64> = (1..=m).map(|j| j as f64 / m as f64).collect();
    let revs: Vec<f64> = qs.iter().map(|&q| dist.revenue_at(q)).collect();
    let scale = revs.iter().fold(1.0f64, |a, &b| a.max(b.abs()));
    for j in 0..qs.len().saturating_sub(2) {
        let d1 = revs[j + 1] - revs[j];
        let d2 = revs[j + 2] - revs[j + 1];
        if d2 > d1 + 1e-9 * scale {
            return RegularityReport {
                concave: false,
                witness: Some(RegularityWitness {
                    q: [qs[j], qs[j + 1], qs[j + 2]],
                    revenue: [revs[j], revs[j + 1], revs[j + 2]],
                }),
            };
        }
    }
    RegularityReport {
        concave: true,
        witness: None,
    }
}

/// Report of the full revenue-gap pipeline on one instance.
#[derive(Debug, Clone)]
pub struct RevenueGapReport {
    /// Discretized ex-ante relaxation value.
    pub upper_bound: f64,
    pub best_linear: BestLinearRevenue,
    /// upper_bound / best_linear (an upper estimate of the true gap, since
    /// the linear search reports a lower bound on the supremum).
    pub gap: f64,
    /// Largest curvature over all support atoms.
    pub kappa: f64,
    /// 2 kappa (2 kappa - 1) e.
    pub certificate: f64,
    /// Whether every derivative distribution passed the concavity test.
    pub regular: bool,
    /// First failing agent and triple, if any.
    pub regularity_witness: Option<(usize, RegularityWitness)>,
    /// gap <= certificate, asserted only when `regular` is true.
    pub certificate_holds: Option<bool>,
    pub solution: ExAnteSolution,
}

/// Largest curvature over the support atoms of all agents. Atoms with
/// v(1) = 0 contribute nothing and are skipped.
pub fn max_curvature(dists: &[ValuationDistribution]) -> Result<f64> {
    let mut kappa: f64 = 1.0;
    let mut seen = false;
    for dist in dists {
        for (v, _) in dist.support()? {
            if v.value(1.0) <= 0.0 {
                continue;
            }
            let c = v.curvature()?;
            if !c.is_finite() {
                return Err(Error::UnboundedDerivative(
                    "support contains a valuation with unbounded curvature".into(),
                ));
            }
            kappa = kappa.max(c);
            seen = true;
        }
    }
    if !seen {
        return Err(Error::DegenerateValuation);
    }
    Ok(kappa)
}

/// Compute the ex-ante upper bound, the best linear revenue, their ratio
/// and the curvature certificate for one finite-support instance.
pub fn revenue_gap(
    dists: &[ValuationDistribution],
    grid_m: usize,
    grid: &PriceGridSpec,
    samples: u64,
    seed: u64,
) -> Result<RevenueGapReport> {
    let kappa = max_curvature(dists)?;
    let derivs = derivative_distributions(dists, grid_m)?;
    let solution = exante_upper_bound(&derivs);
    let best = best_linear_revenue(dists, grid, samples, seed)?;

    let mut regular = true;
    let mut witness = None;
    'agents: for (i, agent) in derivs.iter().enumerate() {
        for dist in std::iter::once(&agent.at_zero).chain(&agent.at_mid) {
            let rep = regularity_diagnostic(dist);
            if !rep.concave {
                regular = false;
                witness = Some((i, rep.witness.expect("failing diagnostic carries witness")));
                break 'agents;
            }
        }
    }

    let gap = solution.objective / best.revenue;
    let certificate = 2.0 * kappa * (2.0 * kappa - 1.0) * std::f64::consts::E;
    Ok(RevenueGapReport {
        upper_bound: solution.objective,
        gap,
        kappa,
        certificate,
        regular,
        regularity_witness: witness,
        certificate_holds: regular.then_some(gap <= certificate),
        best_linear: best,
        solution,
    })
}

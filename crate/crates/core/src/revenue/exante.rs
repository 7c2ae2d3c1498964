//! The discretized ex-ante relaxation.
//!
//! maximize   sum_i sum_c delta * q_i(c) * F_{i,c}^{-1}(1 - q_i(c))
//! subject to sum_i sum_c delta * q_i(c) <= 1
//!
//! over sale-probability schedules q on the midpoint grid. The program is
//! separable, so a multiplier lambda on the capacity constraint decouples
//! the cells; each cell maximizes q (t - lambda) over the finite candidate
//! set of atom tail probabilities, which is exact because the cell revenue
//! is piecewise linear in q with breakpoints there. Bisection drives the
//! multiplier until the capacity binds. When the aggregate usage steps over
//! the budget (tied marginal values), the slack is filled by raising tied
//! cells to larger candidates in fixed order, with at most one fractional
//! point, accounting the exact revenue-curve value at every step.

use super::AgentDerivatives;

/// Schedule and value of the discretized relaxation.
#[derive(Debug, Clone)]
pub struct ExAnteSolution {
    pub grid_m: usize,
    /// q_i(c) per agent and grid cell.
    pub schedules: Vec<Vec<f64>>,
    /// The relaxation value (revenue upper bound).
    pub objective: f64,
    /// Capacity multiplier at the optimum.
    pub multiplier: f64,
    /// sum_i sum_c delta q_i(c).
    pub capacity: f64,
    /// Expected fraction per agent: r_i = sum_c delta q_i(c).
    pub r: Vec<f64>,
    /// Whether every agent's schedule is nonincreasing in x. Guaranteed for
    /// point masses and x-independent (linear) supports; mixed-curvature
    /// irregular supports can legitimately violate it.
    pub monotone_in_x: bool,
}

impl ExAnteSolution {
    /// Structural invariants: schedules in [0, 1] and capacity within the
    /// ex-ante budget.
    pub fn validate(&self) -> Result<(), String> {
        for (i, sched) in self.schedules.iter().enumerate() {
            for (c, &q) in sched.iter().enumerate() {
                if !(0.0..=1.0 + 1e-12).contains(&q) {
                    return Err(format!("q[{i}][{c}] = {q} outside [0, 1]"));
                }
            }
        }
        if self.capacity > 1.0 + 1e-9 {
            return Err(format!(
                "capacity {} exceeds the ex-ante budget",
                self.capacity
            ));
        }
        let r_total: f64 = self.r.iter().sum();
        if r_total > 1.0 + 1e-9 {
            return Err(format!("sum of r_i = {r_total} exceeds 1"));
        }
        Ok(())
    }
}

/// One cell's state: sale probability and its revenue-curve value.
#[derive(Debug, Clone, Copy)]
struct CellChoice {
    q: f64,
    revenue: f64,
}

/// Best candidate of one cell at multiplier `lambda`: scans q = 0 and the
/// atom tail probabilities in ascending q, keeping the strictly best score
/// q (t - lambda), so ties resolve toward the smaller sale probability.
fn best_candidate(candidates: &[(f64, f64)], lambda: f64) -> CellChoice {
    let mut best = CellChoice {
        q: 0.0,
        revenue: 0.0,
    };
    let mut best_score = 0.0;
    for &(q, t) in candidates {
        let score = q * (t - lambda);
        if score > best_score {
            best_score = score;
            best = CellChoice { q, revenue: q * t };
        }
    }
    best
}

/// Solve the discretized relaxation by Lagrangian bisection.
pub fn exante_upper_bound(derivs: &[AgentDerivatives]) -> ExAnteSolution {
    let grid_m = derivs.first().map_or(0, |a| a.at_mid.len());
    assert!(grid_m > 0, "empty grid");
    assert!(
        derivs.iter().all(|a| a.at_mid.len() == grid_m),
        "ragged grids"
    );
    let delta = 1.0 / grid_m as f64;

    // Candidate sets per (agent, cell), ascending in q, computed once.
    let candidates: Vec<Vec<Vec<(f64, f64)>>> = derivs
        .iter()
        .map(|agent| agent.at_mid.iter().map(|d| d.sale_candidates()).collect())
        .collect();

    let solve_at = |lambda: f64| -> (Vec<Vec<CellChoice>>, f64) {
        let mut choices = Vec::with_capacity(derivs.len());
        let mut usage = 0.0;
        for agent_cells in &candidates {
            let agent_choices: Vec<CellChoice> = agent_cells
                .iter()
                .map(|cell| {
                    let choice = best_candidate(cell, lambda);
                    usage += delta * choice.q;
                    choice
                })
                .collect();
            choices.push(agent_choices);
        }
        (choices, usage)
    };

    let lambda_max = candidates
        .iter()
        .flatten()
        .flatten()
        .map(|&(_, t)| t)
        .fold(0.0, f64::max);

    let (mut choices, mut usage, multiplier) = 'solve: {
        let (s0, u0) = solve_at(0.0);
        if u0 <= 1.0 + 1e-12 {
            break 'solve (s0, u0, 0.0);
        }
        let mut lo = 0.0f64;
        let mut hi = lambda_max;
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            let (s, u) = solve_at(mid);
            if u <= 1.0 && 1.0 - u <= 1e-6 {
                break 'solve (s, u, mid);
            }
            if u > 1.0 {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi - lo <= f64::EPSILON * hi.max(1e-300) {
                break;
            }
        }
        let (s, u) = solve_at(hi);
        (s, u, hi)
    };

    // Fill any slack left by a usage step at the critical multiplier. Only
    // candidates whose segment value sits in the marginal band around the
    // multiplier can absorb it; raises are applied lowest agent and cell
    // first, each accounted at its exact revenue-curve value.
    let band = 1e-9 * (1.0 + multiplier);
    let mut leftover = ((1.0 - usage) / delta).max(0.0);
    if multiplier > 0.0 && leftover > 1e-15 {
        'fill: for (i, agent_cells) in candidates.iter().enumerate() {
            for (c, cell) in agent_cells.iter().enumerate() {
                let mut cur = choices[i][c];
                for &(q_k, t_k) in cell {
                    if q_k <= cur.q + 1e-15 {
                        continue;
                    }
                    if t_k < multiplier - band {
                        break;
                    }
                    if q_k - cur.q <= leftover {
                        leftover -= q_k - cur.q;
                        cur = CellChoice {
                            q: q_k,
                            revenue: q_k * t_k,
                        };
                    } else {
                        // Partial entry into this segment; keep it only if
                        // the revenue curve actually improves there.
                        let q_new = cur.q + leftover;
                        if q_new * t_k > cur.revenue {
                            cur = CellChoice {
                                q: q_new,
                                revenue: q_new * t_k,
                            };
                            leftover = 0.0;
                        }
                        break;
                    }
                }
                choices[i][c] = cur;
                if leftover <= 1e-15 {
                    break 'fill;
                }
            }
        }
        usage = 1.0 - leftover.max(0.0) * delta;
    }

    let objective = choices
        .iter()
        .map(|agent| agent.iter().map(|c| delta * c.revenue).sum::<f64>())
        .sum();
    let schedules: Vec<Vec<f64>> = choices
        .iter()
        .map(|agent| agent.iter().map(|c| c.q).collect())
        .collect();
    let r: Vec<f64> = schedules
        .iter()
        .map(|s| delta * s.iter().sum::<f64>())
        .collect();
    let monotone_in_x = schedules
        .iter()
        .all(|sched| sched.windows(2).all(|w| w[1] <= w[0] + 1e-12));
    let solution = ExAnteSolution {
        grid_m,
        schedules,
        objective,
        multiplier,
        capacity: usage,
        r,
        monotone_in_x,
    };
    debug_assert!(solution.validate().is_ok(), "{:?}", solution.validate());
    solution
}

//! Water-filling: maximize social utility over a scaled simplex on a node
//! subset by bisection on the common payoff-density level.

use serde::Serialize;

use crate::error::WaterfillError;
use crate::model::PayoffSpec;

/// Tolerance on density equalities at a water-filling optimum.
pub const LEVEL_TOL: f64 = 1e-9;

const BRACKET_WIDTH: f64 = 1e-13;
const MAX_BISECTIONS: usize = 200;

/// Optimizer of the simplex-constrained problem over a node subset.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WaterfillResult {
    /// Nodes of the subset, in the order given by the caller.
    pub nodes: Vec<usize>,
    /// Allocation aligned with `nodes`.
    pub x_star: Vec<f64>,
    /// Common payoff density of the occupied nodes.
    pub level: f64,
    /// Optimal social utility of the subset.
    pub value: f64,
}

/// Fills `budget` onto destinations with pre-existing masses `bases`.
///
/// Returns the level `l` and the amounts `clip(u_j^-1(l) - base_j, 0, inf)`
/// summing to `budget`. `dests` and `bases` are parallel.
pub fn fill_with_bases(
    payoffs: &PayoffSpec,
    dests: &[usize],
    bases: &[f64],
    budget: f64,
) -> (f64, Vec<f64>) {
    debug_assert_eq!(dests.len(), bases.len());
    debug_assert!(!dests.is_empty());
    let top = dests
        .iter()
        .zip(bases)
        .map(|(&j, &b)| payoffs.density(j, b))
        .fold(f64::NEG_INFINITY, f64::max);
    if budget <= 0.0 {
        return (top, vec![0.0; dests.len()]);
    }
    if dests.len() == 1 {
        return (payoffs.density(dests[0], bases[0] + budget), vec![budget]);
    }

    let mass_at = |level: f64| -> f64 {
        dests
            .iter()
            .zip(bases)
            .map(|(&j, &b)| (payoffs.node(j).inverse_density(level) - b).max(0.0))
            .sum()
    };
    let mut hi = top;
    let mut lo = dests
        .iter()
        .zip(bases)
        .map(|(&j, &b)| payoffs.density(j, b + budget))
        .fold(f64::INFINITY, f64::min);
    for _ in 0..MAX_BISECTIONS {
        if hi - lo < BRACKET_WIDTH {
            break;
        }
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if mass_at(mid) > budget {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let level = 0.5 * (lo + hi);
    let mut amounts: Vec<f64> = dests
        .iter()
        .zip(bases)
        .map(|(&j, &b)| (payoffs.node(j).inverse_density(level) - b).max(0.0))
        .collect();
    let total: f64 = amounts.iter().sum();
    if total > 0.0 {
        let scale = budget / total;
        amounts.iter_mut().for_each(|a| *a *= scale);
    } else {
        // Degenerate bracket: everything goes to the best destination.
        let best = (0..dests.len())
            .max_by(|&p, &q| {
                payoffs
                    .density(dests[p], bases[p])
                    .total_cmp(&payoffs.density(dests[q], bases[q]))
            })
            .unwrap();
        amounts[best] = budget;
    }
    (level, amounts)
}

/// Maximizes `sum_i [p_i(x_i) - p_i(0)]` over `x >= 0`, `sum x = rho` on `nodes`.
pub fn solve_p1(
    nodes: &[usize],
    payoffs: &PayoffSpec,
    rho: f64,
) -> Result<WaterfillResult, WaterfillError> {
    if nodes.is_empty() {
        return Err(WaterfillError::EmptyNodeSet);
    }
    if !(rho.is_finite() && rho >= 0.0) {
        return Err(WaterfillError::NegativeMass(rho));
    }
    if let Some(&bad) = nodes.iter().find(|&&i| i >= payoffs.len()) {
        return Err(WaterfillError::UnknownNode(bad));
    }
    if rho == 0.0 {
        let level = nodes
            .iter()
            .map(|&i| payoffs.node(i).mpdp())
            .fold(f64::NEG_INFINITY, f64::max);
        return Ok(WaterfillResult {
            nodes: nodes.to_vec(),
            x_star: vec![0.0; nodes.len()],
            level,
            value: 0.0,
        });
    }
    let bases = vec![0.0; nodes.len()];
    let (level, x_star) = fill_with_bases(payoffs, nodes, &bases, rho);
    let value = nodes
        .iter()
        .zip(&x_star)
        .map(|(&i, &xi)| {
            let p = payoffs.node(i);
            p.cumulative(xi) - p.cumulative(0.0)
        })
        .sum();
    Ok(WaterfillResult {
        nodes: nodes.to_vec(),
        x_star,
        level,
        value,
    })
}

/// Optimal value of [`solve_p1`]; concave in `rho`.
pub fn f_of_rho(nodes: &[usize], payoffs: &PayoffSpec, rho: f64) -> Result<f64, WaterfillError> {
    Ok(solve_p1(nodes, payoffs, rho)?.value)
}

use itertools::Itertools;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::BoundsError;
use crate::hills::SuperGraph;
use crate::model::PayoffSpec;
use crate::waterfill::f_of_rho;

const FEASIBILITY_TOL: f64 = 1e-9;
const DEDUP_TOL: f64 = 1e-10;
const PIVOT_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum LowerBoundMethod {
    /// Vertex enumeration when within budget, else the polymatroid greedy.
    Auto,
    VertexEnumeration,
    PolymatroidGreedy,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LowerBoundOptions {
    pub method: LowerBoundMethod,
    /// Largest number of constraint subsets (or subset-DP transitions).
    pub budget: u128,
}

impl Default for LowerBoundOptions {
    fn default() -> Self {
        Self {
            method: LowerBoundMethod::Auto,
            budget: 2_000_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SuperFlow {
    pub from: usize,
    pub to: usize,
    pub amount: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LowerBound {
    pub u_min: f64,
    /// Mass landing in each super node.
    pub xi: Vec<f64>,
    pub flows: Vec<SuperFlow>,
    pub method: LowerBoundMethod,
    /// Distinct vertices (enumeration) or subsets (greedy) evaluated.
    pub candidates: usize,
}

/// Transport structure shared by both methods.
struct Transport<'a> {
    sg: &'a SuperGraph,
    caps: &'a [f64],
    payoffs: &'a PayoffSpec,
    /// `(source, destination)` per variable.
    vars: Vec<(usize, usize)>,
    sources: Vec<usize>,
    /// Super nodes whose cap can bind.
    capped: Vec<usize>,
}

impl<'a> Transport<'a> {
    fn new(sg: &'a SuperGraph, caps: &'a [f64], payoffs: &'a PayoffSpec) -> Self {
        let sources: Vec<usize> = (0..sg.len()).filter(|&q| sg.nodes[q].mass > 0.0).collect();
        let vars: Vec<(usize, usize)> = sources
            .iter()
            .flat_map(|&q| sg.out_reachable(q).into_iter().map(move |r| (q, r)))
            .collect();
        let mut inflow = vec![0.0; sg.len()];
        for &(q, r) in &vars {
            inflow[r] += sg.nodes[q].mass;
        }
        let capped = (0..sg.len()).filter(|&r| caps[r] < inflow[r]).collect();
        Self {
            sg,
            caps,
            payoffs,
            vars,
            sources,
            capped,
        }
    }

    fn objective(&self, xi: &[f64]) -> f64 {
        xi.iter()
            .enumerate()
            .map(|(q, &v)| {
                let members: Vec<usize> = self.sg.nodes[q].members.iter().copied().collect();
                f_of_rho(&members, self.payoffs, v.max(0.0)).unwrap_or(0.0)
            })
            .sum()
    }

    fn xi_of(&self, point: &[f64]) -> Vec<f64> {
        let mut xi = vec![0.0; self.sg.len()];
        for (&(_, r), &v) in self.vars.iter().zip(point) {
            xi[r] += v.max(0.0);
        }
        xi
    }

    fn flows_of(&self, point: &[f64]) -> Vec<SuperFlow> {
        self.vars
            .iter()
            .zip(point)
            .filter(|(_, &v)| v > 0.0)
            .map(|(&(from, to), &v)| SuperFlow { from, to, amount: v })
            .collect()
    }

    fn inequality_count(&self) -> usize {
        self.vars.len() + self.capped.len()
    }

    fn enumeration_size(&self) -> u128 {
        binomial(
            self.inequality_count() as u128,
            (self.vars.len() - self.sources.len()) as u128,
        )
    }

    /// Reachable super nodes, the ground set of the greedy.
    fn ground(&self) -> Vec<usize> {
        let mut g: Vec<usize> = self.vars.iter().map(|&(_, r)| r).collect();
        g.sort_unstable();
        g.dedup();
        g
    }

    fn greedy_size(&self) -> u128 {
        let k = self.ground().len() as u32;
        if k >= 100 {
            return u128::MAX;
        }
        (1u128 << k) * u128::from(k.max(1))
    }

    /// Row `k` of the inequality system `A v <= b`, as (coefficients, rhs).
    fn inequality(&self, k: usize) -> (Vec<f64>, f64) {
        let d = self.vars.len();
        let mut row = vec![0.0; d];
        if k < d {
            row[k] = -1.0;
            (row, 0.0)
        } else {
            let r = self.capped[k - d];
            for (v, &(_, to)) in self.vars.iter().enumerate() {
                if to == r {
                    row[v] = 1.0;
                }
            }
            (row, self.caps[r])
        }
    }

    fn feasible(&self, point: &[f64]) -> bool {
        if point.iter().any(|&v| v < -FEASIBILITY_TOL) {
            return false;
        }
        let xi = self.xi_of(point);
        self.capped
            .iter()
            .all(|&r| xi[r] <= self.caps[r] + FEASIBILITY_TOL)
    }

    fn enumerate(&self) -> Result<LowerBound, BoundsError> {
        let d = self.vars.len();
        let e = self.sources.len();
        let mut eq_rows = Vec::with_capacity(e);
        for &q in &self.sources {
            let row: Vec<f64> = self
                .vars
                .iter()
                .map(|&(from, _)| if from == q { 1.0 } else { 0.0 })
                .collect();
            eq_rows.push((row, self.sg.nodes[q].mass));
        }
        let ineqs: Vec<(Vec<f64>, f64)> = (0..self.inequality_count()).map(|k| self.inequality(k)).collect();

        let mut points: Vec<Vec<f64>> = (0..ineqs.len())
            .combinations(d - e)
            .par_bridge()
            .filter_map(|active| {
                let mut a: Vec<Vec<f64>> = eq_rows.iter().map(|(r, _)| r.clone()).collect();
                let mut b: Vec<f64> = eq_rows.iter().map(|(_, v)| *v).collect();
                for k in active {
                    let (row, rhs) = &ineqs[k];
                    // nonnegativity rows are stored as -v <= 0
                    a.push(row.clone());
                    b.push(*rhs);
                }
                let x = solve_dense(a, b)?;
                self.feasible(&x).then_some(x)
            })
            .collect();
        if points.is_empty() {
            return Err(BoundsError::InfeasibleCaps {
                capacity: self.capacity(),
                mass: self.total_mass(),
            });
        }
        points.sort_by(|p, q| p.iter().zip(q).map(|(a, b)| a.total_cmp(b)).find(|o| o.is_ne()).unwrap_or(std::cmp::Ordering::Equal));
        points.dedup_by(|p, q| p.iter().zip(q.iter()).all(|(a, b)| (a - b).abs() <= DEDUP_TOL));
        let (value, best) = points
            .par_iter()
            .map(|p| (self.objective(&self.xi_of(p)), p))
            .min_by(|x, y| x.0.total_cmp(&y.0))
            .unwrap();
        Ok(LowerBound {
            u_min: value,
            xi: self.xi_of(best),
            flows: self.flows_of(best),
            method: LowerBoundMethod::VertexEnumeration,
            candidates: points.len(),
        })
    }

    fn total_mass(&self) -> f64 {
        self.sources.iter().map(|&q| self.sg.nodes[q].mass).sum()
    }

    fn capacity(&self) -> f64 {
        self.ground()
            .iter()
            .map(|&r| self.caps[r].min(self.total_mass()))
            .sum()
    }

    /// Exact minimum over the greedy vertices of the capped transport
    /// polymatroid, by dynamic programming over subsets.
    fn greedy(&self) -> Result<LowerBound, BoundsError> {
        let ground = self.ground();
        let k = ground.len();
        let full = (1usize << k) - 1;
        let index_of = |r: usize| ground.binary_search(&r).unwrap();
        let rho = self.total_mass();

        // h[U]: mass of sources whose reach lies inside U
        let mut h = vec![0.0; 1 << k];
        for &q in &self.sources {
            let mask = self.sg.out_reachable(q).into_iter().fold(0usize, |m, r| m | 1 << index_of(r));
            h[mask] += self.sg.nodes[q].mass;
        }
        for bit in 0..k {
            for u in 0..=full {
                if u & (1 << bit) != 0 {
                    h[u] += h[u ^ (1 << bit)];
                }
            }
        }
        let cap: Vec<f64> = ground.iter().map(|&r| self.caps[r]).collect();
        // capped rank: min over T within S of g(T) + cap(S \ T)
        let mut rank = vec![0.0; 1 << k];
        for s in 1..=full {
            let mut best = rho - h[full ^ s];
            let mut rest = s;
            while rest != 0 {
                let bit = rest.trailing_zeros() as usize;
                rest &= rest - 1;
                best = f64::min(best, rank[s ^ (1 << bit)] + cap[bit]);
            }
            rank[s] = best.max(0.0);
        }
        if rank[full] < rho - FEASIBILITY_TOL {
            return Err(BoundsError::InfeasibleCaps {
                capacity: rank[full],
                mass: rho,
            });
        }

        let members: Vec<Vec<usize>> = ground
            .iter()
            .map(|&r| self.sg.nodes[r].members.iter().copied().collect())
            .collect();
        let f = |bit: usize, v: f64| f_of_rho(&members[bit], self.payoffs, v.max(0.0)).unwrap_or(0.0);
        let mut best = vec![f64::INFINITY; 1 << k];
        let mut from = vec![usize::MAX; 1 << k];
        best[0] = 0.0;
        for s in 0..full {
            if !best[s].is_finite() {
                continue;
            }
            for bit in 0..k {
                if s & (1 << bit) != 0 {
                    continue;
                }
                let t = s | 1 << bit;
                let cand = best[s] + f(bit, rank[t] - rank[s]);
                if cand < best[t] {
                    best[t] = cand;
                    from[t] = bit;
                }
            }
        }
        let mut xi = vec![0.0; self.sg.len()];
        let mut s = full;
        while s != 0 {
            let bit = from[s];
            let prev = s ^ (1 << bit);
            xi[ground[bit]] = (rank[s] - rank[prev]).max(0.0);
            s = prev;
        }
        let flows = self.route(&xi);
        Ok(LowerBound {
            u_min: best[full],
            xi,
            flows,
            method: LowerBoundMethod::PolymatroidGreedy,
            candidates: 1 << k,
        })
    }

    /// Source-to-super-node flows delivering `xi`, by augmenting paths.
    fn route(&self, xi: &[f64]) -> Vec<SuperFlow> {
        let m = self.sg.len();
        // 0 = super source, 1..=m = origins, m+1..=2m = destinations, 2m+1 = sink
        let size = 2 * m + 2;
        let sink = size - 1;
        let mut capacity = vec![vec![0.0; size]; size];
        for &q in &self.sources {
            capacity[0][1 + q] = self.sg.nodes[q].mass;
        }
        for &(q, r) in &self.vars {
            capacity[1 + q][1 + m + r] = f64::INFINITY;
        }
        for (r, &v) in xi.iter().enumerate() {
            capacity[1 + m + r][sink] = v;
        }
        let mut flow = vec![vec![0.0; size]; size];
        loop {
            let mut prev = vec![usize::MAX; size];
            prev[0] = 0;
            let mut queue = std::collections::VecDeque::from([0]);
            while let Some(u) = queue.pop_front() {
                for v in 0..size {
                    if prev[v] == usize::MAX && capacity[u][v] - flow[u][v] > 1e-15 {
                        prev[v] = u;
                        queue.push_back(v);
                    }
                }
            }
            if prev[sink] == usize::MAX {
                break;
            }
            let mut push = f64::INFINITY;
            let mut v = sink;
            while v != 0 {
                let u = prev[v];
                push = push.min(capacity[u][v] - flow[u][v]);
                v = u;
            }
            let mut v = sink;
            while v != 0 {
                let u = prev[v];
                flow[u][v] += push;
                flow[v][u] -= push;
                v = u;
            }
        }
        self.vars
            .iter()
            .filter_map(|&(q, r)| {
                let amount = flow[1 + q][1 + m + r];
                (amount > 0.0).then_some(SuperFlow { from: q, to: r, amount })
            })
            .collect()
    }
}

fn binomial(n: u128, k: u128) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = match acc.checked_mul(n - i) {
            Some(v) => v / (i + 1),
            None => return u128::MAX,
        };
    }
    acc
}

/// Gaussian elimination with partial pivoting; `None` when singular.
fn solve_dense(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    for col in 0..n {
        let pivot = (col..n).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[pivot][col].abs() < PIVOT_TOL {
            return None;
        }
        a.swap(col, pivot);
        b.swap(col, pivot);
        for row in col + 1..n {
            let factor = a[row][col] / a[col][col];
            if factor != 0.0 {
                for k in col..n {
                    a[row][k] -= factor * a[col][k];
                }
                b[row] -= factor * b[col];
            }
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let s: f64 = (row + 1..n).map(|k| a[row][k] * x[k]).sum();
        x[row] = (b[row] - s) / a[row][row];
    }
    Some(x)
}

pub fn lower_bound(sg: &SuperGraph, caps: &[f64], payoffs: &PayoffSpec) -> Result<LowerBound, BoundsError> {
    lower_bound_with(sg, caps, payoffs, LowerBoundOptions::default())
}

/// Minimizes the concave objective over the capped transport polytope.
pub fn lower_bound_with(
    sg: &SuperGraph,
    caps: &[f64],
    payoffs: &PayoffSpec,
    opts: LowerBoundOptions,
) -> Result<LowerBound, BoundsError> {
    let t = Transport::new(sg, caps, payoffs);
    if t.sources.is_empty() {
        return Ok(LowerBound {
            u_min: 0.0,
            xi: vec![0.0; sg.len()],
            flows: Vec::new(),
            method: LowerBoundMethod::VertexEnumeration,
            candidates: 1,
        });
    }
    let too_large = |required: u128| BoundsError::TooLargeForExactEnumeration {
        required,
        budget: opts.budget,
        variables: t.vars.len(),
        inequalities: t.inequality_count(),
        super_nodes: sg.len(),
    };
    match opts.method {
        LowerBoundMethod::VertexEnumeration => {
            let n = t.enumeration_size();
            if n > opts.budget {
                return Err(too_large(n));
            }
            t.enumerate()
        }
        LowerBoundMethod::PolymatroidGreedy => {
            let n = t.greedy_size();
            if n > opts.budget {
                return Err(too_large(n));
            }
            t.greedy()
        }
        LowerBoundMethod::Auto => {
            let n = t.enumeration_size();
            if n <= opts.budget {
                return t.enumerate();
            }
            let m = t.greedy_size();
            if m <= opts.budget {
                return t.greedy();
            }
            Err(too_large(n.min(m)))
        }
    }
}

use crate::error::DynamicsError;
use crate::model::PayoffSpec;
use crate::waterfill::fill_with_bases;

/// One source of mass and the destinations it may use.
#[derive(Debug, Clone, PartialEq)]
pub struct AllocationSource {
    pub node: usize,
    pub budget: f64,
    pub destinations: Vec<usize>,
}

/// Maximize `sum_j p_j(base_j + w_j)` where `w_j` is the mass sent to `j`
/// and each source splits its budget over its own destination set.
#[derive(Debug, Clone)]
pub struct AllocationProblem<'a> {
    payoffs: &'a PayoffSpec,
    base: Vec<f64>,
    sources: Vec<AllocationSource>,
}

impl<'a> AllocationProblem<'a> {
    pub fn new(
        payoffs: &'a PayoffSpec,
        base: Vec<f64>,
        sources: Vec<AllocationSource>,
    ) -> Result<Self, DynamicsError> {
        let n = payoffs.len();
        if base.len() != n {
            return Err(DynamicsError::InvalidProblem(format!(
                "base has {} entries for {n} nodes",
                base.len()
            )));
        }
        if let Some(b) = base.iter().find(|b| !b.is_finite() || **b < 0.0) {
            return Err(DynamicsError::InvalidProblem(format!("base entry {b}")));
        }
        for s in &sources {
            if !s.budget.is_finite() || s.budget < 0.0 {
                return Err(DynamicsError::InvalidProblem(format!(
                    "source {} has budget {}",
                    s.node, s.budget
                )));
            }
            if s.destinations.is_empty() {
                return Err(DynamicsError::InvalidProblem(format!(
                    "source {} has no destinations",
                    s.node
                )));
            }
            if let Some(&j) = s.destinations.iter().find(|&&j| j >= n) {
                return Err(DynamicsError::InvalidProblem(format!(
                    "source {} targets unknown node {j}",
                    s.node
                )));
            }
        }
        Ok(Self {
            payoffs,
            base,
            sources,
        })
    }

    pub fn sources(&self) -> &[AllocationSource] {
        &self.sources
    }

    pub fn base(&self) -> &[f64] {
        &self.base
    }

    pub fn payoffs(&self) -> &PayoffSpec {
        self.payoffs
    }

    /// Objective value for the given per-node received masses.
    pub fn objective(&self, received: &[f64]) -> f64 {
        (0..self.base.len())
            .map(|j| self.payoffs.node(j).cumulative(self.base[j] + received[j]))
            .sum()
    }
}

/// A solution of an [`AllocationProblem`].
#[derive(Debug, Clone, PartialEq)]
pub struct Allocation {
    /// `flows[s][k]`: mass from source `s` to its `k`-th destination.
    pub flows: Vec<Vec<f64>>,
    /// Mass received per node (excluding the base).
    pub received: Vec<f64>,
    pub kkt_residual: f64,
    pub iterations: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AllocationOptions {
    pub tol: f64,
    pub max_iters: usize,
}

impl Default for AllocationOptions {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            max_iters: 100_000,
        }
    }
}

pub fn solve_allocation(
    problem: &AllocationProblem<'_>,
    tol: f64,
) -> Result<Allocation, DynamicsError> {
    solve_allocation_with(
        problem,
        AllocationOptions {
            tol,
            ..AllocationOptions::default()
        },
        None,
    )
}

/// Spectral projected gradient with exact block sweeps.
///
/// A warm start whose shape matches the problem is rescaled to the current
/// budgets; otherwise every source starts on its first destination.
pub fn solve_allocation_with(
    problem: &AllocationProblem<'_>,
    opts: AllocationOptions,
    warm: Option<&[Vec<f64>]>,
) -> Result<Allocation, DynamicsError> {
    let mut state = State::new(problem, warm);
    let mut alpha = 1.0;
    let mut residual = state.residual();
    let mut iterations = 0;
    while residual > opts.tol {
        if iterations >= opts.max_iters {
            return Err(DynamicsError::NonConvergence {
                residual,
                tol: opts.tol,
                iterations,
            });
        }
        iterations += 1;
        alpha = state.gradient_step(alpha);
        state.block_sweep();
        residual = state.residual();
    }
    Ok(Allocation {
        flows: state.flows,
        received: state.received,
        kkt_residual: residual,
        iterations,
    })
}

struct State<'p, 'a> {
    problem: &'p AllocationProblem<'a>,
    flows: Vec<Vec<f64>>,
    received: Vec<f64>,
}

impl<'p, 'a> State<'p, 'a> {
    fn new(problem: &'p AllocationProblem<'a>, warm: Option<&[Vec<f64>]>) -> Self {
        let fits = warm.is_some_and(|w| {
            w.len() == problem.sources.len()
                && w.iter()
                    .zip(&problem.sources)
                    .all(|(f, s)| f.len() == s.destinations.len())
        });
        let flows = problem
            .sources
            .iter()
            .enumerate()
            .map(|(s, src)| {
                let mut f = vec![0.0; src.destinations.len()];
                if fits {
                    let prev = &warm.unwrap()[s];
                    let total: f64 = prev.iter().map(|v| v.max(0.0)).sum();
                    if total > 0.0 {
                        let scale = src.budget / total;
                        for (a, b) in f.iter_mut().zip(prev) {
                            *a = b.max(0.0) * scale;
                        }
                        return f;
                    }
                }
                f[0] = src.budget;
                f
            })
            .collect();
        let mut state = Self {
            problem,
            flows,
            received: Vec::new(),
        };
        state.received = state.received_of(&state.flows);
        state
    }

    fn received_of(&self, flows: &[Vec<f64>]) -> Vec<f64> {
        let mut w = vec![0.0; self.problem.base.len()];
        for (src, f) in self.problem.sources.iter().zip(flows) {
            for (&j, &v) in src.destinations.iter().zip(f) {
                w[j] += v;
            }
        }
        w
    }

    fn density(&self, received: &[f64], j: usize) -> f64 {
        self.problem
            .payoffs
            .density(j, self.problem.base[j] + received[j])
    }

    fn residual(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for (src, f) in self.problem.sources.iter().zip(&self.flows) {
            if src.budget <= 0.0 {
                continue;
            }
            let dens: Vec<f64> = src
                .destinations
                .iter()
                .map(|&j| self.density(&self.received, j))
                .collect();
            let top = dens.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let floor = f64::EPSILON * src.budget;
            for (&v, &d) in f.iter().zip(&dens) {
                if v > floor {
                    worst = worst.max(top - d);
                }
            }
        }
        worst
    }

    /// One projected gradient ascent step with Armijo backtracking; returns
    /// the Barzilai-Borwein step for the next call.
    fn gradient_step(&mut self, alpha: f64) -> f64 {
        let grad = self.gradient(&self.received);
        let f0 = self.problem.objective(&self.received);
        let mut step = alpha;
        for _ in 0..60 {
            let trial: Vec<Vec<f64>> = self
                .flows
                .iter()
                .zip(&grad)
                .zip(&self.problem.sources)
                .map(|((f, g), src)| {
                    let moved: Vec<f64> = f.iter().zip(g).map(|(v, d)| v + step * d).collect();
                    project_simplex(&moved, src.budget)
                })
                .collect();
            let w = self.received_of(&trial);
            let ascent: f64 = trial
                .iter()
                .zip(&self.flows)
                .zip(&grad)
                .flat_map(|((t, f), g)| t.iter().zip(f).zip(g).map(|((t, f), g)| (t - f) * g))
                .sum();
            if ascent <= 0.0 {
                return alpha;
            }
            if self.problem.objective(&w) >= f0 + 1e-4 * ascent {
                let new_grad = self.gradient(&w);
                let mut ss = 0.0;
                let mut sy = 0.0;
                for s in 0..trial.len() {
                    for k in 0..trial[s].len() {
                        let ds = trial[s][k] - self.flows[s][k];
                        ss += ds * ds;
                        sy += ds * (new_grad[s][k] - grad[s][k]);
                    }
                }
                self.flows = trial;
                self.received = w;
                return if sy < 0.0 {
                    (ss / -sy).clamp(1e-10, 1e10)
                } else {
                    (2.0 * step).min(1e10)
                };
            }
            step *= 0.5;
        }
        alpha
    }

    fn gradient(&self, received: &[f64]) -> Vec<Vec<f64>> {
        self.problem
            .sources
            .iter()
            .map(|src| {
                src.destinations
                    .iter()
                    .map(|&j| self.density(received, j))
                    .collect()
            })
            .collect()
    }

    /// Exact re-fill of each source given everyone else.
    fn block_sweep(&mut self) {
        let mut bases = Vec::new();
        for (s, src) in self.problem.sources.iter().enumerate() {
            if src.budget <= 0.0 {
                continue;
            }
            bases.clear();
            for (&j, &v) in src.destinations.iter().zip(&self.flows[s]) {
                self.received[j] -= v;
            }
            for &j in &src.destinations {
                bases.push(self.problem.base[j] + self.received[j]);
            }
            let (_, amounts) =
                fill_with_bases(self.problem.payoffs, &src.destinations, &bases, src.budget);
            for (&j, &v) in src.destinations.iter().zip(&amounts) {
                self.received[j] += v;
            }
            self.flows[s] = amounts;
        }
    }
}

/// Euclidean projection onto `{r >= 0, sum r = budget}`.
fn project_simplex(v: &[f64], budget: f64) -> Vec<f64> {
    if budget <= 0.0 {
        return vec![0.0; v.len()];
    }
    // shifting by the max keeps tiny budgets from cancelling out
    let top = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sorted: Vec<f64> = v.iter().map(|x| x - top).collect();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let mut cum = 0.0;
    let mut theta = 0.0;
    for (k, &s) in sorted.iter().enumerate() {
        cum += s;
        let t = (cum - budget) / (k + 1) as f64;
        if s - t > 0.0 {
            theta = t;
        }
    }
    v.iter().map(|x| (x - top - theta).max(0.0)).collect()
}

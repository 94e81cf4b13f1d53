use serde::Serialize;

use crate::dynamics::nbrd::nbrd_flows;
use crate::dynamics::nrpm::nrpm_response;
use crate::dynamics::ssd::ssd_flows;
use crate::dynamics::{AllocationOptions, DynamicsKind};
use crate::error::DynamicsError;
use crate::model::{correlation_violation, utility_of, FlowDigraph, PayoffSpec, PopulationState};

const RENORMALIZE_ABOVE: f64 = 1e-12;
const NEGATIVE_CLIP: f64 = 1e-9;
const UTILITY_SLACK: f64 = 1e-7;
// Best-response flows come from a bisection, so densities at the water
// level only agree to about this much.
const ORDER_SLACK: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct IntegratorConfig {
    pub step: f64,
    pub t_max: f64,
    /// Velocity sup-norm below which a step counts as stationary.
    pub eq_tol: f64,
    /// Consecutive stationary steps needed to stop.
    pub stabilization_window: usize,
    pub record_every: usize,
    #[serde(skip)]
    pub allocation: AllocationOptions,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        Self {
            step: 1e-2,
            t_max: 1e4,
            eq_tol: 1e-8,
            stabilization_window: 50,
            record_every: 10,
            allocation: AllocationOptions {
                tol: 1e-11,
                max_iters: 100_000,
            },
        }
    }
}

impl IntegratorConfig {
    fn validate(&self) -> Result<(), DynamicsError> {
        let bad = |m: &str| Err(DynamicsError::InvalidConfig(m.to_string()));
        if !(self.step.is_finite() && self.step > 0.0) {
            return bad("step must be positive");
        }
        if !(self.t_max.is_finite() && self.t_max >= 0.0) {
            return bad("t_max must be finite and nonnegative");
        }
        if !(self.eq_tol.is_finite() && self.eq_tol > 0.0) {
            return bad("eq_tol must be positive");
        }
        if self.stabilization_window == 0 || self.record_every == 0 {
            return bad("stabilization_window and record_every must be at least 1");
        }
        Ok(())
    }
}

/// Invariant monitors accumulated over a run.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct StepDiagnostics {
    pub steps: usize,
    pub field_evaluations: usize,
    /// Largest `|sum x - rho|` after a step, before renormalizing.
    pub max_mass_drift: f64,
    /// Largest `U(x_n) - U(x_{n+1})`.
    pub max_utility_drop: f64,
    /// Steps whose utility fell by more than `1e-7 * h`.
    pub utility_violations: usize,
    /// Field evaluations with flow towards a node of no higher density.
    pub correlation_violations: usize,
    pub renormalizations: usize,
    /// Entries in `[-1e-9, 0)` reset to zero.
    pub clipped: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepReport {
    pub time: f64,
    pub velocity_norm: f64,
    pub utility: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Trajectory {
    pub kind: DynamicsKind,
    pub rho: f64,
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    pub utilities: Vec<f64>,
    pub converged: bool,
    pub final_time: f64,
    pub steady_state: Vec<f64>,
    pub final_utility: f64,
    pub diagnostics: StepDiagnostics,
}

impl Trajectory {
    pub fn steady_state(&self) -> PopulationState {
        PopulationState {
            x: self.steady_state.clone(),
            rho: self.rho,
        }
    }
}

/// RK4 integration of one dynamic from a fixed initial state.
pub struct Simulation<'a> {
    kind: DynamicsKind,
    flow: &'a FlowDigraph,
    payoffs: &'a PayoffSpec,
    config: IntegratorConfig,
    x: Vec<f64>,
    rho: f64,
    utility: f64,
    time: f64,
    calm: usize,
    warm: Option<Vec<Vec<f64>>>,
    diagnostics: StepDiagnostics,
}

impl<'a> Simulation<'a> {
    pub fn new(
        kind: DynamicsKind,
        x0: &PopulationState,
        flow: &'a FlowDigraph,
        payoffs: &'a PayoffSpec,
        config: IntegratorConfig,
    ) -> Result<Self, DynamicsError> {
        config.validate()?;
        let n = flow.node_count();
        if x0.len() != n || payoffs.len() != n {
            return Err(crate::error::ModelError::LengthMismatch {
                expected: n,
                got: if x0.len() != n { x0.len() } else { payoffs.len() },
            }
            .into());
        }
        Ok(Self {
            kind,
            flow,
            payoffs,
            config,
            x: x0.x().to_vec(),
            rho: x0.rho(),
            utility: utility_of(x0.x(), payoffs),
            time: 0.0,
            calm: 0,
            warm: None,
            diagnostics: StepDiagnostics::default(),
        })
    }

    pub fn state(&self) -> &[f64] {
        &self.x
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    pub fn utility(&self) -> f64 {
        self.utility
    }

    pub fn diagnostics(&self) -> &StepDiagnostics {
        &self.diagnostics
    }

    /// Whether the velocity has stayed below `eq_tol` for the whole window.
    pub fn is_stationary(&self) -> bool {
        self.calm >= self.config.stabilization_window
    }

    fn field(&mut self, x: &[f64]) -> Result<Vec<f64>, DynamicsError> {
        self.diagnostics.field_evaluations += 1;
        let clamped: Vec<f64> = x.iter().map(|v| v.max(0.0)).collect();
        let (velocity, violated) = match self.kind {
            DynamicsKind::Ssd => {
                let d = ssd_flows(&clamped, self.flow, self.payoffs);
                let bad = correlation_violation(&clamped, &d, self.payoffs, 0.0).is_some();
                (d.velocity(), bad)
            }
            DynamicsKind::Nbrd => {
                let d = nbrd_flows(&clamped, self.flow, self.payoffs).flows;
                let bad = correlation_violation(&clamped, &d, self.payoffs, ORDER_SLACK).is_some();
                (d.velocity(), bad)
            }
            DynamicsKind::Nrpm => {
                let r = nrpm_response(
                    &clamped,
                    self.flow,
                    self.payoffs,
                    self.config.allocation,
                    self.warm.as_deref(),
                )?;
                let bad =
                    correlation_violation(&r.target, &r.flows, self.payoffs, ORDER_SLACK).is_some();
                let v = r.target.iter().zip(&clamped).map(|(z, x)| z - x).collect();
                self.warm = Some(r.allocation.flows);
                (v, bad)
            }
        };
        if violated {
            self.diagnostics.correlation_violations += 1;
        }
        Ok(velocity)
    }

    /// Advances one RK4 step of size `h`.
    pub fn step(&mut self) -> Result<StepReport, DynamicsError> {
        let h = self.config.step;
        let n = self.x.len();
        let x = self.x.clone();
        let k1 = self.field(&x)?;
        let velocity_norm = k1.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if velocity_norm < self.config.eq_tol {
            self.calm += 1;
        } else {
            self.calm = 0;
        }
        let shifted = |k: &[f64], s: f64| -> Vec<f64> { (0..n).map(|i| x[i] + s * k[i]).collect() };
        let k2 = self.field(&shifted(&k1, 0.5 * h))?;
        let k3 = self.field(&shifted(&k2, 0.5 * h))?;
        let k4 = self.field(&shifted(&k3, h))?;
        let mut next: Vec<f64> = (0..n)
            .map(|i| x[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]))
            .collect();
        self.time += h;

        for (i, v) in next.iter_mut().enumerate() {
            if *v < 0.0 {
                if *v < -NEGATIVE_CLIP {
                    return Err(DynamicsError::IntegrationDiverged {
                        time: self.time,
                        node: i,
                        value: *v,
                    });
                }
                *v = 0.0;
                self.diagnostics.clipped += 1;
            }
        }
        let sum: f64 = next.iter().sum();
        let drift = (sum - self.rho).abs();
        self.diagnostics.max_mass_drift = self.diagnostics.max_mass_drift.max(drift);
        if drift > RENORMALIZE_ABOVE && sum > 0.0 {
            let scale = self.rho / sum;
            next.iter_mut().for_each(|v| *v *= scale);
            self.diagnostics.renormalizations += 1;
        }

        let utility = utility_of(&next, self.payoffs);
        let drop = self.utility - utility;
        self.diagnostics.max_utility_drop = self.diagnostics.max_utility_drop.max(drop);
        if drop > UTILITY_SLACK * h {
            self.diagnostics.utility_violations += 1;
        }
        self.diagnostics.steps += 1;
        self.utility = utility;
        self.x = next;
        Ok(StepReport {
            time: self.time,
            velocity_norm,
            utility,
        })
    }

    /// Steps until stationary or `t_max`, recording every `record_every` steps.
    pub fn run(mut self) -> Result<Trajectory, DynamicsError> {
        let total_steps = (self.config.t_max / self.config.step).round() as usize;
        let mut times = vec![0.0];
        let mut states = vec![self.x.clone()];
        let mut utilities = vec![self.utility];
        let mut converged = false;
        for k in 1..=total_steps {
            self.step()?;
            let stationary = self.is_stationary();
            if k % self.config.record_every == 0 || stationary || k == total_steps {
                times.push(self.time);
                states.push(self.x.clone());
                utilities.push(self.utility);
            }
            if stationary {
                converged = true;
                break;
            }
        }
        Ok(Trajectory {
            kind: self.kind,
            rho: self.rho,
            times,
            states,
            utilities,
            converged,
            final_time: self.time,
            final_utility: self.utility,
            steady_state: self.x,
            diagnostics: self.diagnostics,
        })
    }
}

pub fn simulate(
    kind: DynamicsKind,
    x0: &PopulationState,
    flow: &FlowDigraph,
    payoffs: &PayoffSpec,
    config: IntegratorConfig,
) -> Result<Trajectory, DynamicsError> {
    Simulation::new(kind, x0, flow, payoffs, config)?.run()
}
